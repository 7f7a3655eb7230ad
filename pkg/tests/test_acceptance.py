"""Acceptance suite: one test per release criterion, each at its stated
tolerance. The terminal summary (conftest) prints one PASS/FAIL line per
criterion. Criteria 5b and 6 run against the official corpora and published
vectors when CWI_DATA_ROOT / CWI_EMBEDDINGS_ROOT / CWI_DICTIONARIES_ROOT are
configured, and are skipped otherwise (criterion 5 then relies on the exact
fixture recount)."""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from xlcwi import cli
from xlcwi.alignment import (
    BilingualDictionary,
    RefinementConfig,
    load_dictionary,
    orthogonality_error,
    procrustes_fit,
    refine,
)
from xlcwi.corpus import load_corpus, stats
from xlcwi.embeddings import EmbeddingTable
from xlcwi.evaluation import confusion_from_pairs, macro_f1
from xlcwi.experiments import (
    DataLayout,
    ExperimentSpec,
    assemble_training_corpus,
    run_experiment,
    target_parts,
)
from xlcwi.tagger import TrainingConfig, forward, init_model, train

from reference_impls import macro_f1_bruteforce
from synthetic_task import build_task
from test_tagger import finite_difference_max_rel_error

OFFICIAL_ENV = ("CWI_DATA_ROOT", "CWI_EMBEDDINGS_ROOT", "CWI_DICTIONARIES_ROOT")


def official_layout_or_skip(need_embeddings=False):
    required = OFFICIAL_ENV if need_embeddings else OFFICIAL_ENV[:1]
    missing = [name for name in required if not os.environ.get(name)]
    if missing:
        pytest.skip(f"official data not configured ({', '.join(missing)} unset)")
    return {name: Path(os.environ[name]) for name in OFFICIAL_ENV if os.environ.get(name)}


def unit_rows(m):
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def random_rotation(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


def test_c1_procrustes_recovery_at_scale():
    rng = np.random.default_rng(101)
    dim, anchors = 300, 5000
    started = time.perf_counter()
    x = unit_rows(rng.normal(size=(anchors, dim)))
    rotation = random_rotation(rng, dim)
    y = x @ rotation
    words = tuple(f"w{i}" for i in range(anchors))
    src = EmbeddingTable("DE", dim, words, x)
    tgt = EmbeddingTable("EN", dim, words, y)
    dictionary = BilingualDictionary(tuple((w, w) for w in words), "DE", "EN")
    fitted = procrustes_fit(src, tgt, dictionary)
    elapsed = time.perf_counter() - started
    assert np.abs(fitted.matrix - rotation).max() <= 1e-6
    assert elapsed < 30.0


def test_c2_orthogonality_invariant_100_instances():
    rng = np.random.default_rng(102)
    for case in range(100):
        dim = int(rng.integers(2, 11))
        n = int(rng.integers(max(dim, 3), 40))
        x = unit_rows(rng.normal(size=(n, dim)))
        y = unit_rows(rng.normal(size=(n, dim)))
        words = tuple(f"w{i}" for i in range(n))
        src = EmbeddingTable("DE", dim, words, x)
        tgt = EmbeddingTable("EN", dim, words, y)
        dictionary = BilingualDictionary(tuple((w, w) for w in words), "DE", "EN")
        fitted = procrustes_fit(src, tgt, dictionary)
        assert orthogonality_error(fitted.matrix) <= 1e-6
        if case % 2 == 0:
            refined = refine(
                fitted, src, tgt, RefinementConfig(iterations=1, k_csls=min(3, n - 1) or 1)
            )
            assert orthogonality_error(refined.matrix) <= 1e-6


def test_c3_gradient_check_ten_seeds():
    rng = np.random.default_rng(103)
    started = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        model = init_model(5, 4, seed=seed)
        xs = rng.normal(size=(6, 5))
        ys = rng.integers(0, 2, size=6).astype(float)
        worst = max(worst, finite_difference_max_rel_error(model, xs, ys, step=1e-5))
    elapsed = time.perf_counter() - started
    assert worst <= 1e-4
    assert elapsed < 10.0


def test_c4_macro_f1_against_bruteforce_thousand_sets():
    rng = np.random.default_rng(104)
    cases = [
        # the 0/0 corner cases: empty, one-class gold, one-class predictions
        ([], []),
        ([1, 1, 1], [0, 0, 0]),
        ([0, 0, 0], [1, 1, 1]),
        ([0, 0], [0, 0]),
        ([1, 1], [1, 1]),
    ]
    while len(cases) < 1005:
        n = int(rng.integers(1, 200))
        cases.append((rng.integers(0, 2, n).tolist(), rng.integers(0, 2, n).tolist()))
    for gold, pred in cases:
        ours = macro_f1(confusion_from_pairs(zip(gold, pred)))
        assert abs(ours - macro_f1_bruteforce(gold, pred)) <= 1e-12


def test_c5_dataset_statistics_fixture_recount(fixture_root, fixture_manifest):
    genre_names = {"wikipedia": "Wikipedia", "wikinews": "WikiNews", "news": "News"}
    for rel, expected in fixture_manifest["files"].items():
        lang_dir, name = rel.split("/")
        genre, split = name.removesuffix(".tsv").split("_")
        corpus = load_corpus(
            fixture_root / "data" / rel, lang_dir.upper(), genre_names[genre], split
        )
        counted = stats(corpus)
        # independent recount straight off the file bytes
        raw_labels = [
            int(line.split("\t")[9])
            for line in (fixture_root / "data" / rel).read_text(encoding="utf-8").splitlines()
            if line
        ]
        assert counted.complex_count == sum(raw_labels) == expected["complex"]
        assert counted.noncomplex_count == len(raw_labels) - sum(raw_labels) == expected["noncomplex"]


TABLE1_COUNTS = {  # language -> (complex, non-complex) over train+dev (FR: test)
    "EN": (14_100, 59_944),
    "DE": (3_478, 13_984),
    "ES": (9_852, 28_777),
    "FR": (867, 3_640),
}


def test_c5_dataset_statistics_official():
    env = official_layout_or_skip()
    layout = DataLayout(env["CWI_DATA_ROOT"], Path("."))
    genres = {"EN": ("Wikipedia", "WikiNews", "News"), "DE": ("Wikipedia",), "ES": ("Wikipedia",), "FR": ("Wikipedia",)}
    for language, (n_complex, n_noncomplex) in TABLE1_COUNTS.items():
        splits = ("test",) if language == "FR" else ("train", "dev")
        total_complex = total_noncomplex = 0
        for split in splits:
            for genre in genres[language]:
                corpus = load_corpus(
                    layout.corpus_path(language, genre, split), language, genre, split
                )
                counted = stats(corpus)
                total_complex += counted.complex_count
                total_noncomplex += counted.noncomplex_count
        assert (total_complex, total_noncomplex) == (n_complex, n_noncomplex), language


def test_c6_desk_scale_spanish_to_german(tmp_path):
    env = official_layout_or_skip(need_embeddings=True)
    started = time.perf_counter()
    aligned = tmp_path / "aligned"
    rc = cli.main(
        [
            "align",
            "--embeddings-root", str(env["CWI_EMBEDDINGS_ROOT"]),
            "--dictionaries-root", str(env["CWI_DICTIONARIES_ROOT"]),
            "--output-dir", str(aligned),
            "--languages", "de,es",
        ]
    )
    assert rc == 0
    layout = DataLayout(env["CWI_DATA_ROOT"], aligned)
    spec = ExperimentSpec(
        train_languages=("ES",),
        target="DE",
        shots=0,
        seed=0,
        hidden_size=128,
        training=TrainingConfig(learning_rate=5e-5, epochs=5, batch_size=32),
    )
    result = run_experiment(spec, layout)
    elapsed = time.perf_counter() - started
    assert abs(result.test_macro_f1 - 0.602) <= 0.08
    assert elapsed <= 3600.0


def test_c7_shot_protocol_invariants(fixture_layout):
    rng = np.random.default_rng(107)
    languages = ("EN", "DE", "ES")
    targets = ("EN-W", "EN-WN", "EN-N", "DE", "ES", "FR")
    checked = 0
    while checked < 20:
        train_languages = tuple(
            lang for lang in languages if rng.random() < 0.5
        ) or (languages[int(rng.integers(3))],)
        target = targets[int(rng.integers(len(targets)))]
        target_language, _ = target_parts(target)
        if target_language in train_languages:
            continue  # protocol applies to cross-lingual cells only
        shots = [0, 1, 100][int(rng.integers(3))]
        if target_language == "FR":
            shots = 0
        spec = ExperimentSpec(
            train_languages=train_languages, target=target, shots=shots, seed=int(rng.integers(1 << 30))
        )
        corpus = assemble_training_corpus(spec, fixture_layout, seed=spec.seed)
        target_count = sum(1 for inst in corpus if inst.language == target_language)
        assert target_count == shots, (train_languages, target, shots)
        others = sum(1 for inst in corpus if inst.language in train_languages)
        assert others + target_count == len(corpus)
        checked += 1


def test_c8_determinism_byte_identical_artifacts(fixture_root, aligned_embeddings_dir, tmp_path):
    spec = {
        "schema_version": 1,
        "experiments": [
            {
                "train_languages": ["EN"],
                "target": "DE",
                "shots": 0,
                "seed": 11,
                "hidden_size": 8,
                "training": {"learning_rate": 0.05, "epochs": 3, "batch_size": 8},
            },
            {
                "train_languages": ["ES"],
                "target": "DE",
                "shots": 1,
                "seed": 11,
                "hidden_size": 8,
                "training": {"learning_rate": 0.05, "epochs": 3, "batch_size": 8},
            },
        ],
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    snapshots = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        rc = cli.main(
            [
                "experiment",
                "--spec", str(spec_path),
                "--data-root", str(fixture_root / "data"),
                "--embeddings-root", str(aligned_embeddings_dir),
                "--output-dir", str(out),
            ]
        )
        assert rc == 0
        snapshot = {
            p.relative_to(out).as_posix(): p.read_bytes()
            for p in sorted(out.rglob("*"))
            if p.is_file()
        }
        snapshots.append(snapshot)
    assert snapshots[0].keys() == snapshots[1].keys()
    assert any(name.startswith("checkpoints/") for name in snapshots[0])
    for name in snapshots[0]:
        assert snapshots[0][name] == snapshots[1][name], f"{name} differs between runs"


def test_c9_synthetic_learnability():
    sequences, embedder = build_task(n_sequences=20, seed=123)
    model = init_model(16, 16, seed=0)
    config = TrainingConfig(learning_rate=0.02, epochs=5, batch_size=4, seed=5)
    _, history = train(model, sequences, embedder, config)
    losses = [rec.mean_loss for rec in history]
    assert len(losses) == 5
    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))

    gold, predicted = [], []
    for seq in sequences:
        probs, _ = forward(model, embedder(seq))
        gold.extend(seq.labels)
        predicted.extend(int(p >= model.threshold) for p in probs)
    assert macro_f1(confusion_from_pairs(zip(gold, predicted))) >= 0.95

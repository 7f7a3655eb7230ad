"""Zero/one/few-shot transfer experiments over language combinations.

A cell of the grid trains on the union of full training corpora for the
chosen source languages, optionally adds a seed-deterministic sample of
target-language training entries (1 for one-shot, 100 for few-shot), and
reports dev/test macro-F1 on the target column. Columns follow the
EN-W / EN-WN / EN-N / DE / ES / FR layout; English trains concatenated
across genres but is evaluated per genre.

Expected on-disk layout (see README):

    <data_root>/<lang>/<genre>_<split>.tsv      e.g. en/wikipedia_train.tsv
    <embeddings_root>/wiki.<lang>.aligned.vec   (falls back to wiki.<lang>.vec)
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import embeddings as emb
from .corpus import Corpus, load_corpus, merge, preprocess, sample_shots, to_sequences
from .errors import MissingResourceError, ValidationError
from .evaluation import EvalReport, evaluate
from .seeds import derive_seed
from .tagger import (
    BilstmClassifier,
    TaggerModel,
    TrainingConfig,
    init_model,
    save_checkpoint,
    train,
)

SCHEMA_VERSION = 1

TARGET_COLUMNS = ("EN-W", "EN-WN", "EN-N", "DE", "ES", "FR")
TRAINABLE_LANGUAGES = ("EN", "DE", "ES")
_TARGET_GENRE = {"EN-W": "Wikipedia", "EN-WN": "WikiNews", "EN-N": "News"}
_LANG_GENRES = {"EN": ("Wikipedia", "WikiNews", "News"), "DE": ("Wikipedia",), "ES": ("Wikipedia",), "FR": ("Wikipedia",)}


def target_parts(target: str) -> tuple[str, str]:
    """Target column -> (language, evaluation genre)."""
    if target in _TARGET_GENRE:
        return "EN", _TARGET_GENRE[target]
    if target in ("DE", "ES", "FR"):
        return target, "Wikipedia"
    raise ValidationError(f"unknown target {target!r}; expected one of {TARGET_COLUMNS}")


@dataclass(frozen=True)
class ExperimentSpec:
    train_languages: tuple[str, ...]
    target: str
    shots: int = 0
    seed: int = 0
    seeds: tuple[int, ...] = ()  # optional multi-seed averaging; empty = (seed,)
    model: str = "bilstm"
    hidden_size: int = 128
    max_vocab: int = emb.DEFAULT_MAX_VOCAB
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        object.__setattr__(self, "train_languages", tuple(self.train_languages))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if not self.train_languages:
            raise ValidationError("train_languages must be non-empty")
        bad = set(self.train_languages) - set(TRAINABLE_LANGUAGES)
        if bad:
            raise ValidationError(
                f"untrainable language(s) {sorted(bad)}; training data exists only for "
                f"{TRAINABLE_LANGUAGES}"
            )
        target_language, _ = target_parts(self.target)
        if self.shots < 0:
            raise ValidationError("shots must be >= 0")
        if self.shots > 0 and target_language == "FR":
            raise ValidationError("shots > 0 requires target-language training data; FR has none")

    @property
    def effective_seeds(self) -> tuple[int, ...]:
        return self.seeds if self.seeds else (self.seed,)

    def cell_id(self) -> str:
        payload = json.dumps(
            {
                "train": sorted(self.train_languages),
                "target": self.target,
                "shots": self.shots,
                "seeds": list(self.effective_seeds),
                "model": self.model,
                "hidden_size": self.hidden_size,
                "training": vars(self.training),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class DataLayout:
    data_root: Path
    embeddings_root: Path

    def corpus_path(self, language: str, genre: str, split: str) -> Path:
        return Path(self.data_root) / language.lower() / f"{genre.lower()}_{split}.tsv"

    def embedding_path(self, language: str) -> Path:
        root = Path(self.embeddings_root)
        aligned = root / f"wiki.{language.lower()}.aligned.vec"
        if aligned.exists():
            return aligned
        plain = root / f"wiki.{language.lower()}.vec"
        if plain.exists():
            return plain
        raise MissingResourceError(f"no embedding file for {language} under {root}")


def load_split(layout: DataLayout, language: str, split: str, genre: str | None = None) -> Corpus:
    """Load and preprocess one language/split; EN concatenates all genres
    unless a specific genre is requested."""
    genres = (genre,) if genre else _LANG_GENRES[language]
    corpora = []
    for g in genres:
        path = layout.corpus_path(language, g, split)
        if not path.exists():
            raise MissingResourceError(f"missing corpus file {path}")
        cleaned, _ = preprocess(load_corpus(path, language, g, split))
        corpora.append(cleaned)
    return merge(corpora)


def assemble_training_corpus(spec: ExperimentSpec, layout: DataLayout, seed: int) -> Corpus:
    """Training corpora of all source languages plus the shot sample, with
    provenance checks for the shot protocol."""
    parts = [load_split(layout, lang, "train") for lang in spec.train_languages]
    target_language, _ = target_parts(spec.target)
    if spec.shots > 0:
        pool = load_split(layout, target_language, "train")
        parts.append(sample_shots(pool, spec.shots, derive_seed(seed, "shots", spec.target)))
    combined = merge(parts)

    n_target = sum(1 for inst in combined if inst.language == target_language)
    if target_language not in spec.train_languages and n_target != spec.shots:
        raise ValidationError(
            f"shot protocol violated: {n_target} {target_language} instance(s) in the "
            f"training corpus, expected {spec.shots}"
        )
    return combined


@dataclass(frozen=True)
class SeedRun:
    seed: int
    dev: EvalReport | None
    test: EvalReport
    train_instances: int
    epoch_losses: tuple[float, ...]
    epoch_dev_macro_f1: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentResult:
    spec: ExperimentSpec
    cell_id: str
    runs: tuple[SeedRun, ...]
    dev_macro_f1: float | None
    test_macro_f1: float

    @property
    def seed_policy(self) -> str:
        return "averaged" if len(self.runs) > 1 else "single"

    def as_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "cell_id": self.cell_id,
            "train_languages": list(self.spec.train_languages),
            "target": self.spec.target,
            "shots": self.spec.shots,
            "model": self.spec.model,
            "seed_policy": self.seed_policy,
            "seeds": list(self.spec.effective_seeds),
            "dev_macro_f1": self.dev_macro_f1,
            "test_macro_f1": self.test_macro_f1,
            "runs": [
                {
                    "seed": run.seed,
                    "train_instances": run.train_instances,
                    "epoch_losses": list(run.epoch_losses),
                    "epoch_dev_macro_f1": list(run.epoch_dev_macro_f1),
                    "dev": run.dev.as_dict() if run.dev else None,
                    "test": run.test.as_dict(),
                }
                for run in self.runs
            ],
        }


def _load_tables(spec: ExperimentSpec, layout: DataLayout, languages) -> dict[str, emb.EmbeddingTable]:
    tables = {}
    for lang in languages:
        table = emb.load_text_format(layout.embedding_path(lang), lang, max_vocab=spec.max_vocab)
        tables[lang] = emb.normalize(table)
    return tables


def _run_single_seed(
    spec: ExperimentSpec, layout: DataLayout, seed: int, checkpoint_path: Path | None
) -> SeedRun:
    target_language, target_genre = target_parts(spec.target)
    training_corpus = assemble_training_corpus(spec, layout, seed)
    sequences = to_sequences(training_corpus)

    languages = sorted(set(spec.train_languages) | {target_language})
    tables = _load_tables(spec, layout, languages)
    dim = next(iter(tables.values())).dim

    model = init_model(dim, spec.hidden_size, derive_seed(seed, "init"))
    classifier = BilstmClassifier(model, tables, model_id=spec.cell_id())
    config = replace(spec.training, seed=derive_seed(seed, "train"))

    dev_corpus = None
    if target_language != "FR":
        dev_corpus = load_split(layout, target_language, "dev", genre=target_genre)

    def dev_eval(current_model: TaggerModel) -> float:
        probe = BilstmClassifier(current_model, tables, model_id=spec.cell_id())
        return evaluate(probe, dev_corpus).macro_f1

    _, history = train(
        model,
        sequences,
        classifier.embed,
        config,
        dev_eval=dev_eval if dev_corpus is not None else None,
    )
    if checkpoint_path is not None:
        checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, checkpoint_path)

    classifier = BilstmClassifier(model, tables, model_id=spec.cell_id())
    common = dict(train_languages=spec.train_languages, shots=spec.shots, seed=seed)
    dev_report = None
    if dev_corpus is not None:
        dev_report = evaluate(classifier, dev_corpus, target=f"{spec.target}:dev", **common)
    test_corpus = load_split(layout, target_language, "test", genre=target_genre)
    test_report = evaluate(classifier, test_corpus, target=f"{spec.target}:test", **common)
    return SeedRun(
        seed=seed,
        dev=dev_report,
        test=test_report,
        train_instances=len(training_corpus),
        epoch_losses=tuple(rec.mean_loss for rec in history),
        epoch_dev_macro_f1=tuple(
            rec.dev_macro_f1 for rec in history if rec.dev_macro_f1 is not None
        ),
    )


def run_experiment(
    spec: ExperimentSpec, layout: DataLayout, checkpoint_dir: Path | None = None
) -> ExperimentResult:
    """Run one grid cell, averaging across spec.seeds when several are given."""
    if spec.model != "bilstm":
        raise ValidationError(f"unknown model selector {spec.model!r}")
    runs = []
    for seed in spec.effective_seeds:
        ckpt = None
        if checkpoint_dir is not None:
            ckpt = Path(checkpoint_dir) / f"{spec.cell_id()}_seed{seed}.ckpt"
        runs.append(_run_single_seed(spec, layout, seed, ckpt))
    dev_values = [run.dev.macro_f1 for run in runs if run.dev is not None]
    test_values = [run.test.macro_f1 for run in runs]
    return ExperimentResult(
        spec=spec,
        cell_id=spec.cell_id(),
        runs=tuple(runs),
        dev_macro_f1=sum(dev_values) / len(dev_values) if dev_values else None,
        test_macro_f1=sum(test_values) / len(test_values),
    )


def _cell_key(spec: ExperimentSpec):
    return (tuple(sorted(spec.train_languages)), spec.shots, spec.target)


def _run_cell(args):
    spec, layout, checkpoint_dir = args
    return run_experiment(spec, layout, checkpoint_dir)


def run_grid(
    specs: list[ExperimentSpec],
    layout: DataLayout,
    checkpoint_dir: Path | None = None,
    workers: int = 1,
) -> list[ExperimentResult]:
    """Run every cell; cells are independent and may fan out to processes."""
    if not specs:
        raise ValidationError("empty experiment grid")
    seen = set()
    for spec in specs:
        key = _cell_key(spec)
        if key in seen:
            raise ValidationError(f"duplicate grid cell {key}")
        seen.add(key)
    jobs = [(spec, layout, checkpoint_dir) for spec in specs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(job) for job in jobs]


def _grid_rows(results):
    """Accepts ExperimentResult objects or their as_dict() form, so grids can
    be re-assembled from persisted reports of independent runs."""
    rows = []
    index = {}
    for result in results:
        doc = result.as_dict() if hasattr(result, "as_dict") else result
        key = (tuple(sorted(doc["train_languages"])), doc["shots"])
        if key not in index:
            index[key] = {"train_languages": key[0], "shots": key[1], "dev": {}, "test": {}}
            rows.append(index[key])
        row = index[key]
        if doc["dev_macro_f1"] is not None:
            row["dev"][doc["target"]] = doc["dev_macro_f1"]
        row["test"][doc["target"]] = doc["test_macro_f1"]
    return rows


def _column_max(rows, section):
    out = {}
    for col in TARGET_COLUMNS:
        values = [row[section][col] for row in rows if col in row[section]]
        if values:
            out[col] = max(values)
    return out


def render_grid_json(results) -> str:
    rows = _grid_rows(results)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "columns": list(TARGET_COLUMNS),
        "rows": [
            {
                "train_languages": list(row["train_languages"]),
                "shots": row["shots"],
                "dev": row["dev"],
                "test": row["test"],
            }
            for row in rows
        ],
        "column_max": {
            "dev": _column_max(rows, "dev"),
            "test": _column_max(rows, "test"),
        },
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def render_grid_text(results) -> str:
    """Aligned plain-text table, one row per train combination, column maxima
    starred per the paper's bold-the-best convention."""
    rows = _grid_rows(results)
    lines = []
    for section in ("dev", "test"):
        maxima = _column_max(rows, section)
        header = ["train", "shots"] + list(TARGET_COLUMNS)
        body = []
        for row in rows:
            cells = ["+".join(row["train_languages"]), str(row["shots"])]
            for col in TARGET_COLUMNS:
                if col not in row[section]:
                    cells.append("-")
                    continue
                value = row[section][col]
                text = f"{value:.3f}"
                if value == maxima.get(col):
                    text = f"*{text}*"
                cells.append(text)
            body.append(cells)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        lines.append(section.upper())
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
        for cells in body:
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
        lines.append("")
    return "\n".join(lines)


def save_results_jsonl(results, path):
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.as_dict(), sort_keys=True) + "\n")


def load_results_jsonl(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]

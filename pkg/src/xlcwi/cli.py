"""Command-line pipeline: stats | align | train | predict | eval | experiment.

Every command is deterministic given its configuration and seed, never
mutates its inputs, and writes new artifacts only under the requested output
location. A JSON config file may pre-set any long option; explicit flags win.

Exit codes: 0 ok, 1 validation/parse error, 2 missing resource, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import alignment, embeddings
from .corpus import GENRES, load_corpus, merge, preprocess, sample_shots, stats, to_sequences
from .errors import MissingResourceError, NumericalError, ParseError, ValidationError
from .evaluation import confusion_from_pairs, f1_for_class, macro_f1
from .experiments import (
    DataLayout,
    ExperimentSpec,
    render_grid_json,
    render_grid_text,
    run_grid,
    save_results_jsonl,
)
from .seeds import derive_seed
from .tagger import (
    BilstmClassifier,
    EchoGoldClassifier,
    TrainingConfig,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_LANG_BY_DIR = {"en": "EN", "de": "DE", "es": "ES", "fr": "FR"}
_GENRE_BY_NAME = {g.lower(): g for g in GENRES}


def _infer_corpus_meta(path: Path, language, genre, split):
    """Fill language/genre/split from the <lang>/<genre>_<split>.tsv layout."""
    if language is None:
        language = _LANG_BY_DIR.get(path.parent.name.lower())
    stem_parts = path.stem.split("_")
    if genre is None and stem_parts:
        genre = _GENRE_BY_NAME.get(stem_parts[0].lower())
    if split is None and len(stem_parts) > 1 and stem_parts[-1] in ("train", "dev", "test"):
        split = stem_parts[-1]
    if language is None or genre is None or split is None:
        raise ValidationError(
            f"{path}: cannot infer language/genre/split from the path; "
            "pass --language/--genre/--split"
        )
    return language, genre, split


def _emit(text: str, output: str | None):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_stats(args) -> int:
    files = []
    total_complex = total_noncomplex = 0
    for raw_path in args.files:
        path = Path(raw_path)
        if not path.exists():
            raise MissingResourceError(f"missing corpus file {path}")
        language, genre, split = _infer_corpus_meta(path, args.language, args.genre, args.split)
        corpus = load_corpus(path, language, genre, split)
        counted = stats(corpus)
        total_complex += counted.complex_count
        total_noncomplex += counted.noncomplex_count
        files.append(
            {
                "path": str(path),
                "language": language,
                "genre": genre,
                "split": split,
                "complex": counted.complex_count,
                "noncomplex": counted.noncomplex_count,
            }
        )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "files": files,
        "aggregate": {"complex": total_complex, "noncomplex": total_noncomplex},
    }
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", args.output)
    return 0


def cmd_align(args) -> int:
    emb_root = Path(args.embeddings_root)
    dict_root = Path(args.dictionaries_root)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    languages = [lang.strip().upper() for lang in args.languages.split(",") if lang.strip()]

    tables = {}
    for lang in ["EN"] + languages:
        path = emb_root / f"wiki.{lang.lower()}.vec"
        if not path.exists():
            raise MissingResourceError(f"missing embedding file {path}")
        tables[lang] = embeddings.normalize(
            embeddings.load_text_format(path, lang, max_vocab=args.max_vocab)
        )
    dictionaries = {}
    for lang in languages:
        path = dict_root / f"en-{lang.lower()}.txt"
        if not path.exists():
            raise MissingResourceError(f"missing dictionary file {path}")
        dictionaries[lang] = alignment.load_dictionary(path, "EN", lang)

    config = alignment.RefinementConfig(
        iterations=args.iterations,
        k_csls=args.csls_k,
        anchor_top_n=args.anchor_top_n,
        mutual_nn_only=not args.no_mutual_nn,
    )
    mapped, maps = alignment.chain_to_pivot(tables, dictionaries, config)
    for lang, table in mapped.items():
        embeddings.save_text_format(table, out_dir / f"wiki.{lang.lower()}.aligned.vec")
    report = {
        "schema_version": SCHEMA_VERSION,
        "pairs": {
            lang: dict(m.fit_report.as_dict(), pair=f"{lang}->EN") for lang, m in maps.items()
        },
    }
    (out_dir / "align_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return 0


def _load_train_corpus(layout: DataLayout, languages, shots_language, shots, seed):
    from .experiments import load_split

    parts = [load_split(layout, lang, "train") for lang in languages]
    if shots_language and shots:
        pool = load_split(layout, shots_language, "train")
        parts.append(sample_shots(pool, shots, derive_seed(seed, "shots", shots_language)))
    return merge(parts)


def cmd_train(args) -> int:
    layout = DataLayout(Path(args.data_root), Path(args.embeddings_root))
    languages = [lang.strip().upper() for lang in args.languages.split(",") if lang.strip()]
    corpus = _load_train_corpus(layout, languages, args.shots_language, args.shots, args.seed)
    sequences = to_sequences(corpus)

    needed = sorted(set(languages) | ({args.shots_language} if args.shots_language else set()))
    tables = {
        lang: embeddings.normalize(
            embeddings.load_text_format(layout.embedding_path(lang), lang, max_vocab=args.max_vocab)
        )
        for lang in needed
    }
    dim = next(iter(tables.values())).dim
    model = init_model(dim, args.hidden_size, derive_seed(args.seed, "init"))
    classifier = BilstmClassifier(model, tables)
    config = TrainingConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=derive_seed(args.seed, "train"),
    )
    _, history = train(model, sequences, classifier.embed, config)
    save_checkpoint(model, args.output)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            fh.write(
                json.dumps({"schema_version": SCHEMA_VERSION, "kind": "training_log"}) + "\n"
            )
            for rec in history:
                fh.write(
                    json.dumps(
                        {
                            "epoch": rec.epoch,
                            "mean_loss": rec.mean_loss,
                            "wall_seconds": rec.wall_seconds,
                        }
                    )
                    + "\n"
                )
    log.info("saved checkpoint to %s", args.output)
    return 0


def cmd_predict(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise MissingResourceError(f"missing input file {path}")
    language, genre, split = _infer_corpus_meta(path, args.language, args.genre, args.split)
    raw = load_corpus(path, language, genre, split)
    cleaned, report = preprocess(raw)

    if args.model == "echo-gold":
        classifier = EchoGoldClassifier(cleaned.instances)
        threshold = 0.5
    else:
        if not args.checkpoint:
            raise ValidationError("--checkpoint is required unless --model echo-gold")
        loaded = load_checkpoint(args.checkpoint)
        if loaded == "echo-gold":
            classifier = EchoGoldClassifier(cleaned.instances)
            threshold = 0.5
        else:
            table = embeddings.normalize(
                embeddings.load_text_format(
                    DataLayout(Path("."), Path(args.embeddings_root)).embedding_path(language),
                    language,
                    max_vocab=args.max_vocab,
                )
            )
            classifier = BilstmClassifier(loaded, {language: table})
            threshold = loaded.threshold

    by_instance = {}
    for seq in to_sequences(cleaned):
        for idx in seq.instance_refs:
            by_instance[idx] = classifier.predict_instance(seq, idx)

    dropped = set(report.dropped_indices)
    with open(path, "r", encoding="utf-8") as src, open(args.output, "w", encoding="utf-8") as out:
        clean_idx = 0
        raw_idx = 0
        for line in src:
            line = line.rstrip("\n")
            if not line:
                continue
            if raw_idx in dropped:
                prob, label = 0.0, 0  # span destroyed by cleaning; default non-complex
                log.warning("%s: instance dropped by preprocessing; predicting 0", raw.instances[raw_idx].hit_id)
            else:
                prob = by_instance[clean_idx]
                label = 1 if prob >= threshold else 0
                clean_idx += 1
            out.write(f"{line}\t{label}\t{prob:.6f}\n")
            raw_idx += 1
    return 0


def cmd_eval(args) -> int:
    path = Path(args.predictions)
    if not path.exists():
        raise MissingResourceError(f"missing predictions file {path}")
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 13:
                raise ParseError(
                    f"expected 13 fields (11 input + predicted_label + probability), "
                    f"got {len(fields)}",
                    line_no,
                )
            try:
                gold = int(fields[9])
                pred = int(fields[11])
            except ValueError as exc:
                raise ParseError(f"non-numeric label ({exc})", line_no) from None
            pairs.append((gold, pred))
    counts = confusion_from_pairs(pairs)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "counts": counts.as_dict(),
        "f1_complex": f1_for_class(counts, "complex"),
        "f1_noncomplex": f1_for_class(counts, "noncomplex"),
        "macro_f1": macro_f1(counts),
    }
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", args.output)
    return 0


def _parse_experiment_entry(entry) -> ExperimentSpec:
    training_fields = entry.get("training", {})
    training = TrainingConfig(
        learning_rate=training_fields.get("learning_rate", 5e-5),
        epochs=training_fields.get("epochs", 5),
        batch_size=training_fields.get("batch_size", 32),
        rho=training_fields.get("rho", 0.9),
        epsilon=training_fields.get("epsilon", 1e-8),
        gradient_clip=training_fields.get("gradient_clip", 5.0),
    )
    return ExperimentSpec(
        train_languages=tuple(entry["train_languages"]),
        target=entry["target"],
        shots=entry.get("shots", 0),
        seed=entry.get("seed", 0),
        seeds=tuple(entry.get("seeds", ())),
        model=entry.get("model", "bilstm"),
        hidden_size=entry.get("hidden_size", 128),
        max_vocab=entry.get("max_vocab", embeddings.DEFAULT_MAX_VOCAB),
        training=training,
    )


def cmd_experiment(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.exists():
        raise MissingResourceError(f"missing spec file {spec_path}")
    raw = json.loads(spec_path.read_text(encoding="utf-8"))
    entries = raw["experiments"] if isinstance(raw, dict) and "experiments" in raw else [raw]
    specs = [_parse_experiment_entry(entry) for entry in entries]

    layout = DataLayout(Path(args.data_root), Path(args.embeddings_root))
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_grid(
        specs, layout, checkpoint_dir=out_dir / "checkpoints", workers=args.workers
    )
    save_results_jsonl(results, out_dir / "reports.jsonl")
    (out_dir / "grid.json").write_text(render_grid_json(results), encoding="utf-8")
    (out_dir / "grid.txt").write_text(render_grid_text(results), encoding="utf-8")
    sys.stdout.write(render_grid_text(results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xlcwi",
        description="Cross-lingual complex word identification pipeline",
    )
    parser.add_argument("--config", help="JSON file of option defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="complex/non-complex counts for corpus files")
    p.add_argument("files", nargs="+", help="CWI TSV files to count")
    p.add_argument("--language", help="language tag (EN/DE/ES/FR); inferred from path if omitted")
    p.add_argument("--genre", help="genre tag (Wikipedia/WikiNews/News); inferred if omitted")
    p.add_argument("--split", help="split tag (train/dev/test); inferred if omitted")
    p.add_argument("--output", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("align", help="map embedding spaces into the English pivot space")
    p.add_argument("--embeddings-root", required=True, help="directory with wiki.<lang>.vec files")
    p.add_argument("--dictionaries-root", required=True, help="directory with en-<lang>.txt dictionaries")
    p.add_argument("--output-dir", required=True, help="directory for aligned .vec files and the fit report")
    p.add_argument("--languages", default="de,es,fr", help="comma-separated languages to map onto EN")
    p.add_argument("--max-vocab", type=int, default=embeddings.DEFAULT_MAX_VOCAB, help="vocabulary cap per language")
    p.add_argument("--iterations", type=int, default=5, help="refinement iterations")
    p.add_argument("--csls-k", type=int, default=10, help="neighborhood size for the CSLS penalty")
    p.add_argument("--anchor-top-n", type=int, default=10_000, help="frequent-word pool for induced anchors")
    p.add_argument("--no-mutual-nn", action="store_true", help="keep non-mutual nearest-neighbor anchors")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("train", help="train the BiLSTM tagger")
    p.add_argument("--data-root", required=True, help="corpus directory (<lang>/<genre>_<split>.tsv)")
    p.add_argument("--embeddings-root", required=True, help="directory with aligned .vec files")
    p.add_argument("--output", required=True, help="checkpoint file to write")
    p.add_argument("--languages", default="en", help="comma-separated training languages")
    p.add_argument("--shots-language", help="target language to sample shot entries from")
    p.add_argument("--shots", type=int, default=0, help="number of target-language training entries")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--hidden-size", type=int, default=128, help="LSTM hidden units per direction")
    p.add_argument("--learning-rate", type=float, default=5e-5, help="RMSprop learning rate")
    p.add_argument("--epochs", type=int, default=5, help="training epochs")
    p.add_argument("--batch-size", type=int, default=32, help="sequences per batch")
    p.add_argument("--max-vocab", type=int, default=embeddings.DEFAULT_MAX_VOCAB, help="vocabulary cap per language")
    p.add_argument("--log", help="JSON-lines training log path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="append predictions to a corpus TSV")
    p.add_argument("--checkpoint", help="tagger checkpoint (omit with --model echo-gold)")
    p.add_argument("--model", default="bilstm", choices=["bilstm", "echo-gold"], help="classifier to use")
    p.add_argument("--input", required=True, help="input corpus TSV")
    p.add_argument("--output", required=True, help="output TSV with two appended fields")
    p.add_argument("--embeddings-root", default=".", help="directory with aligned .vec files")
    p.add_argument("--language", help="language tag; inferred from path if omitted")
    p.add_argument("--genre", help="genre tag; inferred if omitted")
    p.add_argument("--split", help="split tag; inferred if omitted")
    p.add_argument("--max-vocab", type=int, default=embeddings.DEFAULT_MAX_VOCAB, help="vocabulary cap")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score a predictions TSV against its gold labels")
    p.add_argument("--predictions", required=True, help="13-field TSV from `xlcwi predict`")
    p.add_argument("--output", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run transfer experiment cells from a spec file")
    p.add_argument("--spec", required=True, help="JSON spec: one cell or {experiments: [...]}")
    p.add_argument("--data-root", required=True, help="corpus directory")
    p.add_argument("--embeddings-root", required=True, help="directory with aligned .vec files")
    p.add_argument("--output-dir", required=True, help="directory for reports, grids, checkpoints")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes for cells")
    p.set_defaults(func=cmd_experiment)

    return parser


def _apply_config_file(parser, args):
    if not args.config:
        return args
    path = Path(args.config)
    if not path.exists():
        raise MissingResourceError(f"missing config file {path}")
    config = json.loads(path.read_text(encoding="utf-8"))
    for key, value in config.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            continue
        # Only fill options still at their parser default; explicit flags win.
        if getattr(args, dest) == parser.get_default(dest) or getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(parser, args)
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MissingResourceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

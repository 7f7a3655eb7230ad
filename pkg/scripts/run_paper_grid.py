#!/usr/bin/env python3
"""Run the full transfer-learning grid on the official data.

Builds every train-language combination over {EN, DE, ES} and evaluates each
against the six target columns (EN-W, EN-WN, EN-N, DE, ES, FR), in three
protocols:

    zero-shot  all 7 x 6 cells (monolingual cells included, as in the
               published table)
    one-shot   cross-lingual cells with 1 target-language training entry
    few-shot   cross-lingual cells with 100 target-language training entries

Expects aligned embeddings (run `xlcwi align` first, or pass --align to do it
here) and the corpus layout documented in the README. Writes reports.jsonl,
grid.json and grid.txt per protocol under --output-dir.
"""

import argparse
import itertools
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from xlcwi import cli
from xlcwi.experiments import (
    DataLayout,
    ExperimentSpec,
    TARGET_COLUMNS,
    TRAINABLE_LANGUAGES,
    render_grid_json,
    render_grid_text,
    run_grid,
    save_results_jsonl,
    target_parts,
)
from xlcwi.tagger import TrainingConfig


def language_combinations():
    for size in (1, 2, 3):
        yield from itertools.combinations(TRAINABLE_LANGUAGES, size)


def build_specs(protocol, seed, training, hidden_size, max_vocab):
    shots = {"zero": 0, "one": 1, "few": 100}[protocol]
    specs = []
    for combo in language_combinations():
        for target in TARGET_COLUMNS:
            target_language, _ = target_parts(target)
            if shots > 0 and (target_language in combo or target_language == "FR"):
                continue
            specs.append(
                ExperimentSpec(
                    train_languages=combo,
                    target=target,
                    shots=shots,
                    seed=seed,
                    hidden_size=hidden_size,
                    max_vocab=max_vocab,
                    training=training,
                )
            )
    return specs


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data-root", required=True, help="corpus directory")
    parser.add_argument("--embeddings-root", required=True,
                        help="aligned .vec directory (raw directory with --align)")
    parser.add_argument("--dictionaries-root", help="dictionary directory, needed with --align")
    parser.add_argument("--output-dir", required=True, help="where reports and grids go")
    parser.add_argument("--align", action="store_true",
                        help="run the pivot alignment first, into <output-dir>/aligned")
    parser.add_argument("--protocols", default="zero,one,few",
                        help="comma-separated subset of zero,one,few")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--hidden-size", type=int, default=128)
    parser.add_argument("--max-vocab", type=int, default=200_000)
    parser.add_argument("--learning-rate", type=float, default=5e-5)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    out_root = Path(args.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    embeddings_root = Path(args.embeddings_root)
    if args.align:
        if not args.dictionaries_root:
            parser.error("--align requires --dictionaries-root")
        aligned = out_root / "aligned"
        rc = cli.main([
            "align",
            "--embeddings-root", str(embeddings_root),
            "--dictionaries-root", str(args.dictionaries_root),
            "--output-dir", str(aligned),
            "--languages", "de,es,fr",
            "--max-vocab", str(args.max_vocab),
        ])
        if rc != 0:
            return rc
        embeddings_root = aligned

    layout = DataLayout(Path(args.data_root), embeddings_root)
    training = TrainingConfig(
        learning_rate=args.learning_rate, epochs=args.epochs, batch_size=args.batch_size
    )
    for protocol in args.protocols.split(","):
        protocol = protocol.strip()
        specs = build_specs(protocol, args.seed, training, args.hidden_size, args.max_vocab)
        print(f"[{protocol}-shot] running {len(specs)} cells")
        results = run_grid(
            specs, layout, checkpoint_dir=out_root / protocol / "checkpoints",
            workers=args.workers,
        )
        proto_dir = out_root / protocol
        proto_dir.mkdir(parents=True, exist_ok=True)
        save_results_jsonl(results, proto_dir / "reports.jsonl")
        (proto_dir / "grid.json").write_text(render_grid_json(results), encoding="utf-8")
        (proto_dir / "grid.txt").write_text(render_grid_text(results), encoding="utf-8")
        print(render_grid_text(results))
    return 0


if __name__ == "__main__":
    sys.exit(main())

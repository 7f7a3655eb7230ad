#!/usr/bin/env python3
"""Regenerate the checked-in test fixtures under tests/fixtures/.

The fixtures are a miniature four-language setup with a known ground truth:
words are concept-parallel across languages, "complex" concepts carry a
separable signal direction in embedding space, and the non-English spaces are
random orthogonal rotations of the shared concept space. Procrustes alignment
can therefore recover the rotations exactly, and a tagger trained on one
language transfers to the others by construction.

Everything is seeded; rerunning the script reproduces identical files.
"""

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
SEED = 20240811
DIM = 16

SIMPLE = {
    "en": "the a and of to in is was on for with at by from house water day man woman child "
    "city year time hand eye small big old new good long high road tree dog sun light "
    "night door book".split(),
    "de": "der die das und von zu in ist war auf für mit bei aus haus wasser tag mann frau "
    "kind stadt jahr zeit hand auge klein groß alt neu gut lang hoch straße baum hund "
    "sonne licht nacht tür buch".split(),
    "es": "el la y de a en es era sobre para con por desde un casa agua día hombre mujer "
    "niño ciudad año tiempo mano ojo pequeño grande viejo nuevo bueno largo alto camino "
    "árbol perro sol luz noche puerta libro".split(),
    "fr": "le la et de à en est était sur pour avec par depuis un maison eau jour homme "
    "femme enfant ville année temps main œil petit grand vieux nouveau bon long haut "
    "route arbre chien soleil lumière nuit porte livre".split(),
}

COMPLEX = {
    "en": "ubiquitous photosynthesis jurisprudence unprecedented constitutional biodiversity "
    "infrastructure parliamentary archaeological pharmaceutical equilibrium condensation "
    "magistrate hegemony".split(),
    "de": "allgegenwärtig photosynthese rechtsprechung beispiellos verfassungsrechtlich "
    "artenvielfalt infrastruktur parlamentarisch archäologisch pharmazeutisch "
    "gleichgewicht kondensation magistrat hegemonie".split(),
    "es": "omnipresente fotosíntesis jurisprudencia inaudito constitucional biodiversidad "
    "infraestructura parlamentario arqueológico farmacéutico equilibrio condensación "
    "magistrado hegemonía".split(),
    "fr": "omniprésent photosynthèse jurisprudence inédit constitutionnel biodiversité "
    "infrastructure parlementaire archéologique pharmaceutique équilibre condensation "
    "magistrat hégémonie".split(),
}

# English-only extras exercising the hyphenated-compound tokenizer rule.
EN_EXTRA_COMPLEX = ["better-optimized", "android-running"]

# (train, dev, test) instance counts per file; each language stays within a
# 200-instance budget while train pools exceed the 100-entry few-shot draw
SIZES = {
    ("en", "wikipedia"): (34, 12, 18),
    ("en", "wikinews"): (34, 12, 18),
    ("en", "news"): (34, 12, 18),
    ("de", "wikipedia"): (100, 20, 30),
    ("es", "wikipedia"): (100, 20, 30),
    ("fr", "wikipedia"): (0, 0, 60),
}


def random_rotation(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


def build_embeddings(rng):
    n_simple = len(SIMPLE["en"])
    n_complex = len(COMPLEX["en"])
    signal = rng.normal(size=DIM)
    signal /= np.linalg.norm(signal)
    concepts = rng.normal(size=(n_simple + n_complex, DIM))
    concepts[:n_simple] -= 0.5 * signal
    concepts[n_simple:] += 2.5 * signal

    extra = rng.normal(size=(len(EN_EXTRA_COMPLEX), DIM)) + 2.5 * signal

    spaces = {}
    rotations = {}
    for lang in ("en", "de", "es", "fr"):
        rot = np.eye(DIM) if lang == "en" else random_rotation(rng, DIM)
        rotations[lang] = rot
        noise = 0.15 * rng.normal(size=concepts.shape)
        vectors = (concepts + noise) @ rot
        words = SIMPLE[lang] + COMPLEX[lang]
        if lang == "en":
            words = words + EN_EXTRA_COMPLEX
            vectors = np.vstack([vectors, extra])
        spaces[lang] = (words, vectors)
    return spaces, rotations


def write_vec(path, words, vectors):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(words)} {DIM}\n")
        for word, row in zip(words, vectors):
            fh.write(word + " " + " ".join(f"{v:.6f}" for v in row) + "\n")


def write_dictionaries(root):
    for lang in ("de", "es", "fr"):
        path = root / f"en-{lang}.txt"
        with open(path, "w", encoding="utf-8") as fh:
            for en_word, other in zip(
                SIMPLE["en"] + COMPLEX["en"], SIMPLE[lang] + COMPLEX[lang]
            ):
                fh.write(f"{en_word} {other}\n")
            # multi-word lines that loaders must skip
            fh.write("new york neu york stadt\n")
            fh.write("just-one-token\n")


def make_sentence(rng, lang, allow_extra):
    simple = SIMPLE[lang]
    complex_words = COMPLEX[lang] + (EN_EXTRA_COMPLEX if allow_extra else [])
    length = int(rng.integers(5, 11))
    words = [simple[int(i)] for i in rng.integers(0, len(simple), size=length)]
    n_targets = int(rng.integers(1, 4))
    annotations = []  # (token index range, is_complex)
    positions = sorted(rng.choice(length, size=min(n_targets, length), replace=False).tolist())
    for pos in positions:
        make_complex = rng.random() < 0.45
        if make_complex:
            words[pos] = complex_words[int(rng.integers(0, len(complex_words)))]
        if pos + 1 < length and rng.random() < 0.15 and pos + 1 not in positions:
            annotations.append(((pos, pos + 2), make_complex))
        else:
            annotations.append(((pos, pos + 1), make_complex))
    words[0] = words[0][0].upper() + words[0][1:]
    sentence = " ".join(words) + " ."
    spans = []
    offsets = []
    cursor = 0
    for word in words:
        offsets.append((cursor, cursor + len(word)))
        cursor += len(word) + 1
    for (lo, hi), is_complex in annotations:
        start = offsets[lo][0]
        end = offsets[hi - 1][1]
        spans.append((start, end, sentence[start:end], is_complex))
    return sentence, spans


def write_corpus(path, lang, split, n_instances, rng):
    lines = []
    counts = [0, 0]  # noncomplex, complex
    i = 0
    while i < n_instances:
        sentence, spans = make_sentence(rng, lang, allow_extra=(lang == "en"))
        for start, end, target, is_complex in spans:
            if i >= n_instances:
                break
            if is_complex:
                native = int(rng.integers(1, 11))
                nonnative = int(rng.integers(0, 11))
                if native + nonnative == 0:
                    native = 1
                label, prob = 1, (native + nonnative) / 20.0
            else:
                native = nonnative = 0
                label, prob = 0, 0.0
            counts[label] += 1
            hit_id = f"{lang.upper()}{split[0].upper()}{i:04d}"
            lines.append(
                "\t".join(
                    [
                        hit_id,
                        sentence,
                        str(start),
                        str(end),
                        target,
                        "10",
                        "10",
                        str(native),
                        str(nonnative),
                        str(label),
                        repr(prob),
                    ]
                )
            )
            i += 1
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"complex": counts[1], "noncomplex": counts[0], "instances": sum(counts)}


def main():
    rng = np.random.default_rng(SEED)
    data_dir = ROOT / "data"
    emb_dir = ROOT / "embeddings"
    dict_dir = ROOT / "dictionaries"
    for d in (data_dir, emb_dir, dict_dir):
        d.mkdir(parents=True, exist_ok=True)

    spaces, _ = build_embeddings(rng)
    for lang, (words, vectors) in spaces.items():
        write_vec(emb_dir / f"wiki.{lang}.vec", words, vectors)
    write_dictionaries(dict_dir)

    lang_ids = {"en": 1, "de": 2, "es": 3, "fr": 4}
    genre_ids = {"wikipedia": 1, "wikinews": 2, "news": 3}
    split_ids = {"train": 1, "dev": 2, "test": 3}
    manifest = {"seed": SEED, "dim": DIM, "files": {}}
    for (lang, genre), (n_train, n_dev, n_test) in sorted(SIZES.items()):
        for split, count in (("train", n_train), ("dev", n_dev), ("test", n_test)):
            if count == 0:
                continue
            path = data_dir / lang / f"{genre}_{split}.tsv"
            file_rng = np.random.default_rng(
                [SEED, lang_ids[lang], genre_ids[genre], split_ids[split]]
            )
            manifest["files"][f"{lang}/{genre}_{split}.tsv"] = write_corpus(
                path, lang, split, count, file_rng
            )
    (ROOT / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote fixtures under {ROOT}")


if __name__ == "__main__":
    sys.exit(main())

"""Orthogonal mapping of monolingual embedding spaces into a shared pivot space.

The map for a language pair is fit in closed form on dictionary anchors
(orthogonal Procrustes) and then iteratively re-fit on anchor dictionaries
induced from mutual CSLS nearest neighbors among the most frequent words.
Vectors are rows; a source vector x maps into the target space as x @ W.

Convention pinned by the tests: with X the stacked source anchors and Y the
stacked target anchors, W = U @ Vt for U, S, Vt = svd(X.T @ Y), which
minimizes ||X W - Y||_F over orthogonal W.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .embeddings import EmbeddingTable, normalize
from .errors import MissingResourceError, NumericalError, ValidationError

log = logging.getLogger(__name__)

PIVOT_LANGUAGE = "EN"
_ORTHOGONALITY_TOL = 1e-6
_CHUNK = 1024


@dataclass(frozen=True)
class BilingualDictionary:
    """Word translation pairs used as alignment supervision."""

    pairs: tuple[tuple[str, str], ...]
    source_language: str
    target_language: str

    def flipped(self) -> "BilingualDictionary":
        return BilingualDictionary(
            pairs=tuple((t, s) for s, t in self.pairs),
            source_language=self.target_language,
            target_language=self.source_language,
        )


def load_dictionary(source, source_language, target_language) -> BilingualDictionary:
    """Read a dictionary file: two whitespace-separated words per line.

    Lines with a different token count (multi-word entries) are dropped, as
    are duplicate pairs; first occurrence wins.
    """
    if hasattr(source, "read"):
        fh, close = source, False
    else:
        fh = open(source, "r", encoding="utf-8")
        close = True
    pairs: list[tuple[str, str]] = []
    seen = set()
    skipped = 0
    try:
        for line in fh:
            parts = line.split()
            if len(parts) != 2:
                skipped += 1
                continue
            pair = (parts[0], parts[1])
            if pair in seen:
                continue
            seen.add(pair)
            pairs.append(pair)
    finally:
        if close:
            fh.close()
    if skipped:
        log.info(
            "%s-%s dictionary: skipped %d non-word-pair line(s)",
            source_language,
            target_language,
            skipped,
        )
    return BilingualDictionary(tuple(pairs), source_language, target_language)


@dataclass(frozen=True)
class FitReport:
    anchor_count: int
    filtered_pairs: int
    mean_cosine_after_fit: float
    smallest_singular_value: float
    refinement_iterations: int = 0
    anchor_counts_per_iteration: tuple[int, ...] = ()
    early_stopped: bool = False

    def as_dict(self):
        return {
            "anchors_used": self.anchor_count,
            "filtered_pairs": self.filtered_pairs,
            "mean_cosine": self.mean_cosine_after_fit,
            "smallest_singular_value": self.smallest_singular_value,
            "iterations": self.refinement_iterations,
            "anchor_counts_per_iteration": list(self.anchor_counts_per_iteration),
            "early_stopped": self.early_stopped,
        }


@dataclass(frozen=True)
class AlignmentMap:
    matrix: np.ndarray  # (d, d) float64, orthogonal
    source_language: str
    target_language: str
    fit_report: FitReport


@dataclass(frozen=True)
class RefinementConfig:
    iterations: int = 5
    k_csls: int = 10
    anchor_top_n: int = 10_000
    mutual_nn_only: bool = True

    def __post_init__(self):
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")
        if self.k_csls < 1:
            raise ValidationError("k_csls must be >= 1")


def orthogonality_error(w: np.ndarray) -> float:
    return float(np.abs(w.T @ w - np.eye(w.shape[0])).max())


def _check_orthogonal(w: np.ndarray):
    err = orthogonality_error(w)
    if err > _ORTHOGONALITY_TOL:
        raise NumericalError(f"mapping matrix lost orthogonality (max error {err:.3g})")


def _anchor_matrices(src: EmbeddingTable, tgt: EmbeddingTable, dictionary: BilingualDictionary):
    src_rows, tgt_rows = [], []
    filtered = 0
    for s, t in dictionary.pairs:
        i, j = src.index.get(s), tgt.index.get(t)
        if i is None or j is None:
            filtered += 1
            continue
        src_rows.append(i)
        tgt_rows.append(j)
    x = src.matrix[src_rows].astype(np.float64)
    y = tgt.matrix[tgt_rows].astype(np.float64)
    return x, y, filtered


def procrustes_fit(
    src: EmbeddingTable, tgt: EmbeddingTable, dictionary: BilingualDictionary
) -> AlignmentMap:
    """Closed-form orthogonal least-squares fit on dictionary anchors."""
    if src.dim != tgt.dim:
        raise ValidationError(f"dimension mismatch: {src.dim} vs {tgt.dim}")
    x, y, filtered = _anchor_matrices(src, tgt, dictionary)
    if x.shape[0] < src.dim:
        raise ValidationError(
            f"under-determined fit: {x.shape[0]} usable anchor pairs for dim {src.dim}"
        )
    u, s, vt = np.linalg.svd(x.T @ y)
    w = u @ vt
    _check_orthogonal(w)
    smallest = float(s[-1])
    if smallest < 1e-12:
        log.warning(
            "rank-deficient anchor cross-covariance (smallest singular value %.3g)", smallest
        )
    mean_cos = _mean_pair_cosine(x @ w, y)
    report = FitReport(
        anchor_count=x.shape[0],
        filtered_pairs=filtered,
        mean_cosine_after_fit=mean_cos,
        smallest_singular_value=smallest,
    )
    return AlignmentMap(w, src.language, tgt.language, report)


def _mean_pair_cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.where((na == 0) | (nb == 0), 1.0, na * nb)
    return float(((a * b).sum(axis=1) / denom).mean())


def _topk_mean_sim(queries: np.ndarray, others: np.ndarray, k: int) -> np.ndarray:
    """Mean cosine of each query row's k nearest rows in `others` (unit rows)."""
    if k > others.shape[0]:
        raise ValidationError(f"k={k} exceeds candidate vocabulary {others.shape[0]}")
    out = np.empty(queries.shape[0])
    for lo in range(0, queries.shape[0], _CHUNK):
        block = queries[lo : lo + _CHUNK] @ others.T
        if k == others.shape[0]:
            out[lo : lo + _CHUNK] = block.mean(axis=1)
        else:
            top = np.partition(block, block.shape[1] - k, axis=1)[:, -k:]
            out[lo : lo + _CHUNK] = top.mean(axis=1)
    return out


def build_r_cache(candidates: EmbeddingTable, other_vectors: np.ndarray, k: int) -> np.ndarray:
    """Per-candidate mean similarity to its k nearest neighbors in the other space."""
    return _topk_mean_sim(candidates.matrix.astype(np.float64), np.asarray(other_vectors, dtype=np.float64), k)


def csls_scores(
    query: np.ndarray, candidates: EmbeddingTable, k: int, r_cache: np.ndarray
) -> list[tuple[str, float]]:
    """Rank all candidates for one query by CSLS.

    score(x, y) = 2 cos(x, y) - r(y) - r(x), where r(y) comes from the
    supplied cache and r(x) is the query's mean similarity to its k nearest
    candidates. Ties break by frequency rank, then by word.
    """
    if k > len(candidates):
        raise ValidationError(f"k={k} exceeds candidate vocabulary {len(candidates)}")
    if len(r_cache) != len(candidates):
        raise ValidationError("r_cache length does not match candidate vocabulary")
    q = np.asarray(query, dtype=np.float64)
    cos = candidates.matrix.astype(np.float64) @ q
    r_query = float(np.partition(cos, len(cos) - k)[-k:].mean()) if k < len(cos) else float(cos.mean())
    scores = 2.0 * cos - np.asarray(r_cache, dtype=np.float64) - r_query
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i, candidates.words[i]))
    return [(candidates.words[i], float(scores[i])) for i in order]


def _induce_pairs(
    src_words, src_vectors, tgt_words, tgt_vectors, k: int, mutual_only: bool
) -> list[tuple[str, str]]:
    """Mutual CSLS nearest-neighbor pairs between two unit-row vector sets."""
    n_src, n_tgt = src_vectors.shape[0], tgt_vectors.shape[0]
    r_src = _topk_mean_sim(src_vectors, tgt_vectors, k)  # r(x) against target space
    r_tgt = _topk_mean_sim(tgt_vectors, src_vectors, k)  # r(y) against source space

    fwd = np.empty(n_src, dtype=np.int64)
    best_tgt_score = np.full(n_tgt, -np.inf)
    bwd = np.zeros(n_tgt, dtype=np.int64)
    for lo in range(0, n_src, _CHUNK):
        block = 2.0 * (src_vectors[lo : lo + _CHUNK] @ tgt_vectors.T)
        fwd_scores = block - r_tgt[None, :]
        fwd[lo : lo + _CHUNK] = np.argmax(fwd_scores, axis=1)
        bwd_scores = block - r_src[lo : lo + _CHUNK, None]
        blk_best = np.argmax(bwd_scores, axis=0)
        blk_val = bwd_scores[blk_best, np.arange(n_tgt)]
        better = blk_val > best_tgt_score
        best_tgt_score[better] = blk_val[better]
        bwd[better] = blk_best[better] + lo
    pairs = []
    for i in range(n_src):
        j = int(fwd[i])
        if mutual_only and int(bwd[j]) != i:
            continue
        pairs.append((src_words[i], tgt_words[j]))
    return pairs


def refine(
    alignment: AlignmentMap,
    src: EmbeddingTable,
    tgt: EmbeddingTable,
    config: RefinementConfig,
) -> AlignmentMap:
    """Iteratively re-fit the map on anchor dictionaries induced by CSLS.

    Each round maps the top `anchor_top_n` frequent source words, pairs them
    with frequent target words by (mutual) CSLS nearest neighbor, and re-runs
    the Procrustes fit on the induced dictionary. Stops early, keeping the
    best map so far, if an induced dictionary is under-determined.
    """
    if config.iterations == 0:
        return alignment
    top_src = min(config.anchor_top_n, len(src))
    top_tgt = min(config.anchor_top_n, len(tgt))
    src_words = src.words[:top_src]
    tgt_words = tgt.words[:top_tgt]
    src_vec = src.matrix[:top_src].astype(np.float64)
    tgt_vec = tgt.matrix[:top_tgt].astype(np.float64)

    current = alignment
    counts: list[int] = []
    for it in range(config.iterations):
        mapped = _unit_rows(src_vec @ current.matrix)
        pairs = _induce_pairs(
            src_words, mapped, tgt_words, _unit_rows(tgt_vec), config.k_csls, config.mutual_nn_only
        )
        if len(pairs) < src.dim:
            log.warning(
                "refinement stopped at iteration %d: induced dictionary of %d pairs "
                "is under-determined for dim %d",
                it,
                len(pairs),
                src.dim,
            )
            report = replace(
                current.fit_report,
                refinement_iterations=it,
                anchor_counts_per_iteration=tuple(counts),
                early_stopped=True,
            )
            return replace(current, fit_report=report)
        induced = BilingualDictionary(tuple(pairs), src.language, tgt.language)
        current = procrustes_fit(src, tgt, induced)
        counts.append(len(pairs))
    report = replace(
        current.fit_report,
        refinement_iterations=len(counts),
        anchor_counts_per_iteration=tuple(counts),
    )
    return replace(current, fit_report=report)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1)
    return m / np.where(norms == 0, 1.0, norms)[:, None]


def apply(alignment: AlignmentMap, table: EmbeddingTable) -> EmbeddingTable:
    """Map every vector as v @ W and renormalize; words and ranks carry over."""
    if table.dim != alignment.matrix.shape[0]:
        raise ValidationError(
            f"dimension mismatch: table dim {table.dim} vs map dim {alignment.matrix.shape[0]}"
        )
    mapped = table.matrix.astype(np.float64) @ alignment.matrix
    out = EmbeddingTable(
        language=table.language,
        dim=table.dim,
        words=table.words,
        matrix=mapped.astype(table.matrix.dtype),
        index=table.index,
    )
    return normalize(out)


def chain_to_pivot(
    tables: dict[str, EmbeddingTable],
    dictionaries: dict[str, BilingualDictionary],
    config: RefinementConfig | None = None,
    pivot: str = PIVOT_LANGUAGE,
) -> tuple[dict[str, EmbeddingTable], dict[str, AlignmentMap]]:
    """Map every non-pivot table into the pivot space, one language at a time.

    Mirrors the two-step recipe of adding languages to the shared English
    space via their bilingual dictionaries; the pivot table passes through
    untouched. Dictionaries may be oriented either way and are flipped so the
    mapped language is the source.
    """
    if pivot not in tables:
        raise MissingResourceError(f"pivot table {pivot!r} not supplied")
    config = config or RefinementConfig()
    mapped: dict[str, EmbeddingTable] = {pivot: tables[pivot]}
    maps: dict[str, AlignmentMap] = {}
    for language in tables:
        if language == pivot:
            continue
        dictionary = dictionaries.get(language)
        if dictionary is None:
            raise MissingResourceError(f"no {pivot}-{language} dictionary supplied")
        if dictionary.source_language == pivot:
            dictionary = dictionary.flipped()
        fitted = procrustes_fit(tables[language], tables[pivot], dictionary)
        fitted = refine(fitted, tables[language], tables[pivot], config)
        maps[language] = fitted
        mapped[language] = apply(fitted, tables[language])
    return mapped, maps


def induction_precision(
    alignment: AlignmentMap,
    src: EmbeddingTable,
    tgt: EmbeddingTable,
    eval_dictionary: BilingualDictionary,
    k: int,
) -> float:
    """Precision@k of dictionary induction under the fitted map with CSLS."""
    gold: dict[str, set[str]] = {}
    for s, t in eval_dictionary.pairs:
        if s in src and t in tgt:
            gold.setdefault(s, set()).add(t)
    if not gold:
        raise ValidationError("no usable evaluation pairs in both vocabularies")
    src_words = sorted(gold, key=src.rank)
    queries = _unit_rows(
        np.vstack([src.vector(w) for w in src_words]).astype(np.float64) @ alignment.matrix
    )
    tgt_vecs = tgt.matrix.astype(np.float64)
    # r(x) is constant per query row, so only the candidate-side penalty
    # affects the top-k ranking.
    r_tgt = _topk_mean_sim(tgt_vecs, queries, min(k, queries.shape[0]))
    hits = 0
    for lo in range(0, queries.shape[0], _CHUNK):
        block = 2.0 * (queries[lo : lo + _CHUNK] @ tgt_vecs.T) - r_tgt[None, :]
        top = np.argsort(-block, axis=1, kind="stable")[:, :k]
        for row, qi in enumerate(range(lo, min(lo + _CHUNK, queries.shape[0]))):
            predicted = {tgt.words[j] for j in top[row]}
            if predicted & gold[src_words[qi]]:
                hits += 1
    return hits / len(src_words)

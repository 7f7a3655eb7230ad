"""Word-vector tables in the fastText .vec text format.

Storage is float32; callers doing alignment math promote to float64. Load
order doubles as the frequency rank because published .vec files are sorted
by corpus frequency.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_MAX_VOCAB = 200_000


@dataclass
class EmbeddingTable:
    language: str
    dim: int
    words: tuple[str, ...]
    matrix: np.ndarray  # (vocab, dim) float32, row i belongs to words[i]
    index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index = {w: i for i, w in enumerate(self.words)}
        if self.matrix.shape != (len(self.words), self.dim):
            raise ValidationError(
                f"matrix shape {self.matrix.shape} inconsistent with "
                f"{len(self.words)} words of dim {self.dim}"
            )

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def rank(self, word: str) -> int:
        return self.index[word]

    def vector(self, word: str) -> np.ndarray:
        return self.matrix[self.index[word]]

    def lookup(self, token: str) -> tuple[np.ndarray, bool]:
        """Exact match, then lowercase fallback, then a flagged zero vector."""
        i = self.index.get(token)
        if i is None:
            i = self.index.get(token.lower())
        if i is None:
            return np.zeros(self.dim, dtype=self.matrix.dtype), True
        return self.matrix[i], False


def load_text_format(source, language: str, max_vocab: int = DEFAULT_MAX_VOCAB) -> EmbeddingTable:
    """Read a .vec file: a "vocab dim" header, then one word + dim floats per line."""
    if max_vocab <= 0:
        raise ValidationError("max_vocab must be positive")
    if hasattr(source, "read"):
        fh = source
        if isinstance(fh.read(0), bytes):
            fh = io.TextIOWrapper(fh, encoding="utf-8", errors="surrogateescape")
        close = False
    else:
        fh = open(source, "r", encoding="utf-8", errors="surrogateescape")
        close = True
    try:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("expected header 'vocab_size dim'", 1)
        try:
            vocab_size, dim = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError("non-integer header fields", 1) from None
        words: list[str] = []
        index: dict[str, int] = {}
        rows: list[np.ndarray] = []
        for line_no, line in enumerate(fh, start=2):
            if len(words) >= max_vocab:
                break
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) - 1 != dim:
                raise ParseError(
                    f"expected {dim} values, got {len(parts) - 1}", line_no
                )
            word = parts[0]
            if word in index:
                log.warning("duplicate word %r at line %d; keeping first", word, line_no)
                continue
            try:
                vec = np.array(parts[1:], dtype=np.float32)
            except ValueError:
                raise ParseError("non-numeric vector component", line_no) from None
            index[word] = len(words)
            words.append(word)
            rows.append(vec)
    finally:
        if close:
            fh.close()
    matrix = np.vstack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
    return EmbeddingTable(language=language, dim=dim, words=tuple(words), matrix=matrix, index=index)


def save_text_format(table: EmbeddingTable, dest):
    """Write the table back out as .vec text (6 decimals, load-order rows)."""
    if hasattr(dest, "write"):
        fh, close = dest, False
    else:
        fh = open(dest, "w", encoding="utf-8", errors="surrogateescape")
        close = True
    try:
        fh.write(f"{len(table)} {table.dim}\n")
        for word, row in zip(table.words, table.matrix):
            fh.write(word + " " + " ".join(f"{v:.6f}" for v in row) + "\n")
    finally:
        if close:
            fh.close()


def normalize(table: EmbeddingTable) -> EmbeddingTable:
    """Scale every row to unit L2 norm; zero rows are kept as-is and logged.

    The storage dtype of the input is preserved (float32 for loaded tables)."""
    norms = np.linalg.norm(table.matrix.astype(np.float64), axis=1)
    zero_rows = norms == 0.0
    if zero_rows.any():
        log.warning(
            "%s: %d zero vector(s) left unnormalized", table.language, int(zero_rows.sum())
        )
        norms = np.where(zero_rows, 1.0, norms)
    matrix = (table.matrix.astype(np.float64) / norms[:, None]).astype(table.matrix.dtype)
    return EmbeddingTable(
        language=table.language,
        dim=table.dim,
        words=table.words,
        matrix=matrix,
        index=table.index,
    )

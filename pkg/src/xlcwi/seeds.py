"""Deterministic per-component seed derivation from one master seed."""

import hashlib


def derive_seed(master: int, *labels: str) -> int:
    """Stable 63-bit child seed for a named component; platform-independent."""
    text = f"{master}|" + "|".join(labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1

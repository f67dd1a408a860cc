"""Deterministic RNG stream splitting.

Python's built-in hash() is salted per process, so named substreams are
derived through sha256 instead. Identical (seed, labels) always yield an
identical stream, independent of how many other streams exist.
"""

import hashlib
import random


def split_stream(seed: int, *labels) -> random.Random:
    """Derive an independent random.Random from a root seed and labels."""
    key = ":".join([str(seed)] + [str(l) for l in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))

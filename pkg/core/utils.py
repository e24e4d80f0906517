"""Shared helper utilities: seeded randomness, atomic writes, exact number formatting.

Normalization goals:
- Every random draw in the toolkit comes from a numpy Generator built here, so a
  single integer seed (optionally combined with a stream index) reproduces a run.
- Files that other processes may read mid-run are written atomically.
"""
import os
from typing import Optional, Sequence, Union

import numpy as np


SeedLike = Union[None, int, Sequence[int], np.random.Generator]


def make_rng(seed: SeedLike = None, *stream: int) -> np.random.Generator:
    """Return a numpy Generator.

    Supports these call styles:
    - make_rng(generator)        -> the generator itself
    - make_rng(7)                -> default_rng(7)
    - make_rng(7, 3)             -> independent stream 3 derived from seed 7
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if stream:
        base = [] if seed is None else ([seed] if isinstance(seed, int) else list(seed))
        return np.random.default_rng(base + list(stream))
    return np.random.default_rng(seed)


def format_float(value: float) -> str:
    """Shortest decimal string that reads back to the same float."""
    return repr(float(value))


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write bytes to path via a temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    temp_path = path + '.tmp'
    try:
        with open(temp_path, 'wb') as f:
            f.write(data)
        os.replace(temp_path, path)
    except Exception:
        if os.path.exists(temp_path):
            try:
                os.remove(temp_path)
            except OSError:
                pass
        raise


def atomic_write_text(path: str, text: str, encoding: Optional[str] = "utf-8") -> None:
    """Write text to path via a temp file and rename."""
    atomic_write_bytes(path, text.encode(encoding or "utf-8"))

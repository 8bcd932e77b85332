from __future__ import annotations

import hashlib
import json
import math
from fractions import Fraction
from typing import Any

import numpy as np

UINT64_MASK = (1 << 64) - 1


def derive_seed(master: int, *keys: Any) -> int:
    """``master XOR hash(keys)``, stable across processes and platforms."""
    h = hashlib.blake2b(repr(keys).encode("utf-8"), digest_size=8).digest()
    return (int(master) ^ int.from_bytes(h, "little")) & UINT64_MASK


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & UINT64_MASK))


def decimal_fraction(x: float | int | str | Fraction) -> Fraction:
    """Exact rational for the decimal a user typed (0.6 -> 3/5, not the binary float)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)) if not isinstance(x, str) else x)


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def json_pointer(path) -> str:
    parts = [str(p).replace("~", "~0").replace("/", "~1") for p in path]
    return "/" + "/".join(parts) if parts else ""

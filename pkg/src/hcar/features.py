"""Structural feature extraction for constraint candidates.

The vector layout is fixed and versioned: a one-hot over the relation kind,
scalar scope statistics, then per-dimension index statistics padded to three
dimensions. Structurally identical constraints map to identical vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AllDifferent, BinaryRel, Constraint, Count, Sum, Vocabulary

FEATURE_VERSION = 2
MAX_DIMS = 3

_RELATION_KINDS = (
    "alldifferent", "alldifferent_div",
    "sum=", "sum!=", "sum<", "sum<=", "sum>", "sum>=",
    "count=", "count!=", "count<", "count<=", "count>", "count>=",
    "count_div=", "count_div!=", "count_div<", "count_div<=", "count_div>", "count_div>=",
    "bin=", "bin!=", "bin<", "bin<=", "bin>", "bin>=",
)

FEATURE_NAMES = (
    tuple(f"rel_{k}" for k in _RELATION_KINDS)
    + ("arity", "has_constant", "constant_value",
       "var_name_same", "var_ndims_same", "var_ndims_max", "var_ndims_min")
    + tuple(f"dim{d}_{stat}" for d in range(MAX_DIMS)
            for stat in ("has", "same", "max", "min", "avg", "spread"))
)


def relation_kind(c: Constraint) -> str:
    if isinstance(c, AllDifferent):
        return "alldifferent_div" if c.divisor != 1 else "alldifferent"
    if isinstance(c, Sum):
        return f"sum{c.rel.value}"
    if isinstance(c, Count):
        return (f"count_div{c.rel.value}" if c.divisor != 1 else f"count{c.rel.value}")
    if isinstance(c, BinaryRel):
        return f"bin{c.rel.value}"
    raise TypeError(f"unknown constraint {c!r}")


def _constant_of(c: Constraint) -> tuple[bool, int]:
    if isinstance(c, Sum):
        return True, c.bound
    if isinstance(c, Count):
        return True, c.count
    return False, 0


def extract_features(c: Constraint, voc: Vocabulary) -> np.ndarray:
    """Deterministic, total feature map; dimension stats from VarRef indices."""
    scope = c.scope
    vec = np.zeros(len(FEATURE_NAMES), dtype=float)
    kind = relation_kind(c)
    vec[_RELATION_KINDS.index(kind)] = 1.0
    base = len(_RELATION_KINDS)
    has_const, const_val = _constant_of(c)
    ndims = [len(v.indices) for v in scope]
    vec[base + 0] = len(scope)
    vec[base + 1] = 1.0 if has_const else 0.0
    vec[base + 2] = float(const_val)
    vec[base + 3] = 1.0 if len({v.base for v in scope}) == 1 else 0.0
    vec[base + 4] = 1.0 if len(set(ndims)) == 1 else 0.0
    vec[base + 5] = float(max(ndims))
    vec[base + 6] = float(min(ndims))
    off = base + 7
    for d in range(MAX_DIMS):
        idx = [v.indices[d] for v in scope if len(v.indices) > d]
        has = len(idx) == len(scope) and len(idx) > 0
        if idx:
            vec[off + 0] = 1.0 if has else 0.0
            vec[off + 1] = 1.0 if len(set(idx)) == 1 else 0.0
            vec[off + 2] = float(max(idx))
            vec[off + 3] = float(min(idx))
            vec[off + 4] = float(sum(idx)) / len(idx)
            vec[off + 5] = float(max(idx) - min(idx))
        off += 6
    return vec

"""Maximum-weight bipartite matching with a deterministic tie-break.

The numeric optimum comes from scipy's assignment solver. On top of it sits
a fix-and-verify pass that pins down WHICH optimal matching is returned:
rows are fixed in ascending order to the smallest column that still permits
an optimal completion, yielding the lexicographically lowest matching among
all maximum-weight ones. Ties are common in practice (type-indicator weight
matrices are full of equal entries), so determinism here keeps retrieval
scores and downstream ranking reproducible.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError

# Two float sums of at most a few thousand bounded weights agree well within
# this slack when they are mathematically equal.
_VALUE_EPS = 1e-9


def _as_matrix(weights: Sequence[Sequence[float]]) -> np.ndarray:
    matrix = np.asarray(weights, dtype=float)
    if matrix.size == 0:
        return matrix.reshape((matrix.shape[0] if matrix.ndim else 0, 0))
    if matrix.ndim != 2:
        raise InvalidInputError(f"weight matrix must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError("weight matrix contains non-finite values")
    if np.any(matrix < 0):
        raise InvalidInputError("weight matrix contains negative values")
    return matrix


def matching_value(weights: Sequence[Sequence[float]]) -> float:
    """Total weight of a maximum matching (size min(U, V), weights >= 0)."""
    matrix = _as_matrix(weights)
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        return 0.0
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    return float(matrix[rows, cols].sum())


def hungarian_max_matching(
    weights: Sequence[Sequence[float]],
) -> list[tuple[int, int]]:
    """Maximum-weight matching of size min(U, V) over a U x V weight matrix.

    Among all maximum matchings, returns the lexicographically lowest one
    (pairs compared as sorted (u, v) lists). Result pairs are sorted by row.

    Raises:
        InvalidInputError: on non-finite or negative weights.
    """
    matrix = _as_matrix(weights)
    n_rows, n_cols = matrix.shape
    size = min(n_rows, n_cols)
    if size == 0:
        return []

    pairs: list[tuple[int, int]] = []
    free_cols = list(range(n_cols))
    remaining = matching_value(matrix)
    for u in range(n_rows):
        need = size - len(pairs)
        fixed = False
        for ci, v in enumerate(free_cols):
            rest_cols = free_cols[:ci] + free_cols[ci + 1 :]
            rest = matching_value(matrix[u + 1 :, rest_cols]) if need > 1 else 0.0
            if abs(matrix[u, v] + rest - remaining) <= _VALUE_EPS:
                pairs.append((u, v))
                remaining -= matrix[u, v]
                free_cols.pop(ci)
                fixed = True
                break
        if len(pairs) == size:
            break
        # No column kept the optimum: every maximum matching leaves row u
        # unmatched, which is only possible when rows outnumber columns.
        if not fixed and n_rows - u - 1 < need:
            raise AssertionError("matching search lost feasibility")  # pragma: no cover
    return pairs


def matching_by_label(
    labels_a: Sequence[str],
    labels_b: Sequence[str],
    weight,
) -> list[tuple[int, int]]:
    """Maximum matching between two labelled element lists.

    Weights across different labels are zero by construction in every use
    here (type-indicator similarity, IoU by type, size-weighted pairing), so
    the global problem decomposes into one matching per shared label; this
    runs hungarian_max_matching on each block and stitches the results back
    to global indices. `weight(i, j)` is queried only for same-label pairs.
    """
    by_label_a: dict[str, list[int]] = {}
    for i, label in enumerate(labels_a):
        by_label_a.setdefault(label, []).append(i)
    by_label_b: dict[str, list[int]] = {}
    for j, label in enumerate(labels_b):
        by_label_b.setdefault(label, []).append(j)

    pairs: list[tuple[int, int]] = []
    for label in sorted(set(by_label_a) & set(by_label_b)):
        rows = by_label_a[label]
        cols = by_label_b[label]
        block = [[weight(i, j) for j in cols] for i in rows]
        for bi, bj in hungarian_max_matching(block):
            pairs.append((rows[bi], cols[bj]))
    pairs.sort()
    return pairs

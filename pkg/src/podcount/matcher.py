"""One-to-one assignment of ground-truth points to proposals.

The pairwise cost couples pixel distance and confidence:

    D[i, j] = tau * ||p_i - p_hat_j||_2 - c_hat_j

and the minimum-total-cost injection is found with a shortest-augmenting-path
assignment solver (Jonker-Volgenant style).  Rectangular instances with
N <= M are solved directly, which is equivalent to padding the matrix square
with a large constant: pad columns are never preferred.  Unmatched proposals
are the negatives (background).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .head import ProposalSet


class MatchInfeasibleError(ValueError):
    """More ground-truth points than proposals; raise anchors_per_cell."""


@dataclass
class MatchConfig:
    tau: float = 5e-2

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")


@dataclass
class MatchResult:
    """pairs[i] = (gt index, proposal index); negatives = unmatched proposals."""

    pairs: list[tuple[int, int]]
    negatives: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def cost_matrix(gt_points, props: ProposalSet, cfg: MatchConfig) -> np.ndarray:
    """(N, M) matrix of ``tau * distance - confidence`` in float64."""
    gt = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    pts = props.points.data.astype(np.float64, copy=False)
    confs = props.confidences.data.astype(np.float64, copy=False)
    if len(props) < 1:
        raise ValueError("need at least one proposal")
    diff = gt[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    return cfg.tau * dist - confs[None, :]


def hungarian(costs: np.ndarray) -> np.ndarray:
    """Minimum-cost injection of rows into columns for an N x M matrix, N <= M.

    Returns ``col_of_row`` with one distinct column index per row such that
    ``costs[arange(N), col_of_row].sum()`` is minimal.  Ties resolve to the
    lowest column index (stable scan order), so results are reproducible.
    Worst case O(N^2 * M).
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {costs.shape}")
    n, m = costs.shape
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if n > m:
        raise MatchInfeasibleError(
            f"{n} targets but only {m} proposals; increase anchors_per_cell"
        )
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix must be finite")

    inf = np.inf
    u = np.zeros(n)  # row potentials
    v = np.zeros(m)  # column potentials
    col_owner = np.full(m, -1, dtype=np.int64)
    row_to_col = np.full(n, -1, dtype=np.int64)

    for start_row in range(n):
        # Dijkstra over columns for the shortest augmenting path
        shortest = np.full(m, inf)
        came_from = np.full(m, -1, dtype=np.int64)
        visited_cols = np.zeros(m, dtype=bool)
        visited_rows = [start_row]
        row = start_row
        min_val = 0.0
        sink = -1
        while sink == -1:
            slack = min_val + costs[row] - u[row] - v
            better = ~visited_cols & (slack < shortest)
            shortest[better] = slack[better]
            came_from[better] = row
            candidates = np.where(visited_cols, inf, shortest)
            j = int(candidates.argmin())  # argmin takes the first == lowest index
            min_val = shortest[j]
            visited_cols[j] = True
            if col_owner[j] == -1:
                sink = j
            else:
                row = int(col_owner[j])
                visited_rows.append(row)
        # dual update keeps reduced costs non-negative
        u[start_row] += min_val
        for r in visited_rows[1:]:
            u[r] += min_val - shortest[row_to_col[r]]
        on_path = visited_cols.copy()
        v[on_path] -= min_val - shortest[on_path]
        # augment: flip assignments back along the path
        j = sink
        while j != -1:
            r = int(came_from[j])
            col_owner[j] = r
            row_to_col[r], j = j, row_to_col[r]

    return row_to_col


def match(gt_points, props: ProposalSet, cfg: MatchConfig) -> MatchResult:
    """Optimal pairing of every ground-truth point with a distinct proposal."""
    gt = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    n, m = gt.shape[0], len(props)
    if n == 0:
        return MatchResult(pairs=[], negatives=np.arange(m, dtype=np.int64))
    if n > m:
        raise MatchInfeasibleError(
            f"{n} targets but only {m} proposals; increase anchors_per_cell"
        )
    cols = hungarian(cost_matrix(gt, props, cfg))
    pairs = [(i, int(cols[i])) for i in range(n)]
    matched = set(cols.tolist())
    negatives = np.array([j for j in range(m) if j not in matched], dtype=np.int64)
    return MatchResult(pairs=pairs, negatives=negatives)

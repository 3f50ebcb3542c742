"""Exact discrete optimal transport with squared-Euclidean ground cost.

This is the package's independent measuring stick: an LP-grade solver for
couplings between weighted point clouds, used to cross-check the closed-form
Gaussian geometry and to score mixture emissions by Monte Carlo.  Three
routes, picked automatically:

* the compiled network simplex (``dwb._core``), which never materializes the
  cost matrix and so handles clouds of tens of thousands of points;
* ``scipy.optimize.linear_sum_assignment`` for uniform equal-size clouds
  when the extension is absent;
* a dense ``linprog`` formulation for small general-weight instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment, linprog

from . import _backend
from .errors import DimensionMismatchError

MARGINAL_TOL = 1e-8
_LINPROG_MAX_CELLS = 250_000
_DENSE_PLAN_MAX_CELLS = 30_000_000


@dataclass(frozen=True)
class DiscreteCoupling:
    """An optimal coupling between two weighted point clouds.

    The plan is stored sparsely (an optimal basic solution has at most
    n + m - 1 nonzero cells); ``plan`` materializes the dense matrix for
    instances small enough to afford it.
    """

    cost: float
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    shape: tuple[int, int]
    source_weights: np.ndarray
    target_weights: np.ndarray

    def __post_init__(self):
        if self.cost < -1e-12:
            raise ValueError(f"negative transport cost {self.cost!r}")
        r = self.row_marginals()
        c = self.col_marginals()
        if np.abs(r - self.source_weights).max() > MARGINAL_TOL:
            raise ValueError("plan row sums do not match source weights")
        if np.abs(c - self.target_weights).max() > MARGINAL_TOL:
            raise ValueError("plan column sums do not match target weights")

    def row_marginals(self) -> np.ndarray:
        out = np.zeros(self.shape[0])
        np.add.at(out, self.rows, self.vals)
        return out

    def col_marginals(self) -> np.ndarray:
        out = np.zeros(self.shape[1])
        np.add.at(out, self.cols, self.vals)
        return out

    @property
    def plan(self) -> np.ndarray:
        n, m = self.shape
        if n * m > _DENSE_PLAN_MAX_CELLS:
            raise MemoryError(f"dense plan of shape {self.shape} is too large; use the triplets")
        out = np.zeros((n, m))
        out[self.rows, self.cols] = self.vals
        return out


def _check_cloud(points, weights, name):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DimensionMismatchError(f"{name} must be a nonempty (n, d) point set")
    if weights is None:
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (pts.shape[0],):
            raise DimensionMismatchError(f"{name} weights must match the point count")
        if np.any(w < 0):
            raise ValueError(f"{name} weights must be nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"{name} weights must sum to 1, got {total!r}")
        w = w / total
    return np.ascontiguousarray(pts), w


def _cost_matrix(x, y):
    return ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)


def _solve_assignment(x, y):
    cost = _cost_matrix(x, y)
    ri, cj = linear_sum_assignment(cost)
    n = x.shape[0]
    vals = np.full(n, 1.0 / n)
    total = float(cost[ri, cj].sum() / n)
    return total, ri.astype(np.int64), cj.astype(np.int64), vals


def _solve_linprog(x, y, wx, wy):
    n, m = x.shape[0], y.shape[0]
    if n * m > _LINPROG_MAX_CELLS:
        raise MemoryError(
            f"general-weight instance {n}x{m} exceeds the dense LP fallback; "
            "build the compiled extension for large clouds"
        )
    c = _cost_matrix(x, y).ravel()
    row_ind = np.repeat(np.arange(n), m)
    col_ind = np.tile(np.arange(m), n) + n
    var = np.tile(np.arange(n * m), 2)
    a_eq = sp.csr_matrix(
        (np.ones(2 * n * m), (np.concatenate([row_ind, col_ind]), var)), shape=(n + m, n * m)
    )
    b_eq = np.concatenate([wx, wy])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:  # pragma: no cover - HiGHS is reliable on balanced instances
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    rows, cols = np.nonzero(plan > 1e-15)
    return float(res.fun), rows.astype(np.int64), cols.astype(np.int64), plan[rows, cols]


def ot_discrete(
    source_points,
    target_points,
    source_weights=None,
    target_weights=None,
) -> DiscreteCoupling:
    """Solve the discrete OT problem exactly and return the coupling.

    Points live in R^d; weights default to uniform.  The reported cost is
    the squared-Euclidean transport cost, i.e. the squared-W2 estimate
    between the two empirical measures.
    """
    x, wx = _check_cloud(source_points, source_weights, "source")
    y, wy = _check_cloud(target_points, target_weights, "target")
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatchError(
            f"source dimension {x.shape[1]} != target dimension {y.shape[1]}"
        )

    result = _backend.emd_sqeuclidean(x, y, wx, wy)
    if result is not None:
        cost, rows, cols, vals = result
    else:
        uniform = (
            x.shape[0] == y.shape[0]
            and np.ptp(wx) < 1e-15
            and np.ptp(wy) < 1e-15
        )
        if uniform:
            cost, rows, cols, vals = _solve_assignment(x, y)
        else:
            cost, rows, cols, vals = _solve_linprog(x, y, wx, wy)

    return DiscreteCoupling(
        cost=max(float(cost), 0.0),
        rows=rows,
        cols=cols,
        vals=vals,
        shape=(x.shape[0], y.shape[0]),
        source_weights=wx,
        target_weights=wy,
    )


def w2_monte_carlo(
    a_sampler,
    b_sampler,
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo squared-W2 estimate between two sampleable distributions.

    Draws ``n_samples`` points from each side and solves the empirical OT
    problem exactly.  The estimate is biased upward at finite sample size
    and tightens as the clouds grow.
    """
    xs = a_sampler(n_samples, rng)
    ys = b_sampler(n_samples, rng)
    return ot_discrete(xs, ys).cost

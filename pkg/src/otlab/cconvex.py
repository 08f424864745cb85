"""c-convex analysis on grids: c-transforms, subdifferentials, sections, semiconvexity."""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidParameterError, InvalidSectionError
from .grid import Grid
from .potential import PotentialField

_BLOCK = 2_000_000


# -- c-transform ------------------------------------------------------------

@dataclass
class TargetField:
    """``u^c`` sampled on target points, with the maximizing source cell of each."""

    values: np.ndarray
    argmax: np.ndarray
    points: np.ndarray
    grid: Grid = None

    def as_grid(self):
        if self.grid is None:
            return self.values
        return self.values.reshape(self.grid.shape)


def _conjugate(cost_matrix, src_points, src_values, tgt_points):
    """``max_x (-c(x, y) - v(x))`` for each target ``y``; returns (values, argmax)."""
    m = len(tgt_points)
    vals = np.empty(m)
    arg = np.empty(m, dtype=int)
    block = max(1, _BLOCK // max(1, len(src_points)))
    for s in range(0, m, block):
        yb = tgt_points[s:s + block]
        scores = -cost_matrix(src_points, yb) - src_values[:, None]
        k = scores.argmax(axis=0)
        arg[s:s + block] = k
        vals[s:s + block] = scores[k, np.arange(len(yb))]
    return vals, arg


def _points(target):
    if isinstance(target, Grid):
        return target, target.flat_centers
    return None, np.atleast_2d(np.asarray(target, dtype=float))


def c_transform(u, cost, target_grid, mask=None):
    """``u^c(y) = max over grid x of (-c(x, y) - u(x))``.

    ``target_grid`` is a :class:`Grid` or an explicit ``(m, n)`` point array.
    ``mask`` restricts the source cells the maximum runs over.
    """
    grid, pts = _points(target_grid)
    X = u.grid.flat_centers
    V = u.values.ravel()
    if mask is not None:
        keep = np.flatnonzero(np.asarray(mask).ravel())
        X, V = X[keep], V[keep]
    else:
        keep = None
    vals, arg = _conjugate(cost.matrix, X, V, pts)
    if keep is not None:
        arg = keep[arg]
    return TargetField(vals, arg, pts, grid)


def double_c_transform(u, cost, target_grid, mask=None):
    """Grid values of ``u^{cc}`` computed through ``u^c`` on ``target_grid``."""
    uc = c_transform(u, cost, target_grid, mask)
    X = u.grid.flat_centers
    vals, _ = _conjugate(lambda a, b: cost.matrix(b, a).T, uc.points, uc.values, X)
    return vals.reshape(u.grid.shape)


def refit_duals(u, mask=None):
    """Rebuild ``u`` from ``lambda'_j = -u^c(y_j)`` computed over the grid."""
    uc = c_transform(u, u.cost, u.atoms, mask)
    return PotentialField(u.cost, u.grid, atoms=u.atoms, lambdas=-uc.values,
                          method=u.method, epsilon=u.epsilon)


# -- subdifferentials ---------------------------------------------------------

@dataclass
class SlopeBox:
    """Per-axis one-sided difference quotients at a point."""

    backward: np.ndarray
    forward: np.ndarray
    gradient: np.ndarray
    gap_tol: float

    @property
    def lower(self):
        return np.minimum(self.backward, self.forward)

    @property
    def upper(self):
        return np.maximum(self.backward, self.forward)

    @property
    def gaps(self):
        return self.forward - self.backward

    @property
    def single_valued(self):
        return bool(np.all(np.abs(self.gaps) <= self.gap_tol))

    def contains(self, p, tol=0.0):
        p = np.asarray(p, dtype=float)
        return bool(np.all((p >= self.lower - tol) & (p <= self.upper + tol)))


def kink_threshold(u, step):
    return 10.0 * step * (1.0 + u.semiconvexity())


def frechet_subdiff(u, x, step=None):
    """Interval box of one-sided slopes of ``u`` at ``x`` with the given step.

    The box is declared single-valued when every axis gap is at most
    ``10 * step * (1 + K)``, ``K`` the semiconvexity constant of ``u``.
    """
    step = u.grid.spacing if step is None else float(step)
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    E = np.eye(n) * step
    pts = np.vstack([x[None, :], x + E, x - E])
    vals = u.evaluate(pts)
    f0, fp, fm = vals[0], vals[1:n + 1], vals[n + 1:]
    fwd = (fp - f0) / step
    bwd = (f0 - fm) / step
    return SlopeBox(bwd, fwd, 0.5 * (fwd + bwd), kink_threshold(u, step))


def one_sided_slopes(u, multiplier=1):
    """Forward and backward quotients on the grid, NaN where the stencil leaves it."""
    U = u.values
    n = U.ndim
    m = int(multiplier)
    t = m * u.grid.spacing
    fwd = np.full(U.shape + (n,), np.nan)
    bwd = np.full(U.shape + (n,), np.nan)
    for a in range(n):
        core = [slice(None)] * n
        core[a] = slice(m, U.shape[a] - m)
        plus = list(core)
        plus[a] = slice(2 * m, None)
        minus = list(core)
        minus[a] = slice(0, U.shape[a] - 2 * m)
        c = U[tuple(core)]
        fwd[tuple(core) + (a,)] = (U[tuple(plus)] - c) / t
        bwd[tuple(core) + (a,)] = (c - U[tuple(minus)]) / t
    return fwd, bwd


def gradient_grid(u, multiplier=1):
    fwd, bwd = one_sided_slopes(u, multiplier)
    return 0.5 * (fwd + bwd)


def kink_mask(u):
    """Cells whose one-sided slopes at grid spacing differ by more than the kink threshold."""
    fwd, bwd = one_sided_slopes(u, 1)
    gap = np.abs(fwd - bwd)
    thr = kink_threshold(u, u.grid.spacing)
    with np.errstate(invalid="ignore"):
        return np.any(np.nan_to_num(gap, nan=0.0) > thr, axis=-1)


def c_subdiff(u, cost, x, slack=None):
    """Atoms ``y_j`` achieving ``max_j (-c(x, y_j) + lambda_j)`` within ``slack``.

    Returns ``(indices, positions)``.
    """
    if not u.is_atomic:
        raise InvalidParameterError("c_subdiff needs an atomic potential")
    x = np.asarray(x, dtype=float)
    s = u.scores(x[None, :])[0]
    slack = 1e-9 * cost.scale() if slack is None else slack
    idx = np.flatnonzero(s >= s.max() - slack)
    return idx, u.atoms[idx]


# -- sections -------------------------------------------------------------------

def section_expression(u, cost, x0, y0):
    """``u(x) + c(x, y0) - c(x0, y0) - u(x0)`` at every cell center (``x0`` snapped)."""
    grid = u.grid
    idx = grid.index_of(x0)
    x0 = grid.center_of(idx)
    y0 = np.asarray(y0, dtype=float)
    cx = cost.value(grid.centers, y0)
    return u.values + cx - float(cost.value(x0, y0)) - u.values[idx], idx


@dataclass(eq=False)
class Section:
    """Sublevel set ``S(x0, y0, u, h)`` as a boolean mask over the grid."""

    x0: np.ndarray
    y0: np.ndarray
    h: float
    cells: np.ndarray
    connected: bool
    grid: Grid
    index0: tuple
    potential: PotentialField = field(default=None, repr=False)
    cost: object = field(default=None, repr=False)
    affine: object = None
    sandwich: dict = None

    @property
    def count(self):
        return int(self.cells.sum())

    @property
    def volume(self):
        return self.count * self.grid.cell_volume

    @property
    def points(self):
        return self.grid.centers[self.cells]

    @property
    def sandwich_ratio(self):
        return None if self.sandwich is None else self.sandwich["ratio"]

    @property
    def norm_size(self):
        return None if self.sandwich is None else self.sandwich["norm_size"]

    @property
    def touches_boundary(self):
        g = self.cells
        return bool(any(np.take(g, 0, axis=a).any() or np.take(g, -1, axis=a).any()
                        for a in range(g.ndim)))

    def resized(self, h):
        """Same center and target at height ``h`` (no membership re-check)."""
        expr, _ = section_expression(self.potential, self.cost, self.x0, self.y0)
        return _section_from_expr(expr, self.x0, self.y0, h, self.grid, self.index0,
                                  self.potential, self.cost)

    def as_row(self):
        return {"x0": self.x0.tolist(), "y0": self.y0.tolist(), "h": self.h,
                "cell_count": self.count, "volume": self.volume, "connected": self.connected,
                "sandwich_ratio": self.sandwich_ratio, "norm_size": self.norm_size}


def _section_from_expr(expr, x0, y0, h, grid, idx, u, cost):
    cells = expr <= h + 1e-9
    cells[idx] = True
    structure = ndimage.generate_binary_structure(grid.ndim, 1)
    labels, _ = ndimage.label(cells, structure=structure)
    comp = labels == labels[idx]
    connected = bool(np.array_equal(comp, cells))
    return Section(np.asarray(x0, dtype=float), np.asarray(y0, dtype=float), float(h), cells,
                   connected, grid, idx, u, cost)


def section_extract(u, cost, x0, y0, h, slack=None):
    """Extract ``S(x0, y0, u, h) = {x : u(x) <= -c(x, y0) + c(x0, y0) + u(x0) + h}``.

    ``x0`` is snapped to its cell center. Membership ``y0 in d_c u(x0)`` is
    checked through the supporting inequality on the grid: the defining
    expression must be ``>= -slack`` everywhere (default slack ``1e-9``
    times the cost scale). Pipelines that use smoothed targets pass a
    discretization slack explicitly.
    """
    if h < 0:
        raise InvalidParameterError("section height must be >= 0")
    grid = u.grid
    x0c = grid.snap(x0)
    expr, idx = section_expression(u, cost, x0c, y0)
    slack = 1e-9 * cost.scale() if slack is None else float(slack)
    low = float(expr.min())
    if low < -slack:
        raise InvalidSectionError(
            f"y0={np.asarray(y0).tolist()} is not in the c-subdifferential at "
            f"x0={x0c.tolist()} (supporting inequality violated by {-low:.3e})")
    return _section_from_expr(expr, x0c, y0, h, grid, idx, u, cost)


# -- semiconvexity --------------------------------------------------------------

def _directions(n):
    dirs = [tuple(int(a == k) for k in range(n)) for a in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            for s in (1, -1):
                d = [0] * n
                d[a], d[b] = 1, s
                dirs.append(tuple(d))
    return dirs


def second_differences(U, m, spacing):
    """Yield ``(direction, quotient array over the valid core)`` for axis and diagonal stencils.

    Quotients are normalized per unit direction: ``Delta^2 / (t^2 |d|^2)``.
    """
    n = U.ndim
    t = m * spacing
    for d in _directions(n):
        off = [m * di for di in d]
        core, plus, minus = [], [], []
        for a in range(n):
            o = abs(off[a])
            core.append(slice(m, U.shape[a] - m))
            plus.append(slice(m + off[a], U.shape[a] - m + off[a]))
            minus.append(slice(m - off[a], U.shape[a] - m - off[a]))
            del o
        q = (U[tuple(plus)] - 2.0 * U[tuple(core)] + U[tuple(minus)]) / (t * t * sum(x * x for x in d))
        yield d, q


def semiconvexity_constant(u, step):
    """Smallest ``K >= 0`` with every sampled second difference of ``u + K|x|^2`` nonnegative."""
    m = max(1, int(round(float(step) / u.grid.spacing)))
    lo = np.inf
    for _, q in second_differences(u.values, m, u.grid.spacing):
        if q.size:
            lo = min(lo, float(q.min()))
    if not np.isfinite(lo):
        raise InvalidParameterError("grid has no interior cells at this step")
    return max(0.0, -0.5 * lo)

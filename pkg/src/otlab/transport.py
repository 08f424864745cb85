"""Discrete Kantorovich problems, dual potentials and transport maps.

Sign convention: a plan carries source duals ``psi`` and target duals
``lam`` with ``-c(x_i, y_j) + lam_j <= psi_i`` for all pairs and equality on
the support, so ``psi_i = u(x_i)`` for ``u(x) = max_j (-c(x, y_j) + lam_j)``.
The dual objective is ``sum_j b_j lam_j - sum_i a_i psi_i``.
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.special import logsumexp

from .cconvex import frechet_subdiff, gradient_grid, kink_mask
from .cost import CostModel, c_exp
from .errors import (InvalidParameterError, InvalidSpecError, IterationLimitError,
                     MissingArtifactError, NondifferentiableError, NotApplicableError,
                     TooLargeError)
from .grid import Grid
from .potential import PotentialField

MAX_CELLS = 4_000_000

for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")


def _pot():
    import ot
    return ot


# -- atom clouds and densities -------------------------------------------------

@dataclass
class AtomCloud:
    """Weighted atoms inside ``domain_box``; weights sum to one."""

    positions: np.ndarray
    weights: np.ndarray
    domain_box: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        self.domain_box = np.asarray(self.domain_box, dtype=float)
        if len(self.weights) != len(self.positions):
            raise InvalidParameterError("positions and weights differ in length")
        if np.any(self.weights < 0):
            raise InvalidParameterError("negative atom weight")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidParameterError(f"weights sum to {self.weights.sum()!r}, not 1")
        lo, hi = self.domain_box
        tol = 1e-9 * max(1.0, float(np.max(hi - lo)))
        if np.any(self.positions < lo - tol) or np.any(self.positions > hi + tol):
            raise InvalidParameterError("atom outside its domain box")

    @classmethod
    def uniform(cls, positions, domain_box=None):
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        if domain_box is None:
            domain_box = np.array([positions.min(axis=0), positions.max(axis=0)])
        w = np.full(len(positions), 1.0 / len(positions))
        return cls(positions, w, domain_box)

    def __len__(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.positions.shape[1]

    def mean(self):
        return self.weights @ self.positions


def density_box(spec):
    """Bounding box ``[[lo], [hi]]`` of a density spec's support."""
    kind = spec.get("kind")
    if kind in ("uniform-box", "gaussian-mixture", "csv-grid"):
        return np.asarray(spec["box"], dtype=float)
    if kind == "uniform-ball":
        c = np.asarray(spec["center"], dtype=float)
        r = float(spec["radius"])
        return np.array([c - r, c + r])
    if kind == "union-of-balls":
        c = np.asarray(spec["centers"], dtype=float)
        r = np.asarray(spec["radii"], dtype=float)[:, None]
        return np.array([(c - r).min(axis=0), (c + r).max(axis=0)])
    raise InvalidSpecError(f"unknown density kind {kind!r}")


def _load_grid_values(spec):
    if "values" in spec:
        return np.asarray(spec["values"], dtype=float)
    try:
        return np.loadtxt(spec["path"], delimiter=",", ndmin=2)
    except OSError as exc:
        raise InvalidSpecError(f"cannot read density grid {spec.get('path')!r}") from exc


def density_function(spec):
    """Unnormalized density ``f(x)`` for ``x`` of shape ``(m, n)``."""
    kind = spec.get("kind")
    box = density_box(spec)
    lo, hi = box
    tol = 1e-12 * max(1.0, float(np.max(hi - lo)))

    def in_box(x):
        return np.all((x >= lo - tol) & (x <= hi + tol), axis=-1)

    if kind == "uniform-box":
        return lambda x: in_box(np.asarray(x, dtype=float)).astype(float)
    if kind == "uniform-ball":
        c = np.asarray(spec["center"], dtype=float)
        r = float(spec["radius"])
        return lambda x: (np.linalg.norm(np.asarray(x, dtype=float) - c, axis=-1)
                          <= r * (1 + 1e-12)).astype(float)
    if kind == "union-of-balls":
        cs = np.asarray(spec["centers"], dtype=float)
        rs = np.asarray(spec["radii"], dtype=float)

        def f(x):
            x = np.asarray(x, dtype=float)
            d = np.linalg.norm(x[..., None, :] - cs, axis=-1)
            return np.any(d <= rs * (1 + 1e-12), axis=-1).astype(float)
        return f
    if kind == "gaussian-mixture":
        means = np.atleast_2d(np.asarray(spec["means"], dtype=float))
        sig = np.broadcast_to(np.asarray(spec.get("sigmas", 1.0), dtype=float), (len(means),))
        wts = np.broadcast_to(np.asarray(spec.get("weights", 1.0), dtype=float), (len(means),))

        def f(x):
            x = np.asarray(x, dtype=float)
            d2 = np.sum((x[..., None, :] - means) ** 2, axis=-1)
            n = means.shape[1]
            dens = wts * np.exp(-0.5 * d2 / sig ** 2) / (2 * np.pi * sig ** 2) ** (n / 2)
            return dens.sum(axis=-1) * in_box(x)
        return f
    if kind == "csv-grid":
        vals = _load_grid_values(spec)
        if vals.ndim == 2 and box.shape[1] == 1:
            vals = vals.ravel()
        if vals.ndim != box.shape[1]:
            raise InvalidSpecError("density grid dimension does not match its box")
        shape = np.asarray(vals.shape)

        def f(x):
            x = np.asarray(x, dtype=float)
            idx = np.floor((x - lo) / (hi - lo) * shape).astype(int)
            idx = np.clip(idx, 0, shape - 1)
            return vals[tuple(np.moveaxis(idx, -1, 0))] * in_box(x)
        return f
    raise InvalidSpecError(f"unknown density kind {kind!r}")


def _lattice(box, s):
    lo, hi = box
    mid = 0.5 * (lo + hi)
    counts = np.maximum(1, np.ceil((hi - lo) / s - 1e-9)).astype(int)
    axes = [m + (np.arange(k) - 0.5 * (k - 1)) * s for m, k in zip(mid, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, len(lo))


def sample_density(spec, n_atoms, seed=0, jitter=False):
    """Stratified atoms on a square lattice fitted to the support.

    The lattice spacing is tuned so that about ``n_atoms`` lattice points
    carry positive density. Weights are the density at each point,
    renormalized. With ``jitter`` each point moves uniformly inside its
    lattice cell (seeded, so still deterministic).

    Examples
    --------
    >>> c = sample_density({"kind": "uniform-box", "box": [[0, 0], [1, 1]]}, 4)
    >>> c.positions.tolist(), c.weights.tolist()
    ([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]], [0.25, 0.25, 0.25, 0.25])
    """
    n_atoms = int(n_atoms)
    if n_atoms < 1:
        raise InvalidParameterError("n_atoms must be positive")
    box = density_box(spec)
    f = density_function(spec)
    n = box.shape[1]
    extent = box[1] - box[0]
    s = float(np.prod(extent) / n_atoms) ** (1.0 / n)
    best = None
    for _ in range(40):
        pts = _lattice(box, s)
        vals = f(pts)
        count = int(np.count_nonzero(vals > 0))
        if best is None or abs(count - n_atoms) < abs(best[0] - n_atoms):
            best = (count, s, pts, vals)
        if count == n_atoms or count == 0:
            break
        s *= (count / n_atoms) ** (1.0 / n)
    count, s, pts, vals = best
    keep = vals > 0
    if not keep.any():
        raise InvalidSpecError(f"density {spec.get('kind')!r} has empty support")
    pts, vals = pts[keep], vals[keep]
    if jitter:
        rng = np.random.default_rng(seed)
        moved = pts + (rng.random(pts.shape) - 0.5) * s
        moved = np.clip(moved, box[0], box[1])
        ok = f(moved) > 0
        pts = np.where(ok[:, None], moved, pts)
        vals = np.where(ok, f(moved), vals)
    w = vals / vals.sum()
    w /= w.sum()
    return AtomCloud(pts, w, box)


# -- plans ------------------------------------------------------------------

@dataclass
class TransportPlan:
    """Sparse coupling with its dual certificate."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    source_duals: np.ndarray
    target_duals: np.ndarray
    objective: float
    gap: float
    shape: tuple
    method: str = "exact"
    epsilon: float = None

    @property
    def couplings(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.mass.tolist()))

    def dense(self):
        P = np.zeros(self.shape)
        np.add.at(P, (self.rows, self.cols), self.mass)
        return P

    def row_sums(self):
        return np.bincount(self.rows, weights=self.mass, minlength=self.shape[0])

    def col_sums(self):
        return np.bincount(self.cols, weights=self.mass, minlength=self.shape[1])

    def assigned_target(self):
        """Index of the heaviest target of each source atom."""
        P = sparse.coo_matrix((self.mass, (self.rows, self.cols)), shape=self.shape).tocsr()
        return np.asarray(P.argmax(axis=1)).ravel()


def _cost_matrix(cost, source, target):
    if isinstance(cost, np.ndarray):
        return np.asarray(cost, dtype=float)
    return cost.matrix(source.positions, target.positions)


def _canonical_duals(C, rows, cols, a, b, lam0):
    """Midpoint of the feasible range of target duals compatible with the support.

    Complementary slackness turns the dual polytope into difference
    constraints ``lam_k - lam_j <= min_i (C_ik - C_ij)`` over supported
    ``(i, j)``. Shortest paths from and to a reference atom give the largest
    and smallest feasible ``lam`` (with ``lam_ref`` fixed); taking the midpoint
    removes the arbitrary vertex choice of the LP solver.
    """
    nt = C.shape[1]
    order = np.lexsort((rows, cols))
    r, c = rows[order], cols[order]
    starts = np.flatnonzero(np.r_[True, c[1:] != c[:-1]])
    js = c[starts]
    diff = C[r, :] - C[r, c][:, None]
    W = np.full((nt, nt), np.inf)
    W[js] = np.minimum.reduceat(diff, starts, axis=0)
    active = np.zeros(nt, dtype=bool)
    active[js] = True
    W[:, ~active] = np.inf
    np.fill_diagonal(W, np.inf)
    Wr = W + lam0[:, None] - lam0[None, :]
    Wr = np.where(np.isfinite(Wr), np.maximum(Wr, 0.0) + 1e-300, np.inf)
    j0 = int(js[np.argmax(b[js])])
    G = csgraph.csgraph_from_dense(Wr, null_value=np.inf)
    d_from = csgraph.dijkstra(G, directed=True, indices=j0)
    d_to = csgraph.dijkstra(G.T.tocsr(), directed=True, indices=j0)
    lam = lam0 - lam0[j0]
    ok = np.isfinite(d_from) & np.isfinite(d_to) & active
    lam[ok] += 0.5 * (d_from[ok] - d_to[ok])
    psi = np.max(lam[None, active] - C[:, active], axis=1)
    idle = ~active
    if idle.any():
        lam[idle] = np.min(C[:, idle] + psi[:, None], axis=0)
    return np.max(lam[None, :] - C, axis=1), lam


def _finish(C, P_rows, P_cols, P_mass, psi, lam, a, b, method, eps):
    primal = float(np.sum(P_mass * C[P_rows, P_cols]))
    dual = float(b @ lam - a @ psi)
    return TransportPlan(P_rows, P_cols, P_mass, psi, lam, primal, primal - dual,
                         C.shape, method, eps)


def _solve_exact(C, a, b):
    ot = _pot()
    G, log = ot.emd(a, b, C, numItermax=10_000_000, log=True)
    if log.get("warning"):
        raise IterationLimitError(f"network simplex stopped: {log['warning']}",
                                  last_gap=None)
    rows, cols = np.nonzero(G > 0)
    mass = G[rows, cols]
    psi, lam = _canonical_duals(C, rows, cols, a, b, np.asarray(log["v"], dtype=float))
    return _finish(C, rows, cols, mass, psi, lam, a, b, "exact", None)


def _round_to_marginals(P, a, b):
    """Project a positive matrix onto exact marginals (row/column scaling plus rank-one repair)."""
    x = np.minimum(1.0, a / np.maximum(P.sum(axis=1), 1e-300))
    P = P * x[:, None]
    y = np.minimum(1.0, b / np.maximum(P.sum(axis=0), 1e-300))
    P = P * y[None, :]
    er = a - P.sum(axis=1)
    ec = b - P.sum(axis=0)
    tot = er.sum()
    if tot > 0:
        P = P + np.outer(er, ec) / tot
    return P


def _solve_entropic(C, a, b, epsilon, max_iter, tol):
    eps = float(epsilon)
    la, lb = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    err = np.inf
    for it in range(int(max_iter)):
        f = -eps * logsumexp((g[None, :] - C) / eps + lb[None, :], axis=1)
        g = -eps * logsumexp((f[:, None] - C) / eps + la[:, None], axis=0)
        if it % 10 == 0 or it == max_iter - 1:
            logP = (f[:, None] + g[None, :] - C) / eps + la[:, None] + lb[None, :]
            err = float(np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum())
            if err <= tol:
                break
    else:
        raise IterationLimitError(f"Sinkhorn did not reach tol={tol} in {max_iter} iterations",
                                  last_gap=err)
    P = np.exp((f[:, None] + g[None, :] - C) / eps + la[:, None] + lb[None, :])
    P = _round_to_marginals(P, a, b)
    rows, cols = np.nonzero(P > 0)
    return _finish(C, rows, cols, P[rows, cols], -f, g, a, b, "entropic", eps)


def solve_discrete(cost, source, target, method="exact", epsilon=None, max_iter=5000,
                   tol=1e-9):
    """Solve the discrete Kantorovich problem between two atom clouds.

    Parameters
    ----------
    cost : CostModel or ndarray
        A cost model, or an explicit ``(n_source, n_target)`` cost matrix.
    source, target : AtomCloud
    method : {"exact", "entropic"}
        ``exact`` runs the network simplex and then picks canonical duals
        (midpoint of the optimal dual face). ``entropic`` runs log-domain
        Sinkhorn with regularization ``epsilon`` and rounds the plan to
        exact marginals.

    Returns
    -------
    TransportPlan
    """
    a = np.asarray(source.weights, dtype=float)
    b = np.asarray(target.weights, dtype=float)
    if len(a) * len(b) > MAX_CELLS:
        raise TooLargeError(f"{len(a)} x {len(b)} exceeds the {MAX_CELLS} cell limit")
    C = _cost_matrix(cost, source, target)
    if C.shape != (len(a), len(b)):
        raise InvalidParameterError("cost matrix shape does not match the clouds")
    if method == "exact":
        return _solve_exact(C, a, b)
    if method == "entropic":
        if epsilon is None or epsilon <= 0:
            raise InvalidParameterError("entropic solve needs epsilon > 0")
        return _solve_entropic(C, a, b, epsilon, max_iter, tol)
    raise InvalidParameterError(f"unknown method {method!r}")


def oracle_1d(cost, source, target, n_check=33):
    """Monotone (or antitone) rearrangement plan for one-dimensional costs.

    The orientation follows the sign of ``d^2 c / dx dy`` on the product
    box: negative gives the increasing matching, positive the decreasing one.
    Mass is split with the north-west corner rule along the sorted atoms.
    """
    if source.dim != 1 or target.dim != 1:
        raise NotApplicableError("oracle_1d needs one-dimensional clouds")
    xs = np.linspace(cost.source_box[0, 0], cost.source_box[1, 0], n_check)
    ys = np.linspace(cost.target_box[0, 0], cost.target_box[1, 0], n_check)
    cxy = cost.hess_xy(xs[:, None, None], ys[None, :, None])[..., 0, 0]
    if np.all(cxy < 0):
        sign = -1
    elif np.all(cxy > 0):
        sign = 1
    else:
        raise NotApplicableError("mixed derivative changes sign on the product box")
    C = cost.matrix(source.positions, target.positions)
    a, b = source.weights, target.weights
    si = np.argsort(source.positions[:, 0], kind="stable")
    tj = np.argsort(-sign * target.positions[:, 0], kind="stable")
    # north-west corner; a zero-mass link keeps the staircase connected when
    # a row and a column run out together
    rows, cols, mass = [], [], []
    i = j = 0
    ra, rb = a[si[0]], b[tj[0]]
    while True:
        m = min(ra, rb)
        rows.append(si[i])
        cols.append(tj[j])
        mass.append(m)
        ra -= m
        rb -= m
        if i + 1 < len(a) and (ra <= 1e-15 or j + 1 == len(b)):
            i += 1
            ra += a[si[i]]
        elif j + 1 < len(b):
            j += 1
            rb += b[tj[j]]
        else:
            break
    lam = np.zeros(len(b))
    psi = np.zeros(len(a))
    psi[rows[0]] = -C[rows[0], cols[0]]
    for k in range(1, len(rows)):
        if rows[k] == rows[k - 1]:
            lam[cols[k]] = psi[rows[k]] + C[rows[k], cols[k]]
        else:
            psi[rows[k]] = lam[cols[k]] - C[rows[k], cols[k]]
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    mass = np.asarray(mass)
    keep = mass > 0
    rows, cols, mass = rows[keep], cols[keep], mass[keep]
    psi = np.max(lam[None, :] - C, axis=1)
    return _finish(C, rows, cols, mass, psi, lam, a, b, "oracle-1d", None)


# -- potentials and maps ------------------------------------------------------

def _as_grid(grid, box):
    if isinstance(grid, Grid):
        return grid
    if isinstance(grid, dict):
        return Grid.from_box(grid.get("box", box), grid["resolution"])
    return Grid.from_box(box, int(grid))


def reconstruct_potential(plan, cost, target, grid, anchor=None):
    """``u(x) = max_j (-c(x, y_j) + lam_j)`` normalized to vanish at ``anchor``.

    ``grid`` is a :class:`Grid`, a resolution, or ``{"box", "resolution"}``.
    The anchor defaults to the center of the source box. Entropic plans are
    refused when ``epsilon`` exceeds ``1e-3`` times the cost scale.
    """
    if plan.target_duals is None:
        raise InvalidParameterError("plan has no duals")
    if plan.method == "entropic" and plan.epsilon > 1e-3 * cost.scale():
        raise InvalidParameterError(
            f"entropic duals with epsilon={plan.epsilon} are too coarse for sections "
            f"(limit {1e-3 * cost.scale():.3g})")
    grid = _as_grid(grid, cost.source_box)
    if anchor is None:
        anchor = cost.source_box.mean(axis=0)
    return PotentialField(cost, grid, atoms=target.positions, lambdas=plan.target_duals,
                          anchor=anchor, method=plan.method, epsilon=plan.epsilon)


def transport_map(u, x, step=None):
    """``T(x) = c_exp(x, grad u(x))`` with a centered-difference gradient.

    Raises ``NondifferentiableError`` when one-sided slopes disagree by more
    than the kink threshold.
    """
    box = frechet_subdiff(u, x, step)
    if not box.single_valued:
        raise NondifferentiableError(
            f"u has a kink at {np.asarray(x).tolist()} (slope gaps {box.gaps.tolist()})",
            point=np.asarray(x, dtype=float), gap=float(np.max(np.abs(box.gaps))))
    return c_exp(u.cost, np.asarray(x, dtype=float), box.gradient)


def transport_map_grid(u, multiplier=1):
    """``T`` at every cell center (NaN where the stencil leaves the grid) and the kink mask."""
    grad = gradient_grid(u, multiplier)
    ok = np.all(np.isfinite(grad), axis=-1)
    T = np.full(grad.shape, np.nan)
    if ok.any():
        T[ok] = c_exp(u.cost, u.grid.centers[ok], grad[ok])
    return T, kink_mask(u)


@dataclass
class ResidualField:
    values: np.ndarray
    mask: np.ndarray
    step: float

    def median_abs(self):
        v = np.abs(self.values[self.mask])
        return float(np.median(v)) if v.size else float("nan")

    def max_abs(self):
        v = np.abs(self.values[self.mask])
        return float(v.max()) if v.size else float("nan")


def ma_residual(u, cost, f_density, g_density, region=None, multiplier=1):
    """Per-cell Monge-Ampere residual.

    ``det(D^2u + D_xx c(x, T)) - |det D_xy c(x, T)| f(x) / g(T)`` with the
    Hessian and gradient taken at step ``multiplier * spacing``. Cells are
    masked when outside ``region``, when the stencil is invalid or touches a
    kink, or when ``g(T) < 1e-12``.
    """
    from .regularity.hessian import hessian_field

    H = hessian_field(u, multiplier)
    grid = u.grid
    mask = H.valid.copy()
    if region is not None:
        mask &= np.asarray(region, dtype=bool)
    grad = gradient_grid(u, multiplier)
    mask &= np.all(np.isfinite(grad), axis=-1)
    out = np.full(grid.shape, np.nan)
    if not mask.any():
        return ResidualField(out, mask, H.step)
    x = grid.centers[mask]
    T = c_exp(cost, x, grad[mask])
    gT = np.asarray(g_density(T), dtype=float)
    fx = np.asarray(f_density(x), dtype=float)
    good = gT >= 1e-12
    hxx, hxy, _ = cost.hessians(x, T)
    lhs = np.linalg.det(H.matrices[mask] + hxx)
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = np.abs(np.linalg.det(hxy)) * fx / np.where(good, gT, 1.0)
    res = np.where(good, lhs - rhs, np.nan)
    out[mask] = res
    mask[mask] = good
    return ResidualField(out, mask, H.step)


# -- plan files ---------------------------------------------------------------

def write_plan(path, plan):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,j,mass\n")
        for i, j, m in zip(plan.rows, plan.cols, plan.mass):
            fh.write(f"{int(i)},{int(j)},{float(m)!r}\n")


def read_plan(path):
    """Return ``(rows, cols, mass)`` from a plan CSV."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"plan artifact {path} not found") from exc
    return data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2]


def cloud_from_spec(spec, n_atoms, seed=0, jitter=False):
    return sample_density(spec, n_atoms, seed=seed, jitter=jitter)


__all__ = ["AtomCloud", "TransportPlan", "ResidualField", "sample_density", "density_function",
           "density_box", "solve_discrete", "oracle_1d", "reconstruct_potential",
           "transport_map", "transport_map_grid", "ma_residual", "write_plan", "read_plan",
           "CostModel"]

"""Hulls, det-1 normalization of sections, convex envelopes and Vitali selection."""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateError, InvalidParameterError


# -- hulls ------------------------------------------------------------------

@dataclass
class Polytope:
    """Convex hull of a point set.

    ``vertices`` index into ``points``. ``facets`` are index tuples (empty for
    degenerate hulls). ``dim`` is the affine dimension actually spanned.
    """

    points: np.ndarray
    vertices: np.ndarray
    facets: np.ndarray
    equations: np.ndarray
    dim: int
    degenerate: bool

    def contains(self, x, tol=1e-9):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.degenerate:
            raise InvalidParameterError("containment is only defined for full-dimensional hulls")
        return np.all(x @ self.equations[:, :-1].T + self.equations[:, -1] <= tol, axis=1)

    @property
    def volume(self):
        if self.degenerate:
            return 0.0
        return float(ConvexHull(self.points[self.vertices]).volume)


def _affine_rank(points, rtol=1e-10):
    centered = points - points.mean(axis=0)
    if len(points) < 2:
        return 0, None
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(1.0, float(np.abs(points).max()))
    r = int(np.count_nonzero(s > rtol * scale * np.sqrt(len(points))))
    return r, vt


def convex_hull(points):
    """Convex hull via Qhull, with a rank test for lower-dimensional inputs.

    Degenerate inputs return the hull of the projection onto the spanned
    affine subspace, with ``degenerate=True`` and no facets.

    Examples
    --------
    >>> P = convex_hull([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]])
    >>> sorted(P.vertices.tolist())
    [0, 1, 2, 3]
    >>> convex_hull([[0, 0], [1, 1], [2, 2]]).vertices.tolist()
    [0, 2]
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[1]
    r, vt = _affine_rank(pts)
    empty = np.zeros((0, n), dtype=int)
    if r == n and len(pts) > n:
        h = ConvexHull(pts)
        return Polytope(pts, np.sort(h.vertices), h.simplices, h.equations, n, False)
    if r == 0:
        return Polytope(pts, np.array([0]), empty, np.zeros((0, n + 1)), 0, True)
    proj = (pts - pts.mean(axis=0)) @ vt[:r].T
    if r == 1:
        verts = np.unique([int(np.argmin(proj[:, 0])), int(np.argmax(proj[:, 0]))])
    else:
        verts = np.sort(ConvexHull(proj).vertices)
    return Polytope(pts, verts, empty, np.zeros((0, n + 1)), r, True)


# -- ellipsoids and affine maps ----------------------------------------------

@dataclass
class AffineMap:
    """``z -> A z + t`` with ``det A = 1``."""

    A: np.ndarray
    t: np.ndarray
    Ainv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        det = np.linalg.det(self.A)
        if abs(det - 1.0) > 1e-9:
            raise InvalidParameterError(f"affine map must have det 1, got {det!r}")
        self.Ainv = np.linalg.inv(self.A)

    def __call__(self, z):
        return np.asarray(z, dtype=float) @ self.A.T + self.t

    def inverse(self, x):
        return (np.asarray(x, dtype=float) - self.t) @ self.Ainv.T

    @property
    def norm_A(self):
        return float(np.linalg.norm(self.A, 2))

    @property
    def norm_Ainv(self):
        return float(np.linalg.norm(self.Ainv, 2))


def _khachiyan(P, Qm, tol, max_iter):
    m, n = P.shape
    u = np.full(m, 1.0 / m)
    d1 = n + 1
    for _ in range(max_iter):
        X = (Qm * u) @ Qm.T
        M = np.einsum("ij,ij->j", Qm, np.linalg.solve(X, Qm))
        j = int(np.argmax(M))
        active = u > 0
        k = int(np.flatnonzero(active)[np.argmin(M[active])])
        up = M[j] / d1 - 1.0
        down = 1.0 - M[k] / d1
        if max(up, down) <= tol:
            break
        if up >= down:
            beta = (M[j] - d1) / (d1 * (M[j] - 1.0))
            u *= 1.0 - beta
            u[j] += beta
        else:
            cap = -u[k] / (1.0 - u[k]) if u[k] < 1 else -1.0
            beta = (M[k] - d1) / (d1 * (M[k] - 1.0)) if M[k] > 1 else cap
            beta = max(beta, cap)
            u *= 1.0 - beta
            u[k] = max(u[k] + beta, 0.0)
    return u


def _barrier_newton(P, Qm, tol, max_iter):
    m, n = P.shape
    d1 = n + 1
    u = np.full(m, 1.0 / m)
    mu = 1.0 / m
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, m] = kkt[m, :m] = 1.0

    def merit(w):
        sign, logdet = np.linalg.slogdet((Qm * w) @ Qm.T)
        return -logdet - mu * np.log(w).sum() if sign > 0 else np.inf

    for _ in range(max_iter):
        K = Qm.T @ np.linalg.solve((Qm * u) @ Qm.T, Qm)
        M = np.diag(K)
        if mu * m <= 0.5 * tol * d1 and M.max() / d1 - 1.0 <= tol:
            break
        g = -M - mu / u
        kkt[:m, :m] = K * K
        kkt[np.arange(m), np.arange(m)] += mu / u ** 2
        du = np.linalg.solve(kkt, np.r_[-g, 0.0])[:m]
        dec = -g @ du
        neg = du < 0
        t = min(1.0, 0.99 * float(np.min(-u[neg] / du[neg]))) if neg.any() else 1.0
        f0 = merit(u)
        while t > 1e-12 and merit(u + t * du) > f0 - 0.25 * t * dec:
            t *= 0.5
        u = u + t * du
        if dec < 1e-9 or t * np.abs(du).max() < 1e-14:
            mu *= 0.1
    return u


def mvee(points, tol=1e-7, max_iter=None, method="newton"):
    """Minimum-volume enclosing ellipsoid ``{x : (x-c)^T Q (x-c) <= 1}``.

    Both methods solve the D-optimal design dual over weights ``u`` on the
    points and stop once ``max_i M_i <= (n+1)(1+tol)`` with
    ``M_i = q_i^T X(u)^{-1} q_i``. ``newton`` follows the log-barrier
    central path (tens of iterations); ``khachiyan`` is the classical
    barycentric scheme with Todd-Yildirim away steps (slow on lattice
    point sets with many near-support points). Returns ``(c, Q)``.
    """
    P0 = np.atleast_2d(np.asarray(points, dtype=float))
    # the problem is affine-equivariant; center and scale for conditioning
    shift = P0.mean(axis=0)
    scale = float(np.abs(P0 - shift).max()) or 1.0
    P = (P0 - shift) / scale
    m, n = P.shape
    Qm = np.vstack([P.T, np.ones(m)])
    if method == "newton":
        try:
            with np.errstate(divide="raise", invalid="raise"):
                u = _barrier_newton(P, Qm, tol, max_iter or 500)
        except (np.linalg.LinAlgError, FloatingPointError):
            u = _khachiyan(P, Qm, tol, 200_000)
    elif method == "khachiyan":
        u = _khachiyan(P, Qm, tol, max_iter or 200_000)
    else:
        raise InvalidParameterError(f"unknown MVEE method {method!r}")
    c = u @ P
    S = (P * u[:, None]).T @ P - np.outer(c, c)
    return shift + scale * c, np.linalg.inv(S) / (n * scale ** 2)


@dataclass
class SandwichReport:
    r_out: float
    r_in: float
    norm_size: float
    norm_A: float
    norm_Ainv: float
    h: float
    touches_boundary: bool

    @property
    def ratio(self):
        return self.r_out / self.r_in if self.r_in > 0 else float("inf")

    def __getitem__(self, key):
        return self.as_dict()[key]

    def as_dict(self):
        return {"r_out": self.r_out, "r_in": self.r_in, "ratio": self.ratio,
                "norm_size": self.norm_size, "norm_A": self.norm_A,
                "norm_Ainv": self.norm_Ainv, "h": self.h,
                "touches_boundary": self.touches_boundary}


def _outside_window(cells):
    """Centers (as index arrays) of non-section cells in the padded bounding box."""
    idx = np.argwhere(cells)
    lo = idx.min(axis=0) - 1
    hi = idx.max(axis=0) + 2
    shape = np.asarray(cells.shape)
    sub_lo = np.maximum(lo, 0)
    sub_hi = np.minimum(hi, shape)
    window = np.zeros(tuple(hi - lo), dtype=bool)
    inner = tuple(slice(a - l, b - l) for a, b, l in zip(sub_lo, sub_hi, lo))
    window[inner] = cells[tuple(slice(a, b) for a, b in zip(sub_lo, sub_hi))]
    return np.argwhere(~window) + lo


def john_normalize(section, h=None):
    """Det-1 affine normalization of a section from its enclosing ellipsoid.

    The minimum-volume ellipsoid of the section's cell centers gives
    ``A = Q^{-1/2}`` rescaled to ``det A = 1``, centered at the ellipsoid
    center. ``r_out`` is the smallest radius with ``A(B_r)`` covering every
    section cell center; ``r_in`` the largest with ``A(B_r)`` free of
    non-section cell centers (cells beyond the grid count as outside).
    ``norm_size = ||A^{-1}||^2``.

    The map and report are also stored on the section.
    """
    grid = section.grid
    n = grid.ndim
    h = section.h if h is None else float(h)
    pts = section.points
    if len(pts) < n + 1:
        raise DegenerateError(f"section has {len(pts)} cells, needs {n + 1}",
                              hull=convex_hull(pts) if len(pts) else None)
    hull = convex_hull(pts)
    if hull.degenerate:
        raise DegenerateError("section cells do not span full dimension", hull=hull)
    c, Q = mvee(pts[hull.vertices])
    w, V = np.linalg.eigh(Q)
    root = (V / np.sqrt(w)) @ V.T
    A = root / np.linalg.det(root) ** (1.0 / n)
    amap = AffineMap(A, c)
    r_out = float(np.linalg.norm(amap.inverse(pts), axis=1).max())
    out_idx = _outside_window(section.cells)
    outside = np.asarray(grid.lo) + (out_idx + 0.5) * grid.spacing
    r_in = float(np.linalg.norm(amap.inverse(outside), axis=1).min()) if len(outside) else np.inf
    report = SandwichReport(r_out, r_in, amap.norm_Ainv ** 2, amap.norm_A, amap.norm_Ainv, h,
                            section.touches_boundary)
    section.affine = amap
    section.sandwich = report.as_dict()
    return amap, report


# -- convex envelope ----------------------------------------------------------

@dataclass
class EnvelopeResult:
    values: np.ndarray
    contact: np.ndarray
    tol: float
    domain: np.ndarray


_ENV_BLOCK = 4_000_000


def convex_envelope(phi, domain, grid):
    """Largest convex minorant of ``phi`` over the cells in ``domain``.

    The lower facets of the hull of the lifted graph ``(x, phi(x))`` give
    supporting planes; the envelope at a cell is the largest plane value
    there. Cells outside ``domain`` get NaN.

    Parameters
    ----------
    phi : ndarray
        Values on ``grid``.
    domain : ndarray of bool
        Cell set, expected convex.
    grid : Grid
    """
    phi = np.asarray(phi, dtype=float)
    domain = np.asarray(domain, dtype=bool)
    n = grid.ndim
    if n == 3 and domain.sum() > 100_000:
        raise InvalidParameterError("3-d envelopes are limited to 1e5 cells")
    X = grid.centers[domain]
    f = phi[domain]
    if len(f) < n + 2:
        raise DegenerateError(f"envelope needs at least {n + 2} cells, got {len(f)}")
    out = np.full(phi.shape, np.nan)
    rng = float(f.max() - f.min())
    lifted = np.column_stack([X, f])
    r, _ = _affine_rank(lifted)
    if r <= n:
        # graph lies in a hyperplane: phi is affine on the domain
        env = f.copy()
        tol = 1e-9 * max(rng, 1.0)
    else:
        try:
            hull = ConvexHull(lifted)
        except QhullError as exc:
            raise DegenerateError("domain cells do not span full dimension") from exc
        eq = hull.equations
        lower = eq[eq[:, n] < -1e-12]
        # plane value: phi = -(a.x + off) / b
        slopes = -lower[:, :n] / lower[:, n:n + 1]
        offs = -lower[:, n + 1] / lower[:, n]
        env = np.full(len(f), -np.inf)
        step = max(1, _ENV_BLOCK // max(1, len(lower)))
        for s in range(0, len(f), step):
            vals = X[s:s + step] @ slopes.T + offs
            env[s:s + step] = vals.max(axis=1)
        verts = hull.simplices[eq[:, n] < -1e-12]
        vx = lifted[verts]
        interp = np.abs(np.einsum("fkn,fn->fk", vx[..., :n], slopes) + offs[:, None] - vx[..., n])
        tol = 1e-9 * max(rng, 1.0) + float(interp.max(initial=0.0))
        env = np.minimum(env, f)
    out[domain] = env
    contact = np.zeros(phi.shape, dtype=bool)
    contact[domain] = env >= f - tol
    return EnvelopeResult(out, contact, tol, domain)


# -- Vitali covering ----------------------------------------------------------

@dataclass
class CoverReport:
    selected: list
    sigma: float
    C_prime: float
    disjoint_ok: bool
    cover_ok: bool
    uncovered: list

    def as_dict(self):
        return {"selected": list(map(int, self.selected)), "sigma": self.sigma,
                "C_prime": self.C_prime, "disjoint_ok": self.disjoint_ok,
                "cover_ok": self.cover_ok, "uncovered": list(map(int, self.uncovered))}

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True)


def vitali_cover(candidates, sigma=0.2, C_prime=9.0):
    """Greedy Vitali selection of sections.

    Candidates are processed by decreasing height (ties by index). One is
    kept when its section at height ``sigma * h`` is cell-disjoint from the
    shrunk sections kept so far. The report then checks pairwise
    disjointness of the shrunk selection and that every candidate center
    lies in some selected section enlarged to height ``C_prime * h``.

    ``candidates`` holds sections or ``(center, section)`` pairs.
    Returns ``(selected_indices, CoverReport)``.
    """
    if not 0 < sigma < 1:
        raise InvalidParameterError("sigma must lie in (0, 1)")
    secs = [c[1] if isinstance(c, tuple) else c for c in candidates]
    if not secs:
        return [], CoverReport([], sigma, C_prime, True, True, [])
    order = sorted(range(len(secs)), key=lambda i: (-secs[i].h, i))
    taken = np.zeros(secs[0].grid.shape, dtype=bool)
    selected, shrunk = [], []
    for i in order:
        s = secs[i].resized(sigma * secs[i].h)
        if not (taken & s.cells).any():
            selected.append(i)
            shrunk.append(s)
            taken |= s.cells
    total = sum(s.count for s in shrunk)
    disjoint_ok = total == int(taken.sum())
    covered = np.zeros_like(taken)
    for i in selected:
        covered |= secs[i].resized(C_prime * secs[i].h).cells
    uncovered = [i for i, s in enumerate(secs) if not covered[s.index0]]
    return selected, CoverReport(selected, sigma, C_prime, disjoint_ok, not uncovered, uncovered)

"""Boundary section heights and dyadic section families."""

from dataclasses import dataclass, field

import numpy as np

from ..geometry import vitali_cover
from ..grid import boundary_cells
from .sections import SectionMaker


@dataclass
class BoundaryProfile:
    """``hbar`` per cell of ``X`` (NaN elsewhere) and per-band family sums."""

    hbar: np.ndarray
    interior: np.ndarray
    families: list
    p: float
    rate: float = None
    domain: np.ndarray = field(default=None, repr=False)

    def csv_rows(self):
        head = ["k", "h_band_lo", "h_band_hi", "n_sections", "power_sum_p"]
        return head, [[f["k"], f["lo"], f["hi"], f["n_sections"], f["power_sum"]]
                      for f in self.families]


def is_convex_cells(mask, grid):
    """Hull of the cell centers contains no non-mask center beyond one cell layer."""
    from ..geometry import convex_hull
    pts = grid.centers[mask]
    hull = convex_hull(pts)
    if hull.degenerate:
        return False
    inside = hull.contains(grid.flat_centers, tol=1e-9).reshape(grid.shape)
    from ..grid import dilate
    return not np.any(inside & ~dilate(mask, 1))


def section_heights(maker, X, cells):
    """``hbar(x) = min`` of the section expression over cells outside ``X``."""
    out = np.empty(len(cells))
    outside = ~X
    for k, idx in enumerate(cells):
        e = maker.expression(tuple(idx))
        out[k] = float(e[outside].min()) if outside.any() else np.inf
    return out


def fit_rate(families):
    ks = np.array([f["k"] for f in families if f["power_sum"] > 0], dtype=float)
    vs = np.array([f["power_sum"] for f in families if f["power_sum"] > 0])
    if len(ks) < 2:
        return None
    slope = np.polyfit(ks, np.log(vs), 1)[0]
    return float(np.exp(slope))


def boundary_heights(u, cost, X_domain, h0, p=2.0, K_bands=6, multiplier=1, hess=None,
                     sigma=0.2, C_prime=9.0, max_family=200, seed=0, cells=None):
    """Largest ``h`` with ``S_h(x)`` inside ``X`` for cells ``x`` of ``X``.

    ``hbar`` is computed exactly as the smallest value of the section
    expression over cells outside ``X``; cells of ``X`` with a neighbor
    outside get ``hbar = 0``; values at or above ``h0`` mark the cell as
    interior and are stored as ``h0``. Family ``k`` gathers the cells with
    ``h0 2^{-k-1} <= hbar <= h0 2^{-k}``; its Vitali selection (at most
    ``max_family`` seeded candidates) gives the sum of
    ``int_S ||D^2u||^p`` over the selected sections.

    ``cells`` restricts the computation to given indices of ``X``.
    """
    grid = u.grid
    X = np.asarray(X_domain, dtype=bool)
    maker = SectionMaker(u, cost, multiplier)
    edge = boundary_cells(X)
    idx = np.argwhere(X) if cells is None else np.asarray(cells, dtype=int).reshape(-1, grid.ndim)
    hbar = np.full(grid.shape, np.nan)
    vals = section_heights(maker, X, idx)
    vals = np.where(edge[tuple(idx.T)], 0.0, vals)
    interior = np.zeros(grid.shape, dtype=bool)
    capped = vals >= h0
    vals = np.minimum(vals, h0)
    hbar[tuple(idx.T)] = vals
    interior[tuple(idx[capped].T)] = True
    families = []
    if hess is None:
        from .hessian import hessian_field
        hess = hessian_field(u, multiplier)
    power = np.where(hess.valid, hess.norm, 0.0) ** p * grid.cell_volume
    rng = np.random.default_rng(seed)
    for k in range(K_bands):
        lo, hi = h0 * 2.0 ** (-k - 1), h0 * 2.0 ** (-k)
        sel = (vals >= lo) & (vals <= hi) & ~capped
        members = idx[sel]
        if len(members) > max_family:
            members = members[np.sort(rng.choice(len(members), max_family, replace=False))]
        secs = [maker.section(tuple(c), hbar[tuple(c)]) for c in members]
        chosen, _ = vitali_cover(secs, sigma, C_prime) if secs else ([], None)
        total = float(sum(power[secs[i].cells].sum() for i in chosen))
        families.append({"k": k, "lo": lo, "hi": hi, "n_sections": len(chosen),
                         "power_sum": total})
    return BoundaryProfile(hbar, interior, families, float(p), fit_rate(families), X)

"""Super-level sets of the Hessian norm and their decay across levels."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidParameterError
from ..geometry import vitali_cover
from .density import section_density_estimate
from .hessian import hessian_field
from .sections import SectionMaker


@dataclass
class ShapeConstants:
    """Measured ``theta``, derived ``beta = 1/(4 theta) - 1/2`` and ``C_hat``."""

    theta: float
    beta: float
    C_hat: float
    samples: int


def measure_shape_constants(maker, center, radius, heights=(0.1, 0.025, 0.00625),
                            count=8, seed=0, beta_cap=50.0):
    """``theta = max log||A|| / log(1/h)`` and ``C_hat = max diam / (sqrt(h) ||A|| a^-beta)``."""
    grid = maker.grid
    rng = np.random.default_rng(seed)
    cells = np.argwhere(grid.ball_mask(center, radius))
    if len(cells) == 0:
        raise InvalidParameterError("empty ball for shape constants")
    pick = cells[rng.choice(len(cells), size=min(count, len(cells)), replace=False)]
    rec = []
    for idx in pick:
        for h in heights:
            s = maker.normalized(idx, h)
            if s is None or s.touches_boundary:
                continue
            pts = s.points
            diam = float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1))) \
                if len(pts) < 3000 else float(np.linalg.norm(pts.max(0) - pts.min(0)))
            rec.append((h, s.sandwich["norm_A"], s.norm_size, diam))
    if not rec:
        return ShapeConstants(float("nan"), beta_cap, 1.0, 0)
    theta = max(np.log(max(nA, 1.0)) / np.log(1.0 / h) for h, nA, _, _ in rec)
    theta = max(theta, 1e-3)
    beta = min(beta_cap, 1.0 / (4.0 * theta) - 0.5) if theta < 0.5 else 0.0
    c_hat = max(d * a ** beta for _, _, a, d in rec)
    return ShapeConstants(float(theta), float(beta), float(c_hat), len(rec))


def radii(rho0, C_hat, M, beta, K_levels):
    """``rho_k = rho_{k-1} - C_hat M^{-k beta}``; stops once below ``rho0 / 2``."""
    out = [float(rho0)]
    for k in range(1, K_levels + 1):
        r = out[-1] - C_hat * M ** (-k * beta)
        if r < 0.5 * rho0:
            break
        out.append(float(r))
    return out


@dataclass
class LevelRow:
    k: int
    rho: float
    measure: float
    ratio: float = None
    sections_selected: int = 0
    mean_bad_fraction: float = None
    covering_bound: float = None
    band_measure: float = None
    candidates: int = 0
    bisection_failures: int = 0


@dataclass
class LevelSetTable:
    M: float
    N: float
    rows: list
    shape: ShapeConstants
    domain_measure: float
    aborted: bool
    masks: list = field(default_factory=list, repr=False)

    @property
    def measures(self):
        return [r.measure for r in self.rows]

    @property
    def ratios(self):
        return [r.ratio for r in self.rows if r.ratio is not None]

    def max_ratio(self):
        r = self.ratios
        return max(r) if r else 0.0

    def fraction(self, k):
        if k >= len(self.rows) or self.domain_measure == 0:
            return 0.0
        return self.rows[k].measure / self.domain_measure

    def csv_rows(self):
        head = ["k", "rho_k", "measure", "ratio", "sections_selected", "mean_bad_fraction"]
        body = [[r.k, r.rho, r.measure, "" if r.ratio is None else r.ratio, r.sections_selected,
                 "" if r.mean_bad_fraction is None else r.mean_bad_fraction] for r in self.rows]
        return head, body


def _normalized_size(maker, idx, h):
    s = maker.normalized(idx, h)
    return (None, s) if s is None else (s.norm_size, s)


def find_section(maker, idx, target, h0, tau=2.0, rungs=12, bisections=12):
    """Section at ``idx`` whose normalized size lies in ``[target/tau, tau*target]``.

    Scans ``h0 * 2^-i`` first, then bisects geometrically between the last
    rung below the band and the first one above. Returns ``None`` on failure.
    """
    lo_band, hi_band = target / tau, target * tau
    prev = None
    for i in range(rungs):
        h = h0 * 2.0 ** -i
        a, s = _normalized_size(maker, idx, h)
        if a is None:
            continue
        if lo_band <= a <= hi_band:
            return s
        if a > hi_band and prev is not None and prev[0] < lo_band:
            h_big, h_small = prev[1], h
            for _ in range(bisections):
                hm = np.sqrt(h_big * h_small)
                am, sm = _normalized_size(maker, idx, hm)
                if am is None:
                    return None
                if lo_band <= am <= hi_band:
                    return sm
                if am < lo_band:
                    h_big = hm
                else:
                    h_small = hm
            return None
        prev = (a, h)
    return None


def levelset_decay(u, cost, M, N, K_levels, rho0, center=None, multiplier=1, h0=0.1,
                   sigma=0.2, C_prime=9.0, seed=0, max_candidates=64, hess=None,
                   shape=None):
    """Level-set table ``D_k = {x in B_rho_k : ||D^2u|| >= M^k}``.

    For each level the covering step of the decay argument is replayed on
    ``D_{k+1}``: every candidate cell gets a section of normalized size
    about ``N M^k``, the sections are Vitali-selected, and the selected ones
    feed the density estimate and the covering bound
    ``sum |S_i cap {||D^2u|| >= N^2 M^k}|``. At most ``max_candidates``
    cells (seeded draw) are used per level.
    """
    if M < N ** 2:
        raise InvalidParameterError(f"need M >= N^2, got M={M}, N={N}")
    if M <= 1:
        raise InvalidParameterError("M must exceed 1")
    grid = u.grid
    center = grid.box.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    H = hess if hess is not None else hessian_field(u, multiplier)
    maker = SectionMaker(u, cost, multiplier)
    if shape is None:
        shape = measure_shape_constants(maker, center, 0.5 * rho0, seed=seed)
    rho = radii(rho0, shape.C_hat, M, shape.beta, K_levels)
    aborted = len(rho) < K_levels + 1
    vol = grid.cell_volume
    norm = np.where(H.valid, H.norm, -np.inf)
    masks = [grid.ball_mask(center, r) & H.valid & (norm >= M ** k) for k, r in enumerate(rho)]
    domain = float((grid.ball_mask(center, rho0) & H.valid).sum() * vol)
    rows = [LevelRow(k, rho[k], float(m.sum() * vol)) for k, m in enumerate(masks)]
    rng = np.random.default_rng(seed)
    for k in range(len(rows) - 1):
        cur, nxt = rows[k], rows[k + 1]
        cur.ratio = nxt.measure / cur.measure if cur.measure > 0 else None
        cells = np.argwhere(masks[k + 1])
        if len(cells) == 0:
            continue
        if len(cells) > max_candidates:
            cells = cells[np.sort(rng.choice(len(cells), max_candidates, replace=False))]
        found, failures = [], 0
        for idx in cells:
            s = find_section(maker, tuple(idx), N * M ** k, h0)
            if s is None:
                failures += 1
            else:
                found.append(s)
        cur.candidates = len(cells)
        cur.bisection_failures = failures
        if not found:
            continue
        selected, _ = vitali_cover(found, sigma, C_prime)
        bads, cover, band = [], 0.0, 0.0
        for i in selected:
            s = found[i]
            if s.count >= 10:
                bads.append(section_density_estimate(u, cost, s, N, hess=H).bad_fraction)
            sn = np.where(H.valid & s.cells, H.norm, -np.inf)
            cover += float((sn >= N ** 2 * M ** k).sum() * vol)
            shrunk = s.resized(sigma * s.h)
            bn = np.where(H.valid & shrunk.cells, H.norm, np.nan)
            band += float(((bn >= M ** k) & (bn <= N ** 2 * M ** k)).sum() * vol)
        cur.sections_selected = len(selected)
        cur.mean_bad_fraction = float(np.mean(bads)) if bads else None
        cur.covering_bound = cover
        cur.band_measure = band
    return LevelSetTable(float(M), float(N), rows, shape, domain, aborted, masks)

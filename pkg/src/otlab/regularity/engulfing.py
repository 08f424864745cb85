"""Empirical engulfing constants of sections."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidParameterError
from .sections import SectionMaker

C_MIN, C_MAX = 1.0, 64.0


@dataclass
class EngulfingTable:
    """Per-height statistics of the minimal engulfing constant.

    ``rows`` holds one dict per height with keys ``h, samples, skipped,
    capped, max, q50, q90``. ``C_prime`` is the square of the overall max.
    """

    rows: list
    values: dict = field(repr=False)

    @property
    def max_C(self):
        finite = [r["max"] for r in self.rows if r["samples"]]
        return max(finite) if finite else float("nan")

    @property
    def C_prime(self):
        return self.max_C ** 2

    def variation(self):
        """Largest relative deviation of the per-height max from their mean."""
        m = np.array([r["max"] for r in self.rows if r["samples"]])
        if m.size == 0:
            return float("nan")
        return float(np.max(np.abs(m - m.mean())) / m.mean())

    def csv_rows(self):
        head = ["h", "samples", "skipped", "capped", "max", "q50", "q90"]
        return head, [[r[k] for k in head] for r in self.rows]


def minimal_engulfing(maker, section, x1_index, h):
    """Smallest ``C`` in ``[1, 64]`` with ``section`` inside ``S_{Ch}(x1)``.

    Computed directly as the largest value of the section expression of
    ``x1`` over the cells of ``section``, divided by ``h``.
    """
    e1 = maker.expression(x1_index)
    worst = float(e1[section.cells].max())
    c = max(C_MIN, worst / h) if h > 0 else C_MIN
    return min(c, C_MAX), c > C_MAX


def sample_centers(grid, center, radius, count, rng, mask=None):
    ball = grid.ball_mask(center, radius)
    if mask is not None:
        ball &= mask
    cells = np.argwhere(ball)
    if len(cells) == 0:
        raise InvalidParameterError("no cells in the sampling ball")
    pick = rng.choice(len(cells), size=count, replace=len(cells) < count)
    return [tuple(c) for c in cells[pick]]


def engulfing_estimate(u, cost, samples, h_list, seed=0, center=None, radius=0.3,
                       h_cap=0.25, multiplier=1):
    """Minimal engulfing constants over sampled pairs ``(x0, x1 in S_h(x0))``.

    Centers ``x0`` are drawn in the ball of ``radius`` about ``center``
    (default: grid center); for each height the same centers are reused and
    ``x1`` is drawn uniformly among the cells of ``S_h(x0)``. Sections that
    touch the grid face are skipped and counted.
    """
    if any(h > h_cap or h <= 0 for h in h_list):
        raise InvalidParameterError(f"heights must lie in (0, {h_cap}]")
    grid = u.grid
    center = grid.box.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    rng = np.random.default_rng(seed)
    maker = SectionMaker(u, cost, multiplier)
    centers = sample_centers(grid, center, radius, samples, rng)
    rows, values = [], {}
    for h in h_list:
        cs, skipped, capped = [], 0, 0
        for idx in centers:
            s = maker.section(idx, h)
            if s.count == 0 or s.touches_boundary:
                skipped += 1
                continue
            cells = np.argwhere(s.cells)
            x1 = tuple(cells[rng.integers(len(cells))])
            c, cap = minimal_engulfing(maker, s, x1, h)
            capped += int(cap)
            cs.append(c)
        cs = np.asarray(cs)
        values[h] = cs
        rows.append({"h": float(h), "samples": int(cs.size), "skipped": skipped,
                     "capped": capped,
                     "max": float(cs.max()) if cs.size else float("nan"),
                     "q50": float(np.quantile(cs, 0.5)) if cs.size else float("nan"),
                     "q90": float(np.quantile(cs, 0.9)) if cs.size else float("nan")})
    return EngulfingTable(rows, values)

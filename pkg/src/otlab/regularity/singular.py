"""Detection of the singular set of a discrete potential."""

from dataclasses import dataclass

import numpy as np

from ..cconvex import kink_mask
from ..grid import Grid, dilate
from .sections import SectionMaker


@dataclass
class SingularMask:
    """Excluded cells ``Sigma`` (after a one-cell dilation) and the raw predicate hits."""

    grid: Grid
    cells: np.ndarray
    raw: np.ndarray
    kinks: np.ndarray
    thresholds: dict

    @property
    def measure(self):
        return float(self.cells.sum() * self.grid.cell_volume)

    def fraction(self, region):
        return float((self.cells & region).sum() / max(1, region.sum()))


def singular_detect(u, cost, h0, ratio_cap=9.0, region=None, multiplier=1, rungs=9):
    """Cells where ``u`` fails to be regular, dilated by one cell.

    A cell of ``region`` is flagged when one-sided slopes disagree beyond
    the kink threshold, or when for every height ``h0 * 2^-i``
    (``i = 0..rungs-1``) the section is degenerate or its sandwich ratio
    exceeds ``ratio_cap``.
    """
    grid = u.grid
    region = np.ones(grid.shape, dtype=bool) if region is None else np.asarray(region, bool)
    kinks = kink_mask(u) & region
    raw = kinks.copy()
    maker = SectionMaker(u, cost, multiplier)
    heights = [h0 * 2.0 ** -i for i in range(rungs)]
    for idx in np.argwhere(region & ~kinks):
        idx = tuple(idx)
        for h in heights:
            s = maker.normalized(idx, h)
            if s is not None and s.sandwich["ratio"] <= ratio_cap:
                break
        else:
            raw[idx] = True
    cells = dilate(raw, 1) & region
    thr = {"kink_gap": 10.0 * grid.spacing * (1.0 + u.semiconvexity()),
           "ratio_cap": float(ratio_cap), "h0": float(h0), "rungs": int(rungs)}
    return SingularMask(grid, cells, raw, kinks, thr)

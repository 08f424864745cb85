"""Step-scale Hessians of grid potentials."""

from dataclasses import dataclass

import numpy as np

from ..cconvex import kink_mask, second_differences
from ..grid import Grid, dilate


@dataclass
class HessianField:
    """Centered second-difference Hessian at step ``t = multiplier * spacing``.

    ``matrices`` has shape ``grid.shape + (n, n)`` and is NaN where the
    stencil leaves the grid. ``norm`` is the spectral norm, ``frobenius`` is
    kept for diagnostics only. ``valid`` drops the outer margin and, when
    kinks are masked, every cell whose stencil reaches a kink cell.
    """

    grid: Grid
    multiplier: int
    matrices: np.ndarray
    norm: np.ndarray
    frobenius: np.ndarray
    valid: np.ndarray
    semiconvexity: float
    min_quotient: float

    @property
    def step(self):
        return self.multiplier * self.grid.spacing

    def region_norm(self, region=None):
        mask = self.valid if region is None else (self.valid & region)
        return self.norm[mask]


def hessian_field(u, step_multiplier=1, mask_kinks=True):
    """Hessian of ``u`` from axis and diagonal stencils.

    Diagonal stencils along ``e_a +- e_b`` give the off-diagonal entries
    through ``H_ab = (q(e_a + e_b) - q(e_a - e_b)) / 2`` where ``q`` is the
    second-difference quotient per unit direction. A margin that is too
    wide for the grid shrinks ``valid`` to nothing rather than failing.

    Examples
    --------
    >>> import numpy as np
    >>> from otlab.grid import Grid
    >>> from otlab.potential import PotentialField
    >>> g = Grid((-1, -1), (1, 1), (32, 32))
    >>> u = PotentialField.from_callable(lambda x: 0.5 * (x ** 2).sum(-1), g)
    >>> H = hessian_field(u)
    >>> bool(np.allclose(H.norm[H.valid], 1.0))
    True
    """
    grid = u.grid
    m = max(1, int(step_multiplier))
    n = grid.ndim
    shape = grid.shape
    mats = np.full(shape + (n, n), np.nan)
    if any(2 * m >= s for s in shape):
        empty = np.zeros(shape, dtype=bool)
        nan = np.full(shape, np.nan)
        return HessianField(grid, m, mats, nan, nan.copy(), empty, u.semiconvexity(), np.nan)
    core = tuple(slice(m, s - m) for s in shape)
    quot = dict(second_differences(u.values, m, grid.spacing))
    block = np.zeros(tuple(s - 2 * m for s in shape) + (n, n))
    lo = np.inf
    for d, q in quot.items():
        lo = min(lo, float(q.min()))
        nz = [k for k, v in enumerate(d) if v]
        if len(nz) == 1:
            block[..., nz[0], nz[0]] = q
    for a in range(n):
        for b in range(a + 1, n):
            plus = tuple(int(k in (a, b)) for k in range(n))
            minus = tuple(1 if k == a else (-1 if k == b else 0) for k in range(n))
            off = 0.5 * (quot[plus] - quot[minus])
            block[..., a, b] = off
            block[..., b, a] = off
    mats[core] = block
    norm = np.full(shape, np.nan)
    frob = np.full(shape, np.nan)
    eig = np.linalg.eigvalsh(block)
    norm[core] = np.abs(eig).max(axis=-1)
    frob[core] = np.sqrt((block ** 2).sum(axis=(-2, -1)))
    valid = grid.interior_mask(m)
    if mask_kinks:
        valid &= ~dilate(kink_mask(u), m)
    return HessianField(grid, m, mats, norm, frob, valid, u.semiconvexity(), lo)

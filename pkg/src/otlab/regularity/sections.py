"""Section factory shared by the measurement pipelines."""

import numpy as np

from ..cconvex import _section_from_expr, gradient_grid, section_expression
from ..cost import c_exp
from ..errors import DegenerateError, NoSolutionError, DegenerateCostError
from ..geometry import john_normalize


def target_grid(u, multiplier=1):
    """Section targets ``y0 = c_exp(x0, grad u(x0))`` for every cell.

    The gradient is the centered difference at step ``multiplier * spacing``.
    Cells too close to the grid face for that step fall back to shorter
    steps, and finally to the maximizing atom (or a one-sided slope for
    analytic potentials).
    """
    grid = u.grid
    n = grid.ndim
    grad = np.full(grid.shape + (n,), np.nan)
    for m in range(int(multiplier), 0, -1):
        g = gradient_grid(u, m)
        fill = ~np.isfinite(grad) & np.isfinite(g)
        grad[fill] = g[fill]
    Y = np.full(grid.shape + (n,), np.nan)
    ok = np.all(np.isfinite(grad), axis=-1)
    try:
        Y[ok] = c_exp(u.cost, grid.centers[ok], grad[ok])
    except (NoSolutionError, DegenerateCostError):
        for idx in np.argwhere(ok):
            try:
                Y[tuple(idx)] = c_exp(u.cost, grid.centers[tuple(idx)], grad[tuple(idx)])
            except (NoSolutionError, DegenerateCostError):
                pass
    rest = ~np.all(np.isfinite(Y), axis=-1)
    if rest.any():
        if u.is_atomic:
            Y[rest] = u.atoms[u.argmax(grid.centers[rest])]
        else:
            h = grid.spacing
            x = grid.centers[rest]
            slopes = np.stack([(u.evaluate(x + h * e) - u.evaluate(x - h * e)) / (2 * h)
                               for e in np.eye(n)], axis=-1)
            Y[rest] = c_exp(u.cost, x, slopes)
    return Y


class SectionMaker:
    """Builds sections ``S_h(x)`` with targets from :func:`target_grid`."""

    def __init__(self, u, cost=None, multiplier=1):
        self.u = u
        self.cost = u.cost if cost is None else cost
        self.grid = u.grid
        self.multiplier = int(multiplier)
        self.targets = target_grid(u, multiplier)
        self._expr = {}

    def expression(self, index):
        index = tuple(int(i) for i in index)
        e = self._expr.get(index)
        if e is None:
            x0 = self.grid.center_of(index)
            e, _ = section_expression(self.u, self.cost, x0, self.targets[index])
            if len(self._expr) > 64:
                self._expr.clear()
            self._expr[index] = e
        return e

    def section(self, index, h):
        index = tuple(int(i) for i in index)
        return _section_from_expr(self.expression(index), self.grid.center_of(index),
                                  self.targets[index], h, self.grid, index, self.u, self.cost)

    def normalized(self, index, h):
        """Section with its John normalization, or ``None`` when degenerate."""
        s = self.section(index, h)
        try:
            john_normalize(s, h)
        except DegenerateError:
            return None
        return s

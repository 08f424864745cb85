"""Uniform cell-centered grids on axis-aligned boxes."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import InvalidParameterError


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centered grid with cubic cells.

    Cell ``(i_1, ..., i_n)`` has center ``lo + (i + 1/2) * spacing``.
    All geometric quantities downstream are cell counts times
    ``cell_volume``.
    """

    lo: tuple
    hi: tuple
    shape: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        shape = tuple(int(v) for v in np.atleast_1d(self.shape))
        if len(shape) == 1 and len(lo) > 1:
            shape = shape * len(lo)
        if not (len(lo) == len(hi) == len(shape)):
            raise InvalidParameterError("box and shape dimensions differ")
        if any(h <= l for l, h in zip(lo, hi)) or any(s < 1 for s in shape):
            raise InvalidParameterError("empty grid")
        steps = [(h - l) / s for l, h, s in zip(lo, hi, shape)]
        if max(steps) - min(steps) > 1e-9 * max(steps):
            raise InvalidParameterError(f"grid cells must be cubic, got steps {steps}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def from_box(cls, box, resolution):
        """``box`` is ``[[lo...], [hi...]]``; ``resolution`` cells along the first axis.

        Other axes get as many cells as fit with the same spacing; the box is
        trimmed symmetrically to a whole number of cells if needed.
        """
        lo = np.asarray(box[0], dtype=float)
        hi = np.asarray(box[1], dtype=float)
        h = (hi[0] - lo[0]) / int(resolution)
        counts = np.maximum(1, np.rint((hi - lo) / h)).astype(int)
        mid = 0.5 * (lo + hi)
        lo = mid - 0.5 * counts * h
        hi = mid + 0.5 * counts * h
        return cls(tuple(lo), tuple(hi), tuple(counts))

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def spacing(self):
        return (self.hi[0] - self.lo[0]) / self.shape[0]

    @property
    def cell_volume(self):
        return self.spacing ** self.ndim

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def box(self):
        return np.array([self.lo, self.hi])

    @cached_property
    def axes(self):
        return [l + (np.arange(s) + 0.5) * self.spacing for l, s in zip(self.lo, self.shape)]

    @cached_property
    def centers(self):
        """Cell centers, shape ``grid.shape + (n,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def flat_centers(self):
        return self.centers.reshape(-1, self.ndim)

    def index_of(self, x):
        """Index tuple of the cell containing ``x`` (clipped to the grid)."""
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - np.asarray(self.lo)) / self.spacing).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return tuple(int(i) for i in idx)

    def center_of(self, index):
        return np.asarray(self.lo) + (np.asarray(index) + 0.5) * self.spacing

    def snap(self, x):
        return self.center_of(self.index_of(x))

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lo) - tol) and np.all(x <= np.asarray(self.hi) + tol))

    def interior_mask(self, margin):
        """Cells at least ``margin`` cells away from every grid face."""
        mask = np.zeros(self.shape, dtype=bool)
        if any(2 * margin >= s for s in self.shape):
            return mask
        sl = tuple(slice(margin, s - margin) for s in self.shape)
        mask[sl] = True
        return mask

    def ball_mask(self, center, radius):
        d = np.linalg.norm(self.centers - np.asarray(center, dtype=float), axis=-1)
        return d <= radius

    def refined(self, factor):
        return Grid(self.lo, self.hi, tuple(int(s * factor) for s in self.shape))

    def header(self):
        return {"box": [list(self.lo), list(self.hi)], "shape": list(self.shape),
                "spacing": self.spacing}


def dilate(mask, cells):
    """Dilate a boolean cell mask by ``cells`` layers of 2n-neighbors."""
    if cells <= 0 or not mask.any():
        return mask.copy()
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    return ndimage.binary_dilation(mask, structure=structure, iterations=int(cells))


def boundary_cells(mask):
    """Cells of ``mask`` with a 2n-neighbor outside ``mask`` (grid faces count as outside)."""
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    eroded = ndimage.binary_erosion(mask, structure=structure, border_value=0)
    return mask & ~eroded

"""c-convex potentials ``u(x) = max_j (-c(x, y_j) + lambda_j)`` and their grid caches."""

import json

import numpy as np

from .cost import CostModel
from .errors import InvalidParameterError, MissingArtifactError
from .grid import Grid

_CHUNK = 2_000_000


class PotentialField:
    """A potential evaluated on a fixed grid.

    Two flavours share the interface. The atomic flavour stores target atoms
    and dual weights and is c-convex by construction. The analytic flavour
    wraps a callable (used to inject closed-form potentials such as
    ``|x|^2/2`` into the measurement pipeline); it has no atoms, so
    c-subdifferentials fall back to the supporting inequality on the grid.

    ``values`` holds ``u`` at the cell centers of ``grid``.
    """

    def __init__(self, cost, grid, atoms=None, lambdas=None, func=None, anchor=None,
                 method="exact", epsilon=None):
        if (atoms is None) == (func is None):
            raise InvalidParameterError("give either atoms+lambdas or func")
        self.cost = cost
        self.grid = grid
        self.func = func
        self.method = method
        self.epsilon = epsilon
        self.anchor = None if anchor is None else np.asarray(anchor, dtype=float)
        self._semiconvexity = {}
        if atoms is not None:
            self.atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
            self.lambdas = np.asarray(lambdas, dtype=float).copy()
            if self.anchor is not None:
                self.lambdas -= self._max_scores(self.anchor[None, :])[0]
        else:
            self.atoms = None
            self.lambdas = None
        self.values = self.evaluate(grid.flat_centers).reshape(grid.shape)

    @classmethod
    def from_callable(cls, func, grid, cost=None):
        """Analytic potential; ``func`` maps ``(m, n)`` points to ``(m,)`` values."""
        if cost is None:
            box = grid.box
            cost = CostModel("quadratic-bilinear", box, box)
        return cls(cost, grid, func=func)

    @property
    def is_atomic(self):
        return self.atoms is not None

    @property
    def dim(self):
        return self.grid.ndim

    @property
    def atom_spacing(self):
        """Median nearest-neighbour distance of the target atoms."""
        if not self.is_atomic or len(self.atoms) < 2:
            return 0.0
        from scipy.spatial import cKDTree
        d, _ = cKDTree(self.atoms).query(self.atoms, k=2)
        return float(np.median(d[:, 1]))

    def scores(self, x):
        """``-c(x_i, y_j) + lambda_j`` for points ``x`` of shape ``(m, n)``."""
        return -self.cost.matrix(x, self.atoms) + self.lambdas[None, :]

    def _chunks(self, x):
        step = max(1, _CHUNK // max(1, len(self.atoms)))
        for s in range(0, len(x), step):
            yield s, x[s:s + step]

    def _max_scores(self, x):
        out = np.empty(len(x))
        for s, xs in self._chunks(x):
            out[s:s + len(xs)] = self.scores(xs).max(axis=1)
        return out

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if self.func is not None:
            vals = np.asarray(self.func(x), dtype=float)
        else:
            vals = self._max_scores(x)
        return vals[0] if single else vals

    __call__ = evaluate

    def argmax(self, x):
        """Index of the maximizing atom at each point (lowest index on ties)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(len(x), dtype=int)
        for s, xs in self._chunks(x):
            out[s:s + len(xs)] = self.scores(xs).argmax(axis=1)
        return out

    def value_at_cell(self, index):
        return float(self.values[tuple(index)])

    def on_grid(self, grid):
        """Same potential re-evaluated on another grid (no re-normalization)."""
        if self.is_atomic:
            u = PotentialField(self.cost, grid, atoms=self.atoms, lambdas=self.lambdas,
                               method=self.method, epsilon=self.epsilon)
        else:
            u = PotentialField(self.cost, grid, func=self.func)
        u.anchor = self.anchor
        return u

    def semiconvexity(self, multiplier=1):
        if multiplier not in self._semiconvexity:
            from .cconvex import semiconvexity_constant
            self._semiconvexity[multiplier] = semiconvexity_constant(
                self, multiplier * self.grid.spacing)
        return self._semiconvexity[multiplier]


# -- potential artifact file ----------------------------------------------

def _fmt(v):
    return repr(float(v))


def write_potential(path, u):
    """JSON header line followed by a CSV body ``j, y_1..y_n, lambda``."""
    if not u.is_atomic:
        raise InvalidParameterError("only atomic potentials can be written")
    n = u.dim
    header = {
        "format": "otlab-potential/1",
        "dimension": n,
        "cost": u.cost.to_spec(),
        "source_box": u.cost.source_box.tolist(),
        "target_box": u.cost.target_box.tolist(),
        "anchor": None if u.anchor is None else u.anchor.tolist(),
        "grid_box": [list(u.grid.lo), list(u.grid.hi)],
        "grid_shape": list(u.grid.shape),
        "spacing": u.grid.spacing,
        "atom_count": int(len(u.atoms)),
        "method": u.method,
        "epsilon": u.epsilon,
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.append(",".join(["j"] + [f"y_{k + 1}" for k in range(n)] + ["lambda"]))
    for j, (y, lam) in enumerate(zip(u.atoms, u.lambdas)):
        lines.append(",".join([str(j)] + [_fmt(v) for v in y] + [_fmt(lam)]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_potential(path, grid=None):
    try:
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            body = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"potential artifact {path} not found; run `lab solve` first") from exc
    n = header["dimension"]
    cost = CostModel.from_spec(header["cost"], header["source_box"], header["target_box"])
    if grid is None:
        box = header["grid_box"]
        grid = Grid(box[0], box[1], header["grid_shape"])
    atoms = body[:, 1:1 + n]
    lambdas = body[:, 1 + n]
    # lambdas on file are already anchored
    u = PotentialField(cost, grid, atoms=atoms, lambdas=lambdas, method=header.get("method", "exact"),
                       epsilon=header.get("epsilon"))
    u.anchor = None if header.get("anchor") is None else np.asarray(header["anchor"])
    return u, header

"""Twisted cost models, their analytic derivatives and the c-exponential map.

Every cost evaluates on broadcast arrays: ``x`` and ``y`` have shape
``(..., n)`` and results have shape ``(...)``, ``(..., n)`` or
``(..., n, n)``. Matrix results index ``[..., a, b]`` as
``d^2 c / dx_a dy_b`` for ``hess_xy``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import (DegenerateCostError, DomainError, InvalidSpecError,
                     NoSolutionError, SingularityError)

KINDS = ("quadratic-bilinear", "squared-distance", "power", "perturbed-bilinear",
         "squared-bilinear")
BUMPS = ("phi1", "phi2")


def _box(box, n=None):
    b = np.asarray(box, dtype=float)
    if b.ndim != 2 or b.shape[0] != 2:
        raise InvalidSpecError(f"box must be [[lo...], [hi...]], got {box!r}")
    if n is not None and b.shape[1] != n:
        raise InvalidSpecError("box dimension mismatch")
    if np.any(b[1] <= b[0]):
        raise InvalidSpecError(f"empty box {box!r}")
    return b


@dataclass(frozen=True, eq=False)
class CostModel:
    """Cost ``c(x, y)`` on ``source_box x target_box``.

    Kinds: ``quadratic-bilinear`` (``-x.y``), ``squared-distance``
    (``|x-y|^2/2``), ``power`` (``|x-y|^p/p``), ``perturbed-bilinear``
    (``-x.y + delta*phi(x, y)``) and ``squared-bilinear`` (``-(x.y)^2/2``,
    a twist-degenerate example).

    Built-in bumps: ``phi1 = sin(pi x_1) sin(pi y_1)`` and
    ``phi2 = exp(-|x-y|^2)``.
    """

    kind: str
    source_box: np.ndarray
    target_box: np.ndarray
    exponent: float = 2.0
    delta: float = 0.0
    bump: str = "phi1"
    _scale: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpecError(f"unknown cost kind {self.kind!r}")
        if self.bump not in BUMPS:
            raise InvalidSpecError(f"unknown bump {self.bump!r}")
        if self.kind == "power" and not self.exponent > 1:
            raise InvalidSpecError("power cost needs exponent > 1")
        src = _box(self.source_box)
        object.__setattr__(self, "source_box", src)
        object.__setattr__(self, "target_box", _box(self.target_box, src.shape[1]))

    @classmethod
    def from_spec(cls, spec, source_box, target_box):
        spec = dict(spec)
        kind = spec.pop("kind", None)
        allowed = {"exponent", "delta", "bump"}
        unknown = set(spec) - allowed
        if unknown:
            raise InvalidSpecError(f"unknown cost keys {sorted(unknown)}")
        return cls(kind, source_box, target_box, **spec)

    def to_spec(self):
        spec = {"kind": self.kind}
        if self.kind == "power":
            spec["exponent"] = float(self.exponent)
        if self.kind == "perturbed-bilinear":
            spec["delta"] = float(self.delta)
            spec["bump"] = self.bump
        return spec

    def with_boxes(self, source_box, target_box):
        return CostModel(self.kind, source_box, target_box, self.exponent, self.delta, self.bump)

    def transposed(self):
        """The cost ``(y, x) -> c(x, y)``, used to analyse ``u^c`` as a potential."""
        return TransposedCost(self)

    @property
    def dim(self):
        return self.source_box.shape[1]

    # -- bump -------------------------------------------------------------
    def _phi(self, x, y, order):
        if self.bump == "phi1":
            sx, cx = np.sin(np.pi * x[..., 0]), np.cos(np.pi * x[..., 0])
            sy, cy = np.sin(np.pi * y[..., 0]), np.cos(np.pi * y[..., 0])
            n = x.shape[-1]
            shape = np.broadcast_shapes(x.shape, y.shape)
            if order == 0:
                return sx * sy
            if order == 1:
                gx = np.zeros(shape)
                gy = np.zeros(shape)
                gx[..., 0] = np.pi * cx * sy
                gy[..., 0] = np.pi * sx * cy
                return gx, gy
            hxx = np.zeros(shape + (n,))
            hxy = np.zeros(shape + (n,))
            hyy = np.zeros(shape + (n,))
            hxx[..., 0, 0] = -np.pi ** 2 * sx * sy
            hxy[..., 0, 0] = np.pi ** 2 * cx * cy
            hyy[..., 0, 0] = -np.pi ** 2 * sx * sy
            return hxx, hxy, hyy
        d = x - y
        e = np.exp(-np.sum(d * d, axis=-1))
        if order == 0:
            return e
        if order == 1:
            g = -2.0 * d * e[..., None]
            return g, -g
        n = d.shape[-1]
        dd = d[..., :, None] * d[..., None, :]
        hxx = (-2.0 * np.eye(n) + 4.0 * dd) * e[..., None, None]
        return hxx, -hxx, hxx

    # -- cost and derivatives ---------------------------------------------
    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        k = self.kind
        if k == "quadratic-bilinear":
            return -np.sum(x * y, axis=-1)
        if k == "squared-distance":
            d = x - y
            return 0.5 * np.sum(d * d, axis=-1)
        if k == "power":
            d = x - y
            return np.sum(d * d, axis=-1) ** (0.5 * self.exponent) / self.exponent
        if k == "squared-bilinear":
            return -0.5 * np.sum(x * y, axis=-1) ** 2
        return -np.sum(x * y, axis=-1) + self.delta * self._phi(x, y, 0)

    __call__ = value

    def _power_parts(self, x, y):
        d = x - y
        r2 = np.sum(d * d, axis=-1)
        p = self.exponent
        if p < 2 and np.any(r2 == 0):
            raise SingularityError(f"power cost with p={p} is singular at x == y")
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(r2 > 0, r2 ** (0.5 * (p - 2)), 1.0 if p == 2 else 0.0)
            b = np.where(r2 > 0, (p - 2) * r2 ** (0.5 * (p - 4)), 0.0)
        return d, a, b

    def grad_x(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        k = self.kind
        if k == "quadratic-bilinear":
            return -np.broadcast_to(y, np.broadcast_shapes(x.shape, y.shape)).copy()
        if k == "squared-distance":
            return x - y
        if k == "power":
            d, a, _ = self._power_parts(x, y)
            return a[..., None] * d
        if k == "squared-bilinear":
            s = np.sum(x * y, axis=-1)
            return -s[..., None] * y
        return -y + self.delta * self._phi(x, y, 1)[0]

    def grad_y(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        k = self.kind
        if k == "quadratic-bilinear":
            return -np.broadcast_to(x, np.broadcast_shapes(x.shape, y.shape)).copy()
        if k == "squared-distance":
            return y - x
        if k == "power":
            d, a, _ = self._power_parts(x, y)
            return -a[..., None] * d
        if k == "squared-bilinear":
            s = np.sum(x * y, axis=-1)
            return -s[..., None] * x
        return -x + self.delta * self._phi(x, y, 1)[1]

    def hessians(self, x, y):
        """Return ``(D_xx c, D_xy c, D_yy c)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape, y.shape)
        n = shape[-1]
        eye = np.broadcast_to(np.eye(n), shape + (n,))
        k = self.kind
        if k == "quadratic-bilinear":
            z = np.zeros(shape + (n,))
            return z, -eye.copy(), z.copy()
        if k == "squared-distance":
            return eye.copy(), -eye.copy(), eye.copy()
        if k == "power":
            d, a, b = self._power_parts(x, y)
            hxx = a[..., None, None] * eye + b[..., None, None] * (d[..., :, None] * d[..., None, :])
            return hxx, -hxx, hxx.copy()
        if k == "squared-bilinear":
            x, y = np.broadcast_arrays(x, y)
            s = np.sum(x * y, axis=-1)
            hxx = -(y[..., :, None] * y[..., None, :])
            hyy = -(x[..., :, None] * x[..., None, :])
            hxy = -(y[..., :, None] * x[..., None, :] + s[..., None, None] * eye)
            return hxx, hxy, hyy
        pxx, pxy, pyy = self._phi(x, y, 2)
        return self.delta * pxx, -eye + self.delta * pxy, self.delta * pyy

    def hess_xx(self, x, y):
        return self.hessians(x, y)[0]

    def hess_xy(self, x, y):
        return self.hessians(x, y)[1]

    def matrix(self, X, Y):
        """Cost matrix ``C[i, j] = c(X[i], Y[j])``."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        k = self.kind
        if k == "quadratic-bilinear":
            return -(X @ Y.T)
        if k == "squared-distance":
            return 0.5 * _sqdist(X, Y)
        if k == "power":
            d2 = _sqdist(X, Y)
            return d2 ** (0.5 * self.exponent) / self.exponent
        if k == "squared-bilinear":
            return -0.5 * (X @ Y.T) ** 2
        if self.bump == "phi1":
            bump = np.outer(np.sin(np.pi * X[:, 0]), np.sin(np.pi * Y[:, 0]))
        else:
            bump = np.exp(-_sqdist(X, Y))
        return -(X @ Y.T) + self.delta * bump

    # -- helpers ----------------------------------------------------------
    def in_source(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        lo, hi = self.source_box
        t = tol * max(1.0, float(np.max(hi - lo)))
        return np.all((x >= lo - t) & (x <= hi + t), axis=-1)

    def in_target(self, y, tol=1e-9):
        y = np.asarray(y, dtype=float)
        lo, hi = self.target_box
        t = tol * max(1.0, float(np.max(hi - lo)))
        return np.all((y >= lo - t) & (y <= hi + t), axis=-1)

    def scale(self):
        """Typical magnitude of ``c`` on the product box (sampled once, cached)."""
        if not self._scale:
            xs = _halton(self.source_box, 64, 0)
            ys = _halton(self.target_box, 64, 1)
            vals = self.value(xs[:, None, :], ys[None, :, :])
            self._scale.append(max(1.0, float(np.max(np.abs(vals)))))
        return self._scale[0]

    def second_derivative_bound(self, n_samples=64):
        """Sampled ``sup ||D_xx c||`` (operator norm) on the product box."""
        xs = _halton(self.source_box, n_samples, 2)
        ys = _halton(self.target_box, n_samples, 3)
        hxx = self.hess_xx(xs[:, None, :], ys[None, :, :])
        return float(np.max(np.abs(np.linalg.eigvalsh(hxx))))


class TransposedCost:
    """``(y, x) -> c(x, y)``; same interface as :class:`CostModel`."""

    def __init__(self, base):
        self.base = base
        self.kind = base.kind
        self.source_box = base.target_box
        self.target_box = base.source_box

    @property
    def dim(self):
        return self.base.dim

    def value(self, x, y):
        return self.base.value(y, x)

    __call__ = value

    def grad_x(self, x, y):
        return self.base.grad_y(y, x)

    def grad_y(self, x, y):
        return self.base.grad_x(y, x)

    def hessians(self, x, y):
        hxx, hxy, hyy = self.base.hessians(y, x)
        return hyy, np.swapaxes(hxy, -1, -2), hxx

    def hess_xx(self, x, y):
        return self.hessians(x, y)[0]

    def hess_xy(self, x, y):
        return self.hessians(x, y)[1]

    def matrix(self, X, Y):
        return self.base.matrix(Y, X).T

    in_source = CostModel.in_source
    in_target = CostModel.in_target

    def scale(self):
        return self.base.scale()

    def second_derivative_bound(self, n_samples=64):
        ys = _halton(self.source_box, n_samples, 2)
        xs = _halton(self.target_box, n_samples, 3)
        return float(np.max(np.abs(np.linalg.eigvalsh(self.hess_xx(ys[:, None, :], xs[None, :, :])))))

    def to_spec(self):
        spec = self.base.to_spec()
        spec["transposed"] = True
        return spec


def _sqdist(X, Y):
    d2 = np.sum(X * X, 1)[:, None] + np.sum(Y * Y, 1)[None, :] - 2.0 * (X @ Y.T)
    return np.maximum(d2, 0.0)


def _halton(box, count, seed):
    box = np.asarray(box, dtype=float)
    sampler = qmc.Halton(d=box.shape[1], scramble=True, seed=seed)
    return qmc.scale(sampler.random(count), box[0], box[1])


# -- operations -----------------------------------------------------------

def _check_domain(cost, x, y):
    if not np.all(cost.in_source(x)):
        raise DomainError(f"x={np.asarray(x).tolist()} outside source box")
    if not np.all(cost.in_target(y)):
        raise DomainError(f"y={np.asarray(y).tolist()} outside target box")


def eval_cost(cost, x, y):
    """``c(x, y)`` with domain checking."""
    _check_domain(cost, x, y)
    return float(cost.value(np.asarray(x, float), np.asarray(y, float)))


@dataclass(frozen=True)
class CostDerivatives:
    grad_x: np.ndarray
    grad_y: np.ndarray
    hess_xx: np.ndarray
    hess_xy: np.ndarray


def cost_derivatives(cost, x, y):
    _check_domain(cost, x, y)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    hxx, hxy, _ = cost.hessians(x, y)
    hxx = 0.5 * (hxx + np.swapaxes(hxx, -1, -2))
    return CostDerivatives(cost.grad_x(x, y), cost.grad_y(x, y), hxx, hxy)


def c_exp(cost, x, p, max_iter=50):
    """Solve ``p = -D_x c(x, y)`` for ``y`` by damped Newton seeded at ``y = p``.

    Works on a single point or a batch (``x`` and ``p`` of shape ``(..., n)``).
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    x, p = np.broadcast_arrays(x, p)
    k = cost.kind
    if k == "quadratic-bilinear":
        return p.copy()
    if k == "squared-distance":
        return x + p
    if k == "power":
        q = cost.exponent
        norm = np.linalg.norm(p, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(norm > 0, -p / norm * norm ** (1.0 / (q - 1.0)), 0.0)
        return x - d
    return _newton_c_exp(cost, x, p, max_iter)


def _newton_c_exp(cost, x, p, max_iter):
    scalar = x.ndim == 1
    xs = x.reshape(-1, x.shape[-1])
    ps = p.reshape(-1, p.shape[-1])
    y = ps.copy()
    tol = 1e-10 * (1.0 + np.linalg.norm(ps, axis=-1))
    res = ps + cost.grad_x(xs, y)
    rn = np.linalg.norm(res, axis=-1)
    for _ in range(max_iter):
        active = rn > tol
        if not active.any():
            break
        J = cost.hess_xy(xs[active], y[active])
        det = np.linalg.det(J)
        if np.any(np.abs(det) < 1e-14):
            raise DegenerateCostError("D_xy c is singular at a Newton iterate")
        step = np.linalg.solve(J, res[active][..., None])[..., 0]
        t = np.ones(step.shape[0])
        ya = y[active]
        xa = xs[active]
        pa = ps[active]
        rna = rn[active]
        cand = ya - step
        crn = np.linalg.norm(pa + cost.grad_x(xa, cand), axis=-1)
        for _ in range(20):
            worse = crn > rna
            if not worse.any():
                break
            t[worse] *= 0.5
            cand[worse] = ya[worse] - t[worse, None] * step[worse]
            crn[worse] = np.linalg.norm(pa[worse] + cost.grad_x(xa[worse], cand[worse]), axis=-1)
        y[active] = cand
        res[active] = pa + cost.grad_x(xa, cand)
        rn[active] = np.linalg.norm(res[active], axis=-1)
    if np.any(rn > tol):
        raise NoSolutionError("c-exponential Newton iteration did not converge in "
                              f"{max_iter} iterations (residual {rn.max():.3e})")
    return y[0] if scalar else y.reshape(x.shape)


@dataclass
class ConditionReport:
    c0_norm: float
    c1_ok: bool
    c2_ok: bool
    c3_min_absdet: float
    delta_hat: float
    sample_count: int
    c1_witness: tuple = None
    c2_witness: tuple = None
    c1_worst_ratio: float = None
    c2_worst_ratio: float = None

    def as_dict(self):
        def conv(w):
            return None if w is None else [np.asarray(v).tolist() for v in w]
        return {"c0_norm": self.c0_norm, "c1_ok": self.c1_ok, "c2_ok": self.c2_ok,
                "c3_min_absdet": self.c3_min_absdet, "delta_hat": self.delta_hat,
                "sample_count": self.sample_count, "c1_witness": conv(self.c1_witness),
                "c2_witness": conv(self.c2_witness), "c1_worst_ratio": self.c1_worst_ratio,
                "c2_worst_ratio": self.c2_worst_ratio}


def _full_hessian(hxx, hxy, hyy):
    top = np.concatenate([hxx, hxy], axis=-1)
    bot = np.concatenate([np.swapaxes(hxy, -1, -2), hyy], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def _injectivity(grad, base, others, tol):
    """Smallest ``|grad(base, o) - grad(base, o')| / |o - o'|`` over pairs of ``others``."""
    worst = (np.inf, None)
    for b in base:
        g = grad(b[None, :], others)
        dg = np.linalg.norm(g[:, None, :] - g[None, :, :], axis=-1)
        dz = np.linalg.norm(others[:, None, :] - others[None, :, :], axis=-1)
        iu = np.triu_indices(len(others), 1)
        ratio = dg[iu] / dz[iu]
        k = int(np.argmin(ratio))
        if ratio[k] < worst[0]:
            worst = (float(ratio[k]), (b, others[iu[0][k]], others[iu[1][k]]))
    ok = worst[0] > tol
    return ok, worst[0], (None if ok else worst[1])


def check_conditions(cost, n_samples=100, seed=0, injectivity_tol=1e-6):
    """Sampled checks of the standing cost hypotheses.

    Uses ``n_samples`` Halton points in each box and their product
    (``n_samples**2`` pairs; 10^4 at the default). ``delta_hat`` is the
    sampled ``C^2`` size of ``c + x.y``: the max of the value, the gradient
    norm and the spectral norm of the joint Hessian in ``(x, y)``.
    Injectivity is only certified on the sample (a witness pair is kept
    when it fails).
    """
    if n_samples < 10:
        raise InvalidSpecError("check_conditions needs n_samples >= 10")
    xs = _halton(cost.source_box, n_samples, seed)
    ys = _halton(cost.target_box, n_samples, seed + 1)
    X = xs[:, None, :]
    Y = ys[None, :, :]
    n = xs.shape[1]

    val = cost.value(X, Y)
    gx = cost.grad_x(X, Y)
    gy = cost.grad_y(X, Y)
    hxx, hxy, hyy = cost.hessians(X, Y)

    dev_val = np.abs(val + np.sum(X * Y, axis=-1))
    dev_grad = np.linalg.norm(np.concatenate([gx + Y, gy + X], axis=-1), axis=-1)
    dev_hess = np.abs(np.linalg.eigvalsh(_full_hessian(hxx, hxy + np.eye(n), hyy))).max(axis=-1)
    delta_hat = float(max(dev_val.max(), dev_grad.max(), dev_hess.max()))
    if cost.kind == "quadratic-bilinear":
        delta_hat = 0.0

    # third derivatives by central differences of the analytic Hessians
    eps = 1e-5 * max(1.0, float(np.max(np.ptp(cost.source_box, axis=0))))
    third = 0.0
    sub_x, sub_y = xs[: min(20, n_samples)], ys[: min(20, n_samples)]
    Xs, Ys = sub_x[:, None, :], sub_y[None, :, :]
    for a in range(n):
        e = np.zeros(n)
        e[a] = eps
        for shift_x, shift_y in ((e, 0.0), (0.0, e)):
            hp = _full_hessian(*cost.hessians(Xs + shift_x, Ys + shift_y))
            hm = _full_hessian(*cost.hessians(Xs - shift_x, Ys - shift_y))
            third = max(third, float(np.max(np.abs(hp - hm))) / (2 * eps))
    full = _full_hessian(hxx, hxy, hyy)
    c0 = max(float(np.abs(val).max()),
             float(np.linalg.norm(np.concatenate([gx, gy], -1), axis=-1).max()),
             float(np.abs(np.linalg.eigvalsh(full)).max()), third)

    absdet = np.abs(np.linalg.det(hxy))
    m = min(n_samples, 40)
    c1_ok, c1_ratio, c1_w = _injectivity(cost.grad_x, xs[:m], ys[:m], injectivity_tol)
    c2_ok, c2_ratio, c2_w = _injectivity(lambda y, x: cost.grad_y(x, y), ys[:m], xs[:m],
                                         injectivity_tol)
    return ConditionReport(c0_norm=c0, c1_ok=bool(c1_ok), c2_ok=bool(c2_ok),
                           c3_min_absdet=float(absdet.min()), delta_hat=delta_hat,
                           sample_count=n_samples * n_samples, c1_witness=c1_w,
                           c2_witness=c2_w, c1_worst_ratio=c1_ratio, c2_worst_ratio=c2_ratio)

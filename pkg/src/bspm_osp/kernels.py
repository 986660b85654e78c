"""Composable covariance functions.

Every kernel maps inputs of shape ``(..., n, D)`` and ``(..., m, D)`` to
covariances of shape ``(..., n, m)``; leading batch dimensions broadcast, which
the local GP code relies on. Hyperparameters live in a "free" vector
``theta`` (log of positive quantities, raw for offsets and spectral means),
and kernels are immutable: :meth:`Kernel.with_theta` returns a new object.

Kernels compose with ``+`` and ``*``; :class:`OnDims` restricts a kernel to a
subset of input columns.
"""

import numpy as np

from .errors import DataError, ParameterError

LOG_BOUNDS = (-20.0, 20.0)


def _as_inputs(A):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    return A


def _diff(A, B):
    return A[..., :, None, :] - B[..., None, :, :]


class Kernel:
    """Base class. Subclasses implement ``_eval``, ``theta``, ``with_theta`` and ``grad_contract``."""

    def __call__(self, A, B=None):
        A = _as_inputs(A)
        B = A if B is None else _as_inputs(B)
        if A.shape[-1] != B.shape[-1]:
            raise DataError(f"input dimension mismatch: {A.shape[-1]} vs {B.shape[-1]}")
        return self._eval(A, B)

    def diag(self, A):
        """Prior variances ``k(a, a)`` for every row of ``A``."""
        A = _as_inputs(A)
        P = A[..., :, None, :]
        return self._eval(P, P)[..., 0, 0]

    @property
    def n_params(self):
        return len(self.theta)

    def __add__(self, other):
        return Sum([self, other])

    def __mul__(self, other):
        return Product([self, other])

    def grad_contract(self, A, W):
        """Return ``sum(W * dK/dtheta_i)`` for every free parameter, with ``K = k(A, A)``."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def bounds(self):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# leaves

class _Leaf(Kernel):
    # name -> "log" (strictly positive), "lognn" (non-negative), or "raw"
    _spec = {}

    def __init__(self, **params):
        self.params = {}
        for name, kind in self._spec.items():
            val = np.array(params[name], dtype=float)
            if not np.all(np.isfinite(val)):
                raise ParameterError(f"{type(self).__name__}.{name} must be finite")
            if kind == "log" and np.any(val <= 0):
                raise ParameterError(f"{type(self).__name__}.{name} must be positive, got {val}")
            if kind == "lognn" and np.any(val < 0):
                raise ParameterError(f"{type(self).__name__}.{name} must be non-negative, got {val}")
            val.setflags(write=False)
            self.params[name] = val

    def __getattr__(self, name):
        try:
            return self.__dict__["params"][name]
        except KeyError:
            raise AttributeError(name) from None

    def __repr__(self):
        inner = ", ".join(f"{k}={np.round(v, 6).tolist()}" for k, v in self.params.items())
        return f"{type(self).__name__}({inner})"

    @property
    def param_names(self):
        names = []
        for name in self._spec:
            size = self.params[name].size
            names += [name] if self.params[name].ndim == 0 else [f"{name}[{i}]" for i in range(size)]
        return names

    @property
    def theta(self):
        parts = []
        with np.errstate(divide="ignore"):
            for name, kind in self._spec.items():
                v = np.atleast_1d(self.params[name])
                parts.append(v if kind == "raw" else np.log(v))
        return np.concatenate(parts)

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ParameterError(f"expected {self.n_params} parameters, got {theta.size}")
        new, pos = {}, 0
        for name, kind in self._spec.items():
            cur = self.params[name]
            chunk = theta[pos:pos + cur.size]
            pos += cur.size
            val = chunk if kind == "raw" else np.exp(chunk)
            new[name] = val.reshape(cur.shape)
        return type(self)(**new)

    def bounds(self):
        out = []
        for name, kind in self._spec.items():
            out += [(None, None) if kind == "raw" else LOG_BOUNDS] * self.params[name].size
        return out

    def grad_contract(self, A, W):
        A = _as_inputs(A)
        return np.array([np.sum(W * dK) for dK in self._dK(A, A)])

    def to_dict(self):
        d = {"type": type(self).__name__}
        for name, v in self.params.items():
            d[name] = v.tolist()
        return d


class SquaredExponential(_Leaf):
    """``variance * exp(-|x - x'|^2 / (2 lengthscale^2))``."""

    _spec = {"lengthscale": "log", "variance": "log"}

    def __init__(self, lengthscale=1.0, variance=1.0):
        super().__init__(lengthscale=lengthscale, variance=variance)

    def _eval(self, A, B):
        r2 = np.sum(_diff(A, B) ** 2, axis=-1) / self.lengthscale ** 2
        return self.variance * np.exp(-0.5 * r2)

    def _dK(self, A, B):
        r2 = np.sum(_diff(A, B) ** 2, axis=-1) / self.lengthscale ** 2
        K = self.variance * np.exp(-0.5 * r2)
        yield K * r2
        yield K


class RationalQuadraticARD(_Leaf):
    """Rational quadratic with one lengthscale per input column.

    ``variance * (1 + r^2 / (2 alpha))^(-alpha)``, ``r^2 = sum_d ((x_d - x'_d) / l_d)^2``.
    """

    _spec = {"lengthscales": "log", "alpha": "log", "variance": "log"}

    def __init__(self, lengthscales=(1.0,), alpha=1.0, variance=1.0):
        super().__init__(lengthscales=np.atleast_1d(lengthscales), alpha=alpha, variance=variance)

    def _scaled(self, A, B):
        if A.shape[-1] != self.lengthscales.size:
            raise DataError(f"RQ-ARD has {self.lengthscales.size} lengthscales but inputs have {A.shape[-1]} columns")
        return (_diff(A, B) / self.lengthscales) ** 2

    def _eval(self, A, B):
        r2 = np.sum(self._scaled(A, B), axis=-1)
        return self.variance * (1.0 + r2 / (2.0 * self.alpha)) ** (-self.alpha)

    def _dK(self, A, B):
        s = self._scaled(A, B)
        r2 = np.sum(s, axis=-1)
        a = float(self.alpha)
        u = 1.0 + r2 / (2.0 * a)
        K = self.variance * u ** (-a)
        base = self.variance * u ** (-a - 1.0)
        for d in range(self.lengthscales.size):
            yield base * s[..., d]
        yield K * (-a * np.log(u) + r2 / (2.0 * u))
        yield K


class Matern52(_Leaf):
    """Matern kernel with smoothness 5/2 and an isotropic lengthscale."""

    _spec = {"lengthscale": "log", "variance": "log"}

    def __init__(self, lengthscale=1.0, variance=1.0):
        super().__init__(lengthscale=lengthscale, variance=variance)

    def _r(self, A, B):
        return np.sqrt(np.sum(_diff(A, B) ** 2, axis=-1)) / self.lengthscale

    def _eval(self, A, B):
        r = self._r(A, B)
        s5r = np.sqrt(5.0) * r
        return self.variance * (1.0 + s5r + 5.0 * r ** 2 / 3.0) * np.exp(-s5r)

    def _dK(self, A, B):
        r = self._r(A, B)
        s5r = np.sqrt(5.0) * r
        e = np.exp(-s5r)
        yield self.variance * (5.0 * r ** 2 / 3.0) * (1.0 + s5r) * e
        yield self.variance * (1.0 + s5r + 5.0 * r ** 2 / 3.0) * e


class SpectralMixture(_Leaf):
    """One-dimensional spectral mixture kernel.

    ``sum_q w_q exp(-2 pi^2 tau^2 v_q) cos(2 pi tau mu_q)`` with ``tau = t - t'``.
    Means are free (the kernel is even in each ``mu_q``).
    """

    _spec = {"weights": "lognn", "means": "raw", "variances": "log"}

    def __init__(self, weights=(1.0,), means=(0.0,), variances=(1.0,)):
        w, m, v = (np.atleast_1d(np.asarray(x, dtype=float)) for x in (weights, means, variances))
        if not (w.shape == m.shape == v.shape) or w.ndim != 1:
            raise ParameterError("spectral mixture weights, means and variances must have equal length")
        super().__init__(weights=w, means=m, variances=v)

    @property
    def n_components(self):
        return self.weights.size

    def _tau(self, A, B):
        if A.shape[-1] != 1:
            raise DataError("spectral mixture kernel is one-dimensional")
        return (A[..., :, None, 0] - B[..., None, :, 0])[..., None]

    def _eval(self, A, B):
        tau = self._tau(A, B)[..., 0]
        # inputs on a time grid repeat a handful of lags; evaluate each lag once
        lags, inv = np.unique(np.abs(tau), return_inverse=True)
        lags = lags[:, None]
        terms = self.weights * np.exp(-2 * np.pi ** 2 * lags ** 2 * self.variances) * np.cos(2 * np.pi * lags * self.means)
        return terms.sum(axis=-1)[inv].reshape(tau.shape)

    def _dK(self, A, B):
        tau = self._tau(A, B)
        env = np.exp(-2 * np.pi ** 2 * tau ** 2 * self.variances)
        phase = 2 * np.pi * tau * self.means
        cos = np.cos(phase)
        w = self.weights
        wec = w * env * cos
        for q in range(self.n_components):
            yield wec[..., q]
        wes = w * env * np.sin(phase)
        for q in range(self.n_components):
            yield -wes[..., q] * 2 * np.pi * tau[..., 0]
        for q in range(self.n_components):
            yield wec[..., q] * (-2 * np.pi ** 2 * tau[..., 0] ** 2 * self.variances[q])

    def bounds(self):
        Q = self.n_components
        return [LOG_BOUNDS] * Q + [(None, None)] * Q + [LOG_BOUNDS] * Q


class WhiteNoise(_Leaf):
    """``variance`` where inputs coincide exactly, zero elsewhere."""

    _spec = {"variance": "log"}

    def __init__(self, variance=1e-4):
        super().__init__(variance=variance)

    def _eval(self, A, B):
        return self.variance * np.all(_diff(A, B) == 0, axis=-1)

    def _dK(self, A, B):
        yield self._eval(A, B)


class Linear(_Leaf):
    """Non-stationary dot-product kernel ``variance * (x - offset) . (x' - offset)``."""

    _spec = {"variance": "log", "offset": "raw"}

    def __init__(self, variance=1.0, offset=0.0):
        super().__init__(variance=variance, offset=offset)

    def _eval(self, A, B):
        a, b = A - self.offset, B - self.offset
        return self.variance * np.einsum("...id,...jd->...ij", a, b)

    def _dK(self, A, B):
        a, b = A - self.offset, B - self.offset
        yield self.variance * np.einsum("...id,...jd->...ij", a, b)
        yield -self.variance * (a.sum(-1)[..., :, None] + b.sum(-1)[..., None, :])


# ---------------------------------------------------------------------------
# composites

class _Composite(Kernel):
    def __init__(self, children):
        flat = []
        for c in children:
            # flatten nested nodes of the same type
            flat += c.children if type(c) is type(self) else [c]
        if not flat:
            raise ParameterError(f"{type(self).__name__} needs at least one child")
        self.children = flat

    @property
    def theta(self):
        return np.concatenate([c.theta for c in self.children])

    @property
    def param_names(self):
        return [f"{i}.{n}" for i, c in enumerate(self.children) for n in c.param_names]

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ParameterError(f"expected {self.n_params} parameters, got {theta.size}")
        out, pos = [], 0
        for c in self.children:
            out.append(c.with_theta(theta[pos:pos + c.n_params]))
            pos += c.n_params
        return type(self)(out)

    def bounds(self):
        return [b for c in self.children for b in c.bounds()]

    def to_dict(self):
        return {"type": type(self).__name__, "children": [c.to_dict() for c in self.children]}

    def __repr__(self):
        sep = " + " if isinstance(self, Sum) else " * "
        return "(" + sep.join(repr(c) for c in self.children) + ")"


class Sum(_Composite):
    def _eval(self, A, B):
        return sum(c._eval(A, B) for c in self.children)

    def grad_contract(self, A, W):
        return np.concatenate([c.grad_contract(A, W) for c in self.children])


class Product(_Composite):
    def _eval(self, A, B):
        out = self.children[0]._eval(A, B)
        for c in self.children[1:]:
            out = out * c._eval(A, B)
        return out

    def grad_contract(self, A, W):
        A = _as_inputs(A)
        Ks = [c._eval(A, A) for c in self.children]
        grads = []
        for i, c in enumerate(self.children):
            Wi = W
            for j, K in enumerate(Ks):
                if j != i:
                    Wi = Wi * K
            grads.append(c.grad_contract(A, Wi))
        return np.concatenate(grads)


class OnDims(Kernel):
    """Apply ``kernel`` to the input columns listed in ``dims`` only."""

    def __init__(self, kernel, dims):
        self.kernel = kernel
        self.dims = tuple(int(d) for d in np.atleast_1d(dims))
        if not self.dims:
            raise ParameterError("OnDims needs at least one column")

    def _select(self, A):
        if max(self.dims) >= A.shape[-1]:
            raise DataError(f"kernel uses column {max(self.dims)} but inputs have {A.shape[-1]} columns")
        return A[..., list(self.dims)]

    def _eval(self, A, B):
        return self.kernel._eval(self._select(A), self._select(B))

    @property
    def theta(self):
        return self.kernel.theta

    @property
    def param_names(self):
        return self.kernel.param_names

    def with_theta(self, theta):
        return OnDims(self.kernel.with_theta(theta), self.dims)

    def bounds(self):
        return self.kernel.bounds()

    def grad_contract(self, A, W):
        return self.kernel.grad_contract(self._select(_as_inputs(A)), W)

    def to_dict(self):
        return {"type": "OnDims", "dims": list(self.dims), "kernel": self.kernel.to_dict()}

    def __repr__(self):
        return f"{self.kernel!r}@{list(self.dims)}"


_LEAVES = {cls.__name__: cls for cls in
           (SquaredExponential, RationalQuadraticARD, Matern52, SpectralMixture, WhiteNoise, Linear)}


def kernel_from_dict(d):
    """Inverse of ``Kernel.to_dict``."""
    kind = d.get("type")
    if kind in ("Sum", "Product"):
        cls = Sum if kind == "Sum" else Product
        return cls([kernel_from_dict(c) for c in d["children"]])
    if kind == "OnDims":
        return OnDims(kernel_from_dict(d["kernel"]), d["dims"])
    if kind not in _LEAVES:
        raise DataError(f"unknown kernel type {kind!r}")
    return _LEAVES[kind](**{k: v for k, v in d.items() if k != "type"})


def kernel_eval(kernel, A, B=None):
    return kernel(A, B)


def st_kernel(spatial, temporal):
    """Separable space-time covariance ``k_x * k_y * k_z * k_t`` over columns (x, y, z, t)."""
    if len(spatial) != 3:
        raise ParameterError("need exactly three per-axis spatial kernels")
    factors = [OnDims(k, [d]) for d, k in enumerate(spatial)]
    factors.append(OnDims(temporal, [3]))
    return Product(factors)


def spatial_axis_kernel(lengthscale, variance=1.0, alpha=1.0):
    """Per-axis spatial factor: RQ-ARD plus Matern-5/2, each carrying half the variance."""
    return Sum([RationalQuadraticARD([lengthscale], alpha=alpha, variance=variance / 2),
                Matern52(lengthscale, variance=variance / 2)])


def init_spectral_mixture(times, y, n_components=12, rng=None):
    """Random spectral mixture start from the sampling grid and target variance.

    Means are uniform on ``[0, Nyquist]``; each component's lengthscale is
    uniform over ``[dt, span]`` and ``variance = 1 / lengthscale^2``; weights
    share the sample variance equally.
    """
    rng = np.random.default_rng(rng)
    t = np.unique(np.asarray(times, dtype=float))
    if t.size < 2:
        raise DataError("need at least two distinct time points")
    dt = float(np.min(np.diff(t)))
    span = float(t[-1] - t[0])
    means = rng.uniform(0.0, 0.5 / dt, n_components)
    ls = rng.uniform(dt, max(span, dt * 1.0001), n_components)
    var_y = float(np.var(y)) if np.var(y) > 0 else 1.0
    return SpectralMixture(np.full(n_components, var_y / n_components), means, 1.0 / ls ** 2)

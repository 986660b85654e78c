"""Exact Gaussian-process regression on top of :mod:`bspm_osp.kernels`."""

import json
import logging

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .errors import DataError, NumericalError, ParameterError
from .kernels import (Linear, Product, Sum, WhiteNoise, init_spectral_mixture, kernel_from_dict,
                      spatial_axis_kernel, st_kernel)

log = logging.getLogger(__name__)

JITTER_REL = 1e-10
JITTER_DOUBLINGS = 8
LOG_2PI = np.log(2 * np.pi)


def jittered_cholesky(K):
    """Lower Cholesky factor of ``K + jitter * I``.

    Jitter starts at ``1e-10 * mean(diag(K))`` and doubles up to eight times.
    Returns ``(L, jitter)``.
    """
    K = np.asarray(K, dtype=float)
    scale = float(np.mean(np.diag(K))) if K.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        raise NumericalError(f"Gram matrix has non-positive mean diagonal {scale}")
    jitter = JITTER_REL * scale
    eye = np.eye(len(K))
    for _ in range(JITTER_DOUBLINGS + 1):
        try:
            L = np.linalg.cholesky(K + jitter * eye)
            if np.all(np.isfinite(L)):
                return L, jitter
        except np.linalg.LinAlgError:
            pass
        jitter *= 2
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(K)
    raise NumericalError(f"Cholesky failed after {JITTER_DOUBLINGS} jitter doublings "
                         f"(condition number estimate {cond:.3g})")


class GPModel:
    """Zero-mean GP conditioned on ``(X, Y)``.

    Targets are centred on their mean before conditioning and the mean is
    added back to predictions. The factor of ``K(X, X) + noise_var * I`` plus
    jitter is computed once at construction.
    """

    def __init__(self, X, Y, kernel, noise_var=1e-6, center=True):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(Y, dtype=float).ravel()
        if len(X) != len(Y):
            raise DataError(f"{len(X)} inputs but {len(Y)} targets")
        if len(Y) == 0:
            raise DataError("no training data")
        if not np.all(np.isfinite(Y)) or not np.all(np.isfinite(X)):
            raise DataError("non-finite training data")
        if noise_var < 0:
            raise ParameterError(f"noise variance must be >= 0, got {noise_var}")
        self.X, self.Y = X, Y
        self.kernel = kernel
        self.noise_var = float(noise_var)
        self.center = center
        self.offset = float(np.mean(Y)) if center else 0.0
        K = kernel(X) + self.noise_var * np.eye(len(X))
        self.L, self.jitter = jittered_cholesky(K)
        self.alpha = cho_solve((self.L, True), Y - self.offset)

    @property
    def n(self):
        return len(self.Y)

    @property
    def theta(self):
        return np.append(self.kernel.theta, np.log(self.noise_var))

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        return GPModel(self.X, self.Y, self.kernel.with_theta(theta[:-1]), float(np.exp(theta[-1])), self.center)

    def predict(self, X_star, full_cov=True):
        """Posterior mean and covariance (or variances if ``full_cov`` is False)."""
        Xs = np.asarray(X_star, dtype=float)
        if Xs.ndim == 1:
            Xs = Xs[:, None]
        if Xs.shape[1] != self.X.shape[1]:
            raise DataError(f"query dimension {Xs.shape[1]} != training dimension {self.X.shape[1]}")
        Ks = self.kernel(Xs, self.X)
        mean = Ks @ self.alpha + self.offset
        V = solve_triangular(self.L, Ks.T, lower=True)
        if full_cov:
            return mean, self.kernel(Xs) - V.T @ V
        return mean, self.kernel.diag(Xs) - np.sum(V ** 2, axis=0)

    def log_marginal_likelihood(self, grad=False):
        """Log evidence of the centred targets; optionally its gradient in ``theta``.

        The gradient covers the kernel's free parameters followed by
        ``log(noise_var)``.
        """
        y = self.Y - self.offset
        lml = (-0.5 * y @ self.alpha - np.sum(np.log(np.diag(self.L))) - 0.5 * self.n * LOG_2PI)
        if not grad:
            return float(lml)
        Kinv = cho_solve((self.L, True), np.eye(self.n))
        W = 0.5 * (np.outer(self.alpha, self.alpha) - Kinv)
        g_kernel = self.kernel.grad_contract(self.X, W)
        g_noise = self.noise_var * np.trace(W)
        return float(lml), np.append(g_kernel, g_noise)

    def to_dict(self):
        return {"kernel": self.kernel.to_dict(), "noise_var": self.noise_var}


def gp_predict(model, X_star, full_cov=True):
    return model.predict(X_star, full_cov=full_cov)


def log_marginal_likelihood(model):
    return model.log_marginal_likelihood()


def _bounds_for(model):
    return model.kernel.bounds() + [(np.log(1e-10), 20.0)]


def fit_hyperparameters(model, budget=100, seed=0, n_restarts=5, perturb=1.0):
    """Maximise the log marginal likelihood with multi-start L-BFGS in ``theta``.

    The first start is the model's current parameters, the others are
    Gaussian perturbations of them (scale ``perturb``) drawn from ``seed``.
    ``budget`` caps function evaluations per start. The returned model never
    has a lower LML than the input one.
    """
    if budget < 1:
        raise ParameterError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    bounds = _bounds_for(model)
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
    theta0 = np.clip(model.theta, lo, hi)

    try:
        best_lml = model.log_marginal_likelihood()
    except NumericalError:
        best_lml = -np.inf
    best = model
    if not np.isfinite(best_lml):
        best_lml = -np.inf

    def objective(theta):
        try:
            lml, g = model.with_theta(theta).log_marginal_likelihood(grad=True)
        except (NumericalError, ParameterError, FloatingPointError):
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(lml) or not np.all(np.isfinite(g)):
            return 1e25, np.zeros_like(theta)
        return -lml, -g

    any_finite = np.isfinite(best_lml)
    for start in range(n_restarts):
        if start == 0:
            x0 = theta0
        else:
            x0 = np.clip(theta0 + perturb * rng.standard_normal(theta0.size), lo, hi)
        with np.errstate(over="ignore", under="ignore"):
            res = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxfun": budget, "maxiter": budget})
        try:
            cand = model.with_theta(res.x)
            lml = cand.log_marginal_likelihood()
        except (NumericalError, ParameterError):
            continue
        if not np.isfinite(lml):
            continue
        any_finite = True
        log.debug("start %d: lml %.6g", start, lml)
        # strict improvement keeps the earliest start on ties
        if lml > best_lml:
            best, best_lml = cand, lml
    if not any_finite:
        raise NumericalError("no start produced a finite log marginal likelihood")
    return best


# ---------------------------------------------------------------------------
# space-time model construction

def default_st_kernel(X, Y, n_components=12, rng=None):
    """Initial separable kernel for (x, y, z, t) inputs.

    Per-axis spatial factors are RQ + Matern-5/2 with lengthscale equal to the
    axis standard deviation. The temporal factor is a spectral mixture plus
    white noise plus a linear term whose slope is one target standard
    deviation per time span.
    """
    X = np.asarray(X, dtype=float)
    rng = np.random.default_rng(rng)
    spatial = []
    for d in range(3):
        sd = float(np.std(X[:, d]))
        spatial.append(spatial_axis_kernel(sd if sd > 0 else 1.0))
    t = X[:, 3]
    sm = init_spectral_mixture(t, Y, n_components, rng)
    span = float(np.ptp(t)) or 1.0
    var_y = float(np.var(Y)) or 1.0
    temporal = Sum([sm, WhiteNoise(1e-4 * var_y), Linear(var_y / span ** 2, 0.0)])
    return st_kernel(spatial, temporal)


def fit_st_model(X, Y, n_components=12, budget=100, n_restarts=5, seed=0, init=None, noise_var=None):
    """Fit a space-time GP; ``init`` (a fitted model) warm-starts the search."""
    rng = np.random.default_rng(seed)
    if init is not None:
        kernel, nv = init.kernel, init.noise_var
    else:
        kernel = default_st_kernel(X, Y, n_components, rng)
        nv = 1e-2 * (float(np.var(Y)) or 1.0)
    if noise_var is not None:
        nv = noise_var
    model = GPModel(X, Y, kernel, nv)
    return fit_hyperparameters(model, budget=budget, seed=int(rng.integers(2 ** 31)), n_restarts=n_restarts)


def model_to_json(model):
    return json.dumps(model.to_dict())


def kernel_params_from_json(text):
    """Parse ``model_to_json`` output into ``(kernel, noise_var)``."""
    d = json.loads(text)
    return kernel_from_dict(d["kernel"]), float(d["noise_var"])


class GridGPModel:
    """Exact space-time GP on a full (leads x times) grid, via Kronecker algebra.

    The kernel must be a :class:`~bspm_osp.kernels.Product` whose last factor
    acts on the time column only and whose other factors act on spatial
    columns only (the layout produced by ``st_kernel``). Then
    ``K = S kron T`` and every solve reduces to two small eigendecompositions.
    ``Y`` has shape (n_leads, n_times). Results agree with :class:`GPModel`
    on the flattened lead-major data.
    """

    def __init__(self, coords, times, Y, kernel, noise_var=1e-6, center=True):
        self.coords = np.asarray(coords, dtype=float).reshape(-1, 3)
        self.times = np.asarray(times, dtype=float).ravel()
        Y = np.asarray(Y, dtype=float)
        if Y.shape != (len(self.coords), len(self.times)):
            raise DataError(f"targets must have shape {(len(self.coords), len(self.times))}, got {Y.shape}")
        if not np.all(np.isfinite(Y)):
            raise DataError("non-finite training data")
        if not isinstance(kernel, Product) or len(kernel.children) < 2:
            raise ParameterError("grid model needs a space-time product kernel")
        self.Y = Y
        self.kernel = kernel
        self.noise_var = float(noise_var)
        self.center = center
        self.offset = float(Y.mean()) if center else 0.0
        self._space = Product(kernel.children[:-1])
        self._time = kernel.children[-1]
        self._Xs = self._pad_space(self.coords)
        self._Xt = self._pad_time(self.times)

        S = self._space(self._Xs)
        T = self._time(self._Xt)
        self.S, self.T = S, T
        ls, self.Us = np.linalg.eigh(S)
        lt, self.Ut = np.linalg.eigh(T)
        self.ls, self.lt = np.maximum(ls, 0.0), np.maximum(lt, 0.0)
        mean_diag = float(np.mean(np.diag(S)) * np.mean(np.diag(T))) + self.noise_var
        if not np.isfinite(mean_diag) or mean_diag <= 0:
            raise NumericalError(f"Gram matrix has non-positive mean diagonal {mean_diag}")
        self.jitter = JITTER_REL * mean_diag
        self.eig = np.outer(self.ls, self.lt) + self.noise_var + self.jitter
        if np.any(self.eig <= 0) or not np.all(np.isfinite(self.eig)):
            raise NumericalError("space-time Gram is not positive definite")
        R = self.Y - self.offset
        self.alpha = self.Us @ ((self.Us.T @ R @ self.Ut) / self.eig) @ self.Ut.T

    @staticmethod
    def _pad_space(coords):
        return np.column_stack([coords, np.zeros(len(coords))])

    @staticmethod
    def _pad_time(times):
        out = np.zeros((len(times), 4))
        out[:, 3] = times
        return out

    @property
    def n(self):
        return self.Y.size

    @property
    def theta(self):
        return np.append(self.kernel.theta, np.log(self.noise_var))

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        return GridGPModel(self.coords, self.times, self.Y, self.kernel.with_theta(theta[:-1]),
                           float(np.exp(theta[-1])), self.center)

    def log_marginal_likelihood(self, grad=False):
        R = self.Y - self.offset
        lml = -0.5 * np.sum(R * self.alpha) - 0.5 * np.sum(np.log(self.eig)) - 0.5 * self.n * LOG_2PI
        if not grad:
            return float(lml)
        inv = 1.0 / self.eig
        c_s = inv @ self.lt
        c_t = self.ls @ inv
        A = self.alpha
        W_s = 0.5 * (A @ self.T @ A.T - (self.Us * c_s) @ self.Us.T)
        W_t = 0.5 * (A.T @ self.S @ A - (self.Ut * c_t) @ self.Ut.T)
        g_s = self._space.grad_contract(self._Xs, W_s)
        g_t = self._time.grad_contract(self._Xt, W_t)
        g_n = self.noise_var * 0.5 * (np.sum(A * A) - np.sum(inv))
        return float(lml), np.concatenate([g_s, g_t, [g_n]])

    def predict_mean(self, coords):
        """Posterior mean at new leads on the training time grid, shape (n_new, n_times)."""
        Xq = self._pad_space(np.asarray(coords, dtype=float).reshape(-1, 3))
        return self._space(Xq, self._Xs) @ self.alpha @ self.T + self.offset

    def to_dict(self):
        return {"kernel": self.kernel.to_dict(), "noise_var": self.noise_var}


def fit_grid_st_model(coords, times, Y, n_components=12, budget=100, n_restarts=5, seed=0, init=None,
                      center=False):
    """Fit a space-time GP on gridded data; ``init`` warm-starts from a fitted model."""
    rng = np.random.default_rng(seed)
    if init is not None:
        kernel, nv = init.kernel, init.noise_var
    else:
        coords = np.asarray(coords, dtype=float)
        times = np.asarray(times, dtype=float)
        X = np.column_stack([np.repeat(coords, len(times), axis=0), np.tile(times, len(coords))])
        kernel = default_st_kernel(X, np.ravel(Y), n_components, rng)
        nv = 1e-2 * (float(np.var(Y)) or 1.0)
    model = GridGPModel(coords, times, Y, kernel, nv, center=center)
    return fit_hyperparameters(model, budget=budget, seed=int(rng.integers(2 ** 31)), n_restarts=n_restarts)

"""Local approximate GP prediction with greedily grown neighbourhood designs.

Each query starts from its ``n0`` nearest data points and adds, one at a time,
the candidate from its ``n_cand`` nearest neighbours that most reduces the
posterior variance at the query (hyperparameters held fixed). The final
prediction is the exact GP on the ``n_end`` chosen points.

Queries are processed in vectorised blocks; no state crosses queries, so a
query's result does not depend on what else is in its block.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, NumericalError, ParameterError
from .gp import JITTER_DOUBLINGS, JITTER_REL

BLOCK = 256
TIE_TOL = 1e-10


@dataclass(frozen=True)
class LagpConfig:
    n0: int = 6
    n_end: int = 50
    n_cand: int = 100

    def __post_init__(self):
        if not 1 <= self.n0 < self.n_end:
            raise ParameterError(f"need 1 <= n0 < n_end, got n0={self.n0}, n_end={self.n_end}")
        if self.n_cand < self.n_end - self.n0:
            raise ParameterError("n_cand must be >= n_end - n0")

    def check_size(self, n_data):
        if n_data < self.n_end:
            raise DataError(f"local design needs {self.n_end} points but only {n_data} are available")


@dataclass
class LocalDesign:
    query: np.ndarray
    indices: np.ndarray
    mean: float
    variance: float
    path_variances: np.ndarray  # query variance after seeding and after each greedy addition


class LocalGP:
    """Data, kernel and neighbour index shared by all queries.

    Neighbourhoods use Euclidean distance after scaling every input column to
    unit standard deviation over the data. With ``center`` the targets are
    centred on their mean; otherwise the prior mean is zero.
    """

    def __init__(self, X, Y, kernel, noise_var, config=LagpConfig(), center=True):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float).ravel()
        if X.ndim != 2 or len(X) != len(Y):
            raise DataError(f"inputs {X.shape} and targets {Y.shape} disagree")
        config.check_size(len(X))
        self.X, self.Y = X, Y
        self.kernel = kernel
        self.noise_var = float(noise_var)
        self.config = config
        sd = X.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)
        self.tree = cKDTree(X / self.scale)
        self.offset = float(Y.mean()) if center else 0.0
        self.pool_size = min(len(X), max(config.n_cand, config.n_end))

    def _pools(self, Q):
        m = self.pool_size
        dist, idx = self.tree.query(Q / self.scale, k=m)
        dist, idx = dist.reshape(len(Q), m), idx.reshape(len(Q), m)
        # distances equal to 10 decimals (scaled units) are ties: lower data index first
        order = np.lexsort((idx, np.round(dist, 10)), axis=-1)
        return np.take_along_axis(idx, order, axis=-1)

    def predict(self, queries):
        Q = np.asarray(queries, dtype=float)
        if Q.ndim != 2 or Q.shape[1] != self.X.shape[1]:
            raise DataError(f"queries must have shape (q, {self.X.shape[1]})")
        out = []
        for start in range(0, len(Q), BLOCK):
            out += self._predict_block(Q[start:start + BLOCK], start)
        return out

    def _predict_block(self, Q, first_index):
        cfg = self.config
        B, m = len(Q), self.pool_size
        pools = self._pools(Q)
        Xp = self.X[pools]
        q = Q[:, None, :]
        kern = self.kernel
        k_ps = kern(Xp, q)[..., 0]
        k_ss = kern.diag(Q)
        d_p = kern.diag(Xp)
        jitter = JITTER_REL * (d_p.mean(axis=1) + self.noise_var)
        nugget = self.noise_var + jitter

        V = np.zeros((B, cfg.n_end, m))
        w = np.zeros((B, cfg.n_end))
        nv_c = d_p + nugget[:, None]
        chosen = np.zeros((B, cfg.n_end), dtype=np.int64)
        taken = np.zeros((B, m), dtype=bool)
        rows = np.arange(B)
        path = np.zeros((B, cfg.n_end - cfg.n0 + 1))

        def add(j, p):
            nonlocal cov, var_c
            l = V[rows, :j, p]
            pivot = nv_c[rows, p] - np.sum(l * l, axis=1) if j else nv_c[rows, p]
            bad = np.flatnonzero(pivot <= 0)
            if bad.size:
                raise NumericalError(f"query {first_index + bad[0]}: non-positive pivot {pivot[bad[0]]:.3g}")
            d = np.sqrt(pivot)
            k_row = kern(Xp[rows, p][:, None, :], Xp)[:, 0, :]
            if j:
                k_row = k_row - np.matmul(l[:, None, :], V[:, :j, :])[:, 0, :]
                ws = k_ps[rows, p] - np.sum(l * w[:, :j], axis=1)
            else:
                ws = k_ps[rows, p]
            V[:, j, :] = k_row / d[:, None]
            w[:, j] = ws / d
            chosen[:, j] = p
            taken[rows, p] = True
            # residual covariance with the query and residual variance of every candidate
            cov -= V[:, j, :] * w[:, j, None]
            var_c -= V[:, j, :] ** 2

        cov = k_ps.copy()
        var_c = nv_c.copy()
        for j in range(cfg.n0):
            add(j, np.full(B, j))
        path[:, 0] = k_ss - np.sum(w[:, :cfg.n0] ** 2, axis=1)
        for j in range(cfg.n0, cfg.n_end):
            with np.errstate(divide="ignore", invalid="ignore"):
                red = np.where(var_c > 0, cov * cov / var_c, 0.0)
            red[taken] = -np.inf
            best = red.max(axis=1)
            # reductions within TIE_TOL * prior variance count as ties: lowest data index wins
            tied = red >= best[:, None] - TIE_TOL * k_ss[:, None]
            p_data = np.where(tied, pools, np.iinfo(np.int64).max).min(axis=1)
            p = np.argmax(pools == p_data[:, None], axis=1)
            add(j, p)
            path[:, j - cfg.n0 + 1] = k_ss - np.sum(w[:, :j + 1] ** 2, axis=1)

        idx = np.take_along_axis(pools, chosen, axis=1)
        Xd = self.X[idx]
        yd = self.Y[idx] - self.offset
        mean, var = self._exact_block(Xd, yd, Q, first_index)
        return [LocalDesign(Q[b], idx[b], float(mean[b]), float(max(var[b], 0.0)), path[b])
                for b in range(B)]

    def _exact_block(self, Xd, yd, Q, first_index):
        kern = self.kernel
        n = Xd.shape[1]
        G = kern(Xd) + self.noise_var * np.eye(n)
        scale = np.einsum("bii->b", G) / n
        jitter = JITTER_REL * scale
        L = np.empty_like(G)
        for b in range(len(G)):
            L[b] = _cholesky_escalating(G[b], jitter[b], first_index + b)
        ks = kern(Xd, Q[:, None, :])[..., 0]
        a = np.linalg.solve(L, ks[..., None])[..., 0]
        z = np.linalg.solve(L, yd[..., None])[..., 0]
        mean = np.sum(a * z, axis=1) + self.offset
        var = kern.diag(Q) - np.sum(a * a, axis=1)
        return mean, var


def _cholesky_escalating(G, jitter, qi):
    eye = np.eye(len(G))
    for _ in range(JITTER_DOUBLINGS + 1):
        try:
            return np.linalg.cholesky(G + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 2
    raise NumericalError(f"query {qi}: local Gram not positive definite after jitter escalation")


def lagp_predict(query, X, Y, kernel, noise_var, config=LagpConfig()):
    """Local design and prediction for a single query point."""
    return LocalGP(X, Y, kernel, noise_var, config).predict(np.atleast_2d(query))[0]


def lagp_batch(queries, X, Y, kernel, noise_var, config=LagpConfig()):
    """Independent local predictions for every row of ``queries``."""
    return LocalGP(X, Y, kernel, noise_var, config).predict(queries)


def designs_to_csv(designs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query", "x", "y", "z", "t", "mean_mv", "var_mv2"])
        for i, d in enumerate(designs):
            w.writerow([i] + [repr(float(c)) for c in d.query[:4]] + [repr(d.mean), repr(d.variance)])

"""Independent reference computations used by the tests.

Everything here is deliberately naive: explicit solves, full recomputation at
every step, brute-force enumeration.
"""

import numpy as np


def dense_gp_predict(X, Y, kernel, noise_var, Xs):
    """GP posterior by explicit solves with the same jitter policy as the library."""
    K = kernel(X) + noise_var * np.eye(len(X))
    K = K + 1e-10 * np.mean(np.diag(K)) * np.eye(len(X))
    off = np.mean(Y)
    Ks = kernel(Xs, X)
    mean = Ks @ np.linalg.solve(K, Y - off) + off
    cov = kernel(Xs) - Ks @ np.linalg.solve(K, Ks.T)
    return mean, cov


def fd_gradient(model, h):
    th = model.theta
    out = np.empty_like(th)
    for i in range(th.size):
        e = np.zeros_like(th)
        e[i] = h
        out[i] = (model.with_theta(th + e).log_marginal_likelihood()
                  - model.with_theta(th - e).log_marginal_likelihood()) / (2 * h)
    return out


def gplmk_bruteforce(K, n, jitter=1e-10, seeds=(), tie_tol=1e-10):
    """Landmarks by recomputing the full posterior variance from scratch every step.

    Variances within ``tie_tol * max(diag K)`` of the best are ties, won by the lowest index.
    """
    chosen = list(seeds)
    seq, scores = [], []
    for _ in range(n):
        if chosen:
            G = K[np.ix_(chosen, chosen)] + jitter * np.eye(len(chosen))
            C = K[chosen]
            var = np.diag(K) - np.einsum("ij,ij->j", C, np.linalg.solve(G, C))
        else:
            var = np.diag(K).copy()
        var[chosen] = -np.inf
        best = var.max()
        i = min(j for j in range(len(var)) if var[j] >= best - tie_tol * np.max(np.diag(K)))
        seq.append(i)
        scores.append(float(var[i]))
        chosen.append(i)
    return seq, scores


def query_variance(X, kernel, nugget, design, s):
    """Latent posterior variance at ``s`` given noisy observations at ``X[design]``."""
    Xd = X[design]
    G = kernel(Xd) + nugget * np.eye(len(design))
    k = kernel(Xd, s[None, :])[:, 0]
    return float(kernel.diag(s[None, :])[0] - k @ np.linalg.solve(G, k))


def lagp_bruteforce(X, kernel, noise_var, s, n0, n_end, pool_size, tie_tol=1e-10):
    """Greedy local design by enumerating every remaining candidate at each step."""
    scale = np.where(X.std(axis=0) > 0, X.std(axis=0), 1.0)
    d = np.sqrt(np.sum(((X - s) / scale) ** 2, axis=1))
    order = np.lexsort((np.arange(len(X)), np.round(d, 10)))
    pool = list(order[:pool_size])
    nugget = noise_var + 1e-10 * (np.mean(kernel.diag(X[pool])) + noise_var)
    design = pool[:n0]
    prior = float(kernel.diag(s[None, :])[0])
    while len(design) < n_end:
        cands = sorted(i for i in pool if i not in design)
        v = [query_variance(X, kernel, nugget, design + [c], s) for c in cands]
        # variances within tie_tol * prior of the best are ties, won by the lowest index
        design.append(next(c for c, vc in zip(cands, v) if vc <= min(v) + tie_tol * prior))
    return design


def pooled_r2(actual, predicted):
    a = np.asarray(actual).ravel()
    p = np.asarray(predicted).ravel()
    return 100 * (1 - np.sum((a - p) ** 2) / np.sum((a - a.mean()) ** 2))

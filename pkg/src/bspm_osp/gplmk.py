"""Gaussian-process landmarking on triangle meshes.

A curvature-weighted heat kernel defines a GP prior over mesh vertices;
landmarks are picked one at a time at the vertex with the largest posterior
variance given the landmarks chosen so far.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError, ParameterError
from .mesh import curvatures, heat_kernel, median_sq_distance, vertex_areas


TIE_TOL = 1e-10


class FlatGeometryError(ParameterError):
    """A curvature term of the weight function has a zero normaliser."""


@dataclass(frozen=True)
class GplmkConfig:
    lam: float = 0.5
    rho: float = 1.0
    bandwidth: float = None  # None -> median squared pairwise vertex distance
    n_landmarks: int = 30
    jitter: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.rho > 0:
            raise ParameterError(f"rho must be positive, got {self.rho}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ParameterError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.n_landmarks < 1:
            raise ParameterError("n_landmarks must be >= 1")


@dataclass
class LandmarkSequence:
    indices: list = field(default_factory=list)
    scores: list = field(default_factory=list)

    def __len__(self):
        return len(self.indices)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "vertex_id", "score"])
            for r, (i, s) in enumerate(zip(self.indices, self.scores)):
                w.writerow([r, int(i), repr(float(s))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        try:
            rows.sort(key=lambda r: int(r["rank"]))
            return cls([int(r["vertex_id"]) for r in rows], [float(r["score"]) for r in rows])
        except (KeyError, ValueError) as exc:
            raise DataError(f"{Path(path).name}: bad landmark CSV ({exc})") from None


def gplmk_weights(geometry, config):
    """Per-vertex weights mixing normalised |Gaussian| and |mean| curvature.

    The result satisfies ``sum(w * area) == 1``.
    """
    area = np.asarray(geometry.area, dtype=float)
    if np.any(area <= 0):
        raise DataError("vertex areas must be positive")
    w = np.zeros_like(area)
    for coef, curv, name in ((config.lam, geometry.gauss_k, "Gaussian"),
                             (1.0 - config.lam, geometry.mean_eta, "mean")):
        if coef == 0:
            continue
        mag = np.abs(curv) ** config.rho
        denom = float(np.sum(mag * area))
        if denom == 0:
            raise FlatGeometryError(f"{name} curvature vanishes everywhere; fall back to uniform weights")
        w += coef * mag / denom
    return w


def reweighted_kernel(heat_half, weights, areas):
    """``K^T diag(weights * areas) K`` for the half-bandwidth heat kernel ``K``."""
    K = np.asarray(heat_half, dtype=float)
    w, a = np.asarray(weights, dtype=float), np.asarray(areas, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or not K.shape[0] == w.size == a.size:
        raise DataError(f"shape mismatch: kernel {K.shape}, weights {np.shape(weights)}, areas {np.shape(areas)}")
    if np.any(w < 0) or np.any(a < 0):
        raise DataError("weights and areas must be non-negative")
    c = w * a
    out = K.T @ (c[:, None] * K)
    return 0.5 * (out + out.T)


def gplmk_sequence(kernel, config, seed_indices=()):
    """Greedy maximum-variance landmark sequence.

    Posterior variances are kept current with one Cholesky row per step
    (``O(n V)`` work). Already selected vertices, including ``seed_indices``,
    are never picked again. Variances within ``TIE_TOL * max(diag)`` of the
    maximum count as tied (symmetric meshes produce exact ties that rounding
    would otherwise break arbitrarily); ties go to the lowest vertex index.
    """
    K = np.asarray(kernel, dtype=float)
    nv = len(K)
    seeds = [int(i) for i in seed_indices]
    if len(set(seeds)) != len(seeds) or any(not 0 <= i < nv for i in seeds):
        raise DataError("seed indices must be distinct vertex ids")
    if config.n_landmarks + len(seeds) > nv:
        raise ParameterError(f"cannot draw {config.n_landmarks} landmarks plus {len(seeds)} seeds "
                             f"from {nv} vertices")
    jitter = config.jitter
    scale = float(np.max(np.diag(K)))
    var = np.diag(K).copy()
    V = np.empty((0, nv))
    taken = np.zeros(nv, dtype=bool)

    def add(i):
        nonlocal V, var
        l = V[:, i]
        pivot = K[i, i] + jitter - l @ l
        if pivot <= 0:
            raise NumericalError(f"non-positive pivot {pivot:.3g} at vertex {i}")
        row = (K[i] - l @ V) / np.sqrt(pivot)
        V = np.vstack([V, row])
        var = var - row ** 2
        taken[i] = True

    for i in seeds:
        add(i)
    seq = LandmarkSequence()
    for _ in range(config.n_landmarks):
        masked = np.where(taken, -np.inf, var)
        i = int(np.argmax(masked >= masked.max() - TIE_TOL * scale))
        score = float(var[i])
        if score < -1e-8 * scale:
            raise NumericalError(f"kernel is not PSD: variance {score:.3g} at vertex {i}")
        seq.indices.append(i)
        seq.scores.append(score)
        add(i)
    return seq


def landmarks_for_mesh(mesh, config, seed_indices=()):
    """Full pipeline: areas, curvature, weights, reweighted kernel, greedy sequence."""
    areas = vertex_areas(mesh)
    geom = curvatures(mesh, areas)
    t = config.bandwidth if config.bandwidth is not None else median_sq_distance(mesh.vertices)
    try:
        w = gplmk_weights(geom, config)
    except FlatGeometryError:
        w = np.full(mesh.n_vertices, 1.0 / areas.sum())
    Kw = reweighted_kernel(heat_kernel(mesh, t / 2.0), w, areas)
    return gplmk_sequence(Kw, config, seed_indices)

"""Sequential sensor selection driven by space-time GP prediction errors.

Starting from a Latin hypercube design, each iteration takes the next slice of
GPLMK landmarks as test locations, fits a space-time GP on the current
sensors, predicts the test leads and keeps the leads it predicts worst.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from .errors import DataError, NumericalError, ParameterError
from .gp import GridGPModel, fit_grid_st_model

log = logging.getLogger(__name__)

LHD_ATTEMPTS = 100


@dataclass(frozen=True)
class PlacementConfig:
    n_init: int = 10
    slice_size: int = 40
    per_iter: int = 5
    target: int = 30
    time_stride: int = None  # None -> smallest stride keeping fitted points <= max_fit_points
    max_fit_points: int = 4000
    refit_each_iter: bool = True
    sm_components: int = 12
    fit_budget: int = 60
    fit_restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_init < 1 or self.per_iter < 1 or self.target < self.n_init:
            raise ParameterError("need n_init >= 1, per_iter >= 1 and target >= n_init")
        if (self.target - self.n_init) % self.per_iter:
            raise ParameterError("target - n_init must be a multiple of per_iter")
        if self.per_iter > self.slice_size:
            raise ParameterError("per_iter cannot exceed slice_size")
        if self.time_stride is not None and self.time_stride < 1:
            raise ParameterError("time_stride must be >= 1")

    @property
    def n_iterations(self):
        return (self.target - self.n_init) // self.per_iter

    def stride_for(self, n_samples):
        if self.time_stride is not None:
            return self.time_stride
        max_leads = max(self.target - self.per_iter, self.n_init)
        return max(1, math.ceil(max_leads * n_samples / self.max_fit_points))


@dataclass
class SensorSet:
    """Selected lead ids in selection order with where each came from."""

    ids: list
    provenance: list  # "init", "iter<k>" or "uniform"
    diagnostics: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)

    def to_dict(self):
        return {"ids": [int(i) for i in self.ids], "provenance": list(self.provenance),
                "config": self.config, "diagnostics": self.diagnostics}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        try:
            ids = [int(i) for i in d["ids"]]
            prov = list(d.get("provenance", ["unknown"] * len(ids)))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad sensor set document: {exc}") from None
        if len(set(ids)) != len(ids):
            raise DataError("sensor ids must be distinct")
        return cls(ids, prov, d.get("diagnostics", []), d.get("config", {}))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "vertex_id", "provenance"])
            for r, (i, p) in enumerate(zip(self.ids, self.provenance)):
                w.writerow([r, int(i), p])


def lhd_samples(lo, hi, n, rng):
    """``n`` Latin hypercube points in the box ``[lo, hi]``."""
    sampler = qmc.LatinHypercube(d=len(lo), seed=rng)
    return qmc.scale(sampler.random(n), lo, hi)


def lhd_init(mesh, n, seed=0):
    """``n`` distinct vertices nearest to a Latin hypercube drawn in the bounding box.

    The whole design is redrawn when two samples snap to the same vertex.
    """
    if not 1 <= n <= mesh.n_vertices:
        raise ParameterError(f"cannot pick {n} of {mesh.n_vertices} vertices")
    rng = np.random.default_rng(seed)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    tree = cKDTree(mesh.vertices)
    for _ in range(LHD_ATTEMPTS):
        _, idx = tree.query(lhd_samples(lo, hi, n, rng))
        idx = [int(i) for i in np.atleast_1d(idx)]
        if len(set(idx)) == n:
            return idx
    raise NumericalError(f"no collision-free Latin hypercube after {LHD_ATTEMPTS} draws; "
                         "try uniform_baseline (farthest-point) initialisation instead")


def uniform_baseline(mesh_or_points, k, seed=None):
    """Farthest-point sampling from the vertex nearest the centroid.

    Deterministic; ``seed`` is accepted for interface symmetry and unused.
    """
    pts = np.asarray(getattr(mesh_or_points, "vertices", mesh_or_points), dtype=float)
    if not 1 <= k <= len(pts):
        raise ParameterError(f"cannot pick {k} of {len(pts)} points")
    first = int(np.argmin(np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)))
    chosen = [first]
    mind = np.sqrt(np.sum((pts - pts[first]) ** 2, axis=1))
    for _ in range(k - 1):
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, np.sqrt(np.sum((pts - pts[nxt]) ** 2, axis=1)))
    return chosen


def next_slice(landmarks, start, size, exclude):
    """Next ``size`` landmark ids from rank ``start`` on that are not in ``exclude``.

    Returns ``(ids, ranks, next_start)``.
    """
    ids, ranks = [], []
    r = start
    while len(ids) < size and r < len(landmarks):
        v = int(landmarks[r])
        if v not in exclude:
            ids.append(v)
            ranks.append(r)
        r += 1
    return ids, ranks, r


def rank_by_error(errors, k):
    """Positions of the ``k`` largest errors; earlier positions win ties."""
    order = sorted(range(len(errors)), key=lambda i: (-errors[i], i))
    return order[:k]


def select_sensors(dataset, mesh, landmarks, config=PlacementConfig()):
    """Run the sequential selection loop and return a :class:`SensorSet`."""
    if dataset.n_leads != mesh.n_vertices:
        raise DataError(f"dataset has {dataset.n_leads} leads but mesh has {mesh.n_vertices} vertices")
    if config.target > dataset.n_leads:
        raise ParameterError("target exceeds number of leads")
    order = list(getattr(landmarks, "indices", landmarks))
    stride = config.stride_for(dataset.n_samples)
    t_idx = np.arange(0, dataset.n_samples, stride)
    times = dataset.times[t_idx]
    P = dataset.potentials[t_idx].T  # (L, nt)
    coords = dataset.lead_coords

    ids = lhd_init(mesh, config.n_init, config.seed)
    prov = ["init"] * len(ids)
    diags = []
    cursor = 0
    model = None
    for it in range(1, config.n_iterations + 1):
        test_ids, test_ranks, cursor = next_slice(order, cursor, config.slice_size, set(ids))
        if len(test_ids) < config.slice_size:
            raise DataError(f"landmark sequence exhausted at iteration {it}: {len(order)} landmarks "
                            f"cannot supply {config.n_iterations} slices of {config.slice_size}")
        seed = config.seed * 1000 + it
        try:
            if model is None or config.refit_each_iter:
                model = fit_grid_st_model(coords[ids], times, P[ids], n_components=config.sm_components,
                                          budget=config.fit_budget, n_restarts=config.fit_restarts,
                                          seed=seed, init=model)
            else:
                model = GridGPModel(coords[ids], times, P[ids], model.kernel, model.noise_var)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}: {exc}") from exc
        pred = model.predict_mean(coords[test_ids])
        err = np.sum(np.abs(P[test_ids] - pred), axis=1)
        picks = rank_by_error(err.tolist(), config.per_iter)
        new = [test_ids[p] for p in picks]
        log.info("iteration %d: picked %s", it, new)
        diags.append({
            "iteration": it,
            "test_ids": test_ids,
            "test_ranks": test_ranks,
            "abs_error_sums": [float(e) for e in err],
            "picked": new,
            "n_train_points": int(model.n),
            "lml": model.log_marginal_likelihood(),
            "model": model.to_dict(),
        })
        ids += new
        prov += [f"iter{it}"] * len(new)
    cfg = asdict(config)
    cfg["time_stride_used"] = stride
    return SensorSet(ids, prov, diags, cfg)


def front_back_split(coords, ids, axis=1):
    """Count selected leads on the negative / positive side of ``axis`` about the centroid."""
    c = np.asarray(coords, dtype=float)
    mid = c[:, axis].mean()
    side = c[ids, axis] < mid
    return int(side.sum()), int((~side).sum())


def min_pairwise_distance(points, ids):
    d = cdist(points[ids], points[ids])
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())

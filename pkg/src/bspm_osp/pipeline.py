"""End-to-end runs shared by the command line and the demos.

``RunConfig`` mirrors the JSON configuration file; the ``run_*`` functions
chain landmarking, sensor selection, reconstruction and scoring.
"""

import json
import math
from dataclasses import asdict, dataclass, fields

from .data import qrs_extract
from .errors import DataError, ParameterError
from .evaluation import fit_reconstruction_model, reconstruct, score, split_sensors
from .gplmk import GplmkConfig, landmarks_for_mesh
from .lagp import LagpConfig
from .placement import PlacementConfig, SensorSet, select_sensors, uniform_baseline


@dataclass(frozen=True)
class RunConfig:
    n_init: int = 10
    slice_size: int = 40
    per_iter: int = 5
    target: int = 30
    lam: float = 0.5
    rho: float = 1.0
    gplmk_bandwidth_t: float = None
    sm_components: int = 12
    lagp_n0: int = 6
    lagp_n_end: int = 50
    lagp_n_cand: int = 100
    time_stride: int = None
    qrs_window: list = None
    seed: int = 0
    # hyperparameter search effort: selection loop, then the reconstruction model
    select_fit_budget: int = 40
    select_fit_restarts: int = 2
    recon_fit_budget: int = 100
    recon_fit_restarts: int = 3
    max_fit_points: int = 4000

    # JSON uses "lambda", which is a Python keyword
    _ALIASES = {"lambda": "lam"}

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            k = cls._ALIASES.get(k, k)
            if k not in names:
                raise ParameterError(f"unknown config key {k!r}")
            kw[k] = v
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(d, dict):
            raise ParameterError(f"{path}: config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def validate(self):
        self.placement()
        self.gplmk()
        self.lagp()
        if self.qrs_window is not None and len(self.qrs_window) != 2:
            raise ParameterError("qrs_window must be [t0, t1] or null")
        for name in ("recon_fit_budget", "recon_fit_restarts", "select_fit_budget", "select_fit_restarts"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")

    def placement(self):
        return PlacementConfig(n_init=self.n_init, slice_size=self.slice_size, per_iter=self.per_iter,
                               target=self.target, time_stride=self.time_stride,
                               max_fit_points=self.max_fit_points, sm_components=self.sm_components,
                               fit_budget=self.select_fit_budget, fit_restarts=self.select_fit_restarts,
                               seed=self.seed)

    def gplmk(self, n_landmarks=None):
        return GplmkConfig(lam=self.lam, rho=self.rho, bandwidth=self.gplmk_bandwidth_t,
                           n_landmarks=n_landmarks or 1)

    def lagp(self):
        return LagpConfig(self.lagp_n0, self.lagp_n_end, self.lagp_n_cand)

    def recon_stride(self, n_sensors, n_samples):
        if self.time_stride is not None:
            return self.time_stride
        return max(1, math.ceil(n_sensors * n_samples / self.max_fit_points))


def landmarks_needed(cfg):
    """Landmarks consumed by the selection loop in the worst case."""
    p = cfg.placement()
    return p.target + p.n_iterations * p.slice_size


def run_landmarks(mesh, cfg, n=None):
    """GPLMK sequence long enough for selection (capped at the vertex count)."""
    n = n or min(mesh.n_vertices, landmarks_needed(cfg))
    return landmarks_for_mesh(mesh, cfg.gplmk(n))


def run_select(dataset, mesh, cfg, landmarks=None):
    if landmarks is None:
        landmarks = run_landmarks(mesh, cfg)
    return select_sensors(dataset, mesh, landmarks, cfg.placement())


def run_baseline(mesh, cfg):
    ids = uniform_baseline(mesh, cfg.target)
    return SensorSet(ids, ["uniform"] * len(ids), [], {"target": cfg.target})


def segment_of(dataset, cfg, segment="qrs"):
    """The scored part of the record and its label for reports."""
    if segment == "full":
        return dataset, "full"
    if segment != "qrs":
        raise ParameterError(f"unknown segment {segment!r}")
    q = qrs_extract(dataset, cfg.qrs_window)
    return q, q.meta["qrs_window_ms"]


def run_reconstruct(dataset, sensor_ids, cfg, segment="qrs"):
    """Fit on the sensors' full record, predict the validation leads on the segment.

    Returns ``(reconstruction, scored_dataset, segment_label, model)``.
    """
    obs, _ = split_sensors(dataset, sensor_ids)
    stride = cfg.recon_stride(len(obs.coords), dataset.n_samples)
    model = fit_reconstruction_model(obs, cfg.sm_components, cfg.recon_fit_budget, cfg.recon_fit_restarts,
                                     cfg.seed, stride=stride)
    scored, label = segment_of(dataset, cfg, segment)
    recon = reconstruct(scored, sensor_ids, model.kernel, model.noise_var, cfg.lagp())
    return recon, scored, label, model


def run_evaluate(dataset, sensor_ids, cfg, method="gplmk", segment="qrs"):
    recon, scored, label, model = run_reconstruct(dataset, sensor_ids, cfg, segment)
    echo = dict(cfg.to_dict(), fitted_model=model.to_dict())
    return score(scored, recon, method, label, echo), recon, scored


def check_alignment(dataset, mesh):
    if dataset.n_leads != mesh.n_vertices:
        raise DataError(f"dataset has {dataset.n_leads} leads but mesh has {mesh.n_vertices} vertices")

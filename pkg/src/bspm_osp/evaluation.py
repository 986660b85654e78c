"""Field reconstruction from selected sensors and accuracy scoring."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import DataError
from .gp import fit_grid_st_model
from .lagp import LagpConfig, LocalGP


@dataclass(frozen=True)
class SensorObservations:
    """Everything a reconstruction may see: sensor positions and their signals."""

    coords: np.ndarray  # (k, 3)
    times: np.ndarray  # (T,)
    potentials: np.ndarray  # (T, k)

    def grid_inputs(self):
        """Lead-major (x, y, z, t) rows and the matching targets."""
        k, T = len(self.coords), len(self.times)
        X = np.column_stack([np.repeat(self.coords, T, axis=0), np.tile(self.times, k)])
        return X, self.potentials.T.ravel()


@dataclass
class Reconstruction:
    lead_ids: list
    predicted: np.ndarray  # (T, n_validation)
    variance: np.ndarray


def split_sensors(dataset, sensor_ids):
    """Return ``(observations, validation_ids)``; validation signals are not touched."""
    ids = [int(i) for i in sensor_ids]
    if len(set(ids)) != len(ids):
        raise DataError("sensor ids must be distinct")
    bad = [i for i in ids if not 0 <= i < dataset.n_leads]
    if bad:
        raise DataError(f"sensor id {bad[0]} outside 0..{dataset.n_leads - 1}")
    chosen = set(ids)
    val = [i for i in range(dataset.n_leads) if i not in chosen]
    obs = SensorObservations(dataset.lead_coords[ids].copy(), dataset.times.copy(),
                             dataset.potentials[:, ids].copy())
    return obs, val


def fit_reconstruction_model(obs, n_components=12, budget=60, n_restarts=3, seed=0, stride=1):
    """Space-time GP fitted on the sensor signals (optionally time-strided)."""
    return fit_grid_st_model(obs.coords, obs.times[::stride], obs.potentials[::stride].T,
                             n_components=n_components, budget=budget, n_restarts=n_restarts, seed=seed)


def predict_field(obs, query_coords, kernel, noise_var, config=LagpConfig()):
    """laGP prediction at every (query lead, sensor time) pair, shape (T, n_query)."""
    X, Y = obs.grid_inputs()
    lgp = LocalGP(X, Y, kernel, noise_var, config, center=False)
    qc = np.asarray(query_coords, dtype=float).reshape(-1, 3)
    T = len(obs.times)
    Q = np.column_stack([np.repeat(qc, T, axis=0), np.tile(obs.times, len(qc))])
    designs = lgp.predict(Q)
    mean = np.array([d.mean for d in designs]).reshape(len(qc), T).T
    var = np.array([d.variance for d in designs]).reshape(len(qc), T).T
    return mean, var


def reconstruct(dataset, sensor_ids, kernel, noise_var, config=LagpConfig()):
    """Predict every validation lead from the sensor leads only."""
    obs, val = split_sensors(dataset, sensor_ids)
    mean, var = predict_field(obs, dataset.lead_coords[val], kernel, noise_var, config)
    return Reconstruction(val, mean, var)


def metrics(actual, predicted):
    """Pooled R^2 (percent) and mean absolute error over all leads and samples."""
    # contiguous copies fix the reduction order, so equal inputs give bit-equal scores
    a = np.ascontiguousarray(actual, dtype=float)
    p = np.ascontiguousarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise DataError(f"shape mismatch: actual {a.shape}, predicted {p.shape}")
    if a.size == 0:
        raise DataError("empty input")
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0:
        raise DataError("actual values have zero variance; R^2 undefined")
    ss_res = float(np.sum((a - p) ** 2))
    return 100.0 * (1.0 - ss_res / ss_tot), float(np.mean(np.abs(a - p)))


@dataclass
class EvalReport:
    method: str
    segment: object  # "full" or [t0, t1]
    r2_percent: float
    mae_mv: float
    n_validation: int
    per_lead: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {"method": self.method, "segment": self.segment, "r2_percent": self.r2_percent,
                "mae_mv": self.mae_mv, "n_validation": self.n_validation, "per_lead": self.per_lead,
                "config": self.config, "units": {"potential": "mV", "time": "ms"},
                "tool_version": __version__}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def score(dataset, recon, method="gplmk", segment="full", config=None):
    """Compare a reconstruction with the held-out validation signals."""
    actual = dataset.potentials[:, recon.lead_ids]
    if actual.shape != recon.predicted.shape:
        raise DataError(f"reconstruction shape {recon.predicted.shape} does not match data {actual.shape}")
    r2, mae = metrics(actual, recon.predicted)
    err = np.ascontiguousarray((actual - recon.predicted).T)
    per_lead = [{"lead": int(l), "mae_mv": float(np.mean(np.abs(e))), "rmse_mv": float(np.sqrt(np.mean(e ** 2)))}
                for l, e in zip(recon.lead_ids, err)]
    return EvalReport(method, segment, r2, mae, len(recon.lead_ids), per_lead, config or {})


def predictions_to_csv(recon, times, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ms"] + [f"lead_{i}" for i in recon.lead_ids])
        for t, row in zip(times, recon.predicted):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def predictions_from_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0] != "t_ms":
        raise DataError(f"{path}: not a predictions file")
    try:
        ids = [int(h.split("_", 1)[1]) for h in rows[0][1:]]
        vals = np.array(rows[1:], dtype=float)
    except (IndexError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    return vals[:, 0], Reconstruction(ids, vals[:, 1:], np.zeros_like(vals[:, 1:]))

"""Body-surface potential recordings: CSV I/O, QRS windowing and synthetic data."""

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError

QRS_THRESHOLD = 0.2
NOISE_FLOOR_RATIO = 1.5


@dataclass(frozen=True)
class BspmDataset:
    """Potentials in mV, shape (T, L); times in ms; lead coordinates, shape (L, 3).

    Lead order matches mesh vertex order when paired with a mesh.
    """

    times: np.ndarray
    potentials: np.ndarray
    lead_coords: np.ndarray
    subject_id: str = "subject"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        T, L = np.shape(self.potentials)
        if np.shape(self.times) != (T,):
            raise DataError(f"{len(self.times)} time stamps for {T} samples")
        if np.shape(self.lead_coords) != (L, 3):
            raise DataError(f"coords for {len(self.lead_coords)} leads but potentials have {L} leads")
        if not np.all(np.isfinite(self.potentials)):
            r, c = np.argwhere(~np.isfinite(self.potentials))[0]
            raise DataError(f"non-finite potential at sample {r}, lead {c}")
        if T > 1 and np.any(np.diff(self.times) <= 0):
            raise DataError("time stamps must be strictly increasing")

    @property
    def n_samples(self):
        return self.potentials.shape[0]

    @property
    def n_leads(self):
        return self.potentials.shape[1]

    @property
    def sample_period(self):
        return float(np.median(np.diff(self.times))) if self.n_samples > 1 else 1.0

    @property
    def duration(self):
        return self.n_samples * self.sample_period

    def summary(self):
        return {"subject_id": self.subject_id, "n_samples": self.n_samples, "n_leads": self.n_leads,
                "duration_ms": self.duration, "sample_period_ms": self.sample_period,
                "min_mv": float(self.potentials.min()), "max_mv": float(self.potentials.max())}


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: line {i} has {len(r)} fields, header has {len(header)}")
    try:
        values = np.array(body, dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return header, values


def load_dataset(potentials_path, coords_path, subject_id=None):
    """Read ``t_ms,lead_0,...`` potentials and ``lead,x,y,z`` coordinates."""
    header, pot = _read_rows(potentials_path)
    if header[0].strip() != "t_ms":
        raise DataError(f"{potentials_path}: first column must be t_ms")
    cheader, coords = _read_rows(coords_path)
    if [h.strip() for h in cheader] != ["lead", "x", "y", "z"]:
        raise DataError(f"{coords_path}: header must be lead,x,y,z")
    n_leads = len(header) - 1
    if len(coords) != n_leads:
        raise DataError(f"coords file has {len(coords)} leads but potentials file has {n_leads}")
    if not np.all(np.isfinite(pot)) or not np.all(np.isfinite(coords)):
        raise DataError("non-finite values in input")
    sid = subject_id if subject_id is not None else Path(potentials_path).stem
    return BspmDataset(pot[:, 0], pot[:, 1:], coords[:, 1:], sid)


def save_potentials(ds, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ms"] + [f"lead_{i}" for i in range(ds.n_leads)])
        for t, row in zip(ds.times, ds.potentials):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def save_coords(ds, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lead", "x", "y", "z"])
        for i, c in enumerate(ds.lead_coords):
            w.writerow([i] + [repr(float(v)) for v in c])


def save_dataset(ds, potentials_path, coords_path):
    save_potentials(ds, potentials_path)
    save_coords(ds, coords_path)


def rms_envelope(potentials):
    """Across-lead RMS after removing each lead's median."""
    P = np.asarray(potentials, dtype=float)
    P = P - np.median(P, axis=0)
    return np.sqrt(np.mean(P ** 2, axis=1))


def detect_qrs(ds):
    """Sample index range ``[i0, i1)`` of the contiguous run above 20% of the envelope peak."""
    env = rms_envelope(ds.potentials)
    peak = int(np.argmax(env))
    if env[peak] <= 0 or env[peak] <= NOISE_FLOOR_RATIO * np.median(env):
        raise DataError("no QRS peak above the noise floor")
    above = env > QRS_THRESHOLD * env[peak]
    i0 = peak
    while i0 > 0 and above[i0 - 1]:
        i0 -= 1
    i1 = peak + 1
    while i1 < len(env) and above[i1]:
        i1 += 1
    return i0, i1


def qrs_extract(ds, window=None):
    """Restrict the record to a QRS window.

    ``window`` is ``(t0, t1)`` in ms from the start of the record and selects
    samples with ``t0 <= t < t1``. Without a window the QRS complex is
    located automatically with :func:`detect_qrs`.
    """
    if window is None:
        i0, i1 = detect_qrs(ds)
        sel = slice(i0, i1)
        win = [float(ds.times[i0] - ds.times[0]), float(ds.times[i1 - 1] - ds.times[0] + ds.sample_period)]
    else:
        t0, t1 = (float(v) for v in window)
        if not t0 < t1:
            raise DataError(f"empty window [{t0}, {t1}]")
        if t0 < 0 or t1 > ds.duration + 1e-9:
            raise DataError(f"window [{t0}, {t1}] outside record of {ds.duration} ms")
        rel = ds.times - ds.times[0]
        idx = np.flatnonzero((rel >= t0 - 1e-9) & (rel < t1 - 1e-9))
        if idx.size == 0:
            raise DataError(f"empty window [{t0}, {t1}]")
        sel = slice(idx[0], idx[-1] + 1)
        win = [t0, t1]
    meta = dict(ds.meta, qrs_window_ms=win)
    return replace(ds, times=ds.times[sel], potentials=ds.potentials[sel], meta=meta)


def subsample_times(ds, stride):
    if stride < 1:
        raise ParameterError("stride must be >= 1")
    return replace(ds, times=ds.times[::stride], potentials=ds.potentials[::stride])


# ---------------------------------------------------------------------------
# synthetic recordings

def _source_params(rng, center, radii, n_sources, duration, width_range):
    hot = rng.normal(size=3)
    hot /= np.linalg.norm(hot)
    t_qrs = duration * rng.uniform(0.4, 0.6)
    sources = []
    for _ in range(n_sources):
        u = hot + 0.5 * rng.normal(size=3)
        u /= np.linalg.norm(u)
        a = rng.normal(size=3)
        a -= (a @ u) * u
        a /= np.linalg.norm(a)
        sources.append({
            "start": u.tolist(),
            "axis": np.cross(a, u).tolist(),
            "sweep_rad": float(rng.uniform(0.3, 0.8)),
            "amplitude": float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5)),
            "width": float(rng.uniform(*width_range) * np.mean(radii)),
            "freq_hz": float(rng.uniform(1.0, 3.0) / (duration / 1000.0)),
            "phase": float(rng.uniform(0, 2 * np.pi)),
            "pulse_center_ms": float(t_qrs + duration * rng.uniform(-0.02, 0.02)),
            "pulse_width_ms": float(0.04 * duration),
        })
    return {"center": center.tolist(), "radii": radii.tolist(), "sources": sources}


def source_positions(params, src, times, duration):
    """Positions of one source along its arc on the bounding ellipsoid."""
    th = src["sweep_rad"] * np.asarray(times) / duration
    u, v = np.array(src["start"]), np.array(src["axis"])
    dirs = np.cos(th)[:, None] * u + np.sin(th)[:, None] * v
    return np.array(params["center"]) + np.array(params["radii"]) * dirs


def source_envelope(src, times):
    t = np.asarray(times, dtype=float)
    slow = np.sin(2 * np.pi * src["freq_hz"] * t / 1000.0 + src["phase"])
    pulse = np.exp(-0.5 * ((t - src["pulse_center_ms"]) / src["pulse_width_ms"]) ** 2)
    return 0.25 * slow + 0.75 * pulse


def synth_generate(mesh, n_sources=3, duration=200.0, noise_sd=0.0, seed=0, sample_period=1.0,
                   width_range=(0.5, 0.8)):
    """Synthetic recording from moving Gaussian sources with a shared sharp pulse.

    ``potential(i, t) = sum_s a_s exp(-|x_i - p_s(t)|^2 / w_s^2) g_s(t) + noise``
    where ``p_s`` travels an arc of the mesh's bounding ellipsoid and ``g_s``
    mixes a slow sinusoid with a QRS-like Gaussian pulse (``|g_s| <= 1``).
    Source parameters are stored in ``meta["sources"]``.
    """
    if n_sources < 1:
        raise ParameterError("n_sources must be >= 1")
    if duration < 10:
        raise ParameterError("duration must be >= 10 ms")
    rng = np.random.default_rng(seed)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    center, radii = (lo + hi) / 2, (hi - lo) / 2
    params = _source_params(rng, center, radii, n_sources, duration, width_range)
    times = np.arange(int(round(duration / sample_period))) * sample_period
    X = mesh.vertices
    P = np.zeros((len(times), len(X)))
    for src in params["sources"]:
        pos = source_positions(params, src, times, duration)
        d2 = np.sum((X[None, :, :] - pos[:, None, :]) ** 2, axis=-1)
        P += src["amplitude"] * np.exp(-d2 / src["width"] ** 2) * source_envelope(src, times)[:, None]
    if noise_sd > 0:
        P += rng.normal(0.0, noise_sd, P.shape)
    meta = dict(params, duration_ms=float(duration), noise_sd=float(noise_sd), seed=seed)
    return BspmDataset(times, P, X.copy(), subject_id=f"synth{seed}", meta=meta)

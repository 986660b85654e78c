"""Command-line pipeline: ``python -m bspm_osp <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_dataset, save_coords, save_potentials, synth_generate
from .errors import DataError, NumericalError, ParameterError
from .evaluation import predictions_from_csv, predictions_to_csv, score
from .gplmk import LandmarkSequence
from .mesh import load_mesh, save_mesh, torso_mesh
from .pipeline import (RunConfig, check_alignment, run_baseline, run_evaluate, run_landmarks, run_select,
                       segment_of)
from .placement import SensorSet

log = logging.getLogger("bspm_osp")


def atomic_write(path, write):
    """Call ``write(tmp_path)`` and move the result onto ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_text(path, text):
    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)
    return atomic_write(path, w)


def _mesh(args):
    return load_mesh(args.mesh) if args.mesh else torso_mesh()


def _dataset(args):
    return load_dataset(args.potentials, args.coords)


def _sensor_ids(path):
    path = Path(path)
    if path.suffix == ".csv":
        return LandmarkSequence.from_csv(path).indices
    try:
        return SensorSet.from_dict(json.loads(path.read_text())).ids
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None


def cmd_landmark(args, cfg, out):
    mesh = _mesh(args)
    seq = run_landmarks(mesh, cfg, args.n)
    p = atomic_write(out / "landmarks.csv", seq.to_csv)
    print(f"{len(seq)} landmarks -> {p}")


def cmd_select(args, cfg, out):
    mesh, ds = _mesh(args), _dataset(args)
    check_alignment(ds, mesh)
    lm = LandmarkSequence.from_csv(args.landmarks) if args.landmarks else None
    ss = run_select(ds, mesh, cfg, lm)
    p = write_text(out / "sensors.json", ss.to_json())
    atomic_write(out / "sensors.csv", ss.to_csv)
    print(f"{len(ss)} sensors -> {p}")


def cmd_baseline(args, cfg, out):
    ss = run_baseline(_mesh(args), cfg)
    p = write_text(out / "baseline.json", ss.to_json())
    atomic_write(out / "baseline.csv", ss.to_csv)
    print(f"{len(ss)} uniform sensors -> {p}")


def cmd_reconstruct(args, cfg, out):
    ds = _dataset(args)
    ids = _sensor_ids(args.sensors)
    report, recon, scored = run_evaluate(ds, ids, cfg, args.method, args.segment)
    atomic_write(out / "predictions.csv", lambda p: predictions_to_csv(recon, scored.times, p))
    p = write_text(out / "report.json", report.to_json())
    print(f"R2 {report.r2_percent:.2f}%  MAE {report.mae_mv:.4f} mV over {report.n_validation} leads -> {p}")


def _load_predictions(path, ds):
    """Predictions CSV plus the recording rows its time stamps refer to."""
    times, recon = predictions_from_csv(path)
    rows = np.minimum(np.searchsorted(ds.times, times), ds.n_samples - 1)
    if not np.array_equal(ds.times[rows], times):
        raise DataError("prediction times do not match the recording")
    bad = [i for i in recon.lead_ids if not 0 <= i < ds.n_leads]
    if bad:
        raise DataError(f"prediction lead {bad[0]} outside 0..{ds.n_leads - 1}")
    return times, recon, rows


def cmd_evaluate(args, cfg, out):
    ds = _dataset(args)
    times, recon, rows = _load_predictions(args.predictions, ds)
    scored = replace(ds, times=ds.times[rows], potentials=ds.potentials[rows])
    segment = "full" if len(rows) == ds.n_samples else [float(times[0] - ds.times[0]),
                                                        float(times[-1] - ds.times[0] + ds.sample_period)]
    report = score(scored, recon, args.method, segment, cfg.to_dict())
    p = write_text(out / "evaluation.json", report.to_json())
    print(f"R2 {report.r2_percent:.2f}%  MAE {report.mae_mv:.4f} mV -> {p}")


def cmd_synth(args, cfg, out):
    mesh = _mesh(args)
    ds = synth_generate(mesh, args.n_sources, args.duration, args.noise_sd, cfg.seed)
    atomic_write(out / "potentials.csv", lambda p: save_potentials(ds, p))
    atomic_write(out / "coords.csv", lambda p: save_coords(ds, p))
    atomic_write(out / "mesh.off", lambda p: save_mesh(mesh, p))
    write_text(out / "synth.json", json.dumps(ds.meta, indent=1, sort_keys=True))
    print(f"{ds.n_samples} samples x {ds.n_leads} leads -> {out}")


def cmd_frames(args, cfg, out):
    ds = _dataset(args)
    if args.predictions:
        times, recon, rows = _load_predictions(args.predictions, ds)
        values = ds.potentials[rows].copy()
        values[:, recon.lead_ids] = recon.predicted
        source = "predicted"
    else:
        scored, _ = segment_of(ds, cfg, args.segment)
        times, values, source = scored.times, scored.potentials, "measured"
    step = max(1, args.every)
    written = 0
    for k in range(0, len(times), step):
        t = float(times[k])
        lines = ["lead,x,y,z,potential_mv"]
        lines += [f"{i},{x!r},{y!r},{z!r},{float(v)!r}"
                  for i, ((x, y, z), v) in enumerate(zip(ds.lead_coords.tolist(), values[k]))]
        write_text(out / "frames" / f"frame_{k:05d}_t{t:g}ms.csv", "\n".join(lines) + "\n")
        written += 1
    print(f"{written} {source} frames -> {out / 'frames'}")


def build_parser():
    p = argparse.ArgumentParser(prog="bspm_osp", description="Body-surface sensor placement and reconstruction.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out-dir", default=".", help="directory for output files (default: current)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp):
        sp.add_argument("--potentials", required=True, help="potentials CSV (t_ms,lead_0,...)")
        sp.add_argument("--coords", required=True, help="lead coordinates CSV (lead,x,y,z)")

    def mesh_arg(sp):
        sp.add_argument("--mesh", help="OFF mesh (default: built-in torso)")

    sp = sub.add_parser("landmark", help="GPLMK landmark sequence for a mesh")
    mesh_arg(sp)
    sp.add_argument("--n", type=int, help="number of landmarks (default: enough for selection)")
    sp.set_defaults(func=cmd_landmark)

    sp = sub.add_parser("select", help="sequential sensor selection")
    mesh_arg(sp)
    data_args(sp)
    sp.add_argument("--landmarks", help="precomputed landmark CSV")
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("baseline", help="farthest-point uniform sensor set")
    mesh_arg(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("reconstruct", help="predict validation leads and score them")
    data_args(sp)
    sp.add_argument("--sensors", required=True, help="SensorSet JSON or landmark-style CSV")
    sp.add_argument("--method", default="gplmk", help="label stored in the report")
    sp.add_argument("--segment", choices=["qrs", "full"], default="qrs")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("evaluate", help="score a predictions CSV")
    data_args(sp)
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--method", default="gplmk")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("synth", help="generate a synthetic recording")
    mesh_arg(sp)
    sp.add_argument("--n-sources", type=int, default=3)
    sp.add_argument("--duration", type=float, default=200.0, help="ms")
    sp.add_argument("--noise-sd", type=float, default=0.01, help="mV")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("frames", help="per-time-slice potential maps as CSV")
    data_args(sp)
    sp.add_argument("--predictions", help="fill validation leads from a predictions CSV")
    sp.add_argument("--segment", choices=["qrs", "full"], default="qrs")
    sp.add_argument("--every", type=int, default=1, help="write every k-th sample")
    sp.set_defaults(func=cmd_frames)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_json_file(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        args.func(args, cfg, Path(args.out_dir))
    except (ParameterError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc, ParameterError) else 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

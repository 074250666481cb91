"""Command-line entry point: realize-map, simulate, analyze, ransac."""

from __future__ import annotations

import argparse
import json
import re
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, NumericalError
from .estimation import DelayTrack, fit_gamma_fading, fit_path_gain_params, ransac_subpaths
from .geometry import IntersectionMap
from .io import (GridSpec, RunConfig, antenna_layout_from_list, input_hashes, load_map,
                 load_parameters, load_realization, load_track, load_trajectory, read_tensor,
                 save_realization, write_array, write_metrics_csv,
                 write_tensor, write_tensor_text)
from .metrics import (NoiseModel, condensed_metrics, doppler_resolved_ir, impulse_response,
                      pdp_series, window_length)
from .pathgain import AngularGainParams
from .scatterers import DEFAULT_CLASSES, realize_scatterers
from .synthesis import simulate

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6}


def parse_duration(text: str) -> float:
    """``0.1s``, ``30ms``, ``250us`` or a bare number of seconds."""
    m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*(s|ms|us)?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"not a duration: {text!r}")
    try:
        value = float(m.group(1)) * _UNITS[m.group(2) or "s"]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a duration: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("duration must be positive")
    return value


def _merged_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    for flag, key in (("map", "map"), ("classes", "classes"), ("tx", "tx_trajectory"),
                      ("rx", "rx_trajectory"), ("seed", "seed"), ("out_dir", "output_dir"),
                      ("noise_floor_db", "noise_floor_db"),
                      ("threshold_offset_db", "threshold_offset_db"), ("window", "window_s")):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, key, v)
    for key in ("freq", "time"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, GridSpec(float(v[0]), float(v[1]), int(v[2])))
    if getattr(args, "no_los", False):
        cfg.include_los = False
    return cfg


def _classes_and_angular(cfg: RunConfig):
    if cfg.classes is None:
        return DEFAULT_CLASSES, AngularGainParams()
    return load_parameters(cfg.classes)


def _out_path(args: argparse.Namespace, cfg: RunConfig, default_name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / default_name


def cmd_realize_map(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    cfg.require("map", "seed")
    imap = load_map(cfg.map)
    classes, _ = _classes_and_angular(cfg)
    real = realize_scatterers(imap, classes, cfg.seed)
    out = _out_path(args, cfg, "realization.json")
    hashes = input_hashes({"map": cfg.map, "classes": cfg.classes})
    save_realization(real, out, hashes)
    for name, n in real.counts().items():
        print(f"{name}\t{n}")
    print(f"total\t{len(real)}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    cfg.require("tx_trajectory", "rx_trajectory", "freq", "time", "seed")
    imap = load_map(cfg.map) if cfg.map else IntersectionMap(name="empty")
    classes, angular = _classes_and_angular(cfg)
    if args.realization:
        real = load_realization(args.realization)
    elif cfg.map:
        real = realize_scatterers(imap, classes, cfg.seed)
    else:
        real = realize_scatterers(imap, (), cfg.seed)
    tx, rx = load_trajectory(cfg.tx_trajectory), load_trajectory(cfg.rx_trajectory)
    freqs, times = cfg.freq.values(), cfg.time.values()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            tensor = simulate(imap, real, tx, rx, antenna_layout_from_list(cfg.tx_antennas),
                              antenna_layout_from_list(cfg.rx_antennas), freqs, times, cfg.seed,
                              angular=angular, include_los=cfg.include_los)
        except DataError as exc:
            raise DataError(f"time grid does not fit the trajectories: {exc}") from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    hashes = input_hashes({"config": getattr(args, "config", None), "map": cfg.map,
                           "classes": cfg.classes, "realization": args.realization,
                           "tx_trajectory": cfg.tx_trajectory, "rx_trajectory": cfg.rx_trajectory})
    if args.format == "text":
        out = _out_path(args, cfg, "tensor.csv")
        write_tensor_text(tensor, out)
    else:
        out = _out_path(args, cfg, "tensor.bin")
        write_tensor(tensor, out, hashes, dtype=args.dtype)
    print(f"wrote {out} shape={tuple(tensor.shape)}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    tensor = read_tensor(args.tensor)
    R, X = tensor.shape[2:]
    if not (0 <= args.rx_index < R and 0 <= args.tx_index < X):
        raise ConfigError(f"antenna pair ({args.rx_index}, {args.tx_index}) outside {R}x{X} tensor")
    noise = NoiseModel(10.0 ** (cfg.noise_floor_db / 10.0), cfg.threshold_offset_db)
    out_dir = Path(args.out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hashes = input_hashes({"tensor": args.tensor})
    meta = {"seed": tensor.metadata.get("seed"), "input_hashes": hashes,
            "window_s": cfg.window_s, "noise_floor_db": cfg.noise_floor_db,
            "threshold_offset_db": cfg.threshold_offset_db}
    rows = condensed_metrics(tensor, args.rx_index, args.tx_index, cfg.window_s, noise)
    write_metrics_csv(rows, out_dir / "metrics.csv",
                      f"version={__version__} window_s={cfg.window_s:g} "
                      f"tensor_sha256={hashes['tensor']}")
    h = impulse_response(tensor, args.rx_index, args.tx_index)
    dt = float(np.mean(np.diff(tensor.times))) if len(tensor.times) > 1 else cfg.window_s
    N = min(window_length(dt, cfg.window_s), len(tensor.times))
    profiles = pdp_series(h, N)
    write_array(out_dir / "pdp.bin", np.array([p.powers for p in profiles]),
                [("t_a_s", [p.t_a for p in profiles]), ("delay_s", h.delays)],
                meta | {"kind": "pdp", "window_N": N}, dtype="float64")
    if args.doppler:
        if N < 2:
            raise ConfigError("Doppler analysis needs at least 2 snapshots per window")
        t = tensor.times
        starts = [t[i] for i in range(0, len(t) - N + 1, N)]
        # half-step margins keep exactly N snapshots per window despite rounding
        spans = [(t[i] - 0.5 * dt, t[i + N - 1] + 0.5 * dt) for i in range(0, len(t) - N + 1, N)]
        spectra = [doppler_resolved_ir(h, s) for s in spans]
        write_array(out_dir / "doppler.bin", np.array([s.values for s in spectra]),
                    [("t_start_s", starts), ("doppler_hz", spectra[0].doppler),
                     ("delay_s", h.delays)],
                    meta | {"kind": "doppler_resolved_ir", "window_N": N})
    for r in rows:
        print(f"{r.t_a:.6f}\t{r.gain_db:.3f} dB\t{r.mean_delay_ns:.3f} ns\t{r.rms_ds_ns:.3f} ns")
    return EXIT_OK


def cmd_ransac(args: argparse.Namespace) -> int:
    if args.J is None and not args.auto_j:
        raise ConfigError("give the number of sub-paths with -J or request --auto-j")
    if args.J is not None and args.J < 1:
        raise ConfigError("-J must be >= 1")
    data = load_track(args.track)
    if len(data.t) < args.min_points:
        raise DataError(f"{args.track}: {len(data.t)} observations, RANSAC needs at least "
                        f"{args.min_points}")
    tx, rx = load_trajectory(args.tx), load_trajectory(args.rx)
    track = DelayTrack.from_trajectories(data.t, data.d, tx, rx, power=data.power,
                                         theta1=data.theta1, theta2=data.theta2)
    _ = track.tx_xy, track.rx_xy        # surface trajectory span errors before fitting
    res = ransac_subpaths(track, None if args.auto_j and args.J is None else args.J,
                          order=args.order, inner_thresh=args.inner_thresh,
                          final_thresh=args.final_thresh, iters=args.iters,
                          min_frac=args.min_frac, min_points=args.min_points, seed=args.seed,
                          bounds=tuple(args.bounds) if args.bounds else None)
    records = []
    for sp in res.subpaths:
        rec = {"order": sp.order, "scatter_points": sp.scatter_points.tolist(),
               "inlier_count": int(len(sp.inlier_indices)),
               "inlier_indices": sp.inlier_indices.tolist(),
               "residual_rms_m": sp.residual_rms}
        idx = sp.inlier_indices
        if data.power is not None and data.theta1 is not None and data.theta2 is not None \
                and len(idx) >= 10 and sp.order == 1:
            s = sp.scatter_points[0]
            d = (np.hypot(*(track.tx_xy[idx] - s).T) + np.hypot(*(track.rx_xy[idx] - s).T))
            fit = fit_path_gain_params(d, data.theta1[idx], data.theta2[idx], data.power[idx])
            rec["path_gain"] = {"G0_db": fit.G0_db, "xi": fit.xi, "dtheta1": fit.dtheta1,
                                "k": None if not np.isfinite(fit.k) else fit.k,
                                "wide_confidence": fit.wide_confidence}
        elif data.power is not None and len(idx) >= 20:
            g = fit_gamma_fading(data.power[idx] / np.mean(data.power[idx]))
            rec["fading"] = {"k": None if g.degenerate else g.k, "degenerate": g.degenerate}
        records.append(rec)
    doc = {"format": "v2vchan-estimates", "version": __version__, "seed": args.seed,
           "input_hashes": input_hashes({"track": args.track, "tx_trajectory": args.tx,
                                         "rx_trajectory": args.rx}),
           "settings": {"J": args.J, "auto_j": args.auto_j, "order": args.order,
                        "inner_thresh": args.inner_thresh, "final_thresh": args.final_thresh,
                        "iters": args.iters, "min_frac": args.min_frac,
                        "min_points": args.min_points},
           "n_observations": len(track), "subpaths": records,
           "leftover_count": int(len(res.leftover_indices)), "stop_reason": res.stop_reason}
    text = json.dumps(doc, sort_keys=True, indent=1, default=float)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    for k, r in enumerate(records):
        pts = ", ".join(f"({x:.2f}, {y:.2f})" for x, y in r["scatter_points"])
        print(f"subpath {k}: {pts} inliers={r['inlier_count']} rms={r['residual_rms_m']:.3f} m",
              file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="v2vchan", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="run configuration (JSON); flags override its values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", dest="out_dir")

    r = sub.add_parser("realize-map", help="draw a scatterer realization for a map")
    common(r)
    r.add_argument("--map")
    r.add_argument("--classes", help="scatterer class / angular gain parameter file")
    r.add_argument("--out")
    r.set_defaults(func=cmd_realize_map)

    s = sub.add_parser("simulate", help="simulate the channel transfer function tensor")
    common(s)
    s.add_argument("--map")
    s.add_argument("--classes")
    s.add_argument("--realization", help="replay a saved realization instead of drawing one")
    s.add_argument("--tx", help="Tx trajectory (t,x,y,heading)")
    s.add_argument("--rx", help="Rx trajectory (t,x,y,heading)")
    s.add_argument("--freq", nargs=3, metavar=("START", "STOP", "POINTS"))
    s.add_argument("--time", nargs=3, metavar=("START", "STOP", "POINTS"))
    s.add_argument("--no-los", action="store_true", help="omit the direct path")
    s.add_argument("--format", choices=("binary", "text"), default="binary")
    s.add_argument("--dtype", choices=("complex128", "complex64"), default="complex128")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="PDP, gain, delay spread and Doppler products")
    common(a)
    a.add_argument("tensor")
    a.add_argument("--window", type=parse_duration, help="stationarity window, e.g. 30ms, 0.1s")
    a.add_argument("--doppler", action="store_true",
                   help="also write Doppler-resolved impulse responses per window")
    a.add_argument("--noise-floor-db", type=float, dest="noise_floor_db")
    a.add_argument("--threshold-offset-db", type=float, dest="threshold_offset_db")
    a.add_argument("--rx-index", type=int, default=0)
    a.add_argument("--tx-index", type=int, default=0)
    a.set_defaults(func=cmd_analyze)

    q = sub.add_parser("ransac", help="sub-path decomposition of a delay track")
    q.add_argument("track", help="delimited t,d[,power,theta1,theta2]")
    q.add_argument("--tx", required=True)
    q.add_argument("--rx", required=True)
    q.add_argument("-J", "--J", type=int, dest="J")
    q.add_argument("--auto-j", action="store_true")
    q.add_argument("--order", type=int, choices=(1, 2, 3), default=1)
    q.add_argument("--inner-thresh", type=float, default=0.3)
    q.add_argument("--final-thresh", type=float, default=0.45)
    q.add_argument("--iters", type=int, default=500)
    q.add_argument("--min-frac", type=float, default=0.05)
    q.add_argument("--min-points", type=int, default=10)
    q.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_ransac)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: simulate runs, fit histograms, report S/N, sweep.

Subcommands
-----------
simulate   run the frame loop, write frames/events/histogram CSVs + summary
dark       simulate with the light source removed
fit        fit the photon-number mixture to an events file
snr        one-line JSON with the conversion gain, noise and S/N
sweep      grid-sweep one or two config keys, tabulating noise and error

Exit codes: 0 success, 1 invalid input, 2 non-convergence, 3 I/O failure.
Errors print a single-line JSON object ``{"code", "message"}`` to stderr.
All outputs are byte-reproducible for a fixed seed; the only timestamp
lives in summary.json and is suppressed by ``--no-timestamp``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import (
    CliConfig,
    ConfigError,
    default_config_path,
    load_config,
    _parse_detector,
    _parse_noise,
    _parse_source,
)
from .detector import snr, volts_per_carrier
from .estimation import (
    InsufficientDataError,
    build_histogram,
    discrimination_error,
    expected_bin_counts,
    fit_mixture,
    goodness_of_fit,
    mixture_density,
)
from .noise import QuadratureError, cds_sigma
from .readout import RunConfig, extract_events, frames_to_csv, simulate_run
from .source import mean_carriers

_SWEEP_SECTIONS = {
    "c_input_pf": "detector",
    "g_m": "detector",
    "eta_q": "detector",
    "eta_c": "detector",
    "leakage_per_hour": "detector",
    "reset_threshold_mv": "detector",
    "sigma_e": "noise",
    "s_white_v2hz": "noise",
    "a_pink_v2": "noise",
    "f_cutoff_hz": "noise",
    "delta_t_cds_s": "noise",
    "f_min_hz": "noise",
    "mean_photons": "source",
    "pulse_width_s": "source",
    "rep_rate_hz": "source",
}


class _UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fail(code: int, message: str) -> int:
    print(json.dumps({"code": code, "message": message}), file=sys.stderr)
    return code


def _utc_stamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _json_safe(x):
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def _fmt(x) -> str:
    """Shortest round-trip decimal form; plain '.'-decimal, no separators."""
    return repr(float(x))


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2) + "\n")


def _load_cli_config(args) -> CliConfig:
    path = args.config if args.config else default_config_path()
    return load_config(path)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cipdsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", help="JSON config file (default: bundled device)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--frames", type=int, help="override run.n_frames")
        p.add_argument(
            "--no-timestamp",
            action="store_true",
            help="omit the timestamp field from summary.json",
        )

    p_sim = sub.add_parser("simulate", help="simulate an acquisition run")
    add_common(p_sim)
    p_sim.set_defaults(func=lambda a: _cmd_simulate(a, dark=False))

    p_dark = sub.add_parser("dark", help="simulate with no light source")
    add_common(p_dark)
    p_dark.set_defaults(func=lambda a: _cmd_simulate(a, dark=True))

    p_fit = sub.add_parser("fit", help="fit the photon-number mixture to events")
    p_fit.add_argument("events_file", help="one value per line, or CSV with --column")
    p_fit.add_argument("--column", help="CSV column holding the events")
    p_fit.add_argument("--out", default="out", help="output directory")
    p_fit.add_argument("--bin-width", type=float, default=0.1, help="histogram bin width (e)")
    p_fit.add_argument(
        "--l-max",
        type=int,
        help="Poisson cutoff (default: 20, raised automatically for bright data)",
    )
    p_fit.set_defaults(func=_cmd_fit)

    p_snr = sub.add_parser("snr", help="print conversion gain, noise and S/N")
    p_snr.add_argument("--config", help="JSON config file (default: bundled device)")
    p_snr.add_argument("--n", type=float, default=1.0, help="number of carriers")
    p_snr.add_argument("--sigma-e", type=float, help="override the noise (electrons rms)")
    p_snr.add_argument(
        "--sigma-from-psd",
        action="store_true",
        help="derive the noise from the PSD model in the config",
    )
    p_snr.set_defaults(func=_cmd_snr)

    p_sweep = sub.add_parser("sweep", help="sweep one or two config keys")
    p_sweep.add_argument("--config", help="JSON config file (default: bundled device)")
    p_sweep.add_argument("--out", default="out", help="output directory")
    p_sweep.add_argument(
        "--param",
        action="append",
        required=True,
        metavar="KEY=START:STOP:STEP",
        help="config key and range (repeat once for a 2-D grid)",
    )
    p_sweep.add_argument(
        "--mode",
        choices=["nearest", "map"],
        default="nearest",
        help="classification mode for the discrimination-error column",
    )
    p_sweep.set_defaults(func=_cmd_sweep)

    return parser


def _cmd_simulate(args, dark: bool) -> int:
    cfg = _load_cli_config(args)
    n_frames = args.frames if args.frames is not None else cfg.n_frames
    seed = args.seed if args.seed is not None else cfg.seed
    source = None if dark else cfg.source
    run_cfg = RunConfig(
        n_frames=n_frames,
        detector=cfg.detector,
        noise=cfg.noise,
        source=source,
        seed=seed,
    )
    run = simulate_run(run_cfg)
    events = extract_events(run)

    out_dir = Path(args.out if args.out else (cfg.out_dir or "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    frames_to_csv(run, out_dir / "frames.csv")
    _write_text(
        out_dir / "events.csv",
        "measured_delta_e\n" + "".join(_fmt(e) + "\n" for e in events),
    )

    hist_lines = ["bin_width,bin_center,count"]
    if events.size:
        for width in (0.1, 1.0):
            hist = build_histogram(events, width)
            for c, k in zip(hist.bin_centers, hist.counts):
                hist_lines.append(f"{_fmt(width)},{_fmt(c)},{int(k)}")
    _write_text(out_dir / "histogram.csv", "\n".join(hist_lines) + "\n")

    echo = {
        "detector": copy.deepcopy(cfg.raw["detector"]),
        "noise": copy.deepcopy(cfg.raw["noise"]),
        "source": None if dark else copy.deepcopy(cfg.raw.get("source")),
        "run": {"n_frames": n_frames, "seed": seed},
    }
    summary = {
        "command": "dark" if dark else "simulate",
        "config": echo,
        "sigma_e_used": run.sigma_e_used,
        "n_frames": n_frames,
        "n_events": int(events.size),
        "n_resets": int(np.count_nonzero(run.reset)),
        "event_mean": float(np.mean(events)) if events.size else None,
        "event_std": float(np.std(events, ddof=1)) if events.size >= 2 else None,
    }
    timestamp = cfg.timestamp and not args.no_timestamp
    if timestamp:
        summary["timestamp"] = _utc_stamp()
    _write_json(out_dir / "summary.json", summary)
    return 0


def _read_events(path: str, column: str | None) -> np.ndarray:
    text = Path(path).read_text()
    if column is not None:
        reader = csv.DictReader(text.splitlines())
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ValueError(f"column {column!r} not found in {path}")
        try:
            values = [float(row[column]) for row in reader]
        except (TypeError, ValueError) as exc:
            raise ValueError(f"non-numeric value in column {column!r}: {exc}") from exc
    else:
        values = []
        for ln, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise ValueError(
                    f"{path}:{ln}: expected one number per line, got {line!r} "
                    "(use --column for CSV input)"
                ) from exc
    return np.asarray(values, dtype=float)


def _cmd_fit(args) -> int:
    events = _read_events(args.events_file, args.column)
    if events.size == 0:
        raise InsufficientDataError(f"no events found in {args.events_file}")
    if args.l_max is not None:
        l_max = args.l_max
    else:
        mean = float(np.mean(events))
        l_max = max(20, int(np.ceil(2.0 * mean)) + 2)
    fit = fit_mixture(events, l_max=l_max)
    hist = build_histogram(events, args.bin_width)

    chi2 = dof = None
    if fit.converged:
        try:
            chi2, dof = goodness_of_fit(hist, fit)
        except ValueError:
            pass  # too few populated bins for a chi-square; report nulls

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        out_dir / "fit.json",
        {
            "n_hat": fit.n_hat,
            "sigma_hat": fit.sigma_hat,
            "stderr_n": _json_safe(fit.stderr_n),
            "log_likelihood": _json_safe(fit.log_likelihood),
            "iterations": fit.n_iterations,
            "converged": fit.converged,
            "chi2": chi2,
            "dof": dof,
            "snr_implied": fit.n_hat / fit.sigma_hat,
        },
    )

    xs = hist.origin + np.arange(5 * len(hist.counts) + 1) * (hist.bin_width / 5.0)
    dens = mixture_density(xs, fit.n_hat, fit.sigma_hat, fit.l_max)
    scale = hist.total * hist.bin_width
    curve_lines = ["x,density,scaled_count"]
    curve_lines += [
        f"{_fmt(x)},{_fmt(d)},{_fmt(scale * d)}" for x, d in zip(xs, dens)
    ]
    _write_text(out_dir / "fitted_curve.csv", "\n".join(curve_lines) + "\n")

    expected = expected_bin_counts(hist, fit.n_hat, fit.sigma_hat, fit.l_max)
    hist_lines = ["bin_center,count,expected_count"]
    hist_lines += [
        f"{_fmt(c)},{int(k)},{_fmt(e)}"
        for c, k, e in zip(hist.bin_centers, hist.counts, expected)
    ]
    _write_text(out_dir / "histogram.csv", "\n".join(hist_lines) + "\n")
    return 0 if fit.converged else 2


def _cmd_snr(args) -> int:
    cfg = _load_cli_config(args)
    det = cfg.detector
    if args.sigma_e is not None:
        sigma_e = args.sigma_e
    elif args.sigma_from_psd or cfg.noise.mode == "psd":
        sigma_e = cds_sigma(cfg.noise, det)
    else:
        sigma_e = cfg.noise.sigma_e_direct
    result = {
        "volts_per_carrier": volts_per_carrier(det),
        "sigma_e": sigma_e,
        "n": args.n,
        "snr": snr(det, args.n, sigma_e),
    }
    print(json.dumps(result))
    return 0


def _parse_sweep_param(spec: str) -> tuple[str, np.ndarray]:
    try:
        key, rng = spec.split("=", 1)
        start, stop, step = (float(v) for v in rng.split(":"))
    except ValueError as exc:
        raise _UsageError(
            f"sweep parameter must look like KEY=START:STOP:STEP, got {spec!r}"
        ) from exc
    if key not in _SWEEP_SECTIONS:
        raise ConfigError(f"unknown sweep key {key!r}")
    if step <= 0 or stop < start:
        raise _UsageError(f"bad range in {spec!r}")
    return key, np.arange(start, stop + 0.5 * step, step)


def _cmd_sweep(args) -> int:
    cfg = _load_cli_config(args)
    if len(args.param) > 2:
        raise _UsageError("at most two --param options are supported")
    if cfg.source is None or cfg.raw.get("source") is None:
        raise ConfigError("sweep requires a source section in the config")
    params = [_parse_sweep_param(p) for p in args.param]

    keys = [k for k, _ in params]
    grids = [g for _, g in params]
    mesh = [(v,) for v in grids[0]] if len(grids) == 1 else [
        (a, b) for a in grids[0] for b in grids[1]
    ]

    # the swept sigma_e passes through cds_sigma unchanged, so drop the
    # derived column rather than emit a duplicate header
    emit_sigma = "sigma_e" not in keys
    rows = []
    for point in mesh:
        raw = copy.deepcopy(cfg.raw)
        for key, value in zip(keys, point):
            raw[_SWEEP_SECTIONS[key]][key] = value
            # the CDS separation is defined as half the frame period, so it
            # tracks a swept repetition rate unless swept itself
            if (
                key == "rep_rate_hz"
                and raw["noise"].get("mode") == "psd"
                and "delta_t_cds_s" not in keys
            ):
                raw["noise"]["delta_t_cds_s"] = 0.5 / value
        det = _parse_detector(raw["detector"])
        noise = _parse_noise(raw["noise"])
        source = _parse_source(raw["source"])
        sigma_e = cds_sigma(noise, det)
        n_mean = mean_carriers(source, det)
        derr = discrimination_error(n_mean, sigma_e, mode=args.mode)
        extra = (sigma_e,) if emit_sigma else ()
        rows.append((*point, *extra, snr(det, 1.0, sigma_e), derr))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    derived = (["sigma_e"] if emit_sigma else []) + ["snr_n1", "discrimination_error"]
    header = ",".join([*keys, *derived])
    lines = [header] + [",".join(_fmt(v) for v in row) for row in rows]
    _write_text(out_dir / "sweep.csv", "\n".join(lines) + "\n")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_help()
            return 1
        return args.func(args)
    except (ConfigError, InsufficientDataError, _UsageError) as exc:
        return _fail(1, str(exc))
    except QuadratureError as exc:
        return _fail(2, str(exc))
    except ValueError as exc:
        return _fail(1, str(exc))
    except OSError as exc:
        return _fail(3, str(exc))


if __name__ == "__main__":
    sys.exit(main())

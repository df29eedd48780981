"""Command-line driver: parameter sweeps, CSV emission, consistency reports.

    magnetofisher <mode> [--config FILE] [--grid START STOP COUNT SCALE]
                  [--model MODEL] [--out PATH] ...

Modes: sweep-bz, sweep-n, sweep-pump, sweep-kappa, benchmark-finite,
crb-witness.  Output is deterministic CSV (17 significant digits, '\n'
line endings, grid-ordered rows); the environment variable
MAGNETOFISHER_THREADS caps the parallel row evaluation.

Exit codes: 0 success, 1 partial row failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .params import (MagnetometerParams, CollectiveScaledParams,
                     reference_params, load_config)
from .fcs import cumulants_resolvent, cumulants_charpoly
from .flow import snr_semiclassical, crb_witness_semiclassical
from .meanfield import collective_snr, cumulants_meanfield
from .finite import stationary_expectations, qfi_finite, mf_qfi_rate
from . import closedform

MODES = ("sweep-bz", "sweep-n", "sweep-pump", "sweep-kappa",
         "benchmark-finite", "crb-witness")
MODELS = ("semiclassical-2lvl", "semiclassical-4lvl", "collective-mf",
          "collective-finite")
GRID_MAX = 10 ** 6


class ConfigError(Exception):
    pass


def format_float(x):
    """17 significant digits, '.' decimal separator."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x != x:  # nan
        return "nan"
    return f"{x:.16e}"


def make_grid(start, stop, count, scale="lin"):
    count = int(count)
    if count < 1 or count > GRID_MAX:
        raise ConfigError(f"grid count {count} out of range [1, {GRID_MAX}]")
    if scale == "lin":
        return np.linspace(start, stop, count)
    if scale == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError("log grid requires positive bounds")
        return np.logspace(np.log10(start), np.log10(stop), count)
    raise ConfigError(f"unknown grid scale {scale!r}")


def _semiclassical_row(params, model):
    rep = cumulants_resolvent(params, model=model)
    signal, noise, snr, qfi = snr_semiclassical(params, model=model)
    theta = closedform.theta_bar(params) if params.gamma_P > 0 else 0.0
    witness_ok, _, _ = crb_witness_semiclassical(params)
    return {
        "kappa1_x": rep.kappa1["x"], "kappa1_y": rep.kappa1["y"],
        "kappa1_minus": rep.kappa1_dyn["minus"],
        "theta_bar": theta,
        "signal": signal, "noise": noise,
        "snr": snr, "qfi": qfi,
        "crb_ok": qfi >= snr, "witness_ok": witness_ok,
    }


def _collective_row(params):
    scaled = CollectiveScaledParams.from_physical(params)
    return _collective_row_scaled(scaled)


def _collective_row_scaled(scaled):
    rep = cumulants_meanfield(scaled)
    signal, noise, snr, qfi = collective_snr(scaled)
    return {
        "kappa1_x": rep.kappa1["x"], "kappa1_y": rep.kappa1["y"],
        "kappa1_minus": rep.kappa1_dyn["minus"],
        "theta_bar": float("nan"),
        "signal": signal, "noise": noise,
        "snr": snr, "qfi": qfi,
        "crb_ok": qfi >= snr, "witness_ok": qfi >= snr,
    }


ROW_COLUMNS = ("kappa1_x", "kappa1_y", "kappa1_minus", "theta_bar",
               "signal", "noise", "snr", "qfi", "crb_ok", "witness_ok")


def run_sweep(mode, grid, params, model, max_workers=None):
    """Evaluate one row per grid point; returns (headers, rows, n_errors).

    Rows are computed (possibly concurrently) and emitted in grid order;
    engine errors appear in the error column and flip the exit code.
    """

    def point_params(value):
        if mode == "sweep-bz":
            return params.with_updates(h_z=float(value) * params.mu)
        if mode == "sweep-n":
            return params.with_updates(n_atoms=float(value))
        if mode == "sweep-pump":
            return params.with_updates(gamma_P=float(value))
        raise ConfigError(f"run_sweep does not handle mode {mode!r}")

    def evaluate(value):
        try:
            p = point_params(value)
            if model in ("semiclassical-2lvl", "semiclassical-4lvl"):
                row = _semiclassical_row(p, model)
            elif model == "collective-mf":
                row = _collective_row(p)
            elif model == "collective-finite":
                scaled = CollectiveScaledParams.from_physical(p)
                row = _finite_row(scaled)
            else:
                raise ConfigError(f"unknown model {model!r}")
            return row, ""
        except Exception as exc:  # surfaced per-row
            return {k: float("nan") for k in ROW_COLUMNS}, f"{type(exc).__name__}: {exc}"

    workers = max_workers or _thread_cap()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, grid))
    else:
        results = [evaluate(v) for v in grid]

    headers = ["grid_value", *ROW_COLUMNS, "error"]
    rows = []
    n_err = 0
    for value, (row, err) in zip(grid, results):
        if err:
            n_err += 1
        rows.append([value, *[row[k] for k in ROW_COLUMNS], err])
    return headers, rows, n_err


def _finite_row(scaled):
    rep = cumulants_resolvent(scaled)
    signal = scaled.tau * rep.signal_slope
    noise = scaled.tau * rep.minus_variance_rate()
    qfi = scaled.tau * rep.qfi_rate
    snr = signal ** 2 / noise if noise > 0 else float("nan")
    return {
        "kappa1_x": rep.kappa1["x"], "kappa1_y": rep.kappa1["y"],
        "kappa1_minus": rep.kappa1_dyn["minus"], "theta_bar": float("nan"),
        "signal": signal, "noise": noise,
        "snr": snr, "qfi": qfi,
        "crb_ok": qfi >= snr, "witness_ok": qfi >= snr,
    }


def run_benchmark_finite(grid, scaled, n_list, sweep="kappa-z",
                         max_workers=None):
    """Finite-size benchmark table over a kappa_z or h_z grid."""

    def evaluate(value):
        try:
            if sweep == "kappa-z":
                point = scaled.with_updates(kappa_z=float(value))
            else:
                point = scaled.with_updates(h_z=float(value))
            mf = mf_qfi_rate(point)
            cells = []
            for n in n_list:
                sx, _, sz = stationary_expectations(point, n)
                q = qfi_finite(point, n)
                cells.extend([sx, sz, q])
            return [*cells, mf], ""
        except Exception as exc:
            return [float("nan")] * (3 * len(n_list) + 1), f"{type(exc).__name__}: {exc}"

    workers = max_workers or _thread_cap()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, grid))
    else:
        results = [evaluate(v) for v in grid]

    headers = ["grid_value"]
    for n in n_list:
        headers += [f"sx_N{n}", f"sz_N{n}", f"qfi_rate_N{n}"]
    headers += ["mf_qfi_rate", "error"]
    rows = []
    n_err = 0
    for value, (cells, err) in zip(grid, results):
        if err:
            n_err += 1
        rows.append([value, *cells, err])
    return headers, rows, n_err


def run_crb_witness(grid, params, max_workers=None):
    """Witness and CRB booleans for both models over an atom-number grid."""

    def evaluate(value):
        try:
            p = params.with_updates(n_atoms=float(value))
            w_sc, lhs, rhs = crb_witness_semiclassical(p)
            _, _, snr_sc, qfi_sc = snr_semiclassical(p)
            scaled = CollectiveScaledParams.from_physical(p)
            _, _, snr_c, qfi_c = collective_snr(scaled)
            limit = closedform.crb_ratio_limit(p)
            return [w_sc, qfi_sc >= snr_sc, snr_sc / qfi_sc,
                    qfi_c >= snr_c, snr_c / qfi_c, limit], ""
        except Exception as exc:
            return [float("nan")] * 6, f"{type(exc).__name__}: {exc}"

    workers = max_workers or _thread_cap()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, grid))
    else:
        results = [evaluate(v) for v in grid]

    headers = ["n_atoms", "witness_ok_semiclassical", "crb_ok_semiclassical",
               "snr_over_qfi_semiclassical", "crb_ok_collective",
               "snr_over_qfi_collective", "ratio_limit", "error"]
    rows = []
    n_err = 0
    for value, (cells, err) in zip(grid, results):
        if err:
            n_err += 1
        rows.append([value, *cells, err])
    return headers, rows, n_err


def write_csv(stream, mode, headers, rows):
    stream.write(f"# magnetofisher v{__version__} mode={mode}\n")
    stream.write(",".join(headers) + "\n")
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, str):
                cells.append(cell.replace(",", ";"))
            else:
                cells.append(format_float(cell))
        stream.write(",".join(cells) + "\n")


def _thread_cap():
    raw = os.environ.get("MAGNETOFISHER_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser():
    ap = argparse.ArgumentParser(
        prog="magnetofisher",
        description="Faraday-magnetometer counting statistics and Fisher information")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", help="key=value parameter file")
    ap.add_argument("--grid", metavar="START,STOP,COUNT,SCALE",
                    help="sweep grid as a comma list, SCALE in {lin, log}")
    ap.add_argument("--grid-values", metavar="V1,V2,...",
                    help="explicit comma-separated grid points (overrides --grid)")
    ap.add_argument("--model", choices=MODELS, default="semiclassical-2lvl")
    ap.add_argument("--out", help="output CSV path (default stdout)")
    ap.add_argument("--n-list", nargs="+", type=int, default=[10, 20, 40],
                    help="finite-size atom numbers for benchmark-finite")
    ap.add_argument("--kappa-p", type=float, help="collective pump for benchmark-finite")
    ap.add_argument("--kappa-z", type=float, help="collective relaxation for benchmark-finite")
    ap.add_argument("--sweep-axis", choices=("kappa-z", "h-z"), default="kappa-z")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        params = load_config(args.config) if args.config else reference_params()
        if args.grid_values:
            grid = np.array([float(v) for v in args.grid_values.split(",")])
        elif args.grid:
            parts = args.grid.split(",")
            if len(parts) != 4:
                raise ConfigError("--grid expects START,STOP,COUNT,SCALE")
            grid = make_grid(float(parts[0]), float(parts[1]),
                             int(parts[2]), parts[3])
        else:
            raise ConfigError("a grid is required (--grid or --grid-values)")

        if args.mode in ("sweep-bz", "sweep-n", "sweep-pump"):
            headers, rows, n_err = run_sweep(args.mode, grid, params, args.model)
        elif args.mode == "sweep-kappa":
            base = CollectiveScaledParams.from_physical(params)
            headers, rows, n_err = _sweep_kappa(grid, base)
        elif args.mode == "benchmark-finite":
            base = CollectiveScaledParams(
                kappa_P=args.kappa_p if args.kappa_p is not None else 0.1 * params.h_x,
                kappa_z=args.kappa_z if args.kappa_z is not None else 0.0,
                h_x=params.h_x, h_z=params.h_z, tau=params.tau, n_atoms=max(args.n_list))
            headers, rows, n_err = run_benchmark_finite(
                grid, base, args.n_list, sweep=args.sweep_axis)
        elif args.mode == "crb-witness":
            headers, rows, n_err = run_crb_witness(grid, params)
        else:  # pragma: no cover
            raise ConfigError(f"unhandled mode {args.mode}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"magnetofisher: configuration error: {exc}", file=sys.stderr)
        return 2

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            write_csv(fh, args.mode, headers, rows)
    else:
        write_csv(sys.stdout, args.mode, headers, rows)
    return 1 if n_err else 0


def _sweep_kappa(grid, base):
    """Collective mean-field sweep over kappa_P at fixed kappa_z."""

    def evaluate(value):
        try:
            point = base.with_updates(kappa_P=float(value))
            row = _collective_row_scaled(point)
            return row, ""
        except Exception as exc:
            return {k: float("nan") for k in ROW_COLUMNS}, f"{type(exc).__name__}: {exc}"

    results = [evaluate(v) for v in grid]
    headers = ["grid_value", *ROW_COLUMNS, "error"]
    rows = []
    n_err = 0
    for value, (row, err) in zip(grid, results):
        if err:
            n_err += 1
        rows.append([value, *[row[k] for k in ROW_COLUMNS], err])
    return headers, rows, n_err


if __name__ == "__main__":
    sys.exit(main())

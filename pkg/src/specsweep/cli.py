"""Command-line driver: matrix generation, DOS and trace runs, the dense
oracle, and machine-readable CSV/JSON output.

Exit codes are stable: 0 ok, 2 bad configuration or input parse failure,
3 memory guard refusal, 4 dense oracle cap, 5 bad function spec, 1 anything
else.  Output files are byte-reproducible for a fixed configuration and seed
(wall-clock timing is reported on stderr, never in the files).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from .errors import (
    ConfigError,
    DenseCapError,
    FunctionSpecError,
    MatrixMarketParseError,
    MemoryGuardError,
    UnsupportedFormatError,
)
from .estimators import (
    DosRequest,
    dgc_dos,
    exact_dos,
    rel_l1_error,
    ress_dgc_dos,
    ss_dgc_dos,
)
from .operators import (
    DENSE_ORACLE_CAP,
    SpectralBounds,
    dense_eigenvalues,
    estimate_bounds,
    gen_modes3d,
    load_matrix_market,
    save_matrix_market,
    spectral_transform,
)
from .tracefn import WindowParams, make_function, trace_of_function

CSV_COLUMNS = ("t", "phi", "kept", "dropped_small", "dropped_range", "correction")

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_MEMORY = 3
EXIT_ORACLE_CAP = 4
EXIT_FUNCTION = 5

_METHOD_DISPATCH = {"dgc": dgc_dos, "ss": ss_dgc_dos, "ress": ress_dgc_dos}


def _fmt(x):
    """Floats with 17 significant digits: lossless double round-trip."""
    return f"{float(x):.17g}"


def _default_threads():
    try:
        return max(1, int(os.environ.get("SPECSWEEP_THREADS", "1")))
    except ValueError:
        return 1


def _add_matrix_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="Matrix Market file (coordinate real symmetric)")
    src.add_argument("--cells", type=int, help="generate the model matrix with this many cells per dimension")
    p.add_argument("--L", type=float, default=6.0, help="unit cell edge length (generator)")
    p.add_argument("--h", type=float, default=0.6, help="grid spacing (generator)")
    p.add_argument("--depth", type=float, default=-4.0, help="potential well amplitude (generator)")
    p.add_argument("--width", type=float, default=1.2, help="potential well width (generator)")


def _add_spectral_args(p):
    p.add_argument("--bounds", help="override spectral bounds as 'a,b' (skips the power estimate)")
    p.add_argument("--margin", type=float, default=None, help="bounds widening fraction")
    p.add_argument("--bounds-seed", type=int, default=0, help="seed for the bounds estimate")


def _add_grid_args(p):
    p.add_argument("--grid-count", type=int, default=100, help="number of DOS evaluation points")
    p.add_argument("--grid-min", type=float, default=None, help="grid start (scaled units)")
    p.add_argument("--grid-max", type=float, default=None, help="grid end (scaled units)")


def build_parser():
    p = argparse.ArgumentParser(prog="specsweep", description=__doc__)
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker threads for the block matvec (default: SPECSWEEP_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a model matrix and write it to Matrix Market")
    g.add_argument("--cells", type=int, required=True)
    g.add_argument("--L", type=float, default=6.0)
    g.add_argument("--h", type=float, default=0.6)
    g.add_argument("--depth", type=float, default=-4.0)
    g.add_argument("--width", type=float, default=1.2)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("dos", help="estimate the regularized DOS")
    _add_matrix_args(d)
    _add_spectral_args(d)
    _add_grid_args(d)
    d.add_argument("--method", choices=("dgc", "ss", "ress"), default="ress")
    d.add_argument("--sigma", type=float, default=0.05, help="regularization width (scaled units)")
    d.add_argument("--degree", type=int, default=800)
    d.add_argument("--n-probe", type=int, default=80)
    d.add_argument("--n-probe-hybrid", type=int, default=0)
    d.add_argument("--tau", type=float, default=1e-7)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--probe-kind", choices=("gaussian", "rademacher"), default="gaussian")
    d.add_argument("--mem-cap-gib", type=float, default=8.0, help="spectrum sweeping memory guard")
    d.add_argument("--out", required=True)
    d.add_argument("--format", choices=("csv", "json", "both"), default="both")
    d.set_defaults(func=cmd_dos)

    e = sub.add_parser("exact", help="exact regularized DOS via dense eigendecomposition")
    _add_matrix_args(e)
    _add_spectral_args(e)
    _add_grid_args(e)
    e.add_argument("--sigma", type=float, default=0.05)
    e.add_argument("--cap", type=int, default=DENSE_ORACLE_CAP, help="dense eigensolver size cap")
    e.add_argument("--against", help="approximate DOS CSV to score (adds rel_l1_error to the JSON)")
    e.add_argument("--out", required=True)
    e.add_argument("--format", choices=("csv", "json", "both"), default="both")
    e.set_defaults(func=cmd_exact)

    t = sub.add_parser("trace", help="trace of a smooth matrix function")
    _add_matrix_args(t)
    _add_spectral_args(t)
    t.add_argument("--function", required=True,
                   help="e.g. 'fermi-dirac:beta=10,mu=-1', 'identity', 'constant:value=1'")
    t.add_argument("--method", choices=("dgc", "ss", "ress", "exact"), default="ress")
    t.add_argument("--sigma", type=float, default=0.05)
    t.add_argument("--degree", type=int, default=1600)
    t.add_argument("--n-probe", type=int, default=80)
    t.add_argument("--n-probe-hybrid", type=int, default=0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--tau", type=float, default=1e-7)
    t.add_argument("--n-grid", type=int, default=None)
    t.add_argument("--window-half-width", type=float, default=None)
    t.add_argument("--window-sigma-tilde", type=float, default=None)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_trace)
    return p


def _resolve_matrix(args):
    if getattr(args, "input", None):
        return load_matrix_market(args.input), {"input": args.input}
    gen = {
        "cells": args.cells, "L": args.L, "h": args.h,
        "depth": args.depth, "width": args.width,
    }
    A = gen_modes3d(args.cells, args.L, args.h, args.depth, args.width)
    return A, {"generator": gen}


def _resolve_bounds(args, A, threads):
    margin = args.margin
    if args.bounds:
        try:
            a_str, b_str = args.bounds.split(",")
            a, b = float(a_str), float(b_str)
        except ValueError:
            raise ConfigError(f"--bounds must be 'a,b', got {args.bounds!r}") from None
        return SpectralBounds(a, b, margin=margin if margin is not None else 0.01)
    kwargs = {"seed": args.bounds_seed, "threads": threads}
    if margin is not None:
        kwargs["margin"] = margin
    return estimate_bounds(A, **kwargs)


def _resolve_grid(args, op, bounds, sigma):
    if args.grid_min is not None or args.grid_max is not None:
        if args.grid_min is None or args.grid_max is None:
            raise ConfigError("--grid-min and --grid-max must be given together")
        lo, hi = args.grid_min, args.grid_max
    else:
        w = max(abs(float(op.to_scaled(bounds.a))), abs(float(op.to_scaled(bounds.b))))
        cover = min(w + 4.0 * sigma, 1.0 - 1e-9)
        lo, hi = -cover, cover
    if args.grid_count < 1:
        raise ConfigError("--grid-count must be positive")
    return np.linspace(lo, hi, args.grid_count)


def _write_dos_csv(path, result):
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for i in range(len(result.grid)):
            fh.write(
                f"{_fmt(result.grid[i])},{_fmt(result.phi[i])},{int(result.kept[i])},"
                f"{int(result.dropped_small[i])},{int(result.dropped_range[i])},"
                f"{_fmt(result.correction[i])}\n"
            )


def _json_path(path):
    root, ext = os.path.splitext(path)
    return (root if ext.lower() == ".csv" else path) + ".json"


def _dos_json_payload(result, provenance):
    rows = [
        [
            result.grid[i], result.phi[i], int(result.kept[i]),
            int(result.dropped_small[i]), int(result.dropped_range[i]),
            result.correction[i],
        ]
        for i in range(len(result.grid))
    ]
    return {"schema": "specsweep.dos/v1", "provenance": provenance, "columns": list(CSV_COLUMNS), "rows": rows}


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _full_provenance(result, args, source, bounds, grid, threads):
    prov = dict(result.provenance)
    prov.pop("wall_time_s", None)  # timing goes to stderr, files stay reproducible
    prov.update(source)
    prov["bounds"] = {"a": bounds.a, "b": bounds.b, "margin": bounds.margin}
    prov["grid"] = {"count": len(grid), "min": float(grid[0]), "max": float(grid[-1])}
    prov["threads"] = threads
    return prov


def provenance_to_args(prov, out, fmt="both"):
    """Reconstruct the `dos` command line from a result's JSON provenance."""
    argv = ["dos"]
    if "input" in prov:
        argv += ["--input", prov["input"]]
    else:
        g = prov["generator"]
        argv += ["--cells", str(g["cells"]), "--L", _fmt(g["L"]), "--h", _fmt(g["h"]),
                 "--depth", _fmt(g["depth"]), "--width", _fmt(g["width"])]
    b = prov["bounds"]
    argv += ["--bounds", f"{_fmt(b['a'])},{_fmt(b['b'])}", "--margin", _fmt(b["margin"])]
    g = prov["grid"]
    argv += ["--grid-count", str(g["count"]), "--grid-min", _fmt(g["min"]), "--grid-max", _fmt(g["max"])]
    argv += [
        "--method", prov["method"], "--sigma", _fmt(prov["sigma"]),
        "--degree", str(prov["degree"]), "--n-probe", str(prov["n_probe"]),
        "--n-probe-hybrid", str(prov["n_probe_hybrid"]), "--tau", _fmt(prov["tau"]),
        "--seed", str(prov["seed"]), "--probe-kind", prov["probe_kind"],
        "--out", out, "--format", fmt,
    ]
    return argv


def cmd_gen(args):
    t0 = time.perf_counter()
    A = gen_modes3d(args.cells, args.L, args.h, args.depth, args.width)
    save_matrix_market(A, args.out)
    digest = hashlib.sha256(open(args.out, "rb").read()).hexdigest()
    meta = {
        "schema": "specsweep.matrix/v1",
        "name": A.name,
        "dim": A.dim,
        "nnz": A.nnz,
        "params": {"cells": args.cells, "L": args.L, "h": args.h,
                   "depth": args.depth, "width": args.width},
        "sha256": digest,
    }
    _write_json(args.out + ".json", meta)
    print(f"wrote {args.out} (dim {A.dim}, nnz {A.nnz}) in {time.perf_counter() - t0:.2f}s",
          file=sys.stderr)


def cmd_dos(args):
    t0 = time.perf_counter()
    A, source = _resolve_matrix(args)
    bounds = _resolve_bounds(args, A, args.threads)
    op = spectral_transform(A, bounds)
    grid = _resolve_grid(args, op, bounds, args.sigma)
    req = DosRequest(
        grid=grid, sigma=args.sigma, degree=args.degree, n_probe=args.n_probe,
        n_probe_hybrid=args.n_probe_hybrid, seed=args.seed, method=args.method,
        tau=args.tau, probe_kind=args.probe_kind,
    )
    runner = _METHOD_DISPATCH[args.method]
    kwargs = {"threads": args.threads}
    if args.method == "ss":
        kwargs["mem_cap_bytes"] = int(args.mem_cap_gib * 2**30)
    result = runner(op, req, **kwargs)
    prov = _full_provenance(result, args, source, bounds, grid, args.threads)
    if args.format in ("csv", "both"):
        _write_dos_csv(args.out, result)
    if args.format in ("json", "both"):
        _write_json(_json_path(args.out), _dos_json_payload(result, prov))
    print(f"dos [{args.method}] done in {time.perf_counter() - t0:.2f}s", file=sys.stderr)


def _read_dos_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != list(CSV_COLUMNS):
            raise ConfigError(f"unexpected CSV columns in {path}: {header}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    grid = np.array([float(r[0]) for r in rows])
    phi = np.array([float(r[1]) for r in rows])
    return grid, phi


def cmd_exact(args):
    t0 = time.perf_counter()
    A, source = _resolve_matrix(args)
    bounds = _resolve_bounds(args, A, args.threads)
    op = spectral_transform(A, bounds)
    grid = _resolve_grid(args, op, bounds, args.sigma)
    scaled = op.to_scaled(dense_eigenvalues(A, cap=args.cap))
    result = exact_dos(scaled, grid, args.sigma)
    prov = _full_provenance(result, args, source, bounds, grid, args.threads)
    payload = _dos_json_payload(result, prov)
    if args.against:
        approx_grid, approx_phi = _read_dos_csv(args.against)
        if approx_grid.shape != grid.shape or np.max(np.abs(approx_grid - grid)) > 1e-12:
            raise ConfigError("--against grid does not match this run's grid")
        payload["rel_l1_error"] = float(np.abs(approx_phi - result.phi).sum() / np.abs(result.phi).sum())
    if args.format in ("csv", "both"):
        _write_dos_csv(args.out, result)
    if args.format in ("json", "both"):
        _write_json(_json_path(args.out), payload)
    print(f"exact dos done in {time.perf_counter() - t0:.2f}s", file=sys.stderr)


def cmd_trace(args):
    t0 = time.perf_counter()
    A, source = _resolve_matrix(args)
    bounds = _resolve_bounds(args, A, args.threads)
    f = make_function(args.function)
    window = None
    if args.window_half_width is not None or args.window_sigma_tilde is not None:
        window = WindowParams(
            half_width=args.window_half_width if args.window_half_width is not None
            else 0.9,
            sigma_tilde=args.window_sigma_tilde if args.window_sigma_tilde is not None
            else 0.016,
        )
    result = trace_of_function(
        A, f, args.sigma, window=window, method=args.method,
        degree=args.degree, n_probe=args.n_probe, n_probe_hybrid=args.n_probe_hybrid,
        seed=args.seed, bounds=bounds, n_grid=args.n_grid, tau=args.tau,
        threads=args.threads,
    )
    prov = dict(result.provenance)
    prov.pop("wall_time_s", None)
    prov.update(source)
    prov["function"] = args.function
    report = {
        "schema": "specsweep.trace/v1",
        "estimate": result.estimate,
        "method": args.method,
        "zeroed_modes": result.zeroed_modes,
        "n_grid": result.n_grid,
        "provenance": prov,
    }
    _write_json(args.out, report)
    print(f"trace [{args.method}] = {result.estimate:.12g} "
          f"({result.zeroed_modes} modes zeroed) in {time.perf_counter() - t0:.2f}s",
          file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
        return EXIT_OK
    except (ConfigError, MatrixMarketParseError, UnsupportedFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MEMORY
    except DenseCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE_CAP
    except FunctionSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FUNCTION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())

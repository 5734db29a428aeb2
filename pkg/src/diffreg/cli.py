"""Command-line interface: ``diffreg {synth,register,transport,convergence,benchmark}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (including
a flagged solver report), 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields, replace
from itertools import zip_longest

import numpy as np

from . import precond as pcmod
from .errors import (CommunicationError, ConfigurationError, InputError, NumericalError, VolumeFormatError)
from .grid import Grid
from .io import load_volume, save_volume
from .kernels import Kernels
from .manifest import RunManifest, load_manifest, render_manifest
from .solver import RegistrationConfig, SolverReport, beta_continuation
from .synthetic import syn_problem
from .transport import Transport

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
TIMING_KEYS = ("timers", "wall_time")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _grid_arg(values) -> tuple[int, int, int]:
    if len(values) == 1:
        return (values[0],) * 3
    if len(values) == 3:
        return tuple(values)
    raise ConfigurationError("--grid takes one size (cube) or three sizes")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path: str, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def split_report(report: SolverReport) -> tuple[dict, dict]:
    """Deterministic part of a report and its timing part (wall clocks vary between reruns)."""
    d = report.to_dict()
    timing = {k: d.pop(k) for k in TIMING_KEYS}
    timing["levels"] = []
    for lv, row in zip(d["levels"], d["table"]):
        timing["levels"].append(lv.pop("wall_time"))
        row.pop("time_s")
    return d, timing


def _kernels(p: int):
    if p == 1:
        return Kernels()
    from .parallel import SlabKernels

    return SlabKernels(p)


# subcommands ------------------------------------------------------------


def cmd_synth(args) -> int:
    grid = Grid(*_grid_arg(args.grid), args.nt)
    m0, m1, v = syn_problem(grid, args.degree)
    os.makedirs(args.out, exist_ok=True)
    for name, f in (("m0", m0), ("m1", m1), ("v_true", v)):
        save_volume(os.path.join(args.out, f"{name}.vrg"), f, single=args.single)
    print(f"wrote SYN pair on {grid.shape} (nt={grid.nt}) to {args.out}")
    return EXIT_OK


def _manifest_from_args(args) -> RunManifest:
    m = load_manifest(args.config) if args.config else RunManifest()
    top = {}
    for key in ("template", "reference", "velocity_init", "p", "seed"):
        if getattr(args, key, None) is not None:
            top[key] = getattr(args, key)
    if args.out is not None:
        top["out_dir"] = args.out
    if args.grid is not None:
        top["grid"] = list(_grid_arg(args.grid))
    cfg = {f.name: getattr(args, f"cfg_{f.name}") for f in fields(RegistrationConfig)
           if getattr(args, f"cfg_{f.name}") is not None}
    try:
        return replace(m, **top, config=replace(m.config, **cfg))
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def cmd_register(args) -> int:
    man = _manifest_from_args(args)
    cfg = man.config
    if man.template is not None:
        m0, m1 = load_volume(man.template).astype(float), load_volume(man.reference).astype(float)
        if m0.ndim != 3 or m0.shape != m1.shape:
            raise ConfigurationError(f"template {m0.shape} and reference {m1.shape} must be matching scalar fields")
        grid = Grid(*m0.shape, cfg.nt)
    else:
        grid = Grid(*man.grid, cfg.nt)
        m0, m1, _ = syn_problem(grid, cfg.degree)
    v0 = load_volume(man.velocity_init).astype(float) if man.velocity_init else None
    os.makedirs(man.out_dir, exist_ok=True)
    kernels = _kernels(man.p)
    try:
        v, report = beta_continuation(m0, m1, cfg, grid, v0, kernels)
        deformed = Transport(grid, v, Kernels(), cfg.degree).solve_state(m0)[-1]
    finally:
        if man.p > 1:
            kernels.close()
    out = man.out_dir
    save_volume(os.path.join(out, "velocity.vrg"), v)
    save_volume(os.path.join(out, "deformed.vrg"), deformed)
    with open(os.path.join(out, "manifest.yaml"), "w") as fh:
        fh.write(render_manifest(man))
    det, timing = split_report(report)
    det["manifest"] = man.to_dict()
    _write_json(man.report_path, det)
    _write_json(os.path.join(out, "timings.json"), timing)
    table = det["table"]
    _write_csv(os.path.join(out, "levels.csv"), list(table[0]) if table else [], [list(r.values()) for r in table])
    rows = []
    for li, lv in enumerate(report.levels):
        for gi, hist in enumerate(lv.pcg_histories):
            rows += [[li, lv.beta, gi, it, r] for it, r in enumerate(hist)]
    _write_csv(os.path.join(out, "residuals.csv"), ["level", "beta", "gn_iteration", "pcg_iteration", "residual"], rows)
    print(f"mismatch {report.initial_mismatch:.4e} -> {report.final_mismatch:.4e} "
          f"(rel {report.final_mismatch_rel:.4f}); GN {report.total_gn}, PCG {report.total_pcg}")
    if report.flagged:
        flags = sorted({f for lv in report.levels for f in lv.flags})
        print(f"report flagged: {', '.join(flags)}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_transport(args) -> int:
    v = load_volume(args.velocity).astype(float)
    m = load_volume(args.image).astype(float)
    if v.ndim != 4 or m.ndim != 3 or v.shape[1:] != m.shape:
        raise ConfigurationError(f"velocity {v.shape} does not match image {m.shape}")
    grid = Grid(*m.shape, args.nt)
    kernels = _kernels(args.p)
    try:
        out = Transport(grid, v, kernels, args.degree).solve_state(m)[-1]
    finally:
        if args.p > 1:
            kernels.close()
    path = args.output or os.path.join(args.out or ".", "transported.vrg")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_volume(path, out, single=args.single)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_convergence(args) -> int:
    from .studies import convergence_study

    os.makedirs(args.out, exist_ok=True)
    curves, summary = [], []
    for n in args.grids:
        runs = convergence_study(n, args.betas, args.pcs, seed=args.seed, rhs=args.rhs, tol=args.tol,
                                 eps_k=args.eps_k, nt=args.nt, kernels=_kernels(args.p))
        for r in runs:
            # the converged iterate has no preconditioned residual (blank cell)
            for it, (res, pres) in enumerate(zip_longest(r.residuals, r.precond_residuals, fillvalue="")):
                curves.append([n, r.beta, r.preconditioner, it, res, pres])
            summary.append([n, r.beta, r.preconditioner, r.iterations, r.converged, r.inner_average,
                            r.inner_work_per_application])
            print(f"n={n} beta={r.beta:g} {r.preconditioner:8s} iterations={r.iterations}")
    _write_csv(os.path.join(args.out, "convergence.csv"),
               ["n", "beta", "preconditioner", "iteration", "residual", "precond_residual"], curves)
    _write_csv(os.path.join(args.out, "convergence_summary.csv"),
               ["n", "beta", "preconditioner", "iterations", "converged", "inner_avg", "inner_work_per_application"],
               summary)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    from .costmodel import KERNEL_KEYS
    from .parallel import PHASES
    from .studies import benchmark

    os.makedirs(args.out, exist_ok=True)
    comm_keys = ("fft", "fd_ghost", "ip_ghost", "ip_route", "ip_return", "scatter_halo")
    header = (["n", "p", "wall_s"] + [f"time_{k}" for k in ("fft", "fd", "ip")]
              + [f"phase_{ph}" for ph in PHASES] + [f"count_{k}" for k in KERNEL_KEYS]
              + [f"bytes_{c}" for c in comm_keys] + ["fd_ghost_bytes_per_call_worker", "memory_bytes"])
    rows = []
    for n in args.grids:
        for p in args.ps:
            rep = benchmark(n, p, gn=args.gn, pcg_its=args.pcg, beta=args.beta, nt=args.nt)
            row = [n, p, rep.wall_time] + [rep.timers.get(k, 0.0) for k in ("fft", "fd", "ip")]
            row += [rep.timers.get(f"phase:{ph}", 0.0) for ph in PHASES]
            row += [rep.counters.get(k, 0) for k in KERNEL_KEYS]
            row += [rep.comm.get(f"{c}_bytes", 0) for c in comm_keys]
            row += [2 * 4 * n * n * 8 if p > 1 else 0, rep.memory_bytes]
            rows.append(row)
            print(f"n={n} p={p} wall={rep.wall_time:.2f}s memory={rep.memory_bytes / 2**30:.3f} GiB")
    _write_csv(os.path.join(args.out, "benchmark.csv"), header, rows)
    return EXIT_OK


# parser -----------------------------------------------------------------


def _add_config_overrides(sp) -> None:
    g = sp.add_argument_group("solver overrides (mirror the manifest's config block)")
    for f in fields(RegistrationConfig):
        default = f.default
        flag = "--" + f.name.replace("_", "-")
        dest = f"cfg_{f.name}"
        if isinstance(default, bool):
            g.add_argument(flag, dest=dest, action=argparse.BooleanOptionalAction, default=None)
        elif f.name == "preconditioner":
            g.add_argument(flag, dest=dest, choices=pcmod.NAMES, default=None)
        else:
            g.add_argument(flag, dest=dest, type=type(default), default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run manifest (YAML or JSON)")
    common.add_argument("--p", type=int, default=None, help="worker count")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")

    ap = _Parser(prog="diffreg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("synth", parents=[common], help="write the SYN template, reference and velocity")
    sp.add_argument("--grid", type=int, nargs="+", default=[32])
    sp.add_argument("--nt", type=int, default=4)
    sp.add_argument("--degree", type=int, choices=(1, 3), default=3)
    sp.add_argument("--single", action="store_true", help="store float32")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("register", parents=[common], help="register two images (SYN when none given)")
    sp.add_argument("--template")
    sp.add_argument("--reference")
    sp.add_argument("--velocity-init", dest="velocity_init")
    sp.add_argument("--grid", type=int, nargs="+", default=None)
    _add_config_overrides(sp)
    sp.set_defaults(func=cmd_register)

    sp = sub.add_parser("transport", parents=[common], help="advect an image with a stationary velocity")
    sp.add_argument("--velocity", required=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--nt", type=int, default=4)
    sp.add_argument("--degree", type=int, choices=(1, 3), default=3)
    sp.add_argument("--output", help="output file (default OUT/transported.vrg)")
    sp.add_argument("--single", action="store_true")
    sp.set_defaults(func=cmd_transport)

    sp = sub.add_parser("convergence", parents=[common], help="PCG residual histories per preconditioner")
    sp.add_argument("--betas", type=float, nargs="+", default=[5e-1, 1e-1, 5e-2])
    sp.add_argument("--grids", type=int, nargs="+", default=[32])
    sp.add_argument("--pcs", nargs="+", choices=pcmod.NAMES, default=list(pcmod.NAMES))
    sp.add_argument("--rhs", choices=("white", "gradient"), default="white")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--eps-k", dest="eps_k", type=float, default=0.5)
    sp.add_argument("--nt", type=int, default=4)
    sp.set_defaults(func=cmd_convergence)

    sp = sub.add_parser("benchmark", parents=[common], help="fixed-work runs with time and traffic breakdowns")
    sp.add_argument("--ps", type=int, nargs="+", default=[1, 2, 4])
    sp.add_argument("--grids", type=int, nargs="+", default=[32])
    sp.add_argument("--gn", type=int, default=5)
    sp.add_argument("--pcg", type=int, default=10)
    sp.add_argument("--beta", type=float, default=1e-2)
    sp.add_argument("--nt", type=int, default=4)
    sp.set_defaults(func=cmd_benchmark)
    return ap


def _finalize_common(args) -> None:
    if args.command != "register":
        if args.out is None:
            args.out = "out"
        if args.p is None:
            args.p = 1
        if args.seed is None:
            args.seed = 0
    if args.p is not None and args.p < 1:
        raise ConfigurationError("--p must be positive")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _finalize_common(args)
        return args.func(args)
    except (VolumeFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, InputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, CommunicationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end for the experiment and benchmark harness.

Every subcommand resolves its configuration (built-in defaults, then an
optional flat key=value config file, then command-line flags), runs its
sweep, writes a schema-tagged result file with a JSON mirror and a
provenance sidecar, and prints a short human-readable summary.

Exit codes: 0 success; 1 configuration error; 2 experiment failure, with
any completed cells preserved and the output marked truncated; 3 failed
verification (scan or bound checks).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .bench import DEFAULT_T_SWEEP, comparison_backends, fit_loglog_slope, sweep_latency
from .config import U_MODES, ConfigError, HeadConfig
from .diagnostics import aligned_pair, bound_check, jacobian_report, run_norm_trace
from .io import write_result, write_sidecar
from .kernels import KERNEL_KINDS
from .scan import ScanStats, blelloch_scan, sequential_scan, vla_elements
from .streams import stream_arrays
from .tasks import (
    GEOMETRIES,
    gen_copy,
    gen_mqar,
    recall_experiment,
    summarize_results,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_EXPERIMENT = 2
EXIT_CHECK = 3

DEFAULT_RECALL_N = (4, 8, 16, 24, 32, 48, 64, 96)
DEFAULT_RECALL_SEEDS = (42, 123, 999)
DEFAULT_LONGCTX_T = (64, 128, 256, 512)
SCAN_CHECK_TOL = 1e-10


class _Parser(argparse.ArgumentParser):
    """Argument parser whose failures map to the config-error exit code."""

    def error(self, message):
        raise ConfigError(message)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_list(text: str, coerce: Callable, what: str) -> list:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise ConfigError(f"empty {what} list: {text!r}")
    try:
        return [coerce(part) for part in items]
    except ValueError as exc:
        raise ConfigError(f"invalid {what} list {text!r}: {exc}") from exc


_CONFIG_COERCERS: dict[str, Callable] = {
    "d_h": int,
    "lambda0": float,
    "epsilon": float,
    "refresh_period": int,
    "refresh_eta": float,
    "u_mode": str,
    "u_seed": int,
    "normalize_alpha": _parse_bool,
    "beta": float,
}


def _load_config_file(path: str) -> dict:
    """Parse a flat key=value file; unknown keys fail with file:line."""
    merged: dict = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        if key not in _CONFIG_COERCERS:
            raise ConfigError(
                f"{path}:{lineno}: unknown config key {key!r}; "
                f"known keys: {', '.join(sorted(_CONFIG_COERCERS))}"
            )
        try:
            merged[key] = _CONFIG_COERCERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return merged


def _resolve_config(args) -> tuple[HeadConfig, float]:
    """Defaults, then config file, then explicit flags; returns (cfg, beta)."""
    merged = {}
    if args.config:
        merged.update(_load_config_file(args.config))
    for key in _CONFIG_COERCERS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    beta = float(merged.pop("beta", 0.9))
    if not 0.0 < beta <= 1.0:
        raise ConfigError(f"beta must be in (0, 1], got {beta}")
    return HeadConfig(**merged), beta


def _run_cells_tolerant(
    labels: Sequence[str],
    fns: Sequence[Callable],
    workers: int,
) -> tuple[list, Optional[str]]:
    """Run sweep cells, keeping every completed result when one fails.

    Returns the completed results in submission order plus a description
    of the first failure, or None when the whole sweep succeeded.
    """
    results: list = [None] * len(fns)
    error: Optional[str] = None
    if workers > 1 and len(fns) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn) for fn in fns]
            for label, future in zip(labels, futures):
                try:
                    results[labels.index(label)] = future.result()
                except Exception as exc:
                    if error is None:
                        error = f"cell {label}: {exc}"
    else:
        for i, (label, fn) in enumerate(zip(labels, fns)):
            try:
                results[i] = fn()
            except Exception as exc:
                if error is None:
                    error = f"cell {label}: {exc}"
    return [r for r in results if r is not None], error


def _print_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    widths = [
        max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
        for i, h in enumerate(headers)
    ]
    print("  ".join(str(h).ljust(w) for h, w in zip(headers, widths)))
    for row in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))


def _emit(args, schema: str, rows, cfg: HeadConfig, beta: float, seeds, started: float,
          truncated: bool, extra: Optional[dict] = None) -> None:
    out = args.out or f"vlamem-{schema}.{args.format}"
    written = write_result(out, schema, rows, fmt=args.format, truncated=truncated)
    config = {**asdict(cfg), "beta": beta, "subcommand": args.subcommand}
    if extra:
        config.update(extra)
    write_sidecar(
        out,
        args.subcommand,
        config,
        seeds,
        duration_s=time.perf_counter() - started,
        truncated=truncated,
    )
    for path in written:
        print(f"wrote {path}")


def _recall_rows(results) -> list[dict]:
    return [asdict(r) for r in results]


def _handle_recall(args) -> int:
    started = time.perf_counter()
    cfg, beta = _resolve_config(args)
    kernels = _parse_list(args.kernels, str, "kernel")
    for kind in kernels:
        if kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel {kind!r}, expected one of {KERNEL_KINDS}")
    n_list = _parse_list(args.n, int, "pair count")
    seeds = _parse_list(args.seeds, int, "seed")
    if args.geometry not in GEOMETRIES:
        raise ConfigError(f"unknown geometry {args.geometry!r}, expected one of {GEOMETRIES}")
    labels, fns = [], []
    for kind in kernels:
        for n in n_list:
            for seed in seeds:
                labels.append(f"{kind}/n={n}/seed={seed}")
                fns.append(
                    lambda kind=kind, n=n, seed=seed: recall_experiment(
                        kind, cfg, n, args.geometry, seed,
                        total_len=args.total_len,
                        write_pads=not args.no_pads,
                        beta=beta,
                    )
                )
    results, error = _run_cells_tolerant(labels, fns, args.workers)
    if results:
        summary = summarize_results(results)
        _print_table(
            ("kernel", "n_pairs", "accuracy", "cells"),
            [
                (
                    row["kernel"],
                    row["n_pairs"],
                    f"{row['mean_accuracy']:.3f} +/- {row['std_accuracy']:.3f}",
                    row["cells"],
                )
                for row in summary
            ],
        )
    _emit(
        args, "recall", _recall_rows(results), cfg, beta, seeds, started,
        truncated=error is not None,
        extra={"kernels": kernels, "n_list": n_list, "geometry": args.geometry,
               "write_pads": not args.no_pads, "workers": args.workers},
    )
    if error is not None:
        print(f"experiment failure: {error}", file=sys.stderr)
        return EXIT_EXPERIMENT
    return EXIT_OK


def _handle_longctx(args) -> int:
    started = time.perf_counter()
    cfg, beta = _resolve_config(args)
    kernels = _parse_list(args.kernels, str, "kernel")
    for kind in kernels:
        if kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel {kind!r}, expected one of {KERNEL_KINDS}")
    t_list = _parse_list(args.T, int, "context length")
    seeds = _parse_list(args.seeds, int, "seed")
    if args.geometry not in GEOMETRIES:
        raise ConfigError(f"unknown geometry {args.geometry!r}, expected one of {GEOMETRIES}")
    labels, fns = [], []
    for kind in kernels:
        for t in t_list:
            for seed in seeds:
                labels.append(f"{kind}/T={t}/seed={seed}")
                fns.append(
                    lambda kind=kind, t=t, seed=seed: recall_experiment(
                        kind, cfg, args.n, args.geometry, seed,
                        total_len=t,
                        write_pads=not args.no_pads,
                        beta=beta,
                    )
                )
    results, error = _run_cells_tolerant(labels, fns, args.workers)
    if results:
        summary = summarize_results(results, by=("kernel", "total_len"))
        _print_table(
            ("kernel", "total_len", "accuracy", "cells"),
            [
                (
                    row["kernel"],
                    row["total_len"],
                    f"{row['mean_accuracy']:.3f} +/- {row['std_accuracy']:.3f}",
                    row["cells"],
                )
                for row in summary
            ],
        )
    _emit(
        args, "longctx", _recall_rows(results), cfg, beta, seeds, started,
        truncated=error is not None,
        extra={"kernels": kernels, "t_list": t_list, "n": args.n,
               "geometry": args.geometry, "write_pads": not args.no_pads,
               "workers": args.workers},
    )
    if error is not None:
        print(f"experiment failure: {error}", file=sys.stderr)
        return EXIT_EXPERIMENT
    return EXIT_OK


def _handle_stability(args) -> int:
    started = time.perf_counter()
    cfg, beta = _resolve_config(args)
    if args.kernel not in KERNEL_KINDS:
        raise ConfigError(f"unknown kernel {args.kernel!r}, expected one of {KERNEL_KINDS}")
    seeds = _parse_list(args.seeds, int, "seed")
    rows = []
    violations = 0
    error = None
    for seed in seeds:
        try:
            trace = run_norm_trace(args.kernel, cfg, args.stream, args.T, seed, beta=beta)
        except ConfigError:
            raise
        except Exception as exc:
            error = f"seed {seed}: {exc}"
            break
        if args.bound_check:
            report = bound_check(trace)
            violations += report.violations
        rows.extend(
            {"kernel": args.kernel, "seed": seed, **asdict(rec)} for rec in trace
        )
    if rows:
        last = rows[-1]
        print(
            f"{args.kernel} T={args.T}: final s_norm {last['s_norm']:.4f}"
            + (f", a_norm {last['a_norm']:.4f}" if args.kernel == "vla" else "")
        )
    _emit(
        args, "stability", rows, cfg, beta, seeds, started,
        truncated=error is not None,
        extra={"kernel": args.kernel, "T": args.T, "stream": args.stream,
               "bound_check": args.bound_check},
    )
    if error is not None:
        print(f"experiment failure: {error}", file=sys.stderr)
        return EXIT_EXPERIMENT
    if args.bound_check:
        if violations:
            print(f"bound-check FAIL: {violations} violations", file=sys.stderr)
            return EXIT_CHECK
        print("bound-check PASS: 0 violations")
    return EXIT_OK


def _handle_jacobian(args) -> int:
    started = time.perf_counter()
    cfg, beta = _resolve_config(args)
    alignments = _parse_list(args.alignments, float, "alignment")
    rows = []
    for c in alignments:
        if abs(c) > 1.0:
            raise ConfigError(f"alignment must lie in [-1, 1], got {c}")
        k_hat, alpha_hat = aligned_pair(c, cfg.d_h)
        report = jacobian_report(k_hat, alpha_hat)
        rows.append(
            {
                "alignment": c,
                "sigma_closed_form": report.sigma_closed_form,
                "sigma_numeric": report.sigma_numeric,
                "abs_error": abs(report.sigma_numeric - report.sigma_closed_form),
            }
        )
    worst = max(row["abs_error"] for row in rows)
    _print_table(
        ("alignment", "closed form", "numeric", "abs error"),
        [
            (f"{r['alignment']:+.2f}", f"{r['sigma_closed_form']:.12f}",
             f"{r['sigma_numeric']:.12f}", f"{r['abs_error']:.3e}")
            for r in rows
        ],
    )
    print(f"max abs error {worst:.3e}")
    _emit(args, "jacobian", rows, cfg, beta, [], started, truncated=False,
          extra={"alignments": alignments})
    return EXIT_OK


def _handle_bench(args) -> int:
    started = time.perf_counter()
    cfg, beta = _resolve_config(args)
    kernels = _parse_list(args.kernels, str, "kernel")
    for kind in kernels:
        if kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel {kind!r}, expected one of {KERNEL_KINDS}")
    t_list = _parse_list(args.T, int, "sequence length")
    if args.backends == "both":
        backends = comparison_backends()
    else:
        backends = tuple(_parse_list(args.backends, str, "backend"))
    try:
        records = sweep_latency(
            kernels, cfg, t_list, reps=args.reps, warmup=args.warmup,
            backends=backends, seed=args.seed, beta=beta,
        )
    except ConfigError:
        raise
    rows = [asdict(r) for r in records]
    table = []
    for backend in backends:
        for kind in kernels:
            group = [r for r in records if r.kernel == kind and r.backend == backend]
            slope = (
                f"{fit_loglog_slope(group):.2f}"
                if len({r.T for r in group}) >= 3
                else "-"
            )
            for rec in group:
                table.append(
                    (rec.kernel, rec.backend, rec.T,
                     f"{rec.median_ms:.3f}", f"{rec.tokens_per_s:.0f}", slope)
                )
    _print_table(("kernel", "backend", "T", "median_ms", "tokens/s", "slope"), table)
    _emit(args, "bench", rows, cfg, beta, [args.seed], started, truncated=False,
          extra={"kernels": kernels, "t_list": t_list, "backends": list(backends),
                 "reps": args.reps, "warmup": args.warmup})
    return EXIT_OK


def _handle_scan_check(args) -> int:
    started = time.perf_counter()
    cfg, beta = _resolve_config(args)
    t_list = _parse_list(args.T, int, "sequence length")
    workers_list = _parse_list(args.scan_workers, int, "worker count")
    rows = []
    all_ok = True
    for t in t_list:
        k, v, _ = stream_arrays("gaussian", cfg.d_h, t, args.seed)
        elements = vla_elements(cfg, k, v)
        s0 = np.zeros((cfg.d_h, cfg.d_h))
        reference = sequential_scan(elements, s0)
        for workers in workers_list:
            stats = ScanStats()
            states = blelloch_scan(elements, s0, workers=workers, stats=stats)
            worst = 0.0
            for got, want in zip(states, reference):
                denom = max(float(np.linalg.norm(want)), 1e-300)
                worst = max(worst, float(np.linalg.norm(got - want)) / denom)
            ok = worst <= SCAN_CHECK_TOL
            all_ok = all_ok and ok
            rows.append(
                {"T": t, "workers": workers, "max_rel_deviation": worst,
                 "ok": int(ok)}
            )
            print(
                f"scan-check T={t} workers={workers}: "
                f"{'PASS' if ok else 'FAIL'} max rel deviation {worst:.3e} "
                f"({stats.compositions} compositions)"
            )
    _emit(args, "scan-check", rows, cfg, beta, [args.seed], started, truncated=False,
          extra={"t_list": t_list, "workers_list": workers_list,
                 "tolerance": SCAN_CHECK_TOL})
    return EXIT_OK if all_ok else EXIT_CHECK


def _handle_gen(args) -> int:
    started = time.perf_counter()
    cfg, beta = _resolve_config(args)
    if args.count < 1:
        raise ConfigError(f"count must be positive, got {args.count}")
    lines = []
    for i in range(args.count):
        seed = args.seed + i
        if args.task == "mqar":
            inst = gen_mqar(args.n, total_len=args.total_len, seed=seed)
        else:
            inst = gen_copy(args.half_len, seed=seed)
        lines.append(inst.to_line())
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        print(f"wrote {args.out} ({args.count} instances)")
        write_sidecar(
            args.out, "gen",
            {**asdict(cfg), "beta": beta, "task": args.task, "count": args.count,
             "n": args.n, "half_len": args.half_len, "total_len": args.total_len},
            [args.seed], duration_s=time.perf_counter() - started,
        )
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--out", help="output path (default vlamem-<schema>.<fmt>)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="sweep worker pool size")
    parser.add_argument("--d-h", dest="d_h", type=int, default=None)
    parser.add_argument("--lambda0", type=float, default=None)
    parser.add_argument("--epsilon", type=float, default=None)
    parser.add_argument("--refresh-period", dest="refresh_period", type=int, default=None)
    parser.add_argument("--refresh-eta", dest="refresh_eta", type=float, default=None)
    parser.add_argument("--u-mode", dest="u_mode", choices=U_MODES, default=None)
    parser.add_argument("--u-seed", dest="u_seed", type=int, default=None)
    parser.add_argument("--normalize-alpha", dest="normalize_alpha", type=_parse_bool,
                        default=None, metavar="BOOL")
    parser.add_argument("--beta", type=float, default=None,
                        help="decay gate for the delta kernel")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vlamem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vlamem {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("recall", parents=[], help="associative recall sweep")
    _add_common(p)
    p.add_argument("--kernels", default="vla,linear,deltanet,softmax")
    p.add_argument("--n", default=",".join(str(n) for n in DEFAULT_RECALL_N))
    p.add_argument("--seeds", default=",".join(str(s) for s in DEFAULT_RECALL_SEEDS))
    p.add_argument("--geometry", default="random-unit")
    p.add_argument("--total-len", dest="total_len", type=int, default=None)
    p.add_argument("--no-pads", action="store_true")
    p.set_defaults(handler=_handle_recall)

    p = subs.add_parser("longctx", help="recall across padded context lengths")
    _add_common(p)
    p.add_argument("--kernels", default="vla,linear,deltanet,softmax")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--T", default=",".join(str(t) for t in DEFAULT_LONGCTX_T))
    p.add_argument("--seeds", default=",".join(str(s) for s in DEFAULT_RECALL_SEEDS))
    p.add_argument("--geometry", default="orthonormal")
    p.add_argument("--no-pads", action="store_true")
    p.set_defaults(handler=_handle_longctx)

    p = subs.add_parser("stability", help="state-norm traces over a stream")
    _add_common(p)
    p.add_argument("--kernel", default="vla")
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--stream", default="gaussian",
                   help='"gaussian" or "cyclic-pairs(n)"')
    p.add_argument("--seeds", default="42")
    p.add_argument("--bound-check", dest="bound_check", action="store_true",
                   help="verify the state-norm bound; exit 3 on violation")
    p.set_defaults(handler=_handle_stability)

    p = subs.add_parser("jacobian", help="closed-form vs numeric Jacobian norms")
    _add_common(p)
    p.add_argument("--alignments", default="-1,-0.5,0,0.5,0.9,1.0")
    p.set_defaults(handler=_handle_jacobian)

    p = subs.add_parser("bench", help="forward-pass latency sweep")
    _add_common(p)
    p.add_argument("--kernels", default="vla,linear,deltanet,softmax")
    p.add_argument("--T", default=",".join(str(t) for t in DEFAULT_T_SWEEP))
    p.add_argument("--reps", type=int, default=7)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--backends", default="both",
                   help='"both", or a comma list of auto/python/compiled')
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_handle_bench)

    p = subs.add_parser("scan-check", help="parallel scan vs sequential oracle")
    _add_common(p)
    p.add_argument("--T", default="256")
    p.add_argument("--scan-workers", dest="scan_workers", default="1,4",
                   help="worker counts to verify")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_handle_scan_check)

    p = subs.add_parser("gen", help="emit task instances as text lines")
    _add_common(p)
    p.add_argument("--task", choices=("mqar", "copy"), default="mqar")
    p.add_argument("--n", type=int, default=8, help="pairs per mqar instance")
    p.add_argument("--half-len", dest="half_len", type=int, default=16,
                   help="half length for copy instances")
    p.add_argument("--total-len", dest="total_len", type=int, default=None)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_handle_gen)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # experiment-level failures outside sweep cells
        print(f"experiment failure: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())

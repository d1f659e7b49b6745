"""Command-line driver.

Subcommands:
  run             evolve a network file and write its trajectory
  check-wellposed spectral nondegeneracy check of the junction conditions
  diagnose        residuals, lengths and speeds of a network file
  compare         evolve two parametrisations of one network, report the
                  Hausdorff distance between the outcomes
  oracle          write one of the built-in reference networks

Exit codes: 0 success, 2 validation/input errors, 3 when --expect-horizon
is set and the run stopped for any reason other than reaching the
horizon.  check-wellposed exits 1 on a FAIL verdict.

The environment variable NETFLOW_LOG in {error, info, debug} sets the log
level (default error); results go to stdout, logs to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io as netio
from .errors import FlowError, InadmissibleInitialData, ParseError, ValidationError
from .geometry import (
    CurveState,
    Grid,
    SingleCurveState,
    TriodState,
    junction_residuals,
    l2_curvature,
    length,
    min_speed,
    total_length,
)
from .linearized import DEFAULT_LAMBDA_SAMPLES, FrozenCoefficients, lopatinskii_shapiro_check
from .oracles import bumped_triod, infeasible_triod, shrinking_circle, steiner_triod, unit_steiner_triod
from .reparam import state_distance
from .solver import HORIZON_REACHED, FlowConfig, run as run_flow

log = logging.getLogger("netflow")

_CONFIG_KEYS = (
    "n_cells", "dt", "t_end", "picard_tol", "max_picard", "angle_tol",
    "reg_floor_factor", "curvature_blowup_threshold", "length_collapse_threshold",
    "relinearize_every", "resample", "snapshot_every",
)


def _setup_logging() -> None:
    level = os.environ.get("NETFLOW_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level, logging.ERROR),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _parse_lambda_list(text: str) -> tuple[complex, ...]:
    """Parse 're,im;re,im;...' into complex samples."""
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(",")
        if len(pieces) == 1:
            out.append(complex(float(pieces[0]), 0.0))
        elif len(pieces) == 2:
            out.append(complex(float(pieces[0]), float(pieces[1])))
        else:
            raise ValueError(f"bad lambda entry {part!r}; expected 're' or 're,im'")
    if not out:
        raise ValueError("empty lambda list")
    return tuple(out)


def _load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config file: {exc}", path=str(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a JSON object", path=str(path))
    unknown = set(doc) - set(_CONFIG_KEYS)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}", path=str(path))
    return doc


def _effective_config(args, state) -> FlowConfig:
    """Defaults <- config file <- CLI flags, validated as one FlowConfig."""
    values = {"n_cells": state.grid.n_cells}
    if getattr(args, "config", None):
        values.update(_load_config_file(args.config))
    for key, attr in (
        ("t_end", "t_end"), ("dt", "dt"), ("snapshot_every", "snapshot_every"),
    ):
        flag = getattr(args, attr, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "resample", None) is not None:
        values["resample"] = args.resample == "on"
    if getattr(args, "cells", None) is not None:
        values["n_cells"] = args.cells
    return FlowConfig(**values)


def _resample_cells(state, n_cells: int):
    """Change the grid resolution by linear interpolation in the parameter."""
    if state.grid.n_cells == n_cells:
        return state
    grid = Grid(n_cells)
    xs_new = grid.nodes

    def interp(curve: CurveState) -> CurveState:
        xs_old = curve.grid.nodes
        pts = np.column_stack(
            [np.interp(xs_new, xs_old, curve.points[:, k]) for k in range(curve.n_dim)]
        )
        pts[0] = curve.points[0]
        pts[-1] = curve.points[-1]
        return CurveState(pts, grid, curve.closed)

    if isinstance(state, TriodState):
        return TriodState(tuple(interp(c) for c in state.curves), state.endpoints, state.time)
    return interp(state)


def _print_final(result) -> None:
    report = result.reports[-1] if result.reports else None
    print(f"stop reason: {result.stop}")
    if report is not None:
        print(
            f"final: t={report.time:.6g} total_length={report.total_length:.9g} "
            f"l2_curvature={report.l2_curvature:.6g} angle_residual={report.angle_residual:.3e} "
            f"min_speed={report.min_speed:.6g} picard_iters={report.picard_iters}"
        )


def _write_outputs(result, config: FlowConfig, out: str, fmt: str) -> None:
    records = netio.build_records(result)
    netio.save_trajectory(records, out, format=fmt)
    meta = {"config": asdict(config), "stop": str(result.stop)}
    meta_path = Path(out).with_suffix(".meta.json")
    meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def _cmd_run(args) -> int:
    state = netio.load_network(args.network)
    if args.cells is not None:
        state = _resample_cells(state, args.cells)
    config = _effective_config(args, state)

    def one_run(tag: str | None) -> int:
        result = run_flow(state, config)
        if args.out:
            out = args.out
            if tag is not None:
                p = Path(out)
                out = str(p.with_name(f"{p.stem}_{tag}{p.suffix}"))
            _write_outputs(result, config, out, args.format)
        _print_final(result)
        if args.expect_horizon and result.stop.kind != HORIZON_REACHED:
            return 3
        return 0

    if args.sweep and args.sweep > 1:
        with ThreadPoolExecutor(max_workers=min(args.sweep, os.cpu_count() or 1)) as pool:
            codes = list(pool.map(one_run, [str(k) for k in range(args.sweep)]))
        return max(codes)
    return one_run(None)


def _cmd_check_wellposed(args) -> int:
    state = netio.load_network(args.network)
    if not isinstance(state, TriodState):
        raise ValidationError("well-posedness check needs a triod network", path=str(args.network))
    samples = _parse_lambda_list(args.lambda_list) if args.lambda_list else DEFAULT_LAMBDA_SAMPLES
    report = lopatinskii_shapiro_check(FrozenCoefficients(state), samples)
    print(report)
    return 0 if report.passed else 1


def _cmd_diagnose(args) -> int:
    state = netio.load_network(args.network)
    if isinstance(state, TriodState):
        res = junction_residuals(state)
        lengths = [length(c) for c in state.curves]
        print(f"kind: triod  n_cells: {state.grid.n_cells}  dimension: {state.n_dim}")
        print("lengths: " + "  ".join(f"L{i + 1}={v:.9g}" for i, v in enumerate(lengths)))
        print(f"total_length: {sum(lengths):.9g}")
        print(f"l2_curvature: {l2_curvature(state):.9g}")
        print(f"min_speed: {min_speed(state):.9g}")
        print(f"angle_residual: {res.angle_residual:.6e}")
        print(f"concurrency_residual: {res.concurrency_residual:.6e}")
        if not res.admissible_within(args.angle_tol):
            print(f"NOT ADMISSIBLE within angle tolerance {args.angle_tol:g}")
            return 2
        print(f"admissible within angle tolerance {args.angle_tol:g}")
        return 0
    kind = "closed-curve" if state.closed else "open-curve"
    print(f"kind: {kind}  n_cells: {state.grid.n_cells}  dimension: {state.n_dim}")
    print(f"length: {length(state):.9g}")
    print(f"l2_curvature: {l2_curvature(state):.9g}")
    print(f"min_speed: {min_speed(state):.9g}")
    return 0


def _cmd_compare(args) -> int:
    state = netio.load_network(args.network)
    if not isinstance(state, TriodState):
        raise ValidationError("compare needs a triod network", path=str(args.network))
    config = _effective_config(args, state)
    twin = _reparametrised_twin(state, args.warp)
    result_a = run_flow(state, config)
    result_b = run_flow(twin, config)
    d0 = state_distance(state, twin)
    d1 = state_distance(result_a.final, result_b.final)
    print(f"initial hausdorff distance: {d0:.6e}")
    print(f"final hausdorff distance:   {d1:.6e}")
    print(f"stop reasons: {result_a.stop} / {result_b.stop}")
    if args.out:
        doc = {
            "initial_distance": d0,
            "final_distance": d1,
            "t_end": config.t_end,
            "n_cells": config.n_cells,
            "dt": config.dt,
            "stop_a": str(result_a.stop),
            "stop_b": str(result_b.stop),
        }
        Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return 0


def _reparametrised_twin(state: TriodState, warp: float) -> TriodState:
    """Same polylines, nodes moved to the warped parameters x + warp x(1-x)."""
    xs = state.grid.nodes
    xw = xs + warp * xs * (1.0 - xs)

    def rewrap(curve: CurveState) -> CurveState:
        pts = np.column_stack(
            [np.interp(xw, xs, curve.points[:, k]) for k in range(curve.n_dim)]
        )
        pts[0] = curve.points[0]
        pts[-1] = curve.points[-1]
        return CurveState(pts, curve.grid)

    return TriodState(tuple(rewrap(c) for c in state.curves), state.endpoints, state.time)


def _cmd_oracle(args) -> int:
    n_cells = args.cells or 128
    if args.name == "steiner":
        if args.endpoints:
            ends = _parse_points(args.endpoints)
            state = steiner_triod(ends, n_cells)
        else:
            state = unit_steiner_triod(n_cells)
    elif args.name == "bumped":
        state = bumped_triod(n_cells)
    elif args.name == "infeasible":
        state = infeasible_triod(n_cells)
    elif args.name == "circle":
        state = shrinking_circle(args.radius, n_cells).state.curve
    else:
        raise ValidationError(f"unknown oracle {args.name!r}", path="oracle")
    netio.save_network(state, args.out, metadata={"oracle": args.name})
    print(f"wrote {args.name} network to {args.out}")
    return 0


def _parse_points(text: str) -> np.ndarray:
    rows = []
    for part in text.split(";"):
        part = part.strip()
        if part:
            rows.append([float(v) for v in part.split(",")])
    return np.asarray(rows, dtype=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netflow",
        description="Curvature flow of triple-junction networks: simulate, check, compare.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_run_flags=True):
        p.add_argument("--network", required=True, help="network JSON file")
        if with_run_flags:
            p.add_argument("--config", help="JSON config file (FlowConfig keys)")
            p.add_argument("--t-end", dest="t_end", type=float, default=None)
            p.add_argument("--dt", type=float, default=None)
            p.add_argument("--cells", type=int, default=None,
                           help="resample the network to this many grid cells")
            p.add_argument("--resample", choices=("on", "off"), default=None,
                           help="constant-speed resampling after every step")
            p.add_argument("--snapshot-every", dest="snapshot_every", type=int, default=None)

    p_run = sub.add_parser("run", help="evolve a network and write the trajectory")
    add_common(p_run)
    p_run.add_argument("--out", help="trajectory output path")
    p_run.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p_run.add_argument("--expect-horizon", action="store_true",
                       help="exit 3 unless the run reaches t_end")
    p_run.add_argument("--sweep", type=int, default=None,
                       help="fan out K isolated identical runs across threads")
    p_run.set_defaults(handler=_cmd_run)

    p_chk = sub.add_parser("check-wellposed", help="junction nondegeneracy check")
    p_chk.add_argument("--network", required=True)
    p_chk.add_argument("--lambda", dest="lambda_list", default=None,
                       help="spectral samples 're,im;re,im;...' (default built-in set)")
    p_chk.set_defaults(handler=_cmd_check_wellposed)

    p_diag = sub.add_parser("diagnose", help="print residuals and diagnostics")
    p_diag.add_argument("--network", required=True)
    p_diag.add_argument("--angle-tol", dest="angle_tol", type=float, default=1e-6)
    p_diag.set_defaults(handler=_cmd_diagnose)

    p_cmp = sub.add_parser("compare", help="geometric-uniqueness harness")
    add_common(p_cmp)
    p_cmp.add_argument("--out", help="write the distance report as JSON")
    p_cmp.add_argument("--warp", type=float, default=0.3,
                       help="parameter warp strength for the twin parametrisation")
    p_cmp.set_defaults(handler=_cmd_compare)

    p_orc = sub.add_parser("oracle", help="write a built-in reference network")
    p_orc.add_argument("name", choices=("steiner", "bumped", "infeasible", "circle"))
    p_orc.add_argument("--out", required=True)
    p_orc.add_argument("--cells", type=int, default=None)
    p_orc.add_argument("--radius", type=float, default=1.0, help="circle radius")
    p_orc.add_argument("--endpoints", default=None,
                       help="steiner endpoints 'x,y;x,y;x,y'")
    p_orc.set_defaults(handler=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.handler(args)
    except InadmissibleInitialData as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.residuals is not None:
            print(
                f"angle_residual: {exc.residuals.angle_residual:.6e}  "
                f"concurrency_residual: {exc.residuals.concurrency_residual:.6e}",
                file=sys.stderr,
            )
        return 2
    except (FlowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

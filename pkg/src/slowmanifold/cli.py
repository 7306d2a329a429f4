"""Command-line front end.

Subcommands: models, integrate, sim, diagnose, advect, covariance, fig.
Every run writes CSV (comma-separated, header row, LF endings, floats in
shortest round-trip form, so identical configs give byte-identical
files) plus a JSON sidecar ``<output>.json`` echoing the config, tool
version, provenance and summary metrics.  Exit codes: 0 success,
1 numerical failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .asymptotics import candidate_audit, candidate_manifold, invariance_defect
from .covariance import (
    compute_manifold,
    covariance_gap,
    map_manifold,
    rotation_change,
    swap_change,
    transform_model,
)
from .errors import NonGraphError, SlowManifoldError
from .geometry import advect_family, curvature_field, time_derivatives
from .integrate import integrate
from .manifold import GraphManifold, uniform_grid
from .models import get_model, model_names, sim_candidates
from .variational import default_spec, hamiltonian_trace, minimize_fast_ic

SIM_METHODS = ("qssa", "eps0", "eps1", "curvature", "variational")
DIAG_METHODS = SIM_METHODS + ("oracle-sim", "paper-sim")


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path, header, columns):
    rows = np.broadcast_arrays(*columns)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows[0].size):
            fh.write(",".join(_fmt(c[i]) for c in rows) + "\n")


def _write_sidecar(path, config, provenance, metrics):
    doc = {
        "config": config,
        "version": __version__,
        "provenance": provenance,
        "metrics": metrics,
    }
    with open(str(path) + ".json", "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_grid(text):
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be lo:hi:count, got {text!r}")
    if count < 16:
        raise argparse.ArgumentTypeError("grid count must be at least 16")
    if not hi > lo:
        raise argparse.ArgumentTypeError("grid needs hi > lo")
    return lo, hi, count


def _parse_horizon(text):
    try:
        t0, tf = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"horizon must be t0:tf, got {text!r}")
    return t0, tf


def _grid_array(spec):
    return uniform_grid(*spec)


def _manifold_for(args, model, grid, name):
    if name in ("oracle-sim", "paper-sim"):
        return candidate_manifold(model, name, grid, deriv_order=args.order)
    return compute_manifold(name, model, grid, deriv_order=args.order)


def cmd_models(args):
    for name in model_names():
        print(name)
    return 0


def cmd_integrate(args):
    model = get_model(args.model, args.eps)
    z0 = np.array([float(v) for v in args.z0.split(",")])
    traj = integrate(model, z0, args.t0, args.tf, rtol=args.rtol, atol=args.atol)
    header = ["t"] + [f"z{i+1}" for i in range(model.dim)]
    cols = [traj.times] + [traj.states[:, i] for i in range(model.dim)]
    _write_csv(args.output, header, cols)
    _write_sidecar(
        args.output,
        _config_echo(args),
        {"method": "integrate", "scheme": traj.meta.get("scheme")},
        {"n_accepted": traj.meta.get("n_accepted"), "t_final": traj.tf},
    )
    print(f"integrate: {len(traj.times)} nodes, scheme {traj.meta.get('scheme')}")
    return 0


def cmd_sim(args):
    model = get_model(args.model, args.eps)
    if args.method == "variational":
        rows = _variational_rows(args, model)
        _write_csv(args.output, ["z1", "z2"], rows)
        _write_sidecar(
            args.output,
            _config_echo(args),
            {"method": "variational"},
            {"n_points": int(rows[0].size)},
        )
        print(f"sim variational: {rows[0].size} optimized points")
        if args.emit_hamiltonian:
            _emit_hamiltonian(args, model)
        return 0
    grid = _grid_array(args.grid)
    m = _manifold_for(args, model, grid, args.method)
    rep = invariance_defect(model, m)
    _write_csv(args.output, ["z1", "z2"], [m.grid, m.values])
    _write_sidecar(
        args.output,
        _config_echo(args),
        {"method": args.method, "provenance": m.provenance},
        {"max_defect": rep.max_abs},
    )
    print(f"sim {args.method}: max defect {rep.max_abs:.3e}")
    return 0


def _variational_rows(args, model):
    if args.z1tf:
        targets = [float(v) for v in args.z1tf.split(",")]
        t0, tf = args.horizon
        starts = [v * np.exp(tf - t0) for v in targets]
    elif args.grid:
        starts = list(_grid_array(args.grid))
    else:
        raise SlowManifoldError("variational needs --z1tf or --grid")
    xs, vs = [], []
    for z1_start in starts:
        spec = default_spec(
            model,
            z1_start=float(z1_start),
            horizon=args.horizon,
            bracket=(args.bracket[0], args.bracket[1]),
        )
        z2_star, _phi, diag = minimize_fast_ic(model, spec)
        xs.append(diag["z1_0"])
        vs.append(z2_star)
    return [np.asarray(xs), np.asarray(vs)]


def _emit_hamiltonian(args, model):
    t0, tf = args.horizon
    z1_start = (
        float(args.z1tf.split(",")[0]) * np.exp(tf - t0)
        if args.z1tf
        else float(_grid_array(args.grid)[0])
    )
    spec = default_spec(model, z1_start=z1_start, horizon=args.horizon,
                        bracket=(args.bracket[0], args.bracket[1]))
    _z2, _phi, diag = minimize_fast_ic(model, spec)
    trace = hamiltonian_trace(model, spec, diag["trajectory"])
    path = args.output + ".hamiltonian.csv"
    _write_csv(path, ["t", "H"], [trace.times, trace.H_values])
    _write_sidecar(
        path,
        _config_echo(args),
        {"method": "hamiltonian-trace"},
        {"drift": trace.drift},
    )
    print(f"hamiltonian trace: drift {trace.drift:.3e} -> {path}")


def cmd_diagnose(args):
    model = get_model(args.model, args.eps)
    grid = _grid_array(args.grid)
    if args.audit_candidates:
        audit = candidate_audit(model, grid, deriv_order=args.order)
        with open(args.output, "w", newline="\n") as fh:
            json.dump(audit, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(
            "candidate audit: "
            + ", ".join(
                f"{k}: {v['max_defect']:.3e}" for k, v in audit["candidates"].items()
            )
        )
        return 0
    m = _manifold_for(args, model, grid, args.method)
    rep = invariance_defect(model, m)
    if args.curvature:
        K = curvature_field(time_derivatives(model, m))
        _write_csv(
            args.output,
            ["z1", "z2", "defect", "K"],
            [m.grid, m.values, rep.defect, K.K],
        )
        metrics = {"max_defect": rep.max_abs, "max_abs_K": K.max_abs_K}
        print(
            f"diagnose {args.method}: max defect {rep.max_abs:.3e}, "
            f"max |K| {K.max_abs_K:.3e}"
        )
    else:
        _write_csv(args.output, ["z1", "z2", "defect"], [m.grid, m.values, rep.defect])
        metrics = {"max_defect": rep.max_abs}
        print(f"diagnose {args.method}: max defect {rep.max_abs:.3e}")
    _write_sidecar(
        args.output,
        _config_echo(args),
        {"method": args.method, "provenance": m.provenance, **rep.meta},
        metrics,
    )
    return 0


def cmd_advect(args):
    model = get_model(args.model, args.eps)
    grid = _grid_array(args.grid)
    if args.h0 in ("oracle-sim", "paper-sim"):
        h0 = candidate_manifold(model, args.h0, grid, deriv_order=args.order)
    elif args.h0.startswith("const:"):
        c = float(args.h0.split(":", 1)[1])
        h0 = GraphManifold(
            grid=grid,
            values=np.full(grid.size, c),
            eps=model.eps,
            deriv_order=args.order,
            provenance=f"const({c})",
        )
    else:
        h0 = compute_manifold(args.h0, model, grid, deriv_order=args.order)
    snaps = advect_family(model, h0, args.T, args.snapshots)
    files = []
    for i, snap in enumerate(snaps):
        path = f"{args.output}.{i:03d}.csv"
        _write_csv(path, ["z1", "z2"], [snap.grid, snap.values])
        files.append(
            {"t": snap.meta["t"], "file": path, "trim": list(snap.meta["trim"])}
        )
    manifest = {
        "config": _config_echo(args),
        "version": __version__,
        "provenance": {"method": "advect", "h0": h0.provenance},
        "snapshots": files,
    }
    with open(args.output + ".manifest.json", "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"advect: {len(files)} snapshots -> {args.output}.*.csv")
    return 0


def cmd_covariance(args):
    model = get_model(args.model, args.eps)
    grid = _grid_array(args.grid)
    change = swap_change() if args.swap else rotation_change(args.rotate)
    doc = {"method": args.method, "change": change.name}
    try:
        rep = covariance_gap(args.method, model, change, grid, deriv_order=args.order)
        doc.update({"gap": rep.gap, "spans": rep.spans, "cond": rep.cond, "status": "ok"})
    except NonGraphError as exc:
        doc.update({"gap": None, "spans": None, "status": f"non-graph: {exc}"})
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_fig(args):
    model = get_model(args.model, args.eps)
    outputs = []
    if args.which == 1:
        grid = uniform_grid(0.1, 3.0, 256)
        oracle = candidate_manifold(model, "oracle-sim", grid)
        approx = compute_manifold("qssa", model, grid)
        p1 = f"{args.output}.frame_original.csv"
        _write_csv(p1, ["z1", "sim", "qssa"], [grid, oracle.values, approx.values])
        change = rotation_change(30.0)
        mapped = map_manifold(oracle, change)
        t_model = transform_model(model, change)
        approx_t = compute_manifold("qssa", t_model, mapped.grid)
        p2 = f"{args.output}.frame_rotated.csv"
        _write_csv(
            p2, ["w1", "sim_mapped", "qssa_rotated"],
            [mapped.grid, mapped.values, approx_t.values],
        )
        outputs = [p1, p2]
    elif args.which == 2:
        grid = uniform_grid(0.02, 3.0, 256)
        oracle = candidate_manifold(model, "oracle-sim", grid)
        p1 = f"{args.output}.sim.csv"
        _write_csv(p1, ["z1", "z2"], [grid, oracle.values])
        outputs = [p1]
        for k, z2_0 in enumerate(np.linspace(-0.4, 1.4, 7)):
            traj = integrate(model, np.array([3.0, z2_0]), 0.0, 5.0, rtol=1e-9)
            ts = np.linspace(0.0, 5.0, 401)
            states = traj.sample(ts)
            p = f"{args.output}.traj{k}.csv"
            _write_csv(p, ["t", "z1", "z2"], [ts, states[0], states[1]])
            outputs.append(p)
    elif args.which == 3:
        grid = uniform_grid(0.1, 3.0, 128)
        oracle = candidate_manifold(model, "oracle-sim", grid)
        snaps = advect_family(model, oracle, args.T, 9)
        rows_t, rows_z1, rows_z2 = [], [], []
        for snap in snaps:
            rows_t.append(np.full(snap.grid.size, snap.meta["t"]))
            rows_z1.append(snap.grid)
            rows_z2.append(snap.values)
        p1 = f"{args.output}.surface.csv"
        _write_csv(
            p1,
            ["t", "z1", "z2"],
            [np.concatenate(rows_t), np.concatenate(rows_z1), np.concatenate(rows_z2)],
        )
        outputs = [p1]
        for k, z2_0 in enumerate(np.linspace(0.0, 1.2, 5)):
            traj = integrate(model, np.array([2.5, z2_0]), 0.0, args.T, rtol=1e-9)
            ts = np.linspace(0.0, args.T, 201)
            states = traj.sample(ts)
            p = f"{args.output}.traj{k}.csv"
            _write_csv(p, ["t", "z1", "z2"], [ts, states[0], states[1]])
            outputs.append(p)
    for path in outputs:
        _write_sidecar(
            path,
            _config_echo(args),
            {"method": f"fig{args.which}"},
            {"files": len(outputs)},
        )
    print(f"fig {args.which}: wrote {len(outputs)} files")
    return 0


def _config_echo(args) -> dict:
    skip = {"func"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="slowmanifold",
        description="slow-invariant-manifold computations and diagnostics",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid_default="0.1:3:256"):
        sp.add_argument("--model", default="davis-skodje", choices=model_names())
        sp.add_argument("--eps", type=float, default=1e-2)
        sp.add_argument("--grid", type=_parse_grid, default=_parse_grid(grid_default))
        sp.add_argument("--order", type=int, default=4, choices=(2, 4),
                        help="stencil order for graph derivatives")
        sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("models", help="list built-in models")
    sp.set_defaults(func=cmd_models)

    sp = sub.add_parser("integrate", help="integrate a trajectory, emit t,z1,...,zn")
    sp.add_argument("--model", default="davis-skodje", choices=model_names())
    sp.add_argument("--eps", type=float, default=1e-2)
    sp.add_argument("--z0", required=True, help="comma-separated initial state")
    sp.add_argument("--t0", type=float, default=0.0)
    sp.add_argument("--tf", type=float, required=True)
    sp.add_argument("--rtol", type=float, default=1e-9)
    sp.add_argument("--atol", type=float, default=1e-12)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_integrate)

    sp = sub.add_parser("sim", help="compute a slow-manifold approximation")
    common(sp)
    sp.add_argument("--method", required=True, choices=SIM_METHODS)
    sp.add_argument("--horizon", type=_parse_horizon, default=(0.0, 1.0))
    sp.add_argument("--z1tf", default=None,
                    help="comma-separated terminal slow values (variational)")
    sp.add_argument("--bracket", type=float, nargs=2, default=(0.0, 1.0))
    sp.add_argument("--emit-hamiltonian", action="store_true")
    sp.set_defaults(func=cmd_sim)

    sp = sub.add_parser("diagnose", help="defect (and optional curvature) of a method")
    common(sp)
    sp.add_argument("--method", default="oracle-sim", choices=DIAG_METHODS)
    sp.add_argument("--curvature", action="store_true")
    sp.add_argument("--audit-candidates", action="store_true",
                    help="emit the closed-form candidate defect audit as JSON")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("advect", help="advect an initial graph; one CSV per snapshot")
    common(sp, grid_default="0.1:3:128")
    sp.add_argument("--h0", default="const:0",
                    help="const:<v>, a method name, oracle-sim or paper-sim")
    sp.add_argument("-T", type=float, default=0.05, dest="T")
    sp.add_argument("--snapshots", type=int, default=6)
    sp.set_defaults(func=cmd_advect)

    sp = sub.add_parser("covariance", help="coordinate-dependence gap of a method")
    sp.add_argument("--model", default="davis-skodje", choices=model_names())
    sp.add_argument("--eps", type=float, default=1e-2)
    sp.add_argument("--grid", type=_parse_grid, default=_parse_grid("0.1:3:64"))
    sp.add_argument("--order", type=int, default=4, choices=(2, 4))
    sp.add_argument("--method", required=True, choices=SIM_METHODS)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--rotate", type=float, help="rotation angle in degrees")
    g.add_argument("--swap", action="store_true", help="literal coordinate swap")
    sp.add_argument("-o", "--output", default=None)
    sp.set_defaults(func=cmd_covariance)

    sp = sub.add_parser("fig", help="emit plot-ready CSV bundles")
    sp.add_argument("--which", type=int, required=True, choices=(1, 2, 3))
    sp.add_argument("--model", default="davis-skodje", choices=model_names())
    sp.add_argument("--eps", type=float, default=1e-2)
    sp.add_argument("-T", type=float, default=0.05, dest="T")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_fig)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except SlowManifoldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

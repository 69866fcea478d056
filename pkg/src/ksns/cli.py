"""Command-line surface: mesh generation/auditing, runs, verification, reports.

Exit codes: 0 success, 1 usage error, 2 check failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np


def build_parser():
    p = argparse.ArgumentParser(prog="ksns",
                                description="chemotaxis-in-fluid benchmark solver")
    sub = p.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    meshsub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = meshsub.add_parser("gen", help="generate a disc mesh file")
    gen.add_argument("--out", required=True)
    gen.add_argument("--center", nargs=2, type=float, default=(0.0, 0.1),
                     metavar=("X", "Y"))
    gen.add_argument("--radius", type=float, default=1.0)
    gen.add_argument("--target-h", type=float, required=True)
    gen.add_argument("--refine-box", nargs=4, type=float, default=None,
                     metavar=("X0", "X1", "Y0", "Y1"))
    gen.add_argument("--refine-passes", type=int, default=1)
    check = meshsub.add_parser("check", help="weak-acuteness audit (exit 2 on failure)")
    check.add_argument("mesh_file")

    run = sub.add_parser("run", help="run a scenario")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset")
    src.add_argument("--config")
    run.add_argument("--out", default=None, help="output directory override")
    run.add_argument("--t-final", type=float, default=None)
    run.add_argument("--dt", type=float, default=None)
    run.add_argument("--target-h", type=float, default=None)
    run.add_argument("--ceiling", type=float, default=None)
    run.add_argument("--dump-stabilization", action="store_true",
                     help="write per-pair stabilization diagnostics each snapshot")

    verify = sub.add_parser("verify", help="run the inequality verification suite")
    verify.add_argument("--out", default=None, help="CSV report path")
    verify.add_argument("--target-h", type=float, default=0.1)
    verify.add_argument("--log-samples", type=int, default=10**6)
    verify.add_argument("--field-pairs", type=int, default=1000)

    report = sub.add_parser("report", help="summarize a time-series CSV")
    report.add_argument("csv_file")
    report.add_argument("--ceiling", type=float, default=1e6)
    report.add_argument("--window", type=int, default=25)
    return p


def cmd_mesh_gen(args):
    from .mesh import generate_disc_mesh, refine_region, save_mesh

    mesh = generate_disc_mesh(tuple(args.center), args.radius, args.target_h)
    if args.refine_box is not None:
        x0, x1, y0, y1 = args.refine_box
        for _ in range(args.refine_passes):
            mesh = refine_region(mesh, lambda p: x0 <= p[0] <= x1 and y0 <= p[1] <= y1)
    save_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    return 0


def cmd_mesh_check(args):
    from .mesh import check_weak_acuteness, load_mesh

    mesh = load_mesh(args.mesh_file)
    rep = check_weak_acuteness(mesh)
    if rep.passed:
        print(f"{args.mesh_file}: weakly acute ({mesh.n_triangles} triangles)")
        return 0
    print(f"{args.mesh_file}: NOT weakly acute; {len(rep.offenders)} offending pairs")
    for i, j, v in rep.offenders[:20]:
        print(f"  pair ({i}, {j}): stiffness off-diagonal {v:.6e}")
    return 2


def cmd_run(args):
    from . import diagnostics
    from .config import build_mesh, load_config, preset_scenario
    from .output import save_state, write_fields_vtk
    from .solver import Discretization, run_simulation

    if args.preset:
        config = preset_scenario(args.preset)
    else:
        config = load_config(args.config)
    if args.t_final is not None:
        config.T = args.t_final
    if args.dt is not None:
        config.k = args.dt
    if args.target_h is not None:
        config.target_h = args.target_h
    if args.ceiling is not None:
        config.blowup_ceiling = args.ceiling
    if args.out is not None:
        config.output_dir = args.out
    config.validate()

    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)
    disc = Discretization.build(build_mesh(config))

    def on_snapshot(state):
        write_fields_vtk(state, os.path.join(outdir, f"snap_{state.step:06d}.vtk"))
        if args.dump_stabilization:
            _dump_stab(disc, config, state,
                       os.path.join(outdir, f"stab_{state.step:06d}.txt"))

    def on_checkpoint(state):
        save_state(state, os.path.join(outdir, f"checkpoint_{state.step:06d}.txt"))

    result = run_simulation(config, disc=disc, sinks={
        "snapshot": on_snapshot,
        "checkpoint": on_checkpoint,
    })
    diagnostics.write_series_csv(result.records, os.path.join(outdir, "series.csv"))
    maxima = max(r.max_n for r in result.records)
    print(f"steps={result.records[-1].step} t={result.records[-1].time:.6g} "
          f"peak_n={maxima:.6g} stop={result.stop_reason}")
    print(f"regime={result.classification}")
    return 0


def _dump_stab(disc, config, state, path):
    """Per-pair detector/flux/coefficient rows for the density stabilizer."""
    from .operators import assemble_transport
    from .stabilization import (
        density_pair_fluxes,
        dump_stabilization,
        shock_detector_all,
    )

    n = state.n.values
    transport = assemble_transport(disc.mesh, disc.p2, state.uh_p.velocity)
    alpha = shock_detector_all(disc.mesh, n, config.q)
    f_fwd, f_bwd = density_pair_fluxes(disc.mesh, n, transport,
                                       disc.stiff_pair, config.eps)
    pi, pj = disc.mesh.pairs[:, 0], disc.mesh.pairs[:, 1]
    nu = np.maximum(np.maximum(alpha[pi] * f_fwd, alpha[pj] * f_bwd), 0.0)
    dump_stabilization(disc.mesh, alpha, f_fwd, f_bwd, nu, path)


def cmd_verify(args):
    from .inequalities import run_verification_suite, write_verification_csv
    from .mesh import compute_symmetric_nodes, generate_disc_mesh
    from .solver import Discretization

    mesh = compute_symmetric_nodes(generate_disc_mesh((0.0, 0.1), 1.0, args.target_h))
    disc = Discretization.build(mesh)
    results = run_verification_suite(disc, n_log_samples=args.log_samples,
                                     n_field_pairs=args.field_pairs)
    ok = True
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name}: {status} (samples={r.samples}, worst_slack={r.worst_slack:.3e}, "
              f"worst at {r.worst_input})")
        ok = ok and r.passed
    if args.out:
        write_verification_csv(results, args.out)
    return 0 if ok else 2


def cmd_report(args):
    from .diagnostics import classify_regime, read_series_csv

    records = read_series_csv(args.csv_file)
    peak_n = max(r.max_n for r in records)
    peak_c = max(r.max_c for r in records)
    regime = classify_regime(records, ceiling=args.ceiling, plateau_window=args.window)
    last = records[-1]
    print(f"rows={len(records)} t_final={last.time:.6g}")
    print(f"peak_n={peak_n:.6g} peak_c={peak_c:.6g} final_mass_n={last.mass_n:.6g}")
    bad = [r.step for r in records if not r.flags.all_ok()]
    print(f"invariant_failures={len(bad)}" + (f" at steps {bad[:10]}" if bad else ""))
    print(f"regime={regime}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 1 if err.code not in (0, None) else 0
    try:
        if args.command == "mesh":
            if args.mesh_command == "gen":
                return cmd_mesh_gen(args)
            return cmd_mesh_check(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "report":
            return cmd_report(args)
        return 1
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except RuntimeError as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver.

    wg-auxmg run --example disk --levels 6 --system reduced --mode mul
    wg-auxmg mms --example mms --levels 6 --out rates.csv
    wg-auxmg mesh info coarse.mesh
    wg-auxmg mesh refine coarse.mesh --out fine.mesh --times 2
"""

import argparse
import sys

from wg_auxmg import bench
from wg_auxmg.mesh import load_mesh, refine_uniform, save_mesh

_MODES = {"add": "additive", "mul": "multiplicative",
          "additive": "additive", "multiplicative": "multiplicative"}


def _build_parser():
    p = argparse.ArgumentParser(
        prog="wg-auxmg",
        description="Weak Galerkin diffusion benchmarks with an "
                    "auxiliary-space multigrid preconditioner.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="iteration-count experiment")
    run.add_argument("--example", required=True,
                     choices=sorted(bench.EXAMPLES))
    run.add_argument("--levels", type=int, default=4,
                     help="number of mesh levels (coarse mesh included)")
    run.add_argument("--system", choices=["full", "reduced"], default="full")
    run.add_argument("--mode", choices=sorted(_MODES), default="mul",
                     help="preconditioner composition")
    run.add_argument("--eps", type=float, default=1e-4,
                     help="coefficient contrast (jump-cube only)")
    run.add_argument("--tol", type=float, default=1e-8)
    run.add_argument("--maxit", type=int, default=500)
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--no-validate", action="store_true",
                     help="skip the direct full-vs-reduced check")
    run.add_argument("--out", default=None, help="report file")
    run.add_argument("--format", dest="fmt",
                     choices=["csv", "json", "dat"], default="csv")

    mms = sub.add_parser("mms", help="manufactured-solution convergence")
    mms.add_argument("--example", choices=sorted(bench.MMS_EXAMPLES),
                     default="mms")
    mms.add_argument("--levels", type=int, default=6)
    mms.add_argument("--out", default=None)

    mesh = sub.add_parser("mesh", help="mesh file utilities")
    mesh.add_argument("action", choices=["refine", "info"])
    mesh.add_argument("file")
    mesh.add_argument("--out", default=None,
                      help="output path for refine (required)")
    mesh.add_argument("--times", type=int, default=1,
                      help="number of uniform refinements")
    return p


def _cmd_run(args):
    cfg = bench.ExperimentConfig(
        example=args.example, levels=args.levels, system=args.system,
        mode=_MODES[args.mode], eps=args.eps, tol=args.tol,
        maxit=args.maxit, workers=args.workers,
        validate=not args.no_validate)
    rows = bench.run_experiment(cfg)
    text = bench.emit_report(rows, fmt=args.fmt, path=args.out)
    sys.stdout.write(text)
    if args.out:
        print(f"wrote {args.out}", file=sys.stderr)
    if not all(r.converged for r in rows):
        print("warning: some levels did not converge", file=sys.stderr)
        return 2
    return 0


def _cmd_mms(args):
    cfg = bench.ExperimentConfig(example=args.example, levels=args.levels)
    rows = bench.mms_convergence(cfg)
    header = "level,h,dof,energy,energy_rate,l2,l2_rate"
    lines = [header]
    for r in rows:
        lines.append(f"{r['level']},{r['h']:.6g},{r['dof']},"
                     f"{r['energy']:.6e},{r['energy_rate']:.3f},"
                     f"{r['l2']:.6e},{r['l2_rate']:.3f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_mesh(args):
    mesh = load_mesh(args.file)
    if args.action == "info":
        q = mesh.quality()
        for key in sorted(q):
            print(f"{key}: {q[key]}")
        return 0
    if args.out is None:
        raise ValueError("mesh refine requires --out")
    if args.times < 1:
        raise ValueError("--times must be at least 1")
    for _ in range(args.times):
        mesh, _ = refine_uniform(mesh)
    save_mesh(mesh, args.out)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "mms":
            return _cmd_mms(args)
        return _cmd_mesh(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

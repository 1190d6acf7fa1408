"""Command-line interface: ``shelladc {gen,eval,optimize,study,rerun}``.

Exit codes: 0 success, 1 usage or parse error, 2 invalid input data,
3 runtime abort.  Every command writes ``<output>.manifest.json`` next to
its main output.
"""

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adc import SolverError, adc_matrix, upper_bound_directional
from .geometry import build_geometry
from .mesh import MeshError, edge_vectors, euler_characteristic, load_mesh, save_mesh
from .objectives import ObjectiveParseError, parse_objective
from .optimize import OptConfig, OptimizationAborted, optimize
from .remesh import remesh
from .revolve import ProfileError, ProfileSyntaxError, RevolutionProfile, cylinder_mesh, revolve_mesh
from . import studies
from .surfgen import ImplicitSpec, PerturbSpec, generate_implicit, perturb, plane_mesh

logger = logging.getLogger("shelladc")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_path, args, argv, started, extra=None, inputs=()):
    out_path = Path(out_path)
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "subcommand": args.command,
        "argv": list(argv),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p},
        "outputs": {str(out_path): _sha256(out_path)},
        "seed": config.get("seed"),
        "version": __version__,
        "wall_clock_seconds": time.time() - started,
    }
    if extra:
        manifest.update(extra)
    path = out_path.with_name(out_path.name + ".manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return str(obj)


def _load(path):
    try:
        return load_mesh(path)
    except FileNotFoundError as exc:
        raise InputError(f"mesh file not found: {path}") from exc
    except MeshError as exc:
        raise InputError(f"invalid mesh {path}: {exc}") from exc


# ---------------------------------------------------------------------- gen
def cmd_gen(args, argv, started):
    n = args.resolution
    try:
        if args.type == "plane":
            mesh = plane_mesh(n)
        elif args.type == "cylinder":
            mesh = cylinder_mesh(args.radius, n, n)
        elif args.type == "revolve":
            if not args.profile:
                raise UsageError("--type revolve needs --profile")
            mesh = revolve_mesh(RevolutionProfile(args.profile), n, n)
        elif args.type == "perturb":
            if not args.inp:
                raise UsageError("--type perturb needs --in")
            mesh = perturb(_load(args.inp), PerturbSpec(args.strength, args.cutoff, args.seed))
        else:
            mesh = generate_implicit(ImplicitSpec(args.type, args.level, n))
        if args.remesh:
            mesh = remesh(mesh, float(edge_vectors(mesh)[1].mean()))
    except ProfileSyntaxError as exc:
        raise UsageError(str(exc)) from exc
    except (ProfileError, MeshError) as exc:
        raise InputError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    save_mesh(mesh, args.out)
    stats = {"vertices": mesh.n_vertices, "faces": mesh.n_faces,
             "area": mesh.total_area(), "euler": euler_characteristic(mesh)}
    write_manifest(args.out, args, argv, started, {"mesh": stats}, inputs=[args.inp])
    print(json.dumps(stats))


# --------------------------------------------------------------------- eval
def cmd_eval(args, argv, started):
    mesh = _load(args.mesh)
    cache = build_geometry(mesh)
    res = adc_matrix(mesh, cache, args.kappa)
    out = res.to_dict(euler=euler_characteristic(mesh))
    if args.directions:
        rng = np.random.default_rng(args.seed)
        P = rng.standard_normal((args.directions, 3))
        P /= np.linalg.norm(P, axis=1)[:, None]
        out["directions"] = [{"p": p.tolist(), "adc": float(p @ res.kA @ p),
                              "bound": upper_bound_directional(mesh, cache, args.kappa, p)}
                             for p in P]
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=2)
    write_manifest(args.out, args, argv, started, inputs=[args.mesh])
    print(json.dumps({"aac": out["aac"], "kA": out["kA"]}))


# ----------------------------------------------------------------- optimize
def cmd_optimize(args, argv, started):
    try:
        spec = parse_objective(args.objective, sense="minimize" if args.minimize else None)
    except ObjectiveParseError as exc:
        raise UsageError(str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot load target: {exc}") from exc
    mesh = _load(args.mesh)
    length = args.remesh_length
    if length is None:
        length = float(edge_vectors(mesh)[1].mean())
    cfg = OptConfig(precondition_strength=args.precondition, fairing_weight=args.fairing,
                    max_iterations=args.max_iter, kappa=args.kappa,
                    remesh_target_length=length or None,
                    surgery_threshold=args.surgery_threshold or None)
    cfg.armijo.initial_step = args.initial_step
    try:
        final, records = optimize(mesh, spec, cfg, log_path=args.log)
    except OptimizationAborted as exc:
        save_mesh(exc.mesh, args.out)
        write_manifest(args.out, args, argv, started,
                       {"aborted": str(exc), "iterations": len(exc.records)}, inputs=[args.mesh])
        raise
    save_mesh(final, args.out)
    summary = {"iterations": len(records), "initial": records[0].objective_before if records else None,
               "final": records[-1].objective if records else None, "sense": spec.sense,
               "kA": adc_matrix(final, None, args.kappa).kA.tolist()}
    write_manifest(args.out, args, argv, started, {"result": summary, "optConfig": cfg.to_dict()},
                   inputs=[args.mesh])
    print(json.dumps(summary))


# -------------------------------------------------------------------- study
def cmd_study(args, argv, started):
    try:
        if args.kind == "h-conv":
            rows, summary = studies.h_convergence(args.profile[0] if args.profile else
                                                  studies.DEFAULT_PROFILES[0],
                                                  args.resolutions or studies.DEFAULT_RESOLUTIONS)
        elif args.kind == "eps-order":
            rows, summary = studies.eps_order(args.profile or studies.DEFAULT_PROFILES,
                                              args.eps or studies.DEFAULT_EPSILONS, args.N, args.M,
                                              stability_check=not args.no_stability_check)
        else:
            if not args.mesh:
                raise UsageError("precon-sweep needs --mesh")
            mesh = _load(args.mesh)
            length = float(edge_vectors(mesh)[1].mean())
            cfg = OptConfig(max_iterations=args.max_iter, remesh_target_length=length)
            rows, summary = studies.precon_sweep(mesh, args.objective, args.c or (0.0, 1.0, 10.0), cfg)
    except ProfileSyntaxError as exc:
        raise UsageError(str(exc)) from exc
    except ProfileError as exc:
        raise InputError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    studies.write_csv(args.out, args.kind, rows)
    write_manifest(args.out, args, argv, started, {"fit": summary}, inputs=[args.mesh])
    print(json.dumps(summary, default=_json_default))


# -------------------------------------------------------------------- rerun
def cmd_rerun(args, argv, started):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    return main(manifest["argv"])


def build_parser():
    p = _Parser(prog="shelladc", description="Asymptotic conductivity of periodic shell lattices.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a mesh")
    g.add_argument("--type", required=True, choices=["plane", "cylinder", "schwarz-p", "gyroid",
                                                      "diamond", "iwp", "revolve", "perturb"])
    g.add_argument("--resolution", type=int, default=64)
    g.add_argument("--out", required=True)
    g.add_argument("--profile")
    g.add_argument("--radius", type=float, default=0.3)
    g.add_argument("--level", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--strength", type=float, default=0.0)
    g.add_argument("--cutoff", type=int, default=2)
    g.add_argument("--in", dest="inp")
    g.add_argument("--remesh", action="store_true", help="remesh to the mean edge length")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("eval", help="evaluate the ADC matrix of a mesh")
    e.add_argument("--mesh", required=True)
    e.add_argument("--kappa", type=float, default=1.0)
    e.add_argument("--out", required=True)
    e.add_argument("--directions", type=int, default=0)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("optimize", help="optimize a mesh against an ADC objective")
    o.add_argument("--mesh", required=True)
    o.add_argument("--objective", required=True)
    o.add_argument("--minimize", action="store_true")
    o.add_argument("--precondition", type=float, default=1.0)
    o.add_argument("--fairing", type=float, default=0.1)
    o.add_argument("--max-iter", type=int, default=500)
    o.add_argument("--initial-step", type=float, default=1.0)
    o.add_argument("--kappa", type=float, default=1.0)
    o.add_argument("--remesh-length", type=float, default=None,
                   help="target edge length; default is the input mean, 0 disables")
    o.add_argument("--surgery-threshold", type=float, default=0.0)
    o.add_argument("--out", required=True)
    o.add_argument("--log")
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("study", help="run a convergence or parameter study")
    s.add_argument("--kind", required=True, choices=["h-conv", "eps-order", "precon-sweep"])
    s.add_argument("--out", required=True)
    s.add_argument("--profile", action="append")
    s.add_argument("--resolutions", type=int, nargs="+")
    s.add_argument("--eps", type=float, nargs="+")
    s.add_argument("--N", type=int, default=4096)
    s.add_argument("--M", type=int, default=16)
    s.add_argument("--no-stability-check", action="store_true")
    s.add_argument("--mesh")
    s.add_argument("--objective", default="aac")
    s.add_argument("--c", type=float, nargs="+")
    s.add_argument("--max-iter", type=int, default=100)
    s.set_defaults(func=cmd_study)

    r = sub.add_parser("rerun", help="repeat the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_rerun)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.time()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"shelladc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args, argv, started)
        return EXIT_OK if rc is None else rc
    except UsageError as exc:
        print(f"shelladc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"shelladc: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OptimizationAborted, SolverError, ArithmeticError) as exc:
        print(f"shelladc: aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

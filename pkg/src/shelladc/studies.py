"""Convergence and parameter studies producing plot-ready tables."""

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .adc import adc_matrix
from .objectives import parse_objective
from .optimize import OptConfig, optimize
from .revolve import RevolutionProfile, adc_axial_analytic, revolve_mesh
from .shell import effective_conductivity_shell

logger = logging.getLogger(__name__)

WORKERS_ENV = "SHELLADC_WORKERS"
DEFAULT_PROFILES = ("(2+cos(pi*x))/4", "0.3+0.1*sin(pi*x)", "0.35+0.1*cos(2*pi*x)")
DEFAULT_EPSILONS = (0.1, 0.05, 0.025, 0.0125)
DEFAULT_RESOLUTIONS = (16, 32, 64, 128, 256)

STUDY_COLUMNS = {
    "h-conv": ["profile", "h", "value", "reference", "error"],
    "eps-order": ["profile", "epsilon", "value", "reference", "error"],
    "precon-sweep": ["c", "iteration", "objective", "step", "flow_time"],
}


def worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, items):
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def fit_loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x`` over all points."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ValueError("need at least 3 points to fit a slope")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def mean_circumradius(mesh):
    w = mesh.corner_positions()
    a = np.linalg.norm(w[:, 1] - w[:, 0], axis=1)
    b = np.linalg.norm(w[:, 2] - w[:, 1], axis=1)
    c = np.linalg.norm(w[:, 0] - w[:, 2], axis=1)
    return float(np.mean(a * b * c / (4.0 * mesh.face_areas())))


def _hconv_point(args):
    expr, n = args
    profile = RevolutionProfile(expr)
    mesh = revolve_mesh(profile, n, 2 * n)
    return mean_circumradius(mesh), float(adc_matrix(mesh).kA[0, 0])


def h_convergence(expr=DEFAULT_PROFILES[0], resolutions=DEFAULT_RESOLUTIONS):
    """Axial ADC on revolve meshes (nx = n, ntheta = 2n) against the closed form."""
    reference = adc_axial_analytic(RevolutionProfile(expr))
    pts = _map(_hconv_point, [(expr, n) for n in sorted(resolutions)])
    rows = [{"profile": expr, "h": h, "value": v, "reference": reference,
             "error": abs(v - reference) / reference} for h, v in pts]
    rows.sort(key=lambda r: r["h"])
    slope = fit_loglog_slope([r["h"] for r in rows], [r["error"] for r in rows])
    return rows, {"slope": slope}


def _eps_point(args):
    expr, eps, N, M, check = args
    profile = RevolutionProfile(expr)
    k, rho = effective_conductivity_shell(profile, eps, N, M)
    change = None
    if check:
        k2, _ = effective_conductivity_shell(profile, eps, 2 * N, 2 * M)
        change = abs(k2 - k) / abs(k)
    return k, rho, change


def eps_order(profiles=DEFAULT_PROFILES, epsilons=DEFAULT_EPSILONS, N=4096, M=16,
              stability_check=True):
    """Residual ``|kappa_eps - rho_eps kappa_A|`` against shell thickness.

    With ``stability_check`` every point is recomputed on a grid with both
    resolutions doubled and the largest relative change is reported.
    """
    jobs = [(expr, eps, N, M, stability_check) for expr in profiles for eps in sorted(epsilons)]
    results = _map(_eps_point, jobs)
    refs = {expr: adc_axial_analytic(RevolutionProfile(expr)) for expr in profiles}
    rows, changes = [], []
    for (expr, eps, *_), (k, rho, change) in zip(jobs, results):
        rows.append({"profile": expr, "epsilon": eps, "value": k,
                     "reference": rho * refs[expr], "error": abs(k - rho * refs[expr])})
        if change is not None:
            changes.append(change)
    slopes = {}
    for expr in profiles:
        sub = [r for r in rows if r["profile"] == expr]
        slopes[expr] = fit_loglog_slope([r["epsilon"] for r in sub], [r["error"] for r in sub])
    summary = {"slopes": slopes, "slope": min(slopes.values())}
    if changes:
        summary["max_grid_change"] = max(changes)
    return rows, summary


def iterations_to_fraction(records, fraction=0.99):
    """First iteration whose objective gain reaches ``fraction`` of the final gain."""
    f0 = records[0].objective_before
    gains = np.array([r.objective for r in records]) - f0
    target = fraction * gains[-1]
    return int(np.flatnonzero(gains >= target)[0]) + 1


def precon_sweep(mesh, objective="aac", strengths=(0.0, 1.0, 10.0), cfg=None):
    """Optimize the same input at several preconditioning strengths."""
    spec = parse_objective(objective)
    base = cfg.to_dict() if cfg else OptConfig().to_dict()
    rows, summary = [], {"iterations_to_99": {}, "flow_time": {}, "final": {}}
    for c in sorted(strengths):
        conf = OptConfig(**{**base, "precondition_strength": c})
        _, records = optimize(mesh, spec, conf)
        for r in records:
            rows.append({"c": c, "iteration": r.iteration, "objective": r.objective,
                         "step": r.step, "flow_time": r.flow_time})
        summary["iterations_to_99"][c] = iterations_to_fraction(records)
        summary["flow_time"][c] = records[-1].flow_time
        summary["final"][c] = records[-1].objective
    return rows, summary


def write_csv(path, kind, rows):
    cols = STUDY_COLUMNS[kind]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in cols})

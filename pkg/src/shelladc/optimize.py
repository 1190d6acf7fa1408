"""Normal-flow shape optimization of ADC objectives.

Each iteration cuts thin necks, remeshes when edge lengths leave the
quality band, evaluates the objective and its shape gradient, smooths the
gradient with the screened preconditioner ``(M + c S) d = (c + 1) G``,
and moves vertices along their normals with an Armijo-controlled step.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .adc import SolverError, adc_matrix
from .geometry import build_geometry
from .mesh import MeshError, rewrap, validate
from .remesh import needs_remesh, remesh
from .sensitivity import objective_gradient
from .surgery import detect_and_surgery

logger = logging.getLogger(__name__)


@dataclass
class ArmijoConfig:
    initial_step: float = 1.0
    shrink: float = 0.5
    slope_fraction: float = 1e-4
    min_step: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.initial_step <= 0 or self.slope_fraction <= 0 or self.min_step <= 0:
            raise ValueError("line-search parameters must be positive")


@dataclass
class ConvergenceConfig:
    min_step_repeats: int = 5
    regression_window: int = 50
    slope_tol: float = 1e-3


@dataclass
class OptConfig:
    precondition_strength: float = 1.0
    fairing_weight: float = 0.1
    armijo: ArmijoConfig = field(default_factory=ArmijoConfig)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    remesh_target_length: float = None
    surgery_threshold: float = None
    max_iterations: int = 500
    kappa: float = 1.0
    max_flip_cosine: float = 0.0    # trial steps may not turn a face normal past this

    def __post_init__(self):
        if isinstance(self.armijo, dict):
            self.armijo = ArmijoConfig(**self.armijo)
        if isinstance(self.convergence, dict):
            self.convergence = ConvergenceConfig(**self.convergence)
        if self.precondition_strength < 0 or self.fairing_weight < 0:
            raise ValueError("precondition strength and fairing weight must be non-negative")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    step: float
    n_vertices: int
    n_faces: int
    area: float
    surgeries: int
    gradient_norm: float
    accepted: bool = True
    remeshed: bool = False
    objective_before: float = None
    flow_time: float = 0.0
    flags: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self))


class OptimizationAborted(RuntimeError):
    """Raised when the mesh becomes unusable; carries the last good state."""

    def __init__(self, message, mesh, records):
        super().__init__(message)
        self.mesh = mesh
        self.records = records


def precondition(cache, g, c):
    """Solve ``(M + c S) d = (c + 1) g``."""
    if c < 0:
        raise ValueError("precondition strength must be non-negative")
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        return np.zeros_like(g)
    if c == 0:
        return g / cache.vertex_area
    A = (cache.mass + c * cache.stiffness).tocsc()
    rhs = (c + 1.0) * g
    d = splu(A).solve(rhs)
    res = np.linalg.norm(A @ d - rhs) / np.linalg.norm(rhs)
    if res > 1e-10:
        raise SolverError(f"preconditioner residual {res:.2e}")
    return d


def laplacian_positions(cache):
    """``L x`` with ``L = -S``, built from wrap-corrected edge vectors."""
    V = cache.n_vertices
    wv = cache.cot_weight[:, None] * cache.edge_vector
    out = np.zeros((V, 3))
    for k in range(3):
        out[:, k] = (np.bincount(cache.edges[:, 0], weights=wv[:, k], minlength=V)
                     - np.bincount(cache.edges[:, 1], weights=wv[:, k], minlength=V))
    return out


def armijo(phi, phi0, slope, cfg, floor=None):
    """Backtracking search on ``phi`` (to be increased).

    Returns ``(t, phi(t))`` for the first ``t = initial * shrink^m`` with
    ``phi(t) >= phi0 + slope_fraction * t * slope`` and ``phi(t) >= floor``,
    or ``(t, None)`` once ``t`` drops below ``min_step``.  Trials that raise
    are treated as failed.
    """
    t = cfg.initial_step
    while t >= cfg.min_step:
        try:
            val = phi(t)
        except (MeshError, SolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.debug("trial step %.3g failed: %s", t, exc)
            val = None
        if val is not None and np.isfinite(val) and val >= phi0 + cfg.slope_fraction * t * slope \
                and (floor is None or val >= floor):
            return t, val
        t *= cfg.shrink
    return t, None


def _trial_mesh(mesh, cache, direction, t, cfg):
    move = t * direction[:, None] * cache.vertex_normal
    if cfg.fairing_weight:
        move = move + t * cfg.fairing_weight * laplacian_positions(cache)
    trial = rewrap(mesh, mesh.vertices + move)
    w = trial.corner_positions()
    n = np.cross(w[:, 1] - w[:, 0], w[:, 2] - w[:, 0])
    ln = np.linalg.norm(n, axis=1)
    if np.any(ln <= 0):
        raise MeshError("trial step creates a degenerate face", "degenerate")
    if np.any(np.einsum("ij,ij->i", n / ln[:, None], cache.face_normal) <= cfg.max_flip_cosine):
        raise MeshError("trial step folds a face", "fold")
    return trial


def armijo_step(mesh, spec, d, f0, g, cfg, cache=None, floor=None):
    """Line search along ``d`` (already oriented for ascent of ``spec``).

    ``floor`` is an objective value the accepted step must also reach.
    Returns ``(step, new_mesh, new_value)``; on failure the step is below
    ``min_step``, the mesh is returned unchanged and the value is ``f0``.
    """
    cache = cache or build_geometry(mesh)
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("search direction is not finite")
    if not np.any(d):
        return cfg.armijo.initial_step, mesh.copy(), f0
    sign = spec.sign
    direction = sign * d
    slope = float(np.dot(g, d))      # directional derivative of sign * f along the step
    trials = {}

    def phi(t):
        trial = _trial_mesh(mesh, cache, direction, t, cfg)
        val = adc_matrix(trial, None, cfg.kappa).kA
        trials[t] = trial
        return sign * spec.value(val)

    t, val = armijo(phi, sign * f0, slope, cfg.armijo, None if floor is None else sign * floor)
    if val is None:
        return t, mesh, f0
    return t, trials[t], sign * val


def _regression_slope(x, y):
    x = np.asarray(x, dtype=float)
    if np.ptp(x) == 0:
        return np.inf
    return float(np.polyfit(x, y, 1)[0])


def optimize(mesh, spec, cfg, log_path=None, callback=None):
    """Run the optimization pipeline; returns ``(mesh, records)``.

    Accepted objective values never decrease: a step must also reach the
    last accepted value, which matters after a remesh lowered the objective.
    A failed line search restores the mesh the iteration started from and
    the next iteration skips remeshing.
    """
    validate(mesh)
    records = []
    flow_time = 0.0
    small_steps = 0
    best = None
    skip_remesh = False
    log = open(log_path, "w") if log_path else None
    try:
        for it in range(cfg.max_iterations):
            last_good = mesh
            surgeries = 0
            remeshed = False
            try:
                if cfg.surgery_threshold:
                    mesh, surgeries = detect_and_surgery(mesh, cfg.surgery_threshold)
                if cfg.remesh_target_length and not skip_remesh \
                        and needs_remesh(mesh, cfg.remesh_target_length):
                    mesh = remesh(mesh, cfg.remesh_target_length)
                    remeshed = True
                validate(mesh)
                cache = build_geometry(mesh)
                adc = adc_matrix(mesh, cache, cfg.kappa)
                f0, g, flags = objective_gradient(mesh, cache, adc, spec)
                d = precondition(cache, g, cfg.precondition_strength)
                # a floor only binds when surgery or remeshing moved the value
                floor = best if best is not None and spec.sign * (f0 - best) < 0 else None
                step, new_mesh, f1 = armijo_step(mesh, spec, d, f0, g, cfg, cache, floor)
            except (MeshError, SolverError) as exc:
                raise OptimizationAborted(f"iteration {it}: {exc}", last_good, records) from exc
            accepted = step >= cfg.armijo.min_step
            skip_remesh = False
            if accepted:
                mesh = new_mesh
                flow_time += step
                small_steps = 0
                best = f1 if best is None else (max(best, f1) if spec.sign > 0 else min(best, f1))
            else:
                small_steps += 1
                flags = flags + ["line-search-failed"]
                if mesh is not last_good:
                    mesh = last_good
                    f1 = spec.value(adc_matrix(mesh, None, cfg.kappa).kA)
                    skip_remesh = True
            rec = IterationRecord(
                iteration=it, objective=float(f1), step=float(step),
                n_vertices=mesh.n_vertices, n_faces=mesh.n_faces,
                area=float(mesh.total_area()), surgeries=int(surgeries),
                gradient_norm=float(np.sqrt(np.dot(g, g / cache.vertex_area))),
                accepted=bool(accepted), remeshed=remeshed, objective_before=float(f0),
                flow_time=flow_time, flags=flags,
            )
            records.append(rec)
            if log:
                log.write(rec.to_json() + "\n")
                log.flush()
            if callback:
                callback(rec, mesh)
            logger.info("iter %d  f=%.6f  step=%.3g  V=%d", it, f1, step, mesh.n_vertices)
            if _converged(records, small_steps, cfg.convergence):
                break
    finally:
        if log:
            log.close()
    return mesh, records


def _converged(records, small_steps, conv):
    if small_steps >= conv.min_step_repeats:
        return True
    n = conv.regression_window
    if len(records) >= n:
        window = records[-n:]
        slope = _regression_slope([r.flow_time for r in window], [r.objective for r in window])
        if abs(slope) < conv.slope_tol:
            return True
    return False


def sample_targets(dk):
    """Diagonal targets ``diag(m1, m2, m3) * dk`` in the feasible region.

    The ``m_i`` are positive integers; feasibility means every entry is at
    most 1 and the trace at most 2.
    """
    if dk <= 0:
        raise ValueError("step must be positive")
    top = int(np.floor(1.0 / dk + 1e-9))
    out = []
    for m in product(range(1, top + 1), repeat=3):
        vals = np.array(m) * dk
        if vals.max() <= 1 + 1e-9 and vals.sum() <= 2 + 1e-9:
            out.append(np.diag(vals))
    return out

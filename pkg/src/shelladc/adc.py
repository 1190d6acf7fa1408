"""Discrete asymptotic conductivity matrix of a periodic middle surface.

The Laplacian is used with the sign of the stiffness matrix ``S`` (positive
semidefinite), so the surface Poisson problem ``L u = rho`` reads
``S u = -rho``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from .geometry import build_geometry
from .mesh import euler_characteristic

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
COMPAT_TOL = 1e-8


class SolverError(RuntimeError):
    pass


def _unit(p):
    p = np.asarray(p, dtype=float)
    n = np.linalg.norm(p)
    if not np.isclose(n, 1.0, rtol=0, atol=1e-12):
        raise ValueError(f"direction must be a unit vector, |p| = {n}")
    return p


class PoissonSolver:
    """Factorised stiffness matrix with the constant null space removed.

    One vertex per connected component is grounded after the right-hand side
    has been projected onto the compatible subspace; the solution is then
    shifted to zero mass-weighted mean on every component.  With a compatible
    right-hand side this gives exactly the mean-free solution of ``S u = -rho``.
    """

    def __init__(self, cache):
        self.cache = cache
        S = cache.stiffness.tocsr()
        V = S.shape[0]
        n_comp, labels = csgraph.connected_components(S, directed=False)
        self.n_components = n_comp
        self.labels = labels
        self.ground = np.array([np.flatnonzero(labels == c)[0] for c in range(n_comp)])
        keep = np.ones(V, dtype=bool)
        keep[self.ground] = False
        self.keep = keep
        A = S[keep][:, keep].tocsc()
        self._lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                        options=dict(SymmetricMode=True))
        self._S = S

    def _component_sums(self, x):
        return np.bincount(self.labels, weights=x, minlength=self.n_components)

    def solve(self, rho):
        """Solve ``S u = -rho``; ``rho`` may be (V,) or (V, k)."""
        rho = np.asarray(rho, dtype=float)
        if rho.ndim == 2:
            cols = [self.solve(rho[:, k]) for k in range(rho.shape[1])]
            return np.stack([c[0] for c in cols], axis=1), np.array([c[1] for c in cols])
        scale = np.abs(rho).sum()
        if scale == 0.0:
            return np.zeros_like(rho), 0.0
        sums = self._component_sums(rho)
        if np.any(np.abs(sums) > COMPAT_TOL * scale):
            raise SolverError(f"incompatible right-hand side (component sums {sums})")
        counts = np.bincount(self.labels, minlength=self.n_components)
        b = -(rho - (sums / counts)[self.labels])
        u = np.zeros_like(rho)
        u[self.keep] = self._lu.solve(b[self.keep])
        r = b - self._S @ u
        norm_b = np.linalg.norm(b)
        for _ in range(3):
            if np.linalg.norm(r) <= RESIDUAL_TOL * norm_b:
                break
            du = np.zeros_like(u)
            du[self.keep] = self._lu.solve(r[self.keep])
            u += du
            r = b - self._S @ u
        res = np.linalg.norm(r) / norm_b
        if res > RESIDUAL_TOL:
            raise SolverError(f"Poisson solve did not converge (relative residual {res:.2e})")
        area = self.cache.vertex_area
        mean = self._component_sums(area * u) / self._component_sums(area)
        u -= mean[self.labels]
        return u, float(res)


def divergence_vector(mesh, cache, p):
    """Integrated divergence ``rho_i = -sum_j w_ij p . (v_j - v_i)`` per vertex."""
    p = _unit(p)
    return _divergence(cache, p[:, None])[:, 0]


def _divergence(cache, P):
    # P is (3, k): one direction per column
    pe = cache.cot_weight[:, None] * (cache.edge_vector @ P)
    V = cache.n_vertices
    i, j = cache.edges[:, 0], cache.edges[:, 1]
    out = np.empty((V, P.shape[1]))
    for k in range(P.shape[1]):
        out[:, k] = (np.bincount(j, weights=pe[:, k], minlength=V)
                     - np.bincount(i, weights=pe[:, k], minlength=V))
    return out


def solve_poisson(cache, rho, solver=None):
    """Mean-free solution of ``S u = -rho`` (see module docstring)."""
    solver = solver or PoissonSolver(cache)
    return solver.solve(rho)[0]


@dataclass
class AdcResult:
    kA: np.ndarray
    solutions: np.ndarray        # (V, 3)
    divergences: np.ndarray      # (V, 3)
    normal_covariance: np.ndarray
    R: np.ndarray
    total_area: float
    kappa: float
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def aac(self):
        return aac(self.kA)

    def bounds_at_axes(self):
        return [float(self.kappa * (1.0 - self.normal_covariance[i, i])) for i in range(3)]

    def to_dict(self, euler=None):
        return {
            "kA": self.kA.tolist(),
            "aac": float(self.aac),
            "boundsAtAxes": self.bounds_at_axes(),
            "area": float(self.total_area),
            "euler": euler,
            "solverResiduals": [float(r) for r in self.residuals],
        }


def adc_matrix(mesh, cache=None, kappa=1.0, solver=None):
    """ADC matrix ``kappa (I - <n n^T> - R)`` with ``R_ij = -(u^i . rho^j) / |w|``."""
    if cache is None:
        cache = build_geometry(mesh)
    solver = solver or PoissonSolver(cache)
    rho = _divergence(cache, np.eye(3))
    U, res = solver.solve(rho)
    area = cache.total_area
    N = cache.normal_covariance()
    R = -(U.T @ rho) / area
    R = 0.5 * (R + R.T)
    kA = kappa * (np.eye(3) - N - R)
    return AdcResult(kA=kA, solutions=U, divergences=rho, normal_covariance=N, R=R,
                     total_area=area, kappa=float(kappa), residuals=np.asarray(res))


def adc_directional(kA, p):
    p = _unit(p)
    return float(p @ kA @ p)


def upper_bound_directional(mesh, cache, kappa, p):
    """Directional bound ``kappa (1 - p^T <n n^T> p)``."""
    p = _unit(p)
    return float(kappa * (1.0 - p @ cache.normal_covariance() @ p))


def aac(kA):
    """Average asymptotic conductivity, ``trace(kA) / 3``."""
    return float(np.trace(kA) / 3.0)


def energy_form_adc(mesh, cache, kappa, p, solver=None):
    """Directional ADC as bound minus the Dirichlet energy of a fresh solve."""
    p = _unit(p)
    u = solve_poisson(cache, divergence_vector(mesh, cache, p), solver)
    bound = upper_bound_directional(mesh, cache, kappa, p)
    return bound - kappa * cache.dirichlet_energy(u) / cache.total_area


def hs_bound(rho, kappa=1.0):
    """Hashin-Shtrikman upper bound ``2 rho kappa / (3 - rho)``."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"volume fraction must lie in [0, 1], got {rho}")
    return 2.0 * rho * kappa / (3.0 - rho)


def evaluate(mesh, kappa=1.0):
    """Convenience wrapper: geometry, ADC matrix and result dictionary."""
    cache = build_geometry(mesh)
    res = adc_matrix(mesh, cache, kappa)
    return res, res.to_dict(euler=euler_characteristic(mesh))

"""Shape derivatives of the ADC matrix under normal motion.

For a piecewise-linear normal velocity ``v`` (one value per vertex) the
rates are linear in ``v``; this module returns their coefficient vectors,
so that for example ``dk_ij/dt = G_ij . v``.  Face integrals use one-point
quadrature with hat-function weight 1/3 per corner.
"""

import logging

import numpy as np

from .objectives import evaluate_objective

logger = logging.getLogger(__name__)


def _tangent_fields(cache, adc):
    """``P_f (grad u^i + e_i)`` per face, shape (F, 3, 2)."""
    grad = cache.face_gradients(adc.solutions)         # (F, 3 coords, 3 dirs)
    B = cache.face_basis                                # (F, 2, 3)
    proj_grad = np.einsum("fad,fdi->fia", B, grad)     # (F, dir, 2)
    proj_e = np.transpose(B, (0, 2, 1))                 # (F, dir i, 2): P_f e_i
    return proj_grad + proj_e


def _to_vertices(cache, per_face):
    """Spread per-face integrals to vertices with weight 1/3."""
    V = cache.n_vertices
    flat = per_face.reshape(len(per_face), -1)
    out = np.zeros((V, flat.shape[1]))
    for k in range(3):
        for c in range(flat.shape[1]):
            out[:, c] += np.bincount(cache.faces[:, k], weights=flat[:, c], minlength=V)
    return out.reshape((V,) + per_face.shape[1:]) / 3.0


def area_rate(cache):
    """Coefficients of ``dA/dt = -int 2 v H``, one per vertex."""
    tr = cache.face_sff[:, 0, 0] + cache.face_sff[:, 1, 1]
    return _to_vertices(cache, -cache.face_area * tr)


def kdot_coefficients(cache, adc):
    """(V, 3, 3) coefficients of ``dk_A/dt``.

    ``dk_ij = dI_ij / A - k_ij dA / A`` with
    ``dI_ij = int 2 kappa v g_i^T (b - tr(b)/2 I) g_j`` and
    ``g_i = P_f (grad u^i + e_i)``.
    """
    g = _tangent_fields(cache, adc)
    b = cache.face_sff
    Q = b - 0.5 * (b[:, 0, 0] + b[:, 1, 1])[:, None, None] * np.eye(2)
    integrand = 2.0 * adc.kappa * np.einsum("fia,fab,fjb->fij", g, Q, g)
    Idot = _to_vertices(cache, cache.face_area[:, None, None] * integrand)
    Adot = area_rate(cache)
    A = adc.total_area
    return Idot / A - adc.kA[None] * Adot[:, None, None] / A


def entry_gradient(mesh, cache, adc, i, j):
    """Coefficient vector of ``d k_A^{ij} / dt`` with respect to vertex velocities."""
    return kdot_coefficients(cache, adc)[:, i, j]


def objective_gradient(mesh, cache, adc, spec):
    """``(value, G, flags)`` with ``df/dt = G . v``.

    ``G`` pairs with nodal velocities directly; ``M^{-1} G`` is the L2
    gradient.  A reached target yields a zero gradient and a flag.
    """
    value, dfdk, flags = evaluate_objective(spec, adc.kA)
    if "target-reached" in flags and not np.any(dfdk):
        return value, np.zeros(cache.n_vertices), flags
    G = np.einsum("vij,ij->v", kdot_coefficients(cache, adc), dfdk)
    return value, G, flags

"""Finite-difference effective conductivity of a thickened revolution shell.

The shell around the revolution surface ``r(x, t) = (x, R cos t, R sin t)``
is parameterised as ``r + z n`` with ``|z| <= eps`` and outward unit normal
``n = (-R', cos t, sin t) / W``, ``W = sqrt(1 + R'^2)``.  Since
``d_x n = -(R'' / W^2) t_hat`` with ``t_hat`` the unit meridian tangent, the
covariant basis is orthogonal with

    |g1| = W - z R'' / W^2,   |g2| = R + z / W,   |g3| = 1,
    sqrt(G) = |g1| |g2|.

For conduction along ``e1`` the cell solution is ``u = s(x, z)`` and the
covariant components of ``e1`` are

    p1 = e1 . g1 = 1 - z R'' / W^3,   p2 = 0,   p3 = e1 . n = -R' / W.

The energy density ``g^ij (d_i u + p_i)(d_j u + p_j) sqrt(G)`` then becomes

    c0 + c1 . grad s + grad s^T C2 grad s,  with
    c0 = sqrt(G) (p1^2 / G11 + p3^2),
    c1 = 2 sqrt(G) (p1 / G11, p3),
    C2 = sqrt(G) diag(1 / G11, 1),

integrated over ``x in [-1, 1]``, ``z in [-eps, eps]`` with a factor 2 pi
from the angle and divided by the cell volume 8.  Note ``p1^2 / G11 = 1 / W^2``.
On a cylinder ``c1 = 0`` and the minimum is ``pi eps r``, the volume
fraction, so ``kappa_eps / rho_eps = 1``.
"""

import logging

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

logger = logging.getLogger(__name__)

CELL_VOLUME = 8.0


def _coefficients(profile, x, z):
    R, d1, d2 = profile.R(x), profile.dR(x), profile.d2R(x)
    W = np.sqrt(1.0 + d1**2)
    g1 = W - z * d2 / W**2
    g2 = R + z / W
    sqrtG = g1 * g2
    p1 = 1.0 - z * d2 / W**3
    p3 = -d1 / W * np.ones_like(z)
    G11 = g1**2
    c0 = sqrtG * (p1**2 / G11 + p3**2)
    c1x = 2.0 * sqrtG * p1 / G11
    c1z = 2.0 * sqrtG * p3
    return c0, c1x, c1z, sqrtG / G11, sqrtG


def _difference_operators(N, M, dx, dz):
    n = N * (M + 1)
    idx = np.arange(n).reshape(N, M + 1)
    i, j = np.meshgrid(np.arange(N), np.arange(M + 1), indexing="ij")
    # central difference in x, periodic
    rows = np.concatenate([idx.ravel(), idx.ravel()])
    cols = np.concatenate([idx[(i + 1) % N, j].ravel(), idx[(i - 1) % N, j].ravel()])
    vals = np.concatenate([np.full(n, 0.5 / dx), np.full(n, -0.5 / dx)])
    Dx = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    # central in z, one-sided at the two faces of the shell
    jp = np.minimum(j + 1, M)
    jm = np.maximum(j - 1, 0)
    span = ((jp - jm) * dz).ravel()
    rows = np.concatenate([idx.ravel(), idx.ravel()])
    cols = np.concatenate([idx[i, jp].ravel(), idx[i, jm].ravel()])
    vals = np.concatenate([1.0 / span, -1.0 / span])
    Dz = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return Dx, Dz


def effective_conductivity_shell(profile, epsilon, N=4096, M=16, kappa=1.0):
    """Axial effective conductivity and volume fraction of the shell.

    Returns ``(kappa_eps, rho_eps)``.  Raises ValueError if the offset shell
    self-intersects, i.e. ``eps * max |principal curvature| >= 1``.
    """
    if N < 16 or M < 4:
        raise ValueError("need N >= 16 and M >= 4")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    kmax = profile.max_curvature()
    if epsilon * kmax >= 1.0:
        raise ValueError(f"offset shell self-intersects: eps * max|k| = {epsilon * kmax:.3f}")
    dx = 2.0 / N
    dz = 2.0 * epsilon / M
    xs = -1.0 + dx * np.arange(N)
    zs = -epsilon + dz * np.arange(M + 1)
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    c0, c1x, c1z, a, b = (c.ravel() for c in _coefficients(profile, X, Z))
    wz = np.full(M + 1, dz)
    wz[[0, -1]] = 0.5 * dz
    w = (2.0 * np.pi * dx / CELL_VOLUME) * np.broadcast_to(wz, (N, M + 1)).ravel()

    Dx, Dz = _difference_operators(N, M, dx, dz)
    A = (Dx.T @ sparse.diags(w * a) @ Dx + Dz.T @ sparse.diags(w * b) @ Dz).tocsr()
    rhs = -0.5 * (Dx.T @ (w * c1x) + Dz.T @ (w * c1z))
    # constants and the x-checkerboard are both annihilated by the stencils
    keep = np.ones(A.shape[0], dtype=bool)
    keep[[0, M + 1]] = False
    s = np.zeros(A.shape[0])
    s[keep] = spsolve(A[keep][:, keep].tocsc(), rhs[keep])
    zx, zz = Dx @ s, Dz @ s
    energy = w @ (c0 + c1x * zx + c1z * zz + a * zx**2 + b * zz**2)
    rho = 2.0 * epsilon * profile.area() / CELL_VOLUME
    return float(kappa * energy), float(rho)


def residual(profile, epsilon, adc_axial, N=4096, M=16):
    """``|kappa_eps - (2 eps |w| / |Y|) kappa_A|`` for the given axial ADC."""
    k_eps, rho = effective_conductivity_shell(profile, epsilon, N, M)
    return abs(k_eps - rho * adc_axial)

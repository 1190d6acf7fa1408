"""Surfaces of revolution about the x-axis and the closed-form axial ADC.

For a periodic profile ``R(x)`` on [-1, 1] the axial asymptotic
conductivity (with unit base conductivity) is

    4 / ( int sqrt(1 + R'^2) / R dx  *  int R sqrt(1 + R'^2) dx ).
"""

import json
import re
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import sympy
from sympy.core.function import AppliedUndef
from scipy import integrate

from .mesh import PERIOD, PeriodicSurfaceMesh, wrap

logger = logging.getLogger(__name__)

_X = sympy.Symbol("x", real=True)
_ALLOWED = {
    "x": _X, "pi": sympy.pi, "cos": sympy.cos, "sin": sympy.sin,
    "exp": sympy.exp, "sqrt": sympy.sqrt, "E": sympy.E,
}

_SAFE = re.compile(r"[A-Za-z0-9_.+\-*/^() \t]*")

GOLDEN_PATH = Path(__file__).with_name("data") / "golden.json"


class ProfileError(ValueError):
    pass


class ProfileSyntaxError(ProfileError):
    pass


@dataclass
class RevolutionProfile:
    """Radius profile ``R(x)`` given as a closed-form expression in ``x``.

    The expression is differentiated symbolically, so ``R``, ``R'`` and
    ``R''`` are all exact.
    """

    expression: str
    _expr: sympy.Expr = field(init=False, repr=False)

    def __post_init__(self):
        # sympify evaluates its input, so only arithmetic characters get through
        if not _SAFE.fullmatch(self.expression) or "__" in self.expression:
            raise ProfileSyntaxError(f"profile {self.expression!r} has disallowed characters")
        try:
            expr = sympy.sympify(self.expression, locals=_ALLOWED)
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ProfileSyntaxError(f"cannot parse profile {self.expression!r}: {exc}") from exc
        if not isinstance(expr, sympy.Expr):
            raise ProfileSyntaxError(f"profile {self.expression!r} is not an expression")
        free = expr.free_symbols - {_X}
        undefined = expr.atoms(AppliedUndef)
        if free or undefined:
            names = sorted(map(str, free | {f.func for f in undefined}))
            raise ProfileSyntaxError(f"profile has unknown symbols {names}")
        self._expr = expr
        d1 = sympy.diff(expr, _X)
        d2 = sympy.diff(d1, _X)
        self._r = sympy.lambdify(_X, expr, "numpy")
        self._d1 = sympy.lambdify(_X, d1, "numpy")
        self._d2 = sympy.lambdify(_X, d2, "numpy")
        self.check()

    def R(self, x):
        return _broadcast(self._r(x), x)

    def dR(self, x):
        return _broadcast(self._d1(x), x)

    def d2R(self, x):
        return _broadcast(self._d2(x), x)

    def check(self, n=2001):
        xs = np.linspace(-1.0, 1.0, n)
        r = self.R(xs)
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ProfileError("profile radius must be positive on [-1, 1]")
        if np.any(r >= 0.5 * PERIOD):
            raise ProfileError("profile radius must stay below 1 to fit in the cell")
        ends = [(self.R(-1.0), self.R(1.0)), (self.dR(-1.0), self.dR(1.0))]
        for a, b in ends:
            if abs(float(a) - float(b)) > 1e-12:
                raise ProfileError("profile is not periodic on [-1, 1]")

    def max_curvature(self, n=4001):
        """Largest absolute principal curvature of the revolution surface."""
        xs = np.linspace(-1.0, 1.0, n)
        r, d1, d2 = self.R(xs), self.dR(xs), self.d2R(xs)
        w = np.sqrt(1.0 + d1**2)
        meridian = np.abs(d2) / w**3
        parallel = 1.0 / (r * w)
        return float(max(meridian.max(), parallel.max()))

    def area(self, tol=1e-12):
        val, _ = integrate.quad(lambda x: self.R(x) * np.sqrt(1 + self.dR(x) ** 2),
                                -1.0, 1.0, epsabs=tol, epsrel=tol, limit=500)
        return 2.0 * np.pi * val


def _broadcast(val, x):
    # lambdify returns a scalar for constant expressions
    return np.broadcast_to(np.asarray(val, dtype=float), np.shape(x)).copy() \
        if np.ndim(x) else float(val)


def adc_axial_analytic(profile, quad_tolerance=1e-10):
    """Closed-form axial ADC of the surface of revolution (unit conductivity)."""
    def arc(x):
        return np.sqrt(1.0 + profile.dR(x) ** 2)

    opts = dict(epsabs=quad_tolerance, epsrel=quad_tolerance, limit=1000, full_output=1)
    i1 = integrate.quad(lambda x: arc(x) / profile.R(x), -1.0, 1.0, **opts)
    i2 = integrate.quad(lambda x: profile.R(x) * arc(x), -1.0, 1.0, **opts)
    for res in (i1, i2):
        if len(res) > 3:
            raise ArithmeticError(f"quadrature did not converge: {res[3]}")
    return 4.0 / (i1[0] * i2[0])


def revolve_mesh(profile, nx, ntheta):
    """Structured triangulation of the revolution surface, periodic in x.

    Vertices lie exactly on the parameterised surface
    ``(x, R(x) cos t, R(x) sin t)``; normals point away from the axis.
    """
    if nx < 8 or ntheta < 8:
        raise ValueError("nx and ntheta must be at least 8")
    xs = -1.0 + 2.0 * np.arange(nx) / nx
    ts = 2.0 * np.pi * np.arange(ntheta) / ntheta
    r = profile.R(xs)
    X, T = np.meshgrid(xs, ts, indexing="ij")
    Rg = np.broadcast_to(r[:, None], X.shape)
    verts = np.stack([X, Rg * np.cos(T), Rg * np.sin(T)], axis=-1).reshape(-1, 3)

    i, j = np.meshgrid(np.arange(nx), np.arange(ntheta), indexing="ij")
    i, j = i.ravel(), j.ravel()
    i1 = (i + 1) % nx
    j1 = (j + 1) % ntheta
    wrap_x = (i + 1 == nx).astype(np.int64)

    def vid(a, b):
        return a * ntheta + b

    v00, v10, v11, v01 = vid(i, j), vid(i1, j), vid(i1, j1), vid(i, j1)
    # alternate the diagonal so the triangulation has no preferred direction
    faces, shifts = [], []
    zero = np.zeros_like(wrap_x)
    s10 = np.stack([wrap_x, zero, zero], axis=1)
    s00 = np.zeros((len(i), 3), dtype=np.int64)
    diag = (i + j) % 2 == 0
    # (i,j) -> (i+1,j) -> (i+1,j+1) winds towards the axis; reversed below
    fa = np.where(diag[:, None], np.stack([v00, v10, v11], 1), np.stack([v00, v10, v01], 1))
    sa = np.where(diag[:, None, None], np.stack([s00, s10, s10], 1), np.stack([s00, s10, s00], 1))
    fb = np.where(diag[:, None], np.stack([v00, v11, v01], 1), np.stack([v10, v11, v01], 1))
    sb = np.where(diag[:, None, None], np.stack([s00, s10, s00], 1), np.stack([s10, s10, s00], 1))
    faces = np.concatenate([fa, fb])[:, ::-1]
    shifts = np.concatenate([sa, sb])[:, ::-1]
    shifts = shifts - shifts[:, :1]
    return PeriodicSurfaceMesh(wrap(verts), faces, shifts)


def cylinder_mesh(radius, nx, ntheta):
    return revolve_mesh(RevolutionProfile(repr(float(radius))), nx, ntheta)


def load_golden():
    with open(GOLDEN_PATH) as fh:
        return json.load(fh)


def write_golden(path=GOLDEN_PATH):
    """Recompute the frozen oracle constants (run once, committed)."""
    expr = "(2+cos(pi*x))/4"
    value = adc_axial_analytic(RevolutionProfile(expr), quad_tolerance=1e-12)
    data = {"profiles": {expr: {"adc_axial": value, "quad_tolerance": 1e-12}}}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
    return data

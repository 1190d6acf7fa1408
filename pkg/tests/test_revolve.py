import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shelladc.adc import adc_matrix, hs_bound
from shelladc.geometry import build_geometry
from shelladc.mesh import euler_characteristic, validate
from shelladc.revolve import (ProfileError, ProfileSyntaxError, RevolutionProfile,
                              adc_axial_analytic, cylinder_mesh, load_golden, revolve_mesh)
from shelladc.shell import effective_conductivity_shell, residual
from shelladc.studies import fit_loglog_slope

from conftest import BUMPY


# ------------------------------------------------------------------- profiles
def test_profile_derivatives(bumpy_profile):
    x = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(bumpy_profile.R(x), (2 + np.cos(np.pi * x)) / 4)
    np.testing.assert_allclose(bumpy_profile.dR(x), -np.pi * np.sin(np.pi * x) / 4, atol=1e-15)
    np.testing.assert_allclose(bumpy_profile.d2R(x), -np.pi**2 * np.cos(np.pi * x) / 4)


def test_constant_profile_broadcasts():
    prof = RevolutionProfile("0.3")
    assert prof.R(np.zeros(4)).shape == (4,)
    assert prof.dR(0.5) == 0.0


@pytest.mark.parametrize("expr", ["x +", "__import__('os')", "foo(x)", "0.3*y", "x; 1", "lambda: 1"])
def test_profile_syntax_errors(expr):
    with pytest.raises(ProfileSyntaxError):
        RevolutionProfile(expr)


@pytest.mark.parametrize("expr", ["0.3 + x", "1.2", "-0.1", "0.1*cos(pi*x)"])
def test_profile_domain_errors(expr):
    with pytest.raises(ProfileError) as info:
        RevolutionProfile(expr)
    assert not isinstance(info.value, ProfileSyntaxError)


# -------------------------------------------------------------- analytic ADC
def test_constant_radius_gives_one():
    assert adc_axial_analytic(RevolutionProfile("0.37")) == pytest.approx(1.0, abs=1e-12)


def test_golden_value_matches_recomputation(bumpy_profile):
    golden = load_golden()["profiles"][BUMPY]
    assert adc_axial_analytic(bumpy_profile, 1e-12) == pytest.approx(golden["adc_axial"], abs=1e-10)
    assert 0.6 < golden["adc_axial"] < 0.7


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.2, 0.6), b=st.floats(-0.5, 0.5), c=st.floats(-0.5, 0.5),
       k=st.integers(1, 3), m=st.integers(1, 3))
def test_axial_adc_at_most_one(a, b, c, k, m):
    """Cauchy-Schwarz gives 4 / (int W/R int R W) <= 1."""
    expr = f"{a!r} + {a * b!r}*cos({k}*pi*x) + {a * c!r}*sin({m}*pi*x)"
    val = adc_axial_analytic(RevolutionProfile(expr))
    assert 0.0 < val <= 1.0 + 1e-12


# --------------------------------------------------------------------- meshes
def test_revolve_vertices_on_surface(bumpy_profile, bumpy):
    validate(bumpy)
    x, y, z = bumpy.vertices.T
    np.testing.assert_allclose(np.hypot(y, z), bumpy_profile.R(x), atol=1e-14)
    assert euler_characteristic(bumpy) == 0


def test_revolve_normals_converge(bumpy_profile):
    errs = []
    for n in (24, 48):
        mesh = revolve_mesh(bumpy_profile, n, 2 * n)
        nv = build_geometry(mesh).vertex_normal
        x, y, z = mesh.vertices.T
        d1 = bumpy_profile.dR(x)
        r = np.hypot(y, z)
        exact = np.stack([-d1, y / r, z / r], axis=1) / np.sqrt(1 + d1**2)[:, None]
        errs.append(np.linalg.norm(nv - exact, axis=1).max())
    assert errs[1] < 0.6 * errs[0]
    assert errs[1] < 2e-2


def test_revolve_discrete_matches_analytic(bumpy_profile):
    kA = adc_matrix(revolve_mesh(bumpy_profile, 96, 192)).kA
    assert kA[0, 0] == pytest.approx(adc_axial_analytic(bumpy_profile), rel=2e-3)


def test_revolve_mesh_size_check(bumpy_profile):
    with pytest.raises(ValueError):
        revolve_mesh(bumpy_profile, 4, 32)


def test_cylinder_area():
    mesh = cylinder_mesh(0.3, 16, 256)
    assert mesh.total_area() == pytest.approx(2 * np.pi * 0.3 * 2, rel=1e-3)


# -------------------------------------------------------------- shell oracle
def test_shell_cylinder_ratio_is_one():
    k, rho = effective_conductivity_shell(RevolutionProfile("0.3"), 0.05, N=256, M=8)
    assert k / rho == pytest.approx(1.0, abs=1e-12)
    assert rho == pytest.approx(2 * 0.05 * 2 * np.pi * 0.3 * 2 / 8)


def test_shell_residual_third_order(bumpy_profile):
    ref = adc_axial_analytic(bumpy_profile)
    eps = [0.1, 0.05, 0.025]
    errs = [residual(bumpy_profile, e, ref, N=1024, M=8) for e in eps]
    assert fit_loglog_slope(eps, errs) > 2.7


def test_shell_grid_stability(bumpy_profile):
    coarse, _ = effective_conductivity_shell(bumpy_profile, 0.05, N=1024, M=8)
    fine, _ = effective_conductivity_shell(bumpy_profile, 0.05, N=2048, M=16)
    assert abs(fine - coarse) / fine < 1e-3


def test_shell_rejects_self_intersection(bumpy_profile):
    with pytest.raises(ValueError, match="self-intersects"):
        effective_conductivity_shell(bumpy_profile, 0.5, N=64, M=4)


@pytest.mark.parametrize("kw", [dict(N=8, M=8), dict(N=64, M=2)])
def test_shell_rejects_small_grid(bumpy_profile, kw):
    with pytest.raises(ValueError):
        effective_conductivity_shell(bumpy_profile, 0.05, **kw)


def test_shell_obeys_wiener_bound(bumpy_profile):
    for eps in (0.1, 0.05):
        k, rho = effective_conductivity_shell(bumpy_profile, eps, N=512, M=8, kappa=2.0)
        assert 0 < k <= 2.0 * rho


def test_hs_bound_does_not_apply_to_axial_shells():
    """The isotropic bound fails for anisotropic tubes conducting along their axis."""
    k, rho = effective_conductivity_shell(RevolutionProfile("0.3"), 0.05, N=256, M=8)
    assert k > hs_bound(rho)

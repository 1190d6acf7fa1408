import time

import numpy as np
import pytest
from scipy import integrate

from shelladc.adc import (PoissonSolver, aac, adc_directional, adc_matrix, divergence_vector,
                          energy_form_adc, evaluate, hs_bound, solve_poisson,
                          upper_bound_directional)
from shelladc.geometry import build_geometry
from shelladc.revolve import revolve_mesh
from shelladc.surfgen import plane_mesh


def _unit_vectors(rng, n):
    P = rng.standard_normal((n, 3))
    return P / np.linalg.norm(P, axis=1)[:, None]


# ----------------------------------------------------------------- divergence
def test_plane_divergence_vanishes(plane):
    cache = build_geometry(plane)
    for p in np.eye(3):
        assert np.abs(divergence_vector(plane, cache, p)).max() < 1e-12


def test_divergence_sums_to_zero(perturbed, rng):
    cache = build_geometry(perturbed)
    for p in _unit_vectors(rng, 3):
        rho = divergence_vector(perturbed, cache, p)
        assert abs(rho.sum()) < 1e-12 * np.abs(rho).sum()


def test_divergence_is_linear(perturbed):
    cache = build_geometry(perturbed)
    p, q = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    mix = divergence_vector(perturbed, cache, (p + q) / np.sqrt(2.0))
    parts = divergence_vector(perturbed, cache, p) + divergence_vector(perturbed, cache, q)
    np.testing.assert_allclose(mix, parts / np.sqrt(2.0), atol=1e-14)


def test_divergence_rejects_non_unit_direction(plane):
    with pytest.raises(ValueError):
        divergence_vector(plane, build_geometry(plane), [1.0, 1.0, 0.0])


def test_divergence_weak_form_on_revolution(bumpy_profile):
    """sum_i rho_i f(x_i) converges to the integral of 2H (p.n) f."""
    prof = bumpy_profile

    def density(x):
        R, d1, d2 = prof.R(x), prof.dR(x), prof.d2R(x)
        W = np.sqrt(1 + d1**2)
        return (1 / (R * W) - d2 / W**3) * (-d1 / W) * 2 * np.pi * R * W

    f = lambda x: np.sin(np.pi * x)  # noqa: E731
    ref = integrate.quad(lambda x: density(x) * f(x), -1, 1, epsabs=1e-12)[0]
    errs = []
    for n in (32, 64):
        mesh = revolve_mesh(prof, n, 2 * n)
        rho = divergence_vector(mesh, build_geometry(mesh), [1, 0, 0])
        errs.append(abs(rho @ f(mesh.vertices[:, 0]) - ref) / abs(ref))
    assert errs[1] < 2e-3
    assert errs[1] < errs[0] / 3


# -------------------------------------------------------------------- Poisson
def test_poisson_zero_rhs(perturbed):
    cache = build_geometry(perturbed)
    u = solve_poisson(cache, np.zeros(cache.n_vertices))
    assert np.abs(u).max() < 1e-14


def test_poisson_inverts_stiffness(perturbed, rng):
    cache = build_geometry(perturbed)
    w = rng.standard_normal(cache.n_vertices)
    w -= (cache.vertex_area @ w) / cache.total_area
    u = solve_poisson(cache, -(cache.stiffness @ w))
    np.testing.assert_allclose(u, w, atol=1e-8)


def test_poisson_solutions_are_mean_free(perturbed):
    cache = build_geometry(perturbed)
    res = adc_matrix(perturbed, cache)
    means = cache.vertex_area @ res.solutions
    assert np.abs(means).max() < 1e-10


def test_cylinder_cell_solution_cancels_cross_direction(cylinder):
    cache = build_geometry(cylinder)
    y = cylinder.vertices[:, 1]
    u = solve_poisson(cache, divergence_vector(cylinder, cache, [0, 1, 0]))
    assert np.linalg.norm(u + y) / np.linalg.norm(y) < 1e-2


def test_solver_reuses_factorisation(perturbed):
    cache = build_geometry(perturbed)
    solver = PoissonSolver(cache)
    a = adc_matrix(perturbed, cache, solver=solver).kA
    b = adc_matrix(perturbed, cache, solver=solver).kA
    np.testing.assert_array_equal(a, b)


# ----------------------------------------------------------------- ADC matrix
def test_plane_exact():
    start = time.perf_counter()
    kA = adc_matrix(plane_mesh(64), kappa=2.5).kA
    assert time.perf_counter() - start < 1.0
    np.testing.assert_allclose(kA, np.diag([2.5, 2.5, 0.0]), atol=1e-10, rtol=0)


def test_tilted_plane_height_does_not_matter():
    a = adc_matrix(plane_mesh(16, height=0.3)).kA
    np.testing.assert_allclose(a, np.diag([1.0, 1.0, 0.0]), atol=1e-12)


def test_cylinder_axial(cylinder):
    kA = adc_matrix(cylinder).kA
    assert abs(kA[0, 0] - 1.0) < 1e-3
    assert abs(kA[1, 1]) < 2e-3 and abs(kA[2, 2]) < 2e-3


def test_schwarz_cubic_symmetry(schwarz_raw):
    kA = adc_matrix(schwarz_raw).kA
    diag = np.diag(kA)
    assert np.ptp(diag) < 5e-3
    assert np.abs(kA - np.diag(diag)).max() < 5e-3
    assert 0.6 < aac(kA) <= 2 / 3


def test_normal_covariance_has_unit_trace(perturbed):
    cache = build_geometry(perturbed)
    assert abs(np.trace(cache.normal_covariance()) - 1.0) < 1e-12


def test_eigenvalues_within_zero_and_kappa(perturbed):
    kA = adc_matrix(perturbed, kappa=1.7).kA
    np.testing.assert_allclose(kA, kA.T, atol=1e-12)
    lam = np.linalg.eigvalsh(kA)
    assert lam.min() >= -1e-10 and lam.max() <= 1.7 + 1e-10
    assert aac(kA) <= 2 * 1.7 / 3 + 1e-12


def test_directional_below_bound(perturbed, rng):
    cache = build_geometry(perturbed)
    kA = adc_matrix(perturbed, cache).kA
    for p in _unit_vectors(rng, 200):
        assert adc_directional(kA, p) <= upper_bound_directional(perturbed, cache, 1.0, p) + 1e-8


def test_cubic_bound_is_isotropic(schwarz_raw, rng):
    cache = build_geometry(schwarz_raw)
    bounds = [upper_bound_directional(schwarz_raw, cache, 1.0, p) for p in _unit_vectors(rng, 20)]
    assert np.ptp(bounds) < 1e-2
    assert abs(np.mean(bounds) - 2 / 3) < 1e-2


def test_energy_form_matches_assembly(perturbed):
    cache = build_geometry(perturbed)
    kA = adc_matrix(perturbed, cache).kA
    for p in (np.eye(3).tolist() + [[1, 1, 0]]):
        p = np.array(p, dtype=float) / np.linalg.norm(p)
        assert abs(energy_form_adc(perturbed, cache, 1.0, p) - p @ kA @ p) < 1e-10


def test_directional_is_quadratic_form(perturbed):
    kA = adc_matrix(perturbed).kA
    p = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    expected = 0.5 * (kA[0, 0] + kA[1, 1]) + kA[0, 1]
    assert abs(adc_directional(kA, p) - expected) < 1e-14


def test_evaluate_dictionary(plane):
    res, out = evaluate(plane)
    assert set(out) >= {"kA", "aac", "boundsAtAxes", "area", "euler", "solverResiduals"}
    assert out["euler"] == 0
    assert out["boundsAtAxes"] == pytest.approx([1.0, 1.0, 0.0], abs=1e-12)
    assert max(out["solverResiduals"]) < 1e-10


# ------------------------------------------------------------------ HS bound
@pytest.mark.parametrize("rho,expected", [(0.0, 0.0), (1.0, 1.0), (0.5, 0.4)])
def test_hs_bound_values(rho, expected):
    assert hs_bound(rho) == pytest.approx(expected)


def test_hs_bound_scales_with_kappa():
    assert hs_bound(0.2, 3.0) == pytest.approx(3.0 * hs_bound(0.2))


@pytest.mark.parametrize("rho", [-0.1, 1.5])
def test_hs_bound_rejects_bad_fraction(rho):
    with pytest.raises(ValueError):
        hs_bound(rho)

import numpy as np
import pytest

from shelladc.adc import adc_matrix
from shelladc.mesh import MeshError, euler_characteristic, validate
from shelladc.surfgen import (ImplicitSpec, PerturbSpec, generate_implicit, implicit_function,
                              perturb, plane_mesh, project_to_level_set, random_field)


def test_plane_area_and_topology():
    mesh = plane_mesh(16)
    validate(mesh)
    assert mesh.total_area() == pytest.approx(4.0)
    assert euler_characteristic(mesh) == 0
    assert np.all(mesh.vertices[:, 2] == 0)


@pytest.mark.parametrize("kind,euler", [("schwarz-p", -4), ("gyroid", -8), ("diamond", -16),
                                        ("iwp", -12)])
def test_tpms_topology(kind, euler):
    mesh = generate_implicit(ImplicitSpec(kind, resolution=32))
    validate(mesh)
    assert euler_characteristic(mesh) == euler


def test_gyroid_aac_close_to_bound():
    aac = adc_matrix(generate_implicit(ImplicitSpec("gyroid", resolution=64))).aac
    assert 0.66 <= aac <= 2 / 3


def test_schwarz_level_set_vertices_on_surface(schwarz_raw):
    f = implicit_function("schwarz-p")
    assert np.abs(f(*schwarz_raw.vertices.T)).max() < 0.05


def test_empty_level_set_raises():
    with pytest.raises(MeshError):
        generate_implicit(ImplicitSpec("schwarz-p", level=5.0, resolution=32))


@pytest.mark.parametrize("kw", [dict(kind="sphere"), dict(resolution=8), dict(kind="custom")])
def test_bad_implicit_spec(kw):
    with pytest.raises(ValueError):
        ImplicitSpec(**kw)


@pytest.mark.parametrize("kw", [dict(strength=-1.0), dict(cutoff=0)])
def test_bad_perturb_spec(kw):
    with pytest.raises(ValueError):
        PerturbSpec(**kw)


def test_zero_strength_is_identity(schwarz):
    out = perturb(schwarz, PerturbSpec(0.0, seed=7))
    np.testing.assert_array_equal(out.vertices, schwarz.vertices)
    np.testing.assert_array_equal(out.faces, schwarz.faces)


def test_perturb_is_deterministic(schwarz):
    a = perturb(schwarz, PerturbSpec(0.1, seed=11))
    b = perturb(schwarz, PerturbSpec(0.1, seed=11))
    c = perturb(schwarz, PerturbSpec(0.1, seed=12))
    np.testing.assert_array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, c.vertices)


def test_random_field_is_periodic_and_scaled():
    field = random_field(PerturbSpec(0.2, cutoff=2, seed=4))
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (4000, 3))
    np.testing.assert_allclose(field(x), field(x + 2.0 * rng.integers(-2, 3, x.shape)), atol=1e-12)
    # expected mean square strength^2 / 2, averaged over seeds
    ms = np.mean([np.mean(random_field(PerturbSpec(0.2, seed=s))(x) ** 2) for s in range(40)])
    assert ms == pytest.approx(0.02, rel=0.3)


def test_median_aac_decreases_with_strength():
    base = generate_implicit(ImplicitSpec("gyroid", resolution=32))
    medians = []
    for s in (0.0, 0.1, 0.2, 0.3):
        vals = [adc_matrix(perturb(base, PerturbSpec(s, seed=k))).aac for k in range(20)]
        medians.append(np.median(vals))
        assert max(vals) <= 2 / 3 + 1e-3
    assert all(b <= a + 1e-12 for a, b in zip(medians, medians[1:]))


def test_projection_onto_perturbed_level_set(schwarz_raw):
    f = implicit_function("schwarz-p", 0.2, seed=1)
    mesh = project_to_level_set(schwarz_raw, f)
    validate(mesh)
    assert np.abs(f(*mesh.vertices.T)).max() < 1e-8

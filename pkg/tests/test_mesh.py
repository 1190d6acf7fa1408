import json

import numpy as np
import pytest

from shelladc.geometry import build_geometry
from shelladc.mesh import (MeshError, PeriodicSurfaceMesh, edge_vectors, euler_characteristic,
                           load_mesh, rewrap, save_mesh, shell_volume, validate)
from shelladc.revolve import cylinder_mesh
from shelladc.surfgen import ImplicitSpec, generate_implicit, plane_mesh


def _write(tmp_path, data, name="m.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_round_trip_small_torus(tmp_path):
    mesh = plane_mesh(2)
    path = tmp_path / "p.json"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert back.n_vertices == 4 and back.n_faces == 8
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.shifts, mesh.shifts)


def test_round_trip_bit_exact(tmp_path, perturbed):
    path = tmp_path / "q.json"
    save_mesh(perturbed, path)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, perturbed.vertices)
    assert np.array_equal(back.faces, perturbed.faces)
    save_mesh(back, tmp_path / "q2.json")
    assert (tmp_path / "q2.json").read_bytes() == path.read_bytes()


def test_non_manifold_edge_rejected(tmp_path):
    data = plane_mesh(3).to_dict()
    data["faces"].append(list(data["faces"][0]))
    data["shifts"].append(data["shifts"][0])
    with pytest.raises(MeshError) as err:
        load_mesh(_write(tmp_path, data))
    assert err.value.kind == "non-manifold"


def test_wrap_inconsistency_rejected(tmp_path):
    data = plane_mesh(3).to_dict()
    # a face that crosses the seam, with one corner's shift dropped
    f = next(i for i, s in enumerate(data["shifts"]) if any(any(c) for c in s))
    k = next(k for k in range(3) if any(data["shifts"][f][k]))
    data["shifts"][f][k] = [0, 0, 0]
    with pytest.raises(MeshError) as err:
        load_mesh(_write(tmp_path, data))
    assert err.value.kind == "wrap"
    assert err.value.index is not None


def test_parse_failure(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(MeshError) as err:
        load_mesh(path)
    assert err.value.kind == "parse"


def test_nonzero_first_shift_rejected(tmp_path):
    data = plane_mesh(3).to_dict()
    data["shifts"][0][0] = [1, 0, 0]
    with pytest.raises(MeshError):
        load_mesh(_write(tmp_path, data))


def test_edges_coincide_after_lattice_translation(perturbed):
    topo = perturbed.edge_topology()
    he = perturbed.halfedge_vectors()
    twin = topo["twin"]
    np.testing.assert_allclose(he, -he[twin], atol=1e-12, rtol=0)
    assert np.all(topo["edge_count"] == 2)


@pytest.mark.parametrize("maker,chi", [
    (lambda: plane_mesh(16), 0),
    (lambda: cylinder_mesh(0.3, 16, 16), 0),
    (lambda: generate_implicit(ImplicitSpec("schwarz-p", resolution=64)), -4),
])
def test_euler_characteristic(maker, chi):
    assert euler_characteristic(maker()) == chi


def test_shell_volume_plane():
    vol, rho = shell_volume(plane_mesh(8), 0.1)
    assert vol == pytest.approx(0.8, abs=1e-12)
    assert rho == pytest.approx(0.1, abs=1e-12)


def test_shell_volume_with_genus(schwarz_raw):
    area, chi, eps = schwarz_raw.total_area(), euler_characteristic(schwarz_raw), 0.1
    vol, _ = shell_volume(schwarz_raw, eps)
    assert vol == pytest.approx(2 * eps * area + 4 * np.pi / 3 * eps**3 * chi, rel=1e-14)
    assert 0.8 - 4 * np.pi / 3 * 0.004 == pytest.approx(0.783245, abs=1e-6)


def test_shell_volume_leading_term(schwarz_raw):
    eps = 1e-6
    vol, _ = shell_volume(schwarz_raw, eps)
    assert vol / (2 * eps * schwarz_raw.total_area()) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        shell_volume(schwarz_raw, 0.0)


def test_stiffness_invariants(perturbed, rng):
    cache = build_geometry(perturbed)
    S = cache.stiffness
    assert abs(S - S.T).max() == 0.0
    assert np.abs(S @ np.ones(perturbed.n_vertices)).max() < 1e-12
    for _ in range(100):
        u = rng.standard_normal(perturbed.n_vertices)
        assert u @ (S @ u) >= -1e-10


def test_plane_geometry():
    mesh = plane_mesh(16)
    cache = build_geometry(mesh)
    assert cache.total_area == pytest.approx(4.0, abs=1e-12)
    np.testing.assert_allclose(np.abs(cache.face_normal), np.tile([0, 0, 1.0], (mesh.n_faces, 1)))
    assert np.abs(cache.face_sff).max() < 1e-10


def test_face_basis_orthonormal(perturbed):
    cache = build_geometry(perturbed)
    B = cache.face_basis
    gram = np.einsum("fai,fbi->fab", B, B)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-12)
    assert np.abs(np.einsum("fai,fi->fa", B, cache.face_normal)).max() < 1e-12
    np.testing.assert_allclose(cache.face_sff, np.transpose(cache.face_sff, (0, 2, 1)))


def test_cylinder_curvature_at_256():
    r = 0.3
    cache = build_geometry(cylinder_mesh(r, 256, 256))
    lam = np.linalg.eigvalsh(cache.face_sff)
    # outward normals: b = -dn has eigenvalues {-1/r, 0}
    assert np.abs(lam[:, 1]).max() < 0.01 / r
    assert np.abs(lam[:, 0] + 1 / r).max() < 0.01 / r
    np.testing.assert_allclose(cache.mean_curvature, -0.5 / r, rtol=0.01)


def test_zero_area_face_rejected():
    mesh = plane_mesh(4)
    v = mesh.vertices.copy()
    f = mesh.faces[0]
    v[f[2]] = v[f[0]] + 0.5 * (v[f[1]] - v[f[0]])
    bad = PeriodicSurfaceMesh(v, mesh.faces, mesh.shifts)
    with pytest.raises(MeshError):
        build_geometry(bad)


def test_rewrap_keeps_geometry(perturbed):
    moved = rewrap(perturbed, perturbed.vertices + np.array([0.7, -0.4, 1.3]))
    validate(moved)
    np.testing.assert_allclose(edge_vectors(moved)[0], edge_vectors(perturbed)[0], atol=1e-12)
    assert moved.vertices.min() >= -1 and moved.vertices.max() < 1

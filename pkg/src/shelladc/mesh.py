"""Periodic triangle meshes embedded in the flat 3-torus [-1, 1)^3.

A mesh stores wrapped vertex positions plus, for every face corner, an
integer lattice shift.  The world position of a corner is
``vertices[v] + period * shift``; the first corner of every face carries the
zero shift, so each face is embedded as a small triangle next to the
position of its first vertex.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

logger = logging.getLogger(__name__)

PERIOD = 2.0

# edge shift differences live in {-2..2}^3
_SHIFT_BASE = 5


class MeshError(ValueError):
    """Invalid mesh data.  ``kind`` names the violated invariant, ``index`` the
    offending element (face or vertex index) when one can be named."""

    def __init__(self, message, kind="invalid", index=None):
        super().__init__(message)
        self.kind = kind
        self.index = index


def wrap(points, period=PERIOD):
    """Map points into the fundamental cell [-period/2, period/2)."""
    half = 0.5 * period
    points = np.asarray(points, dtype=float)
    out = points - period * np.floor((points + half) / period)
    # floor rounding can leave a coordinate exactly at +half
    out[out >= half] -= period
    return out


@dataclass
class PeriodicSurfaceMesh:
    vertices: np.ndarray
    faces: np.ndarray
    shifts: np.ndarray
    period: float = PERIOD

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.shifts is None:
            self.shifts = np.zeros((len(self.faces), 3, 3), dtype=np.int64)
        self.shifts = np.ascontiguousarray(self.shifts, dtype=np.int64).reshape(-1, 3, 3)
        self.period = float(self.period)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def copy(self):
        return PeriodicSurfaceMesh(
            self.vertices.copy(), self.faces.copy(), self.shifts.copy(), self.period
        )

    def corner_positions(self):
        """World positions of all face corners, shape (F, 3, 3)."""
        return self.vertices[self.faces] + self.period * self.shifts

    def face_areas(self):
        w = self.corner_positions()
        cr = np.cross(w[:, 1] - w[:, 0], w[:, 2] - w[:, 0])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def total_area(self):
        return float(self.face_areas().sum())

    def halfedges(self):
        """Directed half-edges in face order.

        Returns ``(tail, head, delta)`` with ``delta`` the lattice offset of the
        head corner relative to the tail corner.  Half-edge ``3*f + k`` runs
        from corner ``k`` to corner ``k+1`` of face ``f``.
        """
        nxt = [1, 2, 0]
        tail = self.faces.reshape(-1)
        head = self.faces[:, nxt].reshape(-1)
        delta = (self.shifts[:, nxt] - self.shifts).reshape(-1, 3)
        return tail, head, delta

    def halfedge_vectors(self):
        """World-space vectors of all half-edges, shape (3F, 3)."""
        w = self.corner_positions()
        return (w[:, [1, 2, 0]] - w).reshape(-1, 3)

    def edge_topology(self):
        """Undirected edges and half-edge twins.

        Returns a dict with ``edges`` (E, 2) vertex pairs, ``edge_delta`` (E, 3)
        lattice offset of ``edges[:, 1]`` relative to ``edges[:, 0]``,
        ``he_edge`` (3F,) edge id of each half-edge, ``he_sign`` (+1 when the
        half-edge runs along the edge orientation) and ``twin`` (3F,) twin
        half-edge or -1.
        """
        tail, head, delta = self.halfedges()
        dirkey = _directed_keys(tail, head, delta, self.n_vertices)
        revkey = _directed_keys(head, tail, -delta, self.n_vertices)
        canon = np.minimum(dirkey, revkey)
        uniq, inv, counts = np.unique(canon, return_inverse=True, return_counts=True)
        order = np.argsort(dirkey, kind="stable")
        sorted_keys = dirkey[order]
        pos = np.searchsorted(sorted_keys, revkey)
        pos = np.clip(pos, 0, len(sorted_keys) - 1)
        found = sorted_keys[pos] == revkey
        twin = np.where(found, order[pos], -1)
        sign = np.where(dirkey == canon, 1, -1)
        first = np.zeros(len(uniq), dtype=np.int64)
        first[inv[::-1]] = np.arange(len(inv))[::-1]
        edges = np.stack([tail[first], head[first]], axis=1)
        edge_delta = delta[first]
        flip = sign[first] < 0
        edges[flip] = edges[flip][:, ::-1]
        edge_delta[flip] = -edge_delta[flip]
        return {
            "edges": edges,
            "edge_delta": edge_delta,
            "he_edge": inv,
            "he_sign": sign,
            "edge_count": counts,
            "twin": twin,
            "dirkey": dirkey,
        }

    def n_edges(self):
        tail, head, delta = self.halfedges()
        dirkey = _directed_keys(tail, head, delta, self.n_vertices)
        revkey = _directed_keys(head, tail, -delta, self.n_vertices)
        return len(np.unique(np.minimum(dirkey, revkey)))

    def edge_lengths(self):
        topo = self.edge_topology()
        return edge_vectors(self, topo)[1]

    def validate(self):
        validate(self)
        return self

    def to_dict(self):
        return {
            "period": self.period,
            "vertices": self.vertices.tolist(),
            "faces": self.faces.tolist(),
            "shifts": self.shifts.tolist(),
        }

    def save(self, path):
        save_mesh(self, path)


def _shift_code(delta):
    d = np.asarray(delta) + 2
    return (d[..., 0] * _SHIFT_BASE + d[..., 1]) * _SHIFT_BASE + d[..., 2]


def _directed_keys(tail, head, delta, n_vertices):
    nc = _SHIFT_BASE**3
    return (tail.astype(np.int64) * n_vertices + head) * nc + _shift_code(delta)


def edge_vectors(mesh, topo=None):
    """World vectors ``v1 - v0`` of every undirected edge and their lengths."""
    if topo is None:
        topo = mesh.edge_topology()
    e = topo["edges"]
    vec = mesh.vertices[e[:, 1]] + mesh.period * topo["edge_delta"] - mesh.vertices[e[:, 0]]
    return vec, np.linalg.norm(vec, axis=1)


def validate(mesh):
    """Check every mesh invariant; raise :class:`MeshError` on the first failure."""
    V, F = mesh.n_vertices, mesh.n_faces
    if mesh.period != PERIOD:
        raise MeshError(f"period must be {PERIOD}, got {mesh.period}", "period")
    if F == 0:
        raise MeshError("mesh has no faces", "empty")
    if not np.all(np.isfinite(mesh.vertices)):
        bad = int(np.flatnonzero(~np.isfinite(mesh.vertices).all(axis=1))[0])
        raise MeshError(f"vertex {bad} has a non-finite coordinate", "vertex", bad)
    half = 0.5 * mesh.period
    out = (mesh.vertices < -half) | (mesh.vertices >= half)
    if out.any():
        bad = int(np.flatnonzero(out.any(axis=1))[0])
        raise MeshError(f"vertex {bad} lies outside [-1, 1)^3", "vertex", bad)
    if mesh.faces.min() < 0 or mesh.faces.max() >= V:
        bad = int(np.flatnonzero((mesh.faces < 0).any(1) | (mesh.faces >= V).any(1))[0])
        raise MeshError(f"face {bad} references a missing vertex", "face-index", bad)
    f = mesh.faces
    rep = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
    if rep.any():
        bad = int(np.flatnonzero(rep)[0])
        raise MeshError(f"face {bad} repeats a vertex", "degenerate", bad)
    if np.abs(mesh.shifts).max() > 1:
        bad = int(np.flatnonzero((np.abs(mesh.shifts) > 1).any(axis=(1, 2)))[0])
        raise MeshError(f"face {bad} has a shift outside {{-1,0,1}}", "shift", bad)
    if np.any(mesh.shifts[:, 0] != 0):
        bad = int(np.flatnonzero((mesh.shifts[:, 0] != 0).any(axis=1))[0])
        raise MeshError(f"face {bad}: first corner shift must be zero", "shift", bad)
    used = np.zeros(V, dtype=bool)
    used[f.reshape(-1)] = True
    if not used.all():
        bad = int(np.flatnonzero(~used)[0])
        raise MeshError(f"vertex {bad} is not referenced by any face", "isolated", bad)

    tail, head, delta = mesh.halfedges()
    _check_wrap_consistency(tail, head, delta, V)

    topo = mesh.edge_topology()
    counts = topo["edge_count"]
    if np.any(counts > 2):
        e = int(np.flatnonzero(counts > 2)[0])
        face = int(np.flatnonzero(topo["he_edge"] == e)[0] // 3)
        raise MeshError(
            f"edge {tuple(topo['edges'][e])} is shared by {counts[e]} faces (face {face})",
            "non-manifold", face)
    if np.any(counts < 2):
        e = int(np.flatnonzero(counts < 2)[0])
        face = int(np.flatnonzero(topo["he_edge"] == e)[0] // 3)
        raise MeshError(f"edge {tuple(topo['edges'][e])} is a boundary edge (face {face})",
                        "boundary", face)
    if np.any(topo["twin"] < 0):
        he = int(np.flatnonzero(topo["twin"] < 0)[0])
        raise MeshError(f"face {he // 3}: neighbouring faces have inconsistent orientation",
                        "orientation", he // 3)

    # each vertex must have a single fan of faces
    nxt_corner = _vertex_fan_successor(mesh, topo["twin"])
    n_he = 3 * F
    g = sparse.coo_matrix((np.ones(n_he), (np.arange(n_he), nxt_corner)), shape=(n_he, n_he))
    n_orbits, _ = csgraph.connected_components(g, directed=True, connection="weak")
    if n_orbits != V:
        raise MeshError(f"{n_orbits - V} vertices have more than one face fan",
                        "non-manifold-vertex")

    areas = mesh.face_areas()
    if not np.all(areas > 0):
        bad = int(np.flatnonzero(~(areas > 0))[0])
        raise MeshError(f"face {bad} has zero area", "degenerate", bad)

    chi = V - len(counts) + F
    if chi % 2:
        raise MeshError(f"Euler characteristic {chi} is odd", "euler")


def _check_wrap_consistency(tail, head, delta, n_vertices):
    a = np.minimum(tail, head)
    b = np.maximum(tail, head)
    d = np.where((tail <= head)[:, None], delta, -delta)
    pair = a.astype(np.int64) * n_vertices + b
    pair_keys, pair_inv, pair_counts = np.unique(pair, return_inverse=True, return_counts=True)
    code = _shift_code(d)
    # a vertex pair used by exactly two half-edges must describe a single edge
    two = pair_counts[pair_inv] == 2
    if not two.any():
        return
    idx = np.flatnonzero(two)
    order = idx[np.argsort(pair_inv[idx], kind="stable")]
    c = code[order].reshape(-1, 2)
    bad = np.flatnonzero(c[:, 0] != c[:, 1])
    if len(bad):
        he = int(order[2 * bad[0]])
        raise MeshError(
            f"face {he // 3}: the two copies of edge ({tail[he]}, {head[he]}) differ by more "
            "than a single lattice translation", "wrap", he // 3)


def _vertex_fan_successor(mesh, twin):
    # corner (f, k) is identified with its outgoing half-edge 3f+k; the twin of
    # the incoming half-edge leaves the same vertex in the next face of the fan
    F = mesh.n_faces
    k = np.tile(np.arange(3), F)
    he_in = np.arange(3 * F) - k + (k + 2) % 3
    return twin[he_in]


def euler_characteristic(mesh):
    """V - E + F on the torus-identified complex."""
    return int(mesh.n_vertices - mesh.n_edges() + mesh.n_faces)


def shell_volume(mesh, epsilon):
    """Volume of the shell of half-thickness ``epsilon`` and its volume fraction.

    Uses the closed form ``2 eps |w| + (4 pi / 3) eps^3 chi``, which is exact
    for offsets that do not self-intersect.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    area = mesh.total_area()
    chi = euler_characteristic(mesh)
    vol = 2.0 * epsilon * area + (4.0 * np.pi / 3.0) * epsilon**3 * chi
    return vol, vol / mesh.period**3


def from_unwrapped(vertices, faces, corner_world, period=PERIOD):
    """Build a mesh from per-corner world positions.

    ``corner_world`` (F, 3, 3) gives the world position of every corner; the
    shifts are recovered against the wrapped ``vertices`` and normalised so
    the first corner of each face has zero shift.
    """
    vertices = wrap(vertices, period)
    faces = np.asarray(faces, dtype=np.int64)
    s = np.rint((corner_world - vertices[faces]) / period).astype(np.int64)
    s -= s[:, :1]
    return PeriodicSurfaceMesh(vertices, faces, s, period)


def rewrap(mesh, new_positions):
    """Move vertices to ``new_positions`` (possibly outside the cell).

    Positions are wrapped back into [-1, 1) and the corner shifts updated so
    every face keeps its world-space embedding.
    """
    p = mesh.period
    new_positions = np.asarray(new_positions, dtype=float)
    wrapped = wrap(new_positions, p)
    k = np.rint((new_positions - wrapped) / p).astype(np.int64)
    shifts = mesh.shifts + k[mesh.faces]
    shifts -= shifts[:, :1]
    return PeriodicSurfaceMesh(wrapped, mesh.faces.copy(), shifts, p)


def load_mesh(path, check=True):
    """Read a mesh from the JSON mesh format and validate it."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MeshError(f"cannot parse mesh file {path}: {exc}", "parse") from exc
    mesh = mesh_from_dict(data)
    if check:
        validate(mesh)
    return mesh


def mesh_from_dict(data):
    try:
        verts = np.asarray(data["vertices"], dtype=float).reshape(-1, 3)
        faces = np.asarray(data["faces"], dtype=np.int64).reshape(-1, 3)
        shifts = np.asarray(data["shifts"], dtype=np.int64).reshape(-1, 3, 3)
        period = float(data.get("period", PERIOD))
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"malformed mesh data: {exc}", "parse") from exc
    if len(shifts) != len(faces):
        raise MeshError("shifts and faces have different lengths", "parse")
    return PeriodicSurfaceMesh(verts, faces, shifts, period)


def save_mesh(mesh, path):
    # json uses repr() for floats, which round-trips doubles exactly
    with open(path, "w") as fh:
        json.dump(mesh.to_dict(), fh)

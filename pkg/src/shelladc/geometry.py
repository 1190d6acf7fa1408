"""Per-mesh geometric quantities: areas, normals, cotangent stiffness, mass
matrix and a per-face second fundamental form."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import MeshError

logger = logging.getLogger(__name__)


@dataclass
class GeometryCache:
    face_area: np.ndarray
    face_normal: np.ndarray
    vertex_normal: np.ndarray
    cot_weight: np.ndarray       # per undirected edge
    edges: np.ndarray            # (E, 2)
    edge_vector: np.ndarray      # (E, 3) world vector edges[:, 0] -> edges[:, 1]
    vertex_area: np.ndarray
    stiffness: sparse.csr_matrix
    mass: sparse.csr_matrix
    face_basis: np.ndarray       # (F, 2, 3), rows are orthonormal tangents
    face_sff: np.ndarray         # (F, 2, 2)
    corner_cot: np.ndarray       # (F, 3) cotangent of the angle at each corner
    corners: np.ndarray          # (F, 3, 3) world corner positions
    twin: np.ndarray             # (3F,) twin half-edge
    faces: np.ndarray

    @property
    def total_area(self):
        return float(self.face_area.sum())

    @property
    def n_vertices(self):
        return len(self.vertex_area)

    @property
    def mean_curvature(self):
        """Per-face mean curvature, half the trace of the second fundamental form."""
        return 0.5 * (self.face_sff[:, 0, 0] + self.face_sff[:, 1, 1])

    def normal_covariance(self):
        """Area-weighted average of ``n n^T`` over faces."""
        n = self.face_normal
        return np.einsum("f,fi,fj->ij", self.face_area, n, n) / self.total_area

    def dirichlet_energy(self, u):
        return float(u @ (self.stiffness @ u))

    def face_gradients(self, u):
        """Gradient of the piecewise-linear interpolant of ``u`` on every face.

        ``u`` may be (V,) or (V, k); the result is (F, 3) or (F, 3, k).
        """
        grad_phi = self.hat_gradients()
        vals = np.asarray(u)[self.faces]
        if vals.ndim == 2:
            return np.einsum("fkd,fk->fd", grad_phi, vals)
        return np.einsum("fkd,fkc->fdc", grad_phi, vals)

    def hat_gradients(self):
        """(F, 3, 3) gradients of the three hat functions of every face."""
        w = self.corners
        opp = w[:, [2, 0, 1]] - w[:, [1, 2, 0]]
        n = self.face_normal[:, None, :]
        return np.cross(n, opp) / (2.0 * self.face_area[:, None, None])



def build_geometry(mesh, clamp_cotangents=False):
    """Compute the :class:`GeometryCache` of a mesh.

    Cotangent weights of obtuse triangles are kept negative unless
    ``clamp_cotangents`` is set.  The second fundamental form of each face is
    fit by least squares to the differences of the angle-weighted vertex
    normals along the face's three edges, so that ``b = -dn`` in the face
    basis.  With this sign the trace is twice the mean curvature and a sphere
    with outward normals has negative mean curvature.
    """
    V, F = mesh.n_vertices, mesh.n_faces
    w = mesh.corner_positions()
    e01 = w[:, 1] - w[:, 0]
    e02 = w[:, 2] - w[:, 0]
    cr = np.cross(e01, e02)
    dbl = np.linalg.norm(cr, axis=1)
    if not np.all(dbl > 0):
        bad = int(np.flatnonzero(~(dbl > 0))[0])
        raise MeshError(f"face {bad} has zero area", "degenerate", bad)
    area = 0.5 * dbl
    fn = cr / dbl[:, None]

    # cot of the angle at corner k, between edges to the other two corners
    cots = np.empty((F, 3))
    angles = np.empty((F, 3))
    for k in range(3):
        a = w[:, (k + 1) % 3] - w[:, k]
        b = w[:, (k + 2) % 3] - w[:, k]
        dot = np.einsum("ij,ij->i", a, b)
        cots[:, k] = dot / dbl
        angles[:, k] = np.arctan2(dbl, dot)
    if not np.all(np.isfinite(cots)):
        bad = int(np.flatnonzero(~np.isfinite(cots).all(axis=1))[0])
        raise MeshError(f"face {bad} has a non-finite cotangent", "degenerate", bad)
    if clamp_cotangents:
        cots = np.maximum(cots, 0.0)

    topo = mesh.edge_topology()
    he_edge = topo["he_edge"]
    E = len(topo["edges"])
    # half-edge 3f+k is opposite corner k+2
    he_cot = cots[:, [2, 0, 1]].reshape(-1)
    cotw = 0.5 * np.bincount(he_edge, weights=he_cot, minlength=E)
    edges = topo["edges"]
    evec = mesh.vertices[edges[:, 1]] + mesh.period * topo["edge_delta"] - mesh.vertices[edges[:, 0]]

    i, j = edges[:, 0], edges[:, 1]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([-cotw, -cotw, cotw, cotw])
    S = sparse.coo_matrix((vals, (rows, cols)), shape=(V, V)).tocsr()
    S.sum_duplicates()

    varea = np.bincount(mesh.faces.reshape(-1), weights=np.repeat(area / 3.0, 3), minlength=V)
    M = sparse.diags(varea).tocsr()

    vn = np.zeros((V, 3))
    for k in range(3):
        np.add.at(vn, mesh.faces[:, k], fn * angles[:, k:k + 1])
    vn /= np.linalg.norm(vn, axis=1)[:, None]

    g1 = e01 / np.linalg.norm(e01, axis=1)[:, None]
    g2 = np.cross(fn, g1)
    basis = np.stack([g1, g2], axis=1)

    cache = GeometryCache(
        face_area=area, face_normal=fn, vertex_normal=vn, cot_weight=cotw,
        edges=edges, edge_vector=evec, vertex_area=varea, stiffness=S, mass=M,
        face_basis=basis, face_sff=None, corner_cot=cots, corners=w, twin=topo["twin"],
        faces=mesh.faces,
    )
    cache.face_sff = _face_sff(w, vn, mesh.faces, basis)
    return cache


def _face_sff(w, vn, faces, basis):
    # Rusinkiewicz-style fit: along each edge the change of vertex normal is
    # -b applied to the edge vector, both expressed in the face basis
    F = len(w)
    nxt = [1, 2, 0]
    e = w[:, nxt] - w                       # (F, 3, 3) edge vectors
    dn = vn[faces[:, nxt]] - vn[faces]      # (F, 3, 3)
    d = np.einsum("fij,fkj->fki", basis, e)     # (F, 3, 2)
    m = np.einsum("fij,fkj->fki", basis, dn)
    A = np.zeros((F, 3, 2, 3))
    A[:, :, 0, 0] = -d[:, :, 0]
    A[:, :, 0, 1] = -d[:, :, 1]
    A[:, :, 1, 1] = -d[:, :, 0]
    A[:, :, 1, 2] = -d[:, :, 1]
    A = A.reshape(F, 6, 3)
    rhs = m.reshape(F, 6)
    AtA = np.einsum("fki,fkj->fij", A, A)
    Atb = np.einsum("fki,fk->fi", A, rhs)
    x = np.linalg.solve(AtA, Atb[..., None])[..., 0]
    b = np.empty((F, 2, 2))
    b[:, 0, 0] = x[:, 0]
    b[:, 0, 1] = b[:, 1, 0] = x[:, 1]
    b[:, 1, 1] = x[:, 2]
    return b

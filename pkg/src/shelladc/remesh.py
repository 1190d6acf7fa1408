"""Isotropic remeshing of periodic triangle meshes.

Local operations work in the unfolded frame of one vertex: every face around
that vertex is translated so the vertex sits at its stored position, which
puts the whole 1-ring in a single world frame.  New faces are emitted from
world positions and their lattice shifts recovered from the wrapped vertex
positions.
"""

import logging
import math
from collections import defaultdict

import numpy as np

from .mesh import MeshError, PeriodicSurfaceMesh, edge_vectors, from_unwrapped, validate, wrap

logger = logging.getLogger(__name__)


class MeshEditor:
    """Mutable face-list view of a :class:`PeriodicSurfaceMesh`."""

    def __init__(self, mesh):
        self.period = mesh.period
        self.pos = [p for p in mesh.vertices.copy()]
        self.alive = [True] * mesh.n_vertices
        self.faces = {}
        self.shift = {}
        self.vfaces = defaultdict(set)
        for f, (tri, s) in enumerate(zip(mesh.faces.tolist(), mesh.shifts)):
            self.faces[f] = tri
            self.shift[f] = s.copy()
            for v in tri:
                self.vfaces[v].add(f)
        self._next_face = mesh.n_faces

    # ------------------------------------------------------------------ frames
    def corner_world(self, f, v):
        """World positions of the corners of face ``f`` in the frame of vertex ``v``."""
        tri = self.faces[f]
        s = self.shift[f]
        k = tri.index(v)
        rel = s - s[k]
        return [self.pos[u] + self.period * rel[i] for i, u in enumerate(tri)]

    def ring(self, v):
        """Neighbours of ``v`` as ``{(u, offset): world}`` in the frame of ``v``."""
        out = {}
        for f in self.vfaces[v]:
            tri = self.faces[f]
            s = self.shift[f]
            k = tri.index(v)
            for i, u in enumerate(tri):
                if i == k:
                    continue
                rel = tuple((s[i] - s[k]).tolist())
                out[(u, rel)] = self.pos[u] + self.period * np.array(rel)
        return out

    def valence(self, v):
        return len(self.vfaces[v])

    def edge_faces(self, a, b, rel):
        """Faces holding half-edge a->b (offset ``rel``) and its twin."""
        fwd = bwd = None
        for f in self.vfaces[a] & self.vfaces[b]:
            tri = self.faces[f]
            s = self.shift[f]
            ka, kb = tri.index(a), tri.index(b)
            if tuple((s[kb] - s[ka]).tolist()) != rel:
                continue
            if (ka + 1) % 3 == kb:
                fwd = f
            else:
                bwd = f
        return fwd, bwd

    def edges(self):
        """Canonical undirected edges ``(a, b, rel)`` with ``a < b``."""
        seen = set()
        for f, tri in self.faces.items():
            s = self.shift[f]
            for k in range(3):
                a, b = tri[k], tri[(k + 1) % 3]
                rel = s[(k + 1) % 3] - s[k]
                if a > b:
                    a, b, rel = b, a, -rel
                seen.add((a, b, tuple(rel.tolist())))
        return seen

    # -------------------------------------------------------------- primitives
    def _shifts_for(self, tri, world):
        s = np.rint((np.array(world) - np.array([self.pos[u] for u in tri])) / self.period)
        s = s.astype(np.int64)
        s -= s[0]
        if np.abs(s).max() > 1:
            return None
        return s

    def add_vertex(self, world):
        p = wrap(np.asarray(world, dtype=float)[None])[0]
        self.pos.append(p)
        self.alive.append(True)
        return len(self.pos) - 1

    def remove_face(self, f):
        for v in self.faces[f]:
            self.vfaces[v].discard(f)
        del self.faces[f]
        del self.shift[f]

    def add_face(self, tri, shifts):
        f = self._next_face
        self._next_face += 1
        self.faces[f] = list(tri)
        self.shift[f] = shifts
        for v in tri:
            self.vfaces[v].add(f)
        return f

    def replace(self, remove, new_faces):
        """Atomically swap faces; ``new_faces`` holds ``(tri, world)`` pairs.

        Returns False (and changes nothing) when a new face would need a
        lattice shift outside {-1, 0, 1}.
        """
        shifts = []
        for tri, world in new_faces:
            s = self._shifts_for(tri, world)
            if s is None:
                return False
            shifts.append(s)
        for f in remove:
            self.remove_face(f)
        for (tri, _), s in zip(new_faces, shifts):
            self.add_face(tri, s)
        return True

    def move_vertex(self, v, world):
        """Move ``v`` to ``world`` given in its own frame."""
        world = np.asarray(world, dtype=float)
        p = wrap(world[None], self.period)[0]
        k = np.rint((world - p) / self.period).astype(np.int64)
        self.pos[v] = p
        if not k.any():
            return
        for f in self.vfaces[v]:
            tri = self.faces[f]
            s = self.shift[f]
            s[tri.index(v)] += k
            s -= s[0].copy()

    # -------------------------------------------------------------- operations
    def split(self, a, b, rel):
        f, g = self.edge_faces(a, b, rel)
        if f is None or g is None:
            return None
        wf = dict(zip(self.faces[f], self.corner_world(f, a)))
        wg = dict(zip(self.faces[g], self.corner_world(g, a)))
        c = _third(self.faces[f], a, b)
        d = _third(self.faces[g], a, b)
        Wa, Wb, Wc, Wd = wf[a], wf[b], wf[c], wg[d]
        Wm = 0.5 * (Wa + Wb)
        m = self.add_vertex(Wm)
        ok = self.replace([f, g], [
            ((a, m, c), (Wa, Wm, Wc)), ((m, b, c), (Wm, Wb, Wc)),
            ((b, m, d), (Wb, Wm, Wd)), ((m, a, d), (Wm, Wa, Wd)),
        ])
        if not ok:
            self.pos.pop()
            self.alive.pop()
            return None
        return m

    def flip(self, a, b, rel, max_length=None, min_dot=0.9):
        f, g = self.edge_faces(a, b, rel)
        if f is None or g is None:
            return False
        wf = dict(zip(self.faces[f], self.corner_world(f, a)))
        wg = dict(zip(self.faces[g], self.corner_world(g, a)))
        c = _third(self.faces[f], a, b)
        d = _third(self.faces[g], a, b)
        if c == d:
            return False
        Wa, Wb, Wc, Wd = wf[a], wf[b], wf[c], wg[d]
        n_old = [_normal(Wa, Wb, Wc), _normal(Wb, Wa, Wd)]
        if n_old[0] is None or n_old[1] is None or n_old[0] @ n_old[1] < min_dot:
            return False
        n1, n2 = _normal(Wa, Wd, Wc), _normal(Wd, Wb, Wc)
        if n1 is None or n2 is None:
            return False
        avg = n_old[0] + n_old[1]
        if n1 @ avg <= 0 or n2 @ avg <= 0 or n1 @ n2 < min_dot:
            return False
        if max_length is not None and np.linalg.norm(Wd - Wc) > max_length:
            return False
        # the new diagonal must not duplicate an existing edge
        key = (d, tuple(np.rint((Wd - self.pos[d] - (Wc - self.pos[c])) / self.period)
                        .astype(int).tolist()))
        if key in self.ring(c):
            return False
        return self.replace([f, g], [((a, d, c), (Wa, Wd, Wc)), ((d, b, c), (Wd, Wb, Wc))])

    def collapse(self, a, b, rel, max_length=None, min_dot=0.5):
        """Merge ``a`` into ``b`` at the edge midpoint."""
        f, g = self.edge_faces(a, b, rel)
        if f is None or g is None:
            return False
        c = _third(self.faces[f], a, b)
        d = _third(self.faces[g], a, b)
        if c == d or self.valence(c) <= 3 or self.valence(d) <= 3:
            return False
        if self.valence(a) <= 3 or self.valence(b) <= 3:
            return False
        ring_a = self.ring(a)
        Wb = self.pos[b] + self.period * np.array(rel)
        # frame translation from b's frame into a's frame
        T = Wb - self.pos[b]
        ring_b = {(u, tuple(np.rint((w + T - self.pos[u]) / self.period).astype(int).tolist())): w + T
                  for (u, _), w in self.ring(b).items()}
        common = set(ring_a) & set(ring_b)
        if len(common) != 2 or {k[0] for k in common} != {c, d}:
            return False
        Wm = 0.5 * (self.pos[a] + Wb)
        if max_length is not None:
            for key, w in list(ring_a.items()) + list(ring_b.items()):
                if key[0] in (a, b):
                    continue
                if np.linalg.norm(w - Wm) > max_length:
                    return False
        # new faces in a's frame, with the merged vertex at the midpoint
        remove, new = [], []
        for h in (self.vfaces[a] | self.vfaces[b]) - {f, g}:
            tri = self.faces[h]
            anchor = a if a in tri else b
            world = self.corner_world(h, anchor)
            if anchor == b:
                world = [w + T for w in world]
            old_n = _normal(*world)
            new_tri = [b if u == a else u for u in tri]
            new_world = [Wm if u in (a, b) else w for u, w in zip(tri, world)]
            new_n = _normal(*new_world)
            if old_n is None or new_n is None or old_n @ new_n < min_dot:
                return False
            remove.append(h)
            new.append((new_tri, new_world))
        # b moves to the midpoint; its stored position must be the wrapped one
        old_pos_b = self.pos[b]
        self.pos[b] = wrap(Wm[None], self.period)[0]
        if not self.replace(remove + [f, g], new):
            self.pos[b] = old_pos_b
            return False
        self.alive[a] = False
        self.vfaces.pop(a, None)
        return True

    # ------------------------------------------------------------------ output
    def to_mesh(self):
        used = sorted({v for tri in self.faces.values() for v in tri})
        remap = {v: i for i, v in enumerate(used)}
        verts = np.array([self.pos[v] for v in used])
        fids = sorted(self.faces)
        faces = np.array([[remap[v] for v in self.faces[f]] for f in fids], dtype=np.int64)
        shifts = np.array([self.shift[f] for f in fids], dtype=np.int64)
        return PeriodicSurfaceMesh(verts, faces, shifts, self.period)


def _third(tri, a, b):
    for u in tri:
        if u != a and u != b:
            return u
    raise MeshError("face does not have three distinct vertices")


def _normal(p0, p1, p2):
    # plain arithmetic: numpy call overhead dominates for single 3-vectors
    ax, ay, az = p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]
    bx, by, bz = p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]
    nx, ny, nz = ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx
    ln = math.sqrt(nx * nx + ny * ny + nz * nz)
    if ln < 1e-14:
        return None
    return np.array([nx / ln, ny / ln, nz / ln])


def _edge_length(ed, a, b, rel):
    pa, pb, P = ed.pos[a], ed.pos[b], ed.period
    return math.sqrt(sum((pb[k] + P * rel[k] - pa[k]) ** 2 for k in range(3)))


def split_long_edges(ed, high):
    count = 0
    todo = sorted(ed.edges(), key=lambda e: -_edge_length(ed, *e))
    for a, b, rel in todo:
        if _edge_length(ed, a, b, rel) > high and ed.split(a, b, rel) is not None:
            count += 1
    return count


def collapse_short_edges(ed, low, high):
    count = 0
    todo = sorted(ed.edges(), key=lambda e: _edge_length(ed, *e))
    for a, b, rel in todo:
        if not (ed.alive[a] and ed.alive[b]):
            continue
        if _edge_length(ed, a, b, rel) >= low:
            continue
        if ed.collapse(a, b, rel, max_length=high):
            count += 1
        elif ed.collapse(b, a, tuple(-np.array(rel)), max_length=high):
            count += 1
    return count


def equalize_valences(ed, high=None, target=6):
    count = 0
    for a, b, rel in list(ed.edges()):
        if not (ed.alive[a] and ed.alive[b]):
            continue
        f, g = ed.edge_faces(a, b, rel)
        if f is None or g is None:
            continue
        c = _third(ed.faces[f], a, b)
        d = _third(ed.faces[g], a, b)
        if c == d:
            continue
        va, vb, vc, vd = (ed.valence(v) for v in (a, b, c, d))
        if va <= 3 or vb <= 3:
            continue
        before = sum((v - target) ** 2 for v in (va, vb, vc, vd))
        after = sum((v - target) ** 2 for v in (va - 1, vb - 1, vc + 1, vd + 1))
        if after < before and ed.flip(a, b, rel, max_length=high):
            count += 1
    return count


def tangential_relaxation(mesh, weight=0.5):
    """Move vertices towards their 1-ring centroid within the tangent plane."""
    from .geometry import build_geometry

    cache = build_geometry(mesh)
    V = mesh.n_vertices
    e = cache.edges
    vec = cache.edge_vector
    acc = np.zeros((V, 3))
    np.add.at(acc, e[:, 0], vec)
    np.add.at(acc, e[:, 1], -vec)
    deg = np.bincount(e.reshape(-1), minlength=V).astype(float)
    q = acc / deg[:, None]
    n = cache.vertex_normal
    q -= np.einsum("ij,ij->i", q, n)[:, None] * n
    from .mesh import rewrap
    return rewrap(mesh, mesh.vertices + weight * q)


def remesh(mesh, target_length, iterations=4, max_rounds=3, relax_weight=0.5):
    """Split / collapse / flip / relax passes towards ``target_length``.

    Rounds of passes repeat (at most ``max_rounds``) until every edge length
    lies within [0.5, 1.5] x target.  Operations that would break the
    manifold structure are skipped individually.
    """
    if target_length <= 0:
        raise ValueError("target edge length must be positive")
    high = 4.0 / 3.0 * target_length
    low = 4.0 / 5.0 * target_length
    out = mesh
    for _ in range(max_rounds):
        for _ in range(iterations):
            ed = MeshEditor(out)
            n_split = split_long_edges(ed, high)
            n_col = collapse_short_edges(ed, low, high)
            n_flip = equalize_valences(ed, high)
            out = ed.to_mesh()
            out = tangential_relaxation(out, relax_weight)
            logger.debug("remesh pass: %d splits, %d collapses, %d flips", n_split, n_col, n_flip)
        lengths = edge_vectors(out)[1]
        if lengths.min() >= 0.5 * target_length and lengths.max() <= 1.5 * target_length:
            break
    validate(out)
    return out


def needs_remesh(mesh, target_length, band=(0.5, 1.5)):
    lengths = edge_vectors(mesh)[1]
    return bool(lengths.min() < band[0] * target_length or lengths.max() > band[1] * target_length)


def subdivide(mesh):
    """Split every face into four at its edge midpoints."""
    topo = mesh.edge_topology()
    V = mesh.n_vertices
    F = mesh.n_faces
    w = mesh.corner_positions()
    mid = 0.5 * (w + w[:, [1, 2, 0]])            # midpoint of half-edge k -> k+1
    he_edge = topo["he_edge"].reshape(F, 3)
    E = len(topo["edges"])
    verts = np.concatenate([mesh.vertices, np.empty((E, 3))])
    verts[V + he_edge.ravel()] = wrap(mid.reshape(-1, 3), mesh.period)
    a, b, c = mesh.faces.T
    m0, m1, m2 = (V + he_edge[:, k] for k in range(3))
    faces = np.concatenate([
        np.stack([a, m0, m2], 1), np.stack([m0, b, m1], 1),
        np.stack([m2, m1, c], 1), np.stack([m0, m1, m2], 1)])
    W0, W1, W2 = w[:, 0], w[:, 1], w[:, 2]
    M0, M1, M2 = mid[:, 0], mid[:, 1], mid[:, 2]
    world = np.concatenate([
        np.stack([W0, M0, M2], 1), np.stack([M0, W1, M1], 1),
        np.stack([M2, M1, W2], 1), np.stack([M0, M1, M2], 1)])
    return from_unwrapped(verts, faces, world, mesh.period)

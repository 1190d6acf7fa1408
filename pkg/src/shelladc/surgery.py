"""Detection and excision of thin necks.

A neck is flagged where the largest principal curvature exceeds
``0.8 / threshold``.  The geodesic ball of radius ``pi * threshold`` around
the flagged vertex wraps once around a neck thinner than ``threshold``, so
when that ball is a topological annulus it is cut out and both boundary loops
are capped with a fan.  Every accepted surgery raises the Euler
characteristic by two.
"""

import logging

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .geometry import build_geometry
from .mesh import MeshError, euler_characteristic, validate
from .remesh import MeshEditor

logger = logging.getLogger(__name__)


def principal_curvature_magnitude(mesh, cache=None):
    """Per-vertex maximum of ``|k1|, |k2|`` over the incident faces."""
    cache = cache or build_geometry(mesh)
    eig = np.abs(np.linalg.eigvalsh(cache.face_sff)).max(axis=1)
    out = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.maximum.at(out, mesh.faces[:, k], eig)
    return out


def _edge_graph(cache, n):
    e = cache.edges
    length = np.linalg.norm(cache.edge_vector, axis=1)
    return sparse.coo_matrix((length, (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()


def _boundary_loops(ed, region):
    """Ordered boundary loops of the faces outside ``region``.

    Each loop is a list of ``(a, b, rel)`` half-edges of surviving faces
    whose twin lies in the region.  Returns None if the boundary is not a
    disjoint union of simple loops.
    """
    region_he = set()
    for f in region:
        tri, s = ed.faces[f], ed.shift[f]
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            region_he.add((a, b, tuple((s[(k + 1) % 3] - s[k]).tolist())))
    out_by_tail = {}
    for f in {g for v in {u for h in region for u in ed.faces[h]} for g in ed.vfaces[v]} - set(region):
        tri, s = ed.faces[f], ed.shift[f]
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            rel = tuple((s[(k + 1) % 3] - s[k]).tolist())
            if (b, a, tuple(-x for x in rel)) in region_he:
                if a in out_by_tail:
                    return None
                out_by_tail[a] = (a, b, rel)
    loops = []
    while out_by_tail:
        start = next(iter(out_by_tail))
        loop, v = [], start
        while v in out_by_tail:
            he = out_by_tail.pop(v)
            loop.append(he)
            v = he[1]
        if v != start:
            return None
        loops.append(loop)
    return loops


def _region_euler(ed, region):
    verts, edges = set(), set()
    for f in region:
        tri, s = ed.faces[f], ed.shift[f]
        verts.update(tri)
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            rel = tuple((s[(k + 1) % 3] - s[k]).tolist())
            if a > b:
                a, b, rel = b, a, tuple(-x for x in rel)
            edges.add((a, b, rel))
    return len(verts) - len(edges) + len(region)


def _cap(ed, loop):
    """Faces filling ``loop`` with a fan around its centroid, or None."""
    P = ed.period
    world = [ed.pos[loop[0][0]].copy()]
    for a, b, rel in loop:
        world.append(world[-1] + ed.pos[b] + P * np.array(rel) - ed.pos[a])
    if np.linalg.norm(world[-1] - world[0]) > 1e-9:
        return None   # loop winds around the cell
    world = world[:-1]
    centre = np.mean(world, axis=0)
    return world, centre


def _try_neck(ed, graph_dist, v, radius):
    ball = set(np.flatnonzero(graph_dist <= radius).tolist())
    region = [f for f in set().union(*(ed.vfaces[u] for u in ball))
              if all(u in ball for u in ed.faces[f])]
    if not region:
        return False
    loops = _boundary_loops(ed, region)
    if loops is None or len(loops) != 2 or _region_euler(ed, region) != 0:
        return False
    caps = []
    for loop in loops:
        c = _cap(ed, loop)
        if c is None:
            return False
        caps.append((loop, c))
    for f in region:
        ed.remove_face(f)
    for loop, (world, centre) in caps:
        m = ed.add_vertex(centre)
        new = []
        for (a, b, _), wa, wb in zip(loop, world, world[1:] + world[:1]):
            new.append(((b, a, m), (wb, wa, centre)))
        if not ed.replace([], new):
            raise MeshError("cap face needs an out-of-range shift", "surgery")
    return True


def detect_and_surgery(mesh, neck_radius_threshold, max_operations=16):
    """Cut thin necks; returns ``(mesh, number_of_surgeries)``."""
    if neck_radius_threshold <= 0:
        raise ValueError("neck radius threshold must be positive")
    count = 0
    while count < max_operations:
        cache = build_geometry(mesh)
        curv = principal_curvature_magnitude(mesh, cache)
        cand = np.flatnonzero(curv > 0.8 / neck_radius_threshold)
        if len(cand) == 0:
            break
        cand = cand[np.argsort(-curv[cand])]
        graph = _edge_graph(cache, mesh.n_vertices)
        radius = np.pi * neck_radius_threshold
        chi = euler_characteristic(mesh)
        ed = MeshEditor(mesh)
        skip = np.zeros(mesh.n_vertices, dtype=bool)
        done = False
        for v in cand:
            if skip[v]:
                continue
            dist = csgraph.dijkstra(graph, directed=False, indices=int(v), limit=radius)
            try:
                ok = _try_neck(ed, dist, int(v), radius)
                out = ed.to_mesh() if ok else None
                if ok:
                    validate(out)
            except MeshError as exc:
                logger.debug("surgery at vertex %d rejected: %s", v, exc)
                ok = False
                ed = MeshEditor(mesh)
            if not ok or euler_characteristic(out) != chi + 2:
                if ok:
                    ed = MeshEditor(mesh)
                # nearby candidates see nearly the same ball
                skip |= dist <= 0.5 * radius
                continue
            logger.info("neck surgery at vertex %d", v)
            mesh = out
            count += 1
            done = True
            break
        if not done:
            break
    return mesh, count

"""Seed surfaces: planes, tubes, trigonometric TPMS approximants and random
normal perturbations."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree
from skimage import measure

from .geometry import build_geometry
from .mesh import PERIOD, MeshError, PeriodicSurfaceMesh, from_unwrapped, rewrap, validate, wrap

logger = logging.getLogger(__name__)


def _schwarz_p(x, y, z):
    return np.cos(x) + np.cos(y) + np.cos(z)


def _gyroid(x, y, z):
    return np.sin(x) * np.cos(y) + np.sin(y) * np.cos(z) + np.sin(z) * np.cos(x)


def _diamond(x, y, z):
    return (np.sin(x) * np.sin(y) * np.sin(z) + np.sin(x) * np.cos(y) * np.cos(z)
            + np.cos(x) * np.sin(y) * np.cos(z) + np.cos(x) * np.cos(y) * np.sin(z))


def _iwp(x, y, z):
    return (2.0 * (np.cos(x) * np.cos(y) + np.cos(y) * np.cos(z) + np.cos(z) * np.cos(x))
            - (np.cos(2 * x) + np.cos(2 * y) + np.cos(2 * z)))


# functions of (pi x, pi y, pi z), so every one has period 2
IMPLICIT_FUNCTIONS = {
    "schwarz-p": _schwarz_p,
    "gyroid": _gyroid,
    "diamond": _diamond,
    "iwp": _iwp,
}


@dataclass
class ImplicitSpec:
    kind: str = "schwarz-p"
    level: float = 0.0
    resolution: int = 64
    function: object = None      # callable of world coordinates for kind="custom"

    def __post_init__(self):
        if self.kind not in IMPLICIT_FUNCTIONS and self.kind not in ("plane", "custom"):
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if self.resolution < 32 and self.kind != "plane":
            raise ValueError("implicit resolution must be at least 32")
        if self.kind == "custom" and self.function is None:
            raise ValueError("custom kind needs a function")


def plane_mesh(resolution=64, height=0.0):
    """The plane ``z = height`` triangulated as an n x n periodic grid."""
    n = int(resolution)
    if n < 2:
        raise ValueError("plane resolution must be at least 2")
    xs = -1.0 + PERIOD * np.arange(n) / n
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), np.full(n * n, float(height))], axis=1)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    i1, j1 = (i + 1) % n, (j + 1) % n
    si = (i + 1 == n).astype(np.int64)
    sj = (j + 1 == n).astype(np.int64)
    z = np.zeros_like(si)
    v00, v10, v11, v01 = i * n + j, i1 * n + j, i1 * n + j1, i * n + j1
    s00 = np.stack([z, z, z], 1)
    s10 = np.stack([si, z, z], 1)
    s11 = np.stack([si, sj, z], 1)
    s01 = np.stack([z, sj, z], 1)
    faces = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    shifts = np.concatenate([np.stack([s00, s10, s11], 1), np.stack([s00, s11, s01], 1)])
    return PeriodicSurfaceMesh(wrap(verts), faces, shifts)


def generate_implicit(spec):
    """Periodic marching-cubes extraction of an implicit surface.

    Samples sit at cell centres of an n^3 grid, offset by half a cell from the
    cell boundary, and the first slab is repeated at the far side so that the
    extracted triangles stitch across the periodic faces.
    """
    if spec.kind == "plane":
        return plane_mesh(spec.resolution)
    n = int(spec.resolution)
    h = PERIOD / n
    coords = -1.0 + (np.arange(n) + 0.5) * h
    X, Y, Z = np.meshgrid(coords, coords, coords, indexing="ij")
    if spec.kind == "custom":
        vol = spec.function(X, Y, Z)
    else:
        vol = IMPLICIT_FUNCTIONS[spec.kind](np.pi * X, np.pi * Y, np.pi * Z)
    vol = np.pad(np.asarray(vol, dtype=float), ((0, 1), (0, 1), (0, 1)), mode="wrap")
    if not (vol.min() < spec.level < vol.max()):
        raise MeshError(f"level set {spec.level} of {spec.kind} is empty", "empty")
    verts, faces, _, _ = measure.marching_cubes(vol, level=spec.level, spacing=(h, h, h),
                                                allow_degenerate=False)
    world = verts + coords[0]
    return _weld_periodic(world, faces)


def _weld_periodic(world, faces, tol=1e-9):
    wrapped = wrap(world)
    tree = cKDTree(wrapped + 1.0, boxsize=PERIOD)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    n = len(world)
    graph = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(graph, directed=False)
    _, first = np.unique(labels, return_index=True)
    verts = wrapped[first]
    f = labels[faces]
    keep = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    corner_world = world[faces[keep]]
    f = f[keep]
    used = np.unique(f)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return from_unwrapped(verts[used], remap[f], corner_world)


@dataclass
class PerturbSpec:
    strength: float = 0.0
    cutoff: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("perturbation strength must be non-negative")
        if self.cutoff < 1:
            raise ValueError("frequency cutoff must be at least 1")


def random_field(spec):
    """Smooth periodic scalar field ``sum_k a_k cos(pi k.x + phi_k)``.

    Wavevectors are the integer vectors with ``0 < |k| <= cutoff`` taken once
    per +/- pair; ``a_k ~ strength * Normal / |k|^2``, normalised so that the
    expected mean square of the field is ``strength^2 / 2``.
    """
    c = spec.cutoff
    rng = np.random.default_rng(spec.seed)
    r = np.arange(-c, c + 1)
    K = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    norm2 = (K**2).sum(1)
    # one representative of each +/- pair: first nonzero component positive
    first = np.array([k[np.flatnonzero(k)[0]] if np.any(k) else 0 for k in K])
    K = K[(norm2 > 0) & (norm2 <= c * c) & (first > 0)]
    inv = 1.0 / (K**2).sum(1)
    amp = spec.strength * rng.standard_normal(len(K)) * inv / np.sqrt((inv**2).sum())
    phase = rng.uniform(0.0, 2.0 * np.pi, len(K))

    def field(x):
        return np.cos(np.pi * np.asarray(x) @ K.T + phase) @ amp

    return field


def implicit_function(kind, strength=0.0, cutoff=2, seed=0):
    """World-coordinate implicit function, optionally minus a random field.

    With ``strength > 0`` the zero set is a smooth random perturbation of the
    base surface, so it can be meshed at any resolution.
    """
    base = IMPLICIT_FUNCTIONS[kind]
    field = random_field(PerturbSpec(strength, cutoff, seed)) if strength else None

    def func(X, Y, Z):
        val = base(np.pi * X, np.pi * Y, np.pi * Z)
        if field is not None:
            pts = np.stack([np.asarray(X), np.asarray(Y), np.asarray(Z)], axis=-1)
            val = val - field(pts.reshape(-1, 3)).reshape(np.shape(X))
        return val

    return func


def project_to_level_set(mesh, func, level=0.0, iterations=6, step=1e-6):
    """Newton-project vertices onto ``func = level`` along the gradient."""
    x = mesh.vertices.copy()
    for _ in range(iterations):
        f = func(x[:, 0], x[:, 1], x[:, 2]) - level
        grad = np.empty_like(x)
        for k in range(3):
            e = np.zeros(3)
            e[k] = step
            xp, xm = x + e, x - e
            grad[:, k] = (func(*xp.T) - func(*xm.T)) / (2 * step)
        x = x - (f / np.einsum("ij,ij->i", grad, grad))[:, None] * grad
    return rewrap(mesh, x)


def perturb(mesh, spec):
    """Displace vertices along their normals by a seeded random field."""
    if spec.strength == 0.0:
        return mesh.copy()
    cache = build_geometry(mesh)
    s = random_field(spec)(mesh.vertices)
    out = rewrap(mesh, mesh.vertices + s[:, None] * cache.vertex_normal)
    validate(out)
    return out

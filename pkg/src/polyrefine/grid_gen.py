"""Generators for the five test grids on (0,1)^3: cubes, prisms,
tetrahedra, random-seed Voronoi, and centroidal Voronoi (Lloyd)."""

import itertools
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import MalformedInputError, NoCutError, ReseedError
from .mesh import Mesh

STRUCTURED_KINDS = ("tetrahedra", "cubes", "prisms")
KINDS = STRUCTURED_KINDS + ("voronoi", "cvt")

# Lloyd iteration stops when no seed moved farther than this.
LLOYD_DISPLACEMENT_TOL = 1e-4


@dataclass
class GridSpec:
    kind: str
    resolution: int = 4          # elements per axis, or seed count
    rng_seed: int = 0
    cvt_iterations: int = 50

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MalformedInputError(f"unknown grid kind {self.kind!r}")
        if self.resolution < 1:
            raise MalformedInputError("resolution must be >= 1")


def generate(spec: GridSpec) -> Mesh:
    if spec.kind in STRUCTURED_KINDS:
        return structured_grid(spec)
    if spec.kind == "voronoi":
        return voronoi_grid(spec)
    return cvt_grid(spec)


def _prism(tri_lo, tri_hi):
    """Triangular prism over matching bottom/top triangles."""
    verts = np.array(list(tri_lo) + list(tri_hi), dtype=float)
    faces = [(2, 1, 0), (3, 4, 5), (0, 1, 4, 3), (1, 2, 5, 4), (2, 0, 3, 5)]
    return geometry.Polyhedron(verts, geometry.orient_outward(verts, faces))


def structured_grid(spec: GridSpec) -> Mesh:
    """Axis-aligned boxes, prisms (boxes halved along a diagonal plane,
    checkerboard-alternated), or tetrahedra (six per box, one per
    ordering of the axes)."""
    if spec.kind not in STRUCTURED_KINDS:
        raise MalformedInputError(f"{spec.kind!r} is not a structured kind")
    n = spec.resolution
    m = Mesh()
    h = 1.0 / n
    for i, j, k in itertools.product(range(n), repeat=3):
        lo = np.array([i, j, k]) * h
        hi = lo + h
        if spec.kind == "cubes":
            m.add_element(geometry.box(lo, hi))
            continue
        c = lambda dx, dy, dz: np.array([lo[0] + dx * h, lo[1] + dy * h,
                                         lo[2] + dz * h])
        if spec.kind == "prisms":
            if (i + j + k) % 2 == 0:
                tris = ([c(0, 0, 0), c(1, 0, 0), c(1, 1, 0)],
                        [c(0, 0, 0), c(1, 1, 0), c(0, 1, 0)])
            else:
                tris = ([c(0, 0, 0), c(1, 0, 0), c(0, 1, 0)],
                        [c(1, 0, 0), c(1, 1, 0), c(0, 1, 0)])
            for tri in tris:
                top = [q + np.array([0, 0, h]) for q in tri]
                m.add_element(_prism(tri, top))
        else:
            for perm in itertools.permutations(range(3)):
                steps = np.zeros((3, 3))
                for s, axis in enumerate(perm):
                    steps[s, axis] = h
                p0 = lo
                p1 = p0 + steps[0]
                p2 = p1 + steps[1]
                p3 = p2 + steps[2]
                m.add_element(geometry.tetrahedron(p0, p1, p2, p3))
    return m


def _voronoi_cell(domain, seeds, i):
    """Clip the domain box by bisector half-spaces around seed i."""
    cell = domain
    others = np.delete(np.arange(len(seeds)), i)
    dists = np.linalg.norm(seeds[others] - seeds[i], axis=1)
    order = others[np.argsort(dists, kind="stable")]
    for j in order:
        gap = np.linalg.norm(seeds[j] - seeds[i])
        reach = np.linalg.norm(cell.vertices - seeds[i], axis=1).max()
        if gap / 2.0 > reach:
            break
        mid = (seeds[i] + seeds[j]) / 2.0
        plane = geometry.CuttingPlane(mid, seeds[j] - seeds[i])
        try:
            neg, _pos = geometry.clip_by_plane(cell, plane)
        except NoCutError:
            continue
        cell = neg[0]
    return cell


def voronoi_grid(spec: GridSpec, seeds=None) -> Mesh:
    """Voronoi cells of uniformly drawn seeds, clipped to the unit box.

    Each cell is the intersection of bisector half-spaces, built by
    successive plane clipping; cells are convex and tile the box.
    """
    if seeds is None:
        if spec.resolution < 2:
            raise MalformedInputError("need at least 2 seeds")
        rng = np.random.default_rng(spec.rng_seed)
        seeds = rng.uniform(0.0, 1.0, size=(spec.resolution, 3))
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 3)
    if len(seeds) > 1:
        d2 = np.sum((seeds[:, None] - seeds[None, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        if d2.min() < 1e-18:
            raise ReseedError("duplicate seeds closer than 1e-9")

    domain = geometry.box((0, 0, 0), (1, 1, 1))
    m = Mesh()
    if len(seeds) == 1:
        m.add_element(domain)
    else:
        for i in range(len(seeds)):
            m.add_element(_voronoi_cell(domain, seeds, i))
    m.seeds = seeds
    return m


def cvt_grid(spec: GridSpec) -> Mesh:
    """Lloyd iteration: rebuild the Voronoi grid, move each seed to its
    cell centroid, repeat until displacements stall or the iteration
    budget runs out."""
    rng = np.random.default_rng(spec.rng_seed)
    seeds = rng.uniform(0.0, 1.0, size=(spec.resolution, 3))
    m = voronoi_grid(spec, seeds=seeds)
    for _ in range(spec.cvt_iterations):
        new_seeds = np.array([geometry.centroid(p) for p in m])
        shift = np.linalg.norm(new_seeds - m.seeds, axis=1).max() if len(
            new_seeds) else 0.0
        m = voronoi_grid(spec, seeds=new_seeds)
        if shift < LLOYD_DISPLACEMENT_TOL:
            break
    return m

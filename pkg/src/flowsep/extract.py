"""Geometry output: closed contribution boundaries, open separation surfaces,
mesh smoothing, small utilities, and OBJ export.

All geometry lives at the initial time in seed space: the indicator lattices
are built on the seed positions of one feature (node spacing = cell size / 2^r),
padded by one node so closed surfaces actually close.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .advect import ParticleSet
from .grid import RectilinearGrid
from .marching import marching_cubes
from .segment import SeedLabeling, SplitEvent


@dataclass
class TriangleMesh:
    """Indexed triangle set; `label` is an int for boundaries and a label pair
    for separation surfaces, which additionally carry a timestamp."""

    vertices: np.ndarray  # (v, 3)
    triangles: np.ndarray  # (t, 3) int32
    kind: str  # "boundary" | "separation"
    label: int | tuple[int, int]
    timestamp: float | None = None

    @property
    def empty(self) -> bool:
        return self.triangles.shape[0] == 0


def seed_axis_coords(grid: RectilinearGrid, refinement: int) -> tuple[np.ndarray, ...]:
    """Per-axis coordinates of all subcell centers (the global seed lattice)."""
    s = 2**refinement
    out = []
    for d in range(3):
        lo = grid.axes[d][:-1]
        w = grid.widths[d]
        rel = (np.arange(s) + 0.5) / s
        out.append((np.repeat(lo, s) + np.tile(rel, lo.size) * np.repeat(w, s)))
    return tuple(out)


def _padded_axis(coords: np.ndarray, lo: int, hi: int, fallback_spacing: float):
    """Coordinates for lattice indices [lo-1, hi+1], extrapolating one step out."""
    n = coords.size
    core = coords[max(lo, 0) : hi + 1]
    if n >= 2:
        first_step = coords[1] - coords[0]
        last_step = coords[-1] - coords[-2]
    else:
        first_step = last_step = fallback_spacing
    head = coords[lo - 1] if lo - 1 >= 0 else coords[0] - first_step
    tail = coords[hi + 1] if hi + 1 < n else coords[-1] + last_step
    return np.concatenate([[head], core, [tail]])


def _lattice_box(grid, refinement, lattice_pts: np.ndarray):
    """Indicator array shape/offset plus padded node coordinates for a seed set."""
    lo = lattice_pts.min(axis=0)
    hi = lattice_pts.max(axis=0)
    shape = tuple(int(h - l + 3) for l, h in zip(lo, hi))
    coords = seed_axis_coords(grid, refinement)
    s = 2**refinement
    axes = tuple(
        _padded_axis(coords[d], int(lo[d]), int(hi[d]), grid.widths[d][0] / s)
        for d in range(3)
    )
    return lo, shape, axes


def _empty_mesh(kind, label, timestamp=None) -> TriangleMesh:
    return TriangleMesh(
        vertices=np.zeros((0, 3)),
        triangles=np.zeros((0, 3), dtype=np.int32),
        kind=kind,
        label=label,
        timestamp=timestamp,
    )


def extract_boundary(
    grid: RectilinearGrid, particles: ParticleSet, labeling: SeedLabeling, label: int
) -> TriangleMesh:
    """Closed boundary around the seeds carrying `label`; empty mesh if none do."""
    sel = np.nonzero(labeling.labels == label)[0]
    if sel.size == 0:
        return _empty_mesh("boundary", label)
    pts = particles.lattice[sel]
    lo, shape, axes = _lattice_box(grid, particles.refinement, pts)
    inside = np.zeros(shape, dtype=bool)
    off = pts - lo + 1
    inside[off[:, 0], off[:, 1], off[:, 2]] = True
    verts, tris = marching_cubes(inside, axes)
    return TriangleMesh(vertices=verts, triangles=tris, kind="boundary", label=label)


def extract_separation_surface(
    grid: RectilinearGrid,
    particles: ParticleSet,
    event: SplitEvent,
    pair: tuple[int, int],
    next_labeling: SeedLabeling,
) -> TriangleMesh:
    """Open surface between the two sub-segments of a split, stamped t_{k+1}.

    Nodes of the splitting group take +/- for the two labels; everything else
    (other labels, other groups, empty lattice points) is invalid, which both
    drives the case lookup and prunes triangles on the invalid rim.
    """
    j1, j2 = pair
    members = event.seed_indices
    nxt = next_labeling.labels[members]
    plus_pts = particles.lattice[members[nxt == j1]]
    minus_pts = particles.lattice[members[nxt == j2]]
    if plus_pts.shape[0] == 0 or minus_pts.shape[0] == 0:
        return _empty_mesh("separation", (j1, j2), event.time_next)
    all_pts = np.concatenate([plus_pts, minus_pts])
    lo, shape, axes = _lattice_box(grid, particles.refinement, all_pts)
    plus = np.zeros(shape, dtype=bool)
    minus = np.zeros(shape, dtype=bool)
    po = plus_pts - lo + 1
    mo = minus_pts - lo + 1
    plus[po[:, 0], po[:, 1], po[:, 2]] = True
    minus[mo[:, 0], mo[:, 1], mo[:, 2]] = True
    invalid = ~(plus | minus)
    verts, tris = marching_cubes(plus, axes, invalid=invalid)
    return TriangleMesh(
        vertices=verts, triangles=tris, kind="separation", label=(j1, j2),
        timestamp=event.time_next,
    )


def edge_incidence(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    """Undirected edges of the mesh with their triangle incidence counts."""
    t = mesh.triangles
    if t.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]).astype(np.int64)
    edges.sort(axis=1)
    return np.unique(edges, axis=0, return_counts=True)


def is_watertight(mesh: TriangleMesh) -> bool:
    """Every undirected edge incident to exactly two triangles."""
    if mesh.empty:
        return False
    _, counts = edge_incidence(mesh)
    return bool(np.all(counts == 2))


def boundary_vertices(mesh: TriangleMesh) -> np.ndarray:
    """Indices of vertices on open-boundary edges (incidence one)."""
    edges, counts = edge_incidence(mesh)
    return np.unique(edges[counts == 1])


def smooth_mesh(mesh: TriangleMesh, iterations: int = 10, lam: float = 0.5) -> TriangleMesh:
    """Uniform-umbrella Laplacian smoothing; open-boundary vertices stay fixed.

    Connectivity is unchanged; 0 iterations is the identity.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("smoothing factor must be in (0, 1]")
    if mesh.empty or iterations == 0:
        return TriangleMesh(
            vertices=mesh.vertices.copy(),
            triangles=mesh.triangles.copy(),
            kind=mesh.kind,
            label=mesh.label,
            timestamp=mesh.timestamp,
        )
    edges, counts = edge_incidence(mesh)
    nv = mesh.vertices.shape[0]
    fixed = np.zeros(nv, dtype=bool)
    fixed[np.unique(edges[counts == 1])] = True
    degree = np.zeros(nv)
    np.add.at(degree, edges[:, 0], 1.0)
    np.add.at(degree, edges[:, 1], 1.0)
    degree[degree == 0] = 1.0
    v = mesh.vertices.copy()
    for _ in range(iterations):
        acc = np.zeros_like(v)
        np.add.at(acc, edges[:, 0], v[edges[:, 1]])
        np.add.at(acc, edges[:, 1], v[edges[:, 0]])
        moved = v + lam * (acc / degree[:, None] - v)
        moved[fixed] = v[fixed]
        v = moved
    return TriangleMesh(
        vertices=v, triangles=mesh.triangles.copy(), kind=mesh.kind,
        label=mesh.label, timestamp=mesh.timestamp,
    )


def triangle_components(mesh: TriangleMesh) -> np.ndarray:
    """Connected-component id per triangle (components share vertices)."""
    nv = mesh.vertices.shape[0]
    parent = np.arange(nv)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for t in mesh.triangles:
        r0 = find(t[0])
        for v in t[1:]:
            rv = find(v)
            if rv != r0:
                lo, hi = (r0, rv) if r0 < rv else (rv, r0)
                parent[hi] = lo
                r0 = lo
    roots = np.array([find(t[0]) for t in mesh.triangles])
    _, comp = np.unique(roots, return_inverse=True)
    return comp


def filter_small_components(mesh: TriangleMesh, min_triangles: int) -> TriangleMesh:
    """Drop connected mesh components with fewer than `min_triangles` triangles."""
    if min_triangles <= 0 or mesh.empty:
        return mesh
    comp = triangle_components(mesh)
    sizes = np.bincount(comp)
    keep = sizes[comp] >= min_triangles
    tris = mesh.triangles[keep]
    if tris.shape[0] == 0:
        return _empty_mesh(mesh.kind, mesh.label, mesh.timestamp)
    used = np.unique(tris)
    remap = np.full(mesh.vertices.shape[0], -1, dtype=np.int32)
    remap[used] = np.arange(used.size, dtype=np.int32)
    return TriangleMesh(
        vertices=mesh.vertices[used], triangles=remap[tris], kind=mesh.kind,
        label=mesh.label, timestamp=mesh.timestamp,
    )


def write_obj(mesh: TriangleMesh, path) -> None:
    lines = [f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts = []
    tris = []
    for ln in Path(path).read_text().splitlines():
        parts = ln.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            tris.append([int(p) - 1 for p in parts[1:4]])
    return np.array(verts).reshape(-1, 3), np.array(tris, dtype=np.int32).reshape(-1, 3)


def export_meshes(meshes: list[TriangleMesh], out_dir, min_triangles: int = 0) -> Path:
    """One OBJ per mesh plus a manifest line each; returns the manifest path."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        lines = ["file\tkind\tlabels\ttimestamp"]
        for seq, mesh in enumerate(meshes):
            mesh = filter_small_components(mesh, min_triangles)
            if mesh.kind == "boundary":
                name = f"b_{seq:03d}_label{mesh.label:04d}.obj"
                labels = str(mesh.label)
            else:
                j1, j2 = mesh.label
                name = f"s_{seq:03d}_labels{j1:04d}_{j2:04d}.obj"
                labels = f"{j1},{j2}"
            write_obj(mesh, out / name)
            ts = "-" if mesh.timestamp is None else repr(mesh.timestamp)
            lines.append(f"{name}\t{mesh.kind}\t{labels}\t{ts}")
        manifest = out / "meshes.manifest"
        manifest.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"mesh export to {out} failed: {exc}") from exc
    return manifest

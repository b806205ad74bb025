"""Marching cubes on binary node lattices, with an open-surface variant.

Case triangulations are generated at import time by contour tracing: segments
are built per cube face (on the single ambiguous face pattern, the diagonally
opposite positive corners are always kept separate), chained into closed loops
and fan-triangulated. Because the face rule is a pure function of the four
shared face values, adjacent cubes always agree on their shared segments, so
closed surfaces come out watertight by construction. Vertices sit exactly at
the midpoints of lattice edges with one positive endpoint.

The signed variant treats invalid nodes as negative for the case lookup and
afterwards discards every triangle with a vertex on a lattice edge incident to
an invalid node, which opens the surface along the invalid rim.
"""

from __future__ import annotations

import numpy as np

# corner c sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1)
CORNERS = [(c & 1, (c >> 1) & 1, (c >> 2) & 1) for c in range(8)]
# 12 cube edges as corner pairs: x-aligned, then y-aligned, then z-aligned
EDGES = [
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
]


def _faces():
    faces = []
    for axis in range(3):
        for side in range(2):
            corners = [c for c in range(8) if CORNERS[c][axis] == side]
            cset = set(corners)
            edges = [e for e, (u, v) in enumerate(EDGES) if u in cset and v in cset]
            faces.append((corners, edges))
    return faces


FACES = _faces()


def _case_loops(mask: int) -> list[list[int]]:
    """Closed contour loops (as cube-edge index cycles) for one corner sign mask."""
    inside = [(mask >> c) & 1 for c in range(8)]
    crossing = {e for e, (u, v) in enumerate(EDGES) if inside[u] != inside[v]}
    if not crossing:
        return []
    partners: dict[int, list[int]] = {e: [] for e in crossing}
    for corners, edges in FACES:
        fcross = [e for e in edges if e in crossing]
        if len(fcross) == 2:
            a, b = fcross
            partners[a].append(b)
            partners[b].append(a)
        elif len(fcross) == 4:
            # ambiguous face: positives are diagonal; cut each one off separately
            for p in corners:
                if not inside[p]:
                    continue
                pa, pb = [e for e in fcross if p in EDGES[e]]
                partners[pa].append(pb)
                partners[pb].append(pa)
    loops = []
    seen: set[int] = set()
    for start in sorted(partners):
        if start in seen:
            continue
        if len(partners[start]) != 2:
            raise AssertionError(f"case {mask}: edge {start} has degree {len(partners[start])}")
        loop = [start]
        seen.add(start)
        prev, cur = -1, start
        while True:
            a, b = partners[cur]
            nxt = a if a != prev else b
            if nxt == start:
                break
            loop.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        loops.append(loop)
    return loops


EDGE_FACES = [
    frozenset(f for f, (_, fedges) in enumerate(FACES) if e in fedges) for e in range(12)
]


def _chord_is_safe(ea: int, eb: int) -> bool:
    """A chord between two loop vertices stays strictly inside the cube iff its
    endpoint edges share no cube face; only such chords are guaranteed not to
    coincide with geometry emitted by a neighboring cube."""
    return not (EDGE_FACES[ea] & EDGE_FACES[eb])


def _enumerate_triangulations(chain: tuple[int, ...]):
    """All combinatorial triangulations of a polygon given as a vertex chain."""
    if len(chain) == 3:
        yield ((chain[0], chain[1], chain[2]),)
        return
    first, last = chain[0], chain[-1]
    for m in range(1, len(chain) - 1):
        mid = chain[m]
        left = chain[: m + 1]
        right = chain[m:]
        lefts = _enumerate_triangulations(left) if len(left) >= 3 else ((),)
        for lt in lefts:
            rights = _enumerate_triangulations(right) if len(right) >= 3 else ((),)
            for rt in rights:
                yield lt + rt + ((first, mid, last),)


def _triangulate_loop(loop: list[int]) -> list[tuple[int, int, int]]:
    """Triangulate one contour loop using only safe (cube-interior) chords."""
    n = len(loop)
    if n == 3:
        return [tuple(loop)]
    sides = {frozenset((loop[t], loop[(t + 1) % n])) for t in range(n)}
    for tris in _enumerate_triangulations(tuple(loop)):
        ok = True
        for tri in tris:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                if frozenset((a, b)) not in sides and not _chord_is_safe(a, b):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return [tuple(t) for t in tris]
    raise AssertionError(f"no safe triangulation for loop {loop}")


def _case_triangles(mask: int) -> list[tuple[int, int, int]]:
    tris = []
    for loop in _case_loops(mask):
        tris.extend(_triangulate_loop(loop))
    return tris


CASE_TRIS = [_case_triangles(m) for m in range(256)]


def _empty():
    return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32)


def marching_cubes(
    inside: np.ndarray,
    axes: tuple[np.ndarray, np.ndarray, np.ndarray],
    invalid: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate the 0.5-level set of a binary node lattice.

    inside:  (ni, nj, nk) bool node values
    axes:    node coordinate arrays per axis
    invalid: optional bool mask of outer nodes; these count as outside for the
             case lookup and every triangle touching an edge with an invalid
             endpoint is discarded (open-surface extraction)

    Returns (vertices, triangles).
    """
    inside = np.asarray(inside, dtype=bool)
    ni, nj, nk = inside.shape
    if min(ni, nj, nk) < 2 or not inside.any():
        return _empty()

    case = np.zeros((ni - 1, nj - 1, nk - 1), dtype=np.uint16)
    for c, (cx, cy, cz) in enumerate(CORNERS):
        case += inside[cx : cx + ni - 1, cy : cy + nj - 1, cz : cz + nk - 1].astype(
            np.uint16
        ) << c
    mixed = np.argwhere((case > 0) & (case < 255))
    if mixed.size == 0:
        return _empty()

    ax, ay, az = (np.asarray(a, dtype=np.float64) for a in axes)
    inv_flat = None
    if invalid is not None:
        inv_flat = np.asarray(invalid, dtype=bool).reshape(-1, order="F")

    verts: list[np.ndarray] = []
    vert_nodes: list[tuple[int, int]] = []
    tris: list[tuple[int, int, int]] = []
    vmap: dict[tuple[int, int], int] = {}

    def node_flat(i, j, k) -> int:
        return i + ni * (j + nj * k)

    for i, j, k in mixed:
        for tri in CASE_TRIS[case[i, j, k]]:
            ids = []
            bad = False
            for e in tri:
                u, v = EDGES[e]
                nu = node_flat(i + CORNERS[u][0], j + CORNERS[u][1], k + CORNERS[u][2])
                nv = node_flat(i + CORNERS[v][0], j + CORNERS[v][1], k + CORNERS[v][2])
                key = (nu, nv) if nu < nv else (nv, nu)
                if inv_flat is not None and (inv_flat[key[0]] or inv_flat[key[1]]):
                    bad = True
                    break
                vid = vmap.get(key)
                if vid is None:
                    vid = vmap[key] = len(verts)
                    pa = _node_coords(key[0], ni, nj, ax, ay, az)
                    pb = _node_coords(key[1], ni, nj, ax, ay, az)
                    verts.append(0.5 * (pa + pb))
                    vert_nodes.append(key)
                ids.append(vid)
            if not bad:
                tris.append(tuple(ids))

    if not tris:
        return _empty()
    vert_arr = np.array(verts)
    tri_arr = np.array(tris, dtype=np.int32)
    # drop vertices that only supported discarded triangles
    used = np.unique(tri_arr)
    if used.size != vert_arr.shape[0]:
        remap = np.full(vert_arr.shape[0], -1, dtype=np.int32)
        remap[used] = np.arange(used.size, dtype=np.int32)
        vert_arr = vert_arr[used]
        tri_arr = remap[tri_arr]
    return vert_arr, tri_arr


def _node_coords(flat: int, ni: int, nj: int, ax, ay, az) -> np.ndarray:
    i = flat % ni
    j = (flat // ni) % nj
    k = flat // (ni * nj)
    return np.array([ax[i], ay[j], az[k]])

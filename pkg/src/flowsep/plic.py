"""Piecewise linear interface reconstruction per interface cell.

Conventions: the patch normal n points from liquid to gas (n = -grad f / |grad f|),
the attachment corner a is the cell corner deepest in the liquid (minimal
projection onto n, ties broken toward the lexicographically smallest corner),
and the plane offset l >= 0 is measured from a along n. A point x of the cell
is on the liquid side iff d = (x - a) . n <= l.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Cell, TimeStep, gradient_f, locate_cell

MAX_BISECT = 60
VOLUME_TOL = 1e-6
# phase-test slack so particles projected exactly onto the patch plane count
# as liquid (relative to the cell diagonal)
PHASE_TOL = 1e-9


class DegenerateNormalError(ValueError):
    """The fraction gradient vanishes in an interface cell."""


@dataclass(frozen=True)
class PlicPatch:
    cell: Cell
    normal: np.ndarray  # unit, liquid -> gas
    anchor: np.ndarray  # deepest-liquid cell corner
    offset: float  # plane distance from anchor along normal, >= 0

    def distance(self, x) -> float:
        """Projection d of x - anchor onto the normal."""
        return float(np.dot(np.asarray(x) - self.anchor, self.normal))


def _corner_fraction(w: tuple, c: tuple, rhs: float) -> float:
    """Volume fraction of {y in prod [0, w_i] : sum c_i y_i <= rhs} for c_i >= 0.

    Inclusion-exclusion over box corners. Near-zero coefficients drop out of
    the constraint (their tilt contributes O(1e-12) volume but would wreck the
    conditioning); the hot paths call this with plain floats.
    """
    cmax = max(c)
    if cmax <= 0.0:
        return 1.0 if rhs >= 0.0 else 0.0
    thresh = 1e-12 * cmax
    cw = [(ci, wi) for ci, wi in zip(c, w) if ci > thresh]
    k = len(cw)
    if k == 0:
        return 1.0 if rhs >= 0.0 else 0.0
    if k == 1:
        cut = rhs / (cw[0][0] * cw[0][1])
        return min(max(cut, 0.0), 1.0)
    if k == 2:
        (c0, w0), (c1, w1) = cw
        total = 0.0
        for b0 in (0, 1):
            for b1 in (0, 1):
                corner = rhs - b0 * c0 * w0 - b1 * c1 * w1
                if corner > 0.0:
                    total += (-1.0) ** (b0 + b1) * corner * corner
        return total / (2.0 * c0 * c1 * w0 * w1)
    (c0, w0), (c1, w1), (c2, w2) = cw
    total = 0.0
    for b0 in (0, 1):
        for b1 in (0, 1):
            for b2 in (0, 1):
                corner = rhs - b0 * c0 * w0 - b1 * c1 * w1 - b2 * c2 * w2
                if corner > 0.0:
                    total += (-1.0) ** (b0 + b1 + b2) * corner**3
    return total / (6.0 * c0 * c1 * c2 * w0 * w1 * w2)


def truncated_volume(lo, hi, normal, anchor, offset: float) -> float:
    """Exact fraction of the box [lo, hi] inside {(x - anchor) . n <= offset}.

    `anchor` must be a corner of the box. Monotone non-decreasing in offset;
    0 at offset 0 (up to the degenerate corner) and 1 beyond the projected extent.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    a = np.asarray(anchor, dtype=np.float64)
    # substitute y_i in [0, w_i] measured from the anchor into the box;
    # axes where the constraint coefficient is negative are reflected so all
    # coefficients become non-negative
    w = []
    c = []
    rhs = float(offset)
    for d in range(3):
        wd = float(hi[d] - lo[d])
        cd = float(n[d]) if abs(a[d] - lo[d]) <= abs(a[d] - hi[d]) else -float(n[d])
        if cd < 0.0:
            rhs -= cd * wd
            cd = -cd
        w.append(wd)
        c.append(cd)
    return _corner_fraction(tuple(w), tuple(c), rhs)


def anchor_corner(lo, hi, normal) -> np.ndarray:
    """Deepest-liquid corner: minimal projection onto the normal, ties toward lo."""
    return np.where(np.asarray(normal) < 0.0, hi, lo)


def solve_patch_offset(lo, hi, normal, fraction: float) -> float:
    """Plane offset l with truncated_volume == fraction, by bisection.

    Converges to |volume - fraction| <= VOLUME_TOL within MAX_BISECT iterations
    (the volume is continuous and monotone in l).
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    # measured from the anchor corner all constraint coefficients are |n_i|
    w = tuple(float(v) for v in hi - lo)
    c = tuple(abs(float(v)) for v in n)
    extent = c[0] * w[0] + c[1] * w[1] + c[2] * w[2]
    l_lo, l_hi = 0.0, extent
    l_mid = 0.5 * extent
    for _ in range(MAX_BISECT):
        l_mid = 0.5 * (l_lo + l_hi)
        v = _corner_fraction(w, c, l_mid)
        if abs(v - fraction) <= VOLUME_TOL:
            return l_mid
        if v < fraction:
            l_lo = l_mid
        else:
            l_hi = l_mid
    return l_mid


def reconstruct_patch(step: TimeStep, cell: Cell) -> PlicPatch:
    """PLIC patch of an interface cell (requires 0 < f < 1)."""
    grid = step.grid
    f = float(step.f.view3d()[cell])
    if not 0.0 < f < 1.0:
        raise ValueError(f"cell {cell} is not an interface cell (f={f})")
    g = gradient_f(step, cell)
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        raise DegenerateNormalError(f"zero fraction gradient in interface cell {cell}")
    n = -g / norm
    lo, hi = grid.cell_bounds(cell)
    a = anchor_corner(lo, hi, n)
    l = solve_patch_offset(lo, hi, n, f)
    return PlicPatch(cell=cell, normal=n, anchor=a, offset=l)


def _phase_tol(step: TimeStep, cell: Cell) -> float:
    g = step.grid
    w0 = g.widths[0][cell[0]]
    w1 = g.widths[1][cell[1]]
    w2 = g.widths[2][cell[2]]
    return PHASE_TOL * float(np.sqrt(w0 * w0 + w1 * w1 + w2 * w2))


def is_liquid(step: TimeStep, x, tau: float = 0.0, cache: dict | None = None) -> bool:
    """Whether point x lies in the feature phase.

    Pure cells resolve by thresholding f; interface cells by the PLIC test
    d <= l (with a tiny slack so points on the patch plane count as liquid).
    Cells with a degenerate gradient fall back to whole-cell liquid iff f > 0.5.
    """
    cell = locate_cell(step.grid, x)
    if cell is None:
        return False
    f = float(step.f.view3d()[cell])
    if f <= tau:
        return False
    if f >= 1.0:
        return True
    try:
        patch = _cached_patch(step, cell, cache)
    except DegenerateNormalError:
        return f > 0.5
    return patch.distance(x) <= patch.offset + _phase_tol(step, cell)


def _cached_patch(step: TimeStep, cell: Cell, cache: dict | None) -> PlicPatch:
    if cache is None:
        return reconstruct_patch(step, cell)
    patch = cache.get(cell)
    if patch is None:
        patch = cache[cell] = reconstruct_patch(step, cell)
    return patch


def is_liquid_many(
    step: TimeStep, pts: np.ndarray, tau: float = 0.0, cache: dict | None = None
) -> np.ndarray:
    """Vectorized is_liquid; points outside the domain report False.

    Interface-cell points are grouped per cell so each PLIC patch is solved
    once and applied to all of its points in one shot.
    """
    from .grid import flat_indices, locate_cells

    grid = step.grid
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    idx, inside = locate_cells(grid, pts)
    out = np.zeros(pts.shape[0], dtype=bool)
    if not inside.any():
        return out
    flat = np.where(inside, flat_indices(grid, idx), 0)
    fvals = np.where(inside, step.f.values[flat], 0.0)
    out[inside & (fvals >= 1.0)] = True
    mixed = np.nonzero(inside & (fvals > tau) & (fvals < 1.0))[0]
    if mixed.size == 0:
        return out
    for cell_flat in np.unique(flat[mixed]):
        rows = mixed[flat[mixed] == cell_flat]
        cell = grid.unflat(int(cell_flat))
        try:
            patch = _cached_patch(step, cell, cache)
        except DegenerateNormalError:
            out[rows] = float(step.f.values[cell_flat]) > 0.5
            continue
        d = (pts[rows] - patch.anchor) @ patch.normal
        out[rows] = d <= patch.offset + _phase_tol(step, cell)
    return out


def project_to_patch(patch: PlicPatch, x) -> np.ndarray:
    """Intersection of the segment x -> anchor with the patch plane.

    Points already on the liquid side (d <= l) are returned unchanged. Since
    the anchor has d = 0 <= l, the segment from any outside point always
    crosses the plane.
    """
    x = np.asarray(x, dtype=np.float64)
    d = patch.distance(x)
    if d <= patch.offset:
        return x.copy()
    s = 1.0 - patch.offset / d
    return x + s * (patch.anchor - x)

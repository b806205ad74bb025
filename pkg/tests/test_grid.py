from __future__ import annotations

import numpy as np
import pytest

from flowsep.grid import (
    CellField,
    GridError,
    RectilinearGrid,
    TimeSeriesDataset,
    TimeStep,
    gradient_f,
    locate_cell,
    locate_cells,
    sample_velocity,
    uniform_grid,
)


def make_step(grid, f, u, time=0.0):
    return TimeStep(time=time, f=CellField(grid, f), u=CellField(grid, u, ncomp=3))


def constant_step(grid, fval, uvec, time=0.0):
    n = grid.ncells
    f = np.full(n, fval)
    u = np.tile(np.asarray(uvec, dtype=float)[:, None], (1, n))
    return make_step(grid, f, u, time)


def cell_center_coords(grid):
    """(ncells, 3) cell centers in flat x-fastest order."""
    nx, ny, nz = grid.shape
    cx, cy, cz = grid.centers
    return np.stack(
        [
            np.tile(cx, ny * nz),
            np.tile(np.repeat(cy, nx), nz),
            np.repeat(cz, nx * ny),
        ],
        axis=1,
    )


class TestRectilinearGrid:
    def test_rejects_non_increasing_axis(self):
        with pytest.raises(GridError):
            RectilinearGrid((np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0]), np.array([0.0, 1.0])))

    def test_rejects_single_node_axis(self):
        with pytest.raises(GridError):
            RectilinearGrid((np.array([0.0]), np.array([0.0, 1.0]), np.array([0.0, 1.0])))

    def test_shape_and_volume(self):
        g = uniform_grid((4, 2, 3))
        assert g.shape == (4, 2, 3)
        assert g.ncells == 24
        assert np.isclose(g.cell_volume((0, 0, 0)), (1 / 4) * (1 / 2) * (1 / 3))

    def test_flat_unflat_roundtrip(self):
        g = uniform_grid((3, 4, 5))
        for flat in range(g.ncells):
            assert g.flat(g.unflat(flat)) == flat


class TestLocateCell:
    def test_first_cell(self):
        g = uniform_grid(2)
        assert locate_cell(g, (0.1, 0.1, 0.1)) == (0, 0, 0)

    def test_mixed_cell(self):
        g = uniform_grid(2)
        assert locate_cell(g, (0.6, 0.1, 0.9)) == (1, 0, 1)

    def test_outside(self):
        g = uniform_grid(2)
        assert locate_cell(g, (1.5, 0.0, 0.0)) is None

    def test_domain_max_maps_to_last_cell(self):
        g = uniform_grid(2)
        assert locate_cell(g, (1.0, 1.0, 1.0)) == (1, 1, 1)

    def test_roundtrip_bounds_contain_point(self):
        rng = np.random.default_rng(7)
        axes = tuple(np.sort(rng.uniform(0, 1, 6)) + np.arange(6) * 0.05 for _ in range(3))
        g = RectilinearGrid(axes)
        pts = rng.uniform(g.lo, g.hi, size=(200, 3))
        for p in pts:
            cell = locate_cell(g, p)
            assert cell is not None
            lo, hi = g.cell_bounds(cell)
            last = [cell[d] == g.shape[d] - 1 for d in range(3)]
            for d in range(3):
                assert lo[d] <= p[d]
                assert (p[d] <= hi[d]) if last[d] else (p[d] < hi[d])

    def test_vectorized_matches_scalar(self):
        g = uniform_grid((3, 4, 5))
        rng = np.random.default_rng(3)
        pts = rng.uniform(-0.2, 1.2, size=(300, 3))
        idx, inside = locate_cells(g, pts)
        for row, p in enumerate(pts):
            cell = locate_cell(g, p)
            if cell is None:
                assert not inside[row]
            else:
                assert inside[row]
                assert tuple(idx[row]) == cell


class TestSampleVelocity:
    def test_constant_field(self):
        g = uniform_grid(4)
        a = constant_step(g, 0.5, (1.0, 0.0, 0.0), time=0.0)
        b = constant_step(g, 0.5, (1.0, 0.0, 0.0), time=1.0)
        v = sample_velocity(a, b, (0.3, 0.77, 0.51), 0.4)
        assert np.allclose(v, (1.0, 0.0, 0.0))

    def test_linear_time_blend(self):
        g = uniform_grid(4)
        a = constant_step(g, 0.5, (0.0, 0.0, 0.0), time=0.0)
        b = constant_step(g, 0.5, (2.0, 0.0, 0.0), time=1.0)
        v = sample_velocity(a, b, (0.5, 0.5, 0.5), 0.5)
        assert np.allclose(v, (1.0, 0.0, 0.0))

    def test_reproduces_cell_center_values(self):
        # oracle: direct array lookup at the sampled cell center
        g = uniform_grid(8)
        centers = cell_center_coords(g)
        u = np.zeros((3, g.ncells))
        u[0] = centers[:, 0]
        step = make_step(g, np.full(g.ncells, 0.5), u)
        for flat in (0, 77, 300, 511):
            v = sample_velocity(step, step, centers[flat], 0.0)
            assert np.isclose(v[0], u[0, flat], atol=1e-14)

    def test_exact_for_affine_fields(self):
        g = uniform_grid(6)
        centers = cell_center_coords(g)
        rng = np.random.default_rng(11)
        coeff = rng.normal(size=(3, 4))  # per component: a + b.x
        u = coeff[:, :1] + coeff[:, 1:] @ centers.T
        step_a = make_step(g, np.full(g.ncells, 0.5), u, time=0.0)
        step_b = make_step(g, np.full(g.ncells, 0.5), 2.0 * u, time=1.0)
        # stay strictly inside the cell-center hull where no clamping occurs
        pts = rng.uniform(1.5 / 6, 4.5 / 6, size=(50, 3))
        for t in (0.0, 0.25, 1.0):
            expect = (1.0 + t) * (coeff[:, :1] + coeff[:, 1:] @ pts.T).T
            got = sample_velocity(step_a, step_b, pts, t)
            assert np.allclose(got, expect, atol=1e-12)

    def test_time_outside_interval_rejected(self):
        g = uniform_grid(2)
        a = constant_step(g, 0.5, (1.0, 0.0, 0.0), time=0.0)
        b = constant_step(g, 0.5, (1.0, 0.0, 0.0), time=1.0)
        with pytest.raises(ValueError):
            sample_velocity(a, b, (0.5, 0.5, 0.5), 2.0)


class TestGradient:
    def test_constant_field_zero(self):
        g = uniform_grid(4)
        step = constant_step(g, 0.5, (0.0, 0.0, 0.0))
        assert np.allclose(gradient_f(step, (2, 1, 3)), 0.0)

    def test_linear_field_interior(self):
        g = uniform_grid(6)
        f = np.clip(cell_center_coords(g)[:, 0], 0, 1)
        step = make_step(g, f, np.zeros((3, g.ncells)))
        assert np.allclose(gradient_f(step, (3, 2, 2)), (1.0, 0.0, 0.0))

    def test_linear_field_boundary_one_sided(self):
        # hand-computed one-sided stencil: (f[1] - f[0]) / (c1 - c0) = 1
        g = uniform_grid(6)
        f = np.clip(cell_center_coords(g)[:, 0], 0, 1)
        step = make_step(g, f, np.zeros((3, g.ncells)))
        assert np.allclose(gradient_f(step, (0, 2, 2)), (1.0, 0.0, 0.0))
        assert np.allclose(gradient_f(step, (5, 2, 2)), (1.0, 0.0, 0.0))

    def test_affine_exact_on_nonuniform_grid(self):
        rng = np.random.default_rng(5)
        axes = tuple(np.cumsum(np.concatenate([[0.0], rng.uniform(0.5, 2.0, 5)])) for _ in range(3))
        g = RectilinearGrid(axes)
        centers = cell_center_coords(g)
        coef = rng.normal(size=4)
        raw = coef[0] + centers @ coef[1:]
        span = raw.max() - raw.min()
        fvals = (raw - raw.min()) / span  # into [0, 1], still affine in centers
        step = make_step(g, fvals, np.zeros((3, g.ncells)))
        expect = coef[1:] / span
        for cell in [(2, 2, 2), (0, 0, 0), (4, 3, 1)]:
            assert np.allclose(gradient_f(step, cell), expect, atol=1e-12)


class TestValidation:
    def test_fraction_range_enforced(self):
        g = uniform_grid(2)
        with pytest.raises(GridError):
            make_step(g, np.full(g.ncells, 1.5), np.zeros((3, g.ncells)))

    def test_field_length_enforced(self):
        g = uniform_grid(2)
        with pytest.raises(GridError):
            CellField(g, np.zeros(5))

    def test_dataset_times_increasing(self):
        g = uniform_grid(2)
        s0 = constant_step(g, 0.5, (0, 0, 0), time=0.0)
        s1 = constant_step(g, 0.5, (0, 0, 0), time=0.0)
        with pytest.raises(GridError):
            TimeSeriesDataset(grid=g, steps=[s0, s1])

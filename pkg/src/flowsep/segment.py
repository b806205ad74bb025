"""Seed-label transfer, volumetric contribution tables, and split detection.

The label a particle acquires at a later time is transferred back to its seed
point; grouping seeds by (initial label, final label) estimates how the volume
of each initial feature is distributed among the features it turns into.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .advect import ParticleSet
from .grid import TimeStep, flat_indices, gradient_f, locate_cells, sample_fraction
from .labeling import LabelField

GRADIENT_WALK_MAX = 8  # cap on the label search walk up the fraction gradient


@dataclass
class SeedLabeling:
    """Per-seed feature label at one instant (-1 invalid/unlabeled)."""

    labels: np.ndarray  # (n,) int32
    time: float


@dataclass
class ContributionTable:
    """Rows (i, j, seed count, volume estimate), one per populated label pair."""

    rows: list[tuple[int, int, int, float]]
    t0: float
    tf: float

    def counts(self) -> dict[tuple[int, int], int]:
        return {(i, j): c for i, j, c, _ in self.rows}

    def volumes(self) -> dict[tuple[int, int], float]:
        return {(i, j): v for i, j, _, v in self.rows}


def assign_labels(
    particles: ParticleSet, labels: LabelField, step: TimeStep, tau: float = 0.0
) -> SeedLabeling:
    """Label of the feature bounding each alive particle; dead particles get -1.

    A particle in an unlabeled cell whose interpolated fraction still exceeds
    tau walks up the fraction gradient one face neighbor at a time (at most
    GRADIENT_WALK_MAX cells) and takes the first labeled cell's label.
    """
    if labels.grid is not step.grid:
        raise ValueError("label field and step must share one grid")
    n = len(particles)
    out = np.full(n, -1, dtype=np.int32)
    alive = np.nonzero(particles.alive)[0]
    if alive.size:
        out[alive] = labels_for_positions(particles.pos[alive], labels, step, tau)
    return SeedLabeling(labels=out, time=step.time)


def labels_for_positions(
    pos: np.ndarray, labels: LabelField, step: TimeStep, tau: float = 0.0
) -> np.ndarray:
    """Feature label per position (-1 outside all features), gradient walk included."""
    grid = step.grid
    pos = np.atleast_2d(pos)
    idx, inside = locate_cells(grid, pos)
    lab = np.full(pos.shape[0], -1, dtype=np.int32)
    if inside.any():
        flat = flat_indices(grid, idx[inside])
        lab[inside] = labels.labels[flat]

    # gradient walk for stragglers whose interpolated f is still above tau
    misses = np.nonzero(inside & (lab < 0))[0]
    if misses.size:
        fvals = np.atleast_1d(sample_fraction(step, pos[misses]))
        for row, fv in zip(misses, fvals):
            if fv <= tau:
                continue
            lab[row] = _walk_up_gradient(step, labels, tuple(int(v) for v in idx[row]))
    return lab


def _walk_up_gradient(step: TimeStep, labels: LabelField, cell) -> int:
    grid = step.grid
    lab3 = labels.view3d()
    cur = cell
    for _ in range(GRADIENT_WALK_MAX):
        g = gradient_f(step, cur)
        amax = int(np.argmax(np.abs(g)))
        if g[amax] == 0.0:
            return -1
        nxt = list(cur)
        nxt[amax] += 1 if g[amax] > 0 else -1
        if not grid.in_bounds(nxt):
            return -1
        cur = tuple(nxt)
        found = int(lab3[cur])
        if found >= 0:
            return found
    return -1


def contribution_table(
    initial: SeedLabeling, final: SeedLabeling, particles: ParticleSet
) -> ContributionTable:
    """Group seeds by (initial label, final label).

    The volume estimate of a row is the summed represented volume of its seeds
    (cell volume / (2^3)^r per seed); invalid-label seeds are retained as
    j = -1 rows so mass loss stays visible.
    """
    li = initial.labels
    lf = final.labels
    pairs = np.stack([li, lf], axis=1)
    uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
    counts = np.bincount(inv)
    vols = np.zeros(uniq.shape[0])
    np.add.at(vols, inv, particles.seed_volume)
    rows = [
        (int(uniq[r, 0]), int(uniq[r, 1]), int(counts[r]), float(vols[r]))
        for r in range(uniq.shape[0])
    ]
    rows.sort(key=lambda row: (row[0], row[1]))
    return ContributionTable(rows=rows, t0=initial.time, tf=final.time)


def write_table(table: ContributionTable, path) -> None:
    lines = ["i\tj\tcount\tvolume"]
    lines += [f"{i}\t{j}\t{c}\t{v!r}" for i, j, c, v in table.rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_table(path) -> ContributionTable:
    lines = Path(path).read_text().splitlines()
    rows = []
    for ln in lines[1:]:
        i, j, c, v = ln.split("\t")
        rows.append((int(i), int(j), int(c), float(v)))
    return ContributionTable(rows=rows, t0=float("nan"), tf=float("nan"))


@dataclass(frozen=True)
class SplitEvent:
    """A segment (seeds of one initial feature sharing a label at t_k) whose
    seeds carry two or more distinct valid labels at t_{k+1}."""

    initial_label: int
    group_label: int
    next_labels: tuple[int, ...]
    seed_indices: np.ndarray
    time_prev: float
    time_next: float


def detect_splits(
    prev: SeedLabeling, next_: SeedLabeling, initial: SeedLabeling
) -> list[SplitEvent]:
    """Splits between two consecutive labelings, grouped per initial feature."""
    if prev.labels.shape != next_.labels.shape or prev.labels.shape != initial.labels.shape:
        raise ValueError("labelings must cover the same particle set")
    events: list[SplitEvent] = []
    group_keys = np.stack([initial.labels, prev.labels], axis=1)
    uniq = np.unique(group_keys, axis=0)
    for i0, jk in uniq:
        if i0 < 0 or jk < 0:
            continue
        members = np.nonzero((initial.labels == i0) & (prev.labels == jk))[0]
        nxt = np.unique(next_.labels[members])
        nxt = nxt[nxt >= 0]
        if nxt.size >= 2:
            events.append(
                SplitEvent(
                    initial_label=int(i0),
                    group_label=int(jk),
                    next_labels=tuple(int(v) for v in nxt),
                    seed_indices=members,
                    time_prev=prev.time,
                    time_next=next_.time,
                )
            )
    return events

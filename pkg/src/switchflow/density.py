"""Occupation histograms as estimates of the invariant measure on M x S.

A histogram is a box partitioned into ``bins`` cells per axis, crossed with
the finite state set.  Mass falling outside the box is kept in a separate
bucket rather than dropped, so normalization and total variation stay
honest for unbounded state spaces.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .formats import write_table
from .pdmp import Trajectory


@dataclass
class OccupationHistogram:
    lo: np.ndarray
    hi: np.ndarray
    bins: tuple[int, ...]
    mass: np.ndarray  # shape bins + (n_states,)
    total_weight: float
    out_of_box_weight: float
    periodic: bool = False

    @property
    def n_states(self) -> int:
        return self.mass.shape[-1]

    @property
    def shape_key(self):
        return (tuple(self.lo), tuple(self.hi), self.bins, self.n_states, self.periodic)

    def normalized(self) -> tuple[np.ndarray, float]:
        """(cell probabilities, out-of-box probability)."""
        if self.total_weight <= 0:
            raise ValueError("histogram is empty")
        return self.mass / self.total_weight, self.out_of_box_weight / self.total_weight

    def state_marginal(self) -> np.ndarray:
        """Probability of each state among in-box mass."""
        per_state = self.mass.reshape(-1, self.n_states).sum(axis=0)
        return per_state / per_state.sum()

    def spatial_mass(self) -> np.ndarray:
        return self.mass.sum(axis=-1)

    def occupied_cells(self) -> int:
        """Number of spatial cells with positive mass (states merged)."""
        return int(np.count_nonzero(self.spatial_mass()))

    def merge(self, other: "OccupationHistogram") -> "OccupationHistogram":
        if self.shape_key != other.shape_key:
            raise ValueError("cannot merge histograms with different boxes, bins or states")
        return OccupationHistogram(self.lo, self.hi, self.bins, self.mass + other.mass,
                                   self.total_weight + other.total_weight,
                                   self.out_of_box_weight + other.out_of_box_weight,
                                   self.periodic)

    __add__ = merge

    def table(self) -> tuple[list[str], list[list]]:
        """Header ``state,bin_index_1..bin_index_n,mass`` and rows for nonzero cells;
        state 1-based, bin indices 0-based, mass normalized by total weight."""
        probs, _ = self.normalized()
        n = len(self.bins)
        header = ["state"] + [f"bin_index_{j}" for j in range(1, n + 1)] + ["mass"]
        rows = [[int(idx[-1]) + 1, *(int(i) for i in idx[:-1]), float(probs[idx])]
                for idx in zip(*np.nonzero(probs))]
        return header, rows

    def write_csv(self, fh, fmt: str = "csv") -> None:
        write_table(fh, *self.table(), fmt)

    def metadata(self) -> dict:
        return {"box": [[float(a), float(b)] for a, b in zip(self.lo, self.hi)],
                "bins": list(self.bins), "n_states": self.n_states,
                "total_weight": float(self.total_weight),
                "out_of_box_weight": float(self.out_of_box_weight),
                "periodic": self.periodic}


def _box(box, n):
    box = np.asarray(box, dtype=float)
    if box.shape != (n, 2):
        raise ValueError(f"box must have shape ({n}, 2), got {box.shape}")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box upper bounds must exceed lower bounds")
    return box[:, 0].copy(), box[:, 1].copy()


def _bins(bins, n) -> tuple[int, ...]:
    if np.isscalar(bins):
        bins = [int(bins)] * n
    bins = tuple(int(b) for b in bins)
    if len(bins) != n or any(b < 1 for b in bins):
        raise ValueError(f"need {n} positive bin counts")
    return bins


def _accumulate(points, states, weights, lo, hi, bins, n_states, periodic):
    """Bin weighted samples; returns (mass array, total weight, out-of-box weight)."""
    points = np.asarray(points, dtype=float).reshape(len(states), len(bins))
    nb = np.asarray(bins)
    idx = np.floor((points - lo) / (hi - lo) * nb).astype(np.int64)
    if periodic:
        idx = np.mod(idx, nb)
        inside = np.ones(len(points), dtype=bool)
    else:
        # the closed upper face belongs to the last cell
        at_top = (points == hi) & (idx == nb)
        idx[at_top] -= 1
        inside = np.all((idx >= 0) & (idx < nb), axis=1)
    mass = np.zeros(int(np.prod(bins)) * n_states)
    if np.any(inside):
        flat = np.ravel_multi_index(tuple(idx[inside].T), bins) * n_states \
            + np.asarray(states)[inside]
        w = weights[inside] if np.ndim(weights) else np.full(int(inside.sum()), weights)
        mass += np.bincount(flat, weights=w, minlength=mass.size)
    total = float(np.sum(weights)) if np.ndim(weights) else float(weights) * len(points)
    w_in = float(np.sum(weights[inside])) if np.ndim(weights) else float(weights) * inside.sum()
    return mass.reshape(bins + (n_states,)), total, total - w_in


def occupation_histogram(trajs: Sequence[Trajectory], box, bins, burn_in: float | None = None,
                         periodic: bool | None = None) -> OccupationHistogram:
    """Time-weighted histogram of the grid samples taken after ``burn_in``.

    Each sample carries weight ``sample_dt``.  ``burn_in`` defaults to 10% of
    each trajectory's horizon.  On the torus (or with ``periodic=True``)
    cell indices wrap, so the box should be a fundamental domain.
    """
    trajs = list(trajs)
    if not trajs:
        raise ValueError("no trajectories given")
    n = trajs[0].manifold.n
    k = trajs[0].n_states
    lo, hi = _box(box, n)
    bins = _bins(bins, n)
    if periodic is None:
        periodic = trajs[0].manifold.is_torus
    mass = np.zeros(bins + (k,))
    total = out = 0.0
    for tr in trajs:
        if tr.manifold.n != n or tr.n_states != k:
            raise ValueError("trajectories have different dimensions or state counts")
        b = 0.1 * tr.total_time if burn_in is None else burn_in
        if not b < tr.total_time:
            raise ValueError(f"burn_in {b} is not below the trajectory horizon {tr.total_time}")
        times = tr.sample_times()
        keep = times >= b
        if not keep.any():
            continue
        m, t, o = _accumulate(tr.sample_points()[keep], tr.sample_states()[keep],
                              tr.sample_dt, lo, hi, bins, k, periodic)
        mass += m
        total += t
        out += o
    if total <= 0:
        raise ValueError("no samples after burn-in")
    return OccupationHistogram(lo, hi, bins, mass, total, out, periodic)


def endpoint_histogram(points, states, box, bins, n_states: int | None = None,
                       periodic: bool = False) -> OccupationHistogram:
    """Unit-weight histogram of endpoint samples (``states`` 0-based)."""
    states = np.asarray(states, dtype=np.int64)
    points = np.asarray(points, dtype=float).reshape(len(states), -1)
    n = points.shape[1]
    if n_states is None:
        n_states = int(states.max()) + 1 if len(states) else 1
    lo, hi = _box(box, n)
    bins = _bins(bins, n)
    mass, total, out = _accumulate(points, states, 1.0, lo, hi, bins, n_states, periodic)
    if total <= 0:
        raise ValueError("no samples given")
    return OccupationHistogram(lo, hi, bins, mass, total, out, periodic)


def reference_histogram(like: OccupationHistogram, state_weights: Iterable[float] | None = None
                        ) -> OccupationHistogram:
    """Product of the uniform spatial measure on the box and a state law
    (uniform by default), binned like ``like``."""
    k = like.n_states
    sw = np.full(k, 1.0 / k) if state_weights is None else np.asarray(state_weights, float)
    sw = sw / sw.sum()
    cells = int(np.prod(like.bins))
    mass = np.broadcast_to(sw / cells, like.bins + (k,)).copy()
    return OccupationHistogram(like.lo, like.hi, like.bins, mass, 1.0, 0.0, like.periodic)


def tv_distance(h1: OccupationHistogram, h2: OccupationHistogram) -> float:
    """Half the l1 distance between the normalized cell masses, out-of-box mass
    counted as one extra cell."""
    if h1.shape_key != h2.shape_key:
        raise ValueError("histograms have different boxes, bins or state counts")
    p1, o1 = h1.normalized()
    p2, o2 = h2.normalized()
    return float(0.5 * (np.abs(p1 - p2).sum() + abs(o1 - o2)))


def state_occupation(trajs: Sequence[Trajectory], burn_in: float = 0.0) -> np.ndarray:
    """Fraction of time spent in each state after ``burn_in``, from exact segment durations."""
    trajs = list(trajs)
    if not trajs:
        raise ValueError("no trajectories given")
    occ = np.zeros(trajs[0].n_states)
    for tr in trajs:
        for seg in tr.segments:
            lo = max(seg.start_time, burn_in)
            if seg.end_time > lo:
                occ[seg.state] += seg.end_time - lo
    if occ.sum() <= 0:
        raise ValueError("no time after burn-in")
    return occ / occ.sum()

"""Sampling the switched process (X_t, A_t).

Between jumps X follows the flow of the active field u_{A}; the active state
is held for an Exp(rate[A]) time and then replaced by a state drawn from
row A of the jump matrix.  Holding times and jump targets are drawn by
inversion from a single PCG64 stream per trajectory, so a seed fixes the
whole event sequence.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .expr import FieldExpr
from .formats import dumps, write_table
from .flow import DEFAULT_OPTIONS, IntegratorOptions, Manifold, flow_samples
from .rng import categorical, exponential, make_rng, spawn


class ModelError(ValueError):
    """The switching system violates the model assumptions."""


@dataclass(frozen=True, eq=False)
class SwitchingSystem:
    """Vector fields, per-state exponential rates and a jump matrix on a manifold.

    The jump matrix must be row-stochastic with zero diagonal and positive
    off-diagonal entries; at least two states are required.
    """

    manifold: Manifold
    fields: tuple[FieldExpr, ...]
    rates: np.ndarray
    jump: np.ndarray

    def __post_init__(self):
        fields = tuple(self.fields)
        object.__setattr__(self, "fields", fields)
        k = len(fields)
        if k < 2:
            raise ModelError("need at least two vector fields: a single state has no state to "
                             "switch to")
        for i, f in enumerate(fields):
            if f.dim != self.manifold.n:
                raise ModelError(f"field u{i + 1} has dimension {f.dim}, manifold has "
                                 f"{self.manifold.n}")
        rates = np.asarray(self.rates, dtype=float)
        if rates.shape != (k,):
            raise ModelError(f"expected {k} rates, got shape {rates.shape}")
        if not np.all(rates > 0) or not np.all(np.isfinite(rates)):
            raise ModelError("switching rates must be positive and finite")
        jump = np.asarray(self.jump, dtype=float)
        if jump.shape != (k, k):
            raise ModelError(f"jump matrix must be {k}x{k}, got shape {jump.shape}")
        if np.any(np.diag(jump) != 0):
            raise ModelError("jump matrix must have zero diagonal")
        off = jump[~np.eye(k, dtype=bool)]
        if np.any(off <= 0):
            raise ModelError("jump matrix off-diagonal entries must be positive")
        if np.any(np.abs(jump.sum(axis=1) - 1) > 1e-12):
            raise ModelError("jump matrix rows must sum to 1")
        rates.setflags(write=False)
        jump.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "jump", jump)

    @classmethod
    def uniform(cls, manifold: Manifold, fields: Sequence[FieldExpr],
                rates: float | Sequence[float] = 1.0) -> "SwitchingSystem":
        """Uniform jumps to the other states; a scalar rate applies to every state."""
        k = len(fields)
        if k < 2:
            raise ModelError("need at least two vector fields: a single state has no state to "
                             "switch to")
        rates = np.broadcast_to(np.asarray(rates, dtype=float), (k,)).copy()
        jump = (np.ones((k, k)) - np.eye(k)) / (k - 1)
        return cls(manifold, tuple(fields), rates, jump)

    @property
    def n_states(self) -> int:
        return len(self.fields)

    @property
    def dim(self) -> int:
        return self.manifold.n

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return np.cumsum(self.jump, axis=1)

    def stationary_distribution(self) -> np.ndarray:
        """Stationary law of the driving state A: pi_i proportional to nu_i / rate_i,
        where nu is the stationary law of the jump chain."""
        k = self.n_states
        w, v = np.linalg.eig(self.jump.T)
        nu = np.real(v[:, np.argmin(np.abs(w - 1))])
        nu = nu / nu.sum()
        pi = nu / self.rates
        return pi / pi.sum()

    def next_state(self, rng: np.random.Generator, state: int) -> int:
        return categorical(rng, self._cumulative[state])


@dataclass
class Segment:
    """One stretch of deterministic flow under a fixed state.

    ``times``/``points`` are the grid samples falling in
    ``[start_time, start_time + duration)``; ``start``/``end`` are the
    boundary points, always recorded.
    """

    state: int
    start_time: float
    duration: float
    start: np.ndarray
    end: np.ndarray
    times: np.ndarray
    points: np.ndarray

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


@dataclass
class Trajectory:
    """A realization of (X, A) on [0, total_time]; states are 0-based."""

    initial_point: np.ndarray
    initial_state: int
    segments: list[Segment]
    total_time: float
    sample_dt: float
    manifold: Manifold
    n_states: int
    seed: object = None
    events: list[dict] = field(default_factory=list)

    @property
    def n_jumps(self) -> int:
        return len(self.events)

    def sample_times(self) -> np.ndarray:
        return np.concatenate([s.times for s in self.segments]) if self.segments else np.zeros(0)

    def sample_points(self) -> np.ndarray:
        if not self.segments:
            return np.zeros((0, self.manifold.n))
        return np.concatenate([s.points for s in self.segments])

    def sample_states(self) -> np.ndarray:
        return np.concatenate([np.full(len(s.times), s.state, dtype=np.int64)
                               for s in self.segments])

    def holding_times(self) -> list[tuple[int, float]]:
        """(state, duration) for each completed holding period (the final, truncated
        segment is excluded)."""
        return [(s.state, s.duration) for s in self.segments[:-1]]

    def table(self) -> tuple[list[str], list[list]]:
        """Header ``t,state,x1..xn`` (state 1-based) and one row per grid sample or
        segment endpoint, in time order."""
        n = self.manifold.n
        header = ["t", "state"] + [f"x{j}" for j in range(1, n + 1)]
        rows = []
        for seg in self.segments:
            pts = [(t, p) for t, p in zip(seg.times, seg.points)]
            if not pts or pts[0][0] != seg.start_time:
                pts.insert(0, (seg.start_time, seg.start))
            pts.append((seg.end_time, seg.end))
            rows.extend([t, seg.state + 1, *p] for t, p in pts)
        return header, rows

    def write_csv(self, fh, fmt: str = "csv") -> None:
        write_table(fh, *self.table(), fmt)

    def write_events(self, fh) -> None:
        """JSON lines ``{t, from_state, to_state, point}`` per jump (states 1-based)."""
        for ev in self.events:
            rec = {"t": ev["t"], "from_state": ev["from_state"] + 1,
                   "to_state": ev["to_state"] + 1, "point": list(ev["point"])}
            fh.write(dumps(rec) + "\n")

    def events_jsonl(self) -> str:
        buf = io.StringIO()
        self.write_events(buf)
        return buf.getvalue()


def _check_start(sys: SwitchingSystem, xi, i: int) -> np.ndarray:
    x = np.asarray(xi, dtype=float).ravel()
    if x.shape != (sys.dim,):
        raise ValueError(f"initial point has dimension {x.size}, system has {sys.dim}")
    if not 0 <= i < sys.n_states:
        raise ValueError(f"initial state {i} out of range 0..{sys.n_states - 1}")
    return sys.manifold.canonicalize(x)


def sample_path(sys: SwitchingSystem, xi, i: int, horizon: float, seed=None,
                sample_dt: float = 0.01, opts: IntegratorOptions | None = None) -> Trajectory:
    """Simulate (X, A) on [0, horizon] from (xi, i).

    Grid samples are taken at times ``k * sample_dt < horizon``; segment
    endpoints are stored separately on each :class:`Segment`.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not sample_dt > 0:
        raise ValueError("sample_dt must be positive")
    opts = opts or DEFAULT_OPTIONS
    man = sys.manifold
    x = _check_start(sys, xi, i)
    rng = make_rng(seed)
    state = i
    t = 0.0
    k_next = 0  # next grid index
    segments: list[Segment] = []
    events: list[dict] = []
    h_cache: dict[int, float | None] = {}
    while True:
        hold = exponential(rng, sys.rates[state])
        end_t = t + hold
        stop = min(end_t, horizon)
        # grid indices in [k_next, k_end) are exactly those with t <= k*dt < stop
        k_end = max(k_next, math.ceil(stop / sample_dt))
        while k_end > k_next and (k_end - 1) * sample_dt >= stop:
            k_end -= 1
        while k_end * sample_dt < stop:
            k_end += 1
        grid = np.arange(k_next, k_end) * sample_dt
        end, pts, h_cache[state] = flow_samples(sys.fields[state], x, stop - t, grid - t, opts,
                                                h_cache.get(state))
        end = man.canonicalize(end)
        if man.is_torus and len(pts):
            pts = np.mod(pts, 1.0)
            pts[pts >= 1.0] = 0.0
        segments.append(Segment(state, t, stop - t, x, end, grid, pts))
        k_next = k_end
        x = end
        if end_t >= horizon:
            break
        nxt = sys.next_state(rng, state)
        events.append({"t": end_t, "from_state": state, "to_state": nxt, "point": end.copy()})
        state = nxt
        t = end_t
    return Trajectory(_check_start(sys, xi, i), i, segments, horizon, sample_dt, man,
                      sys.n_states, seed, events)


def sample_endpoint(sys: SwitchingSystem, xi, i: int, t: float, seed=None,
                    opts: IntegratorOptions | None = None) -> tuple[np.ndarray, int]:
    """One draw of (X_t, A_t) started from (xi, i)."""
    if not t > 0:
        raise ValueError("t must be positive")
    opts = opts or DEFAULT_OPTIONS
    man = sys.manifold
    x = _check_start(sys, xi, i)
    rng = make_rng(seed)
    state = i
    now = 0.0
    while True:
        end_t = now + exponential(rng, sys.rates[state])
        stop = min(end_t, t)
        end, _, _ = flow_samples(sys.fields[state], x, stop - now, (), opts)
        x = man.canonicalize(end)
        if end_t >= t:
            return x, state
        state = sys.next_state(rng, state)
        now = end_t


def sample_resolvent(sys: SwitchingSystem, xi, i: int, seed=None,
                     opts: IntegratorOptions | None = None) -> tuple[np.ndarray, int]:
    """One draw from the resolvent kernel: (X_T, A_T) with T ~ Exp(1).

    T comes from its own child stream, independent of the path stream.
    """
    time_seed, path_seed = spawn(seed, 2)
    T = exponential(make_rng(time_seed), 1.0)
    if T == 0.0:
        return _check_start(sys, xi, i), i
    return sample_endpoint(sys, xi, i, T, path_seed, opts)


def sample_endpoints(sys: SwitchingSystem, xi, i: int, t: float, n: int, seed=None,
                     opts: IntegratorOptions | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent endpoint draws, sample ``j`` using child stream ``j`` of ``seed``."""
    pts = np.empty((n, sys.dim))
    states = np.empty(n, dtype=np.int64)
    for j, s in enumerate(spawn(seed, n)):
        pts[j], states[j] = sample_endpoint(sys, xi, i, t, s, opts)
    return pts, states


def sample_resolvents(sys: SwitchingSystem, xi, i: int, n: int, seed=None,
                      opts: IntegratorOptions | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent resolvent draws, sample ``j`` using child stream ``j`` of ``seed``."""
    pts = np.empty((n, sys.dim))
    states = np.empty(n, dtype=np.int64)
    for j, s in enumerate(spawn(seed, n)):
        pts[j], states[j] = sample_resolvent(sys, xi, i, s, opts)
    return pts, states

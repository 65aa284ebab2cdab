"""Flows of single vector fields, composite flows and their derivatives.

Everything integrates in covering coordinates; on the torus points are
reduced to [0, 1)^n only at the end of each leg, so variational Jacobians
never see the wrap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .expr import EvaluationError, FieldExpr
from .lie import span_rank
from .rng import make_rng

EUCLIDEAN = "euclidean"
TORUS = "torus"


@dataclass(frozen=True)
class Manifold:
    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, TORUS):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("manifold dimension must be positive")

    @classmethod
    def euclidean(cls, n: int) -> "Manifold":
        return cls(EUCLIDEAN, n)

    @classmethod
    def torus(cls, n: int) -> "Manifold":
        return cls(TORUS, n)

    @property
    def is_torus(self) -> bool:
        return self.kind == TORUS

    def canonicalize(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_torus:
            x = np.mod(x, 1.0)
            # mod can return exactly 1.0 for tiny negative inputs
            x[x >= 1.0] = 0.0
        return x

    def distance(self, a, b) -> np.ndarray:
        """Distance between points (broadcasts over leading axes); wrapped on the torus."""
        d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        if self.is_torus:
            d = np.mod(d, 1.0)
            d = np.minimum(d, 1.0 - d)
        return np.sqrt(np.sum(d * d, axis=-1))


@dataclass(frozen=True)
class IntegratorOptions:
    """``method`` is ``"rk45"`` (adaptive Dormand-Prince 5(4)) or ``"rk4"`` (fixed step ``dt``)."""

    method: str = "rk45"
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    max_step: float = math.inf
    dt: float = 1e-3

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("integrator tolerances must be positive")
        if not self.max_step > 0 or not self.dt > 0:
            raise ValueError("max_step and dt must be positive")


DEFAULT_OPTIONS = IntegratorOptions()


class IntegrationError(RuntimeError):
    """Step size underflow or divergence; usually a field that is not forward complete."""

    def __init__(self, message: str, state, time: float):
        self.state = tuple(float(v) for v in state)
        self.time = float(time)
        super().__init__(f"{message} at t={self.time:.17g}, state={self.state}")


# ---------------------------------------------------------------------------
# Integrators on plain lists.  f(y) -> list; ``stops`` are sorted offsets in
# [0, duration] at which the state is recorded.

# Dormand-Prince 5(4)
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                                22 / 525, -1 / 40)

_BLOWUP = 1e100


def _err_norm(e, y, ynew, atol, rtol):
    s = 0.0
    for ei, a, b in zip(e, y, ynew):
        sc = atol + rtol * max(abs(a), abs(b))
        s += (ei / sc) ** 2
    return math.sqrt(s / len(e))


def _initial_step(f, y, f0, opts, duration):
    atol, rtol = opts.abs_tol, opts.rel_tol
    sc = [atol + rtol * abs(v) for v in y]
    n = len(y)
    d0 = math.sqrt(sum((v / s) ** 2 for v, s in zip(y, sc)) / n)
    d1 = math.sqrt(sum((v / s) ** 2 for v, s in zip(f0, sc)) / n)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, duration)
    y1 = [a + h0 * b for a, b in zip(y, f0)]
    f1 = f(y1)
    d2 = math.sqrt(sum(((a - b) / s) ** 2 for a, b, s in zip(f1, f0, sc)) / n) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, opts.max_step)


def _dopri(f, y, duration, opts, stops=(), h=None):
    atol, rtol = opts.abs_tol, opts.rel_tol
    samples = []
    si = 0
    nstops = len(stops)
    while si < nstops and stops[si] <= 0.0:
        samples.append(list(y))
        si += 1
    if duration <= 0.0:
        return y, samples, h
    k1 = f(y)
    if h is None or not h > 0:
        h = _initial_step(f, y, k1, opts, duration)
    h = min(h, opts.max_step)
    t = 0.0
    while t < duration:
        target = stops[si] if si < nstops else duration
        if target > duration:
            target = duration
        gap = target - t
        clipped = h >= gap
        hs = gap if clipped else h
        y2 = [a + hs * (_A21 * b1) for a, b1 in zip(y, k1)]
        k2 = f(y2)
        y3 = [a + hs * (_A31 * b1 + _A32 * b2) for a, b1, b2 in zip(y, k1, k2)]
        k3 = f(y3)
        y4 = [a + hs * (_A41 * b1 + _A42 * b2 + _A43 * b3) for a, b1, b2, b3 in zip(y, k1, k2, k3)]
        k4 = f(y4)
        y5 = [a + hs * (_A51 * b1 + _A52 * b2 + _A53 * b3 + _A54 * b4)
              for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        k5 = f(y5)
        y6 = [a + hs * (_A61 * b1 + _A62 * b2 + _A63 * b3 + _A64 * b4 + _A65 * b5)
              for a, b1, b2, b3, b4, b5 in zip(y, k1, k2, k3, k4, k5)]
        k6 = f(y6)
        ynew = [a + hs * (_B1 * b1 + _B3 * b3 + _B4 * b4 + _B5 * b5 + _B6 * b6)
                for a, b1, b3, b4, b5, b6 in zip(y, k1, k3, k4, k5, k6)]
        finite = all(math.isfinite(v) for v in ynew)
        if finite:
            k7 = f(ynew)
            e = [hs * (_E1 * b1 + _E3 * b3 + _E4 * b4 + _E5 * b5 + _E6 * b6 + _E7 * b7)
                 for b1, b3, b4, b5, b6, b7 in zip(k1, k3, k4, k5, k6, k7)]
            err = _err_norm(e, y, ynew, atol, rtol)
        else:
            err = math.inf
        if err <= 1.0:
            t = target if clipped else t + hs
            y = ynew
            k1 = k7
            if max(abs(v) for v in y) > _BLOWUP:
                raise IntegrationError("state diverged (blow-up suspected)", y, t)
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            hn = min(hs * fac, opts.max_step)
            h = max(h, hn) if clipped else hn
            if clipped:
                while si < nstops and stops[si] <= t:
                    samples.append(list(y))
                    si += 1
        else:
            fac = 0.2 if not math.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
            h = hs * fac
            if h < 1e-14 * max(1.0, t) or h < 1e-300:
                raise IntegrationError("step size underflow (blow-up suspected)", y, t)
    return y, samples, h


def _rk4(f, y, duration, opts, stops=(), h=None):
    samples = []
    si = 0
    nstops = len(stops)
    while si < nstops and stops[si] <= 0.0:
        samples.append(list(y))
        si += 1
    t = 0.0
    dt = opts.dt
    while t < duration:
        target = min(stops[si] if si < nstops else duration, duration)
        clipped = dt >= target - t
        hs = target - t if clipped else dt
        k1 = f(y)
        k2 = f([a + 0.5 * hs * b for a, b in zip(y, k1)])
        k3 = f([a + 0.5 * hs * b for a, b in zip(y, k2)])
        k4 = f([a + hs * b for a, b in zip(y, k3)])
        y = [a + hs / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        t = target if clipped else t + hs
        if not all(math.isfinite(v) and abs(v) < _BLOWUP for v in y):
            raise IntegrationError("state diverged (blow-up suspected)", y, t)
        if clipped:
            while si < nstops and stops[si] <= t:
                samples.append(list(y))
                si += 1
    return y, samples, h


def _solve(f, y, duration, opts, stops=(), h=None):
    try:
        if opts.method == "rk4":
            return _rk4(f, y, duration, opts, stops, h)
        return _dopri(f, y, duration, opts, stops, h)
    except (ZeroDivisionError, OverflowError) as exc:
        raise IntegrationError(f"field evaluation failed ({exc})", y, 0.0) from exc


def _variational_rhs(u: FieldExpr) -> Callable:
    n = u.dim
    fu = u.compiled
    ju = u.compiled_jacobian
    idx = range(n)

    def g(y):
        x = y[:n]
        a = ju(x)
        out = fu(x)
        for r in idx:
            ar = a[r]
            for c in idx:
                out.append(sum(ar[k] * y[n + k * n + c] for k in idx))
        return out

    return g


def _as_point(xi, n: int) -> list[float]:
    x = [float(v) for v in np.ravel(xi)]
    if len(x) != n:
        raise ValueError(f"point has dimension {len(x)}, expected {n}")
    return x


def _manifold(manifold, n):
    if manifold is None:
        return Manifold.euclidean(n)
    if manifold.n != n:
        raise ValueError(f"manifold dimension {manifold.n} does not match field dimension {n}")
    return manifold


def _check_time(t):
    if not t >= 0:
        raise ValueError(f"flow time must be nonnegative, got {t}")


# ---------------------------------------------------------------------------
# Public API

def flow_samples(u: FieldExpr, xi, duration: float, offsets=(), opts: IntegratorOptions | None = None,
                 h: float | None = None):
    """Flow ``xi`` for ``duration`` in covering coordinates, recording states at ``offsets``.

    Returns ``(end, samples, h)`` where ``samples`` is an array of shape
    ``(len(offsets), n)`` and ``h`` is the last step-size proposal, which can
    be passed back in to warm-start the next call.
    """
    opts = opts or DEFAULT_OPTIONS
    n = u.dim
    x = _as_point(xi, n)
    offsets = np.asarray(offsets, dtype=float)
    if u.is_constant:
        c = np.asarray(u.compiled(x), dtype=float)
        x0 = np.asarray(x)
        return x0 + duration * c, x0 + offsets[:, None] * c, h
    y, samples, h = _solve(u.compiled, x, duration, opts, offsets.tolist(), h)
    return np.asarray(y), np.asarray(samples, dtype=float).reshape(len(offsets), n), h


def integrate(u: FieldExpr, xi, t: float, manifold: Manifold | None = None,
              opts: IntegratorOptions | None = None) -> np.ndarray:
    """Phi_u(t, xi).  Constant fields are translated exactly."""
    _check_time(t)
    m = _manifold(manifold, u.dim)
    end, _, _ = flow_samples(u, xi, t, (), opts)
    return m.canonicalize(end)


def composite_flow(fields: Sequence[FieldExpr], states: Sequence[int], durations: Sequence[float],
                   xi, manifold: Manifold | None = None,
                   opts: IntegratorOptions | None = None) -> np.ndarray:
    """Flow along ``fields[states[0]]`` for ``durations[0]``, then the next leg, and so on.

    States are 0-based indices into ``fields``.
    """
    if len(states) != len(durations):
        raise ValueError("states and durations must have equal length")
    n = fields[0].dim
    m = _manifold(manifold, n)
    x = np.asarray(_as_point(xi, n))
    for i, t in zip(states, durations):
        _check_time(t)
        x = integrate(fields[i], x, t, m, opts)
    return x


def _flow_with_jacobian(u: FieldExpr, x, t, opts):
    n = u.dim
    if u.is_constant or t == 0.0:
        end, _, _ = flow_samples(u, x, t, (), opts)
        return end, np.eye(n)
    y0 = list(x) + [1.0 if r == c else 0.0 for r in range(n) for c in range(n)]
    y, _, _ = _solve(_variational_rhs(u), y0, t, opts)
    return np.asarray(y[:n]), np.asarray(y[n:]).reshape(n, n)


def flow_jacobian_ic(u: FieldExpr, xi, t: float, manifold: Manifold | None = None,
                     opts: IntegratorOptions | None = None) -> np.ndarray:
    """Jacobian of xi -> Phi_u(t, xi), from the variational equation J' = Du(x) J."""
    _check_time(t)
    _manifold(manifold, u.dim)
    _, jac = _flow_with_jacobian(u, _as_point(xi, u.dim), t, opts or DEFAULT_OPTIONS)
    return jac


def endpoint_time_jacobian(fields: Sequence[FieldExpr], states: Sequence[int],
                           durations: Sequence[float], total_time: float, xi,
                           manifold: Manifold | None = None,
                           opts: IntegratorOptions | None = None) -> np.ndarray:
    """Derivative of (t_1..t_m) -> Phi_states(t_1, .., t_m, T - sum t_l, xi).

    ``states`` has ``m + 1`` entries; the last leg absorbs the remaining time.
    Column ``l`` is ``J_{l->end} u_{i_l}(x_l) - u_{i_last}(endpoint)``, with
    ``x_l`` the switch point ending leg ``l`` and ``J_{l->end}`` the product of
    the variational Jacobians of the later legs.

    The unconstrained map with all legs free is handled by
    :func:`free_time_jacobian`, which reuses this computation.
    """
    m = len(durations)
    if len(states) != m + 1:
        raise ValueError("states must have one more entry than durations")
    if any(t < 0 for t in durations):
        raise ValueError("durations must be nonnegative")
    if not sum(durations) < total_time:
        raise ValueError(f"durations sum to {sum(durations)}, must be below total time {total_time}")
    n = fields[0].dim
    opts = opts or DEFAULT_OPTIONS
    _manifold(manifold, n)
    legs = list(durations) + [total_time - sum(durations)]
    x = _as_point(xi, n)
    ends, jacs = [], []
    for i, t in zip(states, legs):
        end, jac = _flow_with_jacobian(fields[i], x, t, opts)
        ends.append(end)
        jacs.append(jac)
        x = end.tolist()
    last = np.asarray(fields[states[-1]].compiled(x))
    cols = np.zeros((n, m))
    for l in range(m):
        v = np.asarray(fields[states[l]].compiled(ends[l].tolist()))
        for j in range(l + 1, m + 1):
            v = jacs[j] @ v
        cols[:, l] = v - last
    return cols


def free_time_jacobian(fields: Sequence[FieldExpr], states: Sequence[int],
                       durations: Sequence[float], xi, manifold: Manifold | None = None,
                       opts: IntegratorOptions | None = None) -> np.ndarray:
    """Derivative of (t_1..t_k) -> Phi_states(t_1, .., t_k, xi), all legs free.

    Evaluated as the constrained map with total time ``sum(durations)``:
    adding ``u_last(endpoint)`` back to each column undoes the dependence of
    the last leg, and ``u_last(endpoint)`` itself is the last column.
    The last duration must be positive.
    """
    if len(states) != len(durations):
        raise ValueError("states and durations must have equal length")
    n = fields[0].dim
    total = float(sum(durations))
    cols = endpoint_time_jacobian(fields, states, durations[:-1], total, xi, manifold, opts)
    end = composite_flow(fields, states, durations, xi, None, opts)
    last = np.asarray(fields[states[-1]].compiled(end.tolist())).reshape(n, 1)
    return np.hstack([cols + last, last])


def is_regular_point(fields: Sequence[FieldExpr], states: Sequence[int],
                     durations: Sequence[float], total_time: float, xi,
                     manifold: Manifold | None = None, tol: float = 1e-9,
                     opts: IntegratorOptions | None = None) -> tuple[bool, int]:
    """Whether the endpoint map has a full-rank differential at ``durations``."""
    jac = endpoint_time_jacobian(fields, states, durations, total_time, xi, manifold, opts)
    rank, _ = span_rank(jac.T, tol)
    return rank >= fields[0].dim, rank


def find_regular_point(fields: Sequence[FieldExpr], m: int, total_time: float, xi,
                       manifold: Manifold | None = None, n_draws: int = 200, seed=None,
                       tol: float = 1e-9, opts: IntegratorOptions | None = None):
    """Random search for a regular point of the endpoint map with ``m`` free legs.

    Draws state sequences with consecutive states distinct (when more than
    one field is available) and durations uniform on the open simplex
    ``sum t_l < total_time``.  Returns ``(states, durations, rank)`` for the
    first regular draw, or ``None`` after ``n_draws`` failures.
    """
    rng = make_rng(seed)
    k = len(fields)
    for _ in range(n_draws):
        states = [int(rng.integers(k))]
        for _ in range(m):
            if k == 1:
                states.append(0)
            else:
                nxt = int(rng.integers(k - 1))
                states.append(nxt + (nxt >= states[-1]))
        w = rng.dirichlet(np.ones(m + 1))
        durations = (w[:m] * total_time).tolist()
        try:
            ok, rank = is_regular_point(fields, states, durations, total_time, xi, manifold,
                                        tol, opts)
        except (IntegrationError, EvaluationError):
            continue
        if ok:
            return states, durations, rank
    return None

"""Monte Carlo exploration of reachable sets.

Each sample is a random admissible state sequence (consecutive states
distinct) with positive leg durations, pushed through the composite flow.
Clouds keep the (states, durations) witness of every point so membership
claims can be replayed exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import EvaluationError, FieldExpr
from .flow import IntegrationError, IntegratorOptions, Manifold, composite_flow
from .formats import dumps, write_table
from .rng import make_rng

MIN_LEG_FRACTION = 1e-6


@dataclass(frozen=True)
class FixedTime:
    """Durations sum exactly to ``t``."""
    t: float


@dataclass(frozen=True)
class AnyTime:
    """Durations uniform on the simplex ``sum t_l <= max_total``."""
    max_total: float


@dataclass
class ReachCloud:
    origin: np.ndarray
    points: np.ndarray
    witnesses: list[tuple[tuple[int, ...], tuple[float, ...]]]
    mode: FixedTime | AnyTime
    manifold: Manifold
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.witnesses)

    def prefix(self, n: int) -> "ReachCloud":
        return ReachCloud(self.origin, self.points[:n], self.witnesses[:n], self.mode,
                          self.manifold, self.skipped)

    def table(self) -> tuple[list[str], list[list]]:
        """Header ``x1..xn,switches,total_time`` and one row per point."""
        n = self.manifold.n
        header = [f"x{j}" for j in range(1, n + 1)] + ["switches", "total_time"]
        rows = [[*p, len(states) - 1, float(sum(durs))]
                for p, (states, durs) in zip(self.points, self.witnesses)]
        return header, rows

    def write_csv(self, fh, fmt: str = "csv") -> None:
        write_table(fh, *self.table(), fmt)

    def write_witnesses(self, fh) -> None:
        """JSON lines ``{point, states, durations}`` with 1-based states."""
        for p, (states, durs) in zip(self.points, self.witnesses):
            fh.write(dumps({"point": list(p), "states": [s + 1 for s in states],
                            "durations": list(durs)}) + "\n")


def _states(rng, k: int, m: int) -> list[int]:
    states = [int(rng.integers(k))]
    for _ in range(m - 1):
        nxt = int(rng.integers(k - 1))
        states.append(nxt + (nxt >= states[-1]))
    return states


def _durations(rng, mode, m: int) -> list[float]:
    if isinstance(mode, FixedTime):
        horizon = mode.t
        while True:
            w = rng.dirichlet(np.ones(m)) if m > 1 else np.ones(1)
            d = (w * horizon).tolist()
            # close the sum exactly
            d[-1] = horizon - sum(d[:-1])
            if min(d) >= MIN_LEG_FRACTION * horizon:
                return d
    horizon = mode.max_total
    while True:
        w = rng.dirichlet(np.ones(m + 1))
        d = (w[:m] * horizon).tolist()
        if min(d) >= MIN_LEG_FRACTION * horizon:
            return d


def sample_reachable(fields: Sequence[FieldExpr], xi, mode: FixedTime | AnyTime,
                     n_samples: int, max_switches: int, seed=None,
                     manifold: Manifold | None = None,
                     opts: IntegratorOptions | None = None) -> ReachCloud:
    """Random reachable points from ``xi``.

    ``max_switches`` bounds the number of flow legs: each sample uses a leg
    count drawn uniformly from ``1..max_switches`` (a single field only ever
    gets one leg).  Samples whose integration fails are skipped and counted.
    All draws come from one stream, so a cloud of ``n`` samples is a prefix
    of the cloud of ``N > n`` samples with the same seed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if max_switches < 1:
        raise ValueError("max_switches must be at least 1")
    if isinstance(mode, FixedTime) and not mode.t > 0:
        raise ValueError("fixed time must be positive")
    if isinstance(mode, AnyTime) and not mode.max_total > 0:
        raise ValueError("max_total must be positive")
    n = fields[0].dim
    man = manifold or Manifold.euclidean(n)
    origin = man.canonicalize(np.asarray(xi, dtype=float))
    rng = make_rng(seed)
    k = len(fields)
    points, witnesses = [], []
    skipped = 0
    for _ in range(n_samples):
        m = 1 if k == 1 else int(rng.integers(1, max_switches + 1))
        states = _states(rng, k, m) if k > 1 else [0]
        durs = _durations(rng, mode, m)
        try:
            p = composite_flow(fields, states, durs, origin, man, opts)
        except (IntegrationError, EvaluationError):
            skipped += 1
            continue
        points.append(p)
        witnesses.append((tuple(states), tuple(durs)))
    pts = np.asarray(points, dtype=float).reshape(len(points), n)
    return ReachCloud(origin, pts, witnesses, mode, man, skipped)


def approachable_distance(cloud: ReachCloud, target, manifold: Manifold | None = None):
    """Smallest distance from ``target`` to the cloud, with the achieving witness.

    Returns ``(distance, (states, durations))``; the witness's point is
    ``cloud.points[cloud.witnesses.index(witness)]``.
    """
    if not len(cloud):
        raise ValueError("empty cloud")
    man = manifold or cloud.manifold
    d = man.distance(cloud.points, np.asarray(target, dtype=float))
    j = int(np.argmin(d))
    return float(d[j]), cloud.witnesses[j]

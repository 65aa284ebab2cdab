"""Iterated Lie brackets and the pointwise rank Conditions A and B.

Brackets are generated right-normed: starting from the generators
``u_1 .. u_k``, depth ``d + 1`` consists of ``[u_j, B]`` for every
generator ``u_j`` and every live element ``B`` of depth ``d``.  By the
Jacobi identity every bracket of two right-normed elements is a linear
combination of right-normed ones, so these elements span the Lie algebra
generated by the family, and those of depth >= 2 span its derived algebra.

Condition B asks that the generated algebra, evaluated at a point, spans
the tangent space.  Condition A asks the same of the derived algebra
together with the differences ``u_i - u_1`` (the combinations
``sum c_i u_i`` with ``sum c_i = 0``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .expr import BinOp, FieldExpr, simplify
from .formats import dumps

DEFAULT_DEPTH_CAP = 4
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ELEMENTS = 5000

HOLDS = "holds"
NOT_VERIFIED = "not_verified"
FAILS_EXACTLY = "fails_exactly"


def bracket(u: FieldExpr, v: FieldExpr) -> FieldExpr:
    """Symbolic Lie bracket [u, v]^k = sum_j (u^j d_j v^k - v^j d_j u^k)."""
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")
    n = u.dim
    du, dv = u.derivatives, v.derivatives
    comps = []
    for k in range(n):
        plus = minus = None
        for j in range(n):
            a = BinOp("*", u.components[j], dv[j].components[k])
            b = BinOp("*", v.components[j], du[j].components[k])
            plus = a if plus is None else BinOp("+", plus, a)
            minus = b if minus is None else BinOp("+", minus, b)
        comps.append(BinOp("-", plus, minus))
    return simplify(FieldExpr(tuple(comps), n, {**u.params, **v.params}))


@dataclass(frozen=True, eq=False)
class BracketElement:
    """A leaf generator or a bracket ``[left, right]`` of two elements."""

    expr: FieldExpr
    generator: int | None = None  # 0-based index for leaves
    left: "BracketElement | None" = None
    right: "BracketElement | None" = None
    depth: int = 1

    @property
    def dead(self) -> bool:
        return self.expr.is_syntactically_zero

    @property
    def label(self) -> str:
        if self.generator is not None:
            return f"u{self.generator + 1}"
        return f"[{self.left.label},{self.right.label}]"

    def __repr__(self) -> str:
        return f"BracketElement({self.label}, depth={self.depth}{', dead' if self.dead else ''})"


def _extend(fields: Sequence[FieldExpr], leaves: list[BracketElement],
            level: list[BracketElement]) -> list[BracketElement]:
    out = []
    for b in level:
        if b.dead:
            continue
        for leaf in leaves:
            out.append(BracketElement(bracket(leaf.expr, b.expr), left=leaf, right=b,
                                      depth=b.depth + 1))
    return out


@lru_cache(maxsize=64)
def _generate(fields: tuple[FieldExpr, ...], depth_cap: int, max_elements: int):
    leaves = [BracketElement(f, generator=i) for i, f in enumerate(fields)]
    levels = [leaves]
    truncated = False
    count = len(leaves)
    while len(levels) < depth_cap:
        live = [b for b in levels[-1] if not b.dead]
        if not live:
            break
        if count + len(live) * len(leaves) > max_elements:
            warnings.warn(
                f"bracket generation stopped at depth {len(levels)}: "
                f"element cap {max_elements} would be exceeded", RuntimeWarning, stacklevel=3)
            truncated = True
            break
        nxt = _extend(fields, leaves, levels[-1])
        count += len(nxt)
        levels.append(nxt)
    return tuple(tuple(lv) for lv in levels), truncated


def generate_brackets(fields: Sequence[FieldExpr], depth_cap: int = DEFAULT_DEPTH_CAP,
                      max_elements: int = DEFAULT_MAX_ELEMENTS) -> list[BracketElement]:
    """All right-normed brackets up to ``depth_cap``, dead (zero) ones included.

    Dead elements are kept so callers can see them, but are never bracketed
    further.  A ``RuntimeWarning`` is issued if the element count would
    exceed ``max_elements``; generation stops at the last complete depth.
    """
    if depth_cap < 1:
        raise ValueError("depth_cap must be at least 1")
    if not fields:
        raise ValueError("need at least one vector field")
    _check_dims(fields)
    levels, _ = _generate(tuple(fields), depth_cap, max_elements)
    return [b for lv in levels for b in lv]


def span_rank(vectors, tol: float = DEFAULT_TOL) -> tuple[int, np.ndarray]:
    """Numerical rank of the span: singular values above ``tol * s_max``."""
    a = np.asarray(vectors, dtype=float)
    if a.size == 0:
        return 0, np.zeros(0)
    if a.ndim == 1:
        a = a[None, :]
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0 or not np.isfinite(s[0]):
        return 0, s
    return int(np.sum(s > tol * s[0])), s


@dataclass
class ConditionReport:
    condition: str  # "A" or "B"
    point: tuple[float, ...]
    verdict: str
    depth: int
    rank: int
    certificate: list[str] = field(default_factory=list)
    singular_values: list[float] = field(default_factory=list)
    rank_by_depth: list[int] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def to_record(self) -> dict:
        return {
            "condition": self.condition,
            "point": [float(v) for v in self.point],
            "verdict": self.verdict,
            "depth": self.depth,
            "rank": self.rank,
            "singular_values": [float(s) for s in self.singular_values],
            "certificate": list(self.certificate),
        }

    def to_json(self) -> str:
        return dumps(self.to_record())

    def summary(self) -> str:
        if self.verdict == HOLDS:
            v = f"Holds(depth {self.depth})"
        elif self.verdict == FAILS_EXACTLY:
            v = "FailsExactly"
        else:
            v = f"NotVerified(up to depth {self.depth})"
        pt = ", ".join(f"{x:.6g}" for x in self.point)
        return f"Condition {self.condition} at ({pt}): {v}, rank {self.rank}"


def _check_dims(fields):
    n = fields[0].dim
    for f in fields:
        if f.dim != n:
            raise ValueError(f"dimension mismatch: fields of dimension {n} and {f.dim}")


def _greedy_certificate(labels, vectors, tol) -> list[str]:
    chosen, rows, rank = [], [], 0
    for lab, v in zip(labels, vectors):
        r, _ = span_rank(rows + [v], tol)
        if r > rank:
            rows.append(v)
            chosen.append(lab)
            rank = r
    return chosen


def _check(condition: str, fields: Sequence[FieldExpr], xi, depth_cap: int, tol: float,
           max_elements: int) -> ConditionReport:
    if not fields:
        raise ValueError("need at least one vector field")
    _check_dims(fields)
    n = fields[0].dim
    xi = tuple(float(v) for v in xi)
    if len(xi) != n:
        raise ValueError(f"point has dimension {len(xi)}, fields have {n}")
    levels, truncated = _generate(tuple(fields), depth_cap, max_elements)

    labels: list[str] = []
    vectors: list[np.ndarray] = []
    if condition == "A":
        u1 = fields[0](xi)
        for i in range(1, len(fields)):
            labels.append(f"u{i + 1}-u1")
            vectors.append(fields[i](xi) - u1)
    rank_by_depth = []
    rank, s = 0, np.zeros(0)
    for d, level in enumerate(levels, start=1):
        if condition == "B" or d >= 2:
            for b in level:
                if not b.dead:
                    labels.append(b.label)
                    vectors.append(b.expr(xi))
        rank, s = span_rank(vectors, tol)
        rank_by_depth.append(rank)
        if rank == n:
            return ConditionReport(condition, xi, HOLDS, d, rank,
                                   _greedy_certificate(labels, vectors, tol),
                                   s.tolist(), rank_by_depth)

    # rank < n: decide whether the algebra is exactly saturated
    last = levels[-1]
    saturated = not truncated and (
        all(b.dead for b in last)
        or all(b.dead for b in _extend(fields, list(levels[0]), list(last))))
    verdict = FAILS_EXACTLY if saturated else NOT_VERIFIED
    return ConditionReport(condition, xi, verdict, len(levels), rank,
                           _greedy_certificate(labels, vectors, tol), s.tolist(), rank_by_depth)


def check_condition_B(fields: Sequence[FieldExpr], xi, depth_cap: int = DEFAULT_DEPTH_CAP,
                      tol: float = DEFAULT_TOL,
                      max_elements: int = DEFAULT_MAX_ELEMENTS) -> ConditionReport:
    """Rank of the generated Lie algebra at ``xi``.

    The verdict is ``holds`` at the smallest depth reaching full rank,
    ``fails_exactly`` when the rank is deficient and every further bracket
    is syntactically zero, and ``not_verified`` otherwise.  A rank plateau
    alone never yields ``fails_exactly``.
    """
    return _check("B", fields, xi, depth_cap, tol, max_elements)


def check_condition_A(fields: Sequence[FieldExpr], xi, depth_cap: int = DEFAULT_DEPTH_CAP,
                      tol: float = DEFAULT_TOL,
                      max_elements: int = DEFAULT_MAX_ELEMENTS) -> ConditionReport:
    """Rank of the derived algebra plus the differences ``u_i - u_1`` at ``xi``.

    Verdicts as in :func:`check_condition_B`.
    """
    return _check("A", fields, xi, depth_cap, tol, max_elements)


def periodicity_defect(f: FieldExpr, grid: int = 5) -> float:
    """Max over a ``grid**n`` lattice in [0,1)^n and unit shifts of |f(x + e_j) - f(x)|.

    Fields used on the torus must be 1-periodic in every coordinate; a
    nonzero defect means they are not.
    """
    n = f.dim
    axes = [np.arange(grid) / grid] * n
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    worst = 0.0
    for x in pts:
        fx = f(x)
        for j in range(n):
            shifted = x.copy()
            shifted[j] += 1.0
            worst = max(worst, float(np.max(np.abs(f(shifted) - fx))))
    return worst

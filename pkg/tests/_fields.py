"""Random vector fields and finite-difference oracles shared by the test modules."""
from __future__ import annotations

import numpy as np

from switchflow.expr import parse_field

LORENZ_28 = "10*(x2 - x1); x1*(28 - x3) - x2; x1*x2 - 8/3*x3"
LORENZ_27 = "10*(x2 - x1); x1*(27 - x3) - x2; x1*x2 - 8/3*x3"


def lorenz_pair():
    return parse_field(LORENZ_28, 3), parse_field(LORENZ_27, 3)


def random_component(rng: np.random.Generator, n: int, trig: bool = True) -> str:
    """Sum of up to four random monomials of degree <= 3, maybe wrapped in sin/cos."""
    terms = []
    for _ in range(int(rng.integers(1, 5))):
        coef = int(rng.integers(-3, 4)) or 1
        factors = [f"x{int(rng.integers(1, n + 1))}" for _ in range(int(rng.integers(0, 4)))]
        mono = "*".join([str(coef)] + factors)
        if trig and rng.random() < 0.2:
            mono = f"{rng.choice(['sin', 'cos'])}({mono})"
        terms.append(mono)
    return " + ".join(terms)


def random_field_text(rng: np.random.Generator, n: int, trig: bool = True) -> str:
    return "; ".join(random_component(rng, n, trig) for _ in range(n))


def random_field(rng: np.random.Generator, n: int, trig: bool = True):
    return parse_field(random_field_text(rng, n, trig), n)


def fd_jacobian(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of a callable R^n -> R^n (column j = d/dx_j)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=1)


def bracket_oracle(u, v, x) -> tuple[np.ndarray, float]:
    """[u, v](x) = Dv(x) u(x) - Du(x) v(x) from finite differences, plus a scale
    (the size of the two products) for relative comparisons."""
    a = fd_jacobian(v, x) @ u(x)
    b = fd_jacobian(u, x) @ v(x)
    return a - b, float(np.linalg.norm(a) + np.linalg.norm(b))

"""Pearson and Spearman correlation with two-sided Student-t p-values."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.special import betainc

from latwar.errors import DegenerateInput

PEARSON = "pearson"
SPEARMAN = "spearman"


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int
    method: str

    def to_json(self) -> dict:
        return {"rho": self.rho, "p_value": self.p_value, "n": self.n, "method": self.method}


def _check(x: Sequence[float], y: Sequence[float]) -> tuple[list[float], list[float]]:
    if len(x) != len(y):
        raise DegenerateInput(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise DegenerateInput(f"need at least 3 points, got {len(x)}")
    xs, ys = [float(v) for v in x], [float(v) for v in y]
    if not all(math.isfinite(v) for v in xs + ys):
        raise DegenerateInput("non-finite value")
    return xs, ys


def t_test_p_value(rho: float, n: int) -> float:
    """Two-sided p-value of H0: rho == 0 using t = rho*sqrt((n-2)/(1-rho^2)).

    With ``df = n - 2`` the two-sided tail of Student's t equals the
    regularized incomplete beta ``I_{df/(df+t^2)}(df/2, 1/2)``, and
    ``df/(df+t^2)`` simplifies to ``1 - rho^2``.
    """
    df = n - 2
    x = max(0.0, 1.0 - rho * rho)
    if x == 0.0:
        return 0.0
    return float(min(1.0, max(0.0, betainc(df / 2.0, 0.5, x))))


def _pearson_rho(xs: list[float], ys: list[float]) -> float:
    n = len(xs)
    mx, my = math.fsum(xs) / n, math.fsum(ys) / n
    dx = [v - mx for v in xs]
    dy = [v - my for v in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("zero variance")
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    denom = math.sqrt(sxx) * math.sqrt(syy)  # sqrt separately so tiny variances don't underflow
    if denom == 0.0:
        raise DegenerateInput("variance underflows")
    r = sxy / denom
    return max(-1.0, min(1.0, r))


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    xs, ys = _check(x, y)
    r = _pearson_rho(xs, ys)
    return CorrelationResult(r, t_test_p_value(r, len(xs)), len(xs), PEARSON)


def midranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the average of the ranks they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    xs, ys = _check(x, y)
    r = _pearson_rho(midranks(xs), midranks(ys))
    return CorrelationResult(r, t_test_p_value(r, len(xs)), len(xs), SPEARMAN)

"""Composite Gauss-Legendre quadrature for scalar-, vector- or matrix-valued integrands."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .config import get_tolerances
from .errors import QuadratureBudgetExceeded

__all__ = ["QuadratureResult", "gauss_legendre", "integrate", "integrate_adaptive"]


@lru_cache(maxsize=None)
def _rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(fn: Callable[[float], np.ndarray], a: float, b: float, panels: int, order: int = 8):
    """Fixed composite rule with ``panels`` equal panels of ``order`` nodes each."""
    if panels < 1:
        raise ValueError("panels must be >= 1")
    x, w = _rule(order)
    edges = np.linspace(a, b, panels + 1)
    total = None
    for lo, hi in zip(edges[:-1], edges[1:]):
        half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
        for xi, wi in zip(x, w):
            term = (wi * half) * np.asarray(fn(mid + half * xi))
            total = term if total is None else total + term
    return total


@dataclass(frozen=True)
class QuadratureResult:
    value: np.ndarray
    panels: int
    # max-abs difference between the last two refinements
    change: float


def integrate(
    fn: Callable[[float], np.ndarray],
    a: float,
    b: float,
    *,
    order: int = 8,
    start_panels: int = 1,
    agree: float | None = None,
    max_panels: int | None = None,
) -> QuadratureResult:
    """Double the panel count until two successive estimates agree.

    Agreement means ``max|I_2p - I_p| <= agree * max(1, max|I_2p|)``.

    Raises
    ------
    QuadratureBudgetExceeded
        If agreement is not reached within ``max_panels`` panels.
    """
    tol = get_tolerances()
    agree = tol.quad_agree if agree is None else agree
    max_panels = tol.quad_max_panels if max_panels is None else max_panels
    if b == a:
        zero = np.zeros_like(np.asarray(fn(a)), dtype=complex)
        return QuadratureResult(zero, 0, 0.0)
    p = start_panels
    prev = gauss_legendre(fn, a, b, p, order)
    while True:
        p *= 2
        if p > max_panels:
            raise QuadratureBudgetExceeded(f"no agreement to {agree:g} within {max_panels} panels")
        cur = gauss_legendre(fn, a, b, p, order)
        change = float(np.max(np.abs(cur - prev)))
        if change <= agree * max(1.0, float(np.max(np.abs(cur)))):
            return QuadratureResult(cur, p, change)
        prev = cur


def integrate_adaptive(
    fn: Callable[[float], np.ndarray],
    a: float,
    b: float,
    *,
    order: int = 8,
    agree: float | None = None,
    max_panels: int | None = None,
) -> QuadratureResult:
    """Bisect only the panels whose halves disagree with the whole.

    Meant for integrands with isolated kinks, such as norms of smooth
    matrix-valued functions, where uniform doubling wastes work on the smooth
    stretches.  A panel is accepted when its two halves differ from the
    one-panel estimate by at most its share ``(hi - lo) / (b - a)`` of
    ``agree * max(1, max|I|)``; ``change`` is the sum of those differences.
    """
    tol = get_tolerances()
    agree = tol.quad_agree if agree is None else agree
    max_panels = tol.quad_max_panels if max_panels is None else max_panels
    if b == a:
        zero = np.zeros_like(np.asarray(fn(a)), dtype=complex)
        return QuadratureResult(zero, 0, 0.0)
    width = b - a
    active = [(a, b, gauss_legendre(fn, a, b, 1, order))]
    done, change, accepted = None, 0.0, 0
    while active:
        refined = []
        for lo, hi, whole in active:
            mid = 0.5 * (lo + hi)
            left, right = gauss_legendre(fn, lo, mid, 1, order), gauss_legendre(fn, mid, hi, 1, order)
            refined.append((lo, mid, hi, left, right, float(np.max(np.abs(left + right - whole)))))
        total = sum((l + r for *_, l, r, _ in refined), start=done if done is not None else 0.0)
        budget = agree * max(1.0, float(np.max(np.abs(total))))
        active = []
        for lo, mid, hi, left, right, err in refined:
            if err <= budget * (hi - lo) / width:
                done = left + right if done is None else done + left + right
                change += err
                accepted += 2
            else:
                active += [(lo, mid, left), (mid, hi, right)]
        if accepted + len(active) > max_panels:
            raise QuadratureBudgetExceeded(f"no agreement to {agree:g} within {max_panels} panels")
    return QuadratureResult(done, accepted, change)

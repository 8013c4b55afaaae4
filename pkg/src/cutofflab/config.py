"""Numerical tolerances shared by every module.

All comparisons in the package go through :func:`get_tolerances`, so a study
can override any of them for its duration with :func:`use_tolerances`.
"""

from __future__ import annotations

import contextlib
import contextvars
import dataclasses
from dataclasses import dataclass
from typing import Any, Iterator, Mapping


@dataclass(frozen=True)
class Tolerances:
    # max-abs entry of U^dagger U - I
    unitary: float = 1e-10
    # relative Frobenius error of U diag(lambda) U^dagger vs. the source
    recon: float = 1e-10
    # hermiticity: defect <= herm * (1 + max-abs entry)
    herm: float = 1e-12
    # idempotency / symmetry / nesting of projectors
    projector: float = 1e-12
    # eigenvalues within this distance of a cutoff L count as <= L
    tie: float = 1e-12
    # H_L = Q(H0+B)Q vs H0 Q + Q B Q, and the ladder identities
    cutoff_identity: float = 1e-11
    # eigenvector condition number above which general f(X) is refused
    eig_cond_max: float = 1e6
    # successive composite Gauss-Legendre estimates must agree to this
    quad_agree: float = 1e-9
    quad_max_panels: int = 2**14
    # nilpotency: ||C_{m+1}|| <= nilpotent * ||C_1||
    nilpotent: float = 1e-10
    # values at or below this are numerically zero (fits, stability)
    floor: float = 1e-13

    def replace(self, **changes: Any) -> "Tolerances":
        return dataclasses.replace(self, **changes)


DEFAULT_TOLERANCES = Tolerances()

_current: contextvars.ContextVar[Tolerances] = contextvars.ContextVar(
    "cutofflab_tolerances", default=DEFAULT_TOLERANCES
)


def get_tolerances() -> Tolerances:
    return _current.get()


@contextlib.contextmanager
def use_tolerances(overrides: Tolerances | Mapping[str, Any] | None) -> Iterator[Tolerances]:
    """Temporarily replace the active tolerances.

    ``overrides`` is either a full :class:`Tolerances` or a mapping of field
    names to new values applied on top of the active record.
    """
    if overrides is None:
        yield get_tolerances()
        return
    if isinstance(overrides, Tolerances):
        tol = overrides
    else:
        unknown = set(overrides) - {f.name for f in dataclasses.fields(Tolerances)}
        if unknown:
            raise KeyError(f"unknown tolerance fields: {sorted(unknown)}")
        tol = get_tolerances().replace(**dict(overrides))
    token = _current.set(tol)
    try:
        yield tol
    finally:
        _current.reset(token)

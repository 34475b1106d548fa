"""Discrete error norms and experimental orders of convergence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = ["ErrorReport", "error_norms", "eoc"]


@dataclass
class ErrorReport:
    """Per-variable errors; ``eoc`` is filled when several resolutions are
    compared."""

    variables: tuple[str, ...]
    l2: np.ndarray
    linf: np.ndarray
    eoc: list[float] = field(default_factory=list)

    def __getitem__(self, var: str) -> tuple[float, float]:
        i = self.variables.index(var)
        return float(self.l2[i]), float(self.linf[i])

    @property
    def l2_total(self) -> float:
        return float(np.sum(self.l2))

    @property
    def linf_total(self) -> float:
        return float(np.sum(self.linf))


def error_norms(
    weights: np.ndarray,
    u: np.ndarray,
    u_exact: np.ndarray,
    variables: Sequence[str] | None = None,
) -> ErrorReport:
    """Weighted discrete L2 and nodal max errors.

    *weights* has the nodal shape of a single variable. If *u* has one more
    leading axis than *weights*, that axis enumerates variables.
    """
    u = np.asarray(u, dtype=np.float64)
    u_exact = np.asarray(u_exact, dtype=np.float64)
    if u.shape != u_exact.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {u_exact.shape}")

    if u.ndim == weights.ndim:
        u, u_exact = u[None], u_exact[None]
    e = (u - u_exact).reshape(u.shape[0], -1)
    w = np.asarray(weights).reshape(-1)

    l2 = np.sqrt(np.sum(w * e * e, axis=1))
    linf = np.max(np.abs(e), axis=1)
    if variables is None:
        variables = ("u",) if e.shape[0] == 1 else tuple(f"u{i}" for i in range(e.shape[0]))
    return ErrorReport(tuple(variables), l2, linf)


def eoc(errors: Sequence[float], resolutions: Sequence[float]) -> list[float]:
    """Orders ``log(e_j / e_{j+1}) / log(r_{j+1} / r_j)`` between successive
    resolutions."""
    if len(errors) != len(resolutions):
        raise ValueError("need one error per resolution")
    r = np.asarray(resolutions, dtype=np.float64)
    if np.any(np.diff(r) <= 0):
        raise ValueError("resolutions must be strictly increasing")
    e = np.asarray(errors, dtype=np.float64)
    return [float(np.log(e[j] / e[j + 1]) / np.log(r[j + 1] / r[j])) for j in range(e.size - 1)]

"""Structural diagnostics: rank, nullspace consistency and the eigenvalue
property, plus two reference operators used as sanity checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fsbp.funcspace import FunctionSpace, NodeSet, equidistant_nodes
from fsbp.operator import (
    SBPOperator,
    boundary_matrix,
    exactness_residual,
    sbp_defect,
)

__all__ = [
    "NumericalError",
    "InconsistentOperatorError",
    "MatrixOperator",
    "DiagnosticsReport",
    "numerical_rank",
    "nullspace_basis",
    "is_nullspace_consistent",
    "perturbed_operator",
    "has_eigenvalue_property",
    "eigenvalue_minima",
    "diagnose",
    "rank_one_counterexample",
    "classical_fd2",
]

DEFAULT_NU = (0.75, 1.0, 2.0)


class NumericalError(ArithmeticError):
    """An SVD or eigenvalue computation did not converge."""


class InconsistentOperatorError(ValueError):
    """The operator does not differentiate constants exactly."""


@dataclass(frozen=True, eq=False)
class MatrixOperator:
    """A differentiation matrix with norm weights that need not satisfy the
    SBP property; ``Q = P D``."""

    nodes: NodeSet
    p: np.ndarray
    D: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.n

    @property
    def Q(self) -> np.ndarray:
        return self.p[:, None] * self.D

    @property
    def B(self) -> np.ndarray:
        return boundary_matrix(self.n)


def numerical_rank(M: np.ndarray, rtol: float = 1e-8) -> int:
    """Number of singular values above ``rtol * sigma_max``."""
    if rtol <= 0:
        raise ValueError("rtol must be positive")
    try:
        s = np.linalg.svd(np.asarray(M, dtype=np.float64), compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def nullspace_basis(M: np.ndarray, rtol: float = 1e-8) -> np.ndarray:
    """Orthonormal columns spanning the numerical nullspace of *M*."""
    try:
        _, s, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    smax = s[0] if s.size else 0.0
    keep = np.ones(Vt.shape[0], dtype=bool)
    keep[: s.size] = s <= rtol * smax
    return Vt[keep].T


def _constant_residual(op) -> float:
    return float(np.linalg.norm(op.D @ np.ones(op.n)))


def is_nullspace_consistent(op, rtol: float = 1e-8, const_tol: float = 1e-9) -> bool:
    """Whether the nullspace of ``D`` consists of the constants only,
    i.e. ``rank(D) = N - 1``.

    Requires ``D 1 = 0`` to within *const_tol*.
    """
    res = _constant_residual(op)
    if res > const_tol:
        raise InconsistentOperatorError(
            f"operator is not exact for constants (residual {res:.3e}); "
            "the rank criterion does not apply"
        )
    return numerical_rank(op.D, rtol) == op.n - 1


def perturbed_operator(op, nu: float) -> np.ndarray:
    """``D + nu P^{-1} e_L e_L^T``: ``D`` with a weak left boundary term."""
    Dt = np.array(op.D, dtype=np.float64)
    Dt[0, 0] += nu / op.p[0]
    return Dt


def has_eigenvalue_property(
    op, nu_samples: Sequence[float] = DEFAULT_NU
) -> tuple[bool, float]:
    """Whether every eigenvalue of the perturbed operator has positive real
    part at each sampled ``nu > 1/2``. Returns the flag and the smallest
    real part seen."""
    minima = eigenvalue_minima(op, nu_samples)
    m = min(minima)
    return bool(m > 0), m


def eigenvalue_minima(op, nu_samples: Sequence[float] = DEFAULT_NU) -> list[float]:
    """Smallest real part of the perturbed spectrum, one value per ``nu``."""
    if len(nu_samples) == 0:
        raise ValueError("need at least one nu sample")
    out = []
    for nu in nu_samples:
        if not nu > 0.5:
            raise ValueError(f"nu must exceed 1/2, got {nu}")
        try:
            ev = np.linalg.eigvals(perturbed_operator(op, nu))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigenvalue solver did not converge: {exc}") from exc
        out.append(float(np.min(ev.real)))
    return out


@dataclass
class DiagnosticsReport:
    labels: tuple[str, ...]
    exactness_residuals: np.ndarray
    sbp_defect: float
    min_norm_weight: float
    rank_D: int
    nullspace_consistent: bool
    eigenvalue_property: bool
    min_real_eig: float
    nu_samples: tuple[float, ...]
    min_real_eig_per_nu: tuple[float, ...] = ()
    constants_exact: bool = True
    n: int = 0
    thresholds: dict = field(default_factory=dict)

    def passed(self, exact_tol: float = 1e-9) -> bool:
        """All checks pass: exact on the space, SBP, nullspace consistent and
        with the eigenvalue property."""
        return bool(
            np.all(self.exactness_residuals <= exact_tol)
            and self.sbp_defect <= 1e-14 * max(self.n, 1)
            and self.min_norm_weight > 0
            and self.nullspace_consistent
            and self.eigenvalue_property
        )

    def rows(self) -> list[tuple[str, str]]:
        out = [(f"residual[{lab}]", f"{r:.3e}") for lab, r in zip(self.labels, self.exactness_residuals)]
        out += [
            ("sbp_defect", f"{self.sbp_defect:.3e}"),
            ("min_norm_weight", f"{self.min_norm_weight:.6e}"),
            ("rank_D", str(self.rank_D)),
            ("nullspace_consistent", str(self.nullspace_consistent).lower()),
            ("eigenvalue_property", str(self.eigenvalue_property).lower()),
            ("min_real_eig", f"{self.min_real_eig:.6e}"),
        ]
        for nu, m in zip(self.nu_samples, self.min_real_eig_per_nu):
            out.append((f"min_real_eig[nu={nu:g}]", f"{m:.6e}"))
        return out


def diagnose(
    op,
    space: FunctionSpace,
    rtol: float = 1e-8,
    nu_samples: Sequence[float] = DEFAULT_NU,
    const_tol: float = 1e-9,
) -> DiagnosticsReport:
    """Run every diagnostic on *op* for the function space *space*."""
    res = exactness_residual(op, space)
    rank = numerical_rank(op.D, rtol)
    minima = eigenvalue_minima(op, nu_samples)
    return DiagnosticsReport(
        labels=space.labels,
        exactness_residuals=res,
        sbp_defect=sbp_defect(op),
        min_norm_weight=float(np.min(op.p)),
        rank_D=rank,
        nullspace_consistent=rank == op.n - 1,
        eigenvalue_property=min(minima) > 0,
        min_real_eig=min(minima),
        nu_samples=tuple(float(v) for v in nu_samples),
        min_real_eig_per_nu=tuple(minima),
        constants_exact=_constant_residual(op) <= const_tol,
        n=op.n,
    )


def rank_one_counterexample(n: int, eps: float = 1e-8) -> MatrixOperator:
    """Operator on ``n`` equidistant nodes in ``[0, 1]`` whose rows all equal
    ``(-1, 0, ..., 0, 1)``.

    It is exact for linear functions and, with
    ``P = diag(1, eps, ..., eps, 1) / 2``, its SBP defect is ``O(eps)``
    although ``D`` has rank one.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if eps <= 0:
        raise ValueError("eps must be positive")
    nodes = equidistant_nodes(0.0, 1.0, n)
    row = np.zeros(n)
    row[0], row[-1] = -1.0, 1.0
    D = np.tile(row, (n, 1))
    p = np.full(n, 0.5 * eps)
    p[0] = p[-1] = 0.5
    return MatrixOperator(nodes, p, D)


def classical_fd2(n: int, x_L: float = 0.0, x_R: float = 1.0) -> SBPOperator:
    """Second-order diagonal-norm finite-difference SBP operator on
    equidistant nodes: central differences inside, one-sided first-order
    closures at the boundary."""
    nodes = equidistant_nodes(x_L, x_R, n)
    h = nodes.length / (n - 1)
    p = np.full(n, h)
    p[0] = p[-1] = 0.5 * h
    S = 0.5 * (np.eye(n, k=1) - np.eye(n, k=-1))
    return SBPOperator.from_matrices(nodes, p, S)


r"""Two-dimensional compressible Euler equations on a periodic Cartesian
block grid with tensor-product SBP operators.

The conserved state is :math:`U = (\rho, \rho v_1, \rho v_2, \rho e)` with
pressure :math:`p = (\gamma - 1)(\rho e - \rho (v_1^2 + v_2^2)/2)`. States on
a mesh have shape ``(4, K, K, N, N)``: variable, block in x, block in y,
node in x, node in y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fsbp.operator import SBPOperator
from fsbp.pde.advection import BlockMesh1D
from fsbp.pde.timestep import StateError

__all__ = [
    "VARIABLES",
    "Euler2DProblem",
    "Mesh2D",
    "pressure",
    "euler_flux",
    "hllc_flux",
    "manufactured_state",
    "manufactured_source",
    "check_admissible",
    "euler2d_rhs",
]

VARIABLES = ("rho", "rho_v1", "rho_v2", "rho_e")

_NORMAL = {"x": 1, "y": 2}


@dataclass(frozen=True)
class Euler2DProblem:
    """Manufactured-solution setup ``rho = c + A sin(omega (x + y - t))``."""

    gamma: float = 1.4
    c: float = 2.0
    A: float = 0.1
    omega: float = np.pi
    t_end: float = 2.0

    def __post_init__(self) -> None:
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if not (self.A >= 0 and self.c > self.A):
            raise ValueError("need c > A >= 0 for a positive density")


def _normal_index(direction: str) -> tuple[int, int]:
    try:
        n = _NORMAL[direction]
    except KeyError:
        raise ValueError(f"direction must be 'x' or 'y', got {direction!r}") from None
    return n, 3 - n


def pressure(u: np.ndarray, gamma: float) -> np.ndarray:
    rho = u[0]
    return (gamma - 1.0) * (u[3] - 0.5 * (u[1] ** 2 + u[2] ** 2) / rho)


def _check(u: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    rho = u[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        p = pressure(u, gamma)
    bad = ~(rho > 0) | ~(p > 0)
    if np.any(bad):
        idx = tuple(int(i) for i in np.unravel_index(np.argmax(bad), bad.shape))
        r, q = np.asarray(rho)[idx], np.asarray(p)[idx]
        raise StateError(
            f"inadmissible state at index {idx}: density {r:.6g}, pressure {q:.6g}", idx
        )
    return rho, p


def euler_flux(u: np.ndarray, direction: str, gamma: float) -> np.ndarray:
    """Physical flux in direction ``"x"`` or ``"y"``; *u* has the variables
    on its leading axis."""
    u = np.asarray(u, dtype=np.float64)
    n, _ = _normal_index(direction)
    rho, p = _check(u, gamma)
    vn = u[n] / rho
    f = u * vn
    f[n] += p
    f[3] += p * vn
    return f


def hllc_flux(uL: np.ndarray, uR: np.ndarray, direction: str, gamma: float) -> np.ndarray:
    """HLLC approximate Riemann flux with Davis wave speed estimates."""
    uL = np.asarray(uL, dtype=np.float64)
    uR = np.asarray(uR, dtype=np.float64)
    n, t = _normal_index(direction)
    rhoL, pL = _check(uL, gamma)
    rhoR, pR = _check(uR, gamma)
    vL, vR = uL[n] / rhoL, uR[n] / rhoR
    cL = np.sqrt(gamma * pL / rhoL)
    cR = np.sqrt(gamma * pR / rhoR)

    SL = np.minimum(vL - cL, vR - cR)
    SR = np.maximum(vL + cL, vR + cR)
    mL = rhoL * (SL - vL)
    mR = rhoR * (SR - vR)
    Ss = (pR - pL + vL * mL - vR * mR) / (mL - mR)

    fL = euler_flux(uL, direction, gamma)
    fR = euler_flux(uR, direction, gamma)

    def star(u, rho, v, p, S, m):
        coef = m / (S - Ss)
        us = np.empty_like(u)
        us[0] = coef
        us[n] = coef * Ss
        us[t] = coef * u[t] / rho
        us[3] = coef * (u[3] / rho + (Ss - v) * (Ss + p / m))
        return us

    fsL = fL + SL * (star(uL, rhoL, vL, pL, SL, mL) - uL)
    fsR = fR + SR * (star(uR, rhoR, vR, pR, SR, mR) - uR)

    return np.where(
        SL >= 0, fL, np.where(Ss >= 0, fsL, np.where(SR > 0, fsR, fR))
    )


def manufactured_state(x, y, t: float, prob: Euler2DProblem = Euler2DProblem()) -> np.ndarray:
    rho = prob.c + prob.A * np.sin(prob.omega * (np.asarray(x) + np.asarray(y) - t))
    return np.stack([rho, rho, rho, rho * rho])


def manufactured_source(x, y, t: float, prob: Euler2DProblem = Euler2DProblem()) -> np.ndarray:
    """Source that makes :func:`manufactured_state` an exact solution."""
    phi = prob.omega * (np.asarray(x) + np.asarray(y) - t)
    rho = prob.c + prob.A * np.sin(phi)
    chi = prob.A * prob.omega * np.cos(phi)
    g1 = prob.gamma - 1.0
    s_mom = chi * (1.0 + g1 * (2.0 * rho - 1.0))
    s_en = chi * (2.0 * rho + 2.0 * g1 * (2.0 * rho - 1.0))
    return np.stack([chi, s_mom, s_mom, s_en])


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Periodic ``K x K`` grid of blocks on ``[x_L, x_R]^2``, each carrying
    the tensor product of the mapped 1D operator."""

    n_blocks: int
    operator: SBPOperator
    x_L: float = -1.0
    x_R: float = 1.0

    def __post_init__(self) -> None:
        line = BlockMesh1D(self.x_L, self.x_R, self.n_blocks, self.operator)
        object.__setattr__(self, "line", line)
        x1 = line.x
        X = np.broadcast_to(x1[:, None, :, None], self.shape)
        Y = np.broadcast_to(x1[None, :, None, :], self.shape)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def block_op(self) -> SBPOperator:
        return self.line.block_op

    @property
    def n(self) -> int:
        return self.operator.n

    @property
    def shape(self) -> tuple[int, int, int, int]:
        K, N = self.n_blocks, self.operator.n
        return (K, K, N, N)

    @property
    def weights(self) -> np.ndarray:
        p = self.block_op.p
        return np.broadcast_to(np.outer(p, p), self.shape)

    @property
    def h_min(self) -> float:
        return self.line.h_min


def check_admissible(mesh: Mesh2D, u: np.ndarray, gamma: float) -> None:
    """Raise :class:`StateError` naming block, node and coordinates of the
    first state with non-positive density or pressure."""
    try:
        _check(u, gamma)
    except StateError as exc:
        a, b, i, j = exc.location
        x, y = mesh.X[a, b, i, j], mesh.Y[a, b, i, j]
        raise StateError(
            f"{exc} (block ({a}, {b}), node ({i}, {j}), x = {x:.6g}, y = {y:.6g})",
            {"block": (a, b), "node": (i, j), "x": float(x), "y": float(y)},
        ) from None


def euler2d_rhs(
    mesh: Mesh2D, u: np.ndarray, t: float, prob: Euler2DProblem = Euler2DProblem(),
    source: bool = True,
) -> np.ndarray:
    """Semidiscrete right-hand side with HLLC interface SATs on all faces."""
    gamma = prob.gamma
    check_admissible(mesh, u, gamma)
    op = mesh.block_op
    D, p = op.D, op.p

    F = euler_flux(u, "x", gamma)
    G = euler_flux(u, "y", gamma)
    du = -(D @ F) - G @ D.T

    # x faces: right face of block a against left face of block a + 1
    star = hllc_flux(u[:, :, :, -1, :], np.roll(u[:, :, :, 0, :], -1, axis=1), "x", gamma)
    du[:, :, :, -1, :] -= (star - F[:, :, :, -1, :]) / p[-1]
    du[:, :, :, 0, :] += (np.roll(star, 1, axis=1) - F[:, :, :, 0, :]) / p[0]

    # y faces
    star = hllc_flux(u[:, :, :, :, -1], np.roll(u[:, :, :, :, 0], -1, axis=2), "y", gamma)
    du[:, :, :, :, -1] -= (star - G[:, :, :, :, -1]) / p[-1]
    du[:, :, :, :, 0] += (np.roll(star, 1, axis=2) - G[:, :, :, :, 0]) / p[0]

    if source:
        du += manufactured_source(mesh.X, mesh.Y, t, prob)
    return du

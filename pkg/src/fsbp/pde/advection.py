"""Multiblock SBP-SAT discretization of periodic linear advection,
``u_t + a u_x = 0``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from fsbp.operator import SBPOperator

__all__ = ["BlockMesh1D", "AdvectionProblem", "advection_rhs", "sine_wave", "gaussian"]


@dataclass(frozen=True, eq=False)
class BlockMesh1D:
    """Periodic chain of equal-width blocks on ``[x_L, x_R]``.

    Every block carries the reference operator mapped onto it, so all blocks
    share the norm weights and differentiation matrix.
    """

    x_L: float
    x_R: float
    n_blocks: int
    operator: SBPOperator

    def __post_init__(self) -> None:
        if self.n_blocks < 1:
            raise ValueError("need at least one block")
        if not self.x_L < self.x_R:
            raise ValueError(f"invalid domain: [{self.x_L}, {self.x_R}]")
        w = (self.x_R - self.x_L) / self.n_blocks
        object.__setattr__(self, "block_op", self.operator.mapped(0.0, w))
        edges = self.x_L + w * np.arange(self.n_blocks + 1)
        edges[-1] = self.x_R
        xi = (self.operator.nodes.nodes - self.operator.nodes.x_L) / self.operator.nodes.length
        x = edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * xi[None, :]
        x[:, 0], x[:, -1] = edges[:-1], edges[1:]
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.operator.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_blocks, self.n)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights with the layout of a state, ``(K, N)``."""
        return np.broadcast_to(self.block_op.p, self.shape)

    @property
    def h_min(self) -> float:
        return self.block_op.nodes.h_min

    def project(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return fn(self.x)


@dataclass(frozen=True)
class AdvectionProblem:
    a: float
    initial: Callable[[np.ndarray], np.ndarray]
    t_end: float
    x_L: float = -1.0
    x_R: float = 1.0

    def exact(self, x: np.ndarray, t: float) -> np.ndarray:
        L = self.x_R - self.x_L
        xi = np.mod(x - self.a * t - self.x_L, L) + self.x_L
        return self.initial(xi)


def sine_wave(k: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.sin(k * np.pi * x)


def gaussian(width: float = 0.1) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.exp(-(x**2) / width)


def advection_rhs(mesh: BlockMesh1D, a: float, u: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Semidiscrete right-hand side with full-upwind interface SATs."""
    op = mesh.block_op
    du = -a * (u @ op.D.T)

    # interface values with periodic wrap
    left_nb = np.roll(u[:, -1], 1)   # right end of the left neighbour
    right_nb = np.roll(u[:, 0], -1)  # left end of the right neighbour
    if a >= 0:
        ustar_L, ustar_R = left_nb, u[:, -1]
    else:
        ustar_L, ustar_R = u[:, 0], right_nb

    du[:, 0] += a * (ustar_L - u[:, 0]) / op.p[0]
    du[:, -1] -= a * (ustar_R - u[:, -1]) / op.p[-1]
    return du

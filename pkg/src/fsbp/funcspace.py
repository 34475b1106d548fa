"""Node sets, basis functions and Vandermonde assembly.

A :class:`FunctionSpace` is an ordered list of basis functions with
analytically known derivatives. Evaluating it on a :class:`NodeSet` gives
the pair ``V[i, j] = f_j(x_i)`` and ``Vx[i, j] = f_j'(x_i)`` used by the
operator construction.

Function spaces can also be described in a small text grammar (used by the
CLI and config files)::

    poly:3          monomials 1, x, x^2, x^3
    trig            1, x, sin(pi x), cos(pi x)
    custom:<file>   one basis function per line, e.g. ``monomial 2``,
                    ``sine 3.14159``, ``cosine 1``, ``exp -0.5``
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "BasisFunction",
    "Monomial",
    "Sine",
    "Cosine",
    "Exponential",
    "Custom",
    "NodeSet",
    "FunctionSpace",
    "EvaluationError",
    "equidistant_nodes",
    "standard_space",
    "polynomial_space",
    "trig_space",
    "parse_space",
    "parse_basis",
    "evaluate_basis",
    "vandermonde",
]


class EvaluationError(ValueError):
    """Raised when a basis function evaluates to a non-finite value."""


# {{{ basis functions


class BasisFunction:
    """Interface for a scalar basis function with exact derivative."""

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def label(self) -> str:
        raise NotImplementedError

    def spec(self) -> str:
        """Text form understood by :func:`parse_basis`."""
        raise NotImplementedError


@dataclass(frozen=True)
class Monomial(BasisFunction):
    k: int

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError(f"monomial degree must be non-negative: {self.k}")

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.k == 0:
            return np.ones_like(x)
        return x**self.k

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.k == 0:
            return np.zeros_like(x)
        if self.k == 1:
            return np.ones_like(x)
        return self.k * x ** (self.k - 1)

    @property
    def label(self):
        return {0: "1", 1: "x"}.get(self.k, f"x^{self.k}")

    def spec(self):
        return f"monomial {self.k}"


@dataclass(frozen=True)
class Sine(BasisFunction):
    omega: float

    def value(self, x):
        return np.sin(self.omega * np.asarray(x, dtype=np.float64))

    def derivative(self, x):
        return self.omega * np.cos(self.omega * np.asarray(x, dtype=np.float64))

    @property
    def label(self):
        return f"sin({_format_freq(self.omega)}x)"

    def spec(self):
        return f"sine {self.omega!r}"


@dataclass(frozen=True)
class Cosine(BasisFunction):
    omega: float

    def value(self, x):
        return np.cos(self.omega * np.asarray(x, dtype=np.float64))

    def derivative(self, x):
        return -self.omega * np.sin(self.omega * np.asarray(x, dtype=np.float64))

    @property
    def label(self):
        return f"cos({_format_freq(self.omega)}x)"

    def spec(self):
        return f"cosine {self.omega!r}"


@dataclass(frozen=True)
class Exponential(BasisFunction):
    alpha: float

    def value(self, x):
        return np.exp(self.alpha * np.asarray(x, dtype=np.float64))

    def derivative(self, x):
        return self.alpha * np.exp(self.alpha * np.asarray(x, dtype=np.float64))

    @property
    def label(self):
        return f"exp({self.alpha:g}x)"

    def spec(self):
        return f"exp {self.alpha!r}"


@dataclass(frozen=True)
class Custom(BasisFunction):
    """User-supplied function and derivative (e.g. radial basis functions).

    Both callables must accept and return arrays elementwise.
    """

    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    dfn: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    name: str = "custom"

    def value(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def derivative(self, x):
        return np.asarray(self.dfn(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    @property
    def label(self):
        return self.name

    def spec(self):
        raise ValueError(f"custom basis function {self.name!r} has no text form")


def _format_freq(omega: float) -> str:
    if omega == math.pi:
        return "pi"
    r = omega / math.pi
    if abs(r - round(r)) < 1e-14 and round(r) != 0:
        return f"{int(round(r))}pi"
    return f"{omega:g}"


def evaluate_basis(f: BasisFunction, x: float) -> tuple[float, float]:
    """Return ``(f(x), f'(x))`` for a scalar *x*."""
    xa = np.array([x], dtype=np.float64)
    return float(f.value(xa)[0]), float(f.derivative(xa)[0])


# }}}


# {{{ node sets


@dataclass(frozen=True)
class NodeSet:
    """Strictly increasing boundary-inclusive nodes on ``[x_L, x_R]``."""

    x_L: float
    x_R: float
    nodes: np.ndarray

    def __post_init__(self) -> None:
        x = np.array(self.nodes, dtype=np.float64)
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

        if x.ndim != 1 or x.size < 2:
            raise ValueError(f"need at least 2 nodes, got {x.size}")
        if not np.all(np.isfinite(x)):
            raise ValueError("nodes must be finite")
        if not self.x_L < self.x_R:
            raise ValueError(f"invalid domain: [{self.x_L}, {self.x_R}]")
        if np.any(np.diff(x) <= 0):
            raise ValueError("nodes must be strictly increasing")
        # B = e_R e_R^T - e_L e_L^T only holds for boundary-inclusive nodes
        if x[0] != self.x_L or x[-1] != self.x_R:
            raise ValueError(
                "nodes must include both boundary points "
                f"(got x_1 = {x[0]!r}, x_N = {x[-1]!r} on [{self.x_L}, {self.x_R}])"
            )

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def length(self) -> float:
        return self.x_R - self.x_L

    @property
    def h_min(self) -> float:
        return float(np.min(np.diff(self.nodes)))

    def mapped(self, x_L: float, x_R: float) -> "NodeSet":
        """Affinely map the node set onto ``[x_L, x_R]``."""
        xi = (self.nodes - self.x_L) / self.length
        x = x_L + (x_R - x_L) * xi
        x[0], x[-1] = x_L, x_R
        return NodeSet(x_L, x_R, x)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NodeSet):
            return NotImplemented
        return (
            self.x_L == other.x_L
            and self.x_R == other.x_R
            and np.array_equal(self.nodes, other.nodes)
        )

    def __hash__(self) -> int:
        return hash((self.x_L, self.x_R, self.nodes.tobytes()))


def equidistant_nodes(x_L: float, x_R: float, n: int) -> NodeSet:
    """Return *n* equispaced nodes including both endpoints."""
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    if not x_L < x_R:
        raise ValueError(f"invalid domain: [{x_L}, {x_R}]")

    i = np.arange(n, dtype=np.float64)
    # evaluate from both ends so the set is mirror symmetric
    left = x_L + i * (x_R - x_L) / (n - 1)
    right = x_R - i[::-1] * (x_R - x_L) / (n - 1)
    x = np.where(i < (n - 1) / 2, left, right)
    if n % 2 == 1:
        x[n // 2] = 0.5 * (x_L + x_R)
    x[0], x[-1] = x_L, x_R

    return NodeSet(float(x_L), float(x_R), x)


# }}}


# {{{ function spaces


@dataclass(frozen=True)
class FunctionSpace:
    basis: tuple[BasisFunction, ...]
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "basis", tuple(self.basis))
        if not self.basis:
            raise ValueError("function space needs at least one basis function")
        if not self.name:
            object.__setattr__(self, "name", "span{" + ", ".join(self.labels) + "}")

    def __len__(self) -> int:
        return len(self.basis)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def labels(self) -> list[str]:
        return [f.label for f in self.basis]

    @property
    def has_constants(self) -> bool:
        return any(isinstance(f, Monomial) and f.k == 0 for f in self.basis)

    def __add__(self, other: "FunctionSpace") -> "FunctionSpace":
        return FunctionSpace(self.basis + other.basis, name=f"{self.name} + {other.name}")

    def spec(self) -> str:
        """Best-effort text description understood by :func:`parse_space`."""
        if self == polynomial_space(self.dim - 1):
            return f"poly:{self.dim - 1}"
        if self == trig_space():
            return "trig"
        return ",".join(f.spec().replace(" ", ":") for f in self.basis)


def polynomial_space(d: int) -> FunctionSpace:
    """Monomials of degree ``0, ..., d``."""
    if d < 0:
        raise ValueError(f"polynomial degree must be non-negative: {d}")
    return FunctionSpace(tuple(Monomial(k) for k in range(d + 1)), name=f"P{d}")


def trig_space(omega: float = math.pi) -> FunctionSpace:
    """The space ``span{1, x, sin(omega x), cos(omega x)}``."""
    return FunctionSpace(
        (Monomial(0), Monomial(1), Sine(omega), Cosine(omega)),
        name="T" if omega == math.pi else f"T({omega:g})",
    )


def standard_space(
    kind: str, d: int | None = None, basis: Sequence[BasisFunction] | None = None
) -> FunctionSpace:
    """Build one of the catalog spaces: ``"poly"`` (needs *d*), ``"trig"``
    or ``"custom"`` (needs *basis*)."""
    if kind == "poly":
        if d is None:
            raise ValueError("poly space requires a degree")
        return polynomial_space(d)
    if kind == "trig":
        return trig_space()
    if kind == "custom":
        if not basis:
            raise ValueError("custom space requires a basis list")
        return FunctionSpace(tuple(basis))
    raise ValueError(f"unknown function space kind: {kind!r}")


_BASIS_KEYWORDS = {
    "monomial": lambda a: Monomial(int(a)),
    "mono": lambda a: Monomial(int(a)),
    "sine": lambda a: Sine(_parse_real(a)),
    "sin": lambda a: Sine(_parse_real(a)),
    "cosine": lambda a: Cosine(_parse_real(a)),
    "cos": lambda a: Cosine(_parse_real(a)),
    "exp": lambda a: Exponential(_parse_real(a)),
    "exponential": lambda a: Exponential(_parse_real(a)),
}


def _parse_real(text: str) -> float:
    """Parse a real number, allowing multiples of pi (``pi``, ``2pi``, ``-0.5pi``)."""
    t = text.strip().lower()
    if t.endswith("pi"):
        coeff = t[:-2].rstrip("*")
        if coeff in ("", "+"):
            return math.pi
        if coeff == "-":
            return -math.pi
        return float(coeff) * math.pi
    return float(t)


def parse_basis(text: str) -> BasisFunction:
    """Parse a single basis function, e.g. ``"monomial 2"`` or ``"sin:pi"``."""
    parts = text.replace(":", " ").split()
    if len(parts) != 2 or parts[0].lower() not in _BASIS_KEYWORDS:
        raise ValueError(f"cannot parse basis function: {text!r}")
    try:
        return _BASIS_KEYWORDS[parts[0].lower()](parts[1])
    except ValueError as exc:
        raise ValueError(f"cannot parse basis function: {text!r}") from exc


def parse_space(text: str) -> FunctionSpace:
    """Parse the function-space grammar (see the module docstring).

    Besides ``poly:d``, ``trig`` and ``custom:<file>``, a comma-separated
    inline list of basis functions (``sin:pi,cos:pi``) is also accepted.
    """
    text = text.strip()
    if text.startswith("poly:"):
        return polynomial_space(int(text[5:]))
    if text == "trig":
        return trig_space()
    if text.startswith("custom:"):
        path = Path(text[7:])
        lines = [
            ln.split("#", 1)[0].strip() for ln in path.read_text(encoding="utf-8").splitlines()
        ]
        basis = [parse_basis(ln) for ln in lines if ln]
        return FunctionSpace(tuple(basis), name=path.stem)
    if text:
        return FunctionSpace(tuple(parse_basis(t) for t in text.split(",")))
    raise ValueError("empty function space description")


# }}}


# {{{ vandermonde


def vandermonde(space: FunctionSpace, nodes: NodeSet | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the basis and its derivatives on the nodes.

    :returns: a tuple ``(V, Vx)`` of arrays of shape ``(N, K)``.
    """
    x = nodes.nodes if isinstance(nodes, NodeSet) else np.asarray(nodes, dtype=np.float64)

    n, k = x.size, space.dim
    V = np.empty((n, k))
    Vx = np.empty((n, k))
    # overflow is reported below with node information
    with np.errstate(over="ignore", invalid="ignore"):
        for j, f in enumerate(space.basis):
            V[:, j] = f.value(x)
            Vx[:, j] = f.derivative(x)

    for M, what in ((V, "value"), (Vx, "derivative")):
        bad = ~np.isfinite(M)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise EvaluationError(
                f"non-finite {what} of basis function {space.basis[j].label!r} "
                f"at node {i} (x = {x[i]!r})"
            )

    return V, Vx


def warn_if_not_conservative(space: FunctionSpace) -> None:
    if not space.has_constants:
        warnings.warn(
            f"function space {space.name!r} does not contain constants; "
            "the resulting operator will not be conservative",
            stacklevel=3,
        )


# }}}

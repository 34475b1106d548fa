"""Line-based text format for operators.

::

    FSBP 1
    domain <xL> <xR>
    nodes <N>
    <x_1> ... <x_N>
    P
    <p_1> ... <p_N>
    S dense | S banded <b> <c>
    <free entries of S, row-major over the stored pattern>

Reals are written with 17 significant digits, so a round trip reproduces
every binary64 value exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from fsbp.funcspace import NodeSet
from fsbp.operator import Banded, Dense, SBPOperator

__all__ = ["ParseError", "serialize", "parse", "save", "load"]

MAGIC = "FSBP 1"


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno
        self.message = message


def _fmt(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def serialize(op: SBPOperator) -> str:
    if isinstance(op.pattern, Banded):
        s_header = f"S banded {op.pattern.b} {op.pattern.c}"
    else:
        s_header = "S dense"
    lines = [
        MAGIC,
        f"domain {_fmt([op.nodes.x_L, op.nodes.x_R])}",
        f"nodes {op.n}",
        _fmt(op.nodes.nodes),
        "P",
        _fmt(op.p),
        s_header,
        _fmt(op.sigma),
    ]
    return "\n".join(lines) + "\n"


def _reals(lineno: int, text: str, count: int | None, what: str) -> np.ndarray:
    try:
        values = np.array([float(t) for t in text.split()], dtype=np.float64)
    except ValueError:
        raise ParseError(lineno, f"malformed {what}: expected real numbers") from None
    if count is not None and values.size != count:
        raise ParseError(lineno, f"expected {count} {what}, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise ParseError(lineno, f"non-finite {what}")
    return values


def parse(text: str) -> SBPOperator:
    lines = text.splitlines()
    # blank lines are only tolerated at the end
    while lines and not lines[-1].strip():
        lines.pop()

    def line(k: int) -> str:
        if k >= len(lines):
            raise ParseError(k + 1, "unexpected end of file")
        return lines[k].strip()

    if line(0) != MAGIC:
        raise ParseError(1, f"malformed header: expected {MAGIC!r}, got {line(0)!r}")

    parts = line(1).split()
    if len(parts) != 3 or parts[0] != "domain":
        raise ParseError(2, "malformed domain line: expected 'domain <xL> <xR>'")
    x_L, x_R = _reals(2, " ".join(parts[1:]), 2, "domain bounds")

    parts = line(2).split()
    if len(parts) != 2 or parts[0] != "nodes" or not parts[1].isdigit():
        raise ParseError(3, "malformed nodes line: expected 'nodes <N>'")
    n = int(parts[1])
    if n < 2:
        raise ParseError(3, f"need at least 2 nodes, got {n}")

    x = _reals(4, line(3), n, "nodes")
    if np.any(np.diff(x) <= 0):
        i = int(np.argmax(np.diff(x) <= 0))
        raise ParseError(4, f"nodes are not strictly increasing at index {i + 2}")
    try:
        nodes = NodeSet(float(x_L), float(x_R), x)
    except ValueError as exc:
        raise ParseError(4, str(exc)) from None

    if line(4) != "P":
        raise ParseError(5, f"expected 'P', got {line(4)!r}")
    p = _reals(6, line(5), n, "norm weights")
    bad = np.nonzero(p <= 0)[0]
    if bad.size:
        raise ParseError(6, f"non-positive norm weight at index {bad[0] + 1}")

    parts = line(6).split()
    if parts == ["S", "dense"]:
        pattern = Dense()
    elif len(parts) == 4 and parts[:2] == ["S", "banded"]:
        try:
            pattern = Banded(int(parts[2]), int(parts[3]))
            pattern.validate(n)
        except ValueError as exc:
            raise ParseError(7, f"invalid banded metadata: {exc}") from None
    else:
        raise ParseError(7, "malformed skew header: expected 'S dense' or 'S banded <b> <c>'")

    count = pattern.unknown_count(n)
    sigma = _reals(8, line(7), count, "skew entries")
    if len(lines) > 8:
        raise ParseError(9, "trailing content after skew entries")
    return SBPOperator(nodes, p, sigma, pattern)


def save(op: SBPOperator, path: str | Path) -> None:
    Path(path).write_text(serialize(op), encoding="utf-8")


def load(path: str | Path) -> SBPOperator:
    return parse(Path(path).read_text(encoding="utf-8"))

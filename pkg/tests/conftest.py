"""Shared operators; constructions are memoized across the session."""

import math

import numpy as np
import pytest

from fsbp.construct.build import RegularizationSpec
from fsbp.construct.lbfgs import OptimOptions
from fsbp.experiments import RECIPE_MAX_ITERS, OperatorSpec, build_operator
from fsbp.funcspace import Cosine, FunctionSpace, Monomial, Sine, parse_space, polynomial_space, trig_space
from fsbp.operator import Banded, Dense

OPTS = OptimOptions(max_iters=RECIPE_MAX_ITERS)

SIN_COS = FunctionSpace((Sine(math.pi), Cosine(math.pi)), name="G")
# trig space extended by the second harmonic: closed under products of its
# first-harmonic members, so it contains every Euler flux of the
# manufactured solution
TRIG2 = FunctionSpace(
    (Monomial(0), Monomial(1), Sine(math.pi), Cosine(math.pi), Sine(2 * math.pi), Cosine(2 * math.pi)),
    name="T2",
)

_SPECS = {
    "P1 dense 50": OperatorSpec("P1 dense", polynomial_space(1), 50),
    "P3 dense 50": OperatorSpec("P3 dense", polynomial_space(3), 50),
    "P9 dense 50": OperatorSpec("P9 dense", polynomial_space(9), 50),
    "P2 b3 50": OperatorSpec("P2 b=3", polynomial_space(2), 50, Banded(3, 6)),
    "P3 b3 50": OperatorSpec("P3 b=3", polynomial_space(3), 50, Banded(3, 6)),
    "T b3 50": OperatorSpec("T b=3", trig_space(), 50, Banded(3, 6)),
    "T dense 50": OperatorSpec("T dense", trig_space(), 50),
    "P3 dense 15": OperatorSpec("P3 dense", polynomial_space(3), 15),
    "P3 b3 15": OperatorSpec("P3 b=3", polynomial_space(3), 15, Banded(3, 6)),
    "P3 reg 15": OperatorSpec("P3 reg", polynomial_space(3), 15, Dense(), RegularizationSpec(SIN_COS, (1.0, 1.0))),
    "T2 dense 20": OperatorSpec("T2 dense", TRIG2, 20),
}

# the six-function trig space converges slowly with the default budget
_OPTS_FOR = {"T2 dense 20": OptimOptions(max_iters=300000)}


def get_operator(key):
    """``(operator, result)`` for a named recipe operator."""
    return build_operator(_SPECS[key], _OPTS_FOR.get(key, OPTS))


def spec_space(key):
    return _SPECS[key].space


@pytest.fixture(scope="session")
def operators():
    return get_operator


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: list[str] = []


def record_acceptance(line):
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)


__all__ = ["OPTS", "SIN_COS", "TRIG2", "get_operator", "record_acceptance", "spec_space", "parse_space"]

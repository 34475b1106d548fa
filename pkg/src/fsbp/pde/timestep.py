"""Explicit time integrators.

* :func:`ssprk53_step`: five-stage, third-order strong stability preserving
  Runge-Kutta method (Ruuth's SSPRK(5,3), SSP coefficient ~2.65).
* :func:`dopri5_step`: Dormand-Prince 5(4) embedded pair used by the
  adaptive mode of :func:`integrate` with a PI step size controller.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "StateError",
    "SimulationCrash",
    "StiffnessError",
    "FixedCFL",
    "Adaptive",
    "IntegrationResult",
    "ssprk53_step",
    "dopri5_step",
    "integrate",
]

RHS = Callable[[np.ndarray, float], np.ndarray]


class StateError(ValueError):
    """Raised by a right-hand side for inadmissible states."""

    def __init__(self, message: str, location=None) -> None:
        super().__init__(message)
        self.location = location


class SimulationCrash(RuntimeError):
    """An inadmissible or non-finite state was reached during integration."""

    def __init__(self, t: float, message: str, location=None) -> None:
        super().__init__(f"simulation crashed at t = {t:.6g}: {message}")
        self.t = t
        self.location = location
        self.partial: IntegrationResult | None = None


class StiffnessError(RuntimeError):
    pass


# {{{ SSPRK(5,3)

# Shu-Osher coefficients: stage i = sum_j alpha[i][j] u_j + dt beta[i][j] F(u_j)
# the weights of each convex combination sum to one exactly
_SSP53_ALPHA = (
    ((0, 1.0),),
    ((1, 1.0),),
    ((0, 0.355909775063327), (2, 1.0 - 0.355909775063327)),
    ((0, 0.367933791638137), (3, 1.0 - 0.367933791638137)),
    ((2, 0.237593836598569), (4, 1.0 - 0.237593836598569)),
)
_SSP53_BETA = (
    (0, 0.377268915331368),
    (1, 0.377268915331368),
    (2, 0.242995220537396),
    (3, 0.238458932846290),
    (4, 0.287632146308408),
)


def _ssp53_abscissae() -> tuple[float, ...]:
    # c_i of stage u_i, from the Shu-Osher form with F = 1
    c = [0.0]
    for alpha, (j, beta) in zip(_SSP53_ALPHA, _SSP53_BETA):
        c.append(sum(a * c[k] for k, a in alpha) + beta)
    return tuple(c)


_SSP53_C = _ssp53_abscissae()


def ssprk53_step(rhs: RHS, u: np.ndarray, t: float, dt: float) -> np.ndarray:
    """Advance ``u' = rhs(u, t)`` by one SSPRK(5,3) step."""
    stages = [u]
    fs = []
    for alpha, (j, beta) in zip(_SSP53_ALPHA, _SSP53_BETA):
        while len(fs) <= j:
            k = len(fs)
            fs.append(rhs(stages[k], t + _SSP53_C[k] * dt))
        # convex combination written as an update of its last member
        k_last = alpha[-1][0]
        base = stages[k_last]
        # non-finite stages are reported by the caller
        with np.errstate(invalid="ignore", over="ignore"):
            nxt = base + sum(a * (stages[k] - base) for k, a in alpha[:-1]) + (beta * dt) * fs[j]
        stages.append(nxt)
    return stages[-1]


# }}}


# {{{ Dormand-Prince 5(4)

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_BHAT = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_E = _DP_B - _DP_BHAT


def dopri5_step(
    rhs: RHS, u: np.ndarray, t: float, dt: float, k1: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One Dormand-Prince step.

    :returns: ``(u_next, error_estimate, rhs(u_next))``; the last value is
        reused as the first stage of the next step (FSAL).
    """
    ks = [rhs(u, t) if k1 is None else k1]
    for i in range(1, 7):
        incr = sum(a * k for a, k in zip(_DP_A[i], ks) if a != 0.0)
        ks.append(rhs(u + dt * incr, t + _DP_C[i] * dt))
    # the seventh stage is evaluated at u_next itself (FSAL)
    u_next = u + dt * sum(b * k for b, k in zip(_DP_B, ks) if b != 0.0)
    err = dt * sum(e * k for e, k in zip(_DP_E, ks) if e != 0.0)
    return u_next, err, ks[-1]


# }}}


# {{{ driver


@dataclass(frozen=True)
class FixedCFL:
    """Fixed step ``dt = cfl * h_min / |wavespeed|``."""

    cfl: float
    h_min: float
    wavespeed: float

    @property
    def dt(self) -> float:
        return self.cfl * self.h_min / abs(self.wavespeed)


@dataclass(frozen=True)
class Adaptive:
    abstol: float = 1e-6
    reltol: float = 1e-6
    dt0: float | None = None
    dt_max: float = np.inf
    max_steps: int = 10_000_000
    safety: float = 0.9
    # PI controller exponents for a fifth-order method
    beta1: float = 0.7 / 5
    beta2: float = 0.4 / 5


@dataclass
class IntegrationResult:
    u: np.ndarray
    t: float
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    #: values of ``monitor(u, t)`` after every accepted step
    monitor: list = field(default_factory=list)


def _check_finite(u: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(u)):
        raise SimulationCrash(t, "non-finite state")


def integrate(
    rhs: RHS,
    u0: np.ndarray,
    t_span: tuple[float, float],
    mode: FixedCFL | Adaptive,
    saveat: Sequence[float] = (),
    monitor: Callable[[np.ndarray, float], object] | None = None,
) -> IntegrationResult:
    """Integrate ``u' = rhs(u, t)`` from ``t_span[0]`` to ``t_span[1]``.

    States at the times in *saveat* (and at the final time) are recorded
    exactly; steps are shortened to land on them. A :class:`StateError`
    raised by *rhs*, or a non-finite state, aborts the run with
    :class:`SimulationCrash`; its ``partial`` attribute holds the states
    saved so far.
    """
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError(f"invalid time span: {t_span}")
    targets = sorted({float(s) for s in saveat if t0 < s < t1} | {t1})

    out = IntegrationResult(u=np.array(u0, dtype=np.float64), t=t0)
    calls = [0]

    def f(u, t):
        calls[0] += 1
        try:
            return rhs(u, t)
        except StateError as exc:
            raise SimulationCrash(t, str(exc), exc.location) from exc

    if t0 in saveat:
        out.times.append(t0)
        out.states.append(out.u.copy())

    try:
        if isinstance(mode, FixedCFL):
            _integrate_fixed(f, out, targets, mode, t1, monitor)
        else:
            _integrate_adaptive(f, out, targets, mode, t0, t1, monitor)
    except SimulationCrash as exc:
        exc.partial = out
        raise
    finally:
        out.n_rhs = calls[0]
    return out


def _integrate_fixed(f, out, targets, mode, t1, monitor):
    dt = mode.dt
    span = t1 - out.t
    u, t = out.u, out.t
    for target in targets:
        while t < target:
            h = min(dt, target - t)
            if target - (t + h) < 1e-12 * span:
                h = target - t
            u = ssprk53_step(f, u, t, h)
            t = target if h == target - t else t + h
            _check_finite(u, t)
            out.n_steps += 1
            if monitor is not None:
                out.monitor.append(monitor(u, t))
        out.times.append(t)
        out.states.append(u.copy())
    out.u, out.t = u, t


def _error_norm(err, u, u_new, mode):
    scale = mode.abstol + mode.reltol * np.maximum(np.abs(u), np.abs(u_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_dt(f, u, t, k1, mode):
    # standard starting-step heuristic from two derivative estimates
    scale = mode.abstol + mode.reltol * np.abs(u)
    d0 = np.sqrt(np.mean((u / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    k2 = f(u + h0 * k1, t + h0)
    d2 = np.sqrt(np.mean(((k2 - k1) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, 1e-3 * h0)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def _integrate_adaptive(f, out, targets, mode, t0, t1, monitor):
    span = t1 - t0
    u, t = out.u, out.t
    k1 = f(u, t)
    dt = mode.dt0 if mode.dt0 is not None else _initial_dt(f, u, t, k1, mode)
    dt = min(dt, mode.dt_max)
    err_prev = 1.0
    ti = 0

    while ti < len(targets):
        target = targets[ti]
        if out.n_steps + out.n_rejected >= mode.max_steps:
            raise StiffnessError(f"step budget exhausted at t = {t:.6g}")
        if dt < 1e-14 * span:
            raise StiffnessError(f"step size underflow (dt = {dt:.3e}) at t = {t:.6g}")

        h = min(dt, target - t)
        landing = h >= target - t or target - (t + h) < 1e-12 * span
        if landing:
            h = target - t

        u_new, err, k_new = dopri5_step(f, u, t, h, k1)
        en = _error_norm(err, u, u_new, mode) if np.all(np.isfinite(u_new)) else np.inf

        if en <= 1.0:
            t = target if landing else t + h
            u, k1 = u_new, k_new
            out.n_steps += 1
            if monitor is not None:
                out.monitor.append(monitor(u, t))
            en = max(en, 1e-10)
            fac = mode.safety * en ** (-mode.beta1) * err_prev ** mode.beta2
            fac = min(10.0, max(0.2, fac))
            err_prev = en
            if not landing or h >= dt:
                dt = min(h * fac, mode.dt_max)
            if landing:
                out.times.append(t)
                out.states.append(u.copy())
                ti += 1
        else:
            out.n_rejected += 1
            if not np.isfinite(en):
                dt = 0.25 * h
            else:
                dt = h * max(0.2, mode.safety * en ** (-1 / 5))
            _check_finite(u, t)

    out.u, out.t = u, t


# }}}

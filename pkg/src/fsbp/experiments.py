"""Experiment recipes: construct operators, check them, run the advection
and Euler benchmarks and collect error tables and plots."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from fsbp.construct.build import RegularizationSpec, construct_operator
from fsbp.construct.lbfgs import OptimOptions, OptimResult
from fsbp.construct.regularized import construct_regularized
from fsbp.diagnostics import diagnose
from fsbp.funcspace import (
    Cosine,
    FunctionSpace,
    Sine,
    equidistant_nodes,
    polynomial_space,
    trig_space,
)
from fsbp.operator import Banded, Dense, SBPOperator, SparsityPattern
from fsbp.pde.advection import AdvectionProblem, BlockMesh1D, advection_rhs, gaussian, sine_wave
from fsbp.pde.errors import eoc, error_norms
from fsbp.pde.euler import (
    VARIABLES,
    Euler2DProblem,
    Mesh2D,
    euler2d_rhs,
    manufactured_state,
)
from fsbp.pde.timestep import Adaptive, FixedCFL, SimulationCrash, integrate
from fsbp.report import OutputTable, emit_svg

logger = logging.getLogger(__name__)

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentOutput",
    "OperatorSpec",
    "build_operator",
    "run_advection",
    "run_euler",
    "advection_convergence",
    "euler_convergence",
    "run_experiment",
]

EXPERIMENTS = ("table1", "table2", "table4", "fig2", "fig3", "fig4", "fig5")

#: defaults per experiment; overrides replace individual entries
DEFAULTS: dict[str, dict] = {
    "table1": dict(N=50, d=(1, 3, 5, 7, 9, 11), p=(2, 4, 6), k=1, a=2.0, t_end=1.75, cfl=0.5),
    "table2": dict(N=50, b=(3, 4, 5, 6), k=2, a=2.0, t_end=1.75, tol=1e-6),
    "table4": dict(N=15, K=(2, 4, 8), b=3, t_end=2.0, tol=1e-14),
    "fig2": dict(N=15, K=8, b=3, a=1.0, t_end=10.0, tol=1e-6, dt_out=0.25),
    "fig3": dict(N=50, K=1, b=3, t_end=10.0, tol=1e-6, dt_out=0.25),
    "fig4": dict(N=15, K=8, a=1.0, t_end=10.0, tol=1e-6, dt_out=0.25),
    "fig5": dict(N=15, K=8, t_end=5.0, tol=1e-6, dt_out=0.25),
}

#: iteration budget of every construction in the recipes
RECIPE_MAX_ITERS = 50_000


@dataclass
class ExperimentConfig:
    id: str
    overrides: dict = field(default_factory=dict)
    seed: int = 0
    max_iters: int = RECIPE_MAX_ITERS

    def __post_init__(self) -> None:
        if self.id not in DEFAULTS:
            raise ValueError(f"unknown experiment {self.id!r}; choose from {', '.join(EXPERIMENTS)}")
        unknown = set(self.overrides) - set(DEFAULTS[self.id]) - {"c"}
        if unknown:
            raise ValueError(f"{self.id} does not take {', '.join(sorted(unknown))}")

    def params(self) -> dict:
        out = dict(DEFAULTS[self.id])
        out.update({k: v for k, v in self.overrides.items() if v is not None})
        return out

    def as_dict(self) -> dict:
        return {"id": self.id, "seed": self.seed, "max_iters": self.max_iters, **self.params()}

    @property
    def opts(self) -> OptimOptions:
        return OptimOptions(max_iters=self.max_iters, seed=self.seed)


@dataclass
class ExperimentOutput:
    tables: dict[str, OutputTable] = field(default_factory=dict)
    figures: dict[str, str] = field(default_factory=dict)
    crashes: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class OperatorSpec:
    """Recipe for one operator: space, nodes, pattern and regularization."""

    label: str
    space: FunctionSpace
    n: int
    pattern: SparsityPattern = Dense()
    reg: RegularizationSpec | None = None


_CACHE: dict = {}


def build_operator(spec: OperatorSpec, opts: OptimOptions) -> tuple[SBPOperator, OptimResult]:
    """Construct (and memoize) the operator described by *spec* on
    ``[-1, 1]``."""
    key = (spec.space.spec(), spec.n, spec.pattern.spec(), repr(spec.reg), opts)
    if key not in _CACHE:
        nodes = equidistant_nodes(-1.0, 1.0, spec.n)
        start = time.perf_counter()
        if spec.reg is not None:
            _CACHE[key] = construct_regularized(spec.space, spec.reg, nodes, spec.pattern, opts)
        else:
            _CACHE[key] = construct_operator(spec.space, nodes, spec.pattern, opts)
        logger.info("%s built in %.1f s", spec.label, time.perf_counter() - start)
    return _CACHE[key]


def _diag_table(name: str, cfg: ExperimentConfig) -> OutputTable:
    return OutputTable(
        name,
        ["operator", "N", "pattern", "exact", "objective", "iters", "rank",
         "nullspace_consistent", "eigenvalue_property", "min_real_eig"],
        config=cfg.as_dict(), seed=cfg.seed,
    )


def _diag_row(table: OutputTable, spec: OperatorSpec, op: SBPOperator, res: OptimResult) -> None:
    rep = diagnose(op, spec.space)
    table.add(
        spec.label, spec.n, spec.pattern.spec(), res.exact, res.objective, res.iters,
        rep.rank_D, rep.nullspace_consistent, rep.eigenvalue_property, rep.min_real_eig,
    )


def _save_times(t_end: float, dt_out: float) -> list[float]:
    n = int(round(t_end / dt_out))
    return [dt_out * (i + 1) for i in range(n)]


# {{{ runs


@dataclass
class RunResult:
    times: list[float]
    l2: list[float]
    linf: list[float]
    crash: SimulationCrash | None = None
    per_variable: list[np.ndarray] = field(default_factory=list)
    per_variable_linf: list[np.ndarray] = field(default_factory=list)


def run_advection(
    op: SBPOperator,
    n_blocks: int,
    a: float,
    initial: Callable[[np.ndarray], np.ndarray],
    t_end: float,
    mode: str = "adaptive",
    tol: float = 1e-6,
    cfl: float = 0.5,
    saveat: Sequence[float] = (),
) -> RunResult:
    """Periodic advection on ``[-1, 1]``; errors at *saveat* and ``t_end``."""
    mesh = BlockMesh1D(-1.0, 1.0, n_blocks, op)
    prob = AdvectionProblem(a, initial, t_end)
    if mode == "cfl":
        stepper = FixedCFL(cfl, mesh.h_min, a)
    else:
        stepper = Adaptive(tol, tol)
    out = RunResult([], [], [])
    try:
        res = integrate(
            lambda u, t: advection_rhs(mesh, a, u, t), prob.initial(mesh.x),
            (0.0, t_end), stepper, saveat=saveat,
        )
    except SimulationCrash as exc:
        out.crash = exc
        res = exc.partial
    for t, u in zip(res.times, res.states):
        rep = error_norms(mesh.weights, u, prob.exact(mesh.x, t))
        out.times.append(t)
        out.l2.append(float(rep.l2[0]))
        out.linf.append(float(rep.linf[0]))
        out.per_variable.append(rep.l2)
        out.per_variable_linf.append(rep.linf)
    return out


def run_euler(
    op: SBPOperator,
    n_blocks: int,
    t_end: float,
    tol: float,
    saveat: Sequence[float] = (),
    prob: Euler2DProblem = Euler2DProblem(),
) -> RunResult:
    """Manufactured-solution Euler run; errors summed over the variables,
    per-variable errors in ``per_variable`` (L2) and ``per_variable_linf``."""
    mesh = Mesh2D(n_blocks, op)
    out = RunResult([], [], [])
    try:
        res = integrate(
            lambda u, t: euler2d_rhs(mesh, u, t, prob),
            manufactured_state(mesh.X, mesh.Y, 0.0, prob),
            (0.0, t_end), Adaptive(tol, tol), saveat=saveat,
        )
    except SimulationCrash as exc:
        out.crash = exc
        res = exc.partial
        logger.warning("%s", exc)
    for t, u in zip(res.times, res.states):
        rep = error_norms(mesh.weights, u, manufactured_state(mesh.X, mesh.Y, t, prob), VARIABLES)
        out.times.append(t)
        out.l2.append(rep.l2_total)
        out.linf.append(rep.linf_total)
        out.per_variable.append(rep.l2)
        out.per_variable_linf.append(rep.linf)
    return out


def advection_convergence(
    op: SBPOperator, blocks: Sequence[int], a: float = 1.0, t_end: float = 2.0,
    tol: float = 1e-14, initial=None,
) -> tuple[list[float], list[float]]:
    """L2 errors on *blocks* and the EOCs between them."""
    initial = gaussian(0.1) if initial is None else initial
    errs = [run_advection(op, K, a, initial, t_end, tol=tol).l2[-1] for K in blocks]
    return errs, eoc(errs, blocks)


def euler_convergence(
    op: SBPOperator, blocks: Sequence[int], t_end: float = 2.0, tol: float = 1e-14,
) -> tuple[list[np.ndarray], list[float]]:
    """Per-variable L2 errors on *blocks* and density EOCs."""
    errs = []
    for K in blocks:
        run = run_euler(op, K, t_end, tol)
        if run.crash is not None:
            raise run.crash
        errs.append(run.per_variable[-1])
    return errs, eoc([e[0] for e in errs], blocks)


# }}}


# {{{ recipes


def _poly(d: int) -> FunctionSpace:
    return polynomial_space(d)


def _check_exact(out: ExperimentOutput, spec: OperatorSpec, res: OptimResult) -> None:
    if not res.exact:
        out.failures.append(f"{spec.label}: construction not exact (objective {res.objective:.3e})")


def table1(cfg: ExperimentConfig, out: ExperimentOutput) -> None:
    prm = cfg.params()
    N = prm["N"]
    specs = [OperatorSpec(f"d={d}", _poly(d), N) for d in prm["d"]]
    for p in prm["p"]:
        b = p // 2
        specs.append(OperatorSpec(f"p={p}", _poly(b), N, Banded(b, prm.get("c") or 2 * b)))

    diag = _diag_table("table1_diagnostics", cfg)
    errors = {}
    for spec in specs:
        op, res = build_operator(spec, cfg.opts)
        _check_exact(out, spec, res)
        _diag_row(diag, spec, op, res)
        run = run_advection(op, 1, prm["a"], sine_wave(prm["k"]), prm["t_end"], mode="cfl", cfl=prm["cfl"])
        errors[spec.label] = (run.l2[-1], run.linf[-1])

    table = OutputTable("table1", ["error"] + [s.label for s in specs], config=cfg.as_dict(), seed=cfg.seed)
    table.add("L2", *(errors[s.label][0] for s in specs))
    table.add("Linf", *(errors[s.label][1] for s in specs))
    out.tables["table1"] = table
    out.tables[diag.name] = diag


def table2(cfg: ExperimentConfig, out: ExperimentOutput) -> None:
    prm = cfg.params()
    N = prm["N"]
    specs = []
    for name, space in (("P2", _poly(2)), ("T", trig_space())):
        for b in prm["b"]:
            specs.append(OperatorSpec(f"{name} b={b}", space, N, Banded(b, prm.get("c") or 2 * b)))
        specs.append(OperatorSpec(f"{name} dense", space, N))

    diag = _diag_table("table2_diagnostics", cfg)
    table = OutputTable("table2", ["error"] + [s.label for s in specs], config=cfg.as_dict(), seed=cfg.seed)
    l2, linf = [], []
    for spec in specs:
        op, res = build_operator(spec, cfg.opts)
        _check_exact(out, spec, res)
        _diag_row(diag, spec, op, res)
        run = run_advection(op, 1, prm["a"], sine_wave(prm["k"]), prm["t_end"], tol=prm["tol"])
        l2.append(run.l2[-1])
        linf.append(run.linf[-1])
    table.add("L2", *l2)
    table.add("Linf", *linf)
    out.tables["table2"] = table
    out.tables[diag.name] = diag


def table4(cfg: ExperimentConfig, out: ExperimentOutput) -> None:
    prm = cfg.params()
    blocks = list(prm["K"]) if isinstance(prm["K"], (list, tuple)) else [prm["K"]]
    b = prm["b"]
    diag = _diag_table("table4_diagnostics", cfg)
    for name, space in (("P3", _poly(3)), ("T", trig_space())):
        spec = OperatorSpec(f"{name} b={b}", space, prm["N"], Banded(b, prm.get("c") or 2 * b))
        op, res = build_operator(spec, cfg.opts)
        _check_exact(out, spec, res)
        _diag_row(diag, spec, op, res)
        table = OutputTable(f"table4_{name}", ["K", *VARIABLES, "EOC"], config=cfg.as_dict(), seed=cfg.seed)
        rho = []
        for K in blocks:
            run = run_euler(op, K, prm["t_end"], prm["tol"])
            if run.crash is not None:
                out.crashes.append(f"{spec.label}, K = {K}: {run.crash}")
                table.add(K, *([math.nan] * 4), "crash")
                continue
            e = run.per_variable[-1]
            rho.append((K, e[0]))
            rate = eoc([rho[-2][1], rho[-1][1]], [rho[-2][0], rho[-1][0]])[0] if len(rho) > 1 else "---"
            table.add(K, *map(float, e), rate)
        out.tables[table.name] = table
    out.tables[diag.name] = diag


def _time_figure(
    out: ExperimentOutput, name: str, runs: dict[str, RunResult], cfg: ExperimentConfig, ylabel: str,
) -> None:
    table = OutputTable(name, ["t", "operator", "L2", "Linf"], config=cfg.as_dict(), seed=cfg.seed)
    for label, run in runs.items():
        for t, a, b in zip(run.times, run.l2, run.linf):
            table.add(t, label, a, b)
        if run.crash is not None:
            table.add(run.crash.t, label, "crash", "crash")
            out.crashes.append(f"{label}: {run.crash}")
    out.tables[name] = table
    for norm, attr in (("L2", "l2"), ("Linf", "linf")):
        series = [(label, run.times, getattr(run, attr)) for label, run in runs.items() if run.times]
        if series:
            out.figures[f"{name}_{norm}.svg"] = emit_svg(
                series, xlabel="t", ylabel=f"{norm} {ylabel}", title=f"{name}: {norm} error", ylog=True,
            )


def _pair_specs(prm: dict, n: int) -> list[OperatorSpec]:
    b = prm["b"]
    c = prm.get("c") or 2 * b
    specs = []
    for name, space in (("P3", _poly(3)), ("T", trig_space())):
        specs.append(OperatorSpec(f"{name} b={b}", space, n, Banded(b, c)))
        specs.append(OperatorSpec(f"{name} dense", space, n))
    return specs


def _reg_specs(n: int) -> list[OperatorSpec]:
    reg = RegularizationSpec(FunctionSpace((Sine(math.pi), Cosine(math.pi)), "G"), (1.0, 1.0))
    return [
        OperatorSpec("P3", _poly(3), n),
        OperatorSpec("P3 regularized", _poly(3), n, reg=reg),
    ]


def _figure_1d(cfg: ExperimentConfig, out: ExperimentOutput, specs: list[OperatorSpec], name: str) -> None:
    prm = cfg.params()
    diag = _diag_table(f"{name}_diagnostics", cfg)
    runs = {}
    for spec in specs:
        op, res = build_operator(spec, cfg.opts)
        _check_exact(out, spec, res)
        _diag_row(diag, spec, op, res)
        runs[spec.label] = run_advection(
            op, prm["K"], prm["a"], gaussian(0.1), prm["t_end"], tol=prm["tol"],
            saveat=_save_times(prm["t_end"], prm["dt_out"]),
        )
    _time_figure(out, name, runs, cfg, "error")
    out.tables[diag.name] = diag


def _figure_2d(cfg: ExperimentConfig, out: ExperimentOutput, specs: list[OperatorSpec], name: str) -> None:
    prm = cfg.params()
    diag = _diag_table(f"{name}_diagnostics", cfg)
    runs = {}
    for spec in specs:
        op, res = build_operator(spec, cfg.opts)
        _check_exact(out, spec, res)
        _diag_row(diag, spec, op, res)
        runs[spec.label] = run_euler(
            op, prm["K"], prm["t_end"], prm["tol"], saveat=_save_times(prm["t_end"], prm["dt_out"]),
        )
    _time_figure(out, name, runs, cfg, "error (sum over variables)")
    out.tables[diag.name] = diag


def fig2(cfg: ExperimentConfig, out: ExperimentOutput) -> None:
    _figure_1d(cfg, out, _pair_specs(cfg.params(), cfg.params()["N"]), "fig2")


def fig3(cfg: ExperimentConfig, out: ExperimentOutput) -> None:
    _figure_2d(cfg, out, _pair_specs(cfg.params(), cfg.params()["N"]), "fig3")


def fig4(cfg: ExperimentConfig, out: ExperimentOutput) -> None:
    _figure_1d(cfg, out, _reg_specs(cfg.params()["N"]), "fig4")


def fig5(cfg: ExperimentConfig, out: ExperimentOutput) -> None:
    _figure_2d(cfg, out, _reg_specs(cfg.params()["N"]), "fig5")


_RECIPES = {
    "table1": table1, "table2": table2, "table4": table4,
    "fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    """Run one recipe. Failures inside a stage are recorded instead of
    raised, so partial results are still returned."""
    out = ExperimentOutput()
    try:
        _RECIPES[cfg.id](cfg, out)
    except Exception as exc:  # noqa: BLE001 -- reported as a failure row
        logger.exception("experiment %s failed", cfg.id)
        table = OutputTable(f"{cfg.id}_failure", ["stage", "error"], config=cfg.as_dict(), seed=cfg.seed)
        table.add(cfg.id, f"{type(exc).__name__}: {exc}")
        out.tables[table.name] = table
        out.failures.append(str(exc))
    return out


# }}}

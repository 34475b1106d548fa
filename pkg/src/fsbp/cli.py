"""Command line interface.

Subcommands: ``build``, ``check``, ``solve``, ``reproduce``, ``convergence``.
Exit codes: 0 success, 1 usage or parse error, 2 construction not exact,
3 diagnostics failed, 4 simulation crashed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from fsbp import io as fsbp_io
from fsbp.construct.build import RegularizationSpec, construct_operator
from fsbp.construct.lbfgs import OptimOptions
from fsbp.construct.regularized import construct_regularized
from fsbp.diagnostics import DEFAULT_NU, InconsistentOperatorError, NumericalError, diagnose
from fsbp.experiments import (
    DEFAULTS,
    EXPERIMENTS,
    ExperimentConfig,
    run_advection,
    run_euler,
    run_experiment,
)
from fsbp.funcspace import EvaluationError, NodeSet, equidistant_nodes, parse_space
from fsbp.operator import parse_pattern
from fsbp.pde.advection import AdvectionProblem, BlockMesh1D, advection_rhs, gaussian, sine_wave
from fsbp.pde.errors import eoc, error_norms
from fsbp.pde.euler import VARIABLES, Euler2DProblem, Mesh2D, euler2d_rhs, manufactured_state
from fsbp.pde.timestep import Adaptive, FixedCFL, SimulationCrash, StiffnessError, integrate
from fsbp.report import OutputTable

logger = logging.getLogger("fsbp")

EXIT_OK, EXIT_USAGE, EXIT_NOT_EXACT, EXIT_DIAGNOSTICS, EXIT_CRASH = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# {{{ argument helpers


def parse_nodes(text: str) -> NodeSet:
    """``eq:xL,xR,N`` (equidistant), ``list:x1,...,xN`` or ``file:<path>``
    (whitespace-separated nodes; the ends define the domain)."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "eq":
        parts = [s.strip() for s in rest.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected eq:xL,xR,N, got {text!r}")
        return equidistant_nodes(float(parts[0]), float(parts[1]), int(parts[2]))
    if kind == "list":
        x = np.array([float(s) for s in rest.split(",")])
    elif kind == "file":
        x = np.array([float(s) for s in Path(rest).read_text().split()])
    else:
        raise ValueError(f"cannot parse node spec {text!r}; use eq:xL,xR,N, list:... or file:<path>")
    if x.size < 2:
        raise ValueError("need at least 2 nodes")
    return NodeSet(float(x[0]), float(x[-1]), x)


def _float_list(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _int_list(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


# keys of the config file that name a differently called option
_CONFIG_ALIASES = {
    "regularization.basis": "g",
    "regularization.g": "g",
    "regularization.weights": "lam",
    "regularization.lambda": "lam",
    "lambda": "lam",
    "weights": "lam",
    "g_basis": "g",
}


def read_config(path: str | Path) -> dict[str, str]:
    """Key-value config file: ``key = value`` lines, ``#`` comments and
    optional ``[section]`` headers (``[regularization]`` holds ``basis``
    and ``weights``)."""
    out = {}
    section = ""
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        key, sep, value = line.partition("=")
        if not sep:
            key, _, value = line.partition(" ")
        key = key.strip().lower().replace("-", "_")
        if not key:
            raise UsageError(f"{path}:{lineno}: malformed line {raw!r}")
        full = f"{section}.{key}" if section else key
        key = _CONFIG_ALIASES.get(full, _CONFIG_ALIASES.get(key, key))
        out[key] = value.strip()
    return out


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if not getattr(args, "config", None):
        return
    actions = {a.dest: a for a in parser._actions}
    sub = getattr(args, "_subparser", None)
    if sub is not None:
        actions.update({a.dest: a for a in sub._actions})
    for key, value in read_config(args.config).items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            parsed = value.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            parsed = action.type(value)
        else:
            parsed = value
        setattr(args, key, parsed)


def _opts(args) -> OptimOptions:
    return OptimOptions(
        max_iters=args.max_iters, grad_tol=args.grad_tol, residual_tol=args.residual_tol,
        seed=args.seed, init=args.init, positive=args.positive,
    )


def _out_dir(args) -> Path:
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_table(args, table: OutputTable) -> Path:
    ext = "csv" if args.format == "csv" else "tsv"
    path = _out_dir(args) / f"{table.name}.{ext}"
    path.write_text(table.to_text(args.format))
    return path


# }}}


# {{{ commands


def _add_construction_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--space", default="poly:3", help="poly:d, trig, custom:<file> or sin:pi,cos:pi,...")
    p.add_argument("--nodes", default="eq:-1,1,50", help="eq:xL,xR,N, list:x1,...,xN or file:<path>")
    p.add_argument("--pattern", default="dense", help="dense or banded:b=3,c=6")
    p.add_argument("--init", default="reference", choices=("reference", "zero", "random"))
    p.add_argument("--max-iters", type=int, default=10000)
    p.add_argument("--grad-tol", type=float, default=1e-13)
    p.add_argument("--residual-tol", type=float, default=1e-10)
    p.add_argument("--positive", default="sigmoid", choices=("sigmoid", "softplus"))
    p.add_argument("--g", default=None, help="augmented basis for regularization, e.g. sin:pi,cos:pi")
    p.add_argument("--lambda", dest="lam", default=None, help="comma-separated weights for --g")
    p.add_argument("--unconstrained", action="store_true",
                   help="minimize the weighted sum instead of the constrained problem")


def cmd_build(args) -> int:
    space = parse_space(args.space)
    nodes = parse_nodes(args.nodes)
    pattern = parse_pattern(args.pattern)
    pattern.validate(nodes.n)
    opts = _opts(args)

    if args.g:
        g = parse_space(args.g)
        weights = _float_list(args.lam) if args.lam else ()
        reg = RegularizationSpec(g, tuple(weights))
        op, res = construct_regularized(space, reg, nodes, pattern, opts, constrained=not args.unconstrained)
    else:
        if args.lam:
            raise UsageError("--lambda requires --g")
        op, res = construct_operator(space, nodes, pattern, opts)

    path = Path(args.output) if args.output else _out_dir(args) / "operator.fsbp"
    path.parent.mkdir(parents=True, exist_ok=True)
    fsbp_io.save(op, path)
    rep = diagnose(op, space)
    residual = max(rep.exactness_residuals, default=0.0)
    print(
        f"objective={res.objective:.6e} max_residual={residual:.3e} iters={res.iters} "
        f"exact={str(res.exact).lower()} rank={rep.rank_D} N={op.n} pattern={pattern.spec()} file={path}"
    )
    if not res.exact:
        print("warning: construction did not reach the exactness tolerance", file=sys.stderr)
        return EXIT_NOT_EXACT
    return EXIT_OK


def cmd_check(args) -> int:
    op = fsbp_io.load(args.operator)
    space = parse_space(args.space)
    nu = tuple(_float_list(args.nu)) if args.nu else DEFAULT_NU
    rep = diagnose(op, space, rtol=args.rtol, nu_samples=nu)
    table = OutputTable("check", ["quantity", "value"], config=vars_for_hash(args), seed=args.seed)
    for key, value in rep.rows():
        table.add(key, value)
    print(table.pretty())
    if args.csv:
        print(f"wrote {_write_table(args, table)}")
    ok = rep.passed(args.exact_tol)
    print("diagnostics: " + ("pass" if ok else "fail"))
    return EXIT_OK if ok else EXIT_DIAGNOSTICS


def vars_for_hash(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if not k.startswith("_") and k != "func"}


def _single_block_count(text) -> int:
    blocks = _int_list(str(text))
    if len(blocks) != 1 or blocks[0] < 1:
        raise UsageError(f"solve takes one positive block count, got {text!r}")
    return blocks[0]


def cmd_solve(args) -> int:
    op = fsbp_io.load(args.operator)
    saveat = sorted(set(_float_list(args.save))) if args.save else []
    if args.equation == "advection":
        mesh = BlockMesh1D(args.x_left, args.x_right, _single_block_count(args.blocks), op)
        init = gaussian(0.1) if args.initial == "gaussian" else sine_wave(args.k)
        prob = AdvectionProblem(args.a, init, args.t_end, args.x_left, args.x_right)
        mode = FixedCFL(args.cfl, mesh.h_min, args.a) if args.cfl else Adaptive(args.tol, args.tol)
        rhs = lambda u, t: advection_rhs(mesh, args.a, u, t)  # noqa: E731
        u0 = prob.initial(mesh.x)
        exact = lambda t: prob.exact(mesh.x, t)  # noqa: E731
        variables = ("u",)
    else:
        prob = Euler2DProblem(t_end=args.t_end)
        mesh = Mesh2D(_single_block_count(args.blocks), op)
        mode = Adaptive(args.tol, args.tol)
        rhs = lambda u, t: euler2d_rhs(mesh, u, t, prob)  # noqa: E731
        u0 = manufactured_state(mesh.X, mesh.Y, 0.0, prob)
        exact = lambda t: manufactured_state(mesh.X, mesh.Y, t, prob)  # noqa: E731
        variables = VARIABLES

    crash = None
    try:
        res = integrate(rhs, u0, (0.0, args.t_end), mode, saveat=saveat)
    except SimulationCrash as exc:
        crash, res = exc, exc.partial

    errors = OutputTable("solve_errors", ["t", "var", "L2", "Linf"], config=vars_for_hash(args), seed=args.seed)
    for t, u in zip(res.times, res.states):
        rep = error_norms(mesh.weights, u, exact(t), variables)
        for v, a, b in zip(rep.variables, rep.l2, rep.linf):
            errors.add(t, v, float(a), float(b))
    if crash is not None:
        errors.add(crash.t, "crash", "crash", "crash")
    print(errors.pretty())
    _write_table(args, errors)

    if args.snapshot and res.states:
        _write_table(args, _snapshot(args, mesh, res.times[-1], res.states[-1], variables))

    if crash is not None:
        print(f"error: {crash}", file=sys.stderr)
        return EXIT_CRASH
    return EXIT_OK


def _snapshot(args, mesh, t, u, variables) -> OutputTable:
    if args.equation == "advection":
        table = OutputTable("solution", ["t", "block", "node", "x", "u"], config=vars_for_hash(args), seed=args.seed)
        for k in range(mesh.n_blocks):
            for i in range(mesh.n):
                table.add(t, k, i, float(mesh.x[k, i]), float(u[k, i]))
        return table
    table = OutputTable(
        "solution", ["t", "block", "node", "x", "y", *variables], config=vars_for_hash(args), seed=args.seed
    )
    K, N = mesh.n_blocks, mesh.n
    for a in range(K):
        for b in range(K):
            for i in range(N):
                for j in range(N):
                    table.add(
                        t, f"{a}:{b}", f"{i}:{j}", float(mesh.X[a, b, i, j]), float(mesh.Y[a, b, i, j]),
                        *(float(u[v, a, b, i, j]) for v in range(4)),
                    )
    return table


def cmd_reproduce(args) -> int:
    overrides = {}
    for key in ("N", "K", "d", "b", "c", "k", "tol", "t_end"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    cfg = ExperimentConfig(args.experiment, overrides, seed=args.seed, max_iters=args.max_iters)
    out = run_experiment(cfg)
    for table in out.tables.values():
        print(f"== {table.name}")
        print(table.pretty())
        print(f"wrote {_write_table(args, table)}")
    if not args.no_svg:
        for name, svg in out.figures.items():
            path = _out_dir(args) / name
            path.write_text(svg)
            print(f"wrote {path}")
    for msg in out.crashes:
        print(f"crash: {msg}")
    for msg in out.failures:
        print(f"failure: {msg}", file=sys.stderr)
    if out.failures:
        return EXIT_NOT_EXACT if all("not exact" in m for m in out.failures) else EXIT_USAGE
    return EXIT_OK


def cmd_convergence(args) -> int:
    op = fsbp_io.load(args.operator)
    blocks = _int_list(args.blocks)
    if len(blocks) < 2 or any(k2 <= k1 for k1, k2 in zip(blocks, blocks[1:])) or blocks[0] < 1:
        raise UsageError("--blocks needs at least two increasing positive block counts")
    runs = []
    for K in blocks:
        if args.equation == "advection":
            init = gaussian(0.1) if args.initial == "gaussian" else sine_wave(args.k)
            run = run_advection(op, K, args.a, init, args.t_end, tol=args.tol)
            variables = ("u",)
        else:
            run = run_euler(op, K, args.t_end, args.tol, prob=Euler2DProblem(t_end=args.t_end))
            variables = VARIABLES
        if run.crash is not None:
            print(f"error: K = {K}: {run.crash}", file=sys.stderr)
            return EXIT_CRASH
        runs.append(run)

    table = OutputTable(
        "convergence", ["resolution", "var", "L2", "Linf", "EOC"], config=vars_for_hash(args), seed=args.seed
    )
    for v, name in enumerate(variables):
        l2 = [float(r.per_variable[-1][v]) for r in runs]
        rates = eoc(l2, blocks)
        for i, K in enumerate(blocks):
            table.add(K, name, l2[i], float(runs[i].per_variable_linf[-1][v]), rates[i - 1] if i else "---")
    print(table.pretty())
    print(f"wrote {_write_table(args, table)}")
    return EXIT_OK


# }}}


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommands repeat the global flags; their copies must not reset
        # values given before the subcommand name
        def d(value):
            return argparse.SUPPRESS if suppress else value

        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=d(0))
        g.add_argument("--out-dir", default=d("out"))
        g.add_argument("--format", default=d("csv"), choices=("csv", "tsv"))
        g.add_argument("--config", default=d(None), help="key-value file; its entries override flags")
        g.add_argument("-v", "--verbose", action="count", default=d(0))
        return g

    common = global_flags(True)
    parser = _Parser(prog="fsbp", description="Function-space summation-by-parts operators.",
                     parents=[global_flags(False)])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("build", parents=[common], help="construct an operator and write it to a file")
    _add_construction_flags(p)
    p.add_argument("-o", "--output", default=None, help="operator file (default <out-dir>/operator.fsbp)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("check", parents=[common], help="run diagnostics on an operator file")
    p.add_argument("operator")
    p.add_argument("--space", default="poly:0", help="function space for the exactness residuals")
    p.add_argument("--rtol", type=float, default=1e-8, help="relative rank tolerance")
    p.add_argument("--nu", default=None, help="comma-separated nu samples (default 0.75,1,2)")
    p.add_argument("--exact-tol", type=float, default=1e-9)
    p.add_argument("--csv", action="store_true", help="also write check.csv to --out-dir")
    p.set_defaults(func=cmd_check)

    def add_run_flags(p):
        p.add_argument("operator")
        p.add_argument("--equation", default="advection", choices=("advection", "euler"))
        p.add_argument("--blocks", default=None)
        p.add_argument("--a", type=float, default=1.0, help="advection velocity")
        p.add_argument("--initial", default="gaussian", choices=("gaussian", "sine"))
        p.add_argument("--k", type=float, default=1.0, help="wave number of the sine initial condition")
        p.add_argument("--t-end", type=float, default=2.0)
        p.add_argument("--tol", type=float, default=1e-6, help="adaptive time stepping tolerance")

    p = sub.add_parser("solve", parents=[common], help="run a PDE benchmark with an operator file")
    add_run_flags(p)
    p.add_argument("--cfl", type=float, default=None, help="fixed CFL stepping with SSPRK(5,3)")
    p.add_argument("--save", default=None, help="comma-separated output times")
    p.add_argument("--x-left", type=float, default=-1.0)
    p.add_argument("--x-right", type=float, default=1.0)
    p.add_argument("--snapshot", action="store_true", help="write the final state to solution.csv")
    p.set_defaults(func=cmd_solve, blocks="1")

    p = sub.add_parser("convergence", parents=[common], help="EOC study over block counts")
    add_run_flags(p)
    p.set_defaults(func=cmd_convergence, blocks="2,4,8", tol=1e-14)

    p = sub.add_parser("reproduce", parents=[common], help="run a benchmark recipe (error tables and figures)")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--K", type=_int_list, default=None)
    p.add_argument("--d", type=_int_list, default=None)
    p.add_argument("--b", type=_int_list, default=None)
    p.add_argument("--c", type=int, default=None)
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=ExperimentConfig("table1").max_iters)
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_reproduce)
    return parser


def _normalize_reproduce(args) -> None:
    # list-valued flags collapse to a scalar where the experiment expects one
    if args.command != "reproduce":
        return
    defaults = DEFAULTS[args.experiment]
    for key in ("K", "b", "d"):
        value = getattr(args, key)
        if value is None or key not in defaults:
            continue
        if isinstance(defaults[key], tuple):
            setattr(args, key, tuple(value))
        elif len(value) != 1:
            raise UsageError(f"{args.experiment} takes a single value for --{key}")
        else:
            setattr(args, key, value[0])


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    args._subparser = parser._subparsers._group_actions[0].choices[args.command]
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        _apply_config(args, parser)
        _validate_reproduce(args)
        _normalize_reproduce(args)
        return args.func(args)
    except (UsageError, fsbp_io.ParseError, EvaluationError, InconsistentOperatorError,
            FileNotFoundError, ValueError) as exc:
        print(f"fsbp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, StiffnessError) as exc:
        print(f"fsbp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS


def _validate_reproduce(args) -> None:
    if args.command != "reproduce":
        return
    allowed = set(DEFAULTS[args.experiment]) | {"c"}
    for key in ("N", "K", "d", "b", "c", "k", "tol", "t_end"):
        if getattr(args, key, None) is not None and key not in allowed:
            raise UsageError(f"{args.experiment} does not take --{key.replace('_', '-')}")


if __name__ == "__main__":
    sys.exit(main())

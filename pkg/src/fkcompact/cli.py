"""Command-line front end.

Subcommands::

    fkcompact coeffs     --q 2 --alpha 0.5 --count 16
    fkcompact solve      --example 1 --q 1 --alpha 0.5 --M 1000 --N 10
    fkcompact converge   --example 1 --q 1 --axis temporal --alphas 0.2,0.5,0.8 \\
                         --h 1/1000 --taus 1/10,1/20,1/40,1/80
    fkcompact stability  --alpha 0.5 --M 50 --N 100 --trials 20

The defaults reproduce the first row of the alpha = 0.5 column of the
first-order temporal study of example 1.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import harness
from .conv_quad import check_order, fractional_power_weights
from .problems import EXAMPLES, example1, example2, get_example, max_error
from .solver import ProblemSpec, march, potential_one, potential_x

log = logging.getLogger("fkcompact")

OUTPUT_DIR_ENV = "FKCOMPACT_OUTPUT_DIR"

_COMPLEX_RE = re.compile(
    r"^\s*(?P<re>[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)?"
    r"\s*(?:(?P<sign>[+-])\s*(?P<im>(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)?\s*[ij])?\s*$"
)


class UsageError(ValueError):
    """A command-line value that fails validation; the message names the flag."""


def parse_complex(text: str) -> complex:
    """Parse ``a+bi`` style literals: ``1+1i``, ``1+i``, ``2``, ``0.5-3j``, ``-i``."""
    s = text.strip().replace(" ", "")
    if s in ("i", "j", "+i", "+j"):
        return 1j
    if s in ("-i", "-j"):
        return -1j
    m = _COMPLEX_RE.match(s)
    if not s or not m or (m.group("re") is None and m.group("sign") is None):
        # a lone imaginary part such as "2i"
        m2 = re.fullmatch(r"([+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)[ij]", s)
        if m2:
            return complex(0.0, float(m2.group(1)))
        raise ValueError(f"malformed complex literal {text!r}")
    real = float(m.group("re")) if m.group("re") else 0.0
    imag = 0.0
    if m.group("sign"):
        imag = float(m.group("im")) if m.group("im") else 1.0
        if m.group("sign") == "-":
            imag = -imag
    return complex(real, imag)


def parse_fraction(text: str) -> Fraction:
    """Exact rational from ``1/80``, ``0.125`` or ``3``; must be positive."""
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"malformed fraction literal {text!r}") from None
    if value <= 0:
        raise ValueError(f"step sizes must be positive, got {text!r}")
    return value


def _list(text: str, conv) -> list:
    return [conv(part) for part in text.split(",") if part.strip()]


@dataclass
class RunConfig:
    command: str
    example: str = "example1"
    problem_file: Path | None = None
    q: int = 1
    alphas: list[float] = field(default_factory=lambda: [0.5])
    M: int = 1000
    N: int = 10
    count: int = 16
    axis: str = "temporal"
    h: Fraction | None = None
    taus: list[Fraction] = field(default_factory=list)
    hs: list[Fraction] = field(default_factory=list)
    p: Fraction | float | None = None
    c: Fraction = Fraction(1)
    rho: complex | None = None
    K_alpha: float | None = None
    seed: int = 0
    trials: int = 20
    scale: float = 1e-3
    output: Path | None = None
    split: bool = False
    jobs: int = 1

    @property
    def alpha(self) -> float:
        return self.alphas[0]


def _add_common(p: argparse.ArgumentParser, several_alphas: bool = False):
    p.add_argument("--example", default="1",
                   help="built-in problem: 1, 2, example1, example2, or a key=value problem "
                        "file (default: 1)")
    p.add_argument("--q", type=int, default=1, help="time discretisation order 1-4 (default: 1)")
    if several_alphas:
        p.add_argument("--alphas", "--alpha", dest="alphas", default="0.5",
                       help="comma-separated fractional orders in (0,1) (default: 0.5)")
    else:
        p.add_argument("--alpha", dest="alphas", default="0.5",
                       help="fractional order in (0,1) (default: 0.5)")
    p.add_argument("--rho", default=None,
                   help="complex parameter rho as a+bi text, Re(rho) > 0 (default: 1+1i)")
    p.add_argument("--K", dest="K_alpha", type=float, default=None,
                   help="diffusion coefficient K_alpha > 0 (default: 0.5)")
    p.add_argument("--output", "-o", default=None,
                   help=f"CSV destination; relative paths are placed under ${OUTPUT_DIR_ENV} "
                        "when set (default: no file)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fkcompact",
        description="Compact finite-difference solver for the 1-D backward fractional "
                    "Feynman-Kac equation.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", help="dump the time weights l_k as CSV rows k,l_k",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--q", type=int, default=1, help="time discretisation order 1-4")
    p.add_argument("--alpha", dest="alphas", default="0.5",
                   help="fractional order in (0,1]; 1 is a sanity check only")
    p.add_argument("--count", type=int, default=16, help="largest index k written (count+1 rows)")
    p.add_argument("--output", "-o", default=None, help="CSV destination (default: stdout only)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    p = sub.add_parser("solve", help="run one march and summarise the final time level",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    p.add_argument("--M", type=int, default=1000, help="number of spatial cells (h = l/M)")
    p.add_argument("--N", type=int, default=10, help="number of time steps (tau = T/N)")

    p = sub.add_parser("converge", help="refinement study with observed orders",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p, several_alphas=True)
    p.add_argument("--axis", choices=harness.AXES, default="temporal",
                   help="temporal: refine tau at fixed --h; spatial/coupled: refine --hs with "
                        "tau = c*h^p")
    p.add_argument("--h", default=None, help="fixed spatial step for temporal studies "
                                             "(fraction literal; default: 1/1000)")
    p.add_argument("--taus", default=None, help="decreasing time steps, e.g. 1/10,1/20 "
                                                "(default: 1/10)")
    p.add_argument("--hs", default=None, help="decreasing spatial steps for spatial/coupled studies")
    p.add_argument("--p", default=None, help="exponent p in tau = c*h^p (default: 4/q; 1 for coupled)")
    p.add_argument("--c", default="1", help="constant c in tau = c*h^p")
    p.add_argument("--split", action="store_true",
                   help="treat --output as a directory and write one CSV per (example, q, axis, alpha)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")

    p = sub.add_parser("stability", help="perturb initial data and check the max-norm bound",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    p.add_argument("--M", type=int, default=50, help="number of spatial cells")
    p.add_argument("--N", type=int, default=100, help="number of time steps")
    p.add_argument("--trials", type=int, default=20, help="random perturbations")
    p.add_argument("--scale", type=float, default=1e-3, help="perturbation radius")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    return parser


def _fail(flag: str, message: str):
    raise UsageError(f"{flag}: {message}")


def parse_args(argv=None) -> RunConfig:
    """Parse and validate ``argv`` into a :class:`RunConfig`; raises :class:`UsageError`."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise UsageError("invalid command line (see --help)") from None
    cfg = RunConfig(command=ns.command)
    if getattr(ns, "verbose", False):
        logging.basicConfig(level=logging.DEBUG)

    try:
        cfg.q = check_order(ns.q)
    except ValueError as exc:
        _fail("--q", str(exc))

    try:
        cfg.alphas = _list(ns.alphas, float)
    except ValueError:
        _fail("--alpha", f"malformed number list {ns.alphas!r}")
    if not cfg.alphas:
        _fail("--alpha", "no value given")
    upper_ok = (lambda a: a <= 1.0) if cfg.command == "coeffs" else (lambda a: a < 1.0)
    for a in cfg.alphas:
        if not (a > 0 and upper_ok(a)):
            _fail("--alpha", f"value {a} outside (0, 1)")

    if ns.output:
        out = Path(ns.output)
        base = os.environ.get(OUTPUT_DIR_ENV)
        if base and not out.is_absolute():
            out = Path(base) / out
        cfg.output = out

    if cfg.command == "coeffs":
        if ns.count < 0:
            _fail("--count", "must be non-negative")
        cfg.count = ns.count
        return cfg

    example = str(ns.example)
    if example in ("1", "2") or example in EXAMPLES:
        cfg.example = example if example in EXAMPLES else f"example{example}"
    elif Path(example).is_file():
        cfg.problem_file = Path(example)
        cfg.example = "custom"
    else:
        _fail("--example", f"unknown example or missing problem file {example!r}")

    if ns.rho is not None:
        try:
            cfg.rho = parse_complex(ns.rho)
        except ValueError as exc:
            _fail("--rho", str(exc))
        if not cfg.rho.real > 0:
            _fail("--rho", f"Re(rho) must be positive, got {cfg.rho}")
    if ns.K_alpha is not None:
        if not ns.K_alpha > 0:
            _fail("--K", "must be positive")
        cfg.K_alpha = ns.K_alpha

    if cfg.command in ("solve", "stability"):
        if ns.M < 2:
            _fail("--M", "need at least 2 cells")
        if ns.N < 1:
            _fail("--N", "need at least 1 step")
        cfg.M, cfg.N = ns.M, ns.N
        if len(cfg.alphas) != 1:
            _fail("--alpha", "takes a single value for this command")
    if cfg.command == "stability":
        if ns.trials < 1:
            _fail("--trials", "need at least one trial")
        if not ns.scale > 0:
            _fail("--scale", "must be positive")
        cfg.trials, cfg.scale, cfg.seed = ns.trials, ns.scale, ns.seed
        if cfg.q != 1:
            _fail("--q", "the stability bound covers q = 1 only")

    if cfg.command == "converge":
        _parse_converge(ns, cfg)
    return cfg


def _parse_converge(ns, cfg: RunConfig):
    cfg.axis = ns.axis
    cfg.split = ns.split
    if ns.jobs < 1:
        _fail("--jobs", "must be at least 1")
    cfg.jobs = ns.jobs

    def fractions(flag, text):
        try:
            values = _list(text, parse_fraction)
        except ValueError as exc:
            _fail(flag, str(exc))
        if not values:
            _fail(flag, "no value given")
        if any(b >= a for a, b in zip(values, values[1:])):
            _fail(flag, "values must be strictly decreasing")
        return values

    if cfg.axis == "temporal":
        for flag, value in (("--hs", ns.hs), ("--p", ns.p)):
            if value is not None:
                _fail(flag, "not allowed with --axis temporal (use --h and --taus)")
        if ns.c != "1":
            _fail("--c", "not allowed with --axis temporal")
        try:
            cfg.h = parse_fraction(ns.h) if ns.h is not None else Fraction(1, 1000)
        except ValueError as exc:
            _fail("--h", str(exc))
        cfg.taus = fractions("--taus", ns.taus if ns.taus is not None else "1/10")
    else:
        for flag, value in (("--h", ns.h), ("--taus", ns.taus)):
            if value is not None:
                _fail(flag, f"not allowed with --axis {cfg.axis} (use --hs, --p, --c)")
        if ns.hs is None:
            _fail("--hs", f"required with --axis {cfg.axis}")
        cfg.hs = fractions("--hs", ns.hs)
        try:
            cfg.c = parse_fraction(ns.c)
        except ValueError as exc:
            _fail("--c", str(exc))
        if ns.p is None:
            cfg.p = Fraction(1) if cfg.axis == "coupled" else Fraction(4, cfg.q)
        else:
            try:
                cfg.p = Fraction(ns.p)
            except (ValueError, ZeroDivisionError):
                _fail("--p", f"malformed exponent {ns.p!r}")
            if cfg.p <= 0:
                _fail("--p", "must be positive")
        if cfg.axis == "coupled" and cfg.p != 1:
            _fail("--p", "coupled studies use tau = c*h (p = 1)")
    if cfg.split and cfg.output is None:
        base = os.environ.get(OUTPUT_DIR_ENV)
        if not base:
            _fail("--split", f"needs --output or ${OUTPUT_DIR_ENV}")
        cfg.output = Path(base)


def read_problem_file(path: Path) -> dict:
    """Read ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


_PROBLEM_KEYS = {"problem", "alpha", "K_alpha", "rho", "U", "l", "T", "M", "N"}


def problem_from_file(path: Path, cfg: RunConfig):
    """Build a problem factory ``alpha -> problem`` from a key=value file.

    ``problem`` selects built-in data: ``example1`` / ``example2`` (manufactured,
    exact solution known) or ``zero`` (homogeneous data, no forcing).
    """
    values = read_problem_file(path)
    unknown = set(values) - _PROBLEM_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    kind = values.get("problem", "zero")
    if "alpha" in values:
        cfg.alphas = _list(values["alpha"], float)
    K = float(values.get("K_alpha", cfg.K_alpha or 0.5))
    rho = parse_complex(values["rho"]) if "rho" in values else (cfg.rho or 1 + 1j)
    U = values.get("U", {"example1": "one", "example2": "x"}.get(kind, "one"))
    if U not in ("one", "x"):
        raise ValueError(f"{path}: U must be 'one' or 'x', got {U!r}")
    l = float(values.get("l", 1.0))
    T = float(values.get("T", 1.0))
    if "M" in values:
        cfg.M = int(values["M"])
    if "N" in values:
        cfg.N = int(values["N"])

    if kind in ("example1", "example2"):
        expected = "one" if kind == "example1" else "x"
        if U != expected or l != 1.0:
            raise ValueError(f"{path}: {kind} requires U={expected} and l=1")
        maker = example1 if kind == "example1" else example2
        return lambda alpha: maker(alpha, K_alpha=K, rho=rho, T=T)
    if kind == "zero":
        pot = potential_one if U == "one" else potential_x
        return lambda alpha: ProblemSpec(alpha=alpha, K_alpha=K, rho=rho, U=pot, l=l, T=T)
    raise ValueError(f"{path}: problem must be example1, example2 or zero, got {kind!r}")


def _problem_factory(cfg: RunConfig):
    if cfg.problem_file is not None:
        return problem_from_file(cfg.problem_file, cfg)
    maker = EXAMPLES[cfg.example]
    kwargs = {}
    if cfg.rho is not None:
        kwargs["rho"] = cfg.rho
    if cfg.K_alpha is not None:
        kwargs["K_alpha"] = cfg.K_alpha
    if not kwargs:
        return cfg.example
    return lambda alpha: maker(alpha, **kwargs)


def _write(cfg: RunConfig, text: str):
    if cfg.output is not None:
        harness.atomic_write_text(cfg.output, text)
        print(f"wrote {cfg.output}")


def _cmd_coeffs(cfg: RunConfig, out) -> int:
    table = fractional_power_weights(cfg.q, cfg.alpha, cfg.count)
    buf = io.StringIO()
    buf.write("k,l_k\n")
    for k, value in enumerate(table.weights):
        buf.write(f"{k},{value:.17g}\n")
    text = buf.getvalue()
    out.write(text)
    _write(cfg, text)
    return 0


def _cmd_solve(cfg: RunConfig, out) -> int:
    source = _problem_factory(cfg)
    made = get_example(source, cfg.alpha) if isinstance(source, str) else source(cfg.alpha)
    spec = made if isinstance(made, ProblemSpec) else made.spec
    run = march(spec, cfg.q, cfg.M, cfg.N)
    final = run.final
    out.write(f"q={cfg.q} alpha={cfg.alpha:g} M={cfg.M} N={cfg.N} h={run.grid.h:.6g} "
              f"tau={run.tgrid.tau:.6g}\n")
    out.write(f"max |P(x, T)| = {np.max(np.abs(final[1:-1])):.4e}\n")
    rows = ["x,re,im"]
    rows += [f"{x:.17g},{v.real:.17g},{v.imag:.17g}" for x, v in zip(run.grid.x, final)]
    if not isinstance(made, ProblemSpec):
        out.write(f"max error at T = {max_error(run, made):.4e}\n")
    _write(cfg, "\n".join(rows) + "\n")
    return 0


def _cmd_converge(cfg: RunConfig, out) -> int:
    source = _problem_factory(cfg)
    if cfg.problem_file is not None:
        probe = source(cfg.alpha)
        if isinstance(probe, ProblemSpec):
            raise ValueError("convergence studies need a problem with a known exact solution")
    if cfg.axis == "temporal":
        tables = harness.temporal_study(source, cfg.q, cfg.alphas, cfg.h, cfg.taus, jobs=cfg.jobs)
    else:
        p = int(cfg.p) if cfg.p.denominator == 1 else float(cfg.p)
        tables = harness.spatial_study(source, cfg.q, cfg.alphas, cfg.hs, p=p, c=cfg.c,
                                       axis=cfg.axis, jobs=cfg.jobs)
    out.write(f"{cfg.example} q={cfg.q} axis={cfg.axis}\n")
    out.write(harness.format_table(tables) + "\n")
    if cfg.output is None:
        return 0
    if cfg.split:
        for t in tables:
            name = f"{t.example or cfg.example}_q{t.q}_{t.axis}_alpha{t.alpha:g}.csv"
            harness.atomic_write_text(cfg.output / name, harness.csv_text(t))
            print(f"wrote {cfg.output / name}")
    else:
        _write(cfg, harness.csv_text(tables))
    return 0


def _cmd_stability(cfg: RunConfig, out) -> int:
    source = _problem_factory(cfg)
    report = harness.stability_study(source, cfg.alpha, cfg.M, cfg.N, cfg.scale, cfg.trials,
                                     seed=cfg.seed)
    out.write(f"alpha={report.alpha:g} M={report.M} N={report.N} trials={report.trials}\n")
    out.write(f"bound sqrt(3l/8) = {report.bound:.4f}, worst observed ratio = "
              f"{report.worst_ratio:.4e}\n")
    for trial, n, ratio in report.failures:
        out.write(f"FAIL trial={trial} n={n} ratio={ratio:.6g}\n")
    out.write("PASS\n" if report.passed else "FAIL\n")
    text = "trial,n,ratio\n" + "".join(f"{t},{n},{r:.17g}\n" for t, n, r in report.failures)
    _write(cfg, text)
    return 0 if report.passed else 1


COMMANDS = {"coeffs": _cmd_coeffs, "solve": _cmd_solve, "converge": _cmd_converge,
            "stability": _cmd_stability}


def run(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        return COMMANDS[cfg.command](cfg, out)
    except Exception as exc:  # one-line diagnostic with config echo
        log.debug("failure", exc_info=True)
        sys.stderr.write(f"fkcompact {cfg.command}: {type(exc).__name__}: {exc} "
                         f"[example={cfg.example} q={cfg.q} alphas={cfg.alphas}]\n")
        return 1


def main(argv=None) -> int:
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"fkcompact: error: {exc}\n")
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

"""Refinement studies, stability experiments and CSV output."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .conv_quad import check_order, fractional_power_weights
from .mesh_ops import Grid1D, norms
from .problems import ManufacturedProblem, get_example, max_error
from .solver import ProblemSpec, march

AXES = ("temporal", "spatial", "coupled")
CSV_HEADER = ("axis", "q", "alpha", "step", "error", "rate")


@dataclass(frozen=True)
class RateRow:
    step: Fraction | float
    error: float
    rate: float | None = None


@dataclass
class RateTable:
    axis: str
    q: int
    alpha: float
    rows: list[RateRow] = field(default_factory=list)
    example: str = ""

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")

    @property
    def errors(self) -> list[float]:
        return [r.error for r in self.rows]

    @property
    def rates(self) -> list[float | None]:
        return [r.rate for r in self.rows]

    @property
    def steps(self) -> list:
        return [r.step for r in self.rows]


def observed_rate(s_prev, s_next, e_prev, e_next) -> float:
    """``log(e_prev/e_next) / log(s_prev/s_next)``; works for non-dyadic refinement."""
    return math.log(e_prev / e_next) / math.log(float(s_prev) / float(s_next))


def build_rate_table(axis: str, q: int, alpha: float, steps: Sequence, errors: Sequence[float],
                     example: str = "") -> RateTable:
    rows = []
    for j, (s, e) in enumerate(zip(steps, errors)):
        rate = None if j == 0 else observed_rate(steps[j - 1], s, errors[j - 1], e)
        rows.append(RateRow(s, float(e), rate))
    return RateTable(axis, q, alpha, rows, example)


def steps_for_horizon(T, tau) -> int:
    """Whole steps of size ``tau`` that fit in ``[0, T]`` (exact when ``tau`` divides ``T``)."""
    if isinstance(tau, Fraction):
        return max(1, math.floor(Fraction(T) / tau))
    ratio = float(T) / float(tau)
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return max(1, int(nearest))
    return max(1, math.floor(ratio))


def cells_for_length(l, h) -> int:
    ratio = Fraction(l) / Fraction(h) if isinstance(h, Fraction) else float(l) / float(h)
    nearest = round(ratio)
    if abs(ratio - nearest) > 1e-9 * max(1.0, float(ratio)):
        raise ValueError(f"h={h} does not divide the domain length {l}")
    return int(nearest)


ProblemSource = Callable[[float], ManufacturedProblem] | str


def _resolve(problem: ProblemSource) -> Callable[[float], ManufacturedProblem]:
    if isinstance(problem, str):
        return lambda alpha: get_example(problem, alpha)
    return problem


def _run_error(task) -> float:
    problem, q, alpha, M, N, horizon = task
    prob = _resolve(problem)(alpha)
    spec = prob.spec if horizon is None else replace(prob.spec, T=horizon)
    return max_error(march(spec, q, M, N), prob)


def _run_tasks(tasks: list, jobs: int) -> list[float]:
    # worker pools need picklable problem sources, i.e. example names
    if jobs > 1 and all(isinstance(t[0], str) for t in tasks):
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_error, tasks))
    return [_run_error(t) for t in tasks]


def _example_name(problem: ProblemSource, alpha: float) -> str:
    return _resolve(problem)(alpha).name


def temporal_study(problem: ProblemSource, q: int, alpha_list: Iterable[float], h_fixed,
                   tau_list: Sequence, jobs: int = 1) -> list[RateTable]:
    """Refine tau at fixed h; one table per alpha, rows in ``tau_list`` order."""
    q = check_order(q)
    taus = list(tau_list)
    if any(float(b) >= float(a) for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_list must be strictly decreasing")
    alphas = list(alpha_list)
    tasks, layout = [], []
    for alpha in alphas:
        base = _resolve(problem)(alpha).spec
        M = cells_for_length(base.l, h_fixed)
        for tau in taus:
            N = steps_for_horizon(base.T, tau)
            if N * Fraction(tau) != Fraction(base.T):
                raise ValueError(f"tau={tau} does not divide the horizon T={base.T}")
            tasks.append((problem, q, alpha, M, N, None))
            layout.append((alpha, tau))
    errors = _run_tasks(tasks, jobs)
    tables = []
    for alpha in alphas:
        errs = [e for (a, _), e in zip(layout, errors) if a == alpha]
        tables.append(build_rate_table("temporal", q, alpha, taus, errs,
                                       _example_name(problem, alpha)))
    return tables


def spatial_study(problem: ProblemSource, q: int, alpha_list: Iterable[float], h_list: Sequence,
                  p: float, c: float = 1.0, axis: str = "spatial", jobs: int = 1) -> list[RateTable]:
    """Refine h with ``tau = c * h**p``; ``axis='coupled'`` labels tau = h studies.

    When ``tau`` does not divide ``T`` the run takes ``floor(T/tau)`` steps of
    exactly ``tau`` and the error is measured at the last level reached.
    """
    q = check_order(q)
    if axis not in ("spatial", "coupled"):
        raise ValueError(f"spatial_study axis must be 'spatial' or 'coupled', got {axis!r}")
    hs = list(h_list)
    if any(float(b) >= float(a) for a, b in zip(hs, hs[1:])):
        raise ValueError("h_list must be strictly decreasing")
    alphas = list(alpha_list)
    tasks, layout = [], []
    for alpha in alphas:
        base = _resolve(problem)(alpha).spec
        for h in hs:
            M = cells_for_length(base.l, h)
            if isinstance(h, Fraction) and Fraction(p).denominator == 1 and Fraction(c) == c:
                tau = Fraction(c) * h ** int(p)
            else:
                tau = c * float(h) ** p
            N = steps_for_horizon(base.T, tau)
            # tau stays c*h**p; the error is read at t_N = N*tau, which may fall short of T
            horizon = N * tau
            if isinstance(horizon, Fraction):
                horizon = None if horizon == base.T else float(horizon)
            elif abs(horizon - base.T) <= 1e-12 * base.T:
                horizon = None
            tasks.append((problem, q, alpha, M, N, horizon))
            layout.append((alpha, h))
    errors = _run_tasks(tasks, jobs)
    tables = []
    for alpha in alphas:
        errs = [e for (a, _), e in zip(layout, errors) if a == alpha]
        tables.append(build_rate_table(axis, q, alpha, hs, errs, _example_name(problem, alpha)))
    return tables


@dataclass
class StabilityReport:
    alpha: float
    M: int
    N: int
    bound: float
    worst_ratio: float
    trials: int
    failures: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def random_perturbation(grid: Grid1D, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform random complex values in the disk of radius ``scale``; zero at the boundary."""
    n = grid.M - 1
    r = scale * np.sqrt(rng.random(n))
    theta = 2 * np.pi * rng.random(n)
    eps = grid.zeros()
    eps[1:-1] = r * np.exp(1j * theta)
    return eps


def stability_study(problem: ProblemSpec | ManufacturedProblem | ProblemSource, alpha: float, M: int, N: int,
                    perturbation_scale: float = 1e-3, trials: int = 20, seed: int = 0,
                    q: int = 1) -> StabilityReport:
    """Perturb the initial data, rerun, and check the max-norm stability bound at every level.

    The bound is ``sqrt(3 l / 8) * |delta_x eps^0|``.  Only q = 1 with ``U = 1``
    is covered by the bound.
    """
    if q != 1:
        raise ValueError("the stability bound is established for q = 1 only")
    if isinstance(problem, ProblemSpec):
        spec = problem
    elif isinstance(problem, ManufacturedProblem):
        spec = problem.spec
    else:
        made = _resolve(problem)(alpha)
        spec = made if isinstance(made, ProblemSpec) else made.spec
    grid = Grid1D(spec.l, M)
    if not np.allclose(spec.potential(grid.x), 1.0):
        raise ValueError("stability study requires the constant potential U = 1")
    weights = fractional_power_weights(1, spec.alpha, N)
    reference = march(spec, 1, M, N, weights=weights).history
    const = math.sqrt(3 * spec.l / 8)

    worst, failures = 0.0, []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        eps0 = random_perturbation(grid, perturbation_scale, rng)
        phi = spec.phi

        def perturbed_phi(x, _phi=phi, _eps=eps0):
            return np.asarray(_phi(x), dtype=complex) + _eps

        perturbed = march(replace(spec, phi=perturbed_phi), 1, M, N, weights=weights).history
        grad0 = norms(eps0, grid).grad
        if grad0 == 0:
            if np.any(perturbed != reference):
                failures.append((trial, -1, math.inf))
            continue
        diff = np.abs(perturbed[:, 1:-1] - reference[:, 1:-1]).max(axis=1)
        ratios = diff / grad0
        worst = max(worst, float(ratios.max()))
        for n in np.nonzero(ratios > const * (1 + 1e-12))[0]:
            failures.append((trial, int(n), float(ratios[n])))
    return StabilityReport(spec.alpha, M, N, const, worst, trials, failures)


def _fmt_step(step) -> str:
    if isinstance(step, Fraction):
        return str(step)
    return repr(float(step))


def _parse_step(text: str):
    if "/" in text or text.lstrip("-").isdigit():
        return Fraction(text)
    return float(text)


def format_rows(tables: Iterable[RateTable]) -> list[list[str]]:
    out = []
    for t in tables:
        for r in t.rows:
            out.append([t.axis, str(t.q), repr(float(t.alpha)), _fmt_step(r.step),
                        f"{r.error:.4e}", "" if r.rate is None else f"{r.rate:.4f}"])
    return out


def csv_text(tables: RateTable | Iterable[RateTable]) -> str:
    if isinstance(tables, RateTable):
        tables = [tables]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(format_rows(tables))
    return buf.getvalue()


def atomic_write_text(destination, text: str):
    """Write via a temporary file in the same directory, then rename into place."""
    path = Path(destination)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_csv(table: RateTable | Iterable[RateTable], destination) -> None:
    """Write ``axis,q,alpha,step,error,rate`` rows to a path or an open text stream."""
    text = csv_text(table)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        atomic_write_text(destination, text)


def read_csv(source) -> list[RateTable]:
    """Parse CSV written by :func:`emit_csv` back into tables (grouped by axis, q, alpha)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header!r}")
    tables: list[RateTable] = []
    for axis, q, alpha, step, error, rate in reader:
        key = (axis, int(q), float(alpha))
        if not tables or (tables[-1].axis, tables[-1].q, tables[-1].alpha) != key:
            tables.append(RateTable(*key))
        tables[-1].rows.append(RateRow(_parse_step(step), float(error),
                                       None if rate == "" else float(rate)))
    return tables


def rounded(table: RateTable) -> RateTable:
    """The table as it appears after a CSV round trip."""
    rows = [RateRow(r.step, float(f"{r.error:.4e}"),
                    None if r.rate is None else float(f"{r.rate:.4f}")) for r in table.rows]
    return RateTable(table.axis, table.q, float(table.alpha), rows)


def format_table(tables: Sequence[RateTable]) -> str:
    """Plain-text layout with one error/rate column pair per alpha."""
    if not tables:
        return ""
    axis = tables[0].axis
    label = "tau" if axis == "temporal" else "h"
    head = f"{label:>8}" + "".join(f"  {'alpha=' + format(t.alpha, 'g'):>12} {'rate':>7}" for t in tables)
    lines = [head]
    for j, step in enumerate(tables[0].steps):
        line = f"{_fmt_step(step):>8}"
        for t in tables:
            r = t.rows[j]
            rate = "-" if r.rate is None else f"{r.rate:.4f}"
            line += f"  {r.error:12.4e} {rate:>7}"
        lines.append(line)
    return "\n".join(lines)

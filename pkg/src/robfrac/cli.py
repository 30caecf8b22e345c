"""Command-line front end.

Verbs: ``solve``, ``case``, ``validate`` and ``dump-conic``.  Every verb
prints a JSON report on stdout; ``--out`` also writes it (and any CSV
tables) to disk.  Exit codes: 0 success, 2 bad input or wrong case,
3 infeasible, 4 solver failure.  ``ROBFRAC_LOG`` sets the log level.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import conic
from .errors import (
    AssumptionViolationError,
    InfeasibleError,
    InputError,
    RobfracError,
    SolverError,
    UnsupportedConfigurationError,
    WrongCaseError,
    WrongMethodError,
)
from .problemfile import load as load_problem
from .reformulate import build_parametric, build_s1, build_s2, classify
from .rootfind import DEFAULT_TOL, METHODS, solve_fp

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
STUDIES = ("newsvendor", "meanvar", "dea", "appendixA")

logger = logging.getLogger("robfrac")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(w) for k, w in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(w) for w in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _dumps(report):
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"


def _emit(report, out=None):
    text = _dumps(report)
    click.echo(text, nl=False)
    if out is not None:
        Path(out).write_text(text)


def _certificate_summary(result, tol=1e-8):
    """Blocks carrying weight in a primal infeasibility certificate."""
    if result is None or result.certificate is None or result.program is None:
        return None
    y, off, blocks = result.certificate, 0, []
    for blk in result.program.blocks:
        part = y[off:off + blk.size]
        off += blk.size
        if np.max(np.abs(part), initial=0.0) > tol:
            blocks.append(blk.tag or blk.kind)
    return dict(blocks=sorted(set(blocks)), norm=float(np.linalg.norm(y)))


def _run(action, out=None):
    """Run ``action`` returning a report; map library errors to exit codes."""
    try:
        report = action()
        code = EXIT_OK
    except InfeasibleError as exc:
        report = dict(status="infeasible", message=str(exc),
                      certificate=_certificate_summary(exc.result))
        code = EXIT_INFEASIBLE
    except SolverError as exc:
        res = exc.result
        report = dict(status="solver-error", message=str(exc),
                      backend_status=None if res is None else res.stats.get("backend_status"))
        code = EXIT_SOLVER
    except (InputError, WrongCaseError, WrongMethodError, UnsupportedConfigurationError,
            AssumptionViolationError, OSError) as exc:
        report = dict(status="error", error=type(exc).__name__, message=str(exc))
        code = EXIT_INPUT
    except RobfracError as exc:
        report = dict(status="solver-error", error=type(exc).__name__, message=str(exc))
        code = EXIT_SOLVER
    if code:
        click.echo(f"error: {report['message']}", err=True)
    _emit(report, out)
    sys.exit(code)


def _parse_sweep(text):
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError as exc:
        raise click.BadParameter("expected start:stop:step") from exc
    if step <= 0 or hi < lo:
        raise click.BadParameter("need step > 0 and stop >= start")
    count = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(count), 12)


def _out_dir(out):
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return str(path)


@click.group(context_settings=dict(help_option_names=["-h", "--help"]))
def main():
    """Robust fractional programming solver."""
    level = os.environ.get("ROBFRAC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


# ---------------------------------------------------------------------------
# problem files


@main.command()
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(METHODS), default=None, help="Solution method.")
@click.option("--tol", type=float, default=None, help="Root-finding tolerance.")
@click.option("--max-iter", type=int, default=None, help="Root-finding iteration limit.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Report file; the trace CSV goes next to it.")
def solve(path, method, tol, max_iter, out):
    """Solve the problem file PATH."""

    def action():
        pf = load_problem(path)
        m = method or pf.solver.get("method", "auto")
        t = tol if tol is not None else pf.solver.get("tol", DEFAULT_TOL)
        it = max_iter if max_iter is not None else pf.solver.get("max_iter", 200)
        sol = solve_fp(pf.program, method=m, tol=t, max_iter=it)
        trace_path = None
        if sol.trace is not None and out is not None:
            trace_path = str(Path(out).with_suffix(".trace.csv"))
            sol.trace.to_csv(trace_path, timing=False)
        widths = None if sol.trace is None else sol.trace.widths
        return dict(
            status=sol.status, name=pf.program.name, alpha_star=sol.alpha, x=sol.x,
            case=sol.case.case, case_reason=sol.case.reason, alpha_domain=sol.case.alpha_domain,
            method=sol.method, tol=t, max_iter=it, trace_path=trace_path,
            iterations=0 if sol.trace is None else len(sol.trace.records),
            final_width=None if widths is None or widths.size == 0 else widths[-1],
        )

    _run(action, out)


@main.command()
@click.argument("path", type=click.Path(dir_okay=False))
def validate(path):
    """Parse and classify the problem file PATH without solving it."""

    def action():
        pf = load_problem(path)
        fp = pf.program
        tag = classify(fp)
        return dict(status="valid", name=fp.name, n=fp.n, case=tag.case,
                    alpha_domain=tag.alpha_domain, reason=tag.reason,
                    uncertain_parameters=fp.objective_set.L, constraints=len(fp.constraints),
                    sets=sorted(pf.sets))

    _run(action)


@main.command("dump-conic")
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--alpha", type=float, default=None,
              help="Ratio level; selects the parametric program F(alpha).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Dump file.")
def dump_conic(path, alpha, out):
    """Write the conic program built for PATH in the text dump format.

    Without ``--alpha`` only the single-solve form is available.
    """
    try:
        pf = load_problem(path)
        tag = classify(pf.program)
        if alpha is not None:
            program = build_s2(pf.program, alpha) if tag.case == "S2" else \
                build_parametric(pf.program, alpha)
        elif tag.case == "S1":
            program = build_s1(pf.program)
        else:
            raise WrongCaseError(f"case {tag.case} ({tag.reason}) has no single conic "
                                 "program; pass --alpha")
    except (InputError, WrongCaseError, UnsupportedConfigurationError,
            AssumptionViolationError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    text = conic.dump(program)
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text)


# ---------------------------------------------------------------------------
# case studies


@main.command()
@click.argument("study", type=click.Choice(STUDIES))
@click.option("--gamma", type=float, default=None, help="DEA budget.")
@click.option("--gamma-sweep", default=None, help="DEA budgets as start:stop:step.")
@click.option("--simulate", type=int, default=None, help="DEA simulation draws.")
@click.option("--mode", type=click.Choice(["uniform", "endpoints"]), default="uniform",
              help="DEA simulation draw mode.")
@click.option("--rho", type=float, default=None, help="Divergence radius.")
@click.option("--seed", type=int, default=None, help="Random seed.")
@click.option("--tol", type=float, default=None, help="Bisection tolerance.")
@click.option("--max-iter", type=int, default=200, help="Bisection iteration limit.")
@click.option("--jobs", type=int, default=1, help="Worker processes for sweeps and draws.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Directory for report.json and CSV tables.")
def case(study, gamma, gamma_sweep, simulate, mode, rho, seed, tol, max_iter, jobs, out):
    """Run a bundled case study."""
    runners = dict(newsvendor=_case_newsvendor, meanvar=_case_meanvar, dea=_case_dea,
                   appendixA=_case_appendix_a)
    opts = dict(gamma=gamma, gamma_sweep=gamma_sweep, simulate=simulate, mode=mode, rho=rho,
                seed=seed, tol=tol, max_iter=max_iter, jobs=jobs)

    def action():
        outdir = _out_dir(out)
        report = runners[study](opts, outdir)
        report["study"] = study
        return report

    _run(action, None if out is None else Path(out) / "report.json")


def _case_dea(o, outdir):
    from .casestudies.dea import DEA_TOL, dea_simulate, dea_sweep, load_dea, rank_from_efficiencies

    d = load_dea()
    tol = DEA_TOL if o["tol"] is None else o["tol"]
    report = dict(tol=tol, seed=o["seed"])
    if o["simulate"] is not None:
        seed = 0 if o["seed"] is None else o["seed"]
        frac = dea_simulate(d, o["simulate"], seed=seed, mode=o["mode"], jobs=o["jobs"])
        report.update(seed=seed, draws=o["simulate"], mode=o["mode"], fraction=frac,
                      statement=f"DMU 3 more efficient than DMU 5 in {frac:.2f} of draws")
        click.echo(f"fraction {frac:.4f}", err=True)
        return report
    if o["gamma_sweep"] is not None:
        gammas = _parse_sweep(o["gamma_sweep"])
    else:
        gammas = np.array([0.0 if o["gamma"] is None else o["gamma"]])
    if np.any(gammas < 0) or np.any(gammas > d.n_in + d.n_out):
        raise InputError(f"gamma must lie in [0, {d.n_in + d.n_out}]")
    table = dea_sweep(d, gammas, tol=tol, jobs=o["jobs"])
    rows = []
    for gm, eff in zip(gammas, table):
        order, ties = rank_from_efficiencies(eff)
        rows.append(dict(gamma=gm, efficiency=eff, ranking=order, ties=ties))
    report.update(rows=rows)
    if outdir is not None:
        header = ["gamma"] + [f"dmu{k + 1}" for k in range(d.n_dmu)] + ["ranking"]
        body = [[float(r["gamma"])] + [float(e) for e in r["efficiency"]]
                + [" ".join(map(str, r["ranking"]))] for r in rows]
        report["files"] = [_write_csv(outdir / "dea_efficiency.csv", header, body)]
    return report


def _case_meanvar(o, outdir):
    from .casestudies.meanvar import MEANVAR_TOL, meanvar_generate, meanvar_study

    d = meanvar_generate(o["seed"])
    tol = MEANVAR_TOL if o["tol"] is None else o["tol"]
    st = meanvar_study(d, o["rho"], tol=tol)
    trace = st.pop("trace")
    report = dict(st, tol=tol, iterations=len(trace.records), trace_status=trace.status)
    if outdir is not None:
        tpath = outdir / "meanvar_trace.csv"
        trace.to_csv(tpath, timing=False)
        wc = _write_csv(outdir / "meanvar_worst_case.csv", ["solution", "at_estimate", "worst_case"],
                        [["nominal", st["nominal_at_estimate"], st["nominal_worst"]],
                         ["robust", st["robust_at_estimate"], st["robust_worst"]]])
        report["files"] = [str(tpath), wc]
    return report


def _case_newsvendor(o, outdir):
    from .casestudies.newsvendor import load_newsvendor, newsvendor_generate, newsvendor_study

    data = load_newsvendor() if o["seed"] is None else newsvendor_generate(o["seed"])
    st = newsvendor_study(data, o["rho"])
    report = dict(st)
    if outdir is not None:
        rows = [["nominal", st["nominal_at_estimate"], st["nominal_worst"]],
                ["robust", st["robust_at_estimate"], st["robust_worst"]],
                ["hindsight", "", st["hindsight_at_robust_worst"]]]
        report["files"] = [_write_csv(outdir / "newsvendor.csv",
                                      ["solution", "roi_at_estimate", "roi_worst_case"], rows)]
    return report


def _case_appendix_a(o, outdir):
    from .casestudies.appendix_a import X_BETTER, X_LIN, inner_max

    v1, a1 = inner_max(X_LIN)
    v2, a2 = inner_max(X_BETTER)
    verdict = "PASS" if v2 < v1 else "FAIL"
    click.echo(f"ratio at {X_LIN}: {v1:.6f}; at {X_BETTER}: {v2:.6f}; {verdict}", err=True)
    report = dict(x_lin=X_LIN, val_at_lin_point=v1, a_at_lin_point=a1, x_better=X_BETTER,
                  best_found_val=v2, a_at_best=a2, result=verdict)
    if verdict == "FAIL":
        raise AssumptionViolationError("the second point does not improve the worst-case ratio")
    return report


if __name__ == "__main__":  # pragma: no cover
    main()

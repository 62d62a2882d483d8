"""Command-line entry point wiring the modules into file-based pipelines.

Subcommands: solve, kernel, simulate, report, pgf-check, verify.  Every
command is deterministic given its flags (seeds included); re-running
produces byte-identical outputs.  Exit codes: 0 on pass, 1 on threshold
failure, 2 on usage or input errors.  Relative output paths resolve
against $NESTCOAL_OUTDIR when it is set.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import coalescent, kernel, pgf, solver, stats
from .dist import TruncatedPMF, total_variation

ENV_OUTDIR = "NESTCOAL_OUTDIR"


def _out_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(ENV_OUTDIR)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise click.UsageError(f"input file not found: {path}")
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"malformed JSON in {path}: {exc}")


def _load_pmf(path: str) -> TruncatedPMF:
    """Accept either a bare pmf JSON or a solver report (uses fixed_point)."""
    d = _load_json(path)
    if "fixed_point" in d:
        d = d["fixed_point"]
    try:
        return TruncatedPMF.from_json_dict(d)
    except (ValueError, TypeError) as exc:
        raise click.UsageError(f"bad pmf in {path}: {exc}")


def _write_json(path: str, payload: dict):
    out = _out_path(path)
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    click.echo(f"wrote {out}")


@click.group()
def main():
    """Nested Yule-Kingman coalescent: solver, simulator, cross-checks."""


@main.command()
@click.option("--c", "c", type=float, required=True, help="Species merger rate (> 0).")
@click.option("--trunc", "trunc_M", type=int, default=500, show_default=True,
              help="Support truncation M.")
@click.option("--tol", type=float, default=1e-12, show_default=True,
              help="Successive-iterate TV stopping threshold.")
@click.option("--max-iters", type=int, default=100_000, show_default=True)
@click.option("--out", type=str, default=None,
              help="Write the solver report as JSON here.")
def solve(c, trunc_M, tol, max_iters, out):
    """Solve for the fixed-point lineage-count law with sandwich bounds."""
    try:
        cfg = solver.SolverConfig(c=c, trunc_M=trunc_M, tol=tol,
                                  max_iters=max_iters)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    report = solver.sandwich_solve(cfg)
    click.echo(f"c={c} M={trunc_M}: iterations={report.iterations} "
               f"sandwich_gap={report.sandwich_gap:.3e} "
               f"recurrence_residual={report.recurrence_residual:.3e} "
               f"converged={report.converged}")
    if out:
        _write_json(out, report.to_json_dict(cfg))
    if not report.converged:
        click.echo(f"not converged: gap {report.sandwich_gap:.3e} stalled "
                   f"above tol {tol:.1e}; try a larger --trunc", err=True)
        sys.exit(1)


@main.command("kernel")
@click.option("--c", "c", type=float, required=True)
@click.option("--j", "j", type=str, required=True,
              help="Starting lineage count, or 'inf'.")
@click.option("--max-i", type=int, default=None,
              help="Highest support value to report (default: j, or 1000 for inf).")
@click.option("--tol", type=float, default=1e-12, show_default=True,
              help="Construction tolerance for the infinite product.")
def kernel_cmd(c, j, max_i, tol):
    """Print one row P(K_j(Y)=i) as JSON."""
    if c <= 0:
        raise click.UsageError("rate c must be positive")
    if j.lower() in ("inf", "infinity"):
        if max_i is None:
            max_i = 1000
        entries, residual = kernel.kernel_row_infinite(c, max_i, tol)
        j_out = "inf"
    else:
        try:
            j_int = int(j)
        except ValueError:
            raise click.UsageError(f"--j must be an integer or 'inf', got {j!r}")
        if j_int < 1:
            raise click.UsageError("--j must be >= 1")
        row = kernel.kernel_row(j_int, c)
        if max_i is None:
            max_i = j_int
        entries = row[:max_i]
        residual = float(row[max_i:].sum())
        j_out = j_int
    click.echo(json.dumps({
        "c": c, "j": j_out, "max_i": int(max_i),
        "probs": [float(p) for p in entries],
        "residual": float(residual),
    }))


@main.command()
@click.option("--species", type=int, required=True, help="Initial species count s.")
@click.option("--lineages", type=str, required=True,
              help="Initial lineages per species (integer or 'inf').")
@click.option("--target-m", type=int, required=True,
              help="Record just before the species count drops below m.")
@click.option("--c", "c", type=float, default=1.0, show_default=True)
@click.option("--reps", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--l-max", type=int, default=10_000, show_default=True,
              help="Descent cap substituted for infinite initial counts.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Replicate-level parallelism (output is order-independent).")
@click.option("--out", type=str, required=True, help="Records CSV path.")
def simulate(species, lineages, target_m, c, reps, seed, l_max, threads, out):
    """Run replicates of the nested coalescent and write records as CSV."""
    if lineages.lower() in ("inf", "infinity"):
        n = math.inf
    else:
        try:
            n = int(lineages)
        except ValueError:
            raise click.UsageError(
                f"--lineages must be an integer or 'inf', got {lineages!r}")
    try:
        records = coalescent.simulate_records(species, n, target_m, c, reps,
                                              seed, L_max=l_max,
                                              threads=threads)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    path = _out_path(out)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replicate_id", "l", "N", "tau"])
        for rec in records:
            for l, count in enumerate(rec.counts_at_tau_minus, start=1):
                writer.writerow([rec.replicate_id, l, int(count),
                                 repr(rec.tau)])
    click.echo(f"wrote {path} ({reps} replicates, m={target_m})")


def _read_records(path: str) -> list[coalescent.SimRecord]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) < {
                    "replicate_id", "l", "N", "tau"}:
                raise click.UsageError(
                    f"{path}: expected columns replicate_id,l,N,tau, "
                    f"got {reader.fieldnames}")
            rows = list(reader)
    except FileNotFoundError:
        raise click.UsageError(f"input file not found: {path}")
    by_rep: dict[int, list] = {}
    taus: dict[int, float] = {}
    for lineno, row in enumerate(rows, start=2):
        try:
            rep = int(row["replicate_id"])
            l = int(row["l"])
            count = int(row["N"])
            tau = float(row["tau"])
        except (ValueError, TypeError) as exc:
            raise click.UsageError(f"{path}:{lineno}: bad field value: {exc}")
        by_rep.setdefault(rep, []).append((l, count))
        taus[rep] = tau
    records = []
    for rep in sorted(by_rep):
        pairs = sorted(by_rep[rep])
        counts = np.array([cnt for _, cnt in pairs], dtype=np.int64)
        records.append(coalescent.SimRecord(
            m=counts.size, counts_at_tau_minus=counts, tau=taus[rep],
            replicate_id=rep))
    return records


@main.command()
@click.option("--records", "records_path", type=str, required=True,
              help="Records CSV from `simulate`.")
@click.option("--reference", "reference_path", type=str, required=True,
              help="Reference pmf JSON (bare pmf or solver report).")
@click.option("--out", type=str, required=True, help="Report JSON path.")
@click.option("--plot-csv", type=str, default=None,
              help="Plot-ready CSV path (default: out with .csv suffix).")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Bootstrap seed.")
@click.option("--tv-max", type=float, default=stats.DEFAULT_TV_MAX,
              show_default=True)
@click.option("--corr-sigmas", type=float, default=stats.DEFAULT_CORR_SIGMAS,
              show_default=True)
def report(records_path, reference_path, out, plot_csv, seed, tv_max,
           corr_sigmas):
    """Compare simulation records against a reference law."""
    records = _read_records(records_path)
    reference = _load_pmf(reference_path)
    rep = stats.build_experiment_report(records, reference, seed=seed,
                                        tv_max=tv_max,
                                        corr_sigmas=corr_sigmas)
    _write_json(out, rep.to_json_dict())
    if plot_csv is None:
        plot_csv = str(Path(out).with_suffix(".csv"))
    plot_path = _out_path(plot_csv)
    with open(plot_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "empirical_p", "reference_p"])
        for i in range(reference.trunc_M):
            writer.writerow([i + 1, repr(float(rep.empirical.probs[i])),
                             repr(float(reference.probs[i]))])
        writer.writerow(["overflow", repr(rep.empirical.overflow_mass),
                         repr(reference.overflow_mass)])
    click.echo(f"wrote {plot_path}")
    click.echo(f"tv={rep.tv:.4f} (max {tv_max}), "
               f"{len(rep.pairwise_correlations)} correlation pairs, "
               f"pass={rep.passed}")
    if not rep.passed:
        sys.exit(1)


@main.command("pgf-check")
@click.option("--c", "c", type=float, required=True)
@click.option("--grid", type=str, default="0.05:0.9:0.05", show_default=True,
              help="Evaluation grid start:stop:step (stop inclusive).")
@click.option("--closed-form", is_flag=True,
              help="Check the exact c=1 law instead of a solved pmf.")
@click.option("--pmf", "pmf_path", type=str, default=None,
              help="Check this pmf JSON (bare pmf or solver report).")
@click.option("--trunc", "trunc_M", type=int, default=500, show_default=True,
              help="Truncation when solving fresh.")
@click.option("--threshold", type=float, default=1e-8, show_default=True,
              help="Exit 1 if any residual exceeds this.")
@click.option("--out", type=str, default=None,
              help="CSV path (default: stdout).")
def pgf_check(c, grid, closed_form, pmf_path, trunc_M, threshold, out):
    """Evaluate generating-function ODE residuals on a grid, as CSV."""
    try:
        start, stop, step = (float(v) for v in grid.split(":"))
    except ValueError:
        raise click.UsageError(f"--grid must be start:stop:step, got {grid!r}")
    if step <= 0 or not 0 < start <= stop < 1:
        raise click.UsageError("grid must satisfy 0 < start <= stop < 1, step > 0")
    if closed_form and pmf_path:
        raise click.UsageError("choose one of --closed-form or --pmf")
    if closed_form:
        if c != 1.0:
            raise click.UsageError("the closed form exists only for c = 1")
        mu = solver.closed_form_c1(trunc_M)
    elif pmf_path:
        mu = _load_pmf(pmf_path)
    else:
        mu = solver.sandwich_solve(solver.SolverConfig(c=c, trunc_M=trunc_M)).fixed_point
    series = pgf.PGFSeries.from_pmf(mu)
    xs = np.arange(start, stop + step / 2, step)
    lines = ["x,R,ode_residual,g_residual"]
    worst = 0.0
    for x in xs:
        x = float(x)
        r = pgf.pgf_eval(series, x)
        ode_r = pgf.ode_residual(series, c, x)
        g_r = pgf.g_residual(series, c, x)
        worst = max(worst, ode_r, g_r)
        lines.append(f"{x!r},{r!r},{ode_r!r},{g_r!r}")
    text = "\n".join(lines) + "\n"
    if out:
        path = _out_path(out)
        path.write_text(text)
        click.echo(f"wrote {path}")
    else:
        click.echo(text, nl=False)
    click.echo(f"max residual {worst:.3e} (threshold {threshold})", err=True)
    if worst > threshold:
        sys.exit(1)


@main.command()
@click.option("--c", "c", type=float, default=1.0, show_default=True,
              help="Only c = 1 has a closed form.")
@click.option("--trunc", "trunc_M", type=int, default=500, show_default=True)
@click.option("--tol", type=float, default=1e-13, show_default=True)
@click.option("--max-i", type=int, default=50, show_default=True,
              help="Compare entries up to this support value.")
@click.option("--threshold", type=float, default=1e-10, show_default=True)
def verify(c, trunc_M, tol, max_i, threshold):
    """Solve at c=1 and compare against the exact law (2i-1)/3^i."""
    if c != 1.0:
        raise click.UsageError("the closed form exists only for c = 1")
    cfg = solver.SolverConfig(c=c, trunc_M=trunc_M, tol=tol)
    rep = solver.sandwich_solve(cfg)
    exact = solver.closed_form_c1(trunc_M)
    dev = float(np.abs(rep.fixed_point.probs[:max_i]
                       - exact.probs[:max_i]).max())
    gap = total_variation(rep.lower, rep.upper)
    click.echo(f"max |solved(i) - (2i-1)/3^i| over i<={max_i}: {dev:.3e} "
               f"(threshold {threshold}); sandwich_gap={gap:.3e}")
    if dev >= threshold or not rep.converged:
        sys.exit(1)


if __name__ == "__main__":
    main()

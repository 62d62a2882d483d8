"""Aggregation of simulation records and the statistical cross-checks.

Turns replicate records into empirical pmfs and runs the finite-size
comparisons against a reference law: total variation with a bootstrap
standard error, per-position-pair correlations with jackknife errors
(the asymptotic-independence check), replicate-mean convergence tables,
and a chi-square goodness-of-fit for sampler-versus-analytic oracles.

All statistics are deterministic given the records and the bootstrap seed,
and invariant under permuting the records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .coalescent import SimRecord, new_state, run_until_species, replicate_rng
from .dist import OverflowMode, TruncatedPMF, total_variation

DEFAULT_TV_MAX = 0.02
DEFAULT_CORR_SIGMAS = 3.0


@dataclass(frozen=True)
class ExperimentReport:
    empirical: TruncatedPMF
    reference: TruncatedPMF
    tv: float
    tv_mc_stderr: float
    mean_estimate: float
    mean_stderr: float
    pairwise_correlations: list
    n_replicates: int
    passed: bool
    thresholds: dict = field(default_factory=dict)
    per_position: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "empirical": self.empirical.to_json_dict(),
            "reference": self.reference.to_json_dict(),
            "tv": self.tv,
            "tv_mc_stderr": self.tv_mc_stderr,
            "mean_estimate": self.mean_estimate,
            "mean_stderr": self.mean_stderr,
            "pairwise_correlations": self.pairwise_correlations,
            "n_replicates": self.n_replicates,
            "pass": self.passed,
            "thresholds": self.thresholds,
            "per_position": [p.to_json_dict() for p in self.per_position],
        }


def _records_matrix(records: Sequence[SimRecord]) -> np.ndarray:
    if not records:
        raise ValueError("no records supplied")
    m = records[0].m
    if any(r.m != m for r in records):
        raise ValueError("records mix different target species counts m")
    # canonical order: every statistic (bootstrap included) must be
    # invariant under permuting the input records
    ordered = sorted(records,
                     key=lambda r: (r.replicate_id,
                                    tuple(r.counts_at_tau_minus)))
    return np.stack([r.counts_at_tau_minus for r in ordered])


def _pmf_from_values(values: np.ndarray, M: int) -> TruncatedPMF:
    counts = np.bincount(np.minimum(values, M + 1), minlength=M + 2)
    total = values.size
    probs = counts[1:M + 1] / total
    overflow = counts[M + 1] / total
    return TruncatedPMF(probs, overflow_mass=overflow,
                        overflow_mode=OverflowMode.AT_TRUNCATION, trunc_M=M)


def empirical_pmf(records: Sequence[SimRecord], M: int) -> TruncatedPMF:
    """Pooled relative frequencies of all counts across replicates and
    positions; values above M go to the overflow bucket."""
    return _pmf_from_values(_records_matrix(records).ravel(), M)


def independence_check(records: Sequence[SimRecord], l1: int, l2: int):
    """Pearson correlation of positions l1 and l2 (1-based) across
    replicates, with a leave-one-out jackknife standard error.

    Returns (correlation, stderr).  Needs >= 10 replicates and nonconstant
    marginals.
    """
    mat = _records_matrix(records)
    n, m = mat.shape
    if n < 10:
        raise ValueError(f"need >= 10 replicates for a correlation, got {n}")
    if not (1 <= l1 <= m and 1 <= l2 <= m) or l1 == l2:
        raise ValueError(f"positions ({l1}, {l2}) invalid for m={m}")
    x = mat[:, l1 - 1].astype(np.float64)
    y = mat[:, l2 - 1].astype(np.float64)

    def corr(sx, sy, sxx, syy, sxy, k):
        vx = sxx - sx * sx / k
        vy = syy - sy * sy / k
        if vx <= 0 or vy <= 0:
            raise ValueError("constant marginal: correlation undefined")
        return (sxy - sx * sy / k) / np.sqrt(vx * vy)

    sx, sy = x.sum(), y.sum()
    sxx, syy, sxy = (x * x).sum(), (y * y).sum(), (x * y).sum()
    r = corr(sx, sy, sxx, syy, sxy, n)
    # vectorized leave-one-out estimates
    vx = (sxx - x * x) - (sx - x) ** 2 / (n - 1)
    vy = (syy - y * y) - (sy - y) ** 2 / (n - 1)
    if (vx <= 0).any() or (vy <= 0).any():
        raise ValueError("leave-one-out marginal constant: jackknife undefined")
    loo = ((sxy - x * y) - (sx - x) * (sy - y) / (n - 1)) / np.sqrt(vx * vy)
    se = float(np.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum()))
    return float(r), se


def bootstrap_tv_stderr(records: Sequence[SimRecord],
                        reference: TruncatedPMF, seed: int,
                        n_boot: int = 200) -> float:
    """Bootstrap-over-replicates standard error of the pooled TV."""
    mat = _records_matrix(records)
    rng = np.random.Generator(np.random.Philox(key=seed))
    n = mat.shape[0]
    tvs = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, size=n)
        emp = _pmf_from_values(mat[idx].ravel(), reference.trunc_M)
        tvs[b] = total_variation(emp, reference)
    return float(tvs.std(ddof=1))


def chi_square_gof(samples, reference: TruncatedPMF):
    """Chi-square goodness of fit of a value histogram against a pmf.

    ``samples`` maps support value -> observed count (dict or array indexed
    by value; values above trunc_M count toward the overflow cell).  Cells
    are pooled from the tail downward until every retained cell has
    expected count >= 5.  Returns (statistic, p_value).
    """
    M = reference.trunc_M
    obs = np.zeros(M + 1)  # cells: values 1..M, then overflow
    if isinstance(samples, dict):
        items = samples.items()
    else:
        arr = np.asarray(samples)
        items = ((v, n) for v, n in enumerate(arr) if n > 0)
    for v, cnt in items:
        if v < 1:
            raise ValueError(f"support value {v} must be >= 1")
        obs[min(int(v), M + 1) - 1] += cnt
    total = obs.sum()
    if total <= 0:
        raise ValueError("empty histogram")
    expected = total * np.concatenate([reference.probs,
                                       [reference.overflow_mass]])
    # pool the tail until the last retained cell has expected >= 5
    cut = M + 1
    tail_exp = 0.0
    while cut > 1 and tail_exp + expected[cut - 1] < 5.0:
        tail_exp += expected[cut - 1]
        cut -= 1
    exp_cells = np.concatenate([expected[:cut - 1],
                                [expected[cut - 1:].sum()]])
    obs_cells = np.concatenate([obs[:cut - 1], [obs[cut - 1:].sum()]])
    keep = exp_cells > 0
    exp_cells, obs_cells = exp_cells[keep], obs_cells[keep]
    if exp_cells.size < 2:
        raise ValueError("reference degenerates to a single cell")
    if (exp_cells < 5.0).any():
        raise ValueError("cells with expected count < 5 remain after pooling")
    stat = float(((obs_cells - exp_cells) ** 2 / exp_cells).sum())
    p = float(sps.chi2.sf(stat, df=exp_cells.size - 1))
    return stat, p


def build_experiment_report(records: Sequence[SimRecord],
                            reference: TruncatedPMF, seed: int = 0,
                            tv_max: float = DEFAULT_TV_MAX,
                            corr_sigmas: float = DEFAULT_CORR_SIGMAS,
                            n_boot: int = 200) -> ExperimentReport:
    """Full finite-size comparison of records against a reference law."""
    mat = _records_matrix(records)
    n, m = mat.shape
    emp = empirical_pmf(records, reference.trunc_M)
    tv = total_variation(emp, reference)
    tv_se = bootstrap_tv_stderr(records, reference, seed, n_boot)
    rep_means = mat.mean(axis=1)
    mean_est = float(rep_means.mean())
    mean_se = float(rep_means.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    corrs = []
    corr_ok = True
    if m >= 2 and n >= 10:
        for l1 in range(1, m + 1):
            for l2 in range(l1 + 1, m + 1):
                r, se = independence_check(records, l1, l2)
                corrs.append({"l1": l1, "l2": l2, "corr": r, "stderr": se})
                if abs(r) > corr_sigmas * se:
                    corr_ok = False
    passed = bool(tv <= tv_max and corr_ok)
    thresholds = {"tv_max": tv_max, "corr_sigmas": corr_sigmas}
    # pooling across positions is justified by identical marginal limits;
    # the per-position pmfs are kept for inspection
    per_position = [_pmf_from_values(mat[:, l], reference.trunc_M)
                    for l in range(m)]
    return ExperimentReport(empirical=emp, reference=reference, tv=tv,
                            tv_mc_stderr=tv_se, mean_estimate=mean_est,
                            mean_stderr=mean_se,
                            pairwise_correlations=corrs, n_replicates=n,
                            passed=passed, thresholds=thresholds,
                            per_position=per_position)


def mean_convergence_report(configs: Sequence[tuple[int, int]], n, c: float,
                            reps: int, seed: int, reference_mean: float,
                            L_max: int = 10_000) -> dict:
    """Replicate mean and SD of (1/m) sum of counts for each (s, m) config.

    The pass rule applies to the largest config (by m, then s):
    |mean - reference| <= 3 SD / sqrt(reps).
    """
    rows = []
    for s, m in configs:
        if m > s:
            raise ValueError(f"target m={m} exceeds species count s={s}")
        vals = np.empty(reps)
        for rep in range(reps):
            state = new_state(s, n, c, L_max)
            rec = run_until_species(state, m, replicate_rng(seed, rep),
                                    replicate_id=rep, seed=seed)
            vals[rep] = rec.counts_at_tau_minus.sum() / m
        rows.append({"s": s, "m": m, "reps": reps,
                     "mean": float(vals.mean()),
                     "sd": float(vals.std(ddof=1))})
        seed += 1  # distinct streams per config
    largest = max(rows, key=lambda r: (r["m"], r["s"]))
    tol = 3.0 * largest["sd"] / np.sqrt(largest["reps"])
    passed = abs(largest["mean"] - reference_mean) <= tol
    return {"rows": rows, "reference_mean": reference_mean,
            "pass": bool(passed)}

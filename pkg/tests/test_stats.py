import numpy as np
import pytest

from nestcoal import (
    SimRecord,
    TruncatedPMF,
    build_experiment_report,
    chi_square_gof,
    closed_form_c1,
    empirical_pmf,
    independence_check,
    mean_convergence_report,
    pmf_delta,
)
from nestcoal.stats import bootstrap_tv_stderr


def make_records(matrix, m=None):
    matrix = np.asarray(matrix, dtype=np.int64)
    m = m or matrix.shape[1]
    return [SimRecord(m=m, counts_at_tau_minus=row, tau=1.0, replicate_id=i)
            for i, row in enumerate(matrix)]


# ---------------------------------------------------------- empirical pmf

def test_empirical_single_record():
    emp = empirical_pmf(make_records([[1, 1]]), 5)
    assert emp.prob(1) == 1.0


def test_empirical_direct_frequency():
    emp = empirical_pmf(make_records([[1, 2]]), 5)
    assert emp.prob(1) == 0.5
    assert emp.prob(2) == 0.5


def test_empirical_overflow_pooling():
    emp = empirical_pmf(make_records([[1, 9], [9, 9]]), 5)
    assert emp.overflow_mass == pytest.approx(0.75)
    assert abs(emp.probs.sum() + emp.overflow_mass - 1) < 1e-12


def test_empirical_rejects_empty():
    with pytest.raises(ValueError):
        empirical_pmf([], 5)


# ----------------------------------------------------------- independence

def test_correlation_of_duplicated_positions():
    rng = np.random.default_rng(0)
    x = rng.integers(1, 10, size=50)
    r, se = independence_check(make_records(np.stack([x, x], axis=1)), 1, 2)
    assert r == pytest.approx(1.0)


def test_correlation_of_independent_draws():
    rng = np.random.default_rng(1)
    mu = closed_form_c1(100)
    cells = np.arange(1, 101)
    probs = mu.probs / mu.probs.sum()
    draws = rng.choice(cells, size=(5000, 2), p=probs)
    r, se = independence_check(make_records(draws), 1, 2)
    assert abs(r) <= 3 * se


def test_correlation_needs_replicates():
    with pytest.raises(ValueError):
        independence_check(make_records([[1, 2]] * 5), 1, 2)
    with pytest.raises(ValueError):
        independence_check(make_records([[1, 2]] * 20), 1, 1)


# ------------------------------------------------------------- chi-square

def test_chi_square_null_holds():
    rng = np.random.default_rng(2)
    mu = closed_form_c1(50)
    cells = np.arange(1, 51)
    probs = mu.probs / mu.probs.sum()
    draws = rng.choice(cells, size=1_000_000, p=probs)
    hist = np.bincount(draws)
    stat, p = chi_square_gof(hist, mu)
    assert p > 0.001


def test_chi_square_detects_gross_mismatch():
    hist = {1: 100_000}
    stat, p = chi_square_gof(hist, closed_form_c1(50))
    assert p < 1e-6


def test_chi_square_degenerate_reference():
    with pytest.raises(ValueError):
        chi_square_gof({1: 50}, pmf_delta(1, 1))


def test_chi_square_rejects_bad_values():
    with pytest.raises(ValueError):
        chi_square_gof({0: 5}, closed_form_c1(10))
    with pytest.raises(ValueError):
        chi_square_gof({}, closed_form_c1(10))


# ---------------------------------------------------------------- reports

def test_report_deterministic_and_order_independent():
    rng = np.random.default_rng(3)
    mu = closed_form_c1(30)
    cells = np.arange(1, 31)
    probs = mu.probs / mu.probs.sum()
    draws = rng.choice(cells, size=(400, 3), p=probs)
    records = make_records(draws)
    rep1 = build_experiment_report(records, mu, seed=9)
    rep2 = build_experiment_report(records[::-1], mu, seed=9)
    assert rep1.tv == rep2.tv
    assert rep1.tv_mc_stderr == rep2.tv_mc_stderr
    assert rep1.mean_estimate == rep2.mean_estimate
    assert rep1.to_json_dict() == rep2.to_json_dict()
    assert rep1.n_replicates == 400
    assert 0.0 <= rep1.tv <= 1.0


def test_bootstrap_seed_dependence():
    rng = np.random.default_rng(4)
    mu = closed_form_c1(30)
    draws = rng.choice(np.arange(1, 31), size=(200, 2),
                       p=mu.probs / mu.probs.sum())
    records = make_records(draws)
    a = bootstrap_tv_stderr(records, mu, seed=1)
    b = bootstrap_tv_stderr(records, mu, seed=1)
    c = bootstrap_tv_stderr(records, mu, seed=2)
    assert a == b
    assert a != c
    assert a > 0


def test_mean_convergence_smoke():
    out = mean_convergence_report([(40, 4), (80, 8)], n=3, c=1.0, reps=40,
                                  seed=5, reference_mean=2.25)
    assert [r["m"] for r in out["rows"]] == [4, 8]
    assert all(r["sd"] >= 0 for r in out["rows"])
    assert isinstance(out["pass"], bool)


def test_mean_convergence_validates_targets():
    with pytest.raises(ValueError):
        mean_convergence_report([(4, 10)], n=2, c=1.0, reps=5, seed=0,
                                reference_mean=2.25)

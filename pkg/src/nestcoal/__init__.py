"""Nested Yule-Kingman coalescent: lineage-count law and simulator.

The package computes the fixed point of the recursive distributional
equation obeyed by the per-species lineage count, simulates the nested
coalescent chain exactly, and cross-validates the two against analytic
facts (the c = 1 closed form, generating-function ODEs, Yule-tree tails).
"""

from .dist import (
    OverflowMode,
    StochasticOrder,
    TruncatedPMF,
    compare_stochastic,
    convolve,
    mean,
    pmf_delta,
    total_variation,
)
from .kernel import (
    KernelTable,
    build_table,
    kernel_entry,
    kernel_row,
    kernel_row_infinite,
    sample_count_at,
    sample_kingman_exp,
)
from .solver import (
    SolverConfig,
    SolverReport,
    Start,
    apply_rde_map,
    closed_form_c1,
    iterate_fixed_point,
    map_iterates,
    sandwich_solve,
    verify_recurrence,
)
from .pgf import PGFSeries, g_prime, g_residual, ode_residual, pgf_eval
from .coalescent import (
    CoalescentState,
    LineageMerger,
    SimRecord,
    SpeciesMerger,
    new_state,
    replicate_rng,
    run_average,
    run_until_species,
    simulate_records,
    step,
    yule_count_tail,
    yule_gamma_tail,
)
from .stats import (
    ExperimentReport,
    build_experiment_report,
    chi_square_gof,
    empirical_pmf,
    independence_check,
    mean_convergence_report,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

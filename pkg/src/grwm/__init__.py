"""Marble-counting simulator for GRW spontaneous-localization dynamics."""

from .counting import (
    CouplingSpec,
    ExperimentReport,
    PointerErrorReport,
    branch_miscount_probability,
    consistent,
    couple,
    coupled_branch_weights,
    imperfect_pointer_analysis,
    pointer_row,
    pointer_weight_matrix,
    register_fuzzy_readout,
    run_experiment,
)
from .fuzzylink import (
    AnomalyReport,
    FuzzyParams,
    LocationClaim,
    claim_mass,
    critical_n,
    enumeration_report,
    holds,
    product_enumeration_report,
    report_from_masses,
)
from .grw import (
    EnsembleReport,
    HitEvent,
    HitParams,
    Trajectory,
    collapse_time,
    collapsed,
    dominant_config,
    event_schedule,
    evolve,
    hit,
    hit_outcomes,
    hit_probabilities,
    run_ensemble,
    subsystem_count,
    trial_rng,
)
from .massdensity import (
    AccessibilityParams,
    BoxMassReport,
    CellGrid,
    CellMassStats,
    MassReport,
    accessibility_ratio,
    accessible,
    box_grid,
    box_mass_report,
    expected_mass,
    ggb_states,
    mass_in_cell,
    mass_report,
    min_n_for_deficit,
    per_marble_grid,
    product_box_stats,
    product_marble_cell_stats,
    region_grid,
    variance_mass,
)
from .state import (
    DENSE_MAX_MARBLES,
    NORM_TOL,
    PRUNE_THRESHOLD,
    Configuration,
    MarbleCoeffs,
    Site,
    SymmetricWaveFunction,
    WaveFunction,
    compress,
    decompress,
    expansion_amplitude,
    joint_probability,
    make_wavefunction,
    marginal_probability,
    pack_configuration,
    product_state,
    renormalize,
    symmetric_product_state,
    unpack_configuration,
)

__version__ = "0.1.0"

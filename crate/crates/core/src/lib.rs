//! Simulation of neutral kaons as decaying two-level quantum systems.
//!
//! The crate models single-kaon strangeness oscillation under a
//! non-Hermitian effective Hamiltonian, entangled kaon pairs with
//! time-separated joint measurements, a Bell-type inequality whose violation
//! is equivalent to CP violation, the quantitative trade-off between
//! oscillation visibility and width predictability, and Monte Carlo
//! quantum-eraser experiments with active and passive readout strategies.
//!
//! Conventions, fixed throughout:
//!
//! * Times are proper times in units of the short lifetime; widths in units
//!   of the short width. Masses carry the same inverse-time unit with the
//!   mean mass subtracted.
//! * The strangeness basis is ordered (K0, K0bar); CP acts as -sigma_1 on
//!   it. See [`states`] for the resulting eigenstate phase conventions.
//! * Decaying amplitudes are never renormalized implicitly. Functions that
//!   condition on survival say so in their names or docs.

pub mod bell;
pub mod complementarity;
pub mod eraser;
pub mod error;
pub mod evolution;
pub mod linalg;
pub mod pair;
pub mod states;
pub mod stats;

pub use bell::{bell_check, epsilon_from_delta, leptonic_asymmetry, wigner_probabilities, BellReport};
pub use complementarity::{duality_check, duality_check_mixed, oscillation_pattern, DualityPoint};
pub use eraser::{
    analytic_reference, compare_with_reference, delayed_choice_check, measure_active_lifetime,
    measure_active_strangeness, measure_passive, run_setup, run_setup_sharded, sample_decay_time,
    sample_event, setup_equivalence, CollapseOrdering, EraserConfig, EventRecord, MeasurementKind,
    OutcomeLabel, Setup, SortedFrequencies,
};
pub use error::{KaonError, Result};
pub use evolution::{
    evolution_matrix, evolve, matexp_oracle, normalized_survivor, propagators,
    strangeness_probabilities, PropagatorPair,
};
pub use pair::{
    evolve_pair, joint_probability, make_entangled_pair, project_left, project_right,
    strangeness_cells, surviving_pair_state, PairState,
};
pub use states::{
    cp_eigenstates, effective_hamiltonian, mass_eigenstates, quasi_spin_state, CPWeights,
    EffectiveHamiltonian, KaonState, PhysParams, DEFAULT_DELTA_M, DEFAULT_GAMMA_L,
};

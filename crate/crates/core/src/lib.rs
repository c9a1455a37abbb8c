//! Exact simulation of entanglement links built on a coherent-state optical
//! bus.
//!
//! Two stationary qubits interact in sequence with a shared light pulse
//! through controlled phase-space rotations. Because rotations, linear loss,
//! displacements and qubit-local gates all keep the field in (superpositions
//! of) coherent states, the whole pipeline is representable as a finite sum
//! of coherent-state dyads, and every probability, fidelity and entanglement
//! measure comes out in closed form. A truncated number-basis simulator is
//! included as an independent cross-check oracle.

pub mod coherent;
pub mod density;
pub mod error;
pub mod fock;
pub mod hybrid;
pub mod link;
pub mod metrics;
pub mod swap;
pub mod usd;

pub use coherent::{coherent_overlap, CoherentLabel};
pub use density::{hermitian_eigenvalues, trace_distance, QubitDensity, TwoQubitDensity};
pub use error::{QubusError, Result};
pub use fock::{
    default_truncation, default_truncation_levels, displacement_matrix, oracle_homodyne_condition,
    oracle_link_vectors, oracle_receiver_click_distribution, oracle_receiver_report,
    prepare_coherent, quadrature_window_matrix, FockVector, OracleLinkReport,
};
pub use hybrid::{hadamard_matrix, Branch, HybridKet, HybridState, KetTerm};
pub use link::{
    alpha_for_target_fidelity, build_link_state, eta_for_distance, qubit_bus_state,
    qubit_qubus_density, LinkParams, DEFAULT_LOSS_DB_PER_KM,
};
pub use metrics::{
    bell_fidelity, binary_entropy, concurrence, entanglement_of_formation, link_quantities,
    BellState, LinkQuantities,
};
pub use swap::{
    convert_to_two_qubit, effective_pair_concurrence, entanglement_swap, hybrid_bell_ket,
    hybrid_bell_measure, hybrid_bell_outcomes, link_attempt_statistics, swap_success_probability,
    BusDiscriminator, HybridBellKind, LinkAttemptStatistics, LinkScheme, MeasurementBranch,
    SwapOutcome,
};
pub use usd::{
    classify, classify_and_condition, default_window_halfwidth, homodyne_p_condition,
    nominal_constellation, parity_click_outcomes,
    pattern_distribution, pattern_probabilities, receiver_transform, sample_pattern_statistics,
    usd_failure_bound_from_fidelity, usd_optimal_failure, Classification, ClickParity,
    DetectionPattern, DetectorModel, PatternOutcome, PatternStats, Receiver, UsdBudget,
};

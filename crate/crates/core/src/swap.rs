//! Hybrid Bell-state machinery: the four qubit-field Bell states, the
//! rotate/Hadamard/discriminate Bell measurement, entanglement swapping of
//! two qubit-field links, and per-scheme attempt statistics.

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coherent::{coherent_overlap, CoherentLabel};
use crate::density::TwoQubitDensity;
use crate::error::{QubusError, Result};
use crate::hybrid::{hadamard_matrix, HybridKet, HybridState, KetTerm};
use crate::link::LinkParams;
use crate::metrics::{
    best_phase_fidelity_even, best_phase_fidelity_odd, link_quantities,
};
use crate::usd::{
    default_window_halfwidth, homodyne_p_condition, nominal_constellation, parity_click_outcomes,
    pattern_probabilities, quadrature_window_factor, ClickParity, DetectionPattern, Receiver,
};

/// The four maximally entangled qubit-field states that the measurement
/// chain discriminates. Naming follows the field label riding with |0>:
/// `ZeroUnrotated*` pairs |0> with the unrotated field, `ZeroRotated*`
/// with the rotated one; the suffix is the superposition sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HybridBellKind {
    ZeroUnrotatedPlus,
    ZeroUnrotatedMinus,
    ZeroRotatedPlus,
    ZeroRotatedMinus,
}

impl HybridBellKind {
    pub fn all() -> [Self; 4] {
        [
            Self::ZeroUnrotatedPlus,
            Self::ZeroUnrotatedMinus,
            Self::ZeroRotatedPlus,
            Self::ZeroRotatedMinus,
        ]
    }

    /// True for the pair whose members the partial measurement identifies.
    pub fn is_unrotated_pair(self) -> bool {
        matches!(self, Self::ZeroUnrotatedPlus | Self::ZeroUnrotatedMinus)
    }

    fn sign(self) -> f64 {
        match self {
            Self::ZeroUnrotatedPlus | Self::ZeroRotatedPlus => 1.0,
            _ => -1.0,
        }
    }
}

/// The hybrid Bell state of one qubit and one field mode, with the field
/// labels at the transmitted amplitude the parameters produce (so the
/// lossless case reduces to the bare preparation amplitude). The two qubit
/// components are orthogonal, so the 1/sqrt(2) normalization is exact even
/// though the field labels overlap.
pub fn hybrid_bell_ket(params: &LinkParams, kind: HybridBellKind) -> Result<HybridKet> {
    let [unrot, plus, _] = nominal_constellation(params);
    let (zero_label, one_label) = if kind.is_unrotated_pair() {
        (unrot, plus)
    } else {
        (plus, unrot)
    };
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    HybridKet::new(
        1,
        1,
        vec![
            KetTerm {
                qubit_index: 0,
                mode_labels: vec![zero_label],
                amplitude: h,
            },
            KetTerm {
                qubit_index: 1,
                mode_labels: vec![one_label],
                amplitude: h * kind.sign(),
            },
        ],
    )
}

/// Field-mode discriminator used after the qubit half of the Bell
/// measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BusDiscriminator {
    /// Three-port click receiver; success is the even herald that
    /// unambiguously identifies the unrotated field. With `number_resolving`
    /// the third port also resolves photon parity, so the odd herald
    /// coherently identifies the rotated pair as well.
    UsdUnrotated { number_resolving: bool },
    /// p-quadrature window around zero. `None` uses half the separation to
    /// the rotated field states; explicit windows beyond that are rejected
    /// because acceptance would no longer point to the unrotated state.
    PHomodyne { window_halfwidth: Option<f64> },
}

/// One measurement record of the hybrid Bell measurement.
#[derive(Clone, Debug)]
pub struct SwapOutcome {
    /// A Bell state was conclusively identified.
    pub success: bool,
    /// Which one, when conclusive.
    pub identified_pair: Option<HybridBellKind>,
    /// Normalized remaining state; on a successful swap this lives on the
    /// two never-measured systems.
    pub post_state: HybridState,
    /// Raw record: qubit outcome first, then the discriminator bits
    /// (detector clicks, or the window accept flag).
    pub classical_bits: Vec<u8>,
    /// Born probability of this record.
    pub probability: f64,
}

/// One enumerated branch of the measurement, before any sampling.
#[derive(Clone, Debug)]
pub struct MeasurementBranch {
    pub probability: f64,
    pub success: bool,
    pub identified_pair: Option<HybridBellKind>,
    /// None when the branch has no probability left to normalize.
    pub post_state: Option<HybridState>,
    pub classical_bits: Vec<u8>,
}

fn homodyne_window(params: &LinkParams, requested: Option<f64>) -> Result<f64> {
    let ceiling = default_window_halfwidth(params);
    match requested {
        None => Ok(ceiling),
        Some(w) => {
            if !w.is_finite() || w < 0.0 {
                return Err(QubusError::InvalidParameter(format!(
                    "window halfwidth {w} must be finite and non-negative"
                )));
            }
            if w > ceiling + 1e-12 {
                return Err(QubusError::InvalidParameter(format!(
                    "window halfwidth {w} reaches past the midpoint {ceiling} \
                     between the unrotated and rotated field states"
                )));
            }
            Ok(w)
        }
    }
}

/// All outcome branches of the hybrid Bell measurement on `qubit` and
/// `mode` of `state`: the qubit-control rotation undoing the preparation
/// angle, a qubit Hadamard and computational-basis readout, then the field
/// discriminator. Branch order is fixed (qubit outcome outer, discriminator
/// record inner), so sampling from it is reproducible.
///
/// The discriminator is calibrated to the field constellation that `params`
/// produces; states prepared with other parameters measure fine but lose
/// the unambiguous-zero structure of the heralds.
pub fn hybrid_bell_outcomes(
    state: &HybridState,
    qubit: usize,
    mode: usize,
    params: &LinkParams,
    discriminator: BusDiscriminator,
) -> Result<Vec<MeasurementBranch>> {
    let rotated = state.controlled_rotation(qubit, mode, -params.theta())?;
    let readied = rotated.apply_qubit_unitary(qubit, &hadamard_matrix())?;
    let receiver = match discriminator {
        BusDiscriminator::UsdUnrotated { .. } => Some(Receiver::new(params)?),
        BusDiscriminator::PHomodyne { .. } => None,
    };
    let mut branches = Vec::new();
    for outcome in 0..2u8 {
        let projected = readied.project_qubit(qubit, outcome)?;
        match discriminator {
            BusDiscriminator::UsdUnrotated { number_resolving } => {
                let receiver = receiver.as_ref().unwrap();
                for pattern in DetectionPattern::all() {
                    let is_odd_herald = pattern.clicks == [false, false, true];
                    if number_resolving && is_odd_herald {
                        for parity in [ClickParity::EvenNonVacuum, ClickParity::Odd] {
                            let conditioned = projected
                                .contract_mode_with(mode, |k, b| {
                                    receiver.parity_factor(parity, k, b)
                                })?
                                .trace_qubit(qubit)?;
                            let success = parity == ClickParity::Odd;
                            let identified = success.then_some(if outcome == 0 {
                                HybridBellKind::ZeroRotatedPlus
                            } else {
                                HybridBellKind::ZeroRotatedMinus
                            });
                            let mut bits = record_bits(outcome, pattern);
                            bits.push(u8::from(parity == ClickParity::Odd));
                            branches.push(finish_branch(
                                conditioned,
                                success,
                                identified,
                                bits,
                            ));
                        }
                        continue;
                    }
                    let conditioned = projected
                        .contract_mode_with(mode, |k, b| receiver.pattern_factor(pattern, k, b))?
                        .trace_qubit(qubit)?;
                    let success = pattern.clicks == [true, true, false];
                    let identified = success.then_some(if outcome == 0 {
                        HybridBellKind::ZeroUnrotatedPlus
                    } else {
                        HybridBellKind::ZeroUnrotatedMinus
                    });
                    branches.push(finish_branch(
                        conditioned,
                        success,
                        identified,
                        record_bits(outcome, pattern),
                    ));
                }
            }
            BusDiscriminator::PHomodyne { window_halfwidth } => {
                let w = homodyne_window(params, window_halfwidth)?;
                for accept in [false, true] {
                    let conditioned = projected
                        .contract_mode_with(mode, |k, b| {
                            let pass = quadrature_window_factor(k, b, w);
                            if accept {
                                pass
                            } else {
                                coherent_overlap(b, k) - pass
                            }
                        })?
                        .trace_qubit(qubit)?;
                    let identified = accept.then_some(if outcome == 0 {
                        HybridBellKind::ZeroUnrotatedPlus
                    } else {
                        HybridBellKind::ZeroUnrotatedMinus
                    });
                    branches.push(finish_branch(
                        conditioned,
                        accept,
                        identified,
                        vec![outcome, u8::from(accept)],
                    ));
                }
            }
        }
    }
    Ok(branches)
}

fn record_bits(outcome: u8, pattern: DetectionPattern) -> Vec<u8> {
    let mut bits = vec![outcome];
    bits.extend(pattern.clicks.iter().map(|&c| u8::from(c)));
    bits
}

fn finish_branch(
    conditioned: HybridState,
    success: bool,
    identified: Option<HybridBellKind>,
    classical_bits: Vec<u8>,
) -> MeasurementBranch {
    let probability = conditioned.trace().re.max(0.0);
    let post_state = if probability > 1e-15 {
        conditioned.normalized().ok()
    } else {
        None
    };
    MeasurementBranch {
        probability,
        success,
        identified_pair: identified,
        post_state,
        classical_bits,
    }
}

/// Samples one Bell-measurement record. Identical seeds give identical
/// records.
pub fn hybrid_bell_measure(
    state: &HybridState,
    qubit: usize,
    mode: usize,
    params: &LinkParams,
    discriminator: BusDiscriminator,
    seed: u64,
) -> Result<SwapOutcome> {
    let branches = hybrid_bell_outcomes(state, qubit, mode, params, discriminator)?;
    let total: f64 = branches.iter().map(|b| b.probability).sum();
    if total <= 0.0 {
        return Err(QubusError::ZeroSuccessProbability);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for b in &branches {
        acc += b.probability;
        if draw < acc && b.post_state.is_some() {
            chosen = Some(b);
            break;
        }
    }
    let chosen = chosen
        .or_else(|| branches.iter().rev().find(|b| b.post_state.is_some()))
        .ok_or(QubusError::ZeroSuccessProbability)?;
    Ok(SwapOutcome {
        success: chosen.success,
        identified_pair: chosen.identified_pair,
        post_state: chosen.post_state.clone().unwrap(),
        classical_bits: chosen.classical_bits.clone(),
        probability: chosen.probability,
    })
}

fn check_link_shape(state: &HybridState, which: &str) -> Result<()> {
    if state.n_qubits() != 1 || state.n_modes() != 1 {
        return Err(QubusError::InvalidParameter(format!(
            "{which} swap input must be one qubit with one field mode, got {} qubits and {} modes",
            state.n_qubits(),
            state.n_modes()
        )));
    }
    Ok(())
}

/// Entanglement swapping: `left` holds systems (1,2) = (qubit, field),
/// `right` holds (3,4). The Bell measurement acts on the middle systems
/// (field 2, qubit 3); on success the returned state lives on (1,4) with
/// the sign correction dictated by the qubit outcome already applied.
pub fn entanglement_swap(
    left: &HybridState,
    right: &HybridState,
    params: &LinkParams,
    discriminator: BusDiscriminator,
    seed: u64,
) -> Result<SwapOutcome> {
    check_link_shape(left, "left")?;
    check_link_shape(right, "right")?;
    // Combined layout: qubits (1,3) -> 0,1; modes (2,4) -> 0,1.
    let combined = left.tensor(right);
    let mut outcome = hybrid_bell_measure(&combined, 1, 0, params, discriminator, seed)?;
    if outcome.success && outcome.classical_bits[0] == 1 {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let sigma_z = Matrix2::new(one, zero, zero, -one);
        outcome.post_state = outcome.post_state.apply_qubit_unitary(0, &sigma_z)?;
    }
    Ok(outcome)
}

/// Closed-form success probability of the hybrid Bell measurement on the
/// swap state the given parameters generate.
pub fn swap_success_probability(
    params: &LinkParams,
    discriminator: BusDiscriminator,
) -> Result<f64> {
    match discriminator {
        BusDiscriminator::UsdUnrotated { number_resolving } => {
            let budget = pattern_probabilities(params);
            if number_resolving {
                Ok(budget.p_even + parity_click_outcomes(params)?.odd.0)
            } else {
                Ok(budget.p_even)
            }
        }
        BusDiscriminator::PHomodyne { window_halfwidth } => {
            let w = homodyne_window(params, window_halfwidth)?;
            let [unrot, plus, minus] = nominal_constellation(params);
            let pass = |c: CoherentLabel| quadrature_window_factor(c, c, w).re;
            Ok(0.5 * pass(unrot) + 0.25 * pass(plus) + 0.25 * pass(minus))
        }
    }
}

/// Converts the field half of a heralded (qubit, field) pair into a second
/// qubit: a fresh |+> qubit is entangled with the field through the same
/// controlled rotation, and the even receiver herald completes the
/// conversion. Returns the success probability and the two-qubit state.
pub fn convert_to_two_qubit(
    state: &HybridState,
    params: &LinkParams,
) -> Result<(f64, TwoQubitDensity)> {
    check_link_shape(state, "conversion")?;
    let xi = params.xi();
    let readied = state
        .tensor(&HybridState::pure(&HybridKet::plus()))
        .controlled_rotation(1, 0, -params.theta())?
        .apply_qubit_phase(0, -xi)?
        .apply_qubit_phase(1, params.eta() * xi)?;
    let receiver = Receiver::new(params)?;
    let even = DetectionPattern::new([true, true, false]);
    let conditioned =
        readied.contract_mode_with(0, |k, b| receiver.pattern_factor(even, k, b))?;
    let probability = conditioned.trace().re.max(0.0);
    if probability <= 0.0 {
        return Err(QubusError::ZeroSuccessProbability);
    }
    let two_qubit = conditioned.normalized()?.trace_out_modes()?.two_qubit()?;
    Ok((probability, two_qubit))
}

/// Heralding scheme for one elementary link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinkScheme {
    /// Even receiver herald only.
    Even,
    /// Odd herald with parity readout and per-outcome phase correction.
    OddEnt,
    /// Every conclusive receiver outcome, including the sign heralds that
    /// leave the qubits separable.
    TotalUsd,
    /// p-window homodyne acceptance.
    Homodyne { window_halfwidth: Option<f64> },
}

/// Rate/quality summary of one elementary link under a heralding scheme.
#[derive(Clone, Copy, Debug)]
pub struct LinkAttemptStatistics {
    pub success_probability: f64,
    pub expected_attempts: f64,
    pub fidelity: f64,
}

/// Success probability, mean attempts to first success, and heralded
/// fidelity for one elementary link under the chosen scheme. Fidelity is
/// measured against the best phase-corrected Bell state the scheme can
/// steer to deterministically; sign heralds count at the separable 1/2.
pub fn link_attempt_statistics(
    params: &LinkParams,
    scheme: LinkScheme,
) -> Result<LinkAttemptStatistics> {
    let budget = pattern_probabilities(params);
    let (success_probability, fidelity) = match scheme {
        LinkScheme::Even => {
            let f = link_quantities(params).fidelity_f;
            (budget.p_even, f)
        }
        LinkScheme::OddEnt => (budget.p_odd_ent, odd_scheme_fidelity(params)?),
        LinkScheme::TotalUsd => {
            let f_even = link_quantities(params).fidelity_f;
            let p_signs = budget.p_odd_usd - budget.p_odd_ent;
            let mut weighted = budget.p_even * f_even + p_signs * 0.5;
            if budget.p_odd_ent > 0.0 {
                weighted += budget.p_odd_ent * odd_scheme_fidelity(params)?;
            }
            (budget.p_total_usd, weighted / budget.p_total_usd.max(1e-300))
        }
        LinkScheme::Homodyne { window_halfwidth } => {
            let w = homodyne_window(params, window_halfwidth)?;
            let (p, state) = homodyne_p_condition(params, w)?;
            (p, best_phase_fidelity_even(&state))
        }
    };
    if success_probability <= 0.0 {
        return Err(QubusError::ZeroSuccessProbability);
    }
    Ok(LinkAttemptStatistics {
        success_probability,
        expected_attempts: 1.0 / success_probability,
        fidelity,
    })
}

/// Probability-weighted phase-corrected fidelity across the two parity
/// readouts of the odd herald.
fn odd_scheme_fidelity(params: &LinkParams) -> Result<f64> {
    let heralds = parity_click_outcomes(params)?;
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (p, state) in [heralds.odd, heralds.even_non_vacuum] {
        if let Some(rho) = state {
            weighted += p * best_phase_fidelity_odd(&rho);
            total += p;
        }
    }
    if total <= 0.0 {
        return Err(QubusError::ZeroSuccessProbability);
    }
    Ok(weighted / total)
}

/// Concurrence of the effective two-qubit content of a (qubit, field) pair,
/// used for entanglement monotonicity checks around the swap.
pub fn effective_pair_concurrence(state: &HybridState) -> Result<f64> {
    check_link_shape(state, "concurrence")?;
    let rho = crate::link::effective_two_qubit(state)?;
    Ok(crate::metrics::concurrence(&rho))
}

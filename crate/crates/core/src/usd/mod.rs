//! Unambiguous discrimination of the bus constellation.
//!
//! After the link interaction the bus carries one of three coherent states:
//! the unrotated `sqrt(eta) alpha` correlated with the even qubit subspace,
//! or `sqrt(eta) alpha e^{+-i theta}` correlated with the odd one. The
//! receiver in [`receiver`] maps click patterns to conclusive or inconclusive
//! statements about which it was; this module classifies the patterns,
//! evaluates their probabilities in closed form and from the branch
//! representation, and extracts the conditional two-qubit states.

pub mod homodyne;
pub mod receiver;
pub mod sampler;

pub use homodyne::{default_window_halfwidth, homodyne_p_condition, quadrature_window_factor};
pub use receiver::{
    nominal_constellation, receiver_transform, ClickParity, DetectionPattern, Receiver,
};
pub use sampler::{sample_pattern_statistics, PatternStats};

use crate::density::TwoQubitDensity;
use crate::error::{QubusError, Result};
use crate::hybrid::HybridState;
use crate::link::{build_link_state, one_minus_cos, LinkParams};

/// What a click pattern says about the input constellation state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    /// The input was the unrotated state: both qubits are in the even
    /// subspace (the entangling even herald).
    IdentifiesUnrotated,
    /// The input was one of the two rotated states, but the pattern does not
    /// reveal which: the qubits are in the odd subspace (the odd herald).
    IdentifiesRotatedPair,
    /// The input was the `+theta` rotated state specifically.
    IdentifiesPlusTheta,
    /// The input was the `-theta` rotated state specifically.
    IdentifiesMinusTheta,
    /// Rules out one rotated state but cannot separate the remaining two.
    PartiallyConclusive,
    /// No port fired; nothing can be concluded.
    InconclusiveVacuum,
    /// Pattern with probability exactly zero.
    Impossible,
}

/// Detector capability assumed when attaching a conditional state to the
/// odd herald.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorModel {
    /// Plain on/off detectors: the odd herald leaves the click parity
    /// unmeasured and the conditional state is the parity-averaged mixture.
    OnOff,
    /// Ideal photon-number parity readout on the third port: the attached
    /// conditional state is the odd-parity herald, which is the
    /// entanglement-bearing branch after a deterministic phase correction.
    ParityResolving,
}

/// One click pattern with its meaning, probability, and (where defined)
/// the normalized post-measurement two-qubit state.
#[derive(Clone, Debug)]
pub struct PatternOutcome {
    pub pattern: DetectionPattern,
    pub classification: Classification,
    pub probability: f64,
    pub conditional_state: Option<TwoQubitDensity>,
}

/// Closed-form success/failure budget of the receiver.
#[derive(Clone, Copy, Debug)]
pub struct UsdBudget {
    /// Even herald probability (both phase ports click, third silent).
    pub p_even: f64,
    /// Probability that the third port clicks at all: the input is known to
    /// be rotated, with or without knowing the sign.
    pub p_odd_usd: f64,
    /// Probability of the odd herald alone (third port clicks, phase ports
    /// silent), the entanglement-preserving part of `p_odd_usd`.
    pub p_odd_ent: f64,
    /// Total conclusive probability counting every sign-resolving pattern.
    pub p_total_usd: f64,
    /// Total probability of the two entangling heralds.
    pub p_total_ent: f64,
}

/// Upper bound on any unambiguous discrimination success probability,
/// written in terms of the pair fidelity the same link would produce:
/// `(2F - 1)^(eta / (1 - eta))` is the minimum failure probability.
pub fn usd_failure_bound_from_fidelity(fidelity: f64, eta: f64) -> Result<f64> {
    if !(fidelity > 0.5 && fidelity <= 1.0) {
        return Err(QubusError::InvalidParameter(format!(
            "fidelity {fidelity} outside (1/2, 1]"
        )));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(QubusError::InvalidParameter(format!(
            "transmission {eta} outside (0, 1); the bound diverges at eta = 1"
        )));
    }
    Ok((2.0 * fidelity - 1.0).powf(eta / (1.0 - eta)))
}

/// Minimum failure probability of unambiguously separating the unrotated
/// state from the rotated pair: the overlap `e^{-eta alpha^2 (1 - cos
/// theta)}`.
pub fn usd_optimal_failure(params: &LinkParams) -> f64 {
    let a = params.alpha();
    (-params.eta() * a * a * one_minus_cos(params.theta())).exp()
}

/// Closed-form probabilities of the receiver heralds.
pub fn pattern_probabilities(params: &LinkParams) -> UsdBudget {
    let lam2 = params.lambda_bs() * params.lambda_bs();
    let t3sq = (1.0 - 2.0 * lam2).max(0.0);
    let a = params.eta() * params.alpha() * params.alpha() * one_minus_cos(params.theta());
    let sin = params.theta().sin();
    let p_even = {
        let miss = (-2.0 * lam2 * a).exp();
        0.5 * (1.0 - miss) * (1.0 - miss)
    };
    let p_odd_usd = 0.5 * (1.0 - (-2.0 * t3sq * a).exp());
    let p_odd_ent =
        p_odd_usd * (-4.0 * lam2 * params.eta() * params.alpha() * params.alpha() * sin * sin).exp();
    UsdBudget {
        p_even,
        p_odd_usd,
        p_odd_ent,
        p_total_usd: p_even + p_odd_usd,
        p_total_ent: p_even + p_odd_ent,
    }
}

/// Meaning of each click pattern, ports ordered (plus-null, minus-null,
/// unrotated-null).
pub fn classify(pattern: DetectionPattern) -> Classification {
    match pattern.clicks {
        [true, true, false] => Classification::IdentifiesUnrotated,
        [false, false, true] => Classification::IdentifiesRotatedPair,
        [false, true, true] => Classification::IdentifiesPlusTheta,
        [true, false, true] => Classification::IdentifiesMinusTheta,
        [false, true, false] | [true, false, false] => Classification::PartiallyConclusive,
        [false, false, false] => Classification::InconclusiveVacuum,
        [true, true, true] => Classification::Impossible,
    }
}

/// Probability and conditional state of one pattern on a freshly generated
/// link state.
pub fn classify_and_condition(
    pattern: DetectionPattern,
    params: &LinkParams,
    detector: DetectorModel,
) -> Result<PatternOutcome> {
    let state = build_link_state(params)?;
    let rec = Receiver::new(params)?;
    outcome_for(&state, &rec, pattern, detector)
}

/// All 8 pattern outcomes for one link state; probabilities sum to one.
pub fn pattern_distribution(
    params: &LinkParams,
    detector: DetectorModel,
) -> Result<Vec<PatternOutcome>> {
    let state = build_link_state(params)?;
    let rec = Receiver::new(params)?;
    DetectionPattern::all()
        .iter()
        .map(|&pattern| outcome_for(&state, &rec, pattern, detector))
        .collect()
}

/// Probability-weighted conditional states of the odd herald split by click
/// parity. Probabilities sum to the odd-herald pattern probability; a `None`
/// state marks a zero-probability branch.
pub struct ParityHeralds {
    pub odd: (f64, Option<TwoQubitDensity>),
    pub even_non_vacuum: (f64, Option<TwoQubitDensity>),
}

pub fn parity_click_outcomes(params: &LinkParams) -> Result<ParityHeralds> {
    let state = build_link_state(params)?;
    let rec = Receiver::new(params)?;
    let odd = normalized_reduction(rec.condition_parity(&state, 0, ClickParity::Odd)?)?;
    let even_non_vacuum =
        normalized_reduction(rec.condition_parity(&state, 0, ClickParity::EvenNonVacuum)?)?;
    Ok(ParityHeralds { odd, even_non_vacuum })
}

fn outcome_for(
    state: &HybridState,
    rec: &Receiver,
    pattern: DetectionPattern,
    detector: DetectorModel,
) -> Result<PatternOutcome> {
    let classification = classify(pattern);
    let conditioned = rec.condition(state, 0, pattern)?;
    let (probability, reduced) = normalized_reduction(conditioned)?;
    let conditional_state = match classification {
        Classification::IdentifiesUnrotated
        | Classification::IdentifiesPlusTheta
        | Classification::IdentifiesMinusTheta => reduced,
        Classification::IdentifiesRotatedPair => match detector {
            DetectorModel::OnOff => reduced,
            DetectorModel::ParityResolving => {
                let parity = rec.condition_parity(state, 0, ClickParity::Odd)?;
                normalized_reduction(parity)?.1
            }
        },
        _ => None,
    };
    Ok(PatternOutcome {
        pattern,
        classification,
        probability,
        conditional_state,
    })
}

/// Trace (clamped to zero from below at roundoff scale) and normalized
/// two-qubit reduction of an unnormalized conditioned state.
fn normalized_reduction(conditioned: HybridState) -> Result<(f64, Option<TwoQubitDensity>)> {
    let trace = conditioned.trace();
    if trace.im.abs() > 1e-10 * trace.re.abs().max(1.0) {
        return Err(QubusError::NumericAssertion(format!(
            "conditioned trace has imaginary part {}",
            trace.im
        )));
    }
    if trace.re < -1e-10 {
        return Err(QubusError::NumericAssertion(format!(
            "conditioned trace is negative: {}",
            trace.re
        )));
    }
    let probability = trace.re.max(0.0);
    if probability == 0.0 {
        return Ok((0.0, None));
    }
    let state = conditioned.normalized()?.trace_out_modes()?.two_qubit()?;
    Ok((probability, Some(state)))
}

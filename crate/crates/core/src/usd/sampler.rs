//! Seeded Monte-Carlo simulation of the click receiver.
//!
//! Each trial draws one constellation input with the physical priors (1/2
//! unrotated, 1/4 each rotation), pushes it through the receiver splitter,
//! and fires the three on/off detectors as independent Bernoulli events with
//! probability `1 - e^{-|output|^2}` per port. The empirical pattern
//! frequencies are compared against the exact branch-representation
//! probabilities via binomial z-scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QubusError, Result};
use crate::link::LinkParams;
use crate::usd::receiver::{nominal_constellation, DetectionPattern, Receiver};
use crate::usd::{pattern_distribution, Classification, DetectorModel};

/// Per-pattern comparison between sampled frequencies and exact values.
#[derive(Clone, Copy, Debug)]
pub struct PatternStats {
    pub pattern: DetectionPattern,
    pub classification: Classification,
    pub analytic: f64,
    pub count: u64,
    pub frequency: f64,
    pub z_score: f64,
}

/// Runs `trials` receiver shots with a fixed seed and returns the 8 pattern
/// statistics in pattern order.
pub fn sample_pattern_statistics(
    params: &LinkParams,
    trials: u64,
    seed: u64,
) -> Result<Vec<PatternStats>> {
    if trials == 0 {
        return Err(QubusError::InvalidParameter(
            "trial count must be positive".into(),
        ));
    }
    let receiver = Receiver::new(params)?;
    let click_probs: Vec<[f64; 3]> = nominal_constellation(params)
        .iter()
        .map(|&input| {
            receiver
                .port_outputs(input)
                .map(|out| 1.0 - (-out.mean_photons()).exp())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0u64; 8];
    for _ in 0..trials {
        let r: f64 = rng.gen();
        let input = usize::from(r >= 0.5) + usize::from(r >= 0.75);
        let mut index = 0usize;
        for (port, &p_click) in click_probs[input].iter().enumerate() {
            if rng.gen::<f64>() < p_click {
                index |= 4 >> port;
            }
        }
        counts[index] += 1;
    }
    let exact = pattern_distribution(params, DetectorModel::OnOff)?;
    let n = trials as f64;
    Ok(exact
        .iter()
        .enumerate()
        .map(|(i, outcome)| {
            let frequency = counts[i] as f64 / n;
            let p = outcome.probability;
            let z_score = if p <= 0.0 || p >= 1.0 {
                if frequency == p {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (frequency - p) / (p * (1.0 - p) / n).sqrt()
            };
            PatternStats {
                pattern: outcome.pattern,
                classification: outcome.classification,
                analytic: p,
                count: counts[i],
                frequency,
                z_score,
            }
        })
        .collect())
}

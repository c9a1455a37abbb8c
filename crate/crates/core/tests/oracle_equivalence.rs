//! Cross-validation of the dyad algebra against the photon-number-basis
//! simulator on randomized parameter points: every herald the receiver
//! produces, the homodyne window, and the unconditioned pair state.

use qubus_core::{
    build_link_state, default_window_halfwidth, homodyne_p_condition, oracle_homodyne_condition,
    oracle_receiver_report, parity_click_outcomes, pattern_distribution, trace_distance,
    DetectorModel, LinkParams,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(seed: u64, count: usize) -> Vec<LinkParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    while points.len() < count {
        let alpha = 0.4 + 1.8 * rng.gen::<f64>();
        let theta = 0.25 + 0.9 * rng.gen::<f64>();
        let eta = 0.35 + 0.65 * rng.gen::<f64>();
        let lambda = 0.25 + 0.4 * rng.gen::<f64>();
        points.push(LinkParams::from_eta(alpha, theta, eta.min(1.0), lambda).unwrap());
    }
    points
}

#[test]
fn oracle_reproduces_every_receiver_herald() {
    for params in random_points(41, 6) {
        let report = oracle_receiver_report(&params).unwrap();
        let closed = pattern_distribution(&params, DetectorModel::OnOff).unwrap();
        for (got, want) in report.pattern_probabilities.iter().zip(closed.iter()) {
            assert!(
                (got - want.probability).abs() < 1e-8,
                "pattern {} probability {} vs {}",
                want.pattern,
                got,
                want.probability
            );
        }
        for (oracle, fixture) in [
            (&report.even_conditional, &closed[6].conditional_state),
            (&report.odd_conditional, &closed[1].conditional_state),
        ] {
            let d = trace_distance(oracle.as_ref().unwrap(), fixture.as_ref().unwrap());
            assert!(d < 1e-8, "herald state trace distance {d}");
        }
        let heralds = parity_click_outcomes(&params).unwrap();
        assert!((report.parity_odd_probability - heralds.odd.0).abs() < 1e-8);
        let d = trace_distance(
            report.parity_odd_conditional.as_ref().unwrap(),
            heralds.odd.1.as_ref().unwrap(),
        );
        assert!(d < 1e-8, "parity herald trace distance {d}");
    }
}

#[test]
fn oracle_reproduces_the_unconditioned_pair_state() {
    for params in random_points(42, 4) {
        let report = oracle_receiver_report(&params).unwrap();
        let closed = build_link_state(&params)
            .unwrap()
            .trace_out_modes()
            .unwrap()
            .two_qubit()
            .unwrap();
        let d = trace_distance(&report.qubit_state, &closed);
        assert!(d < 1e-8, "pair state trace distance {d}");
    }
}

#[test]
fn oracle_reproduces_the_homodyne_window() {
    for params in random_points(43, 4) {
        let w = default_window_halfwidth(&params);
        let (p_oracle, rho_oracle) = oracle_homodyne_condition(&params, w).unwrap();
        let (p_closed, rho_closed) = homodyne_p_condition(&params, w).unwrap();
        assert!(
            (p_oracle - p_closed).abs() < 1e-8,
            "window probability {p_oracle} vs {p_closed}"
        );
        let d = trace_distance(&rho_oracle, &rho_closed);
        assert!(d < 1e-8, "windowed state trace distance {d}");
    }
}

//! Elementary-link construction: parameters of one fiber segment, the
//! qubit-bus state after transmission, and the full qubit-bus-qubit state
//! ready for the receiver.

use num_complex::Complex64;

use crate::coherent::coherent_overlap;
use crate::coherent::CoherentLabel;
use crate::density::TwoQubitDensity;
use crate::error::{QubusError, Result};
use crate::hybrid::{HybridKet, HybridState, KetTerm};

pub const DEFAULT_LOSS_DB_PER_KM: f64 = 0.18;

/// 1 - cos(theta) evaluated as 2 sin^2(theta/2), which keeps full relative
/// precision for the small rotation angles this protocol runs at.
pub fn one_minus_cos(theta: f64) -> f64 {
    let s = (0.5 * theta).sin();
    2.0 * s * s
}

/// Fiber power transmission after `distance_km` of propagation.
pub fn eta_for_distance(distance_km: f64, loss_db_per_km: f64) -> f64 {
    10f64.powf(-loss_db_per_km * distance_km / 10.0)
}

/// Parameters of one elementary link: bus amplitude, conditional rotation
/// angle, channel, and the receiver beam-splitter parameter.
#[derive(Clone, Copy, Debug)]
pub struct LinkParams {
    alpha: f64,
    theta: f64,
    distance_km: f64,
    loss_db_per_km: f64,
    lambda_bs: f64,
    eta: f64,
}

impl LinkParams {
    pub fn new(
        alpha: f64,
        theta: f64,
        distance_km: f64,
        loss_db_per_km: f64,
        lambda_bs: f64,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(QubusError::InvalidParameter(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        if !theta.is_finite() {
            return Err(QubusError::InvalidParameter("theta must be finite".into()));
        }
        if !(distance_km.is_finite() && distance_km >= 0.0) {
            return Err(QubusError::InvalidParameter(format!(
                "distance must be finite and >= 0, got {distance_km} km"
            )));
        }
        if !(loss_db_per_km.is_finite() && loss_db_per_km >= 0.0) {
            return Err(QubusError::InvalidParameter(format!(
                "loss must be finite and >= 0, got {loss_db_per_km} dB/km"
            )));
        }
        check_lambda(lambda_bs)?;
        let eta = eta_for_distance(distance_km, loss_db_per_km);
        if eta <= 0.0 {
            return Err(QubusError::InvalidTransmission(eta));
        }
        Ok(Self {
            alpha,
            theta,
            distance_km,
            loss_db_per_km,
            lambda_bs,
            eta,
        })
    }

    /// Same link specified by transmission; the equivalent distance is
    /// back-computed at the default fiber loss.
    pub fn from_eta(alpha: f64, theta: f64, eta: f64, lambda_bs: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(QubusError::InvalidTransmission(eta));
        }
        let distance_km = -10.0 * eta.log10() / DEFAULT_LOSS_DB_PER_KM;
        let mut p = Self::new(alpha, theta, distance_km, DEFAULT_LOSS_DB_PER_KM, lambda_bs)?;
        p.eta = eta;
        Ok(p)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn distance_km(&self) -> f64 {
        self.distance_km
    }

    pub fn loss_db_per_km(&self) -> f64 {
        self.loss_db_per_km
    }

    pub fn lambda_bs(&self) -> f64 {
        self.lambda_bs
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// xi = alpha^2 sin(theta), the phase accumulated between the unrotated
    /// and rotated bus states.
    pub fn xi(&self) -> f64 {
        self.alpha * self.alpha * self.theta.sin()
    }
}

fn check_lambda(lambda_bs: f64) -> Result<()> {
    if !(lambda_bs.is_finite()
        && (0.0..=std::f64::consts::FRAC_1_SQRT_2).contains(&lambda_bs))
    {
        return Err(QubusError::InvalidParameter(format!(
            "lambda must lie in [0, 1/sqrt(2)], got {lambda_bs}"
        )));
    }
    Ok(())
}

/// Bus amplitude that makes the link fidelity mu_E^2 hit `target_f`:
/// alpha^2 = -ln(2F - 1) / ((1 - eta)(1 - cos theta)).
pub fn alpha_for_target_fidelity(target_f: f64, theta: f64, eta: f64) -> Result<f64> {
    if !(target_f > 0.5 && target_f <= 1.0) {
        return Err(QubusError::InvalidParameter(format!(
            "target fidelity must lie in (1/2, 1], got {target_f}"
        )));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(QubusError::InvalidTransmission(eta));
    }
    let denom = (1.0 - eta) * one_minus_cos(theta);
    if denom <= 0.0 {
        return Err(QubusError::InvalidParameter(
            "fidelity target is unreachable at theta = 0".into(),
        ));
    }
    if target_f == 1.0 {
        return Ok(0.0);
    }
    Ok((-(2.0 * target_f - 1.0).ln() / denom).sqrt())
}

/// State of the first qubit and the bus after the conditional +theta
/// rotation and fiber transmission: one qubit, one mode, <= 4 branches.
pub fn qubit_bus_state(params: &LinkParams) -> Result<HybridState> {
    let seed = HybridKet::plus().tensor(&HybridKet::coherent(CoherentLabel::real(params.alpha)));
    HybridState::pure(&seed)
        .controlled_rotation(0, 0, params.theta)?
        .loss_channel(0, params.eta)
}

/// Full qubit-bus-qubit state handed to the receiver. Qubit 0 is the sender
/// qubit, qubit 1 the receiver qubit, mode 0 the bus.
///
/// Pipeline: conditional +theta rotation at the sender, fiber loss,
/// conditional -theta rotation at the receiver, then the two local phase
/// gates diag(1, e^{-i xi}) on qubit 0 and diag(1, e^{i eta xi}) on qubit 1
/// that absorb the deterministic rotation phases into the branch structure.
pub fn build_link_state(params: &LinkParams) -> Result<HybridState> {
    let xi = params.xi();
    qubit_bus_state(params)?
        .tensor(&HybridState::pure(&HybridKet::plus()))
        .controlled_rotation(1, 0, -params.theta)?
        .apply_qubit_phase(0, -xi)?
        .apply_qubit_phase(1, params.eta * xi)
}

/// The two orthonormal pure components of the link state. The first carries
/// weight mu_E^2, the second 1 - mu_E^2; both live on (qubit0, qubit1, bus).
pub fn link_state_components(params: &LinkParams) -> Result<(HybridKet, HybridKet)> {
    let s = params.eta.sqrt() * params.alpha;
    let exi = Complex64::new(0.0, params.eta * params.xi()).exp();
    let unrot = CoherentLabel::real(s);
    let plus_rot = unrot.rotated(params.theta);
    let minus_rot = unrot.rotated(-params.theta);

    let term = |index: usize, label: CoherentLabel, amplitude: Complex64| KetTerm {
        qubit_index: index,
        mode_labels: vec![label],
        amplitude,
    };
    let build = |even_sign: f64, odd_sign: f64| {
        HybridKet::new(
            2,
            1,
            vec![
                term(0b00, unrot, Complex64::new(0.5, 0.0)),
                term(0b11, unrot, Complex64::new(0.5 * even_sign, 0.0)),
                term(0b10, plus_rot, exi.conj() * 0.5 * odd_sign),
                term(0b01, minus_rot, exi * 0.5),
            ],
        )
    };
    Ok((build(1.0, 1.0)?, build(-1.0, -1.0)?))
}

/// Maps a one-qubit-one-mode state whose mode labels span at most two
/// coherent states onto an effective two-qubit density matrix, using the
/// orthonormalized span of the labels as the second qubit's basis. Exact:
/// the mode state lives entirely inside that two-dimensional span.
pub fn effective_two_qubit(state: &HybridState) -> Result<TwoQubitDensity> {
    if state.n_qubits() != 1 || state.n_modes() != 1 {
        return Err(QubusError::InvalidParameter(format!(
            "effective_two_qubit expects 1 qubit and 1 mode, got {} and {}",
            state.n_qubits(),
            state.n_modes()
        )));
    }
    let mut labels: Vec<CoherentLabel> = Vec::new();
    let mut index_of = |l: CoherentLabel| -> Option<usize> {
        match labels.iter().position(|x| x.key() == l.key()) {
            Some(i) => Some(i),
            None if labels.len() < 2 => {
                labels.push(l);
                Some(labels.len() - 1)
            }
            None => None,
        }
    };
    let mut pairs = Vec::with_capacity(state.branches().len());
    for b in state.branches() {
        let i = index_of(b.ket_labels[0]).ok_or_else(too_many_labels)?;
        let j = index_of(b.bra_labels[0]).ok_or_else(too_many_labels)?;
        pairs.push((b.ket_index, b.bra_index, i, j, b.coefficient));
    }
    // Gram-Schmidt coordinates of the (up to) two labels.
    let mut coords = [[Complex64::new(0.0, 0.0); 2]; 2];
    coords[0][0] = Complex64::new(1.0, 0.0);
    if labels.len() == 2 {
        let o = coherent_overlap(labels[0], labels[1]);
        coords[1][0] = o;
        coords[1][1] = Complex64::new((1.0 - o.norm_sqr()).max(0.0).sqrt(), 0.0);
    }
    let mut m = nalgebra::Matrix4::<Complex64>::zeros();
    for (qk, qb, i, j, c) in pairs {
        for mi in 0..2 {
            for mj in 0..2 {
                m[(2 * qk + mi, 2 * qb + mj)] += c * coords[i][mi] * coords[j][mj].conj();
            }
        }
    }
    // Symmetrize away branch-drop-level asymmetry.
    let m = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    TwoQubitDensity::new(m)
}

fn too_many_labels() -> QubusError {
    QubusError::InvalidParameter(
        "mode labels span more than two coherent states; no exact two-qubit reduction".into(),
    )
}

/// Effective two-qubit density matrix of the qubit-bus state after
/// transmission, the object whose entanglement of formation quantifies what
/// the link can at best deliver.
pub fn qubit_qubus_density(params: &LinkParams) -> Result<TwoQubitDensity> {
    effective_two_qubit(&qubit_bus_state(params)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_17km() -> LinkParams {
        LinkParams::new(100.0, 0.01, 17.0, DEFAULT_LOSS_DB_PER_KM, 0.4).unwrap()
    }

    #[test]
    fn transmission_fixtures() {
        // 10^(-0.18 d / 10) at the distances used throughout.
        assert!((eta_for_distance(17.0, 0.18) - 0.49431068698683542).abs() < 1e-15);
        assert!((eta_for_distance(50.0, 0.18) - 0.12589254117941672).abs() < 1e-15);
        assert!((eta_for_distance(100.0, 0.18) - 0.015848931924611135).abs() < 1e-16);
        assert_eq!(eta_for_distance(0.0, 0.18), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LinkParams::new(-1.0, 0.01, 17.0, 0.18, 0.4).is_err());
        assert!(LinkParams::new(1.0, 0.01, -1.0, 0.18, 0.4).is_err());
        assert!(LinkParams::new(1.0, 0.01, 17.0, 0.18, 0.8).is_err());
        assert!(LinkParams::new(1.0, f64::NAN, 17.0, 0.18, 0.4).is_err());
        assert!(LinkParams::from_eta(1.0, 0.01, 0.0, 0.4).is_err());
        // The boundary lambda = 1/sqrt(2) is legal.
        LinkParams::new(1.0, 0.01, 17.0, 0.18, std::f64::consts::FRAC_1_SQRT_2).unwrap();
    }

    #[test]
    fn link_state_is_normalized_with_few_branches() {
        let st = build_link_state(&params_17km()).unwrap();
        assert!((st.trace().re - 1.0).abs() < 1e-12);
        assert!(st.trace().im.abs() < 1e-12);
        assert!(st.n_branches() <= 16);
        assert!(st.hermiticity_defect() < 1e-14);
    }

    #[test]
    fn lossless_link_state_is_pure() {
        let p = LinkParams::new(50.0, 0.01, 0.0, 0.18, 0.4).unwrap();
        let st = build_link_state(&p).unwrap();
        assert!((st.purity() - 1.0).abs() < 1e-10);
        let (plus, _) = link_state_components(&p).unwrap();
        let f = st.ket_expectation(&plus).unwrap();
        assert!((f.re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn component_weights_match_mu_e() {
        let p = params_17km();
        let st = build_link_state(&p).unwrap();
        let (plus, minus) = link_state_components(&p).unwrap();
        assert!((plus.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((minus.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(plus.dot(&minus).norm() < 1e-12);
        let mu_e_sq =
            0.5 * (1.0 + (-(1.0 - p.eta()) * p.alpha().powi(2) * (1.0 - p.theta().cos())).exp());
        let w_plus = st.ket_expectation(&plus).unwrap();
        let w_minus = st.ket_expectation(&minus).unwrap();
        assert!((w_plus.re - mu_e_sq).abs() < 1e-12);
        assert!((w_minus.re - (1.0 - mu_e_sq)).abs() < 1e-12);
        assert!((w_plus.re + w_minus.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qubit_bus_reduction_purity() {
        let p = params_17km();
        let rho = qubit_qubus_density(&p).unwrap();
        let mu_e_sq =
            0.5 * (1.0 + (-(1.0 - p.eta()) * p.alpha().powi(2) * (1.0 - p.theta().cos())).exp());
        // Rank-2 mixture of orthogonal pure states.
        let expect = mu_e_sq.powi(2) + (1.0 - mu_e_sq).powi(2);
        assert!((rho.purity() - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_link_is_pure_product() {
        let p = LinkParams::new(0.0, 0.01, 17.0, 0.18, 0.4).unwrap();
        let st = build_link_state(&p).unwrap();
        assert!((st.purity() - 1.0).abs() < 1e-12);
        let rho = st.trace_out_modes().unwrap();
        // (|0>+|1>)(|0>+|1>)/2 in both slots: all entries 1/4.
        for r in 0..4 {
            for c in 0..4 {
                assert!((rho.matrix()[(r, c)].re - 0.25).abs() < 1e-12);
                assert!(rho.matrix()[(r, c)].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fidelity_inversion_roundtrip() {
        let eta = eta_for_distance(40.0, 0.18);
        let alpha = alpha_for_target_fidelity(0.8, 0.01, eta).unwrap();
        let f = 0.5 * (1.0 + (-(1.0 - eta) * alpha * alpha * (1.0 - 0.01f64.cos())).exp());
        assert!((f - 0.8).abs() < 1e-12);
        assert!(alpha_for_target_fidelity(0.5, 0.01, eta).is_err());
        assert!(alpha_for_target_fidelity(0.8, 0.0, eta).is_err());
        assert!(alpha_for_target_fidelity(0.8, 0.01, 1.0).is_err());
    }
}

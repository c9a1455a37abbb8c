//! Simplified homodyne comparator: accept a link attempt when the bus
//! p-quadrature lands inside a symmetric window around the even-subspace
//! peak. Quadrature convention x = (a + a^dag)/sqrt(2), so the vacuum
//! quadrature variance is 1/2 and a coherent state |gamma> has mean
//! quadratures (sqrt(2) Re gamma, sqrt(2) Im gamma).
//!
//! Unlike the click receiver this acceptance cannot null the rotated states
//! exactly, so the conditioned pair keeps a residual odd-subspace (bit-flip)
//! weight that shrinks with the separation alpha*theta.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::coherent::CoherentLabel;
use crate::density::TwoQubitDensity;
use crate::error::{QubusError, Result};
use crate::link::{build_link_state, LinkParams};

/// Matrix element `<bra| W |ket>` of the window operator
/// `W = integral over |p| <= halfwidth of |p><p| dp` between coherent
/// states. A non-positive halfwidth is an empty window (factor 0); an
/// infinite one reproduces the plain overlap.
pub fn quadrature_window_factor(
    ket: CoherentLabel,
    bra: CoherentLabel,
    halfwidth: f64,
) -> Complex64 {
    if !(halfwidth > 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    let p_ket = SQRT_2 * ket.amplitude().im;
    let p_bra = SQRT_2 * bra.amplitude().im;
    // The integrand is a Gaussian of unit width about the mean center; 14
    // widths of slack keep the truncation below underflow level.
    let center = 0.5 * (p_ket + p_bra);
    let lo = (-halfwidth).max(center - 14.0);
    let hi = halfwidth.min(center + 14.0);
    if !(lo < hi) {
        return Complex64::new(0.0, 0.0);
    }
    // Panels sized to resolve the e^{i (xbar_bra - xbar_ket) p} oscillation.
    let omega = (SQRT_2 * (ket.amplitude().re - bra.amplitude().re)).abs();
    let max_panel = 2.0_f64.min(40.0 / omega.max(20.0));
    let panels = (((hi - lo) / max_panel).ceil() as usize).max(1);
    let step = (hi - lo) / panels as f64;
    let (nodes, weights) = gauss_legendre_32();
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..panels {
        let a = lo + k as f64 * step;
        let mid = a + 0.5 * step;
        let half = 0.5 * step;
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, w) in nodes.iter().zip(weights.iter()) {
            let p = mid + half * t;
            acc += *w * wavefunction(bra, p).conj() * wavefunction(ket, p);
        }
        total += half * acc;
    }
    total
}

/// p-quadrature wavefunction `<p|gamma>` of a coherent state.
fn wavefunction(gamma: CoherentLabel, p: f64) -> Complex64 {
    let xbar = SQRT_2 * gamma.amplitude().re;
    let pbar = SQRT_2 * gamma.amplitude().im;
    let dp = p - pbar;
    let norm = PI.powf(-0.25);
    norm * Complex64::new(-0.5 * dp * dp, -xbar * (p - 0.5 * pbar)).exp()
}

/// Conditions the link state on a p-quadrature result inside the window and
/// returns the acceptance probability with the normalized conditional pair.
pub fn homodyne_p_condition(
    params: &LinkParams,
    window_halfwidth: f64,
) -> Result<(f64, TwoQubitDensity)> {
    if !(window_halfwidth > 0.0) {
        return Err(QubusError::InvalidParameter(format!(
            "window halfwidth {window_halfwidth} must be positive"
        )));
    }
    let state = build_link_state(params)?;
    let conditioned =
        state.contract_mode_with(0, |k, b| quadrature_window_factor(k, b, window_halfwidth))?;
    let trace = conditioned.trace();
    if trace.re <= 0.0 || trace.im.abs() > 1e-10 * trace.re.max(1.0) {
        return Err(QubusError::ZeroSuccessProbability);
    }
    let rho = conditioned.normalized()?.trace_out_modes()?.two_qubit()?;
    Ok((trace.re, rho))
}

/// Default acceptance halfwidth: half the p-separation between the even
/// peak and the rotated peaks, `sqrt(2) sqrt(eta) alpha sin(theta) / 2`.
pub fn default_window_halfwidth(params: &LinkParams) -> f64 {
    FRAC_1_SQRT_2 * params.eta().sqrt() * params.alpha() * params.theta().sin()
}

/// Nodes and weights of 32-point Gauss-Legendre quadrature on [-1, 1],
/// generated by Newton iteration on the Legendre recurrence.
pub(crate) fn gauss_legendre_32() -> &'static ([f64; 32], [f64; 32]) {
    static CACHE: OnceLock<([f64; 32], [f64; 32])> = OnceLock::new();
    CACHE.get_or_init(|| {
        const N: usize = 32;
        let mut nodes = [0.0; N];
        let mut weights = [0.0; N];
        for i in 0..N {
            let mut x = (PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
            for _ in 0..60 {
                let (p, dp) = legendre_with_derivative(N, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(N, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * cur - (kf - 1.0) * prev) / kf;
        prev = cur;
        cur = next;
    }
    let dp = n as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::coherent_overlap;
    use crate::density::trace_distance;
    use crate::link::LinkParams;

    #[test]
    fn quadrature_rule_integrates_polynomials_exactly() {
        let (nodes, weights) = gauss_legendre_32();
        let total: f64 = weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // Exact through degree 63.
        let p62: f64 = nodes
            .iter()
            .zip(weights.iter())
            .map(|(x, w)| w * x.powi(62))
            .sum();
        assert!((p62 - 2.0 / 63.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_real_labels_give_the_error_function() {
        // For a real label the p-marginal is the vacuum Gaussian, so the
        // window factor is erf(halfwidth) independent of the amplitude.
        for (w, erf) in [
            (0.5, 0.52049987781304653768),
            (1.0, 0.84270079294971486934),
            (2.0, 0.99532226501895273416),
        ] {
            for amp in [0.0, 2.3, 140.0] {
                let label = CoherentLabel::real(amp);
                let f = quadrature_window_factor(label, label, w);
                assert!((f.re - erf).abs() < 1e-13, "w={w} amp={amp}: {}", f.re);
                assert!(f.im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn infinite_window_recovers_overlaps() {
        let labels = [
            CoherentLabel::new(0.0, 0.0).unwrap(),
            CoherentLabel::new(1.2, 0.5).unwrap(),
            CoherentLabel::new(-0.4, 0.1).unwrap(),
            CoherentLabel::new(2.0, -1.3).unwrap(),
        ];
        for ket in labels {
            for bra in labels {
                let f = quadrature_window_factor(ket, bra, f64::INFINITY);
                let ovl = coherent_overlap(bra, ket);
                assert!((f - ovl).norm() < 1e-12 * ovl.norm().max(1e-3));
            }
        }
    }

    #[test]
    fn oscillatory_factors_stay_bounded() {
        // Widely separated real labels force heavy phase cancellation; the
        // result underflows physically and must not blow up numerically.
        let plus = CoherentLabel::real(8.0);
        let minus = CoherentLabel::real(-8.0);
        let f = quadrature_window_factor(plus, minus, f64::INFINITY);
        assert!(f.norm() < 1e-14);
        // Moderate separation is still resolved accurately.
        let a = CoherentLabel::real(2.0);
        let b = CoherentLabel::real(-2.0);
        let f = quadrature_window_factor(a, b, f64::INFINITY);
        let ovl = coherent_overlap(b, a);
        assert!((f - ovl).norm() < 1e-14);
    }

    #[test]
    fn infinite_window_is_trivial_conditioning() {
        let p = LinkParams::new(1.3, 0.3, 17.0, 0.18, 0.4).unwrap();
        let (prob, rho) = homodyne_p_condition(&p, f64::INFINITY).unwrap();
        assert!((prob - 1.0).abs() < 1e-10);
        let full = build_link_state(&p)
            .unwrap()
            .trace_out_modes()
            .unwrap()
            .two_qubit()
            .unwrap();
        assert!(trace_distance(&rho, &full) < 1e-10);
    }

    #[test]
    fn window_acceptance_splits_even_and_odd() {
        let p = LinkParams::from_eta(100.0, 0.01, 0.494, 0.4).unwrap();
        let w = default_window_halfwidth(&p);
        let (prob, rho) = homodyne_p_condition(&p, w).unwrap();
        assert!(prob > 0.1 && prob < 1.0);
        let m = rho.matrix();
        let odd = m[(1, 1)].re + m[(2, 2)].re;
        let even = m[(0, 0)].re + m[(3, 3)].re;
        // Residual bit-flip weight is strictly positive but suppressed.
        assert!(odd > 0.0);
        assert!(even > 0.6);
    }

    #[test]
    fn large_separation_suppresses_bit_flips() {
        // alpha * theta = 5 without loss: the odd peaks sit ten vacuum
        // widths away from the window center.
        let p = LinkParams::from_eta(500.0, 0.01, 1.0, 0.4).unwrap();
        let w = default_window_halfwidth(&p);
        let (prob, rho) = homodyne_p_condition(&p, w).unwrap();
        let m = rho.matrix();
        let odd = m[(1, 1)].re + m[(2, 2)].re;
        assert!(odd < 1e-4, "odd weight {odd}");
        assert!(prob > 0.2);
    }

    #[test]
    fn empty_window_is_rejected() {
        let p = LinkParams::new(1.0, 0.3, 17.0, 0.18, 0.4).unwrap();
        assert!(homodyne_p_condition(&p, 0.0).is_err());
        assert!(homodyne_p_condition(&p, -1.0).is_err());
        assert!(homodyne_p_condition(&p, f64::NAN).is_err());
    }
}

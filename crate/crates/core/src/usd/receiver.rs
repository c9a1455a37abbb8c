//! Three-port click receiver: the bus mode is split over three output ports,
//! each port is displaced so that one nominal constellation state lands
//! exactly on the vacuum, and every port feeds an on/off detector.
//!
//! The nominal displacement targets are constructed through the same label
//! operations, in the same order, as the link pipeline itself. This makes
//! the "this port sees vacuum for that input" cancellations bit-exact, which
//! in turn makes the impossible all-click pattern and the forbidden-branch
//! click factors evaluate to exactly 0.0 rather than to 1e-16-level noise.

use num_complex::Complex64;

use crate::coherent::{coherent_overlap, CoherentLabel};
use crate::error::Result;
use crate::hybrid::HybridState;
use crate::link::LinkParams;

/// Ordered on/off outcomes of the three port detectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DetectionPattern {
    pub clicks: [bool; 3],
}

impl DetectionPattern {
    pub fn new(clicks: [bool; 3]) -> Self {
        Self { clicks }
    }

    /// All 8 patterns, ordered as 3-bit numbers with port 1 the high bit.
    pub fn all() -> [Self; 8] {
        let mut out = [Self::new([false; 3]); 8];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = Self::new([i & 4 != 0, i & 2 != 0, i & 1 != 0]);
        }
        out
    }
}

impl std::fmt::Display for DetectionPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in self.clicks {
            write!(f, "{}", if c { 'c' } else { 'n' })?;
        }
        Ok(())
    }
}

/// Photon-number parity of a click, for a number-resolving port detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClickParity {
    Odd,
    /// Even photon number excluding vacuum (which is a no-click).
    EvenNonVacuum,
}

/// The splitter weights and displacements of the receiver, fixed by the link
/// parameters.
#[derive(Clone, Debug)]
pub struct Receiver {
    weights: [f64; 3],
    displacements: [Complex64; 3],
}

/// The three coherent labels the bus can carry after the link interaction,
/// ordered (unrotated, +theta, -theta). Built with the pipeline's operation
/// order (the +theta rotation happens before fiber loss, the -theta one
/// after) so downstream cancellations against branch labels are bit-exact.
pub fn nominal_constellation(params: &LinkParams) -> [CoherentLabel; 3] {
    let alpha = CoherentLabel::real(params.alpha());
    let sq_eta = params.eta().sqrt();
    [
        alpha.scaled(sq_eta),
        alpha.rotated(params.theta()).scaled(sq_eta),
        alpha.scaled(sq_eta).rotated(-params.theta()),
    ]
}

impl Receiver {
    pub fn new(params: &LinkParams) -> Result<Self> {
        let lam = params.lambda_bs();
        // (1/sqrt(2))^2 rounds above 1/2, so clamp the representation of the
        // third-port power to keep its amplitude real at the boundary.
        let t3 = (1.0 - 2.0 * lam * lam).max(0.0).sqrt();
        let [unrot, plus, minus] = nominal_constellation(params);
        Ok(Self {
            weights: [lam, lam, t3],
            displacements: [
                plus.scaled(-lam).amplitude(),
                minus.scaled(-lam).amplitude(),
                unrot.scaled(-t3).amplitude(),
            ],
        })
    }

    /// Port labels an input coherent state is mapped to (split, then
    /// displaced). One entry is exactly vacuum for each nominal input.
    pub fn port_outputs(&self, input: CoherentLabel) -> [CoherentLabel; 3] {
        [0, 1, 2].map(|i| input.scaled(self.weights[i]).shifted(self.displacements[i]))
    }

    /// Matrix element `<bra_ports| POVM(pattern) |ket_ports>` of the
    /// receiver POVM for one bus dyad `|ket><bra|`, including the
    /// displacement phases. Click ports contribute `<ob|ok> - <ob|0><0|ok>`,
    /// no-click ports `<ob|0><0|ok>`.
    pub fn pattern_factor(
        &self,
        pattern: DetectionPattern,
        ket: CoherentLabel,
        bra: CoherentLabel,
    ) -> Complex64 {
        let mut f = Complex64::new(1.0, 0.0);
        let mut net_phase = 0.0;
        for i in 0..3 {
            let (ok, ob, phase) = self.displaced_pair(i, ket, bra);
            net_phase += phase;
            f *= port_factor(pattern.clicks[i], ok, ob);
        }
        apply_net_phase(f, net_phase)
    }

    /// Same as `pattern_factor` for the odd herald (no-click, no-click,
    /// click), but with the third port resolving the photon-number parity of
    /// its click.
    pub fn parity_factor(
        &self,
        parity: ClickParity,
        ket: CoherentLabel,
        bra: CoherentLabel,
    ) -> Complex64 {
        let mut f = Complex64::new(1.0, 0.0);
        let mut net_phase = 0.0;
        for i in 0..2 {
            let (ok, ob, phase) = self.displaced_pair(i, ket, bra);
            net_phase += phase;
            f *= port_factor(false, ok, ob);
        }
        let (ok, ob, phase) = self.displaced_pair(2, ket, bra);
        net_phase += phase;
        // <ob| sum over the parity sector |ok> in closed form:
        // e^{-(|ok|^2+|ob|^2)/2} times sinh (odd) or cosh - 1 (even, >= 2).
        let x = ob.amplitude().conj() * ok.amplitude();
        let base = (-0.5 * (ok.mean_photons() + ob.mean_photons())).exp();
        f *= match parity {
            ClickParity::Odd => x.sinh() * base,
            ClickParity::EvenNonVacuum => (x.cosh() - 1.0) * base,
        };
        apply_net_phase(f, net_phase)
    }

    /// Conditions `state` on a detection pattern at the bus `mode`; the
    /// returned state is unnormalized with trace = pattern probability.
    pub fn condition(
        &self,
        state: &HybridState,
        mode: usize,
        pattern: DetectionPattern,
    ) -> Result<HybridState> {
        state.contract_mode_with(mode, |k, b| self.pattern_factor(pattern, k, b))
    }

    /// Conditions on the odd herald with parity resolution on port 3.
    pub fn condition_parity(
        &self,
        state: &HybridState,
        mode: usize,
        parity: ClickParity,
    ) -> Result<HybridState> {
        state.contract_mode_with(mode, |k, b| self.parity_factor(parity, k, b))
    }

    fn displaced_pair(
        &self,
        port: usize,
        ket: CoherentLabel,
        bra: CoherentLabel,
    ) -> (CoherentLabel, CoherentLabel, f64) {
        let d = self.displacements[port];
        let wk = ket.scaled(self.weights[port]);
        let wb = bra.scaled(self.weights[port]);
        let phase = (d * wk.amplitude().conj()).im - (d * wb.amplitude().conj()).im;
        (wk.shifted(d), wb.shifted(d), phase)
    }
}

fn port_factor(click: bool, ok: CoherentLabel, ob: CoherentLabel) -> Complex64 {
    let vacuum = CoherentLabel::vacuum();
    let vac = coherent_overlap(ob, vacuum) * coherent_overlap(vacuum, ok);
    if click {
        coherent_overlap(ob, ok) - vac
    } else {
        vac
    }
}

fn apply_net_phase(f: Complex64, net_phase: f64) -> Complex64 {
    if net_phase != 0.0 {
        f * Complex64::new(0.0, net_phase).exp()
    } else {
        f
    }
}

/// Port labels the receiver assigns to one input coherent state.
pub fn receiver_transform(
    input: CoherentLabel,
    params: &LinkParams,
) -> Result<[CoherentLabel; 3]> {
    Ok(Receiver::new(params)?.port_outputs(input))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal(params: &LinkParams) -> [CoherentLabel; 3] {
        nominal_constellation(params)
    }

    #[test]
    fn nominal_inputs_null_their_port() {
        let p = LinkParams::new(1.5, 0.3, 17.0, 0.18, 0.4).unwrap();
        let r = Receiver::new(&p).unwrap();
        let [u, plus, minus] = nominal(&p);
        assert_eq!(r.port_outputs(u)[2].mean_photons(), 0.0);
        assert_eq!(r.port_outputs(plus)[0].mean_photons(), 0.0);
        assert_eq!(r.port_outputs(minus)[1].mean_photons(), 0.0);
        // The unrotated input spreads over ports 1 and 2 as
        // lambda sqrt(eta) alpha (1 - e^{+-i theta}).
        let s = p.eta().sqrt() * p.alpha();
        let expect = 0.4 * s * (2.0 * (1.0 - 0.3f64.cos())).sqrt();
        assert!((r.port_outputs(u)[0].amplitude().norm() - expect).abs() < 1e-13);
        assert!((r.port_outputs(u)[1].amplitude().norm() - expect).abs() < 1e-13);
    }

    #[test]
    fn zero_angle_sends_everything_to_vacuum() {
        let p = LinkParams::new(2.0, 0.0, 10.0, 0.18, 0.4).unwrap();
        let r = Receiver::new(&p).unwrap();
        for input in nominal(&p) {
            for out in r.port_outputs(input) {
                assert_eq!(out.mean_photons(), 0.0);
            }
        }
    }

    #[test]
    fn boundary_lambda_blocks_port_three() {
        let p = LinkParams::new(3.0, 0.01, 17.0, 0.18, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        let r = Receiver::new(&p).unwrap();
        for input in nominal(&p) {
            assert_eq!(r.port_outputs(input)[2].mean_photons(), 0.0);
        }
    }

    #[test]
    fn pattern_factors_are_complete() {
        let p = LinkParams::new(1.2, 0.4, 17.0, 0.18, 0.3).unwrap();
        let r = Receiver::new(&p).unwrap();
        for label in nominal(&p) {
            let total: Complex64 = DetectionPattern::all()
                .iter()
                .map(|pat| r.pattern_factor(*pat, label, label))
                .sum();
            assert!((total.re - 1.0).abs() < 1e-12);
            assert!(total.im.abs() < 1e-14);
        }
    }

    #[test]
    fn forbidden_click_factors_are_exactly_zero() {
        let p = LinkParams::new(1.5, 0.3, 17.0, 0.18, 0.4).unwrap();
        let r = Receiver::new(&p).unwrap();
        let [u, plus, minus] = nominal(&p);
        let all_click = DetectionPattern::new([true; 3]);
        // Each nominal input has a vacuum port, so the all-click pattern is
        // impossible with factor exactly zero, diagonally and off-diagonally.
        for ket in [u, plus, minus] {
            for bra in [u, plus, minus] {
                assert_eq!(r.pattern_factor(all_click, ket, bra).norm(), 0.0);
            }
        }
        // The even herald kills every branch touching a rotated state.
        let even = DetectionPattern::new([true, true, false]);
        assert_eq!(r.pattern_factor(even, plus, plus).norm(), 0.0);
        assert_eq!(r.pattern_factor(even, minus, u).norm(), 0.0);
        assert_eq!(r.pattern_factor(even, u, plus).norm(), 0.0);
    }

    #[test]
    fn parity_factors_split_the_click() {
        let p = LinkParams::new(1.5, 0.3, 17.0, 0.18, 0.4).unwrap();
        let r = Receiver::new(&p).unwrap();
        let odd_pattern = DetectionPattern::new([false, false, true]);
        let [u, plus, minus] = nominal(&p);
        for ket in [plus, minus] {
            for bra in [plus, minus] {
                let whole = r.pattern_factor(odd_pattern, ket, bra);
                let split = r.parity_factor(ClickParity::Odd, ket, bra)
                    + r.parity_factor(ClickParity::EvenNonVacuum, ket, bra);
                assert!((whole - split).norm() < 1e-14);
            }
        }
        // Unrotated branches cannot fire the parity detector at all.
        assert_eq!(r.parity_factor(ClickParity::Odd, u, u).norm(), 0.0);
        assert_eq!(r.parity_factor(ClickParity::EvenNonVacuum, u, u).norm(), 0.0);
    }
}

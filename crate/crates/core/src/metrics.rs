//! Two-qubit entanglement and fidelity measures, plus the closed-form
//! quantities characterizing one elementary link.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;

use crate::density::TwoQubitDensity;
use crate::link::{one_minus_cos, LinkParams};

/// The four maximally entangled two-qubit states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub fn vector(self) -> Vector4<Complex64> {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        match self {
            BellState::PhiPlus => Vector4::new(h, z, z, h),
            BellState::PhiMinus => Vector4::new(h, z, z, -h),
            BellState::PsiPlus => Vector4::new(z, h, h, z),
            BellState::PsiMinus => Vector4::new(z, h, -h, z),
        }
    }
}

/// `<bell| rho |bell>`.
pub fn bell_fidelity(rho: &TwoQubitDensity, which: BellState) -> f64 {
    let v = which.vector();
    (v.adjoint() * rho.matrix() * v)[(0, 0)].re
}

/// Largest fidelity to (|01> + e^{i phi}|10>)/sqrt(2) over the correction
/// phase phi: (rho_11 + rho_22)/2 + |rho_12| in computational-basis indices.
pub fn best_phase_fidelity_odd(rho: &TwoQubitDensity) -> f64 {
    let m = rho.matrix();
    0.5 * (m[(1, 1)].re + m[(2, 2)].re) + m[(1, 2)].norm()
}

/// Largest fidelity to (|00> + e^{i phi}|11>)/sqrt(2) over phi.
pub fn best_phase_fidelity_even(rho: &TwoQubitDensity) -> f64 {
    let m = rho.matrix();
    0.5 * (m[(0, 0)].re + m[(3, 3)].re) + m[(0, 3)].norm()
}

fn sigma_yy() -> Matrix4<Complex64> {
    let o = Complex64::new(1.0, 0.0);
    let z = Complex64::new(0.0, 0.0);
    Matrix4::new(
        z, z, z, -o, //
        z, z, o, z, //
        z, o, z, z, //
        -o, z, z, z,
    )
}

/// Hermitian square root. Eigenvalues below 1e-13 of the largest are treated
/// as exact zeros of the support rather than square-rooted, so eigensolver
/// noise on rank-deficient inputs cannot inflate to sqrt(noise) size.
fn psd_sqrt(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let cut = 1e-13 * eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut d = Matrix4::<Complex64>::zeros();
    for i in 0..4 {
        let v = eig.eigenvalues[i];
        d[(i, i)] = Complex64::new(if v > cut { v.sqrt() } else { 0.0 }, 0.0);
    }
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Wootters concurrence.
///
/// The decreasing square-rooted eigenvalues of rho * rho~ (the spin-flipped
/// product) equal the singular values of B = sqrt(rho) YY sqrt(rho)*, since
/// B B^dagger = sqrt(rho) rho~ sqrt(rho) is similar to the product on its
/// support. Working with singular values keeps the error at machine-epsilon
/// scale where the Hermitian-product spectrum would only be accurate to
/// sqrt(epsilon).
pub fn concurrence(rho: &TwoQubitDensity) -> f64 {
    let s = psd_sqrt(rho.matrix());
    let b = &s * sigma_yy() * s.map(|z| z.conj());
    let mut lam: Vec<f64> = b.svd(false, false).singular_values.iter().copied().collect();
    lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (lam[0] - lam[1] - lam[2] - lam[3]).clamp(0.0, 1.0)
}

/// Binary entropy in bits; 0 at both endpoints.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -(x * x.log2() + (1.0 - x) * (1.0 - x).log2())
}

/// Entanglement of formation via the concurrence:
/// h((1 + sqrt(1 - C^2)) / 2).
pub fn entanglement_of_formation(rho: &TwoQubitDensity) -> f64 {
    let c = concurrence(rho);
    binary_entropy(0.5 * (1.0 + (1.0 - c * c).max(0.0).sqrt()))
}

/// Closed-form link quantities.
///
/// `mu_b` measures how distinguishable the two bus states stay after
/// transmission, `mu_e` how little which-path information leaked to the
/// environment; `fidelity_f = mu_e^2` is the link fidelity ceiling and `xi`
/// the deterministic rotation phase.
#[derive(Clone, Copy, Debug)]
pub struct LinkQuantities {
    pub mu_b: f64,
    pub mu_e: f64,
    pub fidelity_f: f64,
    pub xi: f64,
}

pub fn link_quantities(params: &LinkParams) -> LinkQuantities {
    let a2 = params.alpha() * params.alpha();
    let omc = one_minus_cos(params.theta());
    let g_b = (-params.eta() * a2 * omc).exp();
    let g_e = (-(1.0 - params.eta()) * a2 * omc).exp();
    let mu_b = (0.5 * (1.0 + g_b)).sqrt();
    let mu_e = (0.5 * (1.0 + g_e)).sqrt();
    LinkQuantities {
        mu_b,
        mu_e,
        fidelity_f: mu_e * mu_e,
        xi: params.xi(),
    }
}

use num_complex::Complex64;

use crate::error::{QubusError, Result};

/// Complex amplitude labeling a coherent state of one optical mode.
///
/// The label is the eigenvalue of the annihilation operator; the mean photon
/// number of the labeled state is `|amplitude|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentLabel(Complex64);

impl CoherentLabel {
    /// A label from real and imaginary parts. Rejects NaN and infinity.
    pub fn new(re: f64, im: f64) -> Result<Self> {
        Self::from_complex(Complex64::new(re, im))
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(QubusError::InvalidParameter(format!(
                "coherent label must be finite, got {z}"
            )));
        }
        Ok(Self(z))
    }

    /// A real, non-negative-or-negative amplitude on the real axis.
    /// Panics on non-finite input; use `new` for fallible construction.
    pub fn real(a: f64) -> Self {
        assert!(a.is_finite(), "coherent label must be finite");
        Self(Complex64::new(a, 0.0))
    }

    pub fn vacuum() -> Self {
        Self(Complex64::new(0.0, 0.0))
    }

    pub fn amplitude(self) -> Complex64 {
        self.0
    }

    /// Mean photon number |beta|^2.
    pub fn mean_photons(self) -> f64 {
        self.0.norm_sqr()
    }

    /// |beta| -> |s * beta| for real s (beam-splitter arm or loss scaling).
    pub fn scaled(self, s: f64) -> Self {
        Self(self.0 * s)
    }

    /// Phase-space rotation |beta| -> |beta e^{i phi}| (exact on coherent
    /// states, no residual global phase).
    pub fn rotated(self, phi: f64) -> Self {
        Self(self.0 * Complex64::new(phi.cos(), phi.sin()))
    }

    /// Shifted label beta + gamma. The displacement phase this picks up on a
    /// state vector is handled by the caller.
    pub fn shifted(self, gamma: Complex64) -> Self {
        Self(self.0 + gamma)
    }

    /// Bit-pattern key used for exact canonical merging of branches.
    /// Negative zero is normalized so `0.0` and `-0.0` merge.
    pub(crate) fn key(self) -> (u64, u64) {
        let norm = |x: f64| if x == 0.0 { 0.0f64 } else { x };
        (norm(self.0.re).to_bits(), norm(self.0.im).to_bits())
    }
}

impl std::fmt::Display for CoherentLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "|{:+.6e}{:+.6e}i>", self.0.re, self.0.im)
    }
}

/// Overlap of two coherent states,
/// `<beta1|beta2> = exp(-|beta1|^2/2 - |beta2|^2/2 + conj(beta1)*beta2)`.
///
/// Always has magnitude <= 1; equals 1 exactly for identical labels because
/// the exponent cancels to zero term by term.
pub fn coherent_overlap(beta1: CoherentLabel, beta2: CoherentLabel) -> Complex64 {
    let b1 = beta1.amplitude();
    let b2 = beta2.amplitude();
    let exponent = b1.conj() * b2 - 0.5 * b1.norm_sqr() - 0.5 * b2.norm_sqr();
    exponent.exp()
}

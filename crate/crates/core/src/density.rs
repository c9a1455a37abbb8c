use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{QubusError, Result};

/// Tolerances a matrix must satisfy to count as a physical density operator.
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const EIGENVALUE_FLOOR: f64 = -1e-10;

/// Reduced density matrix over the computational basis of `n_qubits` qubits.
///
/// Basis ordering is big-endian in the qubit index: for two qubits the rows
/// are |00>, |01>, |10>, |11> with qubit 0 the left slot.
#[derive(Clone, Debug)]
pub struct QubitDensity {
    n_qubits: usize,
    matrix: DMatrix<Complex64>,
}

impl QubitDensity {
    pub fn new(n_qubits: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QubusError::NotDensity(format!(
                "expected {dim}x{dim} matrix for {n_qubits} qubit(s), got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        validate_density(&matrix)?;
        Ok(Self { n_qubits, matrix })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn two_qubit(&self) -> Result<TwoQubitDensity> {
        if self.n_qubits != 2 {
            return Err(QubusError::NotDensity(format!(
                "expected a two-qubit state, got {} qubit(s)",
                self.n_qubits
            )));
        }
        let m = Matrix4::from_fn(|r, c| self.matrix[(r, c)]);
        Ok(TwoQubitDensity { matrix: m })
    }
}

/// 4x4 Hermitian unit-trace matrix over |00>, |01>, |10>, |11>.
#[derive(Clone, Debug)]
pub struct TwoQubitDensity {
    matrix: Matrix4<Complex64>,
}

impl TwoQubitDensity {
    /// Validates Hermiticity (1e-12), unit trace (1e-12) and spectrum
    /// (eigenvalues >= -1e-10); rejects anything unphysical.
    pub fn new(matrix: Matrix4<Complex64>) -> Result<Self> {
        let dyn_m = DMatrix::from_fn(4, 4, |r, c| matrix[(r, c)]);
        validate_density(&dyn_m)?;
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }

    /// Real spectrum in descending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(self.matrix);
        let mut vals = [0.0f64; 4];
        for (i, v) in eig.eigenvalues.iter().enumerate() {
            vals[i] = *v;
        }
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        vals
    }

    /// Tr[rho^2].
    pub fn purity(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }
}

fn validate_density(m: &DMatrix<Complex64>) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let d = (m[(r, c)] - m[(c, r)].conj()).norm();
            if d > HERMITICITY_TOL {
                return Err(QubusError::NotDensity(format!(
                    "not Hermitian: |m[{r},{c}] - conj(m[{c},{r}])| = {d:.3e}"
                )));
            }
            if !m[(r, c)].re.is_finite() || !m[(r, c)].im.is_finite() {
                return Err(QubusError::NotDensity("non-finite entry".into()));
            }
        }
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(QubusError::NotDensity(format!("trace = {tr} != 1")));
    }
    let min_eig = hermitian_eigenvalues(m)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if min_eig < EIGENVALUE_FLOOR {
        return Err(QubusError::NotDensity(format!(
            "negative eigenvalue {min_eig:.3e}"
        )));
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix (symmetrized before decomposition so
/// 1e-12-level asymmetry cannot leak imaginary parts).
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.iter().copied().collect()
}

/// Trace distance (1/2)||a - b||_1 between two-qubit states.
pub fn trace_distance(a: &TwoQubitDensity, b: &TwoQubitDensity) -> f64 {
    let d = DMatrix::from_fn(4, 4, |r, c| a.matrix[(r, c)] - b.matrix[(r, c)]);
    0.5 * hermitian_eigenvalues(&d).iter().map(|v| v.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn accepts_maximally_mixed() {
        let m = Matrix4::identity() * c(0.25);
        TwoQubitDensity::new(m).unwrap();
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = Matrix4::identity() * c(0.25);
        m[(0, 1)] = Complex64::new(0.0, 0.1);
        assert!(TwoQubitDensity::new(m).is_err());
    }

    #[test]
    fn rejects_wrong_trace() {
        let m = Matrix4::identity() * c(0.3);
        assert!(TwoQubitDensity::new(m).is_err());
    }

    #[test]
    fn rejects_negative_spectrum() {
        let mut m = Matrix4::zeros();
        m[(0, 0)] = c(1.2);
        m[(1, 1)] = c(-0.2);
        assert!(TwoQubitDensity::new(m).is_err());
    }

    #[test]
    fn trace_distance_of_orthogonal_pures_is_one() {
        let mut a = Matrix4::zeros();
        a[(0, 0)] = c(1.0);
        let mut b = Matrix4::zeros();
        b[(3, 3)] = c(1.0);
        let a = TwoQubitDensity::new(a).unwrap();
        let b = TwoQubitDensity::new(b).unwrap();
        assert!((trace_distance(&a, &b) - 1.0).abs() < 1e-14);
    }
}

//! Branch-sum algebra for systems of qubits coupled to optical modes whose
//! field factors are always coherent states.
//!
//! An operator is stored as a sum of branches
//! `c * |q_ket><q_bra| (x) |beta_ket,1..><beta_bra,1..|`.
//! Controlled rotations, linear loss, displacements and qubit-local gates all
//! map coherent labels to coherent labels, so a pipeline built from them stays
//! inside this family and every trace, probability and fidelity reduces to a
//! finite sum of Gaussian overlaps. No truncation is involved anywhere.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

use crate::coherent::{coherent_overlap, CoherentLabel};
use crate::density::QubitDensity;
use crate::error::{QubusError, Result};

/// Branches whose merged coefficient magnitude falls below this fraction of
/// the largest merged coefficient are dropped during canonicalization. The
/// threshold is relative so that heavily conditioned (unnormalized) states
/// keep their structure; exact zeros are always dropped.
pub const BRANCH_DROP_TOL: f64 = 1e-15;

/// Qubit basis indices are big-endian: qubit 0 is the most significant bit.
fn bit_of(index: usize, qubit: usize, n_qubits: usize) -> u8 {
    ((index >> (n_qubits - 1 - qubit)) & 1) as u8
}

fn with_bit(index: usize, qubit: usize, n_qubits: usize, bit: u8) -> usize {
    let p = n_qubits - 1 - qubit;
    (index & !(1 << p)) | ((bit as usize) << p)
}

fn drop_bit(index: usize, qubit: usize, n_qubits: usize) -> usize {
    let p = n_qubits - 1 - qubit;
    ((index >> (p + 1)) << p) | (index & ((1 << p) - 1))
}

fn check_qubit(qubit: usize, n_qubits: usize) -> Result<()> {
    if qubit >= n_qubits {
        return Err(QubusError::QubitIndexOutOfRange {
            index: qubit,
            count: n_qubits,
        });
    }
    Ok(())
}

fn check_mode(mode: usize, n_modes: usize) -> Result<()> {
    if mode >= n_modes {
        return Err(QubusError::ModeIndexOutOfRange {
            index: mode,
            count: n_modes,
        });
    }
    Ok(())
}

pub fn hadamard_matrix() -> Matrix2<Complex64> {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Matrix2::new(h, h, h, -h)
}

/// One term of a pure hybrid state: `amplitude * |qubit_index> (x) |labels>`.
#[derive(Clone, Debug)]
pub struct KetTerm {
    pub qubit_index: usize,
    pub mode_labels: Vec<CoherentLabel>,
    pub amplitude: Complex64,
}

/// Pure state of `n_qubits` qubits and `n_modes` modes, as a superposition of
/// computational-basis kets with coherent field factors.
#[derive(Clone, Debug)]
pub struct HybridKet {
    n_qubits: usize,
    n_modes: usize,
    terms: Vec<KetTerm>,
}

impl HybridKet {
    pub fn new(n_qubits: usize, n_modes: usize, terms: Vec<KetTerm>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        for t in &terms {
            if t.qubit_index >= dim {
                return Err(QubusError::QubitIndexOutOfRange {
                    index: t.qubit_index,
                    count: dim,
                });
            }
            if t.mode_labels.len() != n_modes {
                return Err(QubusError::InvalidParameter(format!(
                    "term carries {} mode labels, state has {} modes",
                    t.mode_labels.len(),
                    n_modes
                )));
            }
            if !t.amplitude.re.is_finite() || !t.amplitude.im.is_finite() {
                return Err(QubusError::InvalidParameter(
                    "non-finite ket amplitude".into(),
                ));
            }
        }
        Ok(Self {
            n_qubits,
            n_modes,
            terms,
        })
    }

    /// `|index>` on `n_qubits` qubits, no modes.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        Self::new(
            n_qubits,
            0,
            vec![KetTerm {
                qubit_index: index,
                mode_labels: vec![],
                amplitude: Complex64::new(1.0, 0.0),
            }],
        )
    }

    /// Single-qubit `(|0> + |1>)/sqrt(2)`.
    pub fn plus() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            n_qubits: 1,
            n_modes: 0,
            terms: vec![
                KetTerm {
                    qubit_index: 0,
                    mode_labels: vec![],
                    amplitude: a,
                },
                KetTerm {
                    qubit_index: 1,
                    mode_labels: vec![],
                    amplitude: a,
                },
            ],
        }
    }

    /// Single coherent mode `|label>`, no qubits.
    pub fn coherent(label: CoherentLabel) -> Self {
        Self {
            n_qubits: 0,
            n_modes: 1,
            terms: vec![KetTerm {
                qubit_index: 0,
                mode_labels: vec![label],
                amplitude: Complex64::new(1.0, 0.0),
            }],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn terms(&self) -> &[KetTerm] {
        &self.terms
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let nq = self.n_qubits + other.n_qubits;
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut labels = a.mode_labels.clone();
                labels.extend_from_slice(&b.mode_labels);
                terms.push(KetTerm {
                    qubit_index: (a.qubit_index << other.n_qubits) | b.qubit_index,
                    mode_labels: labels,
                    amplitude: a.amplitude * b.amplitude,
                });
            }
        }
        Self {
            n_qubits: nq,
            n_modes: self.n_modes + other.n_modes,
            terms,
        }
    }

    /// Rotates the label on `mode` by `theta` in terms where `qubit` is |1>.
    pub fn controlled_rotation(&self, qubit: usize, mode: usize, theta: f64) -> Result<Self> {
        check_qubit(qubit, self.n_qubits)?;
        check_mode(mode, self.n_modes)?;
        let mut out = self.clone();
        for t in &mut out.terms {
            if bit_of(t.qubit_index, qubit, self.n_qubits) == 1 {
                t.mode_labels[mode] = t.mode_labels[mode].rotated(theta);
            }
        }
        Ok(out)
    }

    pub fn apply_qubit_unitary(&self, qubit: usize, u: &Matrix2<Complex64>) -> Result<Self> {
        check_qubit(qubit, self.n_qubits)?;
        let mut terms = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            let b = bit_of(t.qubit_index, qubit, self.n_qubits) as usize;
            for new_bit in 0..2usize {
                let amp = t.amplitude * u[(new_bit, b)];
                if amp.norm_sqr() == 0.0 {
                    continue;
                }
                terms.push(KetTerm {
                    qubit_index: with_bit(t.qubit_index, qubit, self.n_qubits, new_bit as u8),
                    mode_labels: t.mode_labels.clone(),
                    amplitude: amp,
                });
            }
        }
        Self::new(self.n_qubits, self.n_modes, terms)
    }

    /// diag(1, e^{i phi}) on `qubit`.
    pub fn apply_qubit_phase(&self, qubit: usize, phi: f64) -> Result<Self> {
        check_qubit(qubit, self.n_qubits)?;
        let ph = Complex64::new(0.0, phi).exp();
        let mut out = self.clone();
        for t in &mut out.terms {
            if bit_of(t.qubit_index, qubit, self.n_qubits) == 1 {
                t.amplitude *= ph;
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.amplitude *= c;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n_qubits != other.n_qubits || self.n_modes != other.n_modes {
            return Err(QubusError::InvalidParameter(
                "cannot add kets of different shape".into(),
            ));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::new(self.n_qubits, self.n_modes, terms)
    }

    /// `<self|other>`.
    pub fn dot(&self, other: &Self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &self.terms {
            for b in &other.terms {
                if a.qubit_index != b.qubit_index {
                    continue;
                }
                let mut f = a.amplitude.conj() * b.amplitude;
                for m in 0..self.n_modes {
                    f *= coherent_overlap(a.mode_labels[m], b.mode_labels[m]);
                }
                acc += f;
            }
        }
        acc
    }

    pub fn norm_sqr(&self) -> f64 {
        self.dot(self).re
    }

    pub fn normalized(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 <= 0.0 {
            return Err(QubusError::ZeroSuccessProbability);
        }
        Ok(self.scaled(Complex64::new(1.0 / n2.sqrt(), 0.0)))
    }

    /// `|self><self|` as a branch sum.
    pub fn to_state(&self) -> HybridState {
        let mut branches = Vec::with_capacity(self.terms.len() * self.terms.len());
        for k in &self.terms {
            for b in &self.terms {
                branches.push(Branch {
                    ket_index: k.qubit_index,
                    bra_index: b.qubit_index,
                    ket_labels: k.mode_labels.clone(),
                    bra_labels: b.mode_labels.clone(),
                    coefficient: k.amplitude * b.amplitude.conj(),
                });
            }
        }
        HybridState {
            n_qubits: self.n_qubits,
            n_modes: self.n_modes,
            branches,
        }
        .canonicalized()
    }
}

/// One dyadic branch `coefficient * |ket><bra|`.
#[derive(Clone, Debug)]
pub struct Branch {
    pub ket_index: usize,
    pub bra_index: usize,
    pub ket_labels: Vec<CoherentLabel>,
    pub bra_labels: Vec<CoherentLabel>,
    pub coefficient: Complex64,
}

/// Operator on `n_qubits` qubits and `n_modes` modes stored as a canonical
/// branch sum. Density operators are Hermitian branch sums with unit trace;
/// unnormalized states (e.g. after a projection) carry their probability in
/// the trace.
#[derive(Clone, Debug)]
pub struct HybridState {
    n_qubits: usize,
    n_modes: usize,
    branches: Vec<Branch>,
}

type CanonKey = (usize, usize, Vec<[u64; 4]>);

fn canon_key(b: &Branch) -> CanonKey {
    let labels = b
        .ket_labels
        .iter()
        .zip(&b.bra_labels)
        .map(|(k, br)| {
            let (k0, k1) = k.key();
            let (b0, b1) = br.key();
            [k0, k1, b0, b1]
        })
        .collect();
    (b.ket_index, b.bra_index, labels)
}

impl HybridState {
    pub fn new(n_qubits: usize, n_modes: usize, branches: Vec<Branch>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        for b in &branches {
            if b.ket_index >= dim || b.bra_index >= dim {
                return Err(QubusError::QubitIndexOutOfRange {
                    index: b.ket_index.max(b.bra_index),
                    count: dim,
                });
            }
            if b.ket_labels.len() != n_modes || b.bra_labels.len() != n_modes {
                return Err(QubusError::InvalidParameter(format!(
                    "branch carries {}/{} mode labels, state has {} modes",
                    b.ket_labels.len(),
                    b.bra_labels.len(),
                    n_modes
                )));
            }
            if !b.coefficient.re.is_finite() || !b.coefficient.im.is_finite() {
                return Err(QubusError::InvalidParameter(
                    "non-finite branch coefficient".into(),
                ));
            }
        }
        Ok(Self {
            n_qubits,
            n_modes,
            branches,
        }
        .canonicalized())
    }

    pub fn pure(ket: &HybridKet) -> Self {
        ket.to_state()
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Merges branches with identical (ket, bra, labels) keys and drops
    /// merged coefficients below `BRANCH_DROP_TOL` relative to the largest
    /// one. Key order is the ordering of the label bit patterns, so the
    /// result is deterministic.
    pub fn canonicalized(&self) -> Self {
        let mut map: BTreeMap<CanonKey, Branch> = BTreeMap::new();
        for b in &self.branches {
            let key = canon_key(b);
            match map.get_mut(&key) {
                Some(existing) => existing.coefficient += b.coefficient,
                None => {
                    map.insert(key, b.clone());
                }
            }
        }
        let merged: Vec<Branch> = map.into_values().collect();
        let scale = merged
            .iter()
            .map(|b| b.coefficient.norm())
            .fold(0.0f64, f64::max);
        let branches = merged
            .into_iter()
            .filter(|b| b.coefficient.norm() > BRANCH_DROP_TOL * scale)
            .collect();
        Self {
            n_qubits: self.n_qubits,
            n_modes: self.n_modes,
            branches,
        }
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut branches = Vec::with_capacity(self.branches.len() * other.branches.len());
        for a in &self.branches {
            for b in &other.branches {
                let mut kl = a.ket_labels.clone();
                kl.extend_from_slice(&b.ket_labels);
                let mut bl = a.bra_labels.clone();
                bl.extend_from_slice(&b.bra_labels);
                branches.push(Branch {
                    ket_index: (a.ket_index << other.n_qubits) | b.ket_index,
                    bra_index: (a.bra_index << other.n_qubits) | b.bra_index,
                    ket_labels: kl,
                    bra_labels: bl,
                    coefficient: a.coefficient * b.coefficient,
                });
            }
        }
        Self {
            n_qubits: self.n_qubits + other.n_qubits,
            n_modes: self.n_modes + other.n_modes,
            branches,
        }
        .canonicalized()
    }

    /// Conditional phase-space rotation: the label on `mode` picks up
    /// e^{i theta} on every branch side whose `qubit` bit is |1>.
    pub fn controlled_rotation(&self, qubit: usize, mode: usize, theta: f64) -> Result<Self> {
        check_qubit(qubit, self.n_qubits)?;
        check_mode(mode, self.n_modes)?;
        let mut out = self.clone();
        for b in &mut out.branches {
            if bit_of(b.ket_index, qubit, self.n_qubits) == 1 {
                b.ket_labels[mode] = b.ket_labels[mode].rotated(theta);
            }
            if bit_of(b.bra_index, qubit, self.n_qubits) == 1 {
                b.bra_labels[mode] = b.bra_labels[mode].rotated(theta);
            }
        }
        Ok(out.canonicalized())
    }

    /// Linear loss on `mode` with transmission `eta`: labels are scaled by
    /// sqrt(eta) and each branch picks up the overlap of the traced-out
    /// environment parts, `<sqrt(1-eta) beta_bra | sqrt(1-eta) beta_ket>`.
    pub fn loss_channel(&self, mode: usize, eta: f64) -> Result<Self> {
        check_mode(mode, self.n_modes)?;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(QubusError::InvalidTransmission(eta));
        }
        if eta == 1.0 {
            return Ok(self.clone());
        }
        let t = eta.sqrt();
        let r = (1.0 - eta).sqrt();
        let mut out = self.clone();
        for b in &mut out.branches {
            let k = b.ket_labels[mode];
            let br = b.bra_labels[mode];
            b.coefficient *= coherent_overlap(br.scaled(r), k.scaled(r));
            b.ket_labels[mode] = k.scaled(t);
            b.bra_labels[mode] = br.scaled(t);
        }
        Ok(out.canonicalized())
    }

    pub fn apply_qubit_unitary(&self, qubit: usize, u: &Matrix2<Complex64>) -> Result<Self> {
        check_qubit(qubit, self.n_qubits)?;
        let mut branches = Vec::with_capacity(4 * self.branches.len());
        for b in &self.branches {
            let kb = bit_of(b.ket_index, qubit, self.n_qubits) as usize;
            let bb = bit_of(b.bra_index, qubit, self.n_qubits) as usize;
            for i in 0..2usize {
                for j in 0..2usize {
                    let c = b.coefficient * u[(i, kb)] * u[(j, bb)].conj();
                    if c.norm_sqr() == 0.0 {
                        continue;
                    }
                    branches.push(Branch {
                        ket_index: with_bit(b.ket_index, qubit, self.n_qubits, i as u8),
                        bra_index: with_bit(b.bra_index, qubit, self.n_qubits, j as u8),
                        ket_labels: b.ket_labels.clone(),
                        bra_labels: b.bra_labels.clone(),
                        coefficient: c,
                    });
                }
            }
        }
        Ok(Self {
            n_qubits: self.n_qubits,
            n_modes: self.n_modes,
            branches,
        }
        .canonicalized())
    }

    /// diag(1, e^{i phi}) on `qubit`. The ket and bra contributions are
    /// combined into one net factor per branch so Hermitian partner branches
    /// stay exactly conjugate.
    pub fn apply_qubit_phase(&self, qubit: usize, phi: f64) -> Result<Self> {
        check_qubit(qubit, self.n_qubits)?;
        let mut out = self.clone();
        for b in &mut out.branches {
            let net = phi
                * (bit_of(b.ket_index, qubit, self.n_qubits) as f64
                    - bit_of(b.bra_index, qubit, self.n_qubits) as f64);
            if net != 0.0 {
                b.coefficient *= Complex64::new(0.0, net).exp();
            }
        }
        Ok(out)
    }

    /// Displacement D(gamma) on `mode`:
    /// `D(gamma)|beta> = e^{i Im(gamma conj(beta))} |beta + gamma>`.
    pub fn displace_mode(&self, mode: usize, gamma: Complex64) -> Result<Self> {
        check_mode(mode, self.n_modes)?;
        let mut out = self.clone();
        for b in &mut out.branches {
            let k = b.ket_labels[mode].amplitude();
            let br = b.bra_labels[mode].amplitude();
            let phase = (gamma * k.conj()).im - (gamma * br.conj()).im;
            b.coefficient *= Complex64::new(0.0, phase).exp();
            b.ket_labels[mode] = b.ket_labels[mode].shifted(gamma);
            b.bra_labels[mode] = b.bra_labels[mode].shifted(gamma);
        }
        Ok(out.canonicalized())
    }

    /// Projects `qubit` onto |outcome>; the result is unnormalized and its
    /// trace is the outcome probability.
    pub fn project_qubit(&self, qubit: usize, outcome: u8) -> Result<Self> {
        check_qubit(qubit, self.n_qubits)?;
        if outcome > 1 {
            return Err(QubusError::InvalidParameter(format!(
                "qubit outcome must be 0 or 1, got {outcome}"
            )));
        }
        let branches = self
            .branches
            .iter()
            .filter(|b| {
                bit_of(b.ket_index, qubit, self.n_qubits) == outcome
                    && bit_of(b.bra_index, qubit, self.n_qubits) == outcome
            })
            .cloned()
            .collect();
        Ok(Self {
            n_qubits: self.n_qubits,
            n_modes: self.n_modes,
            branches,
        })
    }

    /// Partial trace over `qubit`.
    pub fn trace_qubit(&self, qubit: usize) -> Result<Self> {
        check_qubit(qubit, self.n_qubits)?;
        let nq = self.n_qubits;
        let branches = self
            .branches
            .iter()
            .filter(|b| bit_of(b.ket_index, qubit, nq) == bit_of(b.bra_index, qubit, nq))
            .map(|b| Branch {
                ket_index: drop_bit(b.ket_index, qubit, nq),
                bra_index: drop_bit(b.bra_index, qubit, nq),
                ket_labels: b.ket_labels.clone(),
                bra_labels: b.bra_labels.clone(),
                coefficient: b.coefficient,
            })
            .collect();
        Ok(Self {
            n_qubits: nq - 1,
            n_modes: self.n_modes,
            branches,
        }
        .canonicalized())
    }

    /// Partial trace over `mode`.
    pub fn trace_mode(&self, mode: usize) -> Result<Self> {
        self.contract_mode_with(mode, |ket, bra| coherent_overlap(bra, ket))
    }

    /// Contracts `mode` against an operator M: each branch loses its labels
    /// on that mode and is multiplied by `f(ket_label, bra_label)`, which
    /// must return the matrix element `<bra_label| M |ket_label>`.
    ///
    /// This realizes Tr_mode[(1 (x) M) rho] and is how measurement operators
    /// acting on a single mode (click/no-click POVMs, parity, quadrature
    /// windows) condition the remaining system.
    pub fn contract_mode_with<F>(&self, mode: usize, f: F) -> Result<Self>
    where
        F: Fn(CoherentLabel, CoherentLabel) -> Complex64,
    {
        check_mode(mode, self.n_modes)?;
        let branches = self
            .branches
            .iter()
            .map(|b| {
                let mut kl = b.ket_labels.clone();
                let mut bl = b.bra_labels.clone();
                let k = kl.remove(mode);
                let br = bl.remove(mode);
                Branch {
                    ket_index: b.ket_index,
                    bra_index: b.bra_index,
                    ket_labels: kl,
                    bra_labels: bl,
                    coefficient: b.coefficient * f(k, br),
                }
            })
            .collect();
        Ok(Self {
            n_qubits: self.n_qubits,
            n_modes: self.n_modes - 1,
            branches,
        }
        .canonicalized())
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for b in &mut out.branches {
            b.coefficient *= c;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n_qubits != other.n_qubits || self.n_modes != other.n_modes {
            return Err(QubusError::InvalidParameter(
                "cannot add states of different shape".into(),
            ));
        }
        let mut branches = self.branches.clone();
        branches.extend(other.branches.iter().cloned());
        Ok(Self {
            n_qubits: self.n_qubits,
            n_modes: self.n_modes,
            branches,
        }
        .canonicalized())
    }

    pub fn trace(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for b in &self.branches {
            if b.ket_index != b.bra_index {
                continue;
            }
            let mut f = b.coefficient;
            for m in 0..self.n_modes {
                f *= coherent_overlap(b.bra_labels[m], b.ket_labels[m]);
            }
            acc += f;
        }
        acc
    }

    /// Tr[rho^2]; 1 for pure states.
    pub fn purity(&self) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &self.branches {
            for b in &self.branches {
                if a.bra_index != b.ket_index || b.bra_index != a.ket_index {
                    continue;
                }
                let mut f = a.coefficient * b.coefficient;
                for m in 0..self.n_modes {
                    f *= coherent_overlap(a.bra_labels[m], b.ket_labels[m]);
                    f *= coherent_overlap(b.bra_labels[m], a.ket_labels[m]);
                }
                acc += f;
            }
        }
        acc.re
    }

    /// Max deviation from branch-wise Hermitian symmetry: for each branch the
    /// key-swapped partner must carry the conjugate coefficient.
    pub fn hermiticity_defect(&self) -> f64 {
        let canon = self.canonicalized();
        let mut map: BTreeMap<CanonKey, Complex64> = BTreeMap::new();
        for b in &canon.branches {
            map.insert(canon_key(b), b.coefficient);
        }
        let mut worst = 0.0f64;
        for b in &canon.branches {
            let partner = Branch {
                ket_index: b.bra_index,
                bra_index: b.ket_index,
                ket_labels: b.bra_labels.clone(),
                bra_labels: b.ket_labels.clone(),
                coefficient: b.coefficient,
            };
            let d = match map.get(&canon_key(&partner)) {
                Some(c) => (c - b.coefficient.conj()).norm(),
                None => b.coefficient.norm(),
            };
            worst = worst.max(d);
        }
        worst
    }

    /// Reduced qubit density matrix after tracing out every mode.
    pub fn trace_out_modes(&self) -> Result<QubitDensity> {
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        for b in &self.branches {
            let mut f = b.coefficient;
            for mm in 0..self.n_modes {
                f *= coherent_overlap(b.bra_labels[mm], b.ket_labels[mm]);
            }
            m[(b.ket_index, b.bra_index)] += f;
        }
        // Symmetrize away <=1e-15-level branch-drop asymmetry before the
        // density-matrix validity checks.
        let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        QubitDensity::new(self.n_qubits, m)
    }

    /// `<psi| rho |psi>`.
    pub fn ket_expectation(&self, psi: &HybridKet) -> Result<Complex64> {
        if psi.n_qubits != self.n_qubits || psi.n_modes != self.n_modes {
            return Err(QubusError::InvalidParameter(
                "expectation ket has a different shape than the state".into(),
            ));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for b in &self.branches {
            for t1 in &psi.terms {
                if t1.qubit_index != b.ket_index {
                    continue;
                }
                for t2 in &psi.terms {
                    if t2.qubit_index != b.bra_index {
                        continue;
                    }
                    let mut f = b.coefficient * t1.amplitude.conj() * t2.amplitude;
                    for m in 0..self.n_modes {
                        f *= coherent_overlap(t1.mode_labels[m], b.ket_labels[m]);
                        f *= coherent_overlap(b.bra_labels[m], t2.mode_labels[m]);
                    }
                    acc += f;
                }
            }
        }
        Ok(acc)
    }

    /// Rescales so the trace is exactly 1. Errors on non-positive trace.
    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr.im.abs() > 1e-10 * tr.re.abs().max(1.0) {
            return Err(QubusError::NumericAssertion(format!(
                "state trace has a non-negligible imaginary part: {tr}"
            )));
        }
        if tr.re <= 0.0 {
            return Err(QubusError::ZeroSuccessProbability);
        }
        Ok(self.scaled(Complex64::new(1.0 / tr.re, 0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// `(|0> + |1>)|alpha> / sqrt(2)` before any interaction.
    fn seed_ket(alpha: f64) -> HybridKet {
        HybridKet::plus().tensor(&HybridKet::coherent(CoherentLabel::real(alpha)))
    }

    #[test]
    fn controlled_rotation_splits_labels() {
        let theta = 0.01;
        let st = HybridState::pure(&seed_ket(2.0))
            .controlled_rotation(0, 0, theta)
            .unwrap();
        assert_eq!(st.n_branches(), 4);
        assert!((st.trace().re - 1.0).abs() < 1e-14);
        assert!((st.purity() - 1.0).abs() < 1e-12);
        for b in st.branches() {
            let expect = if bit_of(b.ket_index, 0, 1) == 1 {
                CoherentLabel::real(2.0).rotated(theta)
            } else {
                CoherentLabel::real(2.0)
            };
            assert!((b.ket_labels[0].amplitude() - expect.amplitude()).norm() < 1e-15);
        }
    }

    #[test]
    fn rotation_roundtrip_restores_state() {
        let st = HybridState::pure(&seed_ket(1.3));
        let back = st
            .controlled_rotation(0, 0, 0.7)
            .unwrap()
            .controlled_rotation(0, 0, -0.7)
            .unwrap();
        assert_eq!(back.n_branches(), st.n_branches());
        for (a, b) in st.branches().iter().zip(back.branches()) {
            assert!((a.coefficient - b.coefficient).norm() < 1e-14);
            assert!((a.ket_labels[0].amplitude() - b.ket_labels[0].amplitude()).norm() < 1e-14);
        }
    }

    #[test]
    fn lossless_channel_is_identity() {
        let st = HybridState::pure(&seed_ket(1.0))
            .controlled_rotation(0, 0, 0.3)
            .unwrap();
        let out = st.loss_channel(0, 1.0).unwrap();
        assert_eq!(out.n_branches(), st.n_branches());
        for (a, b) in st.branches().iter().zip(out.branches()) {
            assert!((a.coefficient - b.coefficient).norm() == 0.0);
        }
    }

    #[test]
    fn loss_preserves_trace_and_damps_coherence() {
        let (alpha, theta, eta) = (2.0, 0.01, 0.4);
        let st = HybridState::pure(&seed_ket(alpha))
            .controlled_rotation(0, 0, theta)
            .unwrap();
        let out = st.loss_channel(0, eta).unwrap();
        assert!((out.trace().re - 1.0).abs() < 1e-12);
        assert_eq!(out.hermiticity_defect(), 0.0);
        // Cross branch |0><1| keeps coefficient 1/2 times the environment
        // overlap, whose magnitude is e^{-(1-eta) alpha^2 (1-cos theta)}.
        let g_e = (-(1.0 - eta) * alpha * alpha * (1.0 - theta.cos())).exp();
        let cross = out
            .branches()
            .iter()
            .find(|b| b.ket_index == 0 && b.bra_index == 1)
            .unwrap();
        assert!((cross.coefficient.norm() - 0.5 * g_e).abs() < 1e-14);
        // And the labels shrank to sqrt(eta) alpha.
        assert!((cross.ket_labels[0].amplitude().norm() - eta.sqrt() * alpha).abs() < 1e-14);
    }

    #[test]
    fn loss_rejects_bad_transmission() {
        let st = HybridState::pure(&seed_ket(1.0));
        assert!(st.loss_channel(0, 0.0).is_err());
        assert!(st.loss_channel(0, 1.1).is_err());
    }

    #[test]
    fn reduced_state_of_product_is_projector() {
        let ket = HybridKet::basis(1, 0)
            .unwrap()
            .tensor(&HybridKet::coherent(CoherentLabel::real(1.7)));
        let rho = HybridState::pure(&ket).trace_out_modes().unwrap();
        let m = rho.matrix();
        assert!((m[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(m[(0, 1)].norm() < 1e-14);
        assert!(m[(1, 1)].norm() < 1e-14);
    }

    #[test]
    fn hadamard_twice_is_identity() {
        let st = HybridState::pure(&seed_ket(0.8))
            .controlled_rotation(0, 0, 0.2)
            .unwrap();
        let h = hadamard_matrix();
        let out = st
            .apply_qubit_unitary(0, &h)
            .unwrap()
            .apply_qubit_unitary(0, &h)
            .unwrap();
        assert_eq!(out.n_branches(), st.n_branches());
        for (a, b) in st.branches().iter().zip(out.branches()) {
            assert!((a.coefficient - b.coefficient).norm() < 1e-15);
        }
    }

    #[test]
    fn projection_probabilities_sum_to_one() {
        let st = HybridState::pure(&seed_ket(1.1))
            .controlled_rotation(0, 0, 0.4)
            .unwrap()
            .apply_qubit_unitary(0, &hadamard_matrix())
            .unwrap();
        let p0 = st.project_qubit(0, 0).unwrap().trace().re;
        let p1 = st.project_qubit(0, 1).unwrap().trace().re;
        assert!((p0 + p1 - 1.0).abs() < 1e-12);
        assert!(p0 > 0.0 && p1 > 0.0);
    }

    #[test]
    fn trace_qubit_matches_projection_sum() {
        let st = HybridState::pure(&seed_ket(0.9))
            .controlled_rotation(0, 0, 0.5)
            .unwrap();
        let traced = st.trace_qubit(0).unwrap();
        assert!((traced.trace().re - 1.0).abs() < 1e-12);
        assert_eq!(traced.n_qubits(), 0);
    }

    #[test]
    fn displacement_to_vacuum() {
        let ket = HybridKet::coherent(CoherentLabel::real(1.5));
        let st = HybridState::pure(&ket)
            .displace_mode(0, c(-1.5, 0.0))
            .unwrap();
        let b = &st.branches()[0];
        assert_eq!(b.ket_labels[0].amplitude(), c(0.0, 0.0));
        assert!((st.trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn displacement_composition_phase_cancels_in_trace() {
        let ket =
            HybridKet::plus().tensor(&HybridKet::coherent(CoherentLabel::new(0.4, 0.9).unwrap()));
        let st = HybridState::pure(&ket)
            .controlled_rotation(0, 0, 1.1)
            .unwrap();
        let moved = st
            .displace_mode(0, c(0.3, -0.2))
            .unwrap()
            .displace_mode(0, c(-0.3, 0.2))
            .unwrap();
        assert!((moved.trace().re - 1.0).abs() < 1e-12);
        assert!(moved.hermiticity_defect() < 1e-14);
        assert!((moved.purity() - st.purity()).abs() < 1e-12);
    }

    #[test]
    fn canonicalize_merges_duplicates() {
        let label = CoherentLabel::real(1.0);
        let mk = |coeff| Branch {
            ket_index: 0,
            bra_index: 0,
            ket_labels: vec![label],
            bra_labels: vec![label],
            coefficient: coeff,
        };
        let st = HybridState::new(1, 1, vec![mk(c(0.5, 0.0)), mk(c(0.5, 0.0))]).unwrap();
        assert_eq!(st.n_branches(), 1);
        assert_eq!(st.branches()[0].coefficient, c(1.0, 0.0));

        let cancel = HybridState::new(1, 1, vec![mk(c(0.5, 0.0)), mk(c(-0.5, 0.0))]).unwrap();
        assert_eq!(cancel.n_branches(), 0);
    }

    #[test]
    fn ket_expectation_matches_projector_weight() {
        let ket = seed_ket(1.2)
            .controlled_rotation(0, 0, 0.25)
            .unwrap()
            .normalized()
            .unwrap();
        let rho = HybridState::pure(&ket);
        let f = rho.ket_expectation(&ket).unwrap();
        assert!((f.re - 1.0).abs() < 1e-12);
        assert!(f.im.abs() < 1e-12);
    }

    #[test]
    fn tensor_orders_qubits_big_endian() {
        let a = HybridKet::basis(1, 1).unwrap();
        let b = HybridKet::basis(1, 0).unwrap();
        let st = HybridState::pure(&a.tensor(&b));
        // |1> (x) |0> = |10> = index 2.
        assert_eq!(st.branches()[0].ket_index, 2);
    }
}

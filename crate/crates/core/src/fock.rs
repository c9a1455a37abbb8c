//! Truncated photon-number-basis simulator used as an independent
//! cross-check of the coherent-dyad algebra.
//!
//! Nothing in here knows that the states passing through are coherent:
//! beam splitters act blockwise on total-photon sectors, displacements are
//! matrix exponentials of the displacement generator, loss is a physical
//! beam splitter into a kept environment mode, and detectors are diagonal
//! photon-number masks. Agreement with the closed forms is therefore a real
//! check, not a tautology.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;

use crate::coherent::CoherentLabel;
use crate::density::TwoQubitDensity;
use crate::error::{QubusError, Result};
use crate::link::LinkParams;
use crate::usd::homodyne::gauss_legendre_32;

/// Tail occupancy (top three levels of a mode) above this after a
/// displacement means the truncation was too small for the amplitudes in
/// play; the simulation refuses to continue silently.
const LEAK_TOL: f64 = 1e-8;

/// Default number of retained photon levels for a given mean photon number:
/// `n + 10 sqrt(n + 1) + 20`, a guard band wide enough that the discarded
/// coherent-state tail is below 1e-12.
pub fn default_truncation_levels(mean_photons: f64) -> usize {
    (mean_photons + 10.0 * (mean_photons + 1.0).sqrt() + 20.0).ceil() as usize
}

/// Default retained levels for a coherent amplitude.
pub fn default_truncation(beta: CoherentLabel) -> usize {
    default_truncation_levels(beta.mean_photons())
}

/// Dense multimode state vector in the photon-number basis, row-major with
/// the first mode slowest. Mode dimensions may differ.
#[derive(Clone, Debug)]
pub struct FockVector {
    dims: Vec<usize>,
    amps: Vec<Complex64>,
}

impl FockVector {
    /// All modes in their zero-photon level.
    pub fn vacuum(dims: &[usize]) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "empty mode dimension");
        let mut amps = vec![Complex64::new(0.0, 0.0); dims.iter().product()];
        amps[0] = Complex64::new(1.0, 0.0);
        Self {
            dims: dims.to_vec(),
            amps,
        }
    }

    fn single_mode(amps: Vec<Complex64>) -> Self {
        Self {
            dims: vec![amps.len()],
            amps,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.dims != other.dims {
            return Err(QubusError::InvalidParameter(
                "inner product between different mode layouts".into(),
            ));
        }
        Ok(self
            .amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn scaled(mut self, c: Complex64) -> Self {
        for a in &mut self.amps {
            *a *= c;
        }
        self
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Self { dims, amps }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for m in (0..self.dims.len().saturating_sub(1)).rev() {
            s[m] = s[m + 1] * self.dims[m + 1];
        }
        s
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.dims.len() {
            return Err(QubusError::ModeIndexOutOfRange {
                index: mode,
                count: self.dims.len(),
            });
        }
        Ok(())
    }

    /// Calls `f` with the flat offset of every index combination that has
    /// all `fixed` axes at level zero.
    fn for_each_base(&self, fixed: &[usize], mut f: impl FnMut(usize)) {
        let strides = self.strides();
        let free: Vec<usize> = (0..self.dims.len()).filter(|m| !fixed.contains(m)).collect();
        let mut idx = vec![0usize; free.len()];
        loop {
            let base: usize = free
                .iter()
                .zip(idx.iter())
                .map(|(&m, &i)| i * strides[m])
                .sum();
            f(base);
            let mut axis = free.len();
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.dims[free[axis]] {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }

    /// Multiplies level `n` of `mode` by `e^{i n theta}` (phase-space
    /// rotation of that mode).
    pub fn apply_phase_rotation(&self, mode: usize, theta: f64) -> Result<Self> {
        self.check_mode(mode)?;
        let d = self.dims[mode];
        let stride = self.strides()[mode];
        let phases: Vec<Complex64> = (0..d)
            .map(|n| Complex64::new(0.0, n as f64 * theta).exp())
            .collect();
        let mut out = self.clone();
        self.for_each_base(&[mode], |base| {
            for (n, ph) in phases.iter().enumerate() {
                out.amps[base + n * stride] *= ph;
            }
        });
        Ok(out)
    }

    /// Applies a dense single-mode operator along one axis.
    pub fn apply_mode_matrix(&self, mode: usize, op: &DMatrix<Complex64>) -> Result<Self> {
        self.check_mode(mode)?;
        let d = self.dims[mode];
        if op.nrows() != d || op.ncols() != d {
            return Err(QubusError::InvalidParameter(format!(
                "operator is {}x{} but the mode has {} levels",
                op.nrows(),
                op.ncols(),
                d
            )));
        }
        let stride = self.strides()[mode];
        let mut out = self.clone();
        let mut column = vec![Complex64::new(0.0, 0.0); d];
        self.for_each_base(&[mode], |base| {
            for (n, slot) in column.iter_mut().enumerate() {
                *slot = self.amps[base + n * stride];
            }
            for r in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, v) in column.iter().enumerate() {
                    acc += op[(r, c)] * v;
                }
                out.amps[base + r * stride] = acc;
            }
        });
        Ok(out)
    }

    /// Displaces one mode by `gamma` through the exponentiated generator,
    /// failing if probability piles up against the truncation edge.
    pub fn apply_displacement(&self, mode: usize, gamma: Complex64) -> Result<Self> {
        self.check_mode(mode)?;
        let op = displacement_matrix(self.dims[mode], gamma);
        let out = self.apply_mode_matrix(mode, &op)?;
        out.check_tail(mode)?;
        Ok(out)
    }

    fn check_tail(&self, mode: usize) -> Result<()> {
        let occ = self.mode_occupation(mode)?;
        let total: f64 = occ.iter().sum();
        let tail: f64 = occ.iter().rev().take(3).sum();
        if tail > LEAK_TOL * total.max(1e-300) {
            return Err(QubusError::NormLeakage { leak: tail / total });
        }
        Ok(())
    }

    /// Two-mode beam splitter, convention `|beta, 0> -> |beta cos(phi),
    /// beta sin(phi)>` (mode `a` is the kept arm).
    pub fn apply_beamsplitter(&self, a: usize, b: usize, phi: f64) -> Result<Self> {
        self.check_mode(a)?;
        self.check_mode(b)?;
        if a == b {
            return Err(QubusError::InvalidParameter(
                "beam splitter needs two distinct modes".into(),
            ));
        }
        let blocks = bs_sector_blocks(self.dims[a], self.dims[b], phi);
        Ok(self.apply_bs_blocks(a, b, &blocks))
    }

    fn apply_bs_blocks(&self, a: usize, b: usize, blocks: &[DMatrix<Complex64>]) -> Self {
        let strides = self.strides();
        let (sa, sb) = (strides[a], strides[b]);
        let (da, db) = (self.dims[a], self.dims[b]);
        let mut out = self.clone();
        for v in &mut out.amps {
            *v = Complex64::new(0.0, 0.0);
        }
        let mut sector = vec![Complex64::new(0.0, 0.0); da.min(db).max(1)];
        self.for_each_base(&[a, b], |base| {
            for (n, block) in blocks.iter().enumerate() {
                let kmin = n.saturating_sub(db - 1);
                let m = block.nrows();
                if sector.len() < m {
                    sector.resize(m, Complex64::new(0.0, 0.0));
                }
                for j in 0..m {
                    let k = kmin + j;
                    sector[j] = self.amps[base + k * sa + (n - k) * sb];
                }
                for r in 0..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, v) in sector.iter().take(m).enumerate() {
                        acc += block[(r, j)] * v;
                    }
                    let k = kmin + r;
                    out.amps[base + k * sa + (n - k) * sb] = acc;
                }
            }
        });
        out
    }

    /// Linear loss on one mode: splits into a fresh environment mode
    /// (appended last) with amplitude transmission `sqrt(eta)`, keeping the
    /// environment so the result stays a pure-state purification.
    pub fn apply_loss(&self, mode: usize, eta: f64) -> Result<Self> {
        self.apply_loss_with_levels(mode, eta, self.dims.get(mode).copied().unwrap_or(1) - 1)
    }

    /// `apply_loss` with an explicit environment truncation.
    pub fn apply_loss_with_levels(&self, mode: usize, eta: f64, env_levels: usize) -> Result<Self> {
        self.check_mode(mode)?;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(QubusError::InvalidTransmission(eta));
        }
        let joined = self.tensor(&FockVector::vacuum(&[env_levels + 1]));
        let phi = eta.sqrt().min(1.0).acos();
        joined.apply_beamsplitter(mode, self.dims.len(), phi)
    }

    /// Photon-number distribution of one mode (marginal over the rest).
    pub fn mode_occupation(&self, mode: usize) -> Result<Vec<f64>> {
        self.check_mode(mode)?;
        let d = self.dims[mode];
        let stride = self.strides()[mode];
        let mut occ = vec![0.0; d];
        self.for_each_base(&[mode], |base| {
            for (n, slot) in occ.iter_mut().enumerate() {
                *slot += self.amps[base + n * stride].norm_sqr();
            }
        });
        Ok(occ)
    }

    /// Mean photon number of one mode.
    pub fn mean_photons(&self, mode: usize) -> Result<f64> {
        Ok(self
            .mode_occupation(mode)?
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum())
    }

    /// Joint on/off-detector distribution over the listed modes. The first
    /// listed mode is the most significant result bit (1 = click).
    pub fn onoff_distribution(&self, modes: &[usize]) -> Result<Vec<f64>> {
        for &m in modes {
            self.check_mode(m)?;
        }
        let mut probs = vec![0.0; 1 << modes.len()];
        let mut idx = vec![0usize; self.dims.len()];
        for amp in &self.amps {
            let mut pattern = 0usize;
            for &m in modes {
                pattern = (pattern << 1) | usize::from(idx[m] > 0);
            }
            probs[pattern] += amp.norm_sqr();
            let mut axis = self.dims.len();
            while axis > 0 {
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Ok(probs)
    }
}

/// Truncated coherent state with the default-rule precondition.
pub fn prepare_coherent(beta: CoherentLabel, levels: usize) -> Result<FockVector> {
    let required = default_truncation(beta);
    if levels < required {
        return Err(QubusError::TruncationTooSmall {
            required,
            given: levels,
        });
    }
    let amp = beta.amplitude();
    let mut amps = Vec::with_capacity(levels + 1);
    let mut c = Complex64::new((-0.5 * beta.mean_photons()).exp(), 0.0);
    amps.push(c);
    for n in 1..=levels {
        c *= amp / (n as f64).sqrt();
        amps.push(c);
    }
    let v = FockVector::single_mode(amps);
    let leak = (1.0 - v.norm_sqr()).abs();
    if leak > 1e-12 {
        return Err(QubusError::NormLeakage { leak });
    }
    Ok(v)
}

/// Dense matrix of `D(gamma) = exp(gamma a^dag - conj(gamma) a)` on the
/// truncated level space, via eigendecomposition of the Hermitian generator.
pub fn displacement_matrix(dim: usize, gamma: Complex64) -> DMatrix<Complex64> {
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for n in 0..dim.saturating_sub(1) {
        let g = Complex64::new(0.0, -1.0) * gamma * ((n + 1) as f64).sqrt();
        h[(n + 1, n)] = g;
        h[(n, n + 1)] = g.conj();
    }
    let eig = nalgebra::SymmetricEigen::new(h);
    let phases = DMatrix::<Complex64>::from_diagonal(
        &eig.eigenvalues.map(|l| Complex64::new(0.0, l).exp()),
    );
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// Per-total-photon-number unitary blocks of the beam splitter: the sector
/// generator is conjugated to a real symmetric tridiagonal matrix, which a
/// real eigensolver handles exactly enough for 1e-12-level unitarity.
fn bs_sector_blocks(da: usize, db: usize, phi: f64) -> Vec<DMatrix<Complex64>> {
    let mut blocks = Vec::with_capacity(da + db - 1);
    for n in 0..=(da - 1) + (db - 1) {
        let kmin = n.saturating_sub(db - 1);
        let kmax = (da - 1).min(n);
        let m = kmax + 1 - kmin;
        let mut t = DMatrix::<f64>::zeros(m, m);
        for j in 0..m.saturating_sub(1) {
            let k = kmin + j;
            let c = phi * (((k + 1) * (n - k)) as f64).sqrt();
            t[(j, j + 1)] = c;
            t[(j + 1, j)] = c;
        }
        let eig = nalgebra::SymmetricEigen::new(t);
        let vc = eig.eigenvectors.map(Complex64::from);
        let phases = DMatrix::<Complex64>::from_diagonal(
            &eig.eigenvalues.map(|l| Complex64::new(0.0, -l).exp()),
        );
        let core = &vc * phases * vc.transpose();
        let mut u = core.clone();
        for r in 0..m {
            for c in 0..m {
                // i^(c - r) from undoing the tridiagonalizing conjugation.
                let q = (4 + (c as i64 - r as i64).rem_euclid(4)) as u32 % 4;
                let factor = match q {
                    0 => Complex64::new(1.0, 0.0),
                    1 => Complex64::new(0.0, 1.0),
                    2 => Complex64::new(-1.0, 0.0),
                    _ => Complex64::new(0.0, -1.0),
                };
                u[(r, c)] = core[(r, c)] * factor;
            }
        }
        blocks.push(u);
    }
    blocks
}

/// Matrix of the p-quadrature window operator `integral over |p| <=
/// halfwidth of |p><p| dp` in the number basis, using `<p|n> = (-i)^n h_n(p)`
/// with the normalized Hermite functions h_n.
pub fn quadrature_window_matrix(dim: usize, halfwidth: f64) -> DMatrix<Complex64> {
    let reach = (2.0 * dim as f64).sqrt() + 8.0;
    let lo = (-halfwidth).max(-reach);
    let hi = halfwidth.min(reach);
    let mut real = DMatrix::<f64>::zeros(dim, dim);
    if lo < hi {
        let panels = ((hi - lo) / 0.5).ceil() as usize;
        let step = (hi - lo) / panels as f64;
        let (nodes, weights) = gauss_legendre_32();
        let mut h = vec![0.0; dim];
        for k in 0..panels {
            let mid = lo + (k as f64 + 0.5) * step;
            for (t, w) in nodes.iter().zip(weights.iter()) {
                let p = mid + 0.5 * step * t;
                hermite_functions(p, &mut h);
                let scale = 0.5 * step * w;
                for r in 0..dim {
                    for c in 0..=r {
                        real[(r, c)] += scale * h[r] * h[c];
                    }
                }
            }
        }
    }
    let mut out = DMatrix::<Complex64>::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            let v = if c <= r { real[(r, c)] } else { real[(c, r)] };
            // i^(r - c) phase between <m|p> and <p|n>.
            let q = (4 + (r as i64 - c as i64).rem_euclid(4)) as u32 % 4;
            out[(r, c)] = match q {
                0 => Complex64::new(v, 0.0),
                1 => Complex64::new(0.0, v),
                2 => Complex64::new(-v, 0.0),
                _ => Complex64::new(0.0, -v),
            };
        }
    }
    out
}

/// Normalized Hermite functions h_0..h_(len-1) at p, by upward recurrence.
fn hermite_functions(p: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * p * p).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * p * out[0];
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * p * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

/// Optical (bus, environment) pure components of the link state, one per
/// two-qubit basis index (qubit 0 the high bit), built through the oracle's
/// own elements. The 1/2 weight of the two |+> preparations and the local
/// phase gates are folded into the scalars.
pub fn oracle_link_vectors(params: &LinkParams) -> Result<[FockVector; 4]> {
    let alpha = CoherentLabel::real(params.alpha());
    let s = params.eta().sqrt() * params.alpha();
    let bus_levels = default_truncation(alpha)
        .max(default_truncation_levels(4.0 * s * s * params.lambda_bs() * params.lambda_bs()));
    let env_levels = default_truncation_levels((1.0 - params.eta()) * alpha.mean_photons());
    let base = prepare_coherent(alpha, bus_levels)?;
    let xi = params.xi();
    let mut out = Vec::with_capacity(4);
    for q in 0..4usize {
        let bit_a = q & 2 != 0;
        let bit_c = q & 1 != 0;
        let mut v = base.clone();
        if bit_a {
            v = v.apply_phase_rotation(0, params.theta())?;
        }
        v = v.apply_loss_with_levels(0, params.eta(), env_levels)?;
        if bit_c {
            v = v.apply_phase_rotation(0, -params.theta())?;
        }
        let mut scalar = Complex64::new(0.5, 0.0);
        if bit_a {
            scalar *= Complex64::new(0.0, -xi).exp();
        }
        if bit_c {
            scalar *= Complex64::new(0.0, params.eta() * xi).exp();
        }
        out.push(v.scaled(scalar));
    }
    Ok([
        out.remove(0),
        out.remove(0),
        out.remove(0),
        out.remove(0),
    ])
}

/// Everything the oracle can say about one link state pushed through the
/// click receiver: exact-to-truncation pattern probabilities, the reduced
/// pair state, and the conditional pair states of the three useful heralds.
pub struct OracleLinkReport {
    pub pattern_probabilities: [f64; 8],
    pub qubit_state: TwoQubitDensity,
    pub even_probability: f64,
    pub even_conditional: Option<TwoQubitDensity>,
    pub odd_probability: f64,
    pub odd_conditional: Option<TwoQubitDensity>,
    pub parity_odd_probability: f64,
    pub parity_odd_conditional: Option<TwoQubitDensity>,
}

/// Receiver port labels before displacement are bounded by twice the bus
/// amplitude on each arm; size each port axis accordingly.
fn receiver_port_levels(weight: f64, s: f64) -> usize {
    default_truncation_levels(4.0 * weight * weight * s * s)
}

struct ReceiverElements {
    p2_levels: usize,
    p3_levels: usize,
    blocks_a: Vec<DMatrix<Complex64>>,
    blocks_b: Vec<DMatrix<Complex64>>,
    disp1: DMatrix<Complex64>,
    disp2: DMatrix<Complex64>,
    disp3: DMatrix<Complex64>,
}

impl ReceiverElements {
    fn new(params: &LinkParams, bus_dim: usize) -> Self {
        let lam = params.lambda_bs();
        let t3 = (1.0 - 2.0 * lam * lam).max(0.0).sqrt();
        let s = params.eta().sqrt() * params.alpha();
        let p2_levels = receiver_port_levels(lam, s);
        let p3_levels = receiver_port_levels(t3, s);
        let phi_a = lam.asin();
        let denom = (1.0 - lam * lam).sqrt();
        let phi_b = (t3 / denom).min(1.0).asin();
        let rot = Complex64::new(params.theta().cos(), params.theta().sin());
        let d1 = -lam * s * rot;
        let d2 = -lam * s * rot.conj();
        let d3 = Complex64::new(-t3 * s, 0.0);
        Self {
            p2_levels,
            p3_levels,
            blocks_a: bs_sector_blocks(bus_dim, p2_levels + 1, phi_a),
            blocks_b: bs_sector_blocks(bus_dim, p3_levels + 1, phi_b),
            disp1: displacement_matrix(bus_dim, d1),
            disp2: displacement_matrix(p2_levels + 1, d2),
            disp3: displacement_matrix(p3_levels + 1, d3),
        }
    }

    /// Splits one single-mode bus vector into the three displaced ports;
    /// output axes are (port1, port2, port3).
    fn pass(&self, bus: &FockVector) -> Result<FockVector> {
        let mut v = bus.tensor(&FockVector::vacuum(&[self.p2_levels + 1]));
        v = v.apply_bs_blocks(0, 1, &self.blocks_a);
        v = v.apply_mode_matrix(1, &self.disp2)?;
        v.check_tail(1)?;
        v = v.tensor(&FockVector::vacuum(&[self.p3_levels + 1]));
        v = v.apply_bs_blocks(0, 2, &self.blocks_b);
        v = v.apply_mode_matrix(2, &self.disp3)?;
        v.check_tail(2)?;
        v = v.apply_mode_matrix(0, &self.disp1)?;
        v.check_tail(0)?;
        Ok(v)
    }
}

/// Click-pattern distribution of the receiver fed with one known coherent
/// input (pattern order matches the closed-form convention: port 1 is the
/// most significant bit).
pub fn oracle_receiver_click_distribution(
    input: CoherentLabel,
    params: &LinkParams,
) -> Result<[f64; 8]> {
    let lam = params.lambda_bs();
    let s = params.eta().sqrt() * params.alpha();
    let levels = default_truncation(input)
        .max(default_truncation_levels(4.0 * lam * lam * s * s))
        .max(default_truncation_levels(input.mean_photons() * 2.0 + 2.0 * s * s));
    let elements = ReceiverElements::new(params, levels + 1);
    let split = elements.pass(&prepare_coherent(input, levels)?)?;
    let probs = split.onoff_distribution(&[0, 1, 2])?;
    Ok([
        probs[0], probs[1], probs[2], probs[3], probs[4], probs[5], probs[6], probs[7],
    ])
}

/// `<a|Pi_pattern|b>` for all eight on/off patterns of a three-port vector
/// pair, plus the odd-photon part of the third-port-only pattern.
fn pattern_sums(a: &FockVector, b: &FockVector) -> Result<([Complex64; 8], Complex64)> {
    if a.dims() != b.dims() {
        return Err(QubusError::InvalidParameter(
            "pattern sums between different mode layouts".into(),
        ));
    }
    let dims = a.dims();
    let mut sums = [Complex64::new(0.0, 0.0); 8];
    let mut parity_odd = Complex64::new(0.0, 0.0);
    let (av, bv) = (a.amplitudes(), b.amplitudes());
    let mut i = 0usize;
    for n1 in 0..dims[0] {
        for n2 in 0..dims[1] {
            for n3 in 0..dims[2] {
                let z = av[i].conj() * bv[i];
                let pattern = (usize::from(n1 > 0) << 2)
                    | (usize::from(n2 > 0) << 1)
                    | usize::from(n3 > 0);
                sums[pattern] += z;
                if pattern == 0b001 && n3 % 2 == 1 {
                    parity_odd += z;
                }
                i += 1;
            }
        }
    }
    Ok((sums, parity_odd))
}

/// Runs the full link + receiver pipeline in the number basis. The
/// environment mode is handled exactly by summing its photon-number slices
/// through the receiver.
pub fn oracle_receiver_report(params: &LinkParams) -> Result<OracleLinkReport> {
    let vectors = oracle_link_vectors(params)?;
    let bus_dim = vectors[0].dims()[0];
    let env_dim = vectors[0].dims()[1];
    let elements = ReceiverElements::new(params, bus_dim);

    // Environment levels worth keeping: anything above float dust in any
    // qubit component.
    let mut env_mass = vec![0.0; env_dim];
    for v in &vectors {
        for (e, slot) in env_mass.iter_mut().enumerate() {
            for n in 0..bus_dim {
                *slot += v.amplitudes()[n * env_dim + e].norm_sqr();
            }
        }
    }

    // The receiver pass dominates the cost, and after the loss coupler each
    // optical component factors (up to truncation rounding) into a bus part
    // times an environment part, so the environment slices of one vector are
    // nearly always parallel to each other. Decompose every slice against the
    // directions already pushed through the receiver and reuse those outputs;
    // a slice only pays for a fresh pass when its residual says it really is
    // a new direction. Reuse is pure linearity, so no separability is assumed.
    let kept: Vec<usize> = (0..env_dim).filter(|&e| env_mass[e] >= 1e-15).collect();
    let mut directions: Vec<Vec<FockVector>> = vec![Vec::new(); 4];
    let mut outputs: Vec<Vec<FockVector>> = vec![Vec::new(); 4];
    // Per vector, per kept slice: which direction and with what coefficient.
    let mut decomp: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); 4];
    for (q, v) in vectors.iter().enumerate() {
        for &e in &kept {
            let column: Vec<Complex64> = (0..bus_dim)
                .map(|n| v.amplitudes()[n * env_dim + e])
                .collect();
            let slice = FockVector::single_mode(column);
            let mass = slice.norm_sqr();
            if mass < 1e-32 {
                decomp[q].push((0, Complex64::new(0.0, 0.0)));
                continue;
            }
            let mut matched = None;
            for (k, d) in directions[q].iter().enumerate() {
                let c = d.inner(&slice)?;
                if mass - c.norm_sqr() <= 1e-20 * mass {
                    matched = Some((k, c));
                    break;
                }
            }
            let entry = match matched {
                Some(hit) => hit,
                None => {
                    let coeff = Complex64::new(mass.sqrt(), 0.0);
                    let direction = slice.scaled(Complex64::new(1.0 / mass.sqrt(), 0.0));
                    outputs[q].push(elements.pass(&direction)?);
                    directions[q].push(direction);
                    (directions[q].len() - 1, coeff)
                }
            };
            decomp[q].push(entry);
        }
    }

    let mut patterns = [0.0f64; 8];
    let mut gram_full = Matrix4::<Complex64>::zeros();
    let mut gram_even = Matrix4::<Complex64>::zeros();
    let mut gram_odd = Matrix4::<Complex64>::zeros();
    let mut gram_parity_odd = Matrix4::<Complex64>::zeros();

    for q in 0..4 {
        for qp in 0..=q {
            // Environment contraction per direction pair.
            let mut weights: Vec<(usize, usize, Complex64)> = Vec::new();
            for slice_idx in 0..kept.len() {
                let (ka, ca) = decomp[qp][slice_idx];
                let (kb, cb) = decomp[q][slice_idx];
                let w = ca.conj() * cb;
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                match weights.iter_mut().find(|(x, y, _)| *x == ka && *y == kb) {
                    Some(slot) => slot.2 += w,
                    None => weights.push((ka, kb, w)),
                }
            }
            for (ka, kb, w) in weights {
                let (sums, parity_odd) =
                    pattern_sums(&outputs[qp][ka], &outputs[q][kb])?;
                if q == qp {
                    for (slot, s) in patterns.iter_mut().zip(sums.iter()) {
                        *slot += (w * s).re;
                    }
                }
                let total: Complex64 = sums.iter().sum();
                gram_full[(q, qp)] += w * total;
                gram_even[(q, qp)] += w * sums[0b110];
                gram_odd[(q, qp)] += w * sums[0b001];
                gram_parity_odd[(q, qp)] += w * parity_odd;
                if q != qp {
                    gram_full[(qp, q)] += (w * total).conj();
                    gram_even[(qp, q)] += (w * sums[0b110]).conj();
                    gram_odd[(qp, q)] += (w * sums[0b001]).conj();
                    gram_parity_odd[(qp, q)] += (w * parity_odd).conj();
                }
            }
        }
    }

    let (even_probability, even_conditional) = normalize_gram(&gram_even)?;
    let (odd_probability, odd_conditional) = normalize_gram(&gram_odd)?;
    let (parity_odd_probability, parity_odd_conditional) = normalize_gram(&gram_parity_odd)?;
    let qubit_state = normalize_gram(&gram_full)?
        .1
        .ok_or(QubusError::ZeroSuccessProbability)?;
    Ok(OracleLinkReport {
        pattern_probabilities: patterns,
        qubit_state,
        even_probability,
        even_conditional,
        odd_probability,
        odd_conditional,
        parity_odd_probability,
        parity_odd_conditional,
    })
}

/// Homodyne window conditioning evaluated in the number basis.
pub fn oracle_homodyne_condition(
    params: &LinkParams,
    halfwidth: f64,
) -> Result<(f64, TwoQubitDensity)> {
    if !(halfwidth > 0.0) {
        return Err(QubusError::InvalidParameter(format!(
            "window halfwidth {halfwidth} must be positive"
        )));
    }
    let vectors = oracle_link_vectors(params)?;
    let bus_dim = vectors[0].dims()[0];
    let window = quadrature_window_matrix(bus_dim, halfwidth);
    let windowed: Vec<FockVector> = vectors
        .iter()
        .map(|v| v.apply_mode_matrix(0, &window))
        .collect::<Result<_>>()?;
    let mut gram = Matrix4::<Complex64>::zeros();
    for q in 0..4 {
        for qp in 0..4 {
            gram[(q, qp)] = vectors[qp].inner(&windowed[q])?;
        }
    }
    let (prob, state) = normalize_gram(&gram)?;
    state
        .map(|s| (prob, s))
        .ok_or(QubusError::ZeroSuccessProbability)
}

fn normalize_gram(gram: &Matrix4<Complex64>) -> Result<(f64, Option<TwoQubitDensity>)> {
    let trace = gram.trace();
    let prob = trace.re.max(0.0);
    if prob <= 1e-12 {
        return Ok((prob, None));
    }
    let mut m = gram / Complex64::new(prob, 0.0);
    // Round away the eigensolver-scale asymmetry before validation.
    let adj = m.adjoint();
    m = (m + adj) * Complex64::new(0.5, 0.0);
    Ok((prob, Some(TwoQubitDensity::new(m)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::coherent::coherent_overlap;
    use crate::density::trace_distance;
    use crate::link::build_link_state;
    use crate::usd::{
        homodyne_p_condition, pattern_distribution, quadrature_window_factor, DetectorModel,
        Receiver,
    };

    fn small_params() -> LinkParams {
        LinkParams::from_eta(1.2, 0.7, 0.6, 0.4).unwrap()
    }

    #[test]
    fn coherent_preparation_matches_closed_overlaps() {
        let b0 = CoherentLabel::new(0.0, 0.0).unwrap();
        let v0 = prepare_coherent(b0, 40).unwrap();
        assert_eq!(v0.amplitudes()[0], Complex64::new(1.0, 0.0));
        let b1 = CoherentLabel::new(1.3, 0.4).unwrap();
        let b2 = CoherentLabel::new(-0.5, 0.9).unwrap();
        let v1 = prepare_coherent(b1, 60).unwrap();
        let v2 = prepare_coherent(b2, 60).unwrap();
        assert!((v1.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((v1.mean_photons(0).unwrap() - b1.mean_photons()).abs() < 1e-9);
        let got = v1.inner(&v2).unwrap();
        let want = coherent_overlap(b1, b2);
        assert!((got - want).norm() < 1e-10);
    }

    #[test]
    fn truncation_rule_is_enforced() {
        let b = CoherentLabel::new(2.0, 0.0).unwrap();
        assert!(matches!(
            prepare_coherent(b, 10),
            Err(QubusError::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn balanced_splitter_halves_a_coherent_state() {
        let b = CoherentLabel::new(1.1, 0.3).unwrap();
        let v = prepare_coherent(b, 55).unwrap();
        let joined = v.tensor(&FockVector::vacuum(&[56]));
        let split = joined
            .apply_beamsplitter(0, 1, std::f64::consts::FRAC_PI_4)
            .unwrap();
        let half = b.scaled(std::f64::consts::FRAC_1_SQRT_2);
        let target = prepare_coherent(half, 55)
            .unwrap()
            .tensor(&prepare_coherent(half, 55).unwrap());
        let fidelity = target.inner(&split).unwrap().norm_sqr();
        assert!(fidelity >= 1.0 - 1e-9, "fidelity {fidelity}");
        assert!((split.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn displacement_nulls_and_creates_coherent_states() {
        let b = CoherentLabel::new(0.9, -0.6).unwrap();
        let v = prepare_coherent(b, 50).unwrap();
        let nulled = v.apply_displacement(0, -b.amplitude()).unwrap();
        let no_click = nulled.mode_occupation(0).unwrap()[0];
        assert!(no_click >= 1.0 - 1e-9);
        // D(gamma)|0> is |gamma> including its phase convention.
        let created = FockVector::vacuum(&[51])
            .apply_displacement(0, b.amplitude())
            .unwrap();
        let overlap = prepare_coherent(b, 50).unwrap().inner(&created).unwrap();
        assert!((overlap - Complex64::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn displacement_detects_truncation_overflow() {
        let v = FockVector::vacuum(&[12]);
        assert!(matches!(
            v.apply_displacement(0, Complex64::new(3.0, 0.0)),
            Err(QubusError::NormLeakage { .. })
        ));
    }

    #[test]
    fn receiver_elements_preserve_norm_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = small_params();
        let elements = ReceiverElements::new(&params, 36);
        let amps: Vec<Complex64> = (0..36)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let v = FockVector::single_mode(amps).scaled(Complex64::new(1.0 / norm, 0.0));
        // Random states overflow the tail check by design; only norm
        // preservation of the unitary elements is probed here.
        let mut w = v.tensor(&FockVector::vacuum(&[elements.p2_levels + 1]));
        w = w.apply_bs_blocks(0, 1, &elements.blocks_a);
        w = w.apply_mode_matrix(1, &elements.disp2).unwrap();
        w = w.tensor(&FockVector::vacuum(&[elements.p3_levels + 1]));
        w = w.apply_bs_blocks(0, 2, &elements.blocks_b);
        w = w.apply_mode_matrix(2, &elements.disp3).unwrap();
        w = w.apply_mode_matrix(0, &elements.disp1).unwrap();
        assert!((w.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn loss_splits_into_bus_and_environment() {
        let b = CoherentLabel::new(1.4, 0.2).unwrap();
        let v = prepare_coherent(b, 60).unwrap();
        let eta = 0.55;
        let lossy = v.apply_loss(0, eta).unwrap();
        let kept = b.scaled(eta.sqrt());
        let leaked = b.scaled((1.0 - eta).sqrt());
        let target = prepare_coherent(kept, 60)
            .unwrap()
            .tensor(&prepare_coherent(leaked, 60).unwrap());
        let overlap = target.inner(&lossy).unwrap();
        assert!((overlap - Complex64::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn phase_rotation_rotates_the_label() {
        let b = CoherentLabel::new(0.8, 0.5).unwrap();
        let v = prepare_coherent(b, 45).unwrap();
        let rotated = v.apply_phase_rotation(0, 0.9).unwrap();
        let target = prepare_coherent(b.rotated(0.9), 45).unwrap();
        let overlap = target.inner(&rotated).unwrap();
        assert!((overlap - Complex64::new(1.0, 0.0)).norm() < 1e-11);
    }

    #[test]
    fn onoff_distribution_orders_bits_by_listing() {
        let b = CoherentLabel::new(1.0, 0.0).unwrap();
        let v = prepare_coherent(b, 45).unwrap().tensor(&FockVector::vacuum(&[4]));
        let probs = v.onoff_distribution(&[0, 1]).unwrap();
        let dark = (-b.mean_photons()).exp();
        assert!((probs[0b00] - dark).abs() < 1e-12);
        assert!((probs[0b10] - (1.0 - dark)).abs() < 1e-12);
        assert!(probs[0b01].abs() < 1e-15);
        assert!(probs[0b11].abs() < 1e-15);
    }

    #[test]
    fn window_matrix_matches_closed_form_factors() {
        let labels = [
            CoherentLabel::new(0.0, 0.0).unwrap(),
            CoherentLabel::new(1.1, 0.6).unwrap(),
            CoherentLabel::new(-0.7, 1.2).unwrap(),
        ];
        for w in [0.7, 2.0] {
            let op = quadrature_window_matrix(55, w);
            for ket in labels {
                for bra in labels {
                    let vk = prepare_coherent(ket, 54).unwrap();
                    let vb = prepare_coherent(bra, 54).unwrap();
                    let got = vb.inner(&vk.apply_mode_matrix(0, &op).unwrap()).unwrap();
                    let want = quadrature_window_factor(ket, bra, w);
                    assert!(
                        (got - want).norm() < 1e-9,
                        "w={w}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn receiver_clicks_match_per_state_closed_forms() {
        let params = small_params();
        let rec = Receiver::new(&params).unwrap();
        for input in crate::usd::nominal_constellation(&params) {
            let got = oracle_receiver_click_distribution(input, &params).unwrap();
            let outs = rec.port_outputs(input);
            for (idx, p_oracle) in got.iter().enumerate() {
                let mut want = 1.0;
                for (port, out) in outs.iter().enumerate() {
                    let p_click = 1.0 - (-out.mean_photons()).exp();
                    let clicked = idx & (4 >> port) != 0;
                    want *= if clicked { p_click } else { 1.0 - p_click };
                }
                assert!(
                    (p_oracle - want).abs() < 1e-8,
                    "pattern {idx}: {p_oracle} vs {want}"
                );
            }
        }
    }

    #[test]
    fn full_report_matches_branch_algebra() {
        let params = small_params();
        let report = oracle_receiver_report(&params).unwrap();
        let dist = pattern_distribution(&params, DetectorModel::OnOff).unwrap();
        for (o, c) in report.pattern_probabilities.iter().zip(dist.iter()) {
            assert!((o - c.probability).abs() < 1e-8, "{o} vs {}", c.probability);
        }
        let even_closed = dist[6].conditional_state.as_ref().unwrap();
        assert!((report.even_probability - dist[6].probability).abs() < 1e-8);
        let even_oracle = report.even_conditional.as_ref().unwrap();
        assert!(trace_distance(even_oracle, even_closed) < 1e-8);
        let odd_closed = dist[1].conditional_state.as_ref().unwrap();
        let odd_oracle = report.odd_conditional.as_ref().unwrap();
        assert!(trace_distance(odd_oracle, odd_closed) < 1e-8);
        let full_closed = build_link_state(&params)
            .unwrap()
            .trace_out_modes()
            .unwrap()
            .two_qubit()
            .unwrap();
        assert!(trace_distance(&report.qubit_state, &full_closed) < 1e-8);
    }

    #[test]
    fn parity_split_matches_branch_algebra() {
        let params = small_params();
        let report = oracle_receiver_report(&params).unwrap();
        let heralds = crate::usd::parity_click_outcomes(&params).unwrap();
        assert!((report.parity_odd_probability - heralds.odd.0).abs() < 1e-8);
        let closed = heralds.odd.1.unwrap();
        let oracle = report.parity_odd_conditional.unwrap();
        assert!(trace_distance(&oracle, &closed) < 1e-8);
    }

    #[test]
    fn homodyne_conditioning_matches_branch_algebra() {
        let params = small_params();
        let w = crate::usd::default_window_halfwidth(&params);
        let (p_oracle, rho_oracle) = oracle_homodyne_condition(&params, w).unwrap();
        let (p_closed, rho_closed) = homodyne_p_condition(&params, w).unwrap();
        assert!((p_oracle - p_closed).abs() < 1e-8);
        assert!(trace_distance(&rho_oracle, &rho_closed) < 1e-8);
    }
}

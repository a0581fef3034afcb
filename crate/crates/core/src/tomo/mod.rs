//! One- and two-qubit polarization states, projective tomography and
//! maximum-likelihood reconstruction.

mod mle;

pub use mle::{linear_inversion, mle_reconstruct, MleOptions, MleReport};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::RatePrediction;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-9;

type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMat,
}

impl DensityMatrix {
    /// Wrap `m`, enforcing dimension, Hermiticity, unit trace and positivity.
    pub fn new(m: CMat) -> Result<Self> {
        let d = m.nrows();
        if m.ncols() != d {
            return Err(Error::DimensionMismatch(m.nrows(), m.ncols()));
        }
        if d != 2 && d != 4 {
            return Err(Error::Invariant(format!("dimension {d} is not 2 or 4")));
        }
        let herm = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm >= HERMITIAN_TOL {
            return Err(Error::Invariant(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Invariant(format!("trace {tr} differs from 1")));
        }
        let min = hermitian_eigen(&m).0.iter().copied().fold(f64::INFINITY, f64::min);
        if min < PSD_TOL {
            return Err(Error::Invariant(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { m })
    }

    /// Hermitize and renormalize `m` before validation, absorbing rounding.
    pub(crate) fn from_numeric(m: CMat) -> Result<Self> {
        let h = (&m + m.adjoint()) * c(0.5, 0.0);
        let tr = h.trace().re;
        Self::new(h / c(tr, 0.0))
    }

    pub fn pure(state: &[Complex64]) -> Result<Self> {
        let v = DVector::from_column_slice(state);
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::Invariant("zero state vector".into()));
        }
        let v = v / c(n, 0.0);
        Self::from_numeric(&v * v.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::new(CMat::identity(dim, dim) / c(dim as f64, 0.0))
    }

    /// |Φ⁺⟩ = (|HH⟩ + |VV⟩)/√2.
    pub fn phi_plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::pure(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]).expect("valid state")
    }

    /// |Φ⁻⟩ = (|HH⟩ − |VV⟩)/√2.
    pub fn phi_minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::pure(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-s, 0.0)]).expect("valid state")
    }

    /// `(1 − p)·self + p·other`.
    pub fn mix(&self, other: &Self, p: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("mixing weight {p} outside [0, 1]")));
        }
        Self::from_numeric(&self.m * c(1.0 - p, 0.0) + &other.m * c(p, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.m).0
    }

    /// Row-major `(re, im)` entries.
    pub fn to_pairs(&self) -> Vec<(f64, f64)> {
        let d = self.dim();
        (0..d * d).map(|k| self.m[(k / d, k % d)]).map(|z| (z.re, z.im)).collect()
    }

    pub fn to_json_value(&self) -> DensityMatrixJson {
        let d = self.dim();
        let row = |f: fn(&Complex64) -> f64| (0..d).map(|i| (0..d).map(|j| f(&self.m[(i, j)])).collect()).collect();
        DensityMatrixJson { dimension: d, real: row(|z| z.re), imag: row(|z| z.im) }
    }

    pub fn from_json_value(j: &DensityMatrixJson) -> Result<Self> {
        let d = j.dimension;
        if j.real.len() != d || j.imag.len() != d || j.real.iter().chain(&j.imag).any(|r| r.len() != d) {
            return Err(Error::Config("density matrix arrays do not match dimension".into()));
        }
        Self::new(CMat::from_fn(d, d, |i, k| c(j.real[i][k], j.imag[i][k])))
    }
}

/// Serialized density matrix: row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixJson {
    pub dimension: usize,
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
}

/// Ascending eigenvalues and matching eigenvectors of a Hermitian matrix.
pub(crate) fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let e = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m.nrows(), m.ncols(), |r, k| e.eigenvectors[(r, order[k])]);
    (vals, vecs)
}

fn psd_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let d = CMat::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|v| c(v.max(0.0).sqrt(), 0.0))));
    &vecs * d * vecs.adjoint()
}

/// Uhlmann fidelity `(tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    let s = psd_sqrt(&rho.m);
    let inner = &s * &sigma.m * &s;
    let inner = (&inner + inner.adjoint()) * c(0.5, 0.0);
    let (vals, _) = hermitian_eigen(&inner);
    let t: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((t * t).clamp(0.0, 1.0))
}

/// `tr(ρ²)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = &rho.m;
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Single-qubit projective outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis6 {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Basis6 {
    pub const ALL: [Basis6; 6] = [Basis6::H, Basis6::V, Basis6::D, Basis6::A, Basis6::R, Basis6::L];

    pub fn ket(self) -> [Complex64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Basis6::H => [c(1.0, 0.0), c(0.0, 0.0)],
            Basis6::V => [c(0.0, 0.0), c(1.0, 0.0)],
            Basis6::D => [c(s, 0.0), c(s, 0.0)],
            Basis6::A => [c(s, 0.0), c(-s, 0.0)],
            Basis6::R => [c(s, 0.0), c(0.0, s)],
            Basis6::L => [c(s, 0.0), c(0.0, -s)],
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Basis6::H => 'H',
            Basis6::V => 'V',
            Basis6::D => 'D',
            Basis6::A => 'A',
            Basis6::R => 'R',
            Basis6::L => 'L',
        }
    }

    pub fn from_symbol(ch: char) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.symbol() == ch.to_ascii_uppercase())
    }
}

/// Product projector on one or two qubits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeasurementSetting {
    pub outcomes: Vec<Basis6>,
}

impl MeasurementSetting {
    pub fn new(outcomes: Vec<Basis6>) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() > 2 {
            return Err(Error::Arity(format!("{} qubits; expected 1 or 2", outcomes.len())));
        }
        Ok(Self { outcomes })
    }

    pub fn label(&self) -> String {
        self.outcomes.iter().map(|b| b.symbol()).collect()
    }

    pub fn parse(label: &str) -> Result<Self> {
        let outcomes = label
            .chars()
            .map(|ch| Basis6::from_symbol(ch).ok_or_else(|| Error::Config(format!("bad setting label {label:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(outcomes)
    }

    pub fn dim(&self) -> usize {
        1 << self.outcomes.len()
    }

    pub fn projector(&self) -> CMat {
        let mut v = DVector::from_element(1, c(1.0, 0.0));
        for b in &self.outcomes {
            let k = b.ket();
            v = v.kronecker(&DVector::from_column_slice(&k));
        }
        &v * v.adjoint()
    }

    /// All `6^n` settings for `n` qubits, in H, V, D, A, R, L order.
    pub fn complete_set(qubits: usize) -> Vec<MeasurementSetting> {
        match qubits {
            1 => Basis6::ALL.iter().map(|&a| Self { outcomes: vec![a] }).collect(),
            2 => Basis6::ALL
                .iter()
                .flat_map(|&a| Basis6::ALL.iter().map(move |&b| Self { outcomes: vec![a, b] }))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// `tr(Πρ)` for a setting.
pub fn expectation(rho: &DensityMatrix, setting: &MeasurementSetting) -> Result<f64> {
    if setting.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(setting.dim(), rho.dim()));
    }
    Ok((setting.projector() * &rho.m).trace().re.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub setting: MeasurementSetting,
    pub counts: u64,
    pub seconds: f64,
}

/// Poisson counts with mean `expected_total·tr(Πρ) + noise_floor` per setting.
pub fn simulate_counts(
    rho: &DensityMatrix,
    settings: &[MeasurementSetting],
    expected_total_per_setting: f64,
    noise_floor_per_setting: f64,
    seconds: f64,
    seed: u64,
) -> Result<Vec<CountRecord>> {
    DensityMatrix::new(rho.m.clone())?;
    if !(expected_total_per_setting > 0.0) || !(noise_floor_per_setting >= 0.0) || !(seconds > 0.0) {
        return Err(Error::Domain("expected counts and integration time must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    settings
        .iter()
        .map(|s| {
            let mean = expected_total_per_setting * expectation(rho, s)? + noise_floor_per_setting;
            let counts = if mean > 0.0 {
                Poisson::new(mean).map_err(|e| Error::Domain(e.to_string()))?.sample(&mut rng) as u64
            } else {
                0
            };
            Ok(CountRecord { setting: s.clone(), counts, seconds })
        })
        .collect()
}

/// Count records with each mean rounded to the nearest integer.
pub fn expected_counts(rho: &DensityMatrix, settings: &[MeasurementSetting], total_per_setting: f64, seconds: f64) -> Result<Vec<CountRecord>> {
    settings
        .iter()
        .map(|s| Ok(CountRecord { setting: s.clone(), counts: (total_per_setting * expectation(rho, s)?).round() as u64, seconds }))
        .collect()
}

/// Imperfect Bell state with fidelity `f` to |Φ⁺⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DarkStateModel {
    /// `f·|Φ⁺⟩⟨Φ⁺| + (1 − f)·|Φ⁻⟩⟨Φ⁻|`.
    Dephased,
    /// `p·|Φ⁺⟩⟨Φ⁺| + (1 − p)·I/4` with `p` chosen to give fidelity `f`.
    Isotropic,
}

pub fn dark_fiber_state(model: DarkStateModel, f: f64) -> Result<DensityMatrix> {
    if !(0.25..=1.0).contains(&f) {
        return Err(Error::Domain(format!("dark-fiber fidelity {f} outside [0.25, 1]")));
    }
    match model {
        DarkStateModel::Dephased => DensityMatrix::phi_plus().mix(&DensityMatrix::phi_minus(), 1.0 - f),
        DarkStateModel::Isotropic => DensityMatrix::phi_plus().mix(&DensityMatrix::maximally_mixed(4)?, 4.0 * (1.0 - f) / 3.0),
    }
}

/// Weight of the unpolarized admixture added by coexistence: the extra
/// analyzer-weighted accidentals over the dark-fiber baseline, as a fraction
/// of all coincidences in the coexistence configuration.
pub fn coexistence_epsilon(coex: &RatePrediction, dark: &RatePrediction) -> Result<f64> {
    let total = coex.true_coincidences + 2.0 * coex.multipair_orthogonal + coex.accidentals_analyzed;
    if !(total > 0.0) {
        return Err(Error::UndefinedVisibility);
    }
    let extra = (coex.accidentals_analyzed - dark.accidentals_analyzed).max(0.0);
    Ok((extra / total).clamp(0.0, 1.0))
}

/// `(1 − ε)·ρ_dark + ε·I/d`.
pub fn coexistence_state(rho_dark: &DensityMatrix, epsilon: f64) -> Result<DensityMatrix> {
    rho_dark.mix(&DensityMatrix::maximally_mixed(rho_dark.dim())?, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_state(seed: u64, dim: usize) -> DensityMatrix {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = CMat::from_fn(dim, dim, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let m = &g * g.adjoint();
        DensityMatrix::from_numeric(m).unwrap()
    }

    fn random_unitary(seed: u64, dim: usize) -> CMat {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = CMat::from_fn(dim, dim, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        g.qr().q()
    }

    #[test]
    fn invariant_gates() {
        let bad = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(DensityMatrix::new(bad), Err(Error::Invariant(_))));
        let neg = CMat::from_row_slice(2, 2, &[c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(neg), Err(Error::Invariant(_))));
        assert!(DensityMatrix::new(CMat::identity(3, 3) / c(3.0, 0.0)).is_err());
    }

    #[test]
    fn purity_examples() {
        assert_eq!(purity(&DensityMatrix::maximally_mixed(2).unwrap()), 0.5);
        assert_eq!(purity(&DensityMatrix::maximally_mixed(4).unwrap()), 0.25);
        assert!((purity(&DensityMatrix::phi_plus()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let phi = DensityMatrix::phi_plus();
        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        assert!((fidelity(&phi, &mixed).unwrap() - 0.25).abs() < 1e-12);
        assert!((fidelity(&phi, &phi).unwrap() - 1.0).abs() < 1e-12);
        for eps in [0.1, 0.2] {
            let w = coexistence_state(&phi, eps).unwrap();
            let f = fidelity(&phi, &w).unwrap();
            assert!((f - (1.0 - 0.75 * eps)).abs() < 1e-10, "{eps}: {f}");
        }
        assert!(matches!(fidelity(&phi, &DensityMatrix::maximally_mixed(2).unwrap()), Err(Error::DimensionMismatch(4, 2))));
    }

    #[test]
    fn projector_expectations() {
        let hh = DensityMatrix::pure(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let vv = MeasurementSetting::parse("VV").unwrap();
        assert_eq!(expectation(&hh, &vv).unwrap(), 0.0);
        let phi = DensityMatrix::phi_plus();
        // Independent evaluation: |⟨DD|Φ⁺⟩|² = ((1/2)(1 + 1)/√2)² = 1/2.
        let dd = MeasurementSetting::parse("DD").unwrap();
        assert!((expectation(&phi, &dd).unwrap() - 0.5).abs() < 1e-15);
        let da = MeasurementSetting::parse("DA").unwrap();
        assert!(expectation(&phi, &da).unwrap().abs() < 1e-15);
        // ⟨RL|Φ⁺⟩ = (1 + 1)/(2√2).
        let rl = MeasurementSetting::parse("RL").unwrap();
        assert!((expectation(&phi, &rl).unwrap() - 0.5).abs() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        for s in MeasurementSetting::complete_set(2) {
            assert!((expectation(&mixed, &s).unwrap() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn simulated_counts_are_seeded() {
        let phi = DensityMatrix::phi_plus();
        let set = MeasurementSetting::complete_set(2);
        let a = simulate_counts(&phi, &set, 1000.0, 2.0, 60.0, 9).unwrap();
        let b = simulate_counts(&phi, &set, 1000.0, 2.0, 60.0, 9).unwrap();
        assert_eq!(a, b);
        let hv = a.iter().find(|r| r.setting.label() == "HV").unwrap();
        assert!(hv.counts < 15);
    }

    #[test]
    fn dark_state_models_have_requested_fidelity() {
        for model in [DarkStateModel::Dephased, DarkStateModel::Isotropic] {
            let rho = dark_fiber_state(model, 0.977).unwrap();
            let f = fidelity(&DensityMatrix::phi_plus(), &rho).unwrap();
            assert!((f - 0.977).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let rho = dark_fiber_state(DarkStateModel::Dephased, 0.977).unwrap();
        let same = coexistence_state(&rho, 0.0).unwrap();
        assert!((fidelity(&rho, &same).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn json_round_trip() {
        let rho = random_state(4, 4);
        let back = DensityMatrix::from_json_value(&rho.to_json_value()).unwrap();
        assert_eq!(rho, back);
    }

    proptest! {
        #[test]
        fn fidelity_symmetric_and_unitarily_invariant(a in 0u64..1000, b in 0u64..1000, u in 0u64..1000) {
            let r = random_state(a, 4);
            let s = random_state(b + 5000, 4);
            let f1 = fidelity(&r, &s).unwrap();
            let f2 = fidelity(&s, &r).unwrap();
            prop_assert!((f1 - f2).abs() < 1e-10);
            let uu = random_unitary(u, 4);
            let rr = DensityMatrix::from_numeric(&uu * r.matrix() * uu.adjoint()).unwrap();
            let ss = DensityMatrix::from_numeric(&uu * s.matrix() * uu.adjoint()).unwrap();
            prop_assert!((fidelity(&rr, &ss).unwrap() - f1).abs() < 1e-9);
        }

        #[test]
        fn coexistence_fidelity_decreases_with_epsilon(e1 in 0.0f64..0.99, de in 1e-4f64..0.01) {
            let rho = dark_fiber_state(DarkStateModel::Dephased, 0.977).unwrap();
            let a = fidelity(&rho, &coexistence_state(&rho, e1).unwrap()).unwrap();
            let b = fidelity(&rho, &coexistence_state(&rho, (e1 + de).min(1.0)).unwrap()).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn mixing_preserves_invariants(a in 0u64..1000, p in 0.0f64..=1.0) {
            let r = random_state(a, 2);
            let m = r.mix(&DensityMatrix::maximally_mixed(2).unwrap(), p).unwrap();
            prop_assert!(DensityMatrix::new(m.matrix().clone()).is_ok());
            let pu = purity(&m);
            prop_assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&pu));
        }
    }
}

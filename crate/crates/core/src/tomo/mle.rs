use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{c, hermitian_eigen, CMat, CountRecord, DensityMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Stop once an iteration improves the log-likelihood by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 10_000 }
    }
}

#[derive(Debug, Clone)]
pub struct MleReport {
    pub state: DensityMatrix,
    pub iterations: usize,
    /// Poisson log-likelihood `Σ n ln λ − λ` at the optimum.
    pub log_likelihood: f64,
    /// Fitted total coincidence rate, counts per second.
    pub intensity: f64,
}

struct Problem {
    dim: usize,
    projectors: Vec<CMat>,
    counts: Vec<f64>,
    seconds: Vec<f64>,
}

fn check_records(records: &[CountRecord], dimension: usize) -> Result<()> {
    if dimension != 2 && dimension != 4 {
        return Err(Error::Invariant(format!("dimension {dimension} is not 2 or 4")));
    }
    for r in records {
        if r.setting.dim() != dimension {
            return Err(Error::DimensionMismatch(r.setting.dim(), dimension));
        }
        if !(r.seconds > 0.0) {
            return Err(Error::Domain(format!("setting {} has non-positive integration time", r.setting.label())));
        }
    }
    Ok(())
}

/// Hermitian basis: diagonal units, then symmetric and antisymmetric
/// off-diagonal pairs.
fn hermitian_basis(d: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut m = CMat::zeros(d, d);
        m[(i, i)] = c(1.0, 0.0);
        out.push(m);
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut s = CMat::zeros(d, d);
            s[(i, j)] = c(1.0, 0.0);
            s[(j, i)] = c(1.0, 0.0);
            out.push(s);
            let mut a = CMat::zeros(d, d);
            a[(i, j)] = c(0.0, -1.0);
            a[(j, i)] = c(0.0, 1.0);
            out.push(a);
        }
    }
    out
}

/// Least-squares inversion of count rates to an unnormalized Hermitian
/// matrix. Fails if the settings are not informationally complete.
fn linear_rate_matrix(records: &[CountRecord], dimension: usize) -> Result<CMat> {
    check_records(records, dimension)?;
    let basis = hermitian_basis(dimension);
    let n = basis.len();
    let a = DMatrix::from_fn(records.len(), n, |k, j| (records[k].setting.projector() * &basis[j]).trace().re);
    let f = DVector::from_iterator(records.len(), records.iter().map(|r| r.counts as f64 / r.seconds));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count();
    if rank < n || records.len() < n {
        return Err(Error::RankDeficient { rank, required: n });
    }
    let x = svd.solve(&f, 1e-12 * smax).map_err(|e| Error::Invariant(e.to_string()))?;
    let mut m = CMat::zeros(dimension, dimension);
    for (b, xi) in basis.iter().zip(x.iter()) {
        m += b * c(*xi, 0.0);
    }
    Ok(m)
}

/// Linear-inversion estimate projected onto the physical states.
pub fn linear_inversion(records: &[CountRecord], dimension: usize) -> Result<DensityMatrix> {
    let m = linear_rate_matrix(records, dimension)?;
    let (vals, vecs) = hermitian_eigen(&m);
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) {
        return DensityMatrix::maximally_mixed(dimension);
    }
    let d = CMat::from_diagonal(&DVector::from_iterator(dimension, clipped.iter().map(|v| c(v / total, 0.0))));
    DensityMatrix::from_numeric(&vecs * d * vecs.adjoint())
}

impl Problem {
    fn n_params(&self) -> usize {
        self.dim * self.dim
    }

    /// Lower-triangular T from the parameter vector: diagonal reals first,
    /// then (re, im) of each strictly-lower entry in row order.
    fn unpack(&self, x: &DVector<f64>) -> CMat {
        let d = self.dim;
        let mut t = CMat::zeros(d, d);
        for i in 0..d {
            t[(i, i)] = c(x[i], 0.0);
        }
        let mut k = d;
        for i in 0..d {
            for j in 0..i {
                t[(i, j)] = c(x[k], x[k + 1]);
                k += 2;
            }
        }
        t
    }

    fn pack(&self, t: &CMat) -> DVector<f64> {
        let d = self.dim;
        let mut x = DVector::zeros(self.n_params());
        for i in 0..d {
            x[i] = t[(i, i)].re;
        }
        let mut k = d;
        for i in 0..d {
            for j in 0..i {
                x[k] = t[(i, j)].re;
                x[k + 1] = t[(i, j)].im;
                k += 2;
            }
        }
        x
    }

    fn means(&self, t: &CMat) -> Vec<f64> {
        let g = t.adjoint() * t;
        self.projectors.iter().zip(&self.seconds).map(|(p, s)| s * (p * &g).trace().re).collect()
    }

    /// Poisson deviance over two: `Σ λ − n − n ln(λ/n)`, zero for a perfect
    /// fit. Equal to the negative log-likelihood up to a data-only constant.
    fn objective(&self, x: &DVector<f64>) -> f64 {
        let t = self.unpack(x);
        let mut f = 0.0;
        for (lam, &n) in self.means(&t).iter().zip(&self.counts) {
            if n == 0.0 {
                f += lam.max(0.0);
            } else if *lam <= 0.0 {
                return f64::INFINITY;
            } else {
                let r = (lam - n) / n;
                f += n * (r - r.ln_1p());
            }
        }
        f
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = self.unpack(x);
        let lam = self.means(&t);
        let mut g = CMat::zeros(self.dim, self.dim);
        for ((p, s), (l, n)) in self.projectors.iter().zip(&self.seconds).zip(lam.iter().zip(&self.counts)) {
            let w = if *n == 0.0 { 1.0 } else { 1.0 - n / l };
            g += p * c(w * s, 0.0);
        }
        let m = &t * g;
        let d = self.dim;
        let mut out = DVector::zeros(self.n_params());
        for i in 0..d {
            out[i] = 2.0 * m[(i, i)].re;
        }
        let mut k = d;
        for i in 0..d {
            for j in 0..i {
                out[k] = 2.0 * m[(i, j)].re;
                out[k + 1] = 2.0 * m[(i, j)].im;
                k += 2;
            }
        }
        out
    }

    fn log_likelihood(&self, t: &CMat) -> f64 {
        self.means(t)
            .iter()
            .zip(&self.counts)
            .map(|(l, n)| if *n == 0.0 { -l } else { n * l.ln() - l })
            .sum()
    }
}

/// Lower-triangular `T` with `T†T = m` for Hermitian positive definite `m`.
fn reverse_cholesky(m: &CMat) -> Option<CMat> {
    let d = m.nrows();
    let j = CMat::from_fn(d, d, |r, k| if r + k == d - 1 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let flipped = &j * m * &j;
    let l = flipped.cholesky()?.unpack();
    Some(&j * l.adjoint() * &j)
}

/// Maximum-likelihood state for Poisson count data.
pub fn mle_reconstruct(records: &[CountRecord], dimension: usize, options: MleOptions) -> Result<MleReport> {
    let lin = linear_inversion(records, dimension)?;
    let problem = Problem {
        dim: dimension,
        projectors: records.iter().map(|r| r.setting.projector()).collect(),
        counts: records.iter().map(|r| r.counts as f64).collect(),
        seconds: records.iter().map(|r| r.seconds).collect(),
    };

    let rate_unit: f64 = problem
        .projectors
        .iter()
        .zip(&problem.seconds)
        .map(|(p, s)| s * (p * lin.matrix()).trace().re)
        .sum();
    let total: f64 = problem.counts.iter().sum();
    let intensity0 = if total > 0.0 && rate_unit > 0.0 { total / rate_unit } else { 1.0 };

    // Start strictly inside the state space.
    let start = lin.mix(&DensityMatrix::maximally_mixed(dimension)?, 1e-3)?;
    let t0 = reverse_cholesky(&(start.matrix() * c(intensity0, 0.0)))
        .ok_or_else(|| Error::Invariant("initial estimate is not positive definite".into()))?;

    let n = problem.n_params();
    let mut x = problem.pack(&t0);
    let mut f = problem.objective(&x);
    let mut g = problem.gradient(&x);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut last_step = f64::INFINITY;

    for it in 1..=options.max_iterations {
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        if slope == 0.0 {
            return finish(&problem, &x, it);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial = &x + &dir * alpha;
            let ft = problem.objective(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return finish(&problem, &x, it);
        };
        let g_new = problem.gradient(&x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if first {
                h *= sy / y.dot(&y);
                first = false;
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let a = &i - &s * y.transpose() * rho;
            let b = &i - &y * s.transpose() * rho;
            h = &a * &h * &b + &s * s.transpose() * rho;
        }
        last_step = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        if last_step < options.tolerance {
            return finish(&problem, &x, it);
        }
    }
    let t = problem.unpack(&x);
    let m = t.adjoint() * &t;
    let tr = m.trace();
    let m = m / tr;
    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        last_step,
        last_iterate: row_major(&m),
    })
}

fn row_major(m: &CMat) -> Vec<(f64, f64)> {
    let d = m.nrows();
    (0..d * d).map(|k| m[(k / d, k % d)]).map(|z: Complex64| (z.re, z.im)).collect()
}

fn finish(problem: &Problem, x: &DVector<f64>, iterations: usize) -> Result<MleReport> {
    let t = problem.unpack(x);
    let m = t.adjoint() * &t;
    let intensity = m.trace().re;
    let state = DensityMatrix::from_numeric(m)?;
    Ok(MleReport { log_likelihood: problem.log_likelihood(&t), state, iterations, intensity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomo::{expected_counts, fidelity, purity, simulate_counts, MeasurementSetting};

    #[test]
    fn equal_counts_give_maximally_mixed_qubit() {
        let records: Vec<_> = MeasurementSetting::complete_set(1)
            .into_iter()
            .map(|s| CountRecord { setting: s, counts: 500, seconds: 1.0 })
            .collect();
        let r = mle_reconstruct(&records, 2, MleOptions::default()).unwrap();
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        assert!((r.state.matrix() - mixed.matrix()).iter().all(|z| z.norm() < 1e-6));
        assert!((purity(&r.state) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn incomplete_settings_are_rank_deficient() {
        let records: Vec<_> = ["HH", "HV", "VH", "VV"]
            .iter()
            .map(|l| CountRecord { setting: MeasurementSetting::parse(l).unwrap(), counts: 10, seconds: 1.0 })
            .collect();
        assert!(matches!(mle_reconstruct(&records, 4, MleOptions::default()), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let records = vec![CountRecord { setting: MeasurementSetting::parse("H").unwrap(), counts: 1, seconds: 1.0 }];
        assert!(matches!(mle_reconstruct(&records, 4, MleOptions::default()), Err(Error::DimensionMismatch(2, 4))));
    }

    #[test]
    fn exact_counts_round_trip_bell_state() {
        let rho = DensityMatrix::phi_plus();
        let records = expected_counts(&rho, &MeasurementSetting::complete_set(2), 1e6, 1.0).unwrap();
        let r = mle_reconstruct(&records, 4, MleOptions::default()).unwrap();
        let f = fidelity(&rho, &r.state).unwrap();
        assert!(f >= 1.0 - 1e-6, "{f}");
    }

    #[test]
    fn noisy_counts_give_physical_state() {
        let rho = DensityMatrix::phi_plus().mix(&DensityMatrix::maximally_mixed(4).unwrap(), 0.1).unwrap();
        let records = simulate_counts(&rho, &MeasurementSetting::complete_set(2), 2000.0, 0.0, 60.0, 3).unwrap();
        let r = mle_reconstruct(&records, 4, MleOptions::default()).unwrap();
        assert!(r.state.eigenvalues().iter().all(|&v| v >= -1e-9));
        assert!(fidelity(&rho, &r.state).unwrap() > 0.98);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let rho = DensityMatrix::phi_plus().mix(&DensityMatrix::maximally_mixed(4).unwrap(), 0.3).unwrap();
        let records = simulate_counts(&rho, &MeasurementSetting::complete_set(2), 5000.0, 0.0, 1.0, 5).unwrap();
        let opts = MleOptions { tolerance: 0.0, max_iterations: 2 };
        match mle_reconstruct(&records, 4, opts) {
            Err(Error::NonConvergence { iterations, last_iterate, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last_iterate.len(), 16);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}

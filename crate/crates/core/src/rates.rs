//! Analytic singles, coincidence, accidental and visibility rates.
//!
//! All rates are in counts (or coincidence counts) per second. Noise inputs
//! are photon rates at the fiber output inside the channel filter; they reach
//! the counter through the detector efficiency only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::EppSource;
use crate::units::db_to_transmission;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_rate_cps: f64,
    pub jitter_fwhm_ps: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self { efficiency: 0.92, dark_rate_cps: 100.0, jitter_fwhm_ps: 50.0 }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Domain(format!("detector efficiency {} outside [0, 1]", self.efficiency)));
        }
        if !(self.dark_rate_cps >= 0.0) {
            return Err(Error::Domain("dark rate must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceConfig {
    pub window_ps: f64,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        Self { window_ps: 600.0 }
    }
}

/// One detection arm: total loss from source to detector input, the Raman
/// noise it collects, and its detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub loss_db: f64,
    pub noise_cps: f64,
    pub detector: DetectorModel,
}

impl ArmConfig {
    /// Source-to-click efficiency for pair photons.
    pub fn eta_total(&self) -> f64 {
        self.detector.efficiency * db_to_transmission(self.loss_db)
    }

    fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        if !(self.loss_db >= 0.0) {
            return Err(Error::Domain(format!("arm loss {} dB must be >= 0", self.loss_db)));
        }
        if !(self.noise_cps >= 0.0) {
            return Err(Error::Domain(format!("noise rate {} must be >= 0", self.noise_cps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub singles_signal: f64,
    pub singles_idler: f64,
    pub true_coincidences: f64,
    /// Accidentals with open analyzers.
    pub accidentals: f64,
    /// Accidental weight seen through a pair of polarization analyzers,
    /// expressed in open-analyzer units.
    pub accidentals_analyzed: f64,
    pub multipair_orthogonal: f64,
    pub visibility_hv: f64,
    pub car: f64,
    /// Total open-analyzer coincidence rate.
    pub ccr: f64,
    pub mu_effective: f64,
}

/// Detected singles in one arm.
pub fn singles_rate(arm_loss_db: f64, detector: &DetectorModel, noise_cps: f64, source: &EppSource, pair_weight: f64) -> f64 {
    let eta = detector.efficiency * db_to_transmission(arm_loss_db);
    source.rep_rate_hz * source.mu * pair_weight * eta + noise_cps * detector.efficiency + detector.dark_rate_cps
}

/// Full rate prediction for a two-arm configuration.
pub fn coincidence_rates(
    source: &EppSource,
    pair_weight: f64,
    signal: &ArmConfig,
    idler: &ArmConfig,
    coincidence: &CoincidenceConfig,
) -> Result<RatePrediction> {
    source.validate()?;
    signal.validate()?;
    idler.validate()?;
    if !(coincidence.window_ps > 0.0) {
        return Err(Error::Domain("coincidence window must be positive".into()));
    }
    if !(pair_weight >= 0.0) {
        return Err(Error::Domain("pair weight must be >= 0".into()));
    }
    let r = source.rep_rate_hz;
    let mu = source.mu * pair_weight;
    let tau = coincidence.window_ps * 1e-12;
    let (es, ei) = (signal.eta_total(), idler.eta_total());

    let ps = r * mu * es;
    let pi = r * mu * ei;
    let ns = signal.noise_cps * signal.detector.efficiency;
    let ni = idler.noise_cps * idler.detector.efficiency;
    let (ds, di) = (signal.detector.dark_rate_cps, idler.detector.dark_rate_cps);

    let singles_signal = ps + ns + ds;
    let singles_idler = pi + ni + di;
    let c = r * mu * es * ei;
    let m = 0.5 * mu * c;
    let a = (singles_signal * singles_idler - ps * pi) * tau;
    let a_pol = ((ps + ns + 2.0 * ds) * (pi + ni + 2.0 * di) - ps * pi) * tau;

    let visibility_hv = if c > 0.0 {
        1.0 / (1.0 + mu + a_pol / c)
    } else if m + a_pol > 0.0 {
        0.0
    } else {
        return Err(Error::UndefinedVisibility);
    };
    let car = if m + a > 0.0 { (c + m + a) / (m + a) } else { f64::INFINITY };

    Ok(RatePrediction {
        singles_signal,
        singles_idler,
        true_coincidences: c,
        accidentals: a,
        accidentals_analyzed: a_pol,
        multipair_orthogonal: m,
        visibility_hv,
        car,
        ccr: c + 3.0 * m + a,
        mu_effective: mu,
    })
}

/// Mean pairs per pulse from a noiseless visibility.
pub fn mu_from_visibility(v: f64) -> Result<f64> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::Domain(format!("visibility {v} outside (0, 1]")));
    }
    Ok(1.0 / v - 1.0)
}

/// Accidentals expected in a window delayed by one pulse period: the
/// open-analyzer accidentals plus pairs split across adjacent pulses.
pub fn delayed_window_accidentals(source: &EppSource, pair_weight: f64, signal: &ArmConfig, idler: &ArmConfig, coincidence: &CoincidenceConfig) -> Result<f64> {
    let p = coincidence_rates(source, pair_weight, signal, idler, coincidence)?;
    let mu = source.mu * pair_weight;
    let ps = source.rep_rate_hz * mu * signal.eta_total();
    let pi = source.rep_rate_hz * mu * idler.eta_total();
    Ok(p.accidentals + ps * pi / source.rep_rate_hz)
}

/// Solve for μ giving open-analyzer coincidence rate `target_ccr`.
pub fn mu_for_ccr(
    target_ccr: f64,
    source: &EppSource,
    pair_weight: f64,
    signal: &ArmConfig,
    idler: &ArmConfig,
    coincidence: &CoincidenceConfig,
) -> Result<f64> {
    let ccr = |mu: f64| -> Result<f64> {
        match coincidence_rates(&source.with_mu(mu), pair_weight, signal, idler, coincidence) {
            Ok(p) => Ok(p.ccr),
            // Nothing reaches either detector.
            Err(Error::UndefinedVisibility) => Ok(0.0),
            Err(e) => Err(e),
        }
    };
    let floor = ccr(0.0)?;
    if !(target_ccr > floor) {
        return Err(Error::Domain(format!(
            "target coincidence rate {target_ccr} is not above the zero-pair floor {floor:.4}"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while ccr(hi)? < target_ccr {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Domain(format!("target coincidence rate {target_ccr} unreachable")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ccr(mid)? < target_ccr {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu: f64,
    pub ccr_ccps: f64,
    pub visibility: f64,
    pub car: f64,
    pub accidentals_ccps: f64,
}

/// Evaluate the prediction over a μ grid. Points come back in input order.
pub fn visibility_vs_ccr_sweep(
    source: &EppSource,
    pair_weight: f64,
    signal: &ArmConfig,
    idler: &ArmConfig,
    coincidence: &CoincidenceConfig,
    mus: &[f64],
) -> Result<Vec<SweepPoint>> {
    if let Some(&bad) = mus.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::Domain(format!("sweep mu {bad} must be positive")));
    }
    mus.par_iter()
        .map(|&mu| {
            let p = coincidence_rates(&source.with_mu(mu), pair_weight, signal, idler, coincidence)?;
            Ok(SweepPoint { mu, ccr_ccps: p.ccr, visibility: p.visibility_hv, car: p.car, accidentals_ccps: p.accidentals })
        })
        .collect()
}

/// `n` log-spaced points over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect(),
    }
}

/// Noise reduction from narrowing the filter and the coincidence window.
pub fn filter_window_scaling(bw_from_ghz: f64, bw_to_ghz: f64, win_from_ps: f64, win_to_ps: f64) -> Result<f64> {
    if [bw_from_ghz, bw_to_ghz, win_from_ps, win_to_ps].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("filter and window widths must be positive".into()));
    }
    Ok((bw_from_ghz / bw_to_ghz) * (win_from_ps / win_to_ps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CascadeAccidentals {
    /// n-fold accidental rate before the reductions, per second.
    pub rate: f64,
    /// Rate with each stream divided by its reduction factor.
    pub reduced_rate: f64,
    pub reduction_factor: f64,
}

/// n-fold accidental rate `S_1…S_n·τ^(n−1)` and its reduction when stream
/// `j` is divided by `reductions[j]`.
pub fn cascade_accidentals(singles_cps: &[f64], window_ps: f64, reductions: &[f64]) -> Result<CascadeAccidentals> {
    let n = singles_cps.len();
    if n < 2 {
        return Err(Error::Arity(format!("{n}-fold accidentals need at least two streams")));
    }
    if reductions.len() != n {
        return Err(Error::Arity(format!("{} reduction factors for {n} streams", reductions.len())));
    }
    if !(window_ps > 0.0) || singles_cps.iter().any(|s| !(*s >= 0.0)) || reductions.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Domain("rates must be >= 0, window and reductions positive".into()));
    }
    let tau = window_ps * 1e-12;
    let tau_pow = tau.powi(n as i32 - 1);
    let rate = singles_cps.iter().product::<f64>() * tau_pow;
    let reduced_rate = singles_cps.iter().zip(reductions).map(|(s, m)| s / m).product::<f64>() * tau_pow;
    Ok(CascadeAccidentals { rate, reduced_rate, reduction_factor: reductions.iter().product() })
}

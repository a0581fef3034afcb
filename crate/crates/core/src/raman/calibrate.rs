//! Fit the absolute scale (and optionally mode amplitudes) of a gain table to
//! measured detector-referred noise rates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{phonon_occupation, RamanGainTable};
use crate::error::{Error, Result};
use crate::network::{ClassicalWdmPlan, Direction, FiberLink};
use crate::units::{raman_offset_thz, DB_TO_NATURAL};

/// One measured noise rate.
///
/// The launch power is split evenly across `classical_nm`. When
/// `quantum_loss_db` is set it replaces the link model's loss at the quantum
/// wavelength (for example a directly measured end-to-end loss).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub quantum_nm: f64,
    pub classical_nm: Vec<f64>,
    pub launch_power_mw: f64,
    pub link: FiberLink,
    #[serde(default)]
    pub quantum_loss_db: Option<f64>,
    pub filter_bandwidth_ghz: f64,
    pub measured_cps: f64,
    pub detector_efficiency: f64,
    #[serde(default = "co")]
    pub direction: Direction,
}

fn co() -> Direction {
    Direction::Co
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitMode {
    ScaleOnly,
    /// Scale plus the amplitudes of the listed mode indices.
    ScaleAndModes(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub table: RamanGainTable,
    /// `ln(predicted) − ln(measured)` per observation.
    pub log_residuals: Vec<f64>,
    pub iterations: usize,
}

impl Observation {
    /// Detector-referred prediction from `table`.
    pub fn predict(&self, table: &RamanGainTable) -> Result<f64> {
        let per_mode = self.per_mode_basis(table)?;
        let g: f64 = per_mode.iter().zip(&table.modes).map(|(b, m)| b * m.amplitude).sum();
        Ok(table.calibration_scale * g)
    }

    /// Detector-referred rate per unit scale and unit amplitude, mode by mode.
    fn per_mode_basis(&self, table: &RamanGainTable) -> Result<Vec<f64>> {
        if self.classical_nm.is_empty() {
            return Err(Error::Config("observation has no classical channels".into()));
        }
        let l = self.link.length_km;
        let lq = match self.quantum_loss_db {
            Some(v) => v,
            None => self.link.loss_db(self.quantum_nm)?,
        };
        let per_channel_mw = self.launch_power_mw / self.classical_nm.len() as f64;
        let mut out = vec![0.0; table.modes.len()];
        for &c in &self.classical_nm {
            if !(self.quantum_nm < c) {
                return Err(Error::UnsupportedRegime { quantum_nm: self.quantum_nm, classical_nm: c });
            }
            let w = raman_offset_thz(c, self.quantum_nm);
            let n = phonon_occupation(w, table.temperature_k)?;
            let lc = self.link.loss_db(c)?;
            let (aq, ac) = if l > 0.0 { (lq * DB_TO_NATURAL / l, lc * DB_TO_NATURAL / l) } else { (0.0, 0.0) };
            let leff = match self.direction {
                Direction::Co => super::co_propagating_length(aq, ac, l),
                Direction::Counter => super::counter_propagating_length(aq, ac, l),
            };
            let common = self.detector_efficiency * per_channel_mw * self.filter_bandwidth_ghz * n * leff;
            for (o, m) in out.iter_mut().zip(&table.modes) {
                let unit = super::VibrationalMode { amplitude: 1.0, ..*m };
                *o += common * unit.gain(w);
            }
        }
        Ok(out)
    }
}

/// Lab noise measurement on the installed link with the 11-channel
/// 1549–1565 nm plan, 50 GHz filters and 92% detectors, expressed per mW of
/// aggregate launch power.
pub fn installed_link_observation(quantum_nm: f64, measured_cps_per_mw: f64, quantum_loss_db: Option<f64>) -> Observation {
    Observation {
        quantum_nm,
        classical_nm: ClassicalWdmPlan::c_band_default(0.0).channels.iter().map(|c| c.wavelength_nm).collect(),
        launch_power_mw: 1.0,
        link: FiberLink::installed_default(),
        quantum_loss_db,
        filter_bandwidth_ghz: 50.0,
        measured_cps: measured_cps_per_mw,
        detector_efficiency: 0.92,
        direction: Direction::Co,
    }
}

/// The datum the shipped table's scale is fitted to: 474.2 cps/mW at
/// 1313 nm with 19.5 dB measured loss.
pub fn reference_observation() -> Observation {
    installed_link_observation(1313.0, 474.2, Some(19.5))
}

fn distinct_observations(obs: &[Observation]) -> usize {
    let mut keys: Vec<(u64, Vec<u64>)> = obs
        .iter()
        .map(|o| (o.quantum_nm.to_bits(), o.classical_nm.iter().map(|c| c.to_bits()).collect()))
        .collect();
    keys.sort();
    keys.dedup();
    keys.len()
}

/// Fit `table` to `observations` by least squares on log residuals.
pub fn calibrate(table: &RamanGainTable, observations: &[Observation], mode: FitMode) -> Result<Calibration> {
    let mode_idx: Vec<usize> = match &mode {
        FitMode::ScaleOnly => Vec::new(),
        FitMode::ScaleAndModes(v) => {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            if let Some(&bad) = v.iter().find(|&&i| i >= table.modes.len()) {
                return Err(Error::Config(format!("mode index {bad} out of range")));
            }
            v
        }
    };
    let n_params = 1 + mode_idx.len();
    if observations.is_empty() {
        return Err(Error::Underdetermined("no observations".into()));
    }
    let distinct = distinct_observations(observations);
    if distinct < n_params {
        return Err(Error::Underdetermined(format!(
            "{distinct} distinct observation(s) for {n_params} parameter(s)"
        )));
    }
    for o in observations {
        if !(o.measured_cps > 0.0) || !(o.detector_efficiency > 0.0) || !(o.launch_power_mw > 0.0) {
            return Err(Error::Domain("observations need positive rate, efficiency and power".into()));
        }
    }

    let basis: Vec<Vec<f64>> = observations.iter().map(|o| o.per_mode_basis(table)).collect::<Result<_>>()?;
    let log_meas: Vec<f64> = observations.iter().map(|o| o.measured_cps.ln()).collect();

    let mut amps: Vec<f64> = table.modes.iter().map(|m| m.amplitude).collect();
    let predict = |ln_scale: f64, amps: &[f64]| -> Vec<f64> {
        basis
            .iter()
            .map(|b| ln_scale + b.iter().zip(amps).map(|(x, a)| x * a).sum::<f64>().ln())
            .collect()
    };

    let mut ln_scale = table.calibration_scale.ln();
    let mut iterations = 0;
    if mode_idx.is_empty() {
        let r = predict(ln_scale, &amps);
        let mean = r.iter().zip(&log_meas).map(|(p, m)| p - m).sum::<f64>() / r.len() as f64;
        ln_scale -= mean;
        iterations = 1;
    } else {
        // Levenberg–Marquardt in (ln scale, ln amplitudes).
        let cost = |r: &[f64]| r.iter().zip(&log_meas).map(|(p, m)| (p - m).powi(2)).sum::<f64>();
        for &i in &mode_idx {
            if amps[i] <= 0.0 {
                amps[i] = 1e-3;
            }
        }
        let mut lambda = 1e-3;
        let mut current = cost(&predict(ln_scale, &amps));
        for it in 0..500 {
            iterations = it + 1;
            let pred = predict(ln_scale, &amps);
            let r = DVector::from_iterator(pred.len(), pred.iter().zip(&log_meas).map(|(p, m)| p - m));
            let mut j = DMatrix::zeros(pred.len(), n_params);
            for (k, b) in basis.iter().enumerate() {
                let total: f64 = b.iter().zip(&amps).map(|(x, a)| x * a).sum();
                j[(k, 0)] = 1.0;
                for (col, &mi) in mode_idx.iter().enumerate() {
                    j[(k, col + 1)] = amps[mi] * b[mi] / total;
                }
            }
            let jt = j.transpose();
            let jtj = &jt * &j;
            let g = &jt * &r;
            let mut improved = false;
            while lambda < 1e12 {
                let mut a = jtj.clone();
                for d in 0..n_params {
                    a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
                }
                let Some(step) = a.lu().solve(&(-&g)) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial_scale = ln_scale + step[0];
                let mut trial_amps = amps.clone();
                for (col, &mi) in mode_idx.iter().enumerate() {
                    trial_amps[mi] *= step[col + 1].exp();
                }
                let c = cost(&predict(trial_scale, &trial_amps));
                if c < current {
                    let gain = current - c;
                    ln_scale = trial_scale;
                    amps = trial_amps;
                    current = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = gain > 1e-15 * current.max(1e-300);
                    break;
                }
                lambda *= 10.0;
            }
            if !improved || current < 1e-28 {
                break;
            }
        }
    }

    let mut out = table.clone();
    out.calibration_scale = ln_scale.exp();
    for (m, a) in out.modes.iter_mut().zip(&amps) {
        m.amplitude = *a;
    }
    let log_residuals = predict(ln_scale, &amps).iter().zip(&log_meas).map(|(p, m)| p - m).collect();
    out.validate()?;
    Ok(Calibration { table: out, log_residuals, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(q: f64, cps: f64) -> Observation {
        Observation {
            quantum_nm: q,
            classical_nm: vec![1550.0, 1560.0],
            launch_power_mw: 1.0,
            link: FiberLink::installed_default(),
            quantum_loss_db: None,
            filter_bandwidth_ghz: 50.0,
            measured_cps: cps,
            detector_efficiency: 0.9,
            direction: Direction::Co,
        }
    }

    #[test]
    fn shipped_scale_matches_reference_datum() {
        let t = RamanGainTable::default();
        let c = calibrate(&t, &[reference_observation()], FitMode::ScaleOnly).unwrap();
        println!("fitted scale {:.10}", c.table.calibration_scale);
        assert!((c.table.calibration_scale / t.calibration_scale - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_datum_scale_fit_is_exact() {
        let t = RamanGainTable::default();
        let c = calibrate(&t, &[obs(1310.0, 123.0)], FitMode::ScaleOnly).unwrap();
        assert!(c.log_residuals[0].abs() < 1e-12);
        let p = obs(1310.0, 123.0).predict(&c.table).unwrap();
        assert!((p - 123.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_generating_scale() {
        let mut truth = RamanGainTable::default();
        truth.calibration_scale = 37.25;
        let data: Vec<_> = [1285.0, 1300.0, 1320.0]
            .iter()
            .map(|&q| {
                let mut o = obs(q, 1.0);
                o.measured_cps = o.predict(&truth).unwrap();
                o
            })
            .collect();
        let c = calibrate(&RamanGainTable::default(), &data, FitMode::ScaleOnly).unwrap();
        assert!((c.table.calibration_scale / 37.25 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_scale_and_amplitude() {
        let mut truth = RamanGainTable::default();
        truth.calibration_scale = 5.0;
        truth.modes[13].amplitude = 0.5;
        let data: Vec<_> = [1282.0, 1290.0, 1300.0, 1310.0, 1325.0]
            .iter()
            .map(|&q| {
                let mut o = obs(q, 1.0);
                o.measured_cps = o.predict(&truth).unwrap();
                o
            })
            .collect();
        let c = calibrate(&RamanGainTable::default(), &data, FitMode::ScaleAndModes(vec![13])).unwrap();
        assert!((c.table.calibration_scale / 5.0 - 1.0).abs() < 1e-6, "{}", c.table.calibration_scale);
        assert!((c.table.modes[13].amplitude / 0.5 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn one_wavelength_two_parameters_is_underdetermined() {
        let t = RamanGainTable::default();
        let data = vec![obs(1310.0, 10.0), obs(1310.0, 11.0)];
        assert!(matches!(
            calibrate(&t, &data, FitMode::ScaleAndModes(vec![3])),
            Err(Error::Underdetermined(_))
        ));
        assert!(matches!(calibrate(&t, &[], FitMode::ScaleOnly), Err(Error::Underdetermined(_))));
    }

    #[test]
    fn stokes_observation_is_rejected() {
        let mut o = obs(1310.0, 10.0);
        o.classical_nm = vec![1290.0];
        assert!(matches!(
            calibrate(&RamanGainTable::default(), &[o], FitMode::ScaleOnly),
            Err(Error::UnsupportedRegime { .. })
        ));
    }
}

//! Spontaneous Raman scattering: gain spectrum, phonon occupation and the
//! noise photon rate reaching a quantum receiver.

mod calibrate;
mod lineshape;

pub use calibrate::{calibrate, installed_link_observation, reference_observation, Calibration, FitMode, Observation};

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ClassicalChannel, Direction, FiberLink};
use crate::units::{dbm_to_mw, raman_offset_thz, BOLTZMANN, DB_TO_NATURAL, PLANCK};

/// Supported frequency-offset range in THz.
pub const OFFSET_RANGE_THZ: (f64, f64) = (0.0, 60.0);

pub const TABLE_VERSION: u32 = 1;

const DEFAULT_TABLE_JSON: &str = include_str!("default_table.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationalMode {
    #[serde(rename = "center_THz")]
    pub center_shift_thz: f64,
    #[serde(rename = "gw_THz")]
    pub gaussian_width_thz: f64,
    #[serde(rename = "lw_THz")]
    pub lorentzian_width_thz: f64,
    #[serde(rename = "amp")]
    pub amplitude: f64,
}

impl VibrationalMode {
    /// Contribution of this mode to the gain at `offset_thz`.
    pub fn gain(&self, offset_thz: f64) -> f64 {
        let sigma = lineshape::sigma_from_width(self.gaussian_width_thz);
        let hwhm = 0.5 * self.lorentzian_width_thz;
        self.amplitude
            * self.center_shift_thz
            * FRAC_PI_2
            * lineshape::antisymmetric_voigt(offset_thz, self.center_shift_thz, sigma, hwhm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanGainTable {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    pub calibration_scale: f64,
    pub modes: Vec<VibrationalMode>,
}

fn default_version() -> u32 {
    TABLE_VERSION
}

impl Default for RamanGainTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE_JSON).expect("embedded table is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    AntiStokes,
    Stokes,
}

impl RamanGainTable {
    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn with_temperature(mut self, temperature_k: f64) -> Result<Self> {
        self.temperature_k = temperature_k;
        self.validate()?;
        Ok(self)
    }

    /// Structural checks plus a sampled non-negativity check of the gain.
    pub fn validate(&self) -> Result<()> {
        if self.version != TABLE_VERSION {
            return Err(Error::SchemaVersion { found: self.version, expected: TABLE_VERSION });
        }
        if !(self.temperature_k > 0.0 && self.temperature_k.is_finite()) {
            return Err(Error::Domain(format!("temperature {} K must be positive", self.temperature_k)));
        }
        if !(self.calibration_scale > 0.0 && self.calibration_scale.is_finite()) {
            return Err(Error::Config("calibration_scale must be positive".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            let ok = m.amplitude >= 0.0
                && m.center_shift_thz > 0.0
                && m.gaussian_width_thz > 0.0
                && m.lorentzian_width_thz > 0.0
                && [m.amplitude, m.center_shift_thz, m.gaussian_width_thz, m.lorentzian_width_thz]
                    .iter()
                    .all(|v| v.is_finite());
            if !ok {
                return Err(Error::Config(format!("mode {i} has invalid parameters: {m:?}")));
            }
        }
        for k in 0..=240 {
            let w = OFFSET_RANGE_THZ.1 * k as f64 / 240.0;
            let g = self.gain_density(w)?;
            if g < 0.0 {
                return Err(Error::Invariant(format!("gain density {g} < 0 at {w} THz")));
            }
        }
        Ok(())
    }

    /// Relative Raman gain at frequency offset `offset_thz` (ν_classical − ν_quantum).
    pub fn gain_density(&self, offset_thz: f64) -> Result<f64> {
        check_offset(offset_thz)?;
        if offset_thz == 0.0 {
            return Ok(0.0);
        }
        let g: f64 = self.modes.iter().map(|m| m.gain(offset_thz)).sum();
        Ok(g.max(0.0))
    }

    pub fn scattering_density(&self, offset_thz: f64, side: Side) -> Result<f64> {
        let g = self.gain_density(offset_thz)?;
        if g == 0.0 {
            return Ok(0.0);
        }
        let n = phonon_occupation(offset_thz, self.temperature_k)?;
        Ok(match side {
            Side::AntiStokes => g * n,
            Side::Stokes => g * (n + 1.0),
        })
    }

    /// Anti-Stokes noise photons/s per mW of launch power per unit filter
    /// bandwidth (GHz) at the fiber output, for explicit span losses.
    ///
    /// `quantum_loss_db` and `classical_loss_db` are end-to-end span losses;
    /// attenuation is taken as uniformly distributed along `length_km`.
    pub fn sprs_rate_per_mw_ghz(
        &self,
        classical_nm: f64,
        quantum_nm: f64,
        length_km: f64,
        quantum_loss_db: f64,
        classical_loss_db: f64,
        direction: Direction,
    ) -> Result<f64> {
        if !(quantum_nm < classical_nm) {
            return Err(Error::UnsupportedRegime { quantum_nm, classical_nm });
        }
        let offset = raman_offset_thz(classical_nm, quantum_nm);
        let rho = self.scattering_density(offset, Side::AntiStokes)?;
        let (aq, ac) = if length_km > 0.0 {
            (quantum_loss_db * DB_TO_NATURAL / length_km, classical_loss_db * DB_TO_NATURAL / length_km)
        } else {
            (0.0, 0.0)
        };
        let leff = match direction {
            Direction::Co => co_propagating_length(aq, ac, length_km),
            Direction::Counter => counter_propagating_length(aq, ac, length_km),
        };
        Ok(self.calibration_scale * rho * leff)
    }

    /// Noise photons/s at the output of `link` in a `filter_bandwidth_ghz`
    /// passband centred on `quantum_nm`, generated by `classical`.
    pub fn sprs_rate(
        &self,
        classical: &ClassicalChannel,
        quantum_nm: f64,
        filter_bandwidth_ghz: f64,
        link: &FiberLink,
        direction: Direction,
    ) -> Result<f64> {
        self.sprs_rate_at_mw(
            classical.wavelength_nm,
            dbm_to_mw(classical.launch_power_dbm),
            quantum_nm,
            filter_bandwidth_ghz,
            link,
            direction,
        )
    }

    /// [`sprs_rate`](Self::sprs_rate) with the launch power given in mW.
    pub fn sprs_rate_at_mw(
        &self,
        classical_nm: f64,
        launch_mw: f64,
        quantum_nm: f64,
        filter_bandwidth_ghz: f64,
        link: &FiberLink,
        direction: Direction,
    ) -> Result<f64> {
        if !(launch_mw >= 0.0) {
            return Err(Error::Domain(format!("launch power {launch_mw} mW must be >= 0")));
        }
        if !(filter_bandwidth_ghz >= 0.0) {
            return Err(Error::Domain(format!("filter bandwidth {filter_bandwidth_ghz} GHz must be >= 0")));
        }
        let per = self.sprs_rate_per_mw_ghz(
            classical_nm,
            quantum_nm,
            link.length_km,
            link.loss_db(quantum_nm)?,
            link.loss_db(classical_nm)?,
            direction,
        )?;
        Ok(launch_mw * per * filter_bandwidth_ghz)
    }

    /// Sum of [`sprs_rate`](Self::sprs_rate) over a set of channels.
    pub fn sprs_rate_total(
        &self,
        channels: &[ClassicalChannel],
        quantum_nm: f64,
        filter_bandwidth_ghz: f64,
        link: &FiberLink,
        direction: Direction,
    ) -> Result<f64> {
        channels.iter().map(|c| self.sprs_rate(c, quantum_nm, filter_bandwidth_ghz, link, direction)).sum()
    }
}

fn check_offset(offset_thz: f64) -> Result<()> {
    let (lo, hi) = OFFSET_RANGE_THZ;
    if !(offset_thz >= lo && offset_thz <= hi) {
        return Err(Error::Range { quantity: "offset_THz", value: offset_thz, min: lo, max: hi });
    }
    Ok(())
}

/// Bose–Einstein phonon occupation at `offset_thz` and `temperature_k`.
pub fn phonon_occupation(offset_thz: f64, temperature_k: f64) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return Err(Error::Domain(format!("temperature {temperature_k} K must be positive")));
    }
    if offset_thz == 0.0 {
        return Err(Error::Divergence);
    }
    if !(offset_thz > 0.0) {
        return Err(Error::Domain(format!("offset {offset_thz} THz must be positive")));
    }
    let x = PLANCK * offset_thz * 1e12 / (BOLTZMANN * temperature_k);
    Ok(1.0 / x.exp_m1())
}

/// Co-propagating effective length `(e^{-αq L} − e^{-αc L})/(αc − αq)` in km.
pub fn co_propagating_length(alpha_q: f64, alpha_c: f64, length_km: f64) -> f64 {
    let d = alpha_c - alpha_q;
    if d == 0.0 {
        return length_km * (-alpha_q * length_km).exp();
    }
    (-alpha_q * length_km).exp() * (-(-d * length_km).exp_m1()) / d
}

/// Counter-propagating effective length `(1 − e^{-(αq+αc)L})/(αq+αc)` in km.
///
/// Backward scattering has not been validated against measurement.
pub fn counter_propagating_length(alpha_q: f64, alpha_c: f64, length_km: f64) -> f64 {
    let s = alpha_q + alpha_c;
    if s == 0.0 {
        return length_km;
    }
    -(-s * length_km).exp_m1() / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::AttenuationTable;
    use proptest::prelude::*;

    fn ratio(t: &RamanGainTable, q: f64, q_ref: f64) -> f64 {
        let link = FiberLink::new("g", 25.0, AttenuationTable::generic_smf(), 0.0).unwrap();
        let c = ClassicalChannel { wavelength_nm: 1550.0, launch_power_dbm: 0.0 };
        t.sprs_rate(&c, q, 50.0, &link, Direction::Co).unwrap()
            / t.sprs_rate(&c, q_ref, 50.0, &link, Direction::Co).unwrap()
    }

    #[test]
    fn default_table_loads_and_validates() {
        let t = RamanGainTable::default();
        assert_eq!(t.modes.len(), 14);
        assert_eq!(t.temperature_k, 295.0);
        t.validate().unwrap();
    }

    #[test]
    fn zero_offset_has_zero_gain() {
        assert_eq!(RamanGainTable::default().gain_density(0.0).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_offset_is_rejected() {
        let t = RamanGainTable::default();
        assert!(matches!(t.gain_density(60.5), Err(Error::Range { .. })));
        assert!(matches!(t.gain_density(-1.0), Err(Error::Range { .. })));
    }

    #[test]
    fn occupation_matches_closed_form() {
        let n = phonon_occupation(40.0, 295.0).unwrap();
        assert!((n - 1.496e-3).abs() < 0.005e-3, "{n}");
        let r = phonon_occupation(39.0, 295.0).unwrap() / phonon_occupation(47.0, 295.0).unwrap();
        assert!((r - 3.7).abs() < 0.05, "{r}");
        assert!(matches!(phonon_occupation(0.0, 295.0), Err(Error::Divergence)));
        assert!(matches!(phonon_occupation(1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn high_temperature_limit() {
        let (w, t) = (1.0, 1e6);
        let n = phonon_occupation(w, t).unwrap();
        let classical = BOLTZMANN * t / (PLANCK * w * 1e12);
        assert!((n - classical).abs() / classical < 1e-4);
    }

    #[test]
    fn stokes_to_anti_stokes_ratio_at_40_thz() {
        let t = RamanGainTable::default();
        let r = t.scattering_density(40.0, Side::Stokes).unwrap() / t.scattering_density(40.0, Side::AntiStokes).unwrap();
        assert!((r - 669.5).abs() < 5.0, "{r}");
    }

    #[test]
    fn plateau_between_39_and_47_thz() {
        let t = RamanGainTable::default();
        let g43 = t.gain_density(43.0).unwrap();
        for k in 0..=32 {
            let w = 39.0 + 8.0 * k as f64 / 32.0;
            let g = t.gain_density(w).unwrap();
            assert!((g / g43 - 1.0).abs() <= 0.25, "{w}: {}", g / g43);
        }
    }

    #[test]
    fn weak_high_offset_mode_produces_local_maximum() {
        let t = RamanGainTable::default();
        let last = t.modes.last().unwrap();
        assert_eq!(last.center_shift_thz, 48.0);
        assert!(t.modes.iter().all(|m| m.amplitude >= last.amplitude));
        let g: Vec<f64> = (0..=40).map(|k| t.gain_density(45.0 + 0.1 * k as f64).unwrap()).collect();
        let imax = (1..g.len() - 1).find(|&i| g[i] > g[i - 1] && g[i] >= g[i + 1]).expect("local maximum");
        let w = 45.0 + 0.1 * imax as f64;
        assert!((46.5..=49.0).contains(&w), "{w}");
    }

    #[test]
    fn o_band_ordering_from_1550_pump() {
        let t = RamanGainTable::default();
        let r1290 = ratio(&t, 1290.0, 1310.0);
        let r1330 = ratio(&t, 1330.0, 1310.0);
        assert!((0.05..=0.2).contains(&r1290), "{r1290}");
        assert!((1.5..=2.5).contains(&r1330), "{r1330}");
        assert!(ratio(&t, 1282.0, 1290.0) < 1.0);
    }

    #[test]
    fn stokes_regime_is_unsupported() {
        let t = RamanGainTable::default();
        let link = FiberLink::installed_default();
        let c = ClassicalChannel { wavelength_nm: 1310.0, launch_power_dbm: 0.0 };
        assert!(matches!(t.sprs_rate(&c, 1550.0, 50.0, &link, Direction::Co), Err(Error::UnsupportedRegime { .. })));
        assert!(matches!(t.sprs_rate(&c, 1310.0, 50.0, &link, Direction::Co), Err(Error::UnsupportedRegime { .. })));
    }

    #[test]
    fn zero_power_gives_zero_rate() {
        let t = RamanGainTable::default();
        let c = ClassicalChannel { wavelength_nm: 1550.0, launch_power_dbm: f64::NEG_INFINITY };
        assert_eq!(t.sprs_rate(&c, 1310.0, 50.0, &FiberLink::installed_default(), Direction::Co).unwrap(), 0.0);
    }

    #[test]
    fn effective_lengths_limits() {
        assert!((co_propagating_length(0.0, 0.0, 10.0) - 10.0).abs() < 1e-15);
        let a = 0.07;
        let l = 30.0;
        let exact = l * (-a * l as f64).exp();
        for eps in [1e-6, 1e-9, 1e-12] {
            let v = co_propagating_length(a, a + eps, l);
            assert!((v - exact).abs() / exact < 1e-9 + 20.0 * eps * l, "{eps}: {v} {exact}");
        }
        assert_eq!(co_propagating_length(a, a, l), exact);
        let b = counter_propagating_length(0.05, 0.04, 1e4);
        assert!((b - 1.0 / 0.09).abs() < 1e-12);
    }

    #[test]
    fn table_json_round_trip() {
        let t = RamanGainTable::default();
        let back = RamanGainTable::from_json(&t.to_json()).unwrap();
        assert_eq!(t, back);
    }

    proptest! {
        #[test]
        fn densities_are_non_negative(w in 0.0f64..=60.0, temp in 1.0f64..1000.0) {
            let t = RamanGainTable::default().with_temperature(temp).unwrap();
            prop_assert!(t.gain_density(w).unwrap() >= 0.0);
            prop_assert!(t.scattering_density(w, Side::AntiStokes).unwrap() >= 0.0);
        }

        #[test]
        fn stokes_exceeds_anti_stokes(w in 0.5f64..=60.0, temp in 1.0f64..1000.0) {
            let t = RamanGainTable::default().with_temperature(temp).unwrap();
            let a = t.scattering_density(w, Side::AntiStokes).unwrap();
            let s = t.scattering_density(w, Side::Stokes).unwrap();
            prop_assert!(s > a || (s == 0.0 && a == 0.0));
        }

        #[test]
        fn occupation_monotone(w in 0.1f64..60.0, dw in 0.01f64..5.0, temp in 1.0f64..1000.0, dt in 0.1f64..100.0) {
            let n = phonon_occupation(w, temp).unwrap();
            prop_assert!(phonon_occupation(w + dw, temp).unwrap() < n);
            prop_assert!(phonon_occupation(w, temp + dt).unwrap() > n);
        }

        #[test]
        fn rate_is_linear_in_power_and_bandwidth(
            p in -10.0f64..20.0, bw in 1.0f64..200.0, q in 1265.0f64..1340.0, c in 1530.0f64..1600.0,
        ) {
            let t = RamanGainTable::default();
            let link = FiberLink::installed_default();
            let ch = ClassicalChannel { wavelength_nm: c, launch_power_dbm: p };
            let ch2 = ClassicalChannel { wavelength_nm: c, launch_power_dbm: p + 10.0 * 2f64.log10() };
            let r1 = t.sprs_rate(&ch, q, bw, &link, Direction::Co).unwrap();
            let r2 = t.sprs_rate(&ch2, q, bw, &link, Direction::Co).unwrap();
            let r3 = t.sprs_rate(&ch, q, 2.0 * bw, &link, Direction::Co).unwrap();
            prop_assert!((r2 / r1 - 2.0).abs() < 1e-12);
            prop_assert!((r3 / r1 - 2.0).abs() < 1e-12);
        }
    }
}

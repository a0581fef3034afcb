//! Pulsed polarization-entangled pair source and energy-conserving channel
//! pairs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::units::{ghz_to_nm_width, nm_to_thz, thz_to_nm};

/// O-band limits for quantum channel centres, nm.
pub const O_BAND_NM: (f64, f64) = (1260.0, 1360.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EppSource {
    pub pump_nm: f64,
    pub rep_rate_hz: f64,
    pub pulse_fwhm_ps: f64,
    /// Mean pairs per pulse in the selected channel pair.
    pub mu: f64,
    pub joint_fwhm_nm: f64,
    pub phase_rad: f64,
    /// Treat the joint spectrum as flat at its peak density.
    pub flat_spectrum: bool,
}

impl Default for EppSource {
    fn default() -> Self {
        Self {
            pump_nm: 1300.0,
            rep_rate_hz: 416.7e6,
            pulse_fwhm_ps: 80.0,
            mu: 0.01,
            joint_fwhm_nm: 40.0,
            phase_rad: 0.0,
            flat_spectrum: false,
        }
    }
}

impl EppSource {
    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Domain(format!("mu = {} must be >= 0", self.mu)));
        }
        if !(self.rep_rate_hz > 0.0) {
            return Err(Error::Domain("repetition rate must be positive".into()));
        }
        if !(self.joint_fwhm_nm > 0.0) {
            return Err(Error::Domain("joint spectrum FWHM must be positive".into()));
        }
        if !(self.pump_nm > 0.0) {
            return Err(Error::Domain("pump wavelength must be positive".into()));
        }
        Ok(())
    }

    /// Pulse period in ps.
    pub fn period_ps(&self) -> f64 {
        1e12 / self.rep_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumChannel {
    pub center_nm: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_ghz: f64,
}

fn default_bandwidth() -> f64 {
    50.0
}

impl QuantumChannel {
    pub fn new(center_nm: f64, bandwidth_ghz: f64) -> Result<Self> {
        let c = Self { center_nm, bandwidth_ghz };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_ghz > 0.0) {
            return Err(Error::Domain(format!("channel bandwidth {} GHz must be positive", self.bandwidth_ghz)));
        }
        let (lo, hi) = O_BAND_NM;
        if !(self.center_nm >= lo && self.center_nm <= hi) {
            return Err(Error::Range { quantity: "channel_center_nm", value: self.center_nm, min: lo, max: hi });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPair {
    pub signal: QuantumChannel,
    pub idler: QuantumChannel,
}

impl ChannelPair {
    /// Pair checked against energy conservation about `pump_nm`.
    pub fn new(signal: QuantumChannel, idler: QuantumChannel, pump_nm: f64) -> Result<Self> {
        let p = Self { signal, idler };
        p.validate(pump_nm)?;
        Ok(p)
    }

    /// Pair with the idler placed at the exact conjugate of `signal_nm`.
    pub fn from_signal(signal_nm: f64, bandwidth_ghz: f64, pump_nm: f64) -> Result<Self> {
        let idler_nm = conjugate_wavelength(signal_nm, pump_nm)?;
        Self::new(QuantumChannel::new(signal_nm, bandwidth_ghz)?, QuantumChannel::new(idler_nm, bandwidth_ghz)?, pump_nm)
    }

    /// Frequency mismatch `ν_s + ν_i − 2ν_p` in THz.
    pub fn detuning_thz(&self, pump_nm: f64) -> f64 {
        nm_to_thz(self.signal.center_nm) + nm_to_thz(self.idler.center_nm) - 2.0 * nm_to_thz(pump_nm)
    }

    pub fn validate(&self, pump_nm: f64) -> Result<()> {
        self.signal.validate()?;
        self.idler.validate()?;
        let tol = self.signal.bandwidth_ghz.max(self.idler.bandwidth_ghz) * 1e-3;
        let d = self.detuning_thz(pump_nm);
        if d.abs() > tol {
            return Err(Error::Domain(format!(
                "pair ({:.3}, {:.3}) nm violates energy conservation by {:.1} GHz",
                self.signal.center_nm,
                self.idler.center_nm,
                d * 1e3
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("{:.2}/{:.2}", self.signal.center_nm, self.idler.center_nm)
    }
}

/// Energy-conjugate wavelength of `signal_nm` about a degenerate point `pump_nm`.
pub fn conjugate_wavelength(signal_nm: f64, pump_nm: f64) -> Result<f64> {
    let inv = 2.0 / pump_nm - 1.0 / signal_nm;
    if !(inv > 0.0) || !inv.is_finite() {
        return Err(Error::Domain(format!("no positive-frequency conjugate for {signal_nm} nm about {pump_nm} nm")));
    }
    Ok(1.0 / inv)
}

/// Fraction of generated pairs landing in `pair`'s filters.
pub fn spectral_weight(source: &EppSource, pair: &ChannelPair) -> f64 {
    let sigma = source.joint_fwhm_nm / (8.0 * std::f64::consts::LN_2).sqrt();
    let normal = Normal::new(source.pump_nm, sigma).expect("positive width");
    let ch = pair.signal;
    let width = ghz_to_nm_width(ch.bandwidth_ghz, ch.center_nm);
    let w = if source.flat_spectrum {
        let peak = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        2.0 * peak * width
    } else {
        2.0 * (normal.cdf(ch.center_nm + 0.5 * width) - normal.cdf(ch.center_nm - 0.5 * width))
    };
    w.min(1.0)
}

/// Energy-conjugate pairs on a uniform frequency grid about the pump's
/// degenerate point. A pair is kept when either member lies in
/// `[band_start_nm, band_end_nm]` and both lie in the O-band.
pub fn channel_grid(band_start_nm: f64, band_end_nm: f64, spacing_ghz: f64, pump_nm: f64) -> Vec<ChannelPair> {
    let (lo, hi) = (band_start_nm.min(band_end_nm), band_start_nm.max(band_end_nm));
    if !(hi > lo) || !(spacing_ghz > 0.0) || !(pump_nm > 0.0) {
        return Vec::new();
    }
    let nu_p = nm_to_thz(pump_nm);
    let step = spacing_ghz * 1e-3;
    let mut out = Vec::new();
    for k in 1.. {
        let nu_s = nu_p + k as f64 * step;
        let nu_i = nu_p - k as f64 * step;
        if nu_i <= 0.0 {
            break;
        }
        let (ls, li) = (thz_to_nm(nu_s), thz_to_nm(nu_i));
        if ls < lo && li > hi {
            break;
        }
        let in_band = (lo..=hi).contains(&ls) || (lo..=hi).contains(&li);
        let in_o = (O_BAND_NM.0..=O_BAND_NM.1).contains(&ls) && (O_BAND_NM.0..=O_BAND_NM.1).contains(&li);
        if in_band && in_o {
            let s = QuantumChannel { center_nm: ls, bandwidth_ghz: spacing_ghz };
            let i = QuantumChannel { center_nm: li, bandwidth_ghz: spacing_ghz };
            out.push(ChannelPair { signal: s, idler: i });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conjugates() {
        assert!((conjugate_wavelength(1300.0, 1300.0).unwrap() - 1300.0).abs() < 1e-9);
        assert!((conjugate_wavelength(1287.0, 1300.0).unwrap() - 1313.26).abs() < 0.01);
        assert!((conjugate_wavelength(1282.0, 1300.0).unwrap() - 1318.5).abs() < 0.05);
        assert!(matches!(conjugate_wavelength(600.0, 1300.0), Err(Error::Domain(_))));
    }

    #[test]
    fn central_pair_has_greatest_weight() {
        let src = EppSource::default();
        let grid = channel_grid(1282.0, 1318.0, 50.0, 1300.0);
        let w0 = spectral_weight(&src, &grid[0]);
        assert!(grid.iter().all(|p| spectral_weight(&src, p) <= w0));
        let near = ChannelPair::from_signal(1287.0, 50.0, 1300.0).unwrap();
        let far = ChannelPair::from_signal(1282.0, 50.0, 1300.0).unwrap();
        assert!(spectral_weight(&src, &near) > spectral_weight(&src, &far));
    }

    #[test]
    fn weight_doubles_with_bandwidth_near_centre() {
        let src = EppSource::default();
        let a = ChannelPair::from_signal(1299.0, 50.0, 1300.0).unwrap();
        let b = ChannelPair::from_signal(1299.0, 100.0, 1300.0).unwrap();
        let r = spectral_weight(&src, &b) / spectral_weight(&src, &a);
        assert!((r - 2.0).abs() < 1e-3, "{r}");
    }

    #[test]
    fn grid_weights_sum_to_at_most_one() {
        let src = EppSource { joint_fwhm_nm: 10.0, ..EppSource::default() };
        let grid = channel_grid(1260.0, 1340.0, 50.0, 1300.0);
        let total: f64 = grid.iter().map(|p| spectral_weight(&src, p)).sum();
        assert!(total <= 1.0 && total > 0.95, "{total}");
    }

    #[test]
    fn grid_contains_1287_pair() {
        let grid = channel_grid(1282.0, 1318.0, 50.0, 1300.0);
        assert!(!grid.is_empty());
        let p = grid
            .iter()
            .find(|p| (nm_to_thz(p.signal.center_nm) - nm_to_thz(1287.0)).abs() <= 0.05)
            .expect("pair near 1287");
        assert!((nm_to_thz(p.idler.center_nm) - nm_to_thz(1313.0)).abs() <= 0.05);
        for p in &grid {
            p.validate(1300.0).unwrap();
            assert!(p.signal.center_nm < p.idler.center_nm);
        }
    }

    #[test]
    fn empty_and_one_sided_bands() {
        assert!(channel_grid(1290.0, 1290.0, 50.0, 1300.0).is_empty());
        let one = channel_grid(1282.0, 1295.0, 50.0, 1300.0);
        assert!(!one.is_empty());
        assert!(one.iter().all(|p| p.signal.center_nm <= 1295.0 && p.idler.center_nm > 1300.0));
    }

    #[test]
    fn mismatched_pair_is_rejected() {
        let s = QuantumChannel::new(1287.0, 50.0).unwrap();
        let i = QuantumChannel::new(1320.0, 50.0).unwrap();
        assert!(ChannelPair::new(s, i, 1300.0).is_err());
        assert!(QuantumChannel::new(1550.0, 50.0).is_err());
    }

    proptest! {
        #[test]
        fn conjugate_is_an_involution(s in 1200.0f64..1400.0, p in 1250.0f64..1350.0) {
            let i = conjugate_wavelength(s, p).unwrap();
            let back = conjugate_wavelength(i, p).unwrap();
            prop_assert!((back - s).abs() < 1e-9);
        }

        #[test]
        fn grid_pairs_conserve_energy(lo in 1262.0f64..1300.0, span in 0.5f64..40.0, spacing in 10.0f64..200.0) {
            for p in channel_grid(lo, lo + span, spacing, 1300.0) {
                prop_assert!(p.validate(1300.0).is_ok());
            }
        }
    }
}

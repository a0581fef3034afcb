//! Physical constants and unit conversions shared across modules.

/// Speed of light in vacuum, nm·THz.
pub const C_NM_THZ: f64 = 299_792.458;
/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// dB → nepers-per-power factor (ln 10 / 10).
pub const DB_TO_NATURAL: f64 = std::f64::consts::LN_10 / 10.0;

#[inline]
pub fn nm_to_thz(wavelength_nm: f64) -> f64 {
    C_NM_THZ / wavelength_nm
}

#[inline]
pub fn thz_to_nm(frequency_thz: f64) -> f64 {
    C_NM_THZ / frequency_thz
}

/// Frequency offset ν_classical − ν_quantum in THz.
#[inline]
pub fn raman_offset_thz(classical_nm: f64, quantum_nm: f64) -> f64 {
    nm_to_thz(quantum_nm) - nm_to_thz(classical_nm)
}

#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[inline]
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Linear transmission of a `loss_db` attenuation.
#[inline]
pub fn db_to_transmission(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Filter width in nm at `center_nm` for a width of `bandwidth_ghz`.
#[inline]
pub fn ghz_to_nm_width(bandwidth_ghz: f64, center_nm: f64) -> f64 {
    center_nm * center_nm * bandwidth_ghz * 1e-3 / C_NM_THZ
}

/// Power sum of a set of dBm values.
pub fn dbm_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    mw_to_dbm(values.into_iter().map(dbm_to_mw).sum())
}

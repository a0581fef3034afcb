//! C ABI for the qcoex noise and rate model.
//!
//! Every fallible call returns a [`QcoexStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and
//! can be read with [`qcoex_last_error_message`]. Handles are opaque and
//! must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qcoex::network::{AttenuationTable, Direction, FiberLink};
use qcoex::raman::{phonon_occupation, RamanGainTable};
use qcoex::rates::{coincidence_rates, filter_window_scaling, ArmConfig, CoincidenceConfig, DetectorModel};
use qcoex::source::{conjugate_wavelength, EppSource};
use qcoex::units::dbm_to_mw;
use qcoex::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcoexStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Domain = 3,
    Infeasible = 4,
    NonConvergence = 5,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcoexDirection {
    CoPropagating = 0,
    CounterPropagating = 1,
}

/// Raman gain table.
pub struct QcoexModel {
    table: RamanGainTable,
}

/// Fiber span with a wavelength-dependent attenuation curve.
pub struct QcoexLink {
    link: FiberLink,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QcoexSource {
    pub rep_rate_hz: f64,
    /// Mean pairs per pulse in the channel pair.
    pub mu: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QcoexArm {
    /// Source-to-detector loss.
    pub loss_db: f64,
    /// Raman noise reaching the detector, photons/s.
    pub noise_cps: f64,
    pub efficiency: f64,
    pub dark_rate_cps: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QcoexRates {
    pub singles_signal: f64,
    pub singles_idler: f64,
    pub true_coincidences: f64,
    pub accidentals: f64,
    pub multipair: f64,
    pub ccr: f64,
    pub car: f64,
    pub visibility: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QcoexStatus {
    match e.exit_code() {
        2 => QcoexStatus::Config,
        4 => QcoexStatus::Infeasible,
        5 => QcoexStatus::NonConvergence,
        _ => QcoexStatus::Domain,
    }
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), QcoexError>) -> QcoexStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QcoexStatus::Ok,
        Ok(Err(QcoexError::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            QcoexStatus::NullPointer
        }
        Ok(Err(QcoexError::Model(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            QcoexStatus::Internal
        }
    }
}

enum QcoexError {
    Null(&'static str),
    Model(Error),
}

impl From<Error> for QcoexError {
    fn from(e: Error) -> Self {
        QcoexError::Model(e)
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, QcoexError> {
    p.as_ref().ok_or(QcoexError::Null(what))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), QcoexError> {
    if out.is_null() {
        return Err(QcoexError::Null("out"));
    }
    out.write(value);
    Ok(())
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next qcoex call on the same thread.
#[no_mangle]
pub extern "C" fn qcoex_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Model with the shipped, calibrated gain table.
#[no_mangle]
pub extern "C" fn qcoex_model_new_default() -> *mut QcoexModel {
    Box::into_raw(Box::new(QcoexModel { table: RamanGainTable::default() }))
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qcoex_model_from_table_json(json: *const c_char, out: *mut *mut QcoexModel) -> QcoexStatus {
    guard(|| {
        if json.is_null() {
            return Err(QcoexError::Null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| Error::Config(e.to_string()))?;
        let table = RamanGainTable::from_json(text)?;
        write(out, Box::into_raw(Box::new(QcoexModel { table })))
    })
}

/// # Safety
/// `model` must come from a qcoex constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qcoex_model_free(model: *mut QcoexModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qcoex_gain_density(model: *const QcoexModel, offset_thz: f64, out: *mut f64) -> QcoexStatus {
    guard(|| {
        let m = deref(model, "model")?;
        write(out, m.table.gain_density(offset_thz)?)
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcoex_phonon_occupation(offset_thz: f64, temperature_k: f64, out: *mut f64) -> QcoexStatus {
    guard(|| write(out, phonon_occupation(offset_thz, temperature_k)?))
}

/// Noise photons/s at the end of `link` in a `bandwidth_ghz` filter at
/// `quantum_nm`, from one classical channel.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qcoex_sprs_rate(
    model: *const QcoexModel,
    link: *const QcoexLink,
    classical_nm: f64,
    launch_dbm: f64,
    quantum_nm: f64,
    bandwidth_ghz: f64,
    direction: QcoexDirection,
    out: *mut f64,
) -> QcoexStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let l = deref(link, "link")?;
        let dir = match direction {
            QcoexDirection::CoPropagating => Direction::Co,
            QcoexDirection::CounterPropagating => Direction::Counter,
        };
        write(out, m.table.sprs_rate_at_mw(classical_nm, dbm_to_mw(launch_dbm), quantum_nm, bandwidth_ghz, &l.link, dir)?)
    })
}

/// Link from `n` attenuation knots (nm, dB/km), linearly interpolated.
///
/// # Safety
/// `knots_nm` and `knots_db_per_km` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn qcoex_link_new(
    length_km: f64,
    knots_nm: *const f64,
    knots_db_per_km: *const f64,
    n: usize,
    excess_loss_db: f64,
    out: *mut *mut QcoexLink,
) -> QcoexStatus {
    guard(|| {
        if knots_nm.is_null() || knots_db_per_km.is_null() {
            return Err(QcoexError::Null("knots"));
        }
        let nm = std::slice::from_raw_parts(knots_nm, n);
        let db = std::slice::from_raw_parts(knots_db_per_km, n);
        let table = AttenuationTable::new(nm.iter().copied().zip(db.iter().copied()).collect())?;
        let link = FiberLink::new("ffi", length_km, table, excess_loss_db)?;
        write(out, Box::into_raw(Box::new(QcoexLink { link })))
    })
}

/// The 47.9 km installed link of the reference deployment.
#[no_mangle]
pub extern "C" fn qcoex_link_new_installed() -> *mut QcoexLink {
    Box::into_raw(Box::new(QcoexLink { link: FiberLink::installed_default() }))
}

/// # Safety
/// `link` must come from a qcoex constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qcoex_link_free(link: *mut QcoexLink) {
    if !link.is_null() {
        drop(Box::from_raw(link));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qcoex_link_loss_db(link: *const QcoexLink, wavelength_nm: f64, out: *mut f64) -> QcoexStatus {
    guard(|| {
        let l = deref(link, "link")?;
        write(out, l.link.loss_db(wavelength_nm)?)
    })
}

fn arm(a: &QcoexArm) -> ArmConfig {
    ArmConfig {
        loss_db: a.loss_db,
        noise_cps: a.noise_cps,
        detector: DetectorModel { efficiency: a.efficiency, dark_rate_cps: a.dark_rate_cps, ..Default::default() },
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qcoex_coincidence_rates(
    source: *const QcoexSource,
    signal: *const QcoexArm,
    idler: *const QcoexArm,
    window_ps: f64,
    out: *mut QcoexRates,
) -> QcoexStatus {
    guard(|| {
        let s = deref(source, "source")?;
        let src = EppSource { rep_rate_hz: s.rep_rate_hz, mu: s.mu, ..Default::default() };
        let (a, b) = (arm(deref(signal, "signal")?), arm(deref(idler, "idler")?));
        let p = coincidence_rates(&src, 1.0, &a, &b, &CoincidenceConfig { window_ps })?;
        write(
            out,
            QcoexRates {
                singles_signal: p.singles_signal,
                singles_idler: p.singles_idler,
                true_coincidences: p.true_coincidences,
                accidentals: p.accidentals,
                multipair: p.multipair_orthogonal,
                ccr: p.ccr,
                car: p.car,
                visibility: p.visibility_hv,
            },
        )
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcoex_filter_window_scaling(bw_from_ghz: f64, bw_to_ghz: f64, win_from_ps: f64, win_to_ps: f64, out: *mut f64) -> QcoexStatus {
    guard(|| write(out, filter_window_scaling(bw_from_ghz, bw_to_ghz, win_from_ps, win_to_ps)?))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qcoex_conjugate_wavelength(signal_nm: f64, pump_nm: f64, out: *mut f64) -> QcoexStatus {
    guard(|| write(out, conjugate_wavelength(signal_nm, pump_nm)?))
}

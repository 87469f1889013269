//! C interface to `nfloc`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` style
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`NflStatus`]; on failure a message is kept per thread and can
//! be read with [`nfl_last_error`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nfloc::dma::{self, DmaWeights, Regime};
use nfloc::experiment::{estimate_trial, Architecture, RunOptions, ScenarioConfig};
use nfloc::geometry::{self, ArrayLayout, PolarPosition};
use nfloc::signal::WaveguideModel;
use nfloc::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NflStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IndexOutOfRange = 3,
    DimensionMismatch = 4,
    BufferTooSmall = 5,
    DegenerateCandidate = 6,
    EstimationFailed = 7,
    Io = 8,
    Panic = 9,
}

/// Weight constraint. Passed as `int32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NflRegime {
    Lorentzian = 0,
    PhaseOnly = 1,
}

/// Receiver architecture for [`nfl_estimate_once`]. Passed as `int32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NflArchitecture {
    FullyDigital = 0,
    DmaHalf = 1,
    DmaQuarter = 2,
}

/// Output of [`nfl_estimate_once`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NflEstimate {
    pub d_m: f64,
    pub theta_rad: f64,
    pub error_m: f64,
    pub seed: u64,
}

/// Opaque microstrip layout.
pub struct NflLayout(ArrayLayout);

/// Opaque DMA weight set.
pub struct NflWeights(DmaWeights);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(NflStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Index { .. } => NflStatus::IndexOutOfRange,
            Error::Dimension { .. } => NflStatus::DimensionMismatch,
            Error::Config(_) | Error::Parse { .. } => NflStatus::InvalidArgument,
            Error::DegenerateCandidate(_) => NflStatus::DegenerateCandidate,
            Error::EstimationFailure(_) => NflStatus::EstimationFailed,
            Error::Io { .. } | Error::Csv { .. } => NflStatus::Io,
        };
        Fail(code, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NflStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(NflStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NflStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NflStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            NflStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { p.write(value) };
    Ok(())
}

fn regime(code: i32) -> Result<Regime, Fail> {
    match code {
        0 => Ok(Regime::Lorentzian),
        1 => Ok(Regime::PhaseOnly),
        _ => Err(invalid(format!("unknown regime {code}"))),
    }
}

fn architecture(code: i32) -> Result<Architecture, Fail> {
    match code {
        0 => Ok(Architecture::FullyDigital),
        1 => Ok(Architecture::DmaHalf),
        2 => Ok(Architecture::DmaQuarter),
        _ => Err(invalid(format!("unknown architecture {code}"))),
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn nfl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Free-space wavelength in meters.
#[no_mangle]
pub extern "C" fn nfl_wavelength(carrier_hz: f64) -> f64 {
    geometry::wavelength(carrier_hz)
}

/// Phase `2 pi distance / lambda` in radians, not wrapped.
#[no_mangle]
pub extern "C" fn nfl_phase_delay(distance_m: f64, carrier_hz: f64) -> f64 {
    geometry::phase_delay(distance_m, carrier_hz)
}

/// Uniform layout: `n_strips` strips of `per_strip` elements.
#[no_mangle]
pub unsafe extern "C" fn nfl_layout_new(
    n_strips: usize,
    per_strip: usize,
    element_spacing_m: f64,
    strip_pitch_m: f64,
    out: *mut *mut NflLayout,
) -> NflStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let layout = ArrayLayout::uniform(n_strips, per_strip, element_spacing_m, strip_pitch_m)?;
        unsafe { write(out, Box::into_raw(Box::new(NflLayout(layout))), "out") }
    })
}

/// Releases a layout. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn nfl_layout_free(layout: *mut NflLayout) {
    if !layout.is_null() {
        drop(unsafe { Box::from_raw(layout) });
    }
}

/// Total element count, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn nfl_layout_len(layout: *const NflLayout) -> usize {
    unsafe { layout.as_ref() }.map_or(0, |l| l.0.len())
}

/// Distance from element `(strip, element)` to the source at polar `(d, theta)`.
#[no_mangle]
pub unsafe extern "C" fn nfl_element_distance(
    layout: *const NflLayout,
    strip: usize,
    element: usize,
    d_m: f64,
    theta_rad: f64,
    out: *mut f64,
) -> NflStatus {
    guard(|| {
        let l = unsafe { deref(layout, "layout") }?;
        let src = PolarPosition::new(d_m, theta_rad)?;
        let v = l.0.element_source_distance(strip, element, src)?;
        unsafe { write(out, v, "out") }
    })
}

/// Fraunhofer distance `2 D^2 / lambda` of the layout's aperture.
#[no_mangle]
pub unsafe extern "C" fn nfl_fraunhofer_distance(
    layout: *const NflLayout,
    carrier_hz: f64,
    out: *mut f64,
) -> NflStatus {
    guard(|| {
        let l = unsafe { deref(layout, "layout") }?;
        if !(carrier_hz > 0.0 && carrier_hz.is_finite()) {
            return Err(invalid("carrier must be positive"));
        }
        unsafe { write(out, l.0.fraunhofer_distance(carrier_hz), "out") }
    })
}

/// Phase-only weights focused on `(d, theta)` through strips with uniform
/// attenuation `alpha` (Np/m) and wavenumber `beta` (rad/m).
#[no_mangle]
pub unsafe extern "C" fn nfl_weights_tuned(
    layout: *const NflLayout,
    alpha: f64,
    beta: f64,
    d_m: f64,
    theta_rad: f64,
    carrier_hz: f64,
    out: *mut *mut NflWeights,
) -> NflStatus {
    guard(|| {
        let l = unsafe { deref(layout, "layout") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let wg = WaveguideModel::uniform(l.0.n_strips(), alpha, beta)?;
        let focus = PolarPosition::new(d_m, theta_rad)?;
        if !(carrier_hz > 0.0 && carrier_hz.is_finite()) {
            return Err(invalid("carrier must be positive"));
        }
        let w = dma::tune_weights(&l.0, &wg, focus, carrier_hz)?;
        unsafe { write(out, Box::into_raw(Box::new(NflWeights(w))), "out") }
    })
}

/// Independent uniform phases from `seed`. `regime_code` is an [`NflRegime`] value.
#[no_mangle]
pub unsafe extern "C" fn nfl_weights_random(
    layout: *const NflLayout,
    regime_code: i32,
    seed: u64,
    out: *mut *mut NflWeights,
) -> NflStatus {
    guard(|| {
        let l = unsafe { deref(layout, "layout") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let w = dma::random_weights(&l.0, regime(regime_code)?, seed);
        unsafe { write(out, Box::into_raw(Box::new(NflWeights(w))), "out") }
    })
}

/// New handle holding the Lorentzian projection of `weights`.
#[no_mangle]
pub unsafe extern "C" fn nfl_weights_project_lorentzian(
    weights: *const NflWeights,
    out: *mut *mut NflWeights,
) -> NflStatus {
    guard(|| {
        let w = unsafe { deref(weights, "weights") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = dma::project_lorentzian(&w.0);
        unsafe { write(out, Box::into_raw(Box::new(NflWeights(p))), "out") }
    })
}

/// Releases a weight set. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn nfl_weights_free(weights: *mut NflWeights) {
    if !weights.is_null() {
        drop(unsafe { Box::from_raw(weights) });
    }
}

/// Element count, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn nfl_weights_len(weights: *const NflWeights) -> usize {
    unsafe { weights.as_ref() }.map_or(0, |w| w.0.len())
}

/// Regime of the weight set as an [`NflRegime`] value, -1 for NULL.
#[no_mangle]
pub unsafe extern "C" fn nfl_weights_regime(weights: *const NflWeights) -> i32 {
    match unsafe { weights.as_ref() }.map(|w| w.0.regime()) {
        Some(Regime::Lorentzian) => NflRegime::Lorentzian as i32,
        Some(Regime::PhaseOnly) => NflRegime::PhaseOnly as i32,
        None => -1,
    }
}

/// Copies the phases, strip-major, into `buf[0..len)`.
#[no_mangle]
pub unsafe extern "C" fn nfl_weights_phases(
    weights: *const NflWeights,
    buf: *mut f64,
    len: usize,
) -> NflStatus {
    guard(|| {
        let w = unsafe { deref(weights, "weights") }?;
        let src = w.0.phases();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < src.len() {
            return Err(Fail(
                NflStatus::BufferTooSmall,
                format!("need {} entries, got {len}", src.len()),
            ));
        }
        let dst = unsafe { std::slice::from_raw_parts_mut(buf, src.len()) };
        dst.copy_from_slice(src);
        Ok(())
    })
}

/// Copies the complex coefficients into separate real and imaginary buffers.
#[no_mangle]
pub unsafe extern "C" fn nfl_weights_coefficients(
    weights: *const NflWeights,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> NflStatus {
    guard(|| {
        let w = unsafe { deref(weights, "weights") }?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        let n = w.0.len();
        if len < n {
            return Err(Fail(
                NflStatus::BufferTooSmall,
                format!("need {n} entries, got {len}"),
            ));
        }
        let (re, im) = unsafe {
            (
                std::slice::from_raw_parts_mut(re, n),
                std::slice::from_raw_parts_mut(im, n),
            )
        };
        for (k, c) in w.0.coefficients().into_iter().enumerate() {
            re[k] = c.re;
            im[k] = c.im;
        }
        Ok(())
    })
}

/// Hash of the phase field, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn nfl_weights_checksum(weights: *const NflWeights) -> u64 {
    unsafe { weights.as_ref() }.map_or(0, |w| w.0.checksum())
}

/// One estimate with the default scenario and master `seed`, identical to
/// trial `trial` of the RMSE sweep at `snr_db`. DMA architectures return the
/// estimate after the last tuning round. `workers` of 0 uses every core.
#[no_mangle]
pub unsafe extern "C" fn nfl_estimate_once(
    architecture_code: i32,
    snr_db: f64,
    seed: u64,
    trial: usize,
    workers: usize,
    out: *mut NflEstimate,
) -> NflStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if snr_db.is_nan() {
            return Err(invalid("snr is NaN"));
        }
        let arch = architecture(architecture_code)?;
        let cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let opts = if workers == 0 {
            RunOptions::default()
        } else {
            RunOptions::with_workers(workers)
        };
        let one = estimate_trial(&cfg, arch, snr_db, trial, opts)?;
        let est = NflEstimate {
            d_m: one.estimate.d,
            theta_rad: one.estimate.theta,
            error_m: one.error_m,
            seed: one.seed,
        };
        unsafe { write(out, est, "out") }
    })
}

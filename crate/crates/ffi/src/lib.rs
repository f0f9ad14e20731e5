//! C ABI over the frengate library.
//!
//! Results live behind opaque handles released with the matching `_free`
//! function. Every fallible call returns an `FrgStatus` code; the message of the
//! last failure on the calling thread is available from `frg_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use frengate::coupling::CouplingSpec;
use frengate::dynamics::{evolve, DecayConfig, DecayTrajectory};
use frengate::entanglement::{
    schmidt_on_grid, success_probability_analytic, success_probability_numeric, SchmidtSpectrum,
};
use frengate::scattering::{gaussian_input, scatter, GaussianInput, ScatterResult};
use frengate::spectral::{ChannelLabel, FrequencyGrid, PhysicalParams};
use frengate::Error;

pub const FRG_OK: i32 = 0;
pub const FRG_ERR_IO: i32 = 1;
pub const FRG_ERR_CONFIG: i32 = 2;
pub const FRG_ERR_DOMAIN: i32 = 3;
pub const FRG_ERR_CONVERGENCE: i32 = 4;
pub const FRG_ERR_NULL: i32 = -1;
pub const FRG_ERR_PANIC: i32 = -2;
pub const FRG_ERR_BUFFER: i32 = -3;

pub type FrgStatus = i32;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> FrgStatus {
    match e {
        Error::Config(_) => FRG_ERR_CONFIG,
        Error::Domain(_) => FRG_ERR_DOMAIN,
        Error::Convergence(_) => FRG_ERR_CONVERGENCE,
        Error::Io(_) => FRG_ERR_IO,
    }
}

fn guard(f: impl FnOnce() -> Result<(), FrgStatus>) -> FrgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FRG_OK,
        Ok(Err(code)) => code,
        Err(_) => {
            set_error("panic inside frengate".into());
            FRG_ERR_PANIC
        }
    }
}

fn lift<T>(r: frengate::Result<T>) -> Result<T, FrgStatus> {
    r.map_err(|e| {
        let code = status_of(&e);
        set_error(e.to_string());
        code
    })
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), FrgStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        Err(FRG_ERR_NULL)
    } else {
        Ok(())
    }
}

/// Physical parameters in units of ω_2X.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FrgParams {
    pub omega_2x: f64,
    pub omega_x: f64,
    pub delta_x: f64,
    pub s: f64,
    pub gamma: f64,
    pub d: f64,
    pub omega_e: f64,
    pub omega_b: f64,
    pub tau: f64,
}

impl From<FrgParams> for PhysicalParams {
    fn from(p: FrgParams) -> Self {
        PhysicalParams {
            omega_2x: p.omega_2x,
            omega_x: p.omega_x,
            delta_x: p.delta_x,
            s: p.s,
            gamma: p.gamma,
            d: p.d,
            omega_e: p.omega_e,
            omega_b: p.omega_b,
            tau: p.tau,
        }
    }
}

impl From<PhysicalParams> for FrgParams {
    fn from(p: PhysicalParams) -> Self {
        FrgParams {
            omega_2x: p.omega_2x,
            omega_x: p.omega_x,
            delta_x: p.delta_x,
            s: p.s,
            gamma: p.gamma,
            d: p.d,
            omega_e: p.omega_e,
            omega_b: p.omega_b,
            tau: p.tau,
        }
    }
}

/// Opaque scattering result.
pub struct FrgScatter {
    result: ScatterResult,
    p_success: f64,
}

/// Opaque Schmidt spectrum.
pub struct FrgSchmidt {
    spectrum: SchmidtSpectrum,
}

/// Opaque decay trajectory.
pub struct FrgDecay {
    trajectory: DecayTrajectory,
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to `len`).
/// Returns the full message length in bytes.
#[no_mangle]
pub unsafe extern "C" fn frg_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

#[no_mangle]
pub extern "C" fn frg_params_default() -> FrgParams {
    PhysicalParams::default().into()
}

/// 3r/(2(1+r²)).
#[no_mangle]
pub extern "C" fn frg_success_probability_analytic(ratio: f64) -> f64 {
    success_probability_analytic(ratio)
}

/// Gaussian input (width `alpha`) through an isotropic Gaussian coupling of width `beta`
/// on a `points`² grid of half-width `half_width` around (ω_e, ω_b).
#[no_mangle]
pub unsafe extern "C" fn frg_scatter_gaussian(
    params: *const FrgParams,
    alpha: f64,
    beta: f64,
    half_width: f64,
    points: usize,
    out: *mut *mut FrgScatter,
) -> FrgStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        let p: PhysicalParams = (*params).into();
        let spec = GaussianInput { alpha, omega_e: p.omega_e, omega_b: p.omega_b };
        let grid = lift(FrequencyGrid::centered(p.omega_e, p.omega_b, half_width, points))?;
        let input = lift(gaussian_input(&spec, &grid))?;
        let coupling = CouplingSpec::isotropic(beta, p.gamma, p.omega_e - p.omega_b);
        let result = lift(scatter(&input, &coupling, &p))?;
        let p_success = lift(success_probability_numeric(&result, &input))?.p_success;
        *out = Box::into_raw(Box::new(FrgScatter { result, p_success }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frg_scatter_free(handle: *mut FrgScatter) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Channel index: 0 = (+,+), 1 = (−,−), 2 = (−,+), 3 = (+,−).
fn channel(index: u32) -> Result<ChannelLabel, FrgStatus> {
    ChannelLabel::ALL.get(index as usize).copied().ok_or_else(|| {
        set_error(format!("channel index {index} out of range 0..4"));
        FRG_ERR_CONFIG
    })
}

#[no_mangle]
pub unsafe extern "C" fn frg_scatter_probability(handle: *const FrgScatter, ch: u32, out: *mut f64) -> FrgStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(out, "out")?;
        let label = channel(ch)?;
        let h = &*handle;
        *out = h.result.probabilities().iter().find(|(c, _)| *c == label).map(|(_, p)| *p).unwrap_or(f64::NAN);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frg_scatter_success(handle: *const FrgScatter, out: *mut f64) -> FrgStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(out, "out")?;
        *out = (&*handle).p_success;
        Ok(())
    })
}

/// Number of grid samples per channel field.
#[no_mangle]
pub unsafe extern "C" fn frg_scatter_field_len(handle: *const FrgScatter) -> usize {
    if handle.is_null() {
        return 0;
    }
    (&*handle).result.fields[0].values.len()
}

/// Copies one channel field (row-major over ω, then ω′) into `re` and `im`.
#[no_mangle]
pub unsafe extern "C" fn frg_scatter_field(
    handle: *const FrgScatter,
    ch: u32,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> FrgStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(re, "re")?;
        non_null(im, "im")?;
        let f = (&*handle).result.field(channel(ch)?);
        if len < f.values.len() {
            set_error(format!("buffer holds {len} values, field has {}", f.values.len()));
            return Err(FRG_ERR_BUFFER);
        }
        for (k, z) in f.values.iter().enumerate() {
            *re.add(k) = z.re;
            *im.add(k) = z.im;
        }
        Ok(())
    })
}

/// Grid-SVD Schmidt spectrum of one channel.
#[no_mangle]
pub unsafe extern "C" fn frg_schmidt_from_scatter(
    handle: *const FrgScatter,
    ch: u32,
    out: *mut *mut FrgSchmidt,
) -> FrgStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(out, "out")?;
        let f = (&*handle).result.field(channel(ch)?).clone();
        let spectrum = lift(schmidt_on_grid(&lift(f.normalize())?))?;
        *out = Box::into_raw(Box::new(FrgSchmidt { spectrum }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frg_schmidt_free(handle: *mut FrgSchmidt) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[no_mangle]
pub unsafe extern "C" fn frg_schmidt_number(handle: *const FrgSchmidt) -> f64 {
    if handle.is_null() {
        return f64::NAN;
    }
    (&*handle).spectrum.schmidt_number
}

#[no_mangle]
pub unsafe extern "C" fn frg_schmidt_entropy(handle: *const FrgSchmidt) -> f64 {
    if handle.is_null() {
        return f64::NAN;
    }
    (&*handle).spectrum.entropy_nats
}

/// Copies up to `len` Schmidt coefficients, largest first; `written` receives the count.
#[no_mangle]
pub unsafe extern "C" fn frg_schmidt_lambdas(
    handle: *const FrgSchmidt,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> FrgStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(buf, "buf")?;
        let l = &(&*handle).spectrum.lambdas;
        let n = l.len().min(len);
        ptr::copy_nonoverlapping(l.as_ptr(), buf, n);
        if !written.is_null() {
            *written = n;
        }
        Ok(())
    })
}

/// Runs a decay preset ("adiabatic" or "resonant"); `n_freq` = 0 keeps the preset size
/// and a NaN `g0` keeps the preset coupling.
#[no_mangle]
pub unsafe extern "C" fn frg_decay_preset(
    preset: *const c_char,
    n_freq: usize,
    g0: f64,
    t_max: f64,
    out: *mut *mut FrgDecay,
) -> FrgStatus {
    guard(|| {
        non_null(preset, "preset")?;
        non_null(out, "out")?;
        let name = CStr::from_ptr(preset).to_str().map_err(|_| {
            set_error("preset is not UTF-8".into());
            FRG_ERR_CONFIG
        })?;
        let mut cfg = lift(DecayConfig::preset(name))?;
        if n_freq > 0 {
            cfg.n_freq = n_freq;
        }
        if !g0.is_nan() {
            cfg.g0 = g0;
        }
        if t_max > 0.0 {
            cfg.t_max = t_max;
        }
        let trajectory = lift(evolve(&cfg))?;
        *out = Box::into_raw(Box::new(FrgDecay { trajectory }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn frg_decay_free(handle: *mut FrgDecay) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[no_mangle]
pub unsafe extern "C" fn frg_decay_len(handle: *const FrgDecay) -> usize {
    if handle.is_null() {
        return 0;
    }
    (&*handle).trajectory.times.len()
}

/// Copies t, P_0, P_X and P_2X samples; any output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn frg_decay_samples(
    handle: *const FrgDecay,
    t: *mut f64,
    p0: *mut f64,
    px: *mut f64,
    p2x: *mut f64,
    len: usize,
) -> FrgStatus {
    guard(|| {
        non_null(handle, "handle")?;
        let tr = &(&*handle).trajectory;
        if len < tr.times.len() {
            set_error(format!("buffer holds {len} samples, trajectory has {}", tr.times.len()));
            return Err(FRG_ERR_BUFFER);
        }
        for (dst, src) in [(t, &tr.times), (p0, &tr.p0), (px, &tr.px), (p2x, &tr.p2x)] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
            }
        }
        Ok(())
    })
}

/// Fitted P_2X decay rate, or NaN when the fit was rejected.
#[no_mangle]
pub unsafe extern "C" fn frg_decay_rate(handle: *const FrgDecay) -> f64 {
    if handle.is_null() {
        return f64::NAN;
    }
    (&*handle).trajectory.fit.as_ref().map(|f| f.gamma).unwrap_or(f64::NAN)
}

#[no_mangle]
pub unsafe extern "C" fn frg_decay_max_px(handle: *const FrgDecay) -> f64 {
    if handle.is_null() {
        return f64::NAN;
    }
    (&*handle).trajectory.max_px()
}

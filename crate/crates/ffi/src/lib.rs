//! C ABI for the heidih simulation library.
//!
//! Every function returns a [`HeidihStatus`] and writes results through out
//! pointers. Kernels and paths are opaque handles that must be released with
//! the matching `*_free` function. Panics never cross the boundary; they are
//! reported as [`HeidihStatus::Panic`].

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use heidih::heat_fem::{solve_path, step_count, FemSystem, SampledNoise, YPath};
use heidih::kernels::{KernelSpec, MaternParams, WeightFn};
use heidih::noise::{CirculantConfig, IncrementSampler, Lane, NoiseGrid, SeedPolicy};
use heidih::price_fd::{beta_increments, solve_x, InitialCurve, PriceGrid};
use heidih::profile::Profile;
use heidih::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeidihStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    EmbeddingFailed = 3,
    Numerical = 4,
    Panic = 5,
}

impl From<&Error> for HeidihStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::EmbeddingFailed { .. } => HeidihStatus::EmbeddingFailed,
            Error::Factorization | Error::DegenerateForm(_) | Error::Truncation(_) => HeidihStatus::Numerical,
            _ => HeidihStatus::InvalidArgument,
        }
    }
}

/// Weight function of the noise kernel.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeidihWeightKind {
    /// `w = 1`; parameters ignored.
    Constant = 0,
    /// `p1·(1 + x²)^{−p0}`.
    Polynomial = 1,
    /// Bump with center `p0`, half-width `p1`, amplitude `p2`.
    Bump = 2,
}

/// Model and discretization for path simulation. The initial volatility is
/// zero and the initial forward curve is the constant `x0_level`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HeidihModel {
    pub diffusivity: f64,
    pub horizon: f64,
    pub domain: f64,
    pub h: f64,
    pub k: f64,
    pub scaling: f64,
    pub x0_level: f64,
}

/// Opaque noise kernel.
pub struct HeidihKernel(KernelSpec);

/// Opaque row-major matrix of path values (time × space).
pub struct HeidihPath {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

fn guard(f: impl FnOnce() -> HeidihStatus) -> HeidihStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(HeidihStatus::Panic)
}

fn status<T>(r: heidih::Result<T>, write: impl FnOnce(T)) -> HeidihStatus {
    match r {
        Ok(v) => {
            write(v);
            HeidihStatus::Ok
        }
        Err(e) => HeidihStatus::from(&e),
    }
}

/// Modified Bessel function of the second kind `K_ν(x)`, `ν ≥ 0`, `x > 0`.
///
/// # Safety
/// `out` must be null or valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn heidih_bessel_k(nu: f64, x: f64, out: *mut f64) -> HeidihStatus {
    guard(|| {
        if out.is_null() {
            return HeidihStatus::NullPointer;
        }
        status(heidih::special::bessel_k(nu, x), |v| unsafe { *out = v })
    })
}

/// Creates the kernel `w(x)·q(x − y)·w(y)` with a Matérn `q`.
///
/// # Safety
/// `out` must be null or valid for a write of one pointer.
#[no_mangle]
pub unsafe extern "C" fn heidih_kernel_new(
    nu: f64,
    mu: f64,
    zeta: f64,
    weight: HeidihWeightKind,
    p0: f64,
    p1: f64,
    p2: f64,
    out: *mut *mut HeidihKernel,
) -> HeidihStatus {
    guard(|| {
        if out.is_null() {
            return HeidihStatus::NullPointer;
        }
        let w = match weight {
            HeidihWeightKind::Constant => WeightFn::Constant,
            HeidihWeightKind::Polynomial => WeightFn::Polynomial { alpha: p0, scale: p1 },
            HeidihWeightKind::Bump => WeightFn::Bump {
                center: p0,
                half_width: p1,
                amplitude: p2,
            },
        };
        let spec = MaternParams::new(nu, mu, zeta).and_then(|m| KernelSpec::new(m, w));
        status(spec, |s| unsafe { *out = Box::into_raw(Box::new(HeidihKernel(s))) })
    })
}

/// Evaluates the kernel at `(x, y)`.
///
/// # Safety
/// `kernel` must come from [`heidih_kernel_new`]; `out` must be valid for a
/// write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn heidih_kernel_eval(
    kernel: *const HeidihKernel,
    x: f64,
    y: f64,
    out: *mut f64,
) -> HeidihStatus {
    guard(|| {
        if kernel.is_null() || out.is_null() {
            return HeidihStatus::NullPointer;
        }
        if !(x.is_finite() && y.is_finite()) {
            return HeidihStatus::InvalidArgument;
        }
        unsafe { *out = (*kernel).0.eval(x, y) };
        HeidihStatus::Ok
    })
}

/// Releases a kernel; null is ignored.
///
/// # Safety
/// `kernel` must be null or come from [`heidih_kernel_new`] and not have
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn heidih_kernel_free(kernel: *mut HeidihKernel) {
    if !kernel.is_null() {
        drop(unsafe { Box::from_raw(kernel) });
    }
}

fn simulate_y(kernel: &KernelSpec, m: &HeidihModel, seed: u64) -> heidih::Result<YPath> {
    let system = FemSystem::assemble(NoiseGrid::with_step(m.domain, m.h)?, m.diffusivity, m.k)?;
    let sampler = IncrementSampler::new(kernel, *system.grid(), CirculantConfig::default())?;
    let mut noise = SampledNoise::new(&sampler, SeedPolicy::new(seed).rng(0, 0, Lane::Noise), m.k);
    solve_path(&system, &Profile::default(), &mut noise, step_count(m.horizon, m.k)?)
}

unsafe fn simulate(
    kernel: *const HeidihKernel,
    model: *const HeidihModel,
    out: *mut *mut HeidihPath,
    f: impl FnOnce(&KernelSpec, &HeidihModel) -> heidih::Result<HeidihPath>,
) -> HeidihStatus {
    guard(|| {
        if kernel.is_null() || model.is_null() || out.is_null() {
            return HeidihStatus::NullPointer;
        }
        let (k, m) = unsafe { (&(*kernel).0, &*model) };
        status(f(k, m), |p| unsafe { *out = Box::into_raw(Box::new(p)) })
    })
}

/// Simulates one volatility path; rows are time levels `0..=T/k`, columns
/// the nodes `0..=D/h`.
///
/// # Safety
/// Pointers must be null or valid; `out` receives a handle to release with
/// [`heidih_path_free`].
#[no_mangle]
pub unsafe extern "C" fn heidih_simulate_ypath(
    kernel: *const HeidihKernel,
    model: *const HeidihModel,
    seed: u64,
    out: *mut *mut HeidihPath,
) -> HeidihStatus {
    unsafe {
        simulate(kernel, model, out, |k, m| {
            let y = simulate_y(k, m, seed)?;
            Ok(HeidihPath {
                rows: y.rows(),
                cols: y.grid().node_count(),
                values: y.values().to_vec(),
            })
        })
    }
}

/// Simulates one price lattice driven by the volatility path with the same
/// seed; rows are times `0..=T/k`, columns maturities `0..=T/k`. Requires
/// `h = k` and `D ≥ 2T − k`.
///
/// # Safety
/// As for [`heidih_simulate_ypath`].
#[no_mangle]
pub unsafe extern "C" fn heidih_simulate_xpath(
    kernel: *const HeidihKernel,
    model: *const HeidihModel,
    seed: u64,
    out: *mut *mut HeidihPath,
) -> HeidihStatus {
    unsafe {
        simulate(kernel, model, out, |k, m| {
            let y = simulate_y(k, m, seed)?;
            let grid = PriceGrid::new(m.horizon, m.k)?;
            let beta = beta_increments(&mut SeedPolicy::new(seed).rng(0, 0, Lane::Beta), grid.steps(), m.k);
            let curve = InitialCurve::new(Profile::default(), m.x0_level);
            let x = solve_x(&grid, &curve, m.scaling, &y, &beta)?;
            Ok(HeidihPath {
                rows: grid.steps() + 1,
                cols: grid.steps() + 1,
                values: x.values().to_vec(),
            })
        })
    }
}

/// Number of rows and columns of a path.
///
/// # Safety
/// `path` must be a live handle; `rows` and `cols` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn heidih_path_dims(path: *const HeidihPath, rows: *mut usize, cols: *mut usize) -> HeidihStatus {
    guard(|| {
        if path.is_null() || rows.is_null() || cols.is_null() {
            return HeidihStatus::NullPointer;
        }
        unsafe {
            *rows = (*path).rows;
            *cols = (*path).cols;
        }
        HeidihStatus::Ok
    })
}

/// Copies the `rows·cols` values, row-major, into `buf` of length `len`.
///
/// # Safety
/// `path` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn heidih_path_copy(path: *const HeidihPath, buf: *mut f64, len: usize) -> HeidihStatus {
    guard(|| {
        if path.is_null() || buf.is_null() {
            return HeidihStatus::NullPointer;
        }
        let p = unsafe { &*path };
        if len < p.values.len() {
            return HeidihStatus::InvalidArgument;
        }
        unsafe { ptr::copy_nonoverlapping(p.values.as_ptr(), buf, p.values.len()) };
        HeidihStatus::Ok
    })
}

/// Releases a path; null is ignored.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn heidih_path_free(path: *mut HeidihPath) {
    if !path.is_null() {
        drop(unsafe { Box::from_raw(path) });
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn heidih_status_message(status: HeidihStatus) -> *const std::os::raw::c_char {
    let s: &'static [u8] = match status {
        HeidihStatus::Ok => b"ok\0",
        HeidihStatus::NullPointer => b"null pointer argument\0",
        HeidihStatus::InvalidArgument => b"invalid argument\0",
        HeidihStatus::EmbeddingFailed => b"circulant embedding failed\0",
        HeidihStatus::Numerical => b"numerical failure\0",
        HeidihStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

//! C ABI over the stochastic Allen-Cahn laboratory.
//!
//! Conventions: objects are opaque handles created by `acs_*_new*` functions
//! and released by the matching `acs_*_free`; fallible calls return an
//! [`AcsStatus`] and write results through out-pointers. Handles are not
//! thread-safe unless stated; treat each as externally synchronized.

use acsharp::interface::{limit_sde, standing_wave, StandingWave};
use acsharp::noise::kernel::{build_kernel, CovarianceKernel, KernelDescriptor, ModeSpec};
use acsharp::noise::mollify::{mollify, MollifiedPath};
use acsharp::noise::path::{sample_path, NoisePath, PointSet};
use acsharp::reaction::{validate_reaction, ReactionFunction};
use acsharp::scalar::{flow_ode, flow_sde};
use std::ffi::c_char;
use std::sync::Arc;

/// Status codes returned by fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ValidationFailed = 3,
    NumericalFailure = 4,
    CapabilityMissing = 5,
}

fn status_of(err: &acsharp::Error) -> AcsStatus {
    use acsharp::Error::*;
    match err {
        ReactionInvalid(_) | KernelPsd(_) | InitialCondition(_) => AcsStatus::ValidationFailed,
        KernelCapability(_) => AcsStatus::CapabilityMissing,
        Parameter(_) | Precondition(_) | Config(_) | StepSize { .. } => AcsStatus::InvalidArgument,
        _ => AcsStatus::NumericalFailure,
    }
}

/// Opaque bistable reaction term.
pub struct AcsReaction(ReactionFunction);
/// Opaque covariance kernel.
pub struct AcsKernel(CovarianceKernel);
/// Opaque sampled Q-Wiener path.
pub struct AcsPath(Arc<NoisePath>);
/// Opaque mollified path.
pub struct AcsMollified(MollifiedPath);
/// Opaque standing wave profile.
pub struct AcsStandingWave(StandingWave);

/// Version string of the underlying library; static storage, do not free.
#[no_mangle]
pub extern "C" fn acs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// The cubic reaction `f(u) = u - u³` with the bound constant `c0`.
/// Returns null if `c0 <= 0`.
#[no_mangle]
pub extern "C" fn acs_reaction_new_cubic(c0: f64) -> *mut AcsReaction {
    if !(c0 > 0.0) {
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(AcsReaction(ReactionFunction::cubic(c0))))
}

/// Odd polynomial `f(u) = Σ coeffs[k] u^{2k+1}`.
///
/// # Safety
/// `coeffs` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn acs_reaction_new_odd_poly(
    coeffs: *const f64,
    len: usize,
    c0: f64,
) -> *mut AcsReaction {
    if coeffs.is_null() || len == 0 || !(c0 > 0.0) {
        return std::ptr::null_mut();
    }
    let cs = std::slice::from_raw_parts(coeffs, len);
    Box::into_raw(Box::new(AcsReaction(ReactionFunction::odd_polynomial(
        cs, c0,
    ))))
}

/// # Safety
/// `h` must be a pointer from `acs_reaction_new_*`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acs_reaction_free(h: *mut AcsReaction) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Derived constants `(μ, p, C_f)`.
///
/// # Safety
/// `h` must be a live reaction handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn acs_reaction_constants(
    h: *const AcsReaction,
    out_mu: *mut f64,
    out_p: *mut f64,
    out_cf: *mut f64,
) -> AcsStatus {
    if h.is_null() || out_mu.is_null() || out_p.is_null() || out_cf.is_null() {
        return AcsStatus::NullPointer;
    }
    let f = &(*h).0;
    *out_mu = f.mu();
    *out_p = f.p_decay();
    *out_cf = f.c_f();
    AcsStatus::Ok
}

/// Run the structural validation at `lattice_step`; writes 1 into
/// `out_valid` iff all six conditions hold.
///
/// # Safety
/// `h` must be a live reaction handle; `out_valid` writable.
#[no_mangle]
pub unsafe extern "C" fn acs_reaction_validate(
    h: *const AcsReaction,
    lattice_step: f64,
    out_valid: *mut bool,
) -> AcsStatus {
    if h.is_null() || out_valid.is_null() {
        return AcsStatus::NullPointer;
    }
    match validate_reaction(&(*h).0, lattice_step) {
        Ok(report) => {
            *out_valid = report.is_valid();
            AcsStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Evaluate `f(u)`.
///
/// # Safety
/// `h` must be a live reaction handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn acs_reaction_eval(
    h: *const AcsReaction,
    u: f64,
    out: *mut f64,
) -> AcsStatus {
    if h.is_null() || out.is_null() {
        return AcsStatus::NullPointer;
    }
    *out = (*h).0.f(u);
    AcsStatus::Ok
}

/// Separable bump kernel `Q(x,y) = a(x)a(y)`,
/// `a(x) = amplitude Π_i exp(-1/(1-(x_i/radius)²))`. Null on invalid input.
#[no_mangle]
pub extern "C" fn acs_kernel_new_separable_bump(
    dim: usize,
    radius: f64,
    amplitude: f64,
) -> *mut AcsKernel {
    if dim == 0 || dim > 3 || !(radius > 0.0) || !(amplitude > 0.0) {
        return std::ptr::null_mut();
    }
    match build_kernel(&KernelDescriptor::Separable {
        amplitude,
        factor: ModeSpec::bump(dim, radius),
    }) {
        Ok(k) => Box::into_raw(Box::new(AcsKernel(k))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `h` must be a pointer from `acs_kernel_new_*`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acs_kernel_free(h: *mut AcsKernel) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Evaluate `Q(x, y)`.
///
/// # Safety
/// `x` and `y` must point to `dim` readable doubles matching the kernel's
/// dimension; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn acs_kernel_eval(
    h: *const AcsKernel,
    x: *const f64,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> AcsStatus {
    if h.is_null() || x.is_null() || y.is_null() || out.is_null() {
        return AcsStatus::NullPointer;
    }
    let k = &(*h).0;
    if dim != k.dim() {
        return AcsStatus::InvalidArgument;
    }
    let xs = std::slice::from_raw_parts(x, dim);
    let ys = std::slice::from_raw_parts(y, dim);
    *out = k.q(xs, ys);
    AcsStatus::Ok
}

/// Sample a Q-Wiener path on `n_times` grid times (starting at 0) over
/// `n_points` points of dimension `dim` (coords row-major). Deterministic
/// per seed. Null on invalid input.
///
/// # Safety
/// `times` must hold `n_times` doubles; `coords` must hold
/// `n_points * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn acs_path_sample(
    kernel: *const AcsKernel,
    times: *const f64,
    n_times: usize,
    coords: *const f64,
    n_points: usize,
    dim: usize,
    seed: u64,
) -> *mut AcsPath {
    if kernel.is_null() || times.is_null() || coords.is_null() || n_times == 0 || n_points == 0 {
        return std::ptr::null_mut();
    }
    let grid = std::slice::from_raw_parts(times, n_times);
    let pts = std::slice::from_raw_parts(coords, n_points * dim);
    match sample_path(
        &(*kernel).0,
        grid,
        PointSet::new(dim, pts.to_vec()),
        seed,
    ) {
        Ok(p) => Box::into_raw(Box::new(AcsPath(Arc::new(p)))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `h` must be a pointer from `acs_path_sample`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acs_path_free(h: *mut AcsPath) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// `W` at time index `time_idx` (0 ⇒ 0) and point index `point_idx`.
///
/// # Safety
/// `h` must be a live path handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn acs_path_value(
    h: *const AcsPath,
    time_idx: usize,
    point_idx: usize,
    out: *mut f64,
) -> AcsStatus {
    if h.is_null() || out.is_null() {
        return AcsStatus::NullPointer;
    }
    let p = &(*h).0;
    if time_idx >= p.n_times() || point_idx >= p.points().len() {
        return AcsStatus::InvalidArgument;
    }
    *out = p.value(time_idx, point_idx);
    AcsStatus::Ok
}

/// Mollify a path at uniform error `delta` with Hölder exponent
/// `alpha ∈ (0, 1/2)`. The path handle stays valid and reusable.
///
/// # Safety
/// `path` must be a live path handle.
#[no_mangle]
pub unsafe extern "C" fn acs_path_mollify(
    path: *const AcsPath,
    delta: f64,
    alpha: f64,
) -> *mut AcsMollified {
    if path.is_null() {
        return std::ptr::null_mut();
    }
    match mollify((*path).0.clone(), delta, alpha) {
        Ok(m) => Box::into_raw(Box::new(AcsMollified(m))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `h` must be a pointer from `acs_path_mollify`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acs_mollified_free(h: *mut AcsMollified) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// `W^(δ)(t)` at an arbitrary time for one point index.
///
/// # Safety
/// `h` must be a live mollified handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn acs_mollified_value(
    h: *const AcsMollified,
    t: f64,
    point_idx: usize,
    out: *mut f64,
) -> AcsStatus {
    if h.is_null() || out.is_null() {
        return AcsStatus::NullPointer;
    }
    let m = &(*h).0;
    if point_idx >= m.base().points().len() {
        return AcsStatus::InvalidArgument;
    }
    *out = m.eval(t, point_idx);
    AcsStatus::Ok
}

/// Measured sup over the grid of `|W - W^(δ)|` (≤ delta by construction).
///
/// # Safety
/// `h` must be a live mollified handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn acs_mollified_sup_error(
    h: *const AcsMollified,
    out: *mut f64,
) -> AcsStatus {
    if h.is_null() || out.is_null() {
        return AcsStatus::NullPointer;
    }
    *out = (*h).0.measured_sup_error();
    AcsStatus::Ok
}

/// Terminal value `Y(tau_end, xi)` of the comparison ODE.
///
/// # Safety
/// `reaction` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn acs_flow_ode_final(
    reaction: *const AcsReaction,
    xi: f64,
    tau_end: f64,
    step: f64,
    out: *mut f64,
) -> AcsStatus {
    if reaction.is_null() || out.is_null() {
        return AcsStatus::NullPointer;
    }
    match flow_ode(&(*reaction).0, xi, tau_end, step) {
        Ok(traj) => {
            *out = traj.last();
            AcsStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Terminal value `Y^ε(tau_end, xi, x)` of the noisy flow, seeded.
///
/// # Safety
/// Handles must be live; `x` must hold `dim` doubles matching the kernel;
/// `out` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn acs_flow_sde_final(
    reaction: *const AcsReaction,
    kernel: *const AcsKernel,
    xi: f64,
    x: *const f64,
    dim: usize,
    eps: f64,
    gamma: f64,
    tau_end: f64,
    step: f64,
    seed: u64,
    out: *mut f64,
) -> AcsStatus {
    if reaction.is_null() || kernel.is_null() || x.is_null() || out.is_null() {
        return AcsStatus::NullPointer;
    }
    let k = &(*kernel).0;
    if dim != k.dim() {
        return AcsStatus::InvalidArgument;
    }
    let xs = std::slice::from_raw_parts(x, dim);
    match flow_sde(&(*reaction).0, k, xi, xs, eps, gamma, tau_end, step, seed) {
        Ok(traj) => {
            *out = traj.last();
            AcsStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Build the standing wave of a reaction. Null on construction failure.
///
/// # Safety
/// `reaction` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn acs_standing_wave_new(
    reaction: *const AcsReaction,
) -> *mut AcsStandingWave {
    if reaction.is_null() {
        return std::ptr::null_mut();
    }
    match standing_wave(&(*reaction).0) {
        Ok(m) => Box::into_raw(Box::new(AcsStandingWave(m))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `h` must be a pointer from `acs_standing_wave_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acs_standing_wave_free(h: *mut AcsStandingWave) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Evaluate the profile `m(x)`.
///
/// # Safety
/// `h` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn acs_standing_wave_eval(
    h: *const AcsStandingWave,
    x: f64,
    out: *mut f64,
) -> AcsStatus {
    if h.is_null() || out.is_null() {
        return AcsStatus::NullPointer;
    }
    *out = (*h).0.profile(x);
    AcsStatus::Ok
}

/// Terminal value of the limiting interface SDE
/// `dξ = α₁ a(ξ) dB + α₂ a(ξ) a'(ξ) dt` with the bump coefficient
/// `a(x) = amplitude exp(-1/(1-(x/radius)²))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn acs_limit_sde_final(
    alpha1: f64,
    alpha2: f64,
    xi0: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
    radius: f64,
    amplitude: f64,
    out: *mut f64,
) -> AcsStatus {
    if out.is_null() {
        return AcsStatus::NullPointer;
    }
    if !(radius > 0.0) || !(dt > 0.0) || !(t_end >= 0.0) {
        return AcsStatus::InvalidArgument;
    }
    let a = move |x: f64| {
        let s = x / radius;
        if s.abs() < 1.0 {
            amplitude * (-1.0 / (1.0 - s * s)).exp()
        } else {
            0.0
        }
    };
    let ap = move |x: f64| {
        let s = x / radius;
        if s.abs() < 1.0 {
            let w = 1.0 - s * s;
            a(x) * (-2.0 * s / (w * w)) / radius
        } else {
            0.0
        }
    };
    let p = limit_sde(&a, &ap, alpha1, alpha2, xi0, t_end, dt, seed);
    *out = *p.xi.last().unwrap();
    AcsStatus::Ok
}

//! C ABI for `kahler_dirichlet`.
//!
//! Objects live behind opaque handles created by `*_new`/`*_random` calls and
//! released with the matching `*_free`. Every fallible call returns a
//! [`KdStatus`]; on failure a message is kept per thread and can be read with
//! [`kd_last_error_message`]. Tangent vectors cross the boundary as plain
//! fields and are projected to `e^u`-mean zero at the potential they are used with.

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kahler_dirichlet::curvature::{dirichlet_bound, sectional};
use kahler_dirichlet::dynamics::{integrate_geodesic, kenergy_entropy, kenergy_gradient, pseudo_calabi_flow};
use kahler_dirichlet::kahler::{
    green_solve, project_tangent, random_hessian_scaled, GreenOptions, KahlerPotential, TangentVector,
};
use kahler_dirichlet::metrics::{inner, MetricKind};
use kahler_dirichlet::spectral::{build_spec, ScalarField, TorusSpec};
use kahler_dirichlet::KahlerError;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidSpec = 3,
    PositivityViolation = 4,
    MeanNotZero = 5,
    NoConvergence = 6,
    DegeneratePlane = 7,
    GridMismatch = 8,
    NonFinite = 9,
    AnchorMismatch = 10,
    Io = 11,
    Panic = 12,
}

/// Metric selector, passed as `uint32_t` to the pairing and curvature calls.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KdMetric {
    Mabuchi = 0,
    Calabi = 1,
    Dirichlet = 2,
}

fn metric_kind(m: u32) -> Result<MetricKind, Failure> {
    match m {
        x if x == KdMetric::Mabuchi as u32 => Ok(MetricKind::Mabuchi),
        x if x == KdMetric::Calabi as u32 => Ok(MetricKind::Calabi),
        x if x == KdMetric::Dirichlet as u32 => Ok(MetricKind::Dirichlet),
        _ => Err(Failure(KdStatus::InvalidArgument, format!("unknown metric {m}"))),
    }
}

/// Periodic grid on the flat torus of complex dimension 1 or 2.
pub struct KdTorus {
    spec: TorusSpec,
}

/// Real field sampled on a torus grid.
pub struct KdField {
    field: ScalarField,
}

/// Admissible Kähler potential with its cached metric data.
pub struct KdPotential {
    potential: KahlerPotential,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &KahlerError) -> KdStatus {
    match e {
        KahlerError::InvalidSpec(_) => KdStatus::InvalidSpec,
        KahlerError::PositivityViolation { .. } => KdStatus::PositivityViolation,
        KahlerError::MeanNotZero { .. } => KdStatus::MeanNotZero,
        KahlerError::NoConvergence { .. } => KdStatus::NoConvergence,
        KahlerError::DegeneratePlane { .. } => KdStatus::DegeneratePlane,
        KahlerError::GridMismatch => KdStatus::GridMismatch,
        KahlerError::NonFinite(_) | KahlerError::NonPositiveDensity { .. } => KdStatus::NonFinite,
        KahlerError::AnchorMismatch => KdStatus::AnchorMismatch,
        KahlerError::Io(_) => KdStatus::Io,
        KahlerError::Config(_) => KdStatus::InvalidArgument,
    }
}

struct Failure(KdStatus, String);

impl From<KahlerError> for Failure {
    fn from(e: KahlerError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> KdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            KdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside kahler_dirichlet".into());
            KdStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(KdStatus::NullPointer, format!("{name} is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Outcome {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn same_grid(a: &TorusSpec, b: &TorusSpec) -> Outcome {
    if a == b {
        Ok(())
    } else {
        Err(Failure(KdStatus::GridMismatch, "operands live on different grids".into()))
    }
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kd_last_error_message(buf: *mut c_char, len: usize) -> usize {
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

/// Create a torus with complex dimension `n` and `grid` nodes per real axis.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn kd_torus_new(n: usize, grid: usize, out: *mut *mut KdTorus) -> KdStatus {
    guard(|| {
        let spec = build_spec(n, grid)?;
        write_out(out, boxed(KdTorus { spec }), "out")
    })
}

/// # Safety
/// `torus` must be null or a handle from [`kd_torus_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kd_torus_free(torus: *mut KdTorus) {
    if !torus.is_null() {
        drop(Box::from_raw(torus));
    }
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `torus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kd_torus_len(torus: *const KdTorus) -> usize {
    torus.as_ref().map_or(0, |t| t.spec.len())
}

/// Copy `len` row-major values into a new field on `torus`.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_field_from_values(
    torus: *const KdTorus,
    values: *const f64,
    len: usize,
    out: *mut *mut KdField,
) -> KdStatus {
    guard(|| {
        let t = deref(torus, "torus")?;
        if values.is_null() {
            return Err(null("values"));
        }
        if len != t.spec.len() {
            return Err(Failure(
                KdStatus::InvalidArgument,
                format!("expected {} values, got {len}", t.spec.len()),
            ));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let field = ScalarField::new(&t.spec, v)?;
        write_out(out, boxed(KdField { field }), "out")
    })
}

/// Seeded band-limited field whose flat complex Hessian has sup-norm `amplitude`.
///
/// # Safety
/// `torus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_field_random(
    torus: *const KdTorus,
    seed: u64,
    amplitude: f64,
    out: *mut *mut KdField,
) -> KdStatus {
    guard(|| {
        let t = deref(torus, "torus")?;
        if !amplitude.is_finite() {
            return Err(Failure(KdStatus::InvalidArgument, "amplitude must be finite".into()));
        }
        let field = random_hessian_scaled(&t.spec, seed, amplitude);
        write_out(out, boxed(KdField { field }), "out")
    })
}

/// Number of values in a field, or 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kd_field_len(field: *const KdField) -> usize {
    field.as_ref().map_or(0, |f| f.field.values().len())
}

/// Copy the field values into `buf`, which must hold exactly `len` doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kd_field_copy_values(field: *const KdField, buf: *mut f64, len: usize) -> KdStatus {
    guard(|| {
        let f = deref(field, "field")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = f.field.values();
        if len != v.len() {
            return Err(Failure(KdStatus::InvalidArgument, format!("buffer holds {len}, field has {}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kd_field_free(field: *mut KdField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Build the potential `phi` (dealiased and recentred); fails with
/// `PositivityViolation` when `g + i∂∂̄φ` is not positive definite.
///
/// # Safety
/// `torus` and `phi` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_potential_new(
    torus: *const KdTorus,
    phi: *const KdField,
    out: *mut *mut KdPotential,
) -> KdStatus {
    guard(|| {
        let t = deref(torus, "torus")?;
        let f = deref(phi, "phi")?;
        same_grid(&t.spec, f.field.spec())?;
        let potential = KahlerPotential::new(&t.spec, &f.field)?;
        write_out(out, boxed(KdPotential { potential }), "out")
    })
}

/// # Safety
/// `potential` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kd_potential_free(potential: *mut KdPotential) {
    if !potential.is_null() {
        drop(Box::from_raw(potential));
    }
}

/// Smallest eigenvalue of the metric minus the admissibility threshold.
///
/// # Safety
/// `potential` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_potential_margin(potential: *const KdPotential, out: *mut f64) -> KdStatus {
    guard(|| {
        let p = deref(potential, "potential")?;
        write_out(out, p.potential.positivity_margin(), "out")
    })
}

/// Copy of the stored (dealiased, mean-zero) potential function.
///
/// # Safety
/// `potential` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_potential_phi(potential: *const KdPotential, out: *mut *mut KdField) -> KdStatus {
    guard(|| {
        let p = deref(potential, "potential")?;
        write_out(out, boxed(KdField { field: p.potential.phi().clone() }), "out")
    })
}

/// `field − ∫ field e^u`, the tangent representative at `potential`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_project_tangent(
    potential: *const KdPotential,
    field: *const KdField,
    out: *mut *mut KdField,
) -> KdStatus {
    guard(|| {
        let p = deref(potential, "potential")?;
        let f = deref(field, "field")?;
        same_grid(p.potential.spec(), f.field.spec())?;
        let t = project_tangent(&p.potential, &f.field).into_field();
        write_out(out, boxed(KdField { field: t }), "out")
    })
}

unsafe fn tangents<'a>(
    potential: *const KdPotential,
    a: *const KdField,
    b: *const KdField,
) -> Result<(&'a KahlerPotential, TangentVector, TangentVector), Failure> {
    let p = &deref(potential, "potential")?.potential;
    let a = deref(a, "a")?;
    let b = deref(b, "b")?;
    same_grid(p.spec(), a.field.spec())?;
    same_grid(p.spec(), b.field.spec())?;
    Ok((p, project_tangent(p, &a.field), project_tangent(p, &b.field)))
}

/// Pairing `⟨a, b⟩` of two tangent vectors under `metric`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_inner(
    metric: u32,
    potential: *const KdPotential,
    a: *const KdField,
    b: *const KdField,
    out: *mut f64,
) -> KdStatus {
    guard(|| {
        let (p, x, y) = tangents(potential, a, b)?;
        write_out(out, inner(metric_kind(metric)?, p, &x, &y)?, "out")
    })
}

/// Sectional curvature of the plane spanned by `a` and `b`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_sectional(
    metric: u32,
    potential: *const KdPotential,
    a: *const KdField,
    b: *const KdField,
    out: *mut f64,
) -> KdStatus {
    guard(|| {
        let (p, x, y) = tangents(potential, a, b)?;
        write_out(out, sectional(metric_kind(metric)?, p, &x, &y)?.value, "out")
    })
}

/// Explicit bound on `|K_D(a, χ)|` over all Dirichlet-unit `χ ⟂ a`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_dirichlet_bound(potential: *const KdPotential, a: *const KdField, out: *mut f64) -> KdStatus {
    guard(|| {
        let (p, x, _) = tangents(potential, a, a)?;
        write_out(out, dirichlet_bound(p, &x)?, "out")
    })
}

/// `w` with `Δ_φ w = v` and `∫ w e^u = 0`; `v` must have `∫ v e^u = 0`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_green_solve(
    potential: *const KdPotential,
    v: *const KdField,
    out: *mut *mut KdField,
) -> KdStatus {
    guard(|| {
        let p = &deref(potential, "potential")?.potential;
        let v = deref(v, "v")?;
        same_grid(p.spec(), v.field.spec())?;
        let w = green_solve(p, &v.field, &GreenOptions::default())?;
        write_out(out, boxed(KdField { field: w }), "out")
    })
}

/// Integrate the Dirichlet geodesic from `(potential, velocity)` to time `t_final`
/// with step `dt`; writes the terminal potential and velocity.
///
/// # Safety
/// Handles must be live; both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_geodesic(
    potential: *const KdPotential,
    velocity: *const KdField,
    t_final: f64,
    dt: f64,
    out_phi: *mut *mut KdField,
    out_velocity: *mut *mut KdField,
) -> KdStatus {
    guard(|| {
        let (p, v, _) = tangents(potential, velocity, velocity)?;
        if out_phi.is_null() || out_velocity.is_null() {
            return Err(null("out"));
        }
        let mut curve = integrate_geodesic(p, &v, t_final, dt)?;
        let phi = curve.potentials.pop().expect("curve has a terminal state");
        let vel = curve.velocities.pop().expect("curve has a terminal state");
        write_out(out_phi, boxed(KdField { field: phi }), "out_phi")?;
        write_out(out_velocity, boxed(KdField { field: vel }), "out_velocity")
    })
}

/// K-energy relative to the flat potential.
///
/// # Safety
/// `potential` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_kenergy(potential: *const KdPotential, out: *mut f64) -> KdStatus {
    guard(|| {
        let p = deref(potential, "potential")?;
        write_out(out, kenergy_entropy(&p.potential), "out")
    })
}

/// Dirichlet gradient of the K-energy.
///
/// # Safety
/// `potential` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_kenergy_gradient(potential: *const KdPotential, out: *mut *mut KdField) -> KdStatus {
    guard(|| {
        let p = deref(potential, "potential")?;
        let f = kenergy_gradient(&p.potential)?.into_field();
        write_out(out, boxed(KdField { field: f }), "out")
    })
}

/// Run the pseudo-Calabi flow to `t_final` and write the final K-energy.
///
/// # Safety
/// `potential` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kd_flow(potential: *const KdPotential, t_final: f64, dt: f64, out: *mut f64) -> KdStatus {
    guard(|| {
        let p = deref(potential, "potential")?;
        let tr = pseudo_calabi_flow(&p.potential, t_final, dt)?;
        write_out(out, *tr.kenergy.last().expect("trace is non-empty"), "out")
    })
}

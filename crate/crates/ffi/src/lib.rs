//! C ABI over `gasket-core`.
//!
//! Every function returns a [`GasketStatus`]; results go through out
//! pointers. On failure a message is stored per thread and can be fetched
//! with [`gasket_last_error_message`]. Panics are caught at the boundary and
//! reported as [`GasketStatus::Panic`].
//!
//! Words are passed as arrays of symbols in `{1, 2, 3}`; an empty word may
//! use a null pointer with length 0.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gasket_core::cocycle::{lyapunov, projection_estimate};
use gasket_core::energy::{dirichlet_matrix, energy_report};
use gasket_core::fields::{check_gradient, ScalarField};
use gasket_core::gasket::{apply_f, branch, cell, code_to_point, point_to_code};
use gasket_core::measure::{principal_eigenvalue, sample_kappa, tau_cell, TauNormalization};
use gasket_core::{GasketError, Mat2, Symbol, Vec2, Word};

/// Result code of every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GasketStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidSymbol = 2,
    Domain = 3,
    DepthGuard = 4,
    NoConvergence = 5,
    InvalidArgument = 6,
    FieldInconsistent = 7,
    EmptySet = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GasketVec2 {
    pub x1: f64,
    pub x2: f64,
}

/// Row-major 2×2 matrix.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GasketMat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GasketProjection {
    pub v: GasketVec2,
    pub residual_proj: f64,
    pub residual_rank1: f64,
    pub isotropic: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GasketEnergyReport {
    pub dirichlet_matrix: f64,
    pub dirichlet_vfield: f64,
    pub cheeger_pre: f64,
    pub half_dirichlet: f64,
    pub relative_gap: f64,
    pub vfield_flagged: usize,
    pub pointwise_evaluated: usize,
    pub pointwise_violations: usize,
}

/// A scalar field supplied by the caller.
///
/// Both callbacks are invoked concurrently from worker threads and must be
/// thread-safe and pure; `user_data` is passed through unchanged.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct GasketField {
    pub value: Option<unsafe extern "C" fn(user_data: *mut c_void, x1: f64, x2: f64) -> f64>,
    pub gradient: Option<
        unsafe extern "C" fn(user_data: *mut c_void, x1: f64, x2: f64, out: *mut GasketVec2),
    >,
    pub user_data: *mut c_void,
}

/// Holds the normalization constant `c` of the matrix measure.
pub struct GasketSession {
    norm: TauNormalization,
}

impl From<Vec2> for GasketVec2 {
    fn from(v: Vec2) -> Self {
        GasketVec2 { x1: v.x1, x2: v.x2 }
    }
}

impl From<GasketVec2> for Vec2 {
    fn from(v: GasketVec2) -> Self {
        Vec2::new(v.x1, v.x2)
    }
}

impl From<Mat2> for GasketMat2 {
    fn from(m: Mat2) -> Self {
        GasketMat2 {
            a11: m.a11,
            a12: m.a12,
            a21: m.a21,
            a22: m.a22,
        }
    }
}

struct Failure {
    status: GasketStatus,
    message: String,
}

impl Failure {
    fn new(status: GasketStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }

    fn null(name: &str) -> Self {
        Failure::new(GasketStatus::NullPointer, format!("`{name}` is null"))
    }
}

impl From<GasketError> for Failure {
    fn from(e: GasketError) -> Self {
        let status = match e {
            GasketError::InvalidSymbol(_) => GasketStatus::InvalidSymbol,
            GasketError::DepthGuard { .. } => GasketStatus::DepthGuard,
            GasketError::Domain(_) => GasketStatus::Domain,
            GasketError::NoConvergence { .. } => GasketStatus::NoConvergence,
            GasketError::EmptySTheta { .. } => GasketStatus::EmptySet,
            GasketError::InconsistentGradient { .. } => GasketStatus::FieldInconsistent,
            GasketError::Config { .. } => GasketStatus::InvalidArgument,
            GasketError::Io(_) => GasketStatus::Io,
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> GasketStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GasketStatus::Ok,
        Ok(Err(f)) => {
            set_last_error(f.message);
            f.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("panic: {msg}"));
            GasketStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(name))
}

unsafe fn session_ref<'a>(s: *const GasketSession) -> Result<&'a GasketSession, Failure> {
    s.as_ref().ok_or_else(|| Failure::null("session"))
}

unsafe fn word_from(symbols: *const u8, len: usize) -> Result<Word, Failure> {
    if len == 0 {
        return Ok(Word::empty());
    }
    if symbols.is_null() {
        return Err(Failure::null("symbols"));
    }
    Ok(Word::from_digits(std::slice::from_raw_parts(symbols, len))?)
}

struct CallbackField {
    value: unsafe extern "C" fn(*mut c_void, f64, f64) -> f64,
    gradient: unsafe extern "C" fn(*mut c_void, f64, f64, *mut GasketVec2),
    user_data: *mut c_void,
}

// The caller guarantees thread-safe callbacks; see `GasketField`.
unsafe impl Send for CallbackField {}
unsafe impl Sync for CallbackField {}

impl ScalarField for CallbackField {
    fn name(&self) -> &str {
        "callback"
    }

    fn value(&self, p: Vec2) -> f64 {
        unsafe { (self.value)(self.user_data, p.x1, p.x2) }
    }

    fn gradient(&self, p: Vec2) -> Vec2 {
        let mut out = GasketVec2::default();
        unsafe { (self.gradient)(self.user_data, p.x1, p.x2, &mut out) };
        out.into()
    }
}

/// Wrap the callbacks and check the gradient against finite differences.
unsafe fn field_from(f: *const GasketField, name: &str) -> Result<CallbackField, Failure> {
    let f = f.as_ref().ok_or_else(|| Failure::null(name))?;
    let field = CallbackField {
        value: f.value.ok_or_else(|| Failure::null("value callback"))?,
        gradient: f
            .gradient
            .ok_or_else(|| Failure::null("gradient callback"))?,
        user_data: f.user_data,
    };
    check_gradient(&field, 0)?;
    Ok(field)
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn gasket_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the last error message on this thread, or null if there is none.
/// Release it with `gasket_string_free`.
#[no_mangle]
pub extern "C" fn gasket_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// # Safety
/// `s` must come from `gasket_last_error_message` or be null.
#[no_mangle]
pub unsafe extern "C" fn gasket_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Create a session with normalization `τ(S) = c·Id`, `c > 0`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gasket_session_new(c: f64, out: *mut *mut GasketSession) -> GasketStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let norm = TauNormalization::new(c)
            .map_err(|e| Failure::new(GasketStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(GasketSession { norm }));
        Ok(())
    })
}

/// # Safety
/// `session` must come from `gasket_session_new` or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn gasket_session_free(session: *mut GasketSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// `ψ_symbol(p)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gasket_branch_apply(
    symbol: u8,
    p: GasketVec2,
    out: *mut GasketVec2,
) -> GasketStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let s = Symbol::try_from(symbol)?;
        *out = branch(s).apply(p.into()).into();
        Ok(())
    })
}

/// Vertices of the cell `ψ_w(triangle)` in the order of the images of A, B, C.
///
/// # Safety
/// `symbols` must hold `len` bytes; `out` must hold 3 elements.
#[no_mangle]
pub unsafe extern "C" fn gasket_cell_vertices(
    symbols: *const u8,
    len: usize,
    out: *mut GasketVec2,
) -> GasketStatus {
    guard(|| {
        let w = word_from(symbols, len)?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let c = cell(&w)?;
        for (i, v) in c.vertices.iter().enumerate() {
            *out.add(i) = (*v).into();
        }
        Ok(())
    })
}

/// Representative point of the cylinder of `w` and a bound on its distance
/// to the coded point of any extension.
///
/// # Safety
/// `symbols` must hold `len` bytes; out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gasket_code_to_point(
    symbols: *const u8,
    len: usize,
    out_point: *mut GasketVec2,
    out_error_bound: *mut f64,
) -> GasketStatus {
    guard(|| {
        let w = word_from(symbols, len)?;
        let point = out_ref(out_point, "out_point")?;
        let bound = out_ref(out_error_bound, "out_error_bound")?;
        let (p, e) = code_to_point(&w);
        *point = p.into();
        *bound = e;
        Ok(())
    })
}

/// Address of a depth-`depth` cell containing `p`, written as `depth` symbols.
///
/// # Safety
/// `out_symbols` must hold `depth` bytes.
#[no_mangle]
pub unsafe extern "C" fn gasket_point_to_code(
    p: GasketVec2,
    depth: usize,
    out_symbols: *mut u8,
) -> GasketStatus {
    guard(|| {
        let w = point_to_code(p.into(), depth)?;
        if depth > 0 && out_symbols.is_null() {
            return Err(Failure::null("out_symbols"));
        }
        for (i, s) in w.symbols().iter().enumerate() {
            *out_symbols.add(i) = s.value();
        }
        Ok(())
    })
}

/// The expanding map `F`, inverse of the branches on their cells.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gasket_apply_f(p: GasketVec2, out: *mut GasketVec2) -> GasketStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = apply_f(p.into())?.into();
        Ok(())
    })
}

/// Principal eigenvalue of the matrix transfer operator by power iteration.
///
/// # Safety
/// `out_beta` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gasket_principal_eigenvalue(
    tol: f64,
    max_iter: usize,
    out_beta: *mut f64,
) -> GasketStatus {
    guard(|| {
        let out = out_ref(out_beta, "out_beta")?;
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Failure::new(
                GasketStatus::InvalidArgument,
                "tol must be positive",
            ));
        }
        *out = principal_eigenvalue(tol, max_iter)?.beta;
        Ok(())
    })
}

/// Matrix mass `τ[w]` and scalar mass `κ[w]` of a cell.
///
/// # Safety
/// `session` must be live; `symbols` must hold `len` bytes; out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gasket_tau_cell(
    session: *const GasketSession,
    symbols: *const u8,
    len: usize,
    out_tau: *mut GasketMat2,
    out_kappa: *mut f64,
) -> GasketStatus {
    guard(|| {
        let s = session_ref(session)?;
        let w = word_from(symbols, len)?;
        let tau = out_ref(out_tau, "out_tau")?;
        let kappa = out_ref(out_kappa, "out_kappa")?;
        let m = tau_cell(&w, s.norm)?;
        *tau = m.tau.into();
        *kappa = m.kappa;
        Ok(())
    })
}

/// Projection field estimate from the derivative of `ψ_w`.
///
/// # Safety
/// `symbols` must hold `len` bytes; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gasket_projection_estimate(
    symbols: *const u8,
    len: usize,
    out: *mut GasketProjection,
) -> GasketStatus {
    guard(|| {
        let w = word_from(symbols, len)?;
        let out = out_ref(out, "out")?;
        let e = projection_estimate(&w)?;
        *out = GasketProjection {
            v: e.v.into(),
            residual_proj: e.residual_proj,
            residual_rank1: e.residual_rank1,
            isotropic: e.isotropic,
        };
        Ok(())
    })
}

/// Per-symbol Lyapunov exponents of a word of length at least 2.
///
/// # Safety
/// `symbols` must hold `len` bytes; out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gasket_lyapunov(
    symbols: *const u8,
    len: usize,
    out_lambda1: *mut f64,
    out_lambda2: *mut f64,
) -> GasketStatus {
    guard(|| {
        let w = word_from(symbols, len)?;
        let l1 = out_ref(out_lambda1, "out_lambda1")?;
        let l2 = out_ref(out_lambda2, "out_lambda2")?;
        let r = lyapunov(&w)?;
        *l1 = r.lambda1;
        *l2 = r.lambda2;
        Ok(())
    })
}

/// `count` κ-distributed words of length `depth`, written row by row.
///
/// # Safety
/// `out_symbols` must hold `count * depth` bytes.
#[no_mangle]
pub unsafe extern "C" fn gasket_sample_kappa(
    seed: u64,
    depth: usize,
    count: usize,
    out_symbols: *mut u8,
) -> GasketStatus {
    guard(|| {
        let words = sample_kappa(seed, depth, count)?;
        if depth * count > 0 && out_symbols.is_null() {
            return Err(Failure::null("out_symbols"));
        }
        for (i, s) in words.iter().flat_map(|w| w.symbols()).enumerate() {
            *out_symbols.add(i) = s.value();
        }
        Ok(())
    })
}

/// Quadrature of the energy `ℰ(f, g)` at `depth`.
///
/// # Safety
/// `session`, `f` and `g` must be live; callbacks must satisfy `GasketField`.
#[no_mangle]
pub unsafe extern "C" fn gasket_dirichlet_matrix(
    session: *const GasketSession,
    f: *const GasketField,
    g: *const GasketField,
    depth: usize,
    out: *mut f64,
) -> GasketStatus {
    guard(|| {
        let s = session_ref(session)?;
        let f = field_from(f, "f")?;
        let g = field_from(g, "g")?;
        let out = out_ref(out, "out")?;
        *out = dirichlet_matrix(&f, &g, depth, s.norm)?;
        Ok(())
    })
}

/// All energy estimators for `f` at `(depth, sub_depth)`.
///
/// # Safety
/// `session` and `f` must be live; callbacks must satisfy `GasketField`.
#[no_mangle]
pub unsafe extern "C" fn gasket_energy_report(
    session: *const GasketSession,
    f: *const GasketField,
    depth: usize,
    sub_depth: usize,
    out: *mut GasketEnergyReport,
) -> GasketStatus {
    guard(|| {
        let s = session_ref(session)?;
        let f = field_from(f, "f")?;
        let out = out_ref(out, "out")?;
        let r = energy_report(&f, depth, sub_depth, s.norm, false)?;
        *out = GasketEnergyReport {
            dirichlet_matrix: r.dirichlet_matrix,
            dirichlet_vfield: r.dirichlet_vfield,
            cheeger_pre: r.cheeger_pre,
            half_dirichlet: r.half_dirichlet,
            relative_gap: r.relative_gap,
            vfield_flagged: r.vfield_flagged,
            pointwise_evaluated: r.pointwise.evaluated,
            pointwise_violations: r.pointwise.violations,
        };
        Ok(())
    })
}

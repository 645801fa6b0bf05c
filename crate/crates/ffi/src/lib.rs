//! C ABI for dielhom.
//!
//! Every fallible call returns a [`DhStatus`]; on failure the message is
//! available from [`dh_last_error_message`] on the same thread. Objects are
//! opaque handles created by `dh_*_new`/`dh_*_solve` and released by the
//! matching `dh_*_free`. Complex vectors cross the boundary as interleaved
//! `re, im` doubles, three components per point.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dielhom::effective::{ball_mu_scalar, classify_regime, effective_tensors, p0_ball, Regime};
use dielhom::foldylax::{cluster_far_field, solve_with, FoldyLaxSolution, IncidentWave, SolveOptions, Variant};
use dielhom::geometry::{derive_scales, generate_cluster, Cluster, DomainShape, ScaleSet, Sign};
use dielhom::tensor::CVec3;
use dielhom::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    Infeasible = 4,
    EmptyCluster = 5,
    Degenerate = 6,
    OutOfBranch = 7,
    SolverFailure = 8,
    LseFailure = 9,
    Config = 10,
    Io = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DhSign {
    Upper = 0,
    Lower = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DhRegime {
    DielectricPositive = 0,
    PlasmonicNegative = 1,
    Degenerate = 2,
}

/// Derived scale set; plain data, owned by the caller.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhScales {
    pub a: f64,
    pub h: f64,
    pub eta0: f64,
    pub eta: f64,
    pub c0: f64,
    pub sign: DhSign,
    pub c_r: f64,
    pub lambda_n0_b: f64,
    pub d: f64,
    pub k: f64,
}

/// Opaque particle cluster.
pub struct DhCluster(Cluster);

/// Opaque Foldy–Lax solution; keeps its cluster and scales for far fields.
pub struct DhSolution {
    sol: FoldyLaxSolution,
    cluster: Cluster,
    scales: ScaleSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> DhStatus {
    match err {
        Error::Domain(_) => DhStatus::Domain,
        Error::InvalidInput(_) => DhStatus::InvalidInput,
        Error::Infeasible(_) => DhStatus::Infeasible,
        Error::EmptyCluster { .. } => DhStatus::EmptyCluster,
        Error::Degenerate(_) => DhStatus::Degenerate,
        Error::OutOfBranch { .. } => DhStatus::OutOfBranch,
        Error::SolverFailure { .. } => DhStatus::SolverFailure,
        Error::LseFailure { .. } => DhStatus::LseFailure,
        Error::Config { .. } => DhStatus::Config,
        Error::Io { .. } => DhStatus::Io,
    }
}

fn fail(status: DhStatus, msg: impl Into<String>) -> DhStatus {
    set_error(msg.into());
    status
}

// runs f, mapping errors and panics to status codes
fn guard(f: impl FnOnce() -> Result<(), DhStatus>) -> DhStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DhStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(DhStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, DhStatus>;
}

impl<T> OrStatus<T> for dielhom::Result<T> {
    fn or_status(self) -> Result<T, DhStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), DhStatus> {
    if p.is_null() {
        Err(fail(DhStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn read3(p: *const f64, name: &str) -> Result<[f64; 3], DhStatus> {
    non_null(p, name)?;
    Ok([*p, *p.add(1), *p.add(2)])
}

fn sign_in(s: DhSign) -> Sign {
    match s {
        DhSign::Upper => Sign::Upper,
        DhSign::Lower => Sign::Lower,
    }
}

fn sign_out(s: Sign) -> DhSign {
    match s {
        Sign::Upper => DhSign::Upper,
        Sign::Lower => DhSign::Lower,
    }
}

impl From<ScaleSet> for DhScales {
    fn from(s: ScaleSet) -> Self {
        DhScales {
            a: s.a,
            h: s.h,
            eta0: s.eta0,
            eta: s.eta,
            c0: s.c0,
            sign: sign_out(s.sign),
            c_r: s.c_r,
            lambda_n0_b: s.lambda_n0_b,
            d: s.d,
            k: s.k,
        }
    }
}

impl From<DhScales> for ScaleSet {
    fn from(s: DhScales) -> Self {
        ScaleSet {
            a: s.a,
            h: s.h,
            eta0: s.eta0,
            eta: s.eta,
            c0: s.c0,
            sign: sign_in(s.sign),
            c_r: s.c_r,
            lambda_n0_b: s.lambda_n0_b,
            d: s.d,
            k: s.k,
        }
    }
}

unsafe fn write_vectors(v: &[CVec3], out: *mut f64, cap: usize) -> Result<(), DhStatus> {
    let need = v.len() * 6;
    if cap < need {
        return Err(fail(DhStatus::BufferTooSmall, format!("buffer holds {cap} doubles, {need} needed")));
    }
    non_null(out, "out")?;
    for (i, x) in v.iter().enumerate() {
        for j in 0..3 {
            *out.add(6 * i + 2 * j) = x[j].re;
            *out.add(6 * i + 2 * j + 1) = x[j].im;
        }
    }
    Ok(())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next dh_* call on the same thread.
#[no_mangle]
pub extern "C" fn dh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Derives k, η and d from the raw parameters.
///
/// # Safety
/// `out` must point to writable storage for one `DhScales`.
#[no_mangle]
pub unsafe extern "C" fn dh_derive_scales(
    a: f64,
    h: f64,
    eta0: f64,
    c0: f64,
    sign: DhSign,
    c_r: f64,
    lambda_n0_b: f64,
    out: *mut DhScales,
) -> DhStatus {
    guard(|| {
        non_null(out, "out")?;
        let s = derive_scales(a, h, eta0, c0, sign_in(sign), c_r, lambda_n0_b).or_status()?;
        *out = s.into();
        Ok(())
    })
}

unsafe fn cluster_out(domain: DomainShape, d: f64, out: *mut *mut DhCluster) -> Result<(), DhStatus> {
    non_null(out, "out")?;
    *out = ptr::null_mut();
    let c = generate_cluster(&domain, d).or_status()?;
    *out = Box::into_raw(Box::new(DhCluster(c)));
    Ok(())
}

/// Cubic lattice of pitch `d` inside an axis-aligned box.
///
/// # Safety
/// `center` and `extents` point to three doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dh_cluster_new_box(
    center: *const f64,
    extents: *const f64,
    d: f64,
    out: *mut *mut DhCluster,
) -> DhStatus {
    guard(|| {
        let domain = DomainShape::Box { center: read3(center, "center")?, extents: read3(extents, "extents")? };
        cluster_out(domain, d, out)
    })
}

/// Cubic lattice of pitch `d` inside a ball.
///
/// # Safety
/// `center` points to three doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dh_cluster_new_ball(
    center: *const f64,
    radius: f64,
    d: f64,
    out: *mut *mut DhCluster,
) -> DhStatus {
    guard(|| cluster_out(DomainShape::Ball { center: read3(center, "center")?, radius }, d, out))
}

/// Number of particles; 0 for NULL.
///
/// # Safety
/// `c` is NULL or a live cluster handle.
#[no_mangle]
pub unsafe extern "C" fn dh_cluster_len(c: *const DhCluster) -> usize {
    c.as_ref().map_or(0, |c| c.0.len())
}

/// Copies the centres (x, y, z per particle) into `out`, which holds `cap`
/// doubles.
///
/// # Safety
/// `c` is a live cluster handle and `out` has room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn dh_cluster_centers(c: *const DhCluster, out: *mut f64, cap: usize) -> DhStatus {
    guard(|| {
        non_null(c, "cluster")?;
        let centers = &(*c).0.centers;
        if cap < 3 * centers.len() {
            return Err(fail(DhStatus::BufferTooSmall, format!("buffer holds {cap} doubles, {} needed", 3 * centers.len())));
        }
        non_null(out, "out")?;
        for (i, z) in centers.iter().enumerate() {
            ptr::copy_nonoverlapping(z.as_ptr(), out.add(3 * i), 3);
        }
        Ok(())
    })
}

/// # Safety
/// `c` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dh_cluster_free(c: *mut DhCluster) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Solves the Foldy–Lax system (Q-form, ball polarisation tensor) for the
/// plane wave with direction `theta` and polarisation `p` at the scale-set
/// wavenumber.
///
/// # Safety
/// `cluster` is live, `scales` points to one `DhScales`, `theta` and `p` to
/// three doubles each, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn dh_foldylax_solve(
    cluster: *const DhCluster,
    scales: *const DhScales,
    theta: *const f64,
    p: *const f64,
    out: *mut *mut DhSolution,
) -> DhStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(cluster, "cluster")?;
        non_null(scales, "scales")?;
        let s: ScaleSet = (*scales).into();
        let wave = IncidentWave::new(s.k, read3(theta, "theta")?, read3(p, "p")?).or_status()?;
        let c = &(*cluster).0;
        let sol = solve_with(c, &s, &p0_ball(), &wave, Variant::QForm, &SolveOptions::default()).or_status()?;
        *out = Box::into_raw(Box::new(DhSolution { sol, cluster: c.clone(), scales: s }));
        Ok(())
    })
}

/// Number of particles in the solution; 0 for NULL.
///
/// # Safety
/// `s` is NULL or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn dh_solution_len(s: *const DhSolution) -> usize {
    s.as_ref().map_or(0, |s| s.sol.vectors.len())
}

/// Relative residual of the solve; NaN for NULL.
///
/// # Safety
/// `s` is NULL or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn dh_solution_residual(s: *const DhSolution) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.sol.residual)
}

/// Invertibility margin of the system (below one: Neumann-convergent).
///
/// # Safety
/// `s` is NULL or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn dh_solution_margin(s: *const DhSolution) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.sol.margin)
}

/// Copies the Q vectors, 6 doubles per particle.
///
/// # Safety
/// `s` is live and `out` has room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn dh_solution_vectors(s: *const DhSolution, out: *mut f64, cap: usize) -> DhStatus {
    guard(|| {
        non_null(s, "solution")?;
        write_vectors(&(*s).sol.vectors, out, cap)
    })
}

/// Far-field pattern at `n` unit directions (3 doubles each); writes 6
/// doubles per direction.
///
/// # Safety
/// `s` is live, `dirs` holds `3n` doubles and `out` has room for `cap`.
#[no_mangle]
pub unsafe extern "C" fn dh_solution_far_field(
    s: *const DhSolution,
    dirs: *const f64,
    n: usize,
    out: *mut f64,
    cap: usize,
) -> DhStatus {
    guard(|| {
        non_null(s, "solution")?;
        non_null(dirs, "dirs")?;
        let dirs: Vec<[f64; 3]> = (0..n).map(|i| [*dirs.add(3 * i), *dirs.add(3 * i + 1), *dirs.add(3 * i + 2)]).collect();
        let s = &*s;
        let ff = cluster_far_field(&s.sol, &s.cluster, &s.scales, &dirs).or_status()?;
        write_vectors(&ff.values, out, cap)
    })
}

/// # Safety
/// `s` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dh_solution_free(s: *mut DhSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Scalar effective permeability of the ball cluster.
#[no_mangle]
pub extern "C" fn dh_ball_mu(xi: f64, sign: DhSign) -> f64 {
    ball_mu_scalar(xi, sign_in(sign))
}

/// Sign regime of the ball permeability.
#[no_mangle]
pub extern "C" fn dh_classify_regime(xi: f64, sign: DhSign) -> DhRegime {
    match classify_regime(xi, sign_in(sign)) {
        Regime::DielectricPositive => DhRegime::DielectricPositive,
        Regime::PlasmonicNegative => DhRegime::PlasmonicNegative,
        Regime::Degenerate => DhRegime::Degenerate,
    }
}

/// Effective permeability tensor (ball polarisation), row-major, 18 doubles
/// (re, im per entry).
///
/// # Safety
/// `out` has room for 18 doubles.
#[no_mangle]
pub unsafe extern "C" fn dh_effective_mu(xi: f64, sign: DhSign, out: *mut f64) -> DhStatus {
    guard(|| {
        non_null(out, "out")?;
        let t = effective_tensors(xi, &p0_ball(), sign_in(sign)).or_status()?;
        for i in 0..3 {
            for j in 0..3 {
                *out.add(6 * i + 2 * j) = t.mu_eff.0[i][j].re;
                *out.add(6 * i + 2 * j + 1) = t.mu_eff.0[i][j].im;
            }
        }
        Ok(())
    })
}

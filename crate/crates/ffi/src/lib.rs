//! C ABI over `cgmc`: opaque model and system handles, chain runs and exact
//! relative entropies. Every fallible call returns a `CgmcStatus`; the message
//! of the last failure on the calling thread is available through
//! `cgmc_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cgmc::coarse::CoarseModel;
use cgmc::corrections::{BetaMode, CorrectedModel};
use cgmc::estimators::{magnetization, scheme_entropy_exact};
use cgmc::lattice::{FieldSpec, Kernel, MicroLattice, MicroModel, SpinConfig};
use cgmc::sampler::{run_chain, ChainSpec, RateKind, Scheme, System};
use cgmc::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SizeMismatch = 3,
    StateSpaceTooLarge = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgmcProfile {
    /// `J(r) = J0/(2L)` for `1 ≤ r ≤ L`.
    Constant = 0,
    /// `V(u) = 1 − u`.
    Linear = 1,
    /// Mean field, `J = J0/N` between all pairs.
    CurieWeiss = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgmcScheme {
    Micro = 0,
    Cg0 = 1,
    Cg2 = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgmcRate {
    Metropolis = 0,
    Glauber = 1,
    Symmetric = 2,
}

/// Microscopic Hamiltonian on a periodic chain.
pub struct CgmcModel {
    inner: MicroModel,
}

/// Hamiltonian a chain samples: microscopic, coarse or corrected coarse.
pub struct CgmcSystem {
    inner: System,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgmcChainSpec {
    pub beta: f64,
    /// A `CgmcRate` value.
    pub rate: u32,
    pub n_burnin: u64,
    pub n_samples: u64,
    pub thinning: u64,
    pub seed: u64,
    pub stream: u64,
    pub match_paper_appendix_b: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CgmcChainSummary {
    pub magnetization: f64,
    /// Batch-means standard error of `magnetization`.
    pub magnetization_stderr: f64,
    pub acceptance_rate: f64,
    pub n_records: u64,
    pub energy_evals: u64,
}

struct Failure {
    status: CgmcStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::SizeMismatch { .. } => CgmcStatus::SizeMismatch,
            Error::StateSpaceTooLarge { .. } => CgmcStatus::StateSpaceTooLarge,
            Error::NegativeWeight(_) | Error::NotNormalized(_) | Error::EmptyBatch => {
                CgmcStatus::Numerical
            }
            Error::Io(_) => CgmcStatus::Io,
            _ => CgmcStatus::InvalidArgument,
        };
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        status: CgmcStatus::InvalidArgument,
        message: message.into(),
    }
}

fn null(name: &str) -> Failure {
    Failure {
        status: CgmcStatus::NullPointer,
        message: format!("{name} is null"),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CgmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CgmcStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&message);
            CgmcStatus::Panic
        }
    }
}

fn scheme_from(value: u32) -> Result<Scheme, Failure> {
    match value {
        0 => Ok(Scheme::Micro),
        1 => Ok(Scheme::Cg0),
        2 => Ok(Scheme::Cg2),
        _ => Err(invalid(format!("unknown scheme {value}"))),
    }
}

fn rate_from(value: u32) -> Result<RateKind, Failure> {
    match value {
        0 => Ok(RateKind::Metropolis),
        1 => Ok(RateKind::Glauber),
        2 => Ok(RateKind::Symmetric),
        _ => Err(invalid(format!("unknown rate {value}"))),
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

/// Static name of a `CgmcStatus` value; "unknown" outside the enum.
#[no_mangle]
pub extern "C" fn cgmc_status_name(status: u32) -> *const c_char {
    let name: &'static [u8] = match status {
        0 => b"ok\0",
        1 => b"null pointer\0",
        2 => b"invalid argument\0",
        3 => b"size mismatch\0",
        4 => b"state space too large\0",
        5 => b"numerical failure\0",
        6 => b"i/o failure\0",
        7 => b"panic\0",
        _ => b"unknown\0",
    };
    name.as_ptr().cast()
}

/// Copies the last failure message of this thread into `buf`, truncated and
/// NUL terminated. Returns the buffer size the full message needs, or 0 when
/// the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cgmc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len) - 1;
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a model with uniform field `h` (entering as `+h Σ σ`).
/// `profile` is a `CgmcProfile` value; `range` is ignored for Curie-Weiss.
///
/// # Safety
/// `out` must be a valid pointer. On success `*out` owns a handle to release
/// with `cgmc_model_free`.
#[no_mangle]
pub unsafe extern "C" fn cgmc_model_new(
    n_sites: usize,
    profile: u32,
    range: usize,
    j0: f64,
    h: f64,
    out: *mut *mut CgmcModel,
) -> CgmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kernel = match profile {
            0 => Kernel::constant(j0, range)?,
            1 => Kernel::from_profile(|u| 1.0 - u, range, j0)?,
            2 => Kernel::curie_weiss(j0, n_sites)?,
            _ => return Err(invalid(format!("unknown profile {profile}"))),
        };
        let inner = MicroModel::new(MicroLattice::new(n_sites)?, kernel, FieldSpec::Uniform(h))?;
        *out = Box::into_raw(Box::new(CgmcModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from `cgmc_model_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cgmc_model_free(model: *mut CgmcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of sites, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cgmc_model_n_sites(model: *const CgmcModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_sites())
}

/// Energy of a configuration of `len` spins, each ±1.
///
/// # Safety
/// `model` must be a live handle, `spins` must point to `len` values and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgmc_model_energy(
    model: *const CgmcModel,
    spins: *const i8,
    len: usize,
    out: *mut f64,
) -> CgmcStatus {
    guard(|| {
        let model = borrow(model, "model")?;
        if spins.is_null() {
            return Err(null("spins"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let sigma = SpinConfig::new(std::slice::from_raw_parts(spins, len).to_vec())?;
        *out = model.inner.energy(&sigma)?;
        Ok(())
    })
}

/// Exact relative entropy per site between the coarse-grained micro measure
/// and the `scheme` measure at cell size `q`, by enumeration.
///
/// # Safety
/// `model` must be a live handle and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgmc_exact_entropy(
    model: *const CgmcModel,
    q: usize,
    beta: f64,
    scheme: u32,
    out: *mut f64,
) -> CgmcStatus {
    guard(|| {
        let model = borrow(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scheme = scheme_from(scheme)?;
        if scheme == Scheme::Micro {
            return Err(invalid("exact entropy needs a coarse scheme"));
        }
        *out =
            scheme_entropy_exact(&model.inner, q, beta, scheme, BetaMode::UniformBeta)?.r_per_site;
        Ok(())
    })
}

/// Builds the Hamiltonian sampled under `scheme`. Coarse schemes use cells of
/// `q` sites and inverse temperature `beta`, which must match the chain's.
///
/// # Safety
/// `model` must be a live handle and `out` must be valid. On success `*out`
/// owns a handle to release with `cgmc_system_free`.
#[no_mangle]
pub unsafe extern "C" fn cgmc_system_new(
    model: *const CgmcModel,
    scheme: u32,
    q: usize,
    beta: f64,
    out: *mut *mut CgmcSystem,
) -> CgmcStatus {
    guard(|| {
        let model = borrow(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = match scheme_from(scheme)? {
            Scheme::Micro => System::Micro(model.inner.clone()),
            Scheme::Cg0 => System::Cg0(CoarseModel::from_micro(&model.inner, q, beta)?),
            Scheme::Cg2 => System::Cg2(CorrectedModel::from_micro(
                &model.inner,
                q,
                beta,
                BetaMode::UniformBeta,
            )?),
        };
        *out = Box::into_raw(Box::new(CgmcSystem { inner }));
        Ok(())
    })
}

/// # Safety
/// `system` must be null or a handle from `cgmc_system_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cgmc_system_free(system: *mut CgmcSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

#[no_mangle]
pub extern "C" fn cgmc_chain_spec_default() -> CgmcChainSpec {
    let d = ChainSpec::default();
    CgmcChainSpec {
        beta: d.beta,
        rate: CgmcRate::Metropolis as u32,
        n_burnin: d.n_burnin,
        n_samples: d.n_samples,
        thinning: d.thinning,
        seed: d.seed,
        stream: d.stream,
        match_paper_appendix_b: d.match_paper_appendix_b,
    }
}

/// Runs one chain from the all-up state and summarizes its magnetization.
///
/// # Safety
/// `system` must be a live handle; `spec` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgmc_run_chain(
    system: *const CgmcSystem,
    spec: *const CgmcChainSpec,
    out: *mut CgmcChainSummary,
) -> CgmcStatus {
    guard(|| {
        let system = borrow(system, "system")?;
        let spec = borrow(spec, "spec")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let chain = ChainSpec {
            beta: spec.beta,
            rate: rate_from(spec.rate)?,
            n_burnin: spec.n_burnin,
            n_samples: spec.n_samples,
            thinning: spec.thinning,
            seed: spec.seed,
            stream: spec.stream,
            keep_snapshots: false,
            match_paper_appendix_b: spec.match_paper_appendix_b,
        };
        let batch = run_chain(&system.inner, &chain, None)?;
        let m = magnetization(&batch)?;
        *out = CgmcChainSummary {
            magnetization: m.mean,
            magnetization_stderr: m.stderr,
            acceptance_rate: batch.acceptance_rate(),
            n_records: batch.len() as u64,
            energy_evals: batch.energy_evals,
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn status_names_are_nul_terminated() {
        let name = unsafe { CStr::from_ptr(cgmc_status_name(CgmcStatus::SizeMismatch as u32)) };
        assert_eq!(name.to_str().unwrap(), "size mismatch");
        let unknown = unsafe { CStr::from_ptr(cgmc_status_name(99)) };
        assert_eq!(unknown.to_str().unwrap(), "unknown");
    }

    #[test]
    fn error_message_truncates() {
        let mut model = ptr::null_mut();
        let status = unsafe { cgmc_model_new(4, 9, 1, 1.0, 0.0, &mut model) };
        assert_eq!(status, CgmcStatus::InvalidArgument);
        let mut buf = [0 as c_char; 8];
        let needed = unsafe { cgmc_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert!(needed > buf.len());
        let text = unsafe { CStr::from_ptr(buf.as_ptr()) };
        assert_eq!(text.to_bytes().len(), 7);
    }

    #[test]
    fn success_clears_the_message() {
        let mut model = ptr::null_mut();
        unsafe {
            cgmc_model_new(4, 9, 1, 1.0, 0.0, &mut model);
            assert_eq!(
                cgmc_model_new(4, 0, 1, 1.0, 0.0, &mut model),
                CgmcStatus::Ok
            );
            assert_eq!(cgmc_last_error_message(ptr::null_mut(), 0), 0);
            cgmc_model_free(model);
        }
    }
}

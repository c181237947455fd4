//! C ABI over the `passk` library.
//!
//! Every function returns a [`PkStatus`] and writes results through out
//! pointers. Failures leave a message readable with
//! [`pk_last_error_message`] on the calling thread. Policies are opaque
//! [`PkPolicy`] handles released with [`pk_policy_free`]; strings returned by
//! the library are released with [`pk_string_free`].
//!
//! Algorithm and surrogate codes are passed as plain integers and validated on
//! entry. [`PkAlgorithm`] and [`PkSurrogate`] list the accepted values.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use passk::advantage::{advantage_pair, effective_weights, AlgorithmId, AlgorithmKind, Shaped};
use passk::oracle::{expected_gradient, run_verify, VerifyConfig};
use passk::reward_stats::{fail_loo_weights, pass_k_hat, GroupStats};
use passk::surrogates::{
    forward_engineer, incomplete_beta, surrogate_derivative, surrogate_eval, IncBetaParams, SurrogateId, SurrogateKind,
};
use passk::tabular::{ProblemSpec, TabularPolicy};
use passk::trainer::{train, TrainConfig};
use passk::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkStatus {
    Ok = 0,
    InvalidInput = 1,
    Config = 2,
    Io = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Estimator codes accepted by the `algorithm` arguments.
#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkAlgorithm {
    Reinforce = 0,
    Rloo = 1,
    Grpo = 2,
    SkewR = 3,
    ReinforceK = 4,
    RlooK = 5,
    GrpoK = 6,
    GrpoTilde = 7,
    MixTilde = 8,
    MixDirect = 9,
    BiasedPow = 10,
    BiasedPowRloo = 11,
    EntropyGrpo = 12,
    PositiveCoeff = 13,
}

/// Surrogate codes accepted by the `surrogate` arguments.
#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkSurrogate {
    Identity = 0,
    PassK = 1,
    Arcsin01 = 2,
    ArcsinPassK = 3,
    SkewrReg = 4,
    IncBetaK = 5,
    EntropyReg = 6,
}

/// Advantage scores for correct and incorrect responses of one group.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PkAdvantagePair {
    pub a_plus: f64,
    pub a_minus: f64,
    /// True when the group is all correct or all wrong under a centred estimator.
    pub degenerate: bool,
}

/// Probability-weighted scores: `w_plus = rho_hat a_plus`, `w_minus = -(1 - rho_hat) a_minus`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PkEffectiveWeights {
    pub w_plus: f64,
    pub w_minus: f64,
    pub degenerate: bool,
}

/// Opaque softmax policy over the responses of a single problem.
pub struct PkPolicy {
    inner: TabularPolicy,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidInput(_) => PkStatus::InvalidInput,
            Error::Config(_) => PkStatus::Config,
            Error::Io(_) => PkStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(PkStatus::NullPointer, format!("{name} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PkStatus::InvalidInput, msg.into())
}

fn set_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PkStatus {
    set_error(None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(Some(format!("panic: {msg}")));
            PkStatus::Panic
        }
    }
}

unsafe fn write<T>(out: *mut T, name: &str, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn slice_out<'a>(out: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len != need {
        return Err(invalid(format!("output buffer holds {len} values, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(out, len))
}

unsafe fn policy_ref<'a>(policy: *const PkPolicy) -> Result<&'a TabularPolicy, Failure> {
    policy.as_ref().map(|p| &p.inner).ok_or_else(|| null("policy"))
}

unsafe fn read_str<'a>(s: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

fn into_c_string(bytes: Vec<u8>) -> Result<*mut c_char, Failure> {
    CString::new(bytes)
        .map(CString::into_raw)
        .map_err(|_| invalid("output contains a NUL byte"))
}

fn algorithm(code: u32, k: usize, lambda: f64) -> Result<AlgorithmId, Failure> {
    let kind = AlgorithmKind::from_code(code).ok_or_else(|| invalid(format!("unknown algorithm code {code}")))?;
    Ok(AlgorithmId::new(kind, k, lambda)?)
}

fn surrogate(code: u32, k: usize, lambda: f64) -> Result<SurrogateId, Failure> {
    let kind = SurrogateKind::from_code(code).ok_or_else(|| invalid(format!("unknown surrogate code {code}")))?;
    Ok(SurrogateId::new(kind, k, lambda)?)
}

fn pair_of(s: Shaped) -> PkAdvantagePair {
    PkAdvantagePair {
        a_plus: s.pair.a_plus,
        a_minus: s.pair.a_minus,
        degenerate: s.degenerate,
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Unbiased Pass@K estimate of a group with `n_plus` correct out of `n`.
///
/// # Safety
/// `out` must be null or valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn pk_pass_k_hat(n: usize, n_plus: usize, k: usize, out: *mut f64) -> PkStatus {
    guard(|| {
        let s = GroupStats::new(n, n_plus)?;
        write(out, "out", pass_k_hat(&s, k)?)
    })
}

/// Leave-one-out fail weights `f_plus` and `f_minus`.
///
/// # Safety
/// Each out pointer must be null or valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn pk_fail_loo_weights(
    n: usize,
    n_plus: usize,
    k: usize,
    out_f_plus: *mut f64,
    out_f_minus: *mut f64,
) -> PkStatus {
    guard(|| {
        let (fp, fm) = fail_loo_weights(&GroupStats::new(n, n_plus)?, k)?;
        write(out_f_plus, "out_f_plus", fp)?;
        write(out_f_minus, "out_f_minus", fm)
    })
}

/// Advantage pair of an estimator. `k` is ignored by estimators without a K
/// and `lambda` by all but the entropy-regularised one.
///
/// # Safety
/// `out` must be null or valid for a write of one `PkAdvantagePair`.
#[no_mangle]
pub unsafe extern "C" fn pk_advantage_pair(
    algorithm_code: u32,
    k: usize,
    lambda: f64,
    n: usize,
    n_plus: usize,
    out: *mut PkAdvantagePair,
) -> PkStatus {
    guard(|| {
        let alg = algorithm(algorithm_code, k, lambda)?;
        let shaped = advantage_pair(&alg, &GroupStats::new(n, n_plus)?)?;
        write(out, "out", pair_of(shaped))
    })
}

/// Effective weights of an estimator.
///
/// # Safety
/// `out` must be null or valid for a write of one `PkEffectiveWeights`.
#[no_mangle]
pub unsafe extern "C" fn pk_effective_weights(
    algorithm_code: u32,
    k: usize,
    lambda: f64,
    n: usize,
    n_plus: usize,
    out: *mut PkEffectiveWeights,
) -> PkStatus {
    guard(|| {
        let alg = algorithm(algorithm_code, k, lambda)?;
        let w = effective_weights(&alg, &GroupStats::new(n, n_plus)?)?;
        write(
            out,
            "out",
            PkEffectiveWeights {
                w_plus: w.w_plus,
                w_minus: w.w_minus,
                degenerate: w.degenerate,
            },
        )
    })
}

/// Surrogate value `F(rho)` for `rho` in `[0, 1]`.
///
/// # Safety
/// `out` must be null or valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn pk_surrogate_eval(code: u32, k: usize, lambda: f64, rho: f64, out: *mut f64) -> PkStatus {
    guard(|| write(out, "out", surrogate_eval(&surrogate(code, k, lambda)?, rho)?))
}

/// Surrogate derivative `F'(rho)` for `rho` in `(0, 1)`.
///
/// # Safety
/// `out` must be null or valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn pk_surrogate_derivative(
    code: u32,
    k: usize,
    lambda: f64,
    rho: f64,
    out: *mut f64,
) -> PkStatus {
    guard(|| write(out, "out", surrogate_derivative(&surrogate(code, k, lambda)?, rho)?))
}

/// Advantage pair induced by a surrogate on a group.
///
/// # Safety
/// `out` must be null or valid for a write of one `PkAdvantagePair`.
#[no_mangle]
pub unsafe extern "C" fn pk_forward_engineer(
    code: u32,
    k: usize,
    lambda: f64,
    n: usize,
    n_plus: usize,
    out: *mut PkAdvantagePair,
) -> PkStatus {
    guard(|| {
        let shaped = forward_engineer(&surrogate(code, k, lambda)?, &GroupStats::new(n, n_plus)?)?;
        write(out, "out", pair_of(shaped))
    })
}

/// Incomplete beta integral `B(x; a, b)`, the integral of `t^(a-1) (1-t)^(b-1)` over `[0, x]`, not regularised.
///
/// # Safety
/// `out` must be null or valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn pk_incomplete_beta(x: f64, a: f64, b: f64, out: *mut f64) -> PkStatus {
    guard(|| write(out, "out", incomplete_beta(IncBetaParams { x, a, b })?))
}

/// Creates a policy over `m` responses. `correct_mask[i]` is nonzero when
/// response `i` is correct; `logits` holds the initial logits.
///
/// # Safety
/// `correct_mask` and `logits` must each be null or point to `m` readable
/// elements. `out` must be null or valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn pk_policy_new(
    m: usize,
    correct_mask: *const u8,
    logits: *const f64,
    out: *mut *mut PkPolicy,
) -> PkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if correct_mask.is_null() {
            return Err(null("correct_mask"));
        }
        if logits.is_null() {
            return Err(null("logits"));
        }
        if m == 0 {
            return Err(invalid("a policy needs at least one response"));
        }
        let mask = std::slice::from_raw_parts(correct_mask, m)
            .iter()
            .map(|&b| b != 0)
            .collect();
        let logits = std::slice::from_raw_parts(logits, m).to_vec();
        let inner = TabularPolicy::single(&ProblemSpec::new(mask, logits)?)?;
        out.write(Box::into_raw(Box::new(PkPolicy { inner })));
        Ok(())
    })
}

/// Releases a policy. Null is ignored.
///
/// # Safety
/// `policy` must be null or a handle from [`pk_policy_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_policy_free(policy: *mut PkPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Number of responses of a policy.
///
/// # Safety
/// `policy` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pk_policy_response_count(policy: *const PkPolicy, out: *mut usize) -> PkStatus {
    guard(|| write(out, "out", policy_ref(policy)?.response_count(0)))
}

/// Probability mass `rho` on correct responses.
///
/// # Safety
/// `policy` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pk_policy_rho(policy: *const PkPolicy, out: *mut f64) -> PkStatus {
    guard(|| write(out, "out", policy_ref(policy)?.rho(0)))
}

/// Exact gradient of `rho` with respect to the logits. `len` must equal the
/// response count.
///
/// # Safety
/// `policy` must be null or a live handle; `out` null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pk_policy_exact_rho_grad(policy: *const PkPolicy, out: *mut f64, len: usize) -> PkStatus {
    guard(|| {
        let p = policy_ref(policy)?;
        slice_out(out, len, p.response_count(0))?.copy_from_slice(p.exact_rho_grad(0).as_slice());
        Ok(())
    })
}

/// Exact expectation of an estimator's group gradient at group size `n`.
///
/// # Safety
/// `policy` must be null or a live handle; `out` null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pk_policy_expected_gradient(
    policy: *const PkPolicy,
    algorithm_code: u32,
    k: usize,
    lambda: f64,
    n: usize,
    out: *mut f64,
    len: usize,
) -> PkStatus {
    guard(|| {
        let p = policy_ref(policy)?;
        let alg = algorithm(algorithm_code, k, lambda)?;
        let g = expected_gradient(&alg, p, 0, n)?;
        slice_out(out, len, p.response_count(0))?.copy_from_slice(g.as_slice());
        Ok(())
    })
}

/// Runs a training configuration given as JSON and returns the metrics as
/// JSON lines: one `step` record per step followed by a `summary` record.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` null or
/// writable. The returned string must be released with [`pk_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pk_train_json(config_json: *const c_char, out: *mut *mut c_char) -> PkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg: TrainConfig = serde_json::from_str(read_str(config_json, "config_json")?).map_err(Error::from)?;
        let run = train(&cfg)?;
        out.write(into_c_string(passk::cli::train_jsonl(&run.rows, &run.summary)?)?);
        Ok(())
    })
}

/// Runs the verification suites and returns one JSON report per line. A null
/// `config_json` selects the defaults. `out_failed` receives the number of
/// failed checks; the status is still `Ok` when checks fail.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` and
/// `out_failed` null or writable. Release the string with [`pk_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pk_verify_json(
    config_json: *const c_char,
    out: *mut *mut c_char,
    out_failed: *mut usize,
) -> PkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if out_failed.is_null() {
            return Err(null("out_failed"));
        }
        let cfg: VerifyConfig = if config_json.is_null() {
            VerifyConfig::default()
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?).map_err(Error::from)?
        };
        let reports = run_verify(&cfg)?;
        let text = into_c_string(passk::cli::verify_jsonl(&reports)?)?;
        out_failed.write(reports.iter().filter(|r| !r.pass).count());
        out.write(text);
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

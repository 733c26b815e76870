//! C ABI over `qmle`.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns a `QmleStatus`; on failure the message is
//! available from `qmle_last_error_message` on the same thread. Arrays are
//! passed as pointer plus length, matrices row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use qmle::estimate::{BankCounts, CellCounts, Objective, OptimizerOptions, QuantizedDataset};
use qmle::{Error, FisherMatrix, ModelSpec, ParameterVector, QuantizerBank, WeightVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmleStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    InvalidParameter = 3,
    Numerical = 4,
    Singular = 5,
    EmptyData = 6,
    Config = 7,
    Input = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

impl From<&Error> for QmleStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => QmleStatus::Domain,
            Error::InvalidParameter(_) => QmleStatus::InvalidParameter,
            Error::NumericalConsistency(_) => QmleStatus::Numerical,
            Error::Singular(_) => QmleStatus::Singular,
            Error::EmptyData(_) => QmleStatus::EmptyData,
            Error::Config(_) => QmleStatus::Config,
            Error::Input(_) => QmleStatus::Input,
            Error::Io(_) => QmleStatus::Io,
        }
    }
}

/// Model structure: Gamma scales per sensor.
pub struct QmleModel {
    spec: ModelSpec,
}

/// Cell counts grouped by quantizer bank.
pub struct QmleDataset {
    n_sensors: usize,
    groups: Vec<BankCounts>,
}

/// Summary of a fit; the estimate itself is written to a caller array.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QmleFitSummary {
    pub loglik: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub converged: bool,
    pub at_boundary: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Status(QmleStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(QmleStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QmleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QmleStatus::Ok,
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            QmleStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            QmleStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, needed: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len < needed {
        return Err(Fail::Status(QmleStatus::BufferTooSmall, format!("{what} needs {needed} entries, got {len}")));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, needed))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn qmle_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map(|c| c.as_bytes()).unwrap_or(b"");
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qmle_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a model with one Gamma scale per sensor.
///
/// # Safety
/// `scales` must point to `n_sensors` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qmle_model_new(scales: *const f64, n_sensors: usize, out: *mut *mut QmleModel) -> QmleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = ModelSpec::new(input(scales, n_sensors, "scales")?.to_vec())?;
        *out = Box::into_raw(Box::new(QmleModel { spec }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `qmle_model_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn qmle_model_free(model: *mut QmleModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of parameters (`1 + n_sensors`): the copula parameter followed by
/// the Gamma shapes.
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn qmle_model_n_params(model: *const QmleModel) -> usize {
    model.as_ref().map_or(0, |m| m.spec.n_params())
}

unsafe fn model_ref<'a>(model: *const QmleModel) -> Result<&'a QmleModel, Fail> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn theta_of(m: &QmleModel, theta: *const f64, len: usize) -> Result<ParameterVector, Fail> {
    if len != m.spec.n_params() {
        return Err(Fail::Status(
            QmleStatus::InvalidParameter,
            format!("theta needs {} entries, got {len}", m.spec.n_params()),
        ));
    }
    Ok(ParameterVector::from_vec(input(theta, len, "theta")?.to_vec())?)
}

/// Cell probabilities of one bank (one threshold per sensor), indexed with
/// sensor 1 as the most significant bit. `out` needs `2^n_sensors` entries.
///
/// # Safety
/// Pointers must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn qmle_cell_pmf(
    model: *const QmleModel,
    theta: *const f64,
    theta_len: usize,
    thresholds: *const f64,
    n_thresholds: usize,
    out: *mut f64,
    out_len: usize,
) -> QmleStatus {
    guard(|| {
        let m = model_ref(model)?;
        let theta = theta_of(m, theta, theta_len)?;
        let bank = QuantizerBank::new(input(thresholds, n_thresholds, "thresholds")?)?;
        let pmf = qmle::cell_pmf(&theta, &bank, &m.spec)?;
        output(out, out_len, pmf.probs.len(), "out")?.copy_from_slice(&pmf.probs);
        Ok(())
    })
}

/// Per-sample Fisher information of one bank, written row-major into `out`
/// (`n_params^2` entries).
///
/// # Safety
/// Pointers must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn qmle_fim(
    model: *const QmleModel,
    theta: *const f64,
    theta_len: usize,
    thresholds: *const f64,
    n_thresholds: usize,
    out: *mut f64,
    out_len: usize,
) -> QmleStatus {
    guard(|| {
        let m = model_ref(model)?;
        let theta = theta_of(m, theta, theta_len)?;
        let bank = QuantizerBank::new(input(thresholds, n_thresholds, "thresholds")?)?;
        let fim = qmle::fim_quantized(&theta, &bank, &m.spec)?;
        let k = fim.dim();
        let dst = output(out, out_len, k * k, "out")?;
        for i in 0..k {
            for j in 0..k {
                dst[i * k + j] = fim.matrix[(i, j)];
            }
        }
        Ok(())
    })
}

/// Per-sample asymptotic covariance of the multi-bank estimator:
/// `(sum_j w_j I_j)^-1` with `I_j` the information of bank `j`. Banks are
/// `n_banks` consecutive threshold groups of `n_sensors` entries. A null
/// `weights` means equal shares. Optionally writes the condition number.
///
/// # Safety
/// Pointers must be valid for their lengths; `condition` may be null.
#[no_mangle]
pub unsafe extern "C" fn qmle_crlb(
    model: *const QmleModel,
    theta: *const f64,
    theta_len: usize,
    thresholds: *const f64,
    n_banks: usize,
    weights: *const f64,
    out: *mut f64,
    out_len: usize,
    condition: *mut f64,
) -> QmleStatus {
    guard(|| {
        let m = model_ref(model)?;
        let theta = theta_of(m, theta, theta_len)?;
        let l = m.spec.n_sensors();
        let t = input(thresholds, n_banks * l, "thresholds")?;
        let fims = t
            .chunks_exact(l)
            .map(|c| QuantizerBank::new(c).and_then(|b| qmle::fim_quantized(&theta, &b, &m.spec)))
            .collect::<qmle::Result<Vec<_>>>()?;
        let w = if weights.is_null() {
            WeightVector::equal(n_banks)?
        } else {
            WeightVector::new(input(weights, n_banks, "weights")?.to_vec())?
        };
        let c = qmle::combine_fims(&fims, &w)?;
        let k = m.spec.n_params();
        let dst = output(out, out_len, k * k, "out")?;
        for i in 0..k {
            for j in 0..k {
                dst[i * k + j] = c.covariance[(i, j)];
            }
        }
        if let Some(cn) = condition.as_mut() {
            *cn = c.condition_number;
        }
        Ok(())
    })
}

/// Combined variance `1 / sum_j w_j I_j` of scalar informations. A null
/// `weights` means equal shares.
///
/// # Safety
/// Pointers must be valid for `n`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qmle_combine_scalar(
    informations: *const f64,
    weights: *const f64,
    n: usize,
    out: *mut f64,
) -> QmleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let info = input(informations, n, "informations")?;
        let fims: Vec<_> = info.iter().enumerate().map(|(i, &v)| FisherMatrix::scalar(v, i.to_string())).collect();
        let w = if weights.is_null() {
            WeightVector::equal(n)?
        } else {
            WeightVector::new(input(weights, n, "weights")?.to_vec())?
        };
        *out = qmle::combine_fims(&fims, &w)?.covariance[(0, 0)];
        Ok(())
    })
}

/// Creates an empty data set for `n_sensors` sensors.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qmle_dataset_new(n_sensors: usize, out: *mut *mut QmleDataset) -> QmleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n_sensors == 0 || n_sensors > qmle::models::MAX_DIM {
            return Err(Fail::Status(QmleStatus::InvalidParameter, format!("unsupported sensor count {n_sensors}")));
        }
        *out = Box::into_raw(Box::new(QmleDataset { n_sensors, groups: Vec::new() }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from `qmle_dataset_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn qmle_dataset_free(dataset: *mut QmleDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Adds the cell counts observed through one bank (`2^n_sensors` counts,
/// sensor 1 as the most significant bit).
///
/// # Safety
/// Pointers must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn qmle_dataset_add_bank(
    dataset: *mut QmleDataset,
    thresholds: *const f64,
    n_thresholds: usize,
    counts: *const u64,
    n_counts: usize,
) -> QmleStatus {
    guard(|| {
        let ds = dataset.as_mut().ok_or_else(|| null("dataset"))?;
        if n_thresholds != ds.n_sensors {
            return Err(Fail::Status(QmleStatus::InvalidParameter, format!("expected {} thresholds", ds.n_sensors)));
        }
        let bank = QuantizerBank::new(input(thresholds, n_thresholds, "thresholds")?)?;
        let counts = CellCounts::from_counts(input(counts, n_counts, "counts")?.to_vec())?;
        if counts.n_sensors() != ds.n_sensors {
            return Err(Fail::Status(
                QmleStatus::InvalidParameter,
                format!("expected {} counts", 1usize << ds.n_sensors),
            ));
        }
        ds.groups.push(BankCounts { bank, counts });
        Ok(())
    })
}

/// Maximum-likelihood fit of the quantized data. Writes the estimate into
/// `theta_out` (`n_params` entries) and the summary into `summary`.
///
/// # Safety
/// Handles must be live; output pointers valid.
#[no_mangle]
pub unsafe extern "C" fn qmle_fit(
    model: *const QmleModel,
    dataset: *const QmleDataset,
    seed: u64,
    theta_out: *mut f64,
    theta_len: usize,
    summary: *mut QmleFitSummary,
) -> QmleStatus {
    guard(|| {
        let m = model_ref(model)?;
        let ds = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if ds.n_sensors != m.spec.n_sensors() {
            return Err(Fail::Status(QmleStatus::InvalidParameter, "dataset and model sensor counts differ".into()));
        }
        let data = QuantizedDataset::new(ds.groups.clone())?;
        let opts = OptimizerOptions { seed, ..OptimizerOptions::default() };
        let fit = qmle::fit_mle(Objective::Quantized(&data), &m.spec, &opts)?;
        output(theta_out, theta_len, fit.theta_hat.len(), "theta_out")?.copy_from_slice(fit.theta_hat.as_slice());
        if let Some(s) = summary.as_mut() {
            *s = QmleFitSummary {
                loglik: fit.loglik,
                iterations: fit.iterations,
                restarts_used: fit.n_restarts_used,
                converged: fit.converged,
                at_boundary: fit.at_boundary,
            };
        }
        Ok(())
    })
}

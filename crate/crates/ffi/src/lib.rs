//! C ABI over the `gastl` library.
//!
//! Every entry point returns a [`GastlStatus`]. On failure the message is
//! kept per thread and can be read with [`gastl_last_error_message`].
//! Objects cross the boundary as opaque handles released with the matching
//! `*_free` function; strings returned to the caller are released with
//! [`gastl_string_free`]. Matrices are passed row-major.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gastl::dataset::{load_csv_matrix, make_synthetic_transfer, DatasetBundle, SyntheticSpec};
use gastl::l21solver::IrlsOptions;
use gastl::lbfgs::LbfgsOptions;
use gastl::numerics::l21_norm;
use gastl::pipeline::{run_experiment, ExperimentConfig};
use gastl::relevance::source_weights;
use gastl::transfer::{fit, TransferHyperParams, TransferModel};
use gastl::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GastlStatus {
    Ok = 0,
    InvalidConfig = 1,
    DataError = 2,
    Numerical = 3,
    NullPointer = 4,
    Panic = 5,
}

/// A loaded dataset (source, target train, target test).
pub struct GastlBundle {
    inner: DatasetBundle,
}

/// A fitted transfer model.
pub struct GastlModel {
    inner: TransferModel,
}

/// Flat mirror of the transfer hyperparameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GastlHyperParams {
    pub hidden_size: usize,
    pub mu: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub knn: usize,
    pub max_outer: usize,
    pub outer_tol: f64,
    pub irls_epsilon: f64,
    pub irls_tol: f64,
    pub irls_max_iter: usize,
    pub lbfgs_max_iter: usize,
    pub lbfgs_memory: usize,
    pub seed: u64,
}

impl From<TransferHyperParams> for GastlHyperParams {
    fn from(hp: TransferHyperParams) -> Self {
        Self {
            hidden_size: hp.hidden_size,
            mu: hp.mu,
            lambda: hp.lambda,
            gamma: hp.gamma,
            knn: hp.knn,
            max_outer: hp.max_outer,
            outer_tol: hp.outer_tol,
            irls_epsilon: hp.irls.epsilon,
            irls_tol: hp.irls.tol,
            irls_max_iter: hp.irls.max_iter,
            lbfgs_max_iter: hp.lbfgs.max_iterations,
            lbfgs_memory: hp.lbfgs.memory,
            seed: hp.seed,
        }
    }
}

impl From<GastlHyperParams> for TransferHyperParams {
    fn from(c: GastlHyperParams) -> Self {
        TransferHyperParams {
            hidden_size: c.hidden_size,
            mu: c.mu,
            lambda: c.lambda,
            gamma: c.gamma,
            knn: c.knn,
            max_outer: c.max_outer,
            outer_tol: c.outer_tol,
            irls: IrlsOptions {
                epsilon: c.irls_epsilon,
                tol: c.irls_tol,
                max_iter: c.irls_max_iter,
            },
            lbfgs: LbfgsOptions {
                max_iterations: c.lbfgs_max_iter,
                memory: c.lbfgs_memory,
                ..LbfgsOptions::default()
            },
            seed: c.seed,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut msg = msg.into();
    msg.retain(|c| c != '\0');
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(GastlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.kind() {
            ErrorKind::InvalidConfig => GastlStatus::InvalidConfig,
            ErrorKind::Data => GastlStatus::DataError,
            ErrorKind::Numerical => GastlStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GastlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GastlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GastlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GastlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GastlStatus::InvalidConfig, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s).expect("JSON has no nul bytes").into_raw()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn gastl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn gastl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gastl_hyperparams_default(out: *mut GastlHyperParams) -> GastlStatus {
    guard(|| {
        *out_arg(out, "out")? = TransferHyperParams::default().into();
        Ok(())
    })
}

/// Loads three CSV files. `label_column` may be null (defaults to `y`, or the
/// last column for files without a header).
#[no_mangle]
pub unsafe extern "C" fn gastl_bundle_load_csv(
    source: *const c_char,
    target_train: *const c_char,
    target_test: *const c_char,
    label_column: *const c_char,
    out: *mut *mut GastlBundle,
) -> GastlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let label = if label_column.is_null() {
            "y"
        } else {
            str_arg(label_column, "label_column")?
        };
        let (x_src, _) = load_csv_matrix(str_arg(source, "source")?, None)?;
        let (x_trg, y_trg) = load_csv_matrix(str_arg(target_train, "target_train")?, Some(label))?;
        let (x_test, y_test) = load_csv_matrix(str_arg(target_test, "target_test")?, Some(label))?;
        let inner = DatasetBundle::new(
            x_src,
            x_trg,
            y_trg.expect("labels requested"),
            x_test,
            y_test.expect("labels requested"),
        )?;
        *out = Box::into_raw(Box::new(GastlBundle { inner }));
        Ok(())
    })
}

#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gastl_bundle_synthetic(
    d: usize,
    clusters: usize,
    n_src_per_cluster: usize,
    n_trg_per_class: usize,
    n_test_per_class: usize,
    relevant_clusters: usize,
    noise_sd: f64,
    seed: u64,
    out: *mut *mut GastlBundle,
) -> GastlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec = SyntheticSpec {
            d,
            clusters,
            n_src_per_cluster,
            n_trg_per_class,
            n_test_per_class,
            relevant_clusters,
            noise_sd,
            seed,
        };
        let inner = make_synthetic_transfer(&spec)?.bundle;
        *out = Box::into_raw(Box::new(GastlBundle { inner }));
        Ok(())
    })
}

/// Feature dimension and sample counts of a bundle. Any output may be null.
#[no_mangle]
pub unsafe extern "C" fn gastl_bundle_dims(
    bundle: *const GastlBundle,
    dim: *mut usize,
    n_src: *mut usize,
    n_trg: *mut usize,
    n_test: *mut usize,
) -> GastlStatus {
    guard(|| {
        let b = &handle(bundle, "bundle")?.inner;
        for (p, v) in [
            (dim, b.dim()),
            (n_src, b.n_src()),
            (n_trg, b.n_trg()),
            (n_test, b.x_test.ncols()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gastl_bundle_free(bundle: *mut GastlBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Scales the bundle and fits the transfer model.
#[no_mangle]
pub unsafe extern "C" fn gastl_transfer_fit(
    bundle: *const GastlBundle,
    params: *const GastlHyperParams,
    out: *mut *mut GastlModel,
) -> GastlStatus {
    guard(|| {
        let b = &handle(bundle, "bundle")?.inner;
        let hp: TransferHyperParams = (*handle(params, "params")?).into();
        let out = out_arg(out, "out")?;
        let (scaled, scaler) = b.scaled()?;
        let mut inner = fit(&scaled, &hp)?;
        inner.scaler = Some(scaler);
        *out = Box::into_raw(Box::new(GastlModel { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gastl_model_free(model: *mut GastlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the `n_src` source relevance weights. `len` must equal `n_src`.
#[no_mangle]
pub unsafe extern "C" fn gastl_model_source_weights(
    model: *const GastlModel,
    out: *mut f64,
    len: usize,
) -> GastlStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let w = source_weights(&m.a);
        if len != w.len() {
            return Err(Failure(
                GastlStatus::InvalidConfig,
                format!(
                    "weight buffer holds {len} values, model has {} source samples",
                    w.len()
                ),
            ));
        }
        std::slice::from_raw_parts_mut(out, len)
            .copy_from_slice(w.0.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// Copies up to `capacity` trace values into `out` (may be null when
/// `capacity` is 0) and stores the full trace length in `len`.
#[no_mangle]
pub unsafe extern "C" fn gastl_model_objective_trace(
    model: *const GastlModel,
    out: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> GastlStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        let len = out_arg(len, "len")?;
        let trace = &m.objective_trace;
        *len = trace.len();
        let k = capacity.min(trace.len());
        if k > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, k).copy_from_slice(&trace[..k]);
        }
        Ok(())
    })
}

/// Serialized model; free with [`gastl_string_free`].
#[no_mangle]
pub unsafe extern "C" fn gastl_model_to_json(
    model: *const GastlModel,
    out: *mut *mut c_char,
) -> GastlStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        *out_arg(out, "out")? = c_string(m.to_json());
        Ok(())
    })
}

/// Runs a full experiment from a JSON configuration and returns the JSON
/// report; free it with [`gastl_string_free`].
#[no_mangle]
pub unsafe extern "C" fn gastl_run_experiment_json(
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> GastlStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let out = out_arg(out, "out")?;
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Failure(
                GastlStatus::InvalidConfig,
                format!("configuration JSON: {e}"),
            )
        })?;
        *out = c_string(run_experiment(&cfg)?.to_json());
        Ok(())
    })
}

/// Sum of Euclidean row norms of a row-major `rows × cols` matrix.
#[no_mangle]
pub unsafe extern "C" fn gastl_l21_norm(
    data: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> GastlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(GastlStatus::InvalidConfig, "size overflow".into()))?;
        let values: &[f64] = if n == 0 {
            &[]
        } else if data.is_null() {
            return Err(null("data"));
        } else {
            std::slice::from_raw_parts(data, n)
        };
        let view = gastl::numerics::Matrix::from_shape_vec((rows, cols), values.to_vec())
            .map_err(|e| Failure(GastlStatus::InvalidConfig, e.to_string()))?;
        *out = l21_norm(&view.view())?;
        Ok(())
    })
}

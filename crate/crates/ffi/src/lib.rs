//! C interface to `gnnstat`.
//!
//! Every fallible call returns a [`GnnStatus`]; on failure a description is
//! available from [`gnn_last_error`] on the same thread. Datasets are opaque
//! handles owned by the caller and released with [`gnn_dataset_free`].
//! Matrices cross the boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gnnstat::bench::config::{ExperimentConfig, RegimePoint, SketchDim};
use gnnstat::bench::output::write_results;
use gnnstat::bench::runner::{run_experiment, run_trial, PreparedDataset, RunOptions};
use gnnstat::data::{generate_synthetic, load_dataset, save_dataset, SyntheticSpec};
use gnnstat::graph::{propagate_power, propagate_ppr};
use gnnstat::models::ModelSpec;
use gnnstat::nn::TrainConfig;
use gnnstat::{DenseMatrix, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    TrainingFailed = 6,
    Config = 7,
    Internal = 8,
}

/// A loaded dataset with its normalized adjacency.
pub struct GnnDataset {
    inner: PreparedDataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> GnnStatus {
    match e {
        Error::Io { .. } => GnnStatus::Io,
        Error::Parse { .. } | Error::InvalidDataset(_) => GnnStatus::Parse,
        Error::DimensionMismatch(_) => GnnStatus::DimensionMismatch,
        Error::Diverged { .. } | Error::AllTrialsFailed(_) | Error::SingularSystem => GnnStatus::TrainingFailed,
        Error::Config(_) => GnnStatus::Config,
        _ => GnnStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic for [`gnn_last_error`].
fn guard(f: impl FnOnce() -> Result<(), (GnnStatus, String)>) -> GnnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GnnStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            GnnStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (GnnStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GnnStatus, String) {
    (GnnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (GnnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GnnStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn dataset_arg<'a>(p: *const GnnDataset) -> Result<&'a PreparedDataset, (GnnStatus, String)> {
    p.as_ref().map(|d| &d.inner).ok_or_else(|| null("dataset"))
}

unsafe fn write_handle(out: *mut *mut GnnDataset, ds: gnnstat::data::Dataset) -> Result<(), (GnnStatus, String)> {
    let handle = Box::new(GnnDataset {
        inner: PreparedDataset::new(ds),
    });
    *out = Box::into_raw(handle);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset directory (`meta.json`, `graph.tsv`, `features.tsv`,
/// `labels.tsv`).
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gnn_dataset_load(dir: *const c_char, out: *mut *mut GnnDataset) -> GnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = str_arg(dir, "dir")?;
        let ds = load_dataset(dir).map_err(lib_err)?;
        write_handle(out, ds)
    })
}

/// Generates a stochastic-block-model dataset with the default edge
/// probabilities and feature separation.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gnn_dataset_synthetic(
    n_per_class: usize,
    n_classes: usize,
    feature_dim: usize,
    seed: u64,
    out: *mut *mut GnnDataset,
) -> GnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = SyntheticSpec {
            n_per_class,
            n_classes,
            feature_dim,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(lib_err)?;
        write_handle(out, ds)
    })
}

/// Writes a dataset in the directory layout read by [`gnn_dataset_load`].
///
/// # Safety
/// `ds` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gnn_dataset_save(ds: *const GnnDataset, dir: *const c_char) -> GnnStatus {
    guard(|| {
        let ds = dataset_arg(ds)?;
        let dir = str_arg(dir, "dir")?;
        save_dataset(&ds.dataset, dir).map_err(lib_err)
    })
}

/// Releases a dataset. NULL is ignored.
///
/// # Safety
/// `ds` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gnn_dataset_free(ds: *mut GnnDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn gnn_dataset_n_nodes(ds: *const GnnDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dataset.n_nodes())
}

/// # Safety
/// `ds` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn gnn_dataset_n_features(ds: *const GnnDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dataset.n_features())
}

/// # Safety
/// `ds` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn gnn_dataset_n_classes(ds: *const GnnDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dataset.n_classes)
}

unsafe fn matrix_in(ds: &PreparedDataset, x: *const f64, cols: usize) -> Result<DenseMatrix, (GnnStatus, String)> {
    if x.is_null() {
        return Err(null("x"));
    }
    let n = ds.dataset.n_nodes();
    let data = std::slice::from_raw_parts(x, n * cols).to_vec();
    DenseMatrix::from_vec(n, cols, data).map_err(lib_err)
}

unsafe fn matrix_out(m: &DenseMatrix, out: *mut f64) -> Result<(), (GnnStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(m.data().as_ptr(), out, m.data().len());
    Ok(())
}

/// `Ã^k x` for an `n_nodes × cols` row-major `x`; `out` has the same shape
/// and may not alias `x`.
///
/// # Safety
/// `x` and `out` must each hold `n_nodes * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn gnn_propagate_power(
    ds: *const GnnDataset,
    x: *const f64,
    cols: usize,
    k: usize,
    out: *mut f64,
) -> GnnStatus {
    guard(|| {
        let ds = dataset_arg(ds)?;
        let x = matrix_in(ds, x, cols)?;
        let z = propagate_power(&ds.adj, &x, k).map_err(lib_err)?;
        matrix_out(&z, out)
    })
}

/// Personalized-PageRank propagation by fixed-point iteration. The final
/// update size is written to `residual` and whether it reached `tol` to
/// `converged` (either may be NULL).
///
/// # Safety
/// `x` and `out` must each hold `n_nodes * cols` doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gnn_propagate_ppr(
    ds: *const GnnDataset,
    x: *const f64,
    cols: usize,
    alpha: f64,
    iters: usize,
    tol: f64,
    out: *mut f64,
    residual: *mut f64,
    converged: *mut bool,
) -> GnnStatus {
    guard(|| {
        let ds = dataset_arg(ds)?;
        let x = matrix_in(ds, x, cols)?;
        let r = propagate_ppr(&ds.adj, &x, alpha, iters, tol).map_err(lib_err)?;
        matrix_out(&r.features, out)?;
        if let Some(p) = residual.as_mut() {
            *p = r.residual;
        }
        if let Some(p) = converged.as_mut() {
            *p = r.converged;
        }
        Ok(())
    })
}

/// Trains one model on one seeded trial and writes its test accuracy.
///
/// `model_json` is a model spec such as `{"kind": "APPNP", "alpha": 0.1}`;
/// `train_json` overrides optimizer settings and may be NULL.
/// `sketch_dim == 0` keeps the raw features. A fraction of
/// `frac_observed` nodes is observed, a fifth of which is used for
/// validation.
///
/// # Safety
/// String arguments must be NUL-terminated; `accuracy` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gnn_run_trial(
    ds: *const GnnDataset,
    model_json: *const c_char,
    train_json: *const c_char,
    frac_observed: f64,
    sketch_dim: usize,
    base_seed: u64,
    trial_index: u64,
    accuracy: *mut f64,
) -> GnnStatus {
    guard(|| {
        let ds = dataset_arg(ds)?;
        if accuracy.is_null() {
            return Err(null("accuracy"));
        }
        let spec: ModelSpec = serde_json::from_str(str_arg(model_json, "model_json")?)
            .map_err(|e| (GnnStatus::Config, format!("model_json: {e}")))?;
        spec.validate().map_err(lib_err)?;
        let train: TrainConfig = if train_json.is_null() {
            TrainConfig::default()
        } else {
            serde_json::from_str(str_arg(train_json, "train_json")?)
                .map_err(|e| (GnnStatus::Config, format!("train_json: {e}")))?
        };
        let point = RegimePoint::Fraction {
            frac_observed,
            val_frac_of_observed: 0.2,
        };
        let dim = if sketch_dim == 0 {
            SketchDim::Raw
        } else {
            SketchDim::Dim(sketch_dim)
        };
        let acc = run_trial(ds, &spec, point, dim, base_seed, trial_index, &train).map_err(|e| match e {
            Error::InvalidParameter(m) => (GnnStatus::TrainingFailed, m),
            e => lib_err(e),
        })?;
        *accuracy = acc;
        Ok(())
    })
}

/// Runs a JSON experiment config and writes `summary.csv` and
/// `raw_trials.csv` into `out_dir`. `threads == 0` uses every core.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gnn_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    threads: usize,
) -> GnnStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_file(str_arg(config_path, "config_path")?).map_err(lib_err)?;
        let out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let result = run_experiment(
            &cfg,
            RunOptions {
                threads,
                cap_sketch_at_raw: false,
            },
        )
        .map_err(lib_err)?;
        write_results(&result, out).map_err(lib_err)
    })
}

/// Mean and 95% half-width `1.96·s/√n` of `n` samples. The half-width is
/// NaN when `n < 2`.
///
/// # Safety
/// `samples` must hold `n` doubles; `mean` and `half_width` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gnn_ci95(samples: *const f64, n: usize, mean: *mut f64, half_width: *mut f64) -> GnnStatus {
    guard(|| {
        if samples.is_null() || mean.is_null() || half_width.is_null() {
            return Err(null("argument"));
        }
        if n == 0 {
            return Err((GnnStatus::InvalidArgument, "no samples".into()));
        }
        let (m, h) = gnnstat::bench::ci95(std::slice::from_raw_parts(samples, n));
        *mean = m;
        *half_width = h.unwrap_or(f64::NAN);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> Option<String> {
        let p = gnn_last_error();
        (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
    }

    #[test]
    fn errors_map_to_codes() {
        assert_eq!(status_of(&Error::Config("x".into())), GnnStatus::Config);
        assert_eq!(
            status_of(&Error::DimensionMismatch("x".into())),
            GnnStatus::DimensionMismatch
        );
        assert_eq!(status_of(&Error::EmptyGraph), GnnStatus::InvalidArgument);
    }

    #[test]
    fn panics_become_internal_errors() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, GnnStatus::Internal);
        assert!(last_error().unwrap().contains("boom"));
        assert_eq!(guard(|| Ok(())), GnnStatus::Ok);
        assert!(last_error().is_none());
    }

    #[test]
    fn ci95_matches_hand_values() {
        let (mut m, mut h) = (0.0, 0.0);
        let xs = [0.0, 2.0];
        assert_eq!(unsafe { gnn_ci95(xs.as_ptr(), 2, &mut m, &mut h) }, GnnStatus::Ok);
        assert_eq!(m, 1.0);
        assert!((h - 1.96).abs() < 1e-12);
        assert_eq!(unsafe { gnn_ci95(xs.as_ptr(), 1, &mut m, &mut h) }, GnnStatus::Ok);
        assert!(h.is_nan());
        assert_eq!(
            unsafe { gnn_ci95(xs.as_ptr(), 0, &mut m, &mut h) },
            GnnStatus::InvalidArgument
        );
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(gnn_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}

//! C ABI over `dcm-core`.
//!
//! Every function returns a [`DcmStatus`]. On failure the message is
//! available from [`dcm_last_error`] on the same thread until the next
//! failing call. Handles are opaque and must be released with their `_free`
//! function. Matrices are dense row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dcm_core::cli::{load_model, load_scm, CliError};
use dcm_core::diffusion::DiffusionConfig;
use dcm_core::engine::{AnmConfig, AnmModel as CoreAnm, CausalQueryModel, DcmModel as CoreDcm, Factual, ModelFile, SavedModel};
use dcm_core::eval::benchmark_scm;
use dcm_core::graph::GraphKind;
use dcm_core::intervention::{self, Interventions};
use dcm_core::metrics::{mmd_rbf, KernelSpec};
use dcm_core::scm::{GroundTruthScm, SemKind};
use dcm_core::{io, seed};
use ndarray::{Array2, ArrayView2};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    SchemaVersion = 4,
    Intervention = 5,
    Model = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcmModelKind {
    Dcm = 0,
    Anm = 1,
}

/// A ground-truth structural causal model.
pub struct DcmScm {
    inner: GroundTruthScm,
}

/// A fitted model, or an SCM used as its own query model.
pub struct DcmModel {
    inner: Queryable,
}

enum Queryable {
    Saved(SavedModel),
    Oracle(GroundTruthScm),
}

impl Queryable {
    fn query(&self) -> &dyn CausalQueryModel {
        match self {
            Queryable::Saved(m) => m.as_query(),
            Queryable::Oracle(s) => s,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(DcmStatus, String);

fn fail(status: DcmStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e.kind() {
            "io" => DcmStatus::Io,
            "schema_version" => DcmStatus::SchemaVersion,
            "intervention" => DcmStatus::Intervention,
            "usage" | "config" | "graph" => DcmStatus::InvalidArgument,
            _ => DcmStatus::Model,
        };
        Failure(status, e.to_string())
    }
}

fn model_err(e: impl std::fmt::Display) -> Failure {
    fail(DcmStatus::Model, e.to_string())
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DcmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DcmStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {message}"));
            DcmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(fail(DcmStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| fail(DcmStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| fail(DcmStatus::NullPointer, format!("{name} is null")))
}

unsafe fn matrix_arg<'a>(ptr: *const f64, rows: usize, cols: usize, name: &str) -> Result<ArrayView2<'a, f64>, Failure> {
    if ptr.is_null() {
        return Err(fail(DcmStatus::NullPointer, format!("{name} is null")));
    }
    Ok(ArrayView2::from_shape_ptr((rows, cols), ptr))
}

unsafe fn write_out(out: *mut f64, data: &Array2<f64>) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(DcmStatus::NullPointer, "output buffer is null"));
    }
    let standard = data.as_standard_layout();
    let src = standard.as_slice().expect("standard layout");
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn handle_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(DcmStatus::NullPointer, "output handle pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// `"x1=1.0;x3=0.5,0.2"`; null or empty means no intervention.
unsafe fn interventions_arg(graph: &dcm_core::graph::CausalGraph, spec: *const c_char) -> Result<Interventions, Failure> {
    if spec.is_null() {
        return Ok(Interventions::new());
    }
    let text = str_arg(spec, "interventions")?;
    let parts: Vec<String> = text.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
    intervention::parse(graph, &parts).map_err(|e| fail(DcmStatus::Intervention, e.to_string()))
}

/// The message of the last failing call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn dcm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dcm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A benchmark SCM by graph name (`chain`, `triangle`, `diamond`, `y`,
/// `ladder`, `random`) and equation class (`nlin`, `nadd`).
///
/// # Safety
/// `graph` and `sem` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcm_scm_benchmark(graph: *const c_char, sem: *const c_char, seed: u64, out: *mut *mut DcmScm) -> DcmStatus {
    guard(|| {
        let kind: GraphKind = str_arg(graph, "graph")?.parse().map_err(|e| fail(DcmStatus::InvalidArgument, format!("{e}")))?;
        let sem: SemKind = str_arg(sem, "sem")?.parse().map_err(|e: String| fail(DcmStatus::InvalidArgument, e))?;
        let scm = benchmark_scm(kind, sem, seed).map_err(model_err)?;
        handle_out(out, DcmScm { inner: scm })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcm_scm_load(path: *const c_char, out: *mut *mut DcmScm) -> DcmStatus {
    guard(|| {
        let scm = load_scm(Path::new(str_arg(path, "path")?))?;
        handle_out(out, DcmScm { inner: scm })
    })
}

/// # Safety
/// `scm` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dcm_scm_save(scm: *const DcmScm, path: *const c_char) -> DcmStatus {
    guard(|| {
        let scm = ref_arg(scm, "scm")?;
        io::write_json(Path::new(str_arg(path, "path")?), &scm.inner).map_err(|e| fail(DcmStatus::Io, e.to_string()))
    })
}

/// # Safety
/// `scm` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcm_scm_free(scm: *mut DcmScm) {
    if !scm.is_null() {
        drop(Box::from_raw(scm));
    }
}

/// Number of value columns (sum of node dimensions); 0 for a null handle.
///
/// # Safety
/// `scm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcm_scm_total_dim(scm: *const DcmScm) -> usize {
    scm.as_ref().map_or(0, |s| s.inner.graph().total_dim())
}

/// Draws `n` rows. `values` (and `noises` unless null) must hold
/// `n * total_dim` doubles.
///
/// # Safety
/// Buffers must be valid for the sizes above; `interventions` null or a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dcm_scm_sample(
    scm: *const DcmScm,
    interventions: *const c_char,
    n: usize,
    seed_value: u64,
    values: *mut f64,
    noises: *mut f64,
) -> DcmStatus {
    guard(|| {
        let scm = &ref_arg(scm, "scm")?.inner;
        let iv = interventions_arg(scm.graph(), interventions)?;
        let traced = scm
            .sample_interventional(&iv, n, &mut seed::stream(seed_value, "ffi-sample", 0))
            .map_err(model_err)?;
        write_out(values, &traced.values)?;
        if !noises.is_null() {
            write_out(noises, &traced.noises)?;
        }
        Ok(())
    })
}

/// Fits a model on `data` (`rows x cols`, row-major) using the SCM's graph.
/// `epochs` applies to DCM only; 0 keeps the default.
///
/// # Safety
/// `data` must hold `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcm_model_fit(
    scm: *const DcmScm,
    kind: DcmModelKind,
    data: *const f64,
    rows: usize,
    cols: usize,
    epochs: usize,
    seed_value: u64,
    out: *mut *mut DcmModel,
) -> DcmStatus {
    guard(|| {
        let graph = ref_arg(scm, "scm")?.inner.graph();
        let data = matrix_arg(data, rows, cols, "data")?;
        let saved = match kind {
            DcmModelKind::Dcm => {
                let mut config = DiffusionConfig::default();
                if epochs > 0 {
                    config.epochs = epochs;
                }
                SavedModel::Dcm(CoreDcm::fit(graph, data, &config, seed_value).map_err(model_err)?)
            }
            DcmModelKind::Anm => SavedModel::Anm(CoreAnm::fit(graph, data, &AnmConfig::default(), seed_value).map_err(model_err)?),
        };
        handle_out(out, DcmModel { inner: Queryable::Saved(saved) })
    })
}

/// Wraps a copy of the SCM as a query model (the oracle).
///
/// # Safety
/// `scm` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcm_model_from_scm(scm: *const DcmScm, out: *mut *mut DcmModel) -> DcmStatus {
    guard(|| {
        let scm = ref_arg(scm, "scm")?.inner.clone();
        handle_out(out, DcmModel { inner: Queryable::Oracle(scm) })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcm_model_load(path: *const c_char, out: *mut *mut DcmModel) -> DcmStatus {
    guard(|| {
        let file = load_model(Path::new(str_arg(path, "path")?))?;
        handle_out(out, DcmModel { inner: Queryable::Saved(file.model) })
    })
}

/// Saves a fitted model; oracle handles cannot be saved as models.
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dcm_model_save(model: *const DcmModel, path: *const c_char) -> DcmStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let path = Path::new(str_arg(path, "path")?);
        match &model.inner {
            Queryable::Saved(m) => io::write_json(path, &ModelFile::new(m.clone())).map_err(|e| fail(DcmStatus::Io, e.to_string())),
            Queryable::Oracle(_) => Err(fail(DcmStatus::InvalidArgument, "oracle handles are saved with dcm_scm_save")),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcm_model_free(model: *mut DcmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcm_model_total_dim(model: *const DcmModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.query().graph().total_dim())
}

/// `n` rows from the observational (null/empty `interventions`) or
/// interventional distribution into `out` (`n * total_dim` doubles).
///
/// # Safety
/// `out` must hold `n * total_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn dcm_model_sample(
    model: *const DcmModel,
    interventions: *const c_char,
    n: usize,
    seed_value: u64,
    out: *mut f64,
) -> DcmStatus {
    guard(|| {
        let q = ref_arg(model, "model")?.inner.query();
        let iv = interventions_arg(q.graph(), interventions)?;
        let rows = q.sample(&iv, n, &mut seed::stream(seed_value, "query", 0)).map_err(model_err)?;
        write_out(out, &rows)
    })
}

/// Counterfactuals of `rows` factual rows. `noise` may be null except for
/// oracle handles, which need the factual noise trace.
///
/// # Safety
/// `factual`, `noise` (if not null) and `out` must hold `rows * total_dim`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn dcm_model_counterfactual(
    model: *const DcmModel,
    factual: *const f64,
    noise: *const f64,
    rows: usize,
    interventions: *const c_char,
    out: *mut f64,
) -> DcmStatus {
    guard(|| {
        let q = ref_arg(model, "model")?.inner.query();
        let d = q.graph().total_dim();
        let values = matrix_arg(factual, rows, d, "factual")?;
        let query = if noise.is_null() {
            Factual::values(values)
        } else {
            Factual::traced(values, matrix_arg(noise, rows, d, "noise")?)
        };
        let iv = interventions_arg(q.graph(), interventions)?;
        let result = q.counterfactual(query, &iv).map_err(model_err)?;
        write_out(out, &result)
    })
}

/// Squared MMD with a Gaussian kernel between `x` (`nx x dim`) and `y`
/// (`ny x dim`). A non-positive `bandwidth` selects the median heuristic.
///
/// # Safety
/// Buffers must be valid for the given sizes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcm_mmd_rbf(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    dim: usize,
    bandwidth: f64,
    out: *mut f64,
) -> DcmStatus {
    guard(|| {
        let x = matrix_arg(x, nx, dim, "x")?;
        let y = matrix_arg(y, ny, dim, "y")?;
        let kernel = if bandwidth > 0.0 { KernelSpec::Fixed(bandwidth) } else { KernelSpec::MedianHeuristic };
        let v = mmd_rbf(x, y, kernel).map_err(|e| fail(DcmStatus::InvalidArgument, e.to_string()))?;
        let out = out.as_mut().ok_or_else(|| fail(DcmStatus::NullPointer, "out is null"))?;
        *out = v;
        Ok(())
    })
}

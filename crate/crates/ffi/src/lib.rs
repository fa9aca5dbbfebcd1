//! C ABI for ccsd.
//!
//! Every fallible function returns a [`CcsdStatus`]; on failure a message is
//! available from [`ccsd_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.
//! Panics never cross the boundary; they surface as `CCSD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ccsd::complex::{cell_count, CombinatorialComplex, DimConstraints};
use ccsd::config::{RunConfig, COMMUNITY_SMALL, GRID_SMALL};
use ccsd::data_io::{build_dataset, read_dataset, write_dataset, Checkpoint};
use ccsd::metrics::{evaluate, MetricConfig};
use ccsd::pipeline::EmpiricalNodeDist;
use ccsd::run::{sample_run, to_complexes, train_run};
use ccsd::CcsdError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcsdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    MissingKeys = 4,
    Checkpoint = 5,
    Io = 6,
    Parse = 7,
    Domain = 8,
    Shape = 9,
    Numeric = 10,
    OutOfRange = 11,
    Panic = 12,
}

/// Parsed run configuration.
pub struct CcsdConfig(RunConfig);

/// A list of combinatorial complexes.
pub struct CcsdDataset(Vec<CombinatorialComplex>);

/// Trained sampling parameters with the node-count distribution of their
/// training split.
pub struct CcsdModel {
    checkpoint: Checkpoint,
    nodes: EmpiricalNodeDist,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CcsdComplexInfo {
    pub nodes: usize,
    pub edges: usize,
    pub cells: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CcsdReport {
    pub degree_mmd: f64,
    pub cluster_mmd: f64,
    pub orbit_mmd: f64,
    pub rank2_mmd: f64,
    pub hodge_spectrum_mmd: f64,
    pub graph_average: f64,
    pub complex_average: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(CcsdStatus, String);

impl From<CcsdError> for Failure {
    fn from(e: CcsdError) -> Self {
        let status = match &e {
            CcsdError::Config(_) => CcsdStatus::Config,
            CcsdError::MissingKeys(_) => CcsdStatus::MissingKeys,
            CcsdError::Checkpoint(_) => CcsdStatus::Checkpoint,
            CcsdError::Io { .. } => CcsdStatus::Io,
            CcsdError::Parse { .. } | CcsdError::Json(_) => CcsdStatus::Parse,
            CcsdError::Domain(_) | CcsdError::Contract(_) => CcsdStatus::Domain,
            CcsdError::Shape(_) => CcsdStatus::Shape,
            CcsdError::NonFinite { .. } | CcsdError::Eigen(_) | CcsdError::UnsupportedBackward(_) => {
                CcsdStatus::Numeric
            }
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CcsdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CcsdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CcsdStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CcsdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CcsdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ccsd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent call on this thread if it failed, else an
/// empty string. Valid until the next ccsd call on the same thread.
#[no_mangle]
pub extern "C" fn ccsd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Number of candidate rank-2 cells on `n` nodes with sizes in `[d_min, d_max]`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn ccsd_cell_count(n: usize, d_min: usize, d_max: usize, out: *mut u64) -> CcsdStatus {
    guard(|| {
        let c = DimConstraints::new(d_min, d_max)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = cell_count(n, &c);
        Ok(())
    })
}

/// Parses a TOML run configuration. A non-null `seed` replaces its seed.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `seed` null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccsd_config_parse(
    toml: *const c_char,
    seed: *const u64,
    out: *mut *mut CcsdConfig,
) -> CcsdStatus {
    guard(|| {
        let text = string(toml, "toml")?;
        let cfg = RunConfig::from_toml_str(text, seed.as_ref().copied())?;
        put(out, CcsdConfig(cfg))
    })
}

/// One of the shipped configurations: "community_small" or "grid_small".
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccsd_config_builtin(name: *const c_char, out: *mut *mut CcsdConfig) -> CcsdStatus {
    guard(|| {
        let text = match string(name, "name")? {
            "community_small" => COMMUNITY_SMALL,
            "grid_small" => GRID_SMALL,
            other => return Err(Failure(CcsdStatus::Config, format!("unknown configuration `{other}`"))),
        };
        put(out, CcsdConfig(RunConfig::from_toml_str(text, None)?))
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ccsd_config_free(cfg: *mut CcsdConfig) {
    free(cfg)
}

/// Generates the configuration's dataset.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccsd_dataset_build(cfg: *const CcsdConfig, out: *mut *mut CcsdDataset) -> CcsdStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        put(out, CcsdDataset(build_dataset(&cfg.dataset, cfg.complex)?))
    })
}

/// Reads a JSON-lines dataset.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccsd_dataset_read(path: *const c_char, out: *mut *mut CcsdDataset) -> CcsdStatus {
    guard(|| {
        let path = PathBuf::from(string(path, "path")?);
        put(out, CcsdDataset(read_dataset(&path)?))
    })
}

/// Writes a dataset as JSON lines.
///
/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ccsd_dataset_write(ds: *const CcsdDataset, path: *const c_char) -> CcsdStatus {
    guard(|| {
        let ds = borrow(ds, "ds")?;
        let path = PathBuf::from(string(path, "path")?);
        Ok(write_dataset(&path, &ds.0)?)
    })
}

/// Number of complexes; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ccsd_dataset_len(ds: *const CcsdDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Node, edge and rank-2 cell counts of complex `index`.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccsd_dataset_info(
    ds: *const CcsdDataset,
    index: usize,
    out: *mut CcsdComplexInfo,
) -> CcsdStatus {
    guard(|| {
        let ds = borrow(ds, "ds")?;
        let cc = ds.0.get(index).ok_or_else(|| {
            Failure(CcsdStatus::OutOfRange, format!("index {index} outside a dataset of {}", ds.0.len()))
        })?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = CcsdComplexInfo { nodes: cc.n, edges: cc.edges.len(), cells: cc.cells.len() };
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ccsd_dataset_free(ds: *mut CcsdDataset) {
    free(ds)
}

/// Trains the three networks on the configuration's dataset. When `test` is
/// non-null it receives the held-out split.
///
/// # Safety
/// `cfg` must be a live handle, `out` writable, `test` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ccsd_train(
    cfg: *const CcsdConfig,
    out: *mut *mut CcsdModel,
    test: *mut *mut CcsdDataset,
) -> CcsdStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let trained = train_run(cfg, |_| {})?;
        if !test.is_null() {
            put(test, CcsdDataset(trained.test_set()))?;
        }
        put(out, CcsdModel { checkpoint: trained.checkpoint, nodes: trained.nodes })
    })
}

/// Saves the checkpoint and the node-count distribution (JSON).
///
/// # Safety
/// `model` must be a live handle; both paths NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ccsd_model_save(
    model: *const CcsdModel,
    checkpoint_path: *const c_char,
    nodes_path: *const c_char,
) -> CcsdStatus {
    guard(|| {
        let model = borrow(model, "model")?;
        let ckpt = PathBuf::from(string(checkpoint_path, "checkpoint_path")?);
        let nodes = PathBuf::from(string(nodes_path, "nodes_path")?);
        model.checkpoint.save(&ckpt)?;
        let text = serde_json::to_string_pretty(&model.nodes).map_err(CcsdError::from)?;
        std::fs::write(&nodes, text).map_err(|e| CcsdError::io(&nodes, e))?;
        Ok(())
    })
}

/// Loads a model saved by [`ccsd_model_save`] or the `train` command.
///
/// # Safety
/// Both paths must be NUL-terminated strings and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccsd_model_load(
    checkpoint_path: *const c_char,
    nodes_path: *const c_char,
    out: *mut *mut CcsdModel,
) -> CcsdStatus {
    guard(|| {
        let ckpt = PathBuf::from(string(checkpoint_path, "checkpoint_path")?);
        let nodes = PathBuf::from(string(nodes_path, "nodes_path")?);
        let checkpoint = Checkpoint::load(&ckpt)?;
        let text = std::fs::read_to_string(&nodes).map_err(|e| CcsdError::io(&nodes, e))?;
        let nodes = serde_json::from_str(&text).map_err(CcsdError::from)?;
        put(out, CcsdModel { checkpoint, nodes })
    })
}

/// Samples `num` complexes. Fails with `CCSD_STATUS_CHECKPOINT` when the
/// model was trained for other networks or SDEs than `cfg` describes.
///
/// # Safety
/// `model` and `cfg` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccsd_model_sample(
    model: *const CcsdModel,
    cfg: *const CcsdConfig,
    num: usize,
    out: *mut *mut CcsdDataset,
) -> CcsdStatus {
    guard(|| {
        let model = borrow(model, "model")?;
        let cfg = &borrow(cfg, "cfg")?.0;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let samples = sample_run(cfg, &model.checkpoint, &model.nodes, num)?;
        put(out, CcsdDataset(to_complexes(&samples)?))
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ccsd_model_free(model: *mut CcsdModel) {
    free(model)
}

/// Graph and complex MMDs between two datasets with the default kernels.
///
/// # Safety
/// Both datasets must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccsd_evaluate(
    generated: *const CcsdDataset,
    reference: *const CcsdDataset,
    out: *mut CcsdReport,
) -> CcsdStatus {
    guard(|| {
        let tensors = |d: &CcsdDataset| d.0.iter().map(|cc| cc.to_tensor()).collect::<Result<Vec<_>, _>>();
        let g = tensors(borrow(generated, "generated")?)?;
        let r = tensors(borrow(reference, "reference")?)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let rep = evaluate(&g, &r, &MetricConfig::default())?;
        *out = CcsdReport {
            degree_mmd: rep.degree_mmd,
            cluster_mmd: rep.cluster_mmd,
            orbit_mmd: rep.orbit_mmd,
            rank2_mmd: rep.rank2_mmd,
            hodge_spectrum_mmd: rep.hodge_spectrum_mmd,
            graph_average: rep.graph_average,
            complex_average: rep.complex_average,
        };
        Ok(())
    })
}

//! C ABI over the `dloc` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`DlocStatus`]; on failure the message is kept per thread and
//! read back with [`dloc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use num_complex::Complex64;

use dloc::bench::{estimate, generate_dataset, Dataset, EstimationContext, EstimatorKind, ExperimentConfig};
use dloc::nn::{load_checkpoint, Network};
use dloc::{CartesianPosition, Error, SignalRecord};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Shape = 6,
    Numerical = 7,
    MissingTruth = 8,
    Panic = 9,
}

/// Estimator selector for [`dloc_estimate`] and [`dloc_localize`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlocEstimator {
    OracleMfp = 0,
    Sbl = 1,
    GccPhat = 2,
    Cnn = 3,
}

impl From<DlocEstimator> for EstimatorKind {
    fn from(e: DlocEstimator) -> Self {
        match e {
            DlocEstimator::OracleMfp => EstimatorKind::OracleMfp,
            DlocEstimator::Sbl => EstimatorKind::Sbl,
            DlocEstimator::GccPhat => EstimatorKind::GccPhat,
            DlocEstimator::Cnn => EstimatorKind::Cnn,
        }
    }
}

/// Experiment configuration.
pub struct DlocConfig(ExperimentConfig);

/// Labeled records, in memory.
pub struct DlocDataset(Dataset);

/// Trained network.
pub struct DlocNetwork(Network);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DlocStatus {
    match e {
        Error::InvalidArgument(_) | Error::OutsideWaterColumn(..) | Error::InvalidScene(_) => DlocStatus::InvalidArgument,
        Error::Config(_) => DlocStatus::Config,
        Error::Io(_) | Error::NoiseExhausted { .. } => DlocStatus::Io,
        Error::Format { .. } => DlocStatus::Format,
        Error::Shape(_) => DlocStatus::Shape,
        Error::MissingTruth => DlocStatus::MissingTruth,
        Error::RankDeficient { .. } | Error::NoConvergence { .. } | Error::Degenerate(_) | Error::Diverged { .. } => {
            DlocStatus::Numerical
        }
    }
}

struct Fail(DlocStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DlocStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DlocStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DlocStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DlocStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DlocStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_position(out: *mut f64, p: CartesianPosition) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output position"));
    }
    let xyz = p.to_array();
    ptr::copy_nonoverlapping(xyz.as_ptr(), out, 3);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn dloc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dloc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dloc_config_new(out: *mut *mut DlocConfig) -> DlocStatus {
    guard(|| put(out, DlocConfig(ExperimentConfig::default())))
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dloc_config_from_toml(toml: *const c_char, out: *mut *mut DlocConfig) -> DlocStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(text(toml, "toml")?)?;
        put(out, DlocConfig(cfg))
    })
}

/// Overrides the master seed.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dloc_config_set_seed(cfg: *mut DlocConfig, seed: u64) -> DlocStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        cfg.0.seed = seed;
        cfg.0.training.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dloc_config_free(cfg: *mut DlocConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Synthesizes the dataset described by `cfg`.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dloc_dataset_generate(cfg: *const DlocConfig, out: *mut *mut DlocDataset) -> DlocStatus {
    guard(|| {
        let cfg = borrow(cfg, "config")?;
        put(out, DlocDataset(generate_dataset(&cfg.0)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dloc_dataset_load(path: *const c_char, out: *mut *mut DlocDataset) -> DlocStatus {
    guard(|| {
        let ds = Dataset::load(&PathBuf::from(text(path, "path")?))?;
        put(out, DlocDataset(ds))
    })
}

/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dloc_dataset_save(ds: *const DlocDataset, path: *const c_char) -> DlocStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        ds.0.save(&PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

/// Number of records, 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dloc_dataset_len(ds: *const DlocDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Writes the record's source position (x, y, z) into `out[0..3]`.
///
/// # Safety
/// `ds` must be a live handle and `out` valid for 3 writes.
#[no_mangle]
pub unsafe extern "C" fn dloc_dataset_label(ds: *const DlocDataset, index: usize, out: *mut f64) -> DlocStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        let item = record(&ds.0, index)?;
        put_position(out, item.label)
    })
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dloc_dataset_free(ds: *mut DlocDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn record(ds: &Dataset, index: usize) -> Result<&SignalRecord, Fail> {
    ds.records.get(index).map(|r| &r.record).ok_or_else(|| {
        Fail(
            DlocStatus::InvalidArgument,
            format!("index {index} out of range ({} records)", ds.len()),
        )
    })
}

/// Loads a network checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dloc_network_load(path: *const c_char, out: *mut *mut DlocNetwork) -> DlocStatus {
    guard(|| {
        let net = load_checkpoint(&PathBuf::from(text(path, "path")?))?;
        put(out, DlocNetwork(net))
    })
}

/// # Safety
/// `net` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dloc_network_free(net: *mut DlocNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

unsafe fn run(
    cfg: *const DlocConfig,
    kind: DlocEstimator,
    rec: &SignalRecord,
    net: *const DlocNetwork,
    out: *mut f64,
) -> Result<(), Fail> {
    let cfg = borrow(cfg, "config")?;
    let scene = cfg.0.scene()?;
    let volume = cfg.0.volume()?;
    let ctx = EstimationContext {
        scene: &scene,
        volume: &volume,
        network: net.as_ref().map(|n| &n.0),
    };
    let outcome = estimate(kind.into(), rec, &ctx)?;
    put_position(out, outcome.position)
}

/// Localizes record `index` of `ds`. `net` may be NULL unless the
/// estimator is `Cnn`. Writes (x, y, z) into `out[0..3]`.
///
/// # Safety
/// Handles must be live (or NULL where allowed) and `out` valid for 3 writes.
#[no_mangle]
pub unsafe extern "C" fn dloc_estimate(
    cfg: *const DlocConfig,
    estimator: DlocEstimator,
    ds: *const DlocDataset,
    index: usize,
    net: *const DlocNetwork,
    out: *mut f64,
) -> DlocStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        let rec = record(&ds.0, index)?;
        run(cfg, estimator, rec, net, out)
    })
}

/// Localizes raw samples: `receivers * samples` complex values stored as
/// interleaved (re, im) doubles, receiver-major. The oracle estimator is
/// unavailable here since raw data carries no channel truth.
///
/// # Safety
/// `data` must hold `2 * receivers * samples` readable doubles, handles
/// must be live (or NULL where allowed) and `out` valid for 3 writes.
#[no_mangle]
pub unsafe extern "C" fn dloc_localize(
    cfg: *const DlocConfig,
    estimator: DlocEstimator,
    data: *const f64,
    receivers: usize,
    samples: usize,
    net: *const DlocNetwork,
    out: *mut f64,
) -> DlocStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if receivers == 0 || samples == 0 {
            return Err(Fail(DlocStatus::InvalidArgument, "empty sample block".into()));
        }
        let len = receivers
            .checked_mul(samples)
            .and_then(|n| n.checked_mul(2))
            .ok_or_else(|| Fail(DlocStatus::InvalidArgument, "sample count overflows".into()))?;
        let flat = std::slice::from_raw_parts(data, len);
        let rows: Vec<Vec<Complex64>> = flat
            .chunks_exact(2 * samples)
            .map(|row| row.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
            .collect();
        let rec = SignalRecord::new(rows, CartesianPosition::new(f64::NAN, f64::NAN, f64::NAN))?;
        run(cfg, estimator, &rec, net, out)
    })
}

//! C ABI for bikeflow.
//!
//! Networks and detection results are opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns
//! a [`BfStatus`]; on failure [`bf_last_error_message`] describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};

use bikeflow::baselines::{greedy_modularity_with, louvain};
use bikeflow::flow::{DEFAULT_MAX_ITER, DEFAULT_TAU, DEFAULT_TOL};
use bikeflow::network::read_stations;
use bikeflow::{
    codelength, infomap, Error, FlowModel, FlowNetwork, FlowOptions, OptimizationResult,
    OptimizerConfig, Partition,
};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Schema = 4,
    UnknownStation = 5,
    NotConverged = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfFlowModel {
    Empirical = 0,
    RandomWalk = 1,
}

/// Detection settings. Obtain defaults from [`bf_detect_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BfDetectOptions {
    pub flow_model: BfFlowModel,
    pub tau: f64,
    pub seed: u64,
    pub trials: usize,
    pub resolution: f64,
}

/// Opaque directed trip network.
pub struct BfNetwork {
    inner: FlowNetwork,
}

/// Opaque detection result.
pub struct BfResult {
    inner: OptimizationResult,
    codelength: f64,
}

/// Value reported for stations without a module.
pub const BF_UNASSIGNED: i64 = -1;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> BfStatus {
    match err {
        Error::Io { .. } => BfStatus::Io,
        Error::MissingColumn { .. } | Error::Schema { .. } | Error::Csv(_) => BfStatus::Schema,
        Error::UnknownStations(_) => BfStatus::UnknownStation,
        Error::NotConverged { .. } => BfStatus::NotConverged,
        Error::InvalidArgument(_)
        | Error::UniverseMismatch(..)
        | Error::UncoveredNode(_)
        | Error::InvalidModule(_)
        | Error::EmptyNetwork => BfStatus::InvalidArgument,
        Error::Reconciliation(_) | Error::Serialize(_) => BfStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F>(f: F) -> BfStatus
where
    F: FnOnce() -> Result<(), (BfStatus, String)>,
{
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BfStatus::Panic
        }
    }
}

fn lift(e: Error) -> (BfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (BfStatus, String) {
    (BfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<String, (BfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (BfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn open(path: &str) -> Result<BufReader<File>, (BfStatus, String)> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| lift(Error::io(path, e)))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn bf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn bf_detect_options_default() -> BfDetectOptions {
    let cfg = OptimizerConfig::default();
    BfDetectOptions {
        flow_model: BfFlowModel::Empirical,
        tau: DEFAULT_TAU,
        seed: cfg.seed,
        trials: cfg.trials,
        resolution: 1.0,
    }
}

/// Builds a network on nodes `0..node_count` from parallel arrays of
/// length `edge_count`. Parallel edges are summed.
///
/// # Safety
/// Each array must hold `edge_count` readable elements (they may be null
/// when `edge_count` is 0) and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bf_network_from_edges(
    node_count: usize,
    sources: *const usize,
    targets: *const usize,
    weights: *const u64,
    edge_count: usize,
    out: *mut *mut BfNetwork,
) -> BfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if edge_count > 0 && (sources.is_null() || targets.is_null() || weights.is_null()) {
            return Err(null("edge array"));
        }
        let (s, t, w) = if edge_count == 0 {
            (&[][..], &[][..], &[][..])
        } else {
            (
                std::slice::from_raw_parts(sources, edge_count),
                std::slice::from_raw_parts(targets, edge_count),
                std::slice::from_raw_parts(weights, edge_count),
            )
        };
        let edges = (0..edge_count).map(|i| (s[i], t[i], w[i]));
        let net = FlowNetwork::from_index_edges(node_count, edges).map_err(lift)?;
        *out = Box::into_raw(Box::new(BfNetwork { inner: net }));
        Ok(())
    })
}

/// Reads an `origin_id,destination_id,weight` edge list. `stations_path`
/// may be null; otherwise its stations define the node universe.
///
/// # Safety
/// Paths must be NUL-terminated strings and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bf_network_from_csv(
    edges_path: *const c_char,
    stations_path: *const c_char,
    out: *mut *mut BfNetwork,
) -> BfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let edges = path_arg(edges_path, "edges_path")?;
        let stations = if stations_path.is_null() {
            None
        } else {
            let p = path_arg(stations_path, "stations_path")?;
            Some(read_stations(open(&p)?).map_err(lift)?)
        };
        let net = FlowNetwork::read_edge_list(open(&edges)?, stations).map_err(lift)?;
        *out = Box::into_raw(Box::new(BfNetwork { inner: net }));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from this library that is not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bf_network_free(net: *mut BfNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_network_node_count(net: *const BfNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.node_count())
}

/// Total trip weight, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_network_total_weight(net: *const BfNetwork) -> u64 {
    net.as_ref().map_or(0, |n| n.inner.total_weight())
}

/// Station id of node `index`.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_network_station_id(
    net: *const BfNetwork,
    index: usize,
    out: *mut i64,
) -> BfStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = net.inner.nodes().get(index).ok_or_else(|| {
            (BfStatus::InvalidArgument, format!("node {index} out of range"))
        })?;
        *out = s.id;
        Ok(())
    })
}

fn flow_options(o: &BfDetectOptions) -> FlowOptions {
    FlowOptions {
        model: match o.flow_model {
            BfFlowModel::Empirical => FlowModel::Empirical,
            BfFlowModel::RandomWalk => FlowModel::RandomWalk,
        },
        tau: o.tau,
        tol: DEFAULT_TOL,
        max_iter: DEFAULT_MAX_ITER,
        self_loops: true,
    }
}

#[derive(Clone, Copy)]
enum Method {
    Infomap,
    Louvain,
    Greedy,
}

unsafe fn detect(
    method: Method,
    net: *const BfNetwork,
    options: *const BfDetectOptions,
    out: *mut *mut BfResult,
) -> BfStatus {
    guard(|| {
        let net = &net.as_ref().ok_or_else(|| null("net"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = options.as_ref().copied().unwrap_or_else(|| bf_detect_options_default());
        let flow = flow_options(&opts).solve(net).map_err(lift)?;
        let result = match method {
            Method::Infomap => {
                let cfg = OptimizerConfig {
                    seed: opts.seed,
                    trials: opts.trials,
                    ..OptimizerConfig::default()
                };
                infomap(&flow, net, &cfg)
            }
            Method::Louvain => louvain(net, opts.seed, opts.resolution),
            Method::Greedy => greedy_modularity_with(net, opts.resolution),
        }
        .map_err(lift)?;
        let l = codelength(&flow, &result.partition).unwrap_or(f64::NAN);
        *out = Box::into_raw(Box::new(BfResult {
            inner: result,
            codelength: l,
        }));
        Ok(())
    })
}

/// Map-equation community detection. `options` may be null for defaults.
///
/// # Safety
/// `net` must be a live handle, `options` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_infomap(
    net: *const BfNetwork,
    options: *const BfDetectOptions,
    out: *mut *mut BfResult,
) -> BfStatus {
    detect(Method::Infomap, net, options, out)
}

/// Louvain modularity maximization on the symmetrized network.
///
/// # Safety
/// As for [`bf_infomap`].
#[no_mangle]
pub unsafe extern "C" fn bf_louvain(
    net: *const BfNetwork,
    options: *const BfDetectOptions,
    out: *mut *mut BfResult,
) -> BfStatus {
    detect(Method::Louvain, net, options, out)
}

/// Greedy agglomerative modularity maximization.
///
/// # Safety
/// As for [`bf_infomap`].
#[no_mangle]
pub unsafe extern "C" fn bf_greedy_modularity(
    net: *const BfNetwork,
    options: *const BfDetectOptions,
    out: *mut *mut BfResult,
) -> BfStatus {
    detect(Method::Greedy, net, options, out)
}

/// # Safety
/// `res` must be null or a handle from this library that is not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bf_result_free(res: *mut BfResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_result_node_count(res: *const BfResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.partition.len())
}

/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_result_module_count(res: *const BfResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.partition.module_count())
}

/// The method's own objective: codelength in bits for infomap, modularity
/// for the other methods. NaN for a null handle.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_result_score(res: *const BfResult) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.inner.score)
}

/// Map-equation codelength of the result's partition under the flow used
/// for detection. NaN if undefined or for a null handle.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bf_result_codelength(res: *const BfResult) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.codelength)
}

/// Copies module ids into `buf` (length `len`, at least the node count).
/// Unassigned nodes get [`BF_UNASSIGNED`].
///
/// # Safety
/// `res` must be a live handle and `buf` must hold `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn bf_result_assignment(res: *const BfResult, buf: *mut i64, len: usize) -> BfStatus {
    guard(|| {
        let r = res.as_ref().ok_or_else(|| null("res"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let part = r.inner.partition.assignment();
        if len < part.len() {
            return Err((
                BfStatus::InvalidArgument,
                format!("buffer holds {len} entries, need {}", part.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, part.len());
        for (slot, a) in out.iter_mut().zip(part) {
            *slot = a.map_or(BF_UNASSIGNED, i64::from);
        }
        Ok(())
    })
}

/// Codelength in bits of a caller-supplied assignment (`BF_UNASSIGNED` or a
/// non-negative module id per node). `options` may be null for defaults.
///
/// # Safety
/// `net` must be a live handle, `assignment` must hold `len` readable
/// elements, `options` null or readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_codelength(
    net: *const BfNetwork,
    options: *const BfDetectOptions,
    assignment: *const i64,
    len: usize,
    out: *mut f64,
) -> BfStatus {
    guard(|| {
        let net = &net.as_ref().ok_or_else(|| null("net"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        if assignment.is_null() && len > 0 {
            return Err(null("assignment"));
        }
        let raw = if len == 0 { &[][..] } else { std::slice::from_raw_parts(assignment, len) };
        let labels = raw
            .iter()
            .map(|&m| match m {
                BF_UNASSIGNED => Ok(None),
                m if (0..=u32::MAX as i64).contains(&m) => Ok(Some(m as u32)),
                m => Err((BfStatus::InvalidArgument, format!("invalid module id {m}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let opts = options.as_ref().copied().unwrap_or_else(|| bf_detect_options_default());
        let flow = flow_options(&opts).solve(net).map_err(lift)?;
        *out = codelength(&flow, &Partition::new(labels)).map_err(lift)?;
        Ok(())
    })
}

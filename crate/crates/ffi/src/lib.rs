//! C ABI for the gomk library.
//!
//! Graphs and filters cross the boundary as opaque handles that the caller
//! releases with the matching `*_free` function. Every fallible call returns
//! a [`GomkStatus`]; on failure, [`gomk_last_error`] describes the most recent
//! error on the calling thread. Dense matrices are row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gomk::experiments::{
    run_graph_classification, run_invariant_suite, run_iso_learning, run_motif_classification, run_node_classification,
    run_pattern_mining,
};
use nalgebra::DMatrix;
use gomk::train::{train_iso, BoxMode, LossKind};
use gomk::{gomk as kernel, Error, Graph, GraphFilter, GomkcnLayer, Matcher, TrainConfig, TruncationPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GomkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Shape = 4,
    Index = 5,
    Invariant = 6,
    Data = 7,
    Io = 8,
    Parse = 9,
    Training = 10,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GomkMatcher {
    Greedy = 0,
    Exact = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GomkBoxMode {
    Clamp = 0,
    Logistic = 1,
}

/// One matched pair of node indices and its similarity.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GomkPair {
    pub x: usize,
    pub y: usize,
    pub similarity: f64,
}

/// Opaque graph handle.
pub struct GomkGraph {
    inner: Graph,
}

/// Opaque trainable filter handle.
pub struct GomkFilter {
    inner: GraphFilter,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GomkStatus {
    match err {
        Error::Index(_) => GomkStatus::Index,
        Error::Config(_) => GomkStatus::Config,
        Error::Shape(_) => GomkStatus::Shape,
        Error::Invariant(_) => GomkStatus::Invariant,
        Error::Data(_) => GomkStatus::Data,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => GomkStatus::Parse,
        Error::Training { .. } => GomkStatus::Training,
        Error::Io(_) => GomkStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Status(GomkStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(GomkStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus a message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GomkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GomkStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GomkStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail::Status(GomkStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn copy_matrix(m: &DMatrix<f64>, out: *mut f64, capacity: usize) -> Result<(), Fail> {
    let len = m.nrows() * m.ncols();
    if capacity < len {
        return Err(Fail::Status(GomkStatus::BufferTooSmall, format!("need {len} doubles, got {capacity}")));
    }
    if len == 0 {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    let dst = unsafe { std::slice::from_raw_parts_mut(out, len) };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dst[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

/// Message of the last error on this thread, or null if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gomk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn gomk_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gomk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Maximum kernel value `m (t + 1)` for graphs standardized to `m` nodes.
#[no_mangle]
pub extern "C" fn gomk_self_kernel(m: usize, t: usize) -> f64 {
    gomk::self_kernel(m, t)
}

/// Builds a graph from an `n × n` symmetric adjacency with weights in
/// `[0, 1]` and zero diagonal, and an `n × dim` feature matrix.
///
/// # Safety
/// `adjacency` must point to `n * n` doubles and `features` to `n * dim`
/// doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gomk_graph_new(
    n: usize,
    dim: usize,
    adjacency: *const f64,
    features: *const f64,
    out: *mut *mut GomkGraph,
) -> GomkStatus {
    guard(|| {
        let a = slice(adjacency, n * n, "adjacency")?;
        let f = slice(features, n * dim, "features")?;
        let g = Graph::new(DMatrix::from_row_slice(n, n, a), DMatrix::from_row_slice(n, dim, f))?;
        write_out(out, Box::into_raw(Box::new(GomkGraph { inner: g })), "out")
    })
}

/// Builds a binary graph from `edge_count` pairs stored as `[u0, v0, u1, v1, ...]`.
///
/// # Safety
/// `edges` must point to `2 * edge_count` values, `features` to `n * dim`
/// doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gomk_graph_from_edges(
    n: usize,
    edges: *const usize,
    edge_count: usize,
    dim: usize,
    features: *const f64,
    out: *mut *mut GomkGraph,
) -> GomkStatus {
    guard(|| {
        let e = slice(edges, 2 * edge_count, "edges")?;
        let pairs: Vec<(usize, usize)> = e.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let f = slice(features, n * dim, "features")?;
        let g = Graph::from_edges(n, &pairs, DMatrix::from_row_slice(n, dim, f))?;
        write_out(out, Box::into_raw(Box::new(GomkGraph { inner: g })), "out")
    })
}

/// # Safety
/// `graph` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gomk_graph_free(graph: *mut GomkGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gomk_graph_nodes(graph: *const GomkGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.n())
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gomk_graph_dim(graph: *const GomkGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.dim())
}

/// Kernel value between two graphs, padding the smaller one with isolated
/// zero-feature nodes. The pair count always goes to `pair_count`; with
/// `pair_capacity == 0` the pairs are skipped (`pairs` may be null), else
/// they are copied to `pairs` or `BufferTooSmall` is returned.
///
/// # Safety
/// `a`, `b` must be live handles; `kappa` and `pair_count` writable;
/// `pairs` must have room for `pair_capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn gomk_kernel(
    a: *const GomkGraph,
    b: *const GomkGraph,
    t: usize,
    tau: f64,
    matcher: GomkMatcher,
    kappa: *mut f64,
    pairs: *mut GomkPair,
    pair_capacity: usize,
    pair_count: *mut usize,
) -> GomkStatus {
    guard(|| {
        let a = &a.as_ref().ok_or_else(|| null("a"))?.inner;
        let b = &b.as_ref().ok_or_else(|| null("b"))?.inner;
        let m = a.n().max(b.n());
        let matcher = match matcher {
            GomkMatcher::Greedy => Matcher::Greedy,
            GomkMatcher::Exact => Matcher::Exact,
        };
        let k = kernel(&a.padded(m)?, &b.padded(m)?, t, tau, matcher)?;
        write_out(kappa, k.kappa, "kappa")?;
        write_out(pair_count, k.matching.len(), "pair_count")?;
        if pair_capacity == 0 {
            return Ok(());
        }
        if pair_capacity < k.matching.len() {
            return Err(Fail::Status(
                GomkStatus::BufferTooSmall,
                format!("{} pairs do not fit in {pair_capacity}", k.matching.len()),
            ));
        }
        if pairs.is_null() {
            return Err(null("pairs"));
        }
        let dst = std::slice::from_raw_parts_mut(pairs, k.matching.len());
        for (slot, (&(x, y), &s)) in dst.iter_mut().zip(k.matching.pairs.iter().zip(&k.matching.pair_similarities)) {
            *slot = GomkPair { x, y, similarity: s };
        }
        Ok(())
    })
}

/// Random filter: adjacency weights in `[0.3, 0.7)`, features in `[0, 1)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gomk_filter_random(nodes: usize, dim: usize, seed: u64, out: *mut *mut GomkFilter) -> GomkStatus {
    guard(|| {
        if nodes == 0 || dim == 0 {
            return Err(Fail::Status(GomkStatus::Config, "filter needs at least one node and one feature".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = GraphFilter::random(nodes, dim, true, &mut rng);
        write_out(out, Box::into_raw(Box::new(GomkFilter { inner: f })), "out")
    })
}

/// Filter initialized from a graph's adjacency and features.
///
/// # Safety
/// `graph` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gomk_filter_from_graph(graph: *const GomkGraph, out: *mut *mut GomkFilter) -> GomkStatus {
    guard(|| {
        let g = &graph.as_ref().ok_or_else(|| null("graph"))?.inner;
        write_out(out, Box::into_raw(Box::new(GomkFilter { inner: GraphFilter::from_graph(g, true) })), "out")
    })
}

/// # Safety
/// `filter` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gomk_filter_free(filter: *mut GomkFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// # Safety
/// `filter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gomk_filter_nodes(filter: *const GomkFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.inner.nodes())
}

/// # Safety
/// `filter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gomk_filter_dim(filter: *const GomkFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.inner.dim())
}

/// Copies the dense `nodes × nodes` adjacency into `out`.
///
/// # Safety
/// `filter` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn gomk_filter_adjacency(filter: *const GomkFilter, out: *mut f64, capacity: usize) -> GomkStatus {
    guard(|| copy_matrix(&filter.as_ref().ok_or_else(|| null("filter"))?.inner.adjacency(), out, capacity))
}

/// Copies the `nodes × dim` features into `out`.
///
/// # Safety
/// `filter` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn gomk_filter_features(filter: *const GomkFilter, out: *mut f64, capacity: usize) -> GomkStatus {
    guard(|| copy_matrix(&filter.as_ref().ok_or_else(|| null("filter"))?.inner.features(), out, capacity))
}

/// Trains `filter` in place to maximize its kernel value with `target`
/// (same node count) and writes the final value to `kappa`.
///
/// # Safety
/// `target` and `filter` must be live handles; `kappa` writable.
#[no_mangle]
pub unsafe extern "C" fn gomk_filter_fit(
    filter: *mut GomkFilter,
    target: *const GomkGraph,
    t: usize,
    tau: f64,
    epochs: usize,
    learning_rate: f64,
    box_mode: GomkBoxMode,
    kappa: *mut f64,
) -> GomkStatus {
    guard(|| {
        let filter = &mut filter.as_mut().ok_or_else(|| null("filter"))?.inner;
        let target = &target.as_ref().ok_or_else(|| null("target"))?.inner;
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            box_mode: match box_mode {
                GomkBoxMode::Clamp => BoxMode::Clamp,
                GomkBoxMode::Logistic => BoxMode::Logistic,
            },
            loss: LossKind::Iso,
            ..TrainConfig::default()
        };
        let run = train_iso(target, filter, t, tau, &cfg, |_| {})?;
        write_out(kappa, run.final_kappa(), "kappa")
    })
}

/// Disentangled node representation: for every node `u` of `graph`, the
/// kernel values of its `hop_radius`-hop subgraph (standardized to the
/// filter size) against each filter. Writes `nodes × filter_count` values.
///
/// # Safety
/// `graph` must be a live handle, `filters` an array of `filter_count` live
/// handles, and `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn gomk_node_responses(
    graph: *const GomkGraph,
    filters: *const *const GomkFilter,
    filter_count: usize,
    hop_radius: usize,
    t: usize,
    tau: f64,
    out: *mut f64,
    capacity: usize,
) -> GomkStatus {
    guard(|| {
        let g = &graph.as_ref().ok_or_else(|| null("graph"))?.inner;
        let handles = slice(filters, filter_count, "filters")?;
        let bank = handles
            .iter()
            .map(|&f| f.as_ref().map(|f| f.inner.clone()).ok_or_else(|| null("filter")))
            .collect::<Result<Vec<_>, _>>()?;
        let size = bank.first().map_or(0, GraphFilter::nodes);
        let layer = GomkcnLayer::new(bank, t, tau, hop_radius, size, TruncationPolicy::Deterministic)?;
        let subs = layer.extract(g)?;
        let mut z = DMatrix::zeros(g.n(), filter_count);
        for (u, sub) in subs.iter().enumerate() {
            for (j, v) in layer.forward_representation(sub)?.into_iter().enumerate() {
                z[(u, j)] = v;
            }
        }
        copy_matrix(&z, out, capacity)
    })
}

/// Runs a named experiment (`iso-learn`, `mine-patterns`, `motif-classify`,
/// `node-classify`, `graph-classify`, `check`) with a JSON config (missing
/// keys take defaults). Artifacts go to `out_dir` when it is non-null. The
/// report is returned as a JSON string to release with
/// [`gomk_string_free`]; `passed` receives 1 when every gating check passed.
///
/// # Safety
/// `name` and `config_json` must be NUL-terminated strings, `out_dir` null
/// or NUL-terminated, `report` and `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn gomk_run_experiment(
    name: *const c_char,
    config_json: *const c_char,
    out_dir: *const c_char,
    report: *mut *mut c_char,
    passed: *mut i32,
) -> GomkStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let config = str_arg(config_json, "config_json")?;
        let dir = if out_dir.is_null() { None } else { Some(Path::new(str_arg(out_dir, "out_dir")?)) };
        fn go<T, R>(config: &str, dir: Option<&Path>, f: impl Fn(&T, Option<&Path>) -> gomk::Result<R>, checks: impl Fn(&R) -> &[gomk::experiments::Check]) -> Result<(String, bool), Fail>
        where
            T: serde::de::DeserializeOwned,
            R: serde::Serialize,
        {
            let cfg: T = serde_json::from_str(config).map_err(|e| Fail::Lib(Error::Config(format!("config: {e}"))))?;
            let r = f(&cfg, dir)?;
            let ok = gomk::experiments::all_passed(checks(&r));
            Ok((serde_json::to_string(&r).map_err(Error::from)?, ok))
        }
        use gomk::experiments as x;
        let (json, ok) = match name {
            "iso-learn" => go::<x::IsoConfig, _>(config, dir, run_iso_learning, |r| &r.checks)?,
            "mine-patterns" => go::<x::MineConfig, _>(config, dir, run_pattern_mining, |r| &r.checks)?,
            "motif-classify" => go::<x::MotifClassifyConfig, _>(config, dir, run_motif_classification, |r| &r.checks)?,
            "node-classify" => go::<x::NodeClassifyConfig, _>(config, dir, run_node_classification, |r| &r.checks)?,
            "graph-classify" => go::<x::GraphClassifyConfig, _>(config, dir, run_graph_classification, |r| &r.checks)?,
            "check" => go::<x::CheckConfig, _>(config, dir, |c, _| run_invariant_suite(c), |r| &r.checks)?,
            other => return Err(Fail::Status(GomkStatus::Config, format!("unknown experiment '{other}'"))),
        };
        let c = CString::new(json).map_err(|e| Fail::Status(GomkStatus::Data, e.to_string()))?;
        write_out(passed, i32::from(ok), "passed")?;
        write_out(report, c.into_raw(), "report")
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gomk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

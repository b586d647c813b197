//! C ABI over the `vorx` engine.
//!
//! Conventions:
//! - every fallible call returns a [`VorxStatus`] and writes results through
//!   out-pointers; on failure `vorx_last_error_message` describes the error
//!   for the calling thread;
//! - handles are opaque and released with their matching `_free` function;
//! - strings returned as `char **` are owned by the caller and released with
//!   `vorx_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};

use vorx::etl_sim::{
    kingman_sojourn, poisson_pmf, simulate, ArrivalModel, PipelineConfig, SimError, TrafficParams,
};
use vorx::fortune::{build_voronoi, VoronoiDiagram, VoronoiError};
use vorx::geometry::{BoundingBox, Point, Site};
use vorx::spatial_index::{IndexError, OrderedIndex};
use vorx::zcurve::{GridQuantizer, MortonGrid, MortonKey, SearchExtent, ZCurveError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VorxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfGrid = 3,
    BuildError = 4,
    ConfigError = 5,
    IoError = 6,
    FormatError = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Opaque Voronoi diagram handle.
pub struct VorxDiagram {
    inner: VoronoiDiagram,
}

/// Opaque spatial index handle.
pub struct VorxIndex {
    inner: OrderedIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior nul"));
}

struct Failure(VorxStatus, String);

type FfiResult = Result<(), Failure>;

fn fail(status: VorxStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

impl From<VoronoiError> for Failure {
    fn from(e: VoronoiError) -> Self {
        let s = match e {
            VoronoiError::PointOutsideBox(..) => VorxStatus::InvalidArgument,
            _ => VorxStatus::BuildError,
        };
        fail(s, e.to_string())
    }
}

impl From<ZCurveError> for Failure {
    fn from(e: ZCurveError) -> Self {
        let s = match e {
            ZCurveError::CoordOutOfGrid(..) | ZCurveError::KeyOutOfGrid(..) => {
                VorxStatus::OutOfGrid
            }
            _ => VorxStatus::InvalidArgument,
        };
        fail(s, e.to_string())
    }
}

impl From<IndexError> for Failure {
    fn from(e: IndexError) -> Self {
        let s = match e {
            IndexError::Grid(g) => return Failure::from(g),
            IndexError::KeyOutOfGrid(_) => VorxStatus::OutOfGrid,
            IndexError::SnapshotFormat(_) => VorxStatus::FormatError,
            IndexError::Io(_) => VorxStatus::IoError,
            _ => VorxStatus::InvalidArgument,
        };
        fail(s, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let s = match e {
            SimError::NegativeCount(_)
            | SimError::InvalidParams(_)
            | SimError::UtilizationAtOrAboveOne(_) => VorxStatus::InvalidArgument,
            _ => VorxStatus::ConfigError,
        };
        fail(s, e.to_string())
    }
}

/// Runs `f`, converting failures and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult) -> VorxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VorxStatus::Ok,
        Ok(Err(Failure(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VorxStatus::Panic
        }
    }
}

fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller promises a valid, aligned, writable pointer or null.
    unsafe { p.as_mut() }.ok_or_else(|| fail(VorxStatus::NullPointer, format!("{name} is null")))
}

fn in_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: as above, for reading.
    unsafe { p.as_ref() }.ok_or_else(|| fail(VorxStatus::NullPointer, format!("{name} is null")))
}

fn in_slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(VorxStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: non-null, and the caller promises `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn in_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(VorxStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: non-null, and the caller promises a nul-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(VorxStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn give_string(out: *mut *mut c_char, s: String) -> FfiResult {
    let slot = out_ref(out, "out")?;
    *slot = CString::new(s)
        .map_err(|_| fail(VorxStatus::InvalidArgument, "string contains nul"))?
        .into_raw();
    Ok(())
}

fn bbox(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<BoundingBox, Failure> {
    BoundingBox::from_coords(x0, y0, x1, y1)
        .map_err(|e| fail(VorxStatus::InvalidArgument, e.to_string()))
}

/// Message for the last failed call on this thread; empty when none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vorx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn vorx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vorx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a diagram from `n` sites. `ids` may be null, meaning `0..n`.
///
/// # Safety
/// `xs`, `ys` (and `ids` when non-null) must point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn vorx_diagram_build(
    xs: *const f64,
    ys: *const f64,
    ids: *const u32,
    n: usize,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    out: *mut *mut VorxDiagram,
) -> VorxStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let xs = in_slice(xs, n, "xs")?;
        let ys = in_slice(ys, n, "ys")?;
        let ids = if ids.is_null() {
            None
        } else {
            Some(in_slice(ids, n, "ids")?)
        };
        let sites: Vec<Site> = (0..n)
            .map(|i| Site::new(ids.map_or(i as u32, |v| v[i]), xs[i], ys[i]))
            .collect();
        let d = build_voronoi(&sites, bbox(x0, y0, x1, y1)?)?;
        *slot = Box::into_raw(Box::new(VorxDiagram { inner: d }));
        Ok(())
    })
}

/// # Safety
/// `d` must come from `vorx_diagram_build` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vorx_diagram_free(d: *mut VorxDiagram) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Counts of vertices, edges and cells; any out-pointer may be null.
///
/// # Safety
/// `d` must be a live diagram handle.
#[no_mangle]
pub unsafe extern "C" fn vorx_diagram_counts(
    d: *const VorxDiagram,
    vertices: *mut usize,
    edges: *mut usize,
    cells: *mut usize,
) -> VorxStatus {
    guard(|| {
        let d = &in_ref(d, "diagram")?.inner;
        if let Some(v) = vertices.as_mut() {
            *v = d.vertices.len();
        }
        if let Some(v) = edges.as_mut() {
            *v = d.edges.len();
        }
        if let Some(v) = cells.as_mut() {
            *v = d.cells.len();
        }
        Ok(())
    })
}

/// Id of the site whose cell contains `(x, y)`.
///
/// # Safety
/// `d` must be a live diagram handle.
#[no_mangle]
pub unsafe extern "C" fn vorx_diagram_locate(
    d: *const VorxDiagram,
    x: f64,
    y: f64,
    out_id: *mut u32,
) -> VorxStatus {
    guard(|| {
        let d = &in_ref(d, "diagram")?.inner;
        let slot = out_ref(out_id, "out_id")?;
        *slot = d.locate_cell(Point::new(x, y))?;
        Ok(())
    })
}

/// Copies the cell polygon of `site_id` as interleaved `x, y` pairs into
/// `xy` (room for `cap_points` points). `len_points` always receives the
/// polygon size; a short buffer yields `BufferTooSmall`.
///
/// # Safety
/// `d` must be a live handle and `xy` must have room for `2 * cap_points`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn vorx_diagram_cell_polygon(
    d: *const VorxDiagram,
    site_id: u32,
    xy: *mut f64,
    cap_points: usize,
    len_points: *mut usize,
) -> VorxStatus {
    guard(|| {
        let d = &in_ref(d, "diagram")?.inner;
        let len = out_ref(len_points, "len_points")?;
        let cell = d.cell(site_id).ok_or_else(|| {
            fail(
                VorxStatus::InvalidArgument,
                format!("no site with id {site_id}"),
            )
        })?;
        *len = cell.polygon.len();
        if cap_points < cell.polygon.len() {
            return Err(fail(
                VorxStatus::BufferTooSmall,
                format!(
                    "polygon has {} points, buffer holds {cap_points}",
                    cell.polygon.len()
                ),
            ));
        }
        if xy.is_null() {
            return Err(fail(VorxStatus::NullPointer, "xy is null"));
        }
        let buf = std::slice::from_raw_parts_mut(xy, 2 * cap_points);
        for (i, p) in cell.polygon.iter().enumerate() {
            buf[2 * i] = p.x;
            buf[2 * i + 1] = p.y;
        }
        Ok(())
    })
}

/// Build statistics as a JSON object.
///
/// # Safety
/// `d` must be a live handle; `out` receives a string for `vorx_string_free`.
#[no_mangle]
pub unsafe extern "C" fn vorx_diagram_stats_json(
    d: *const VorxDiagram,
    out: *mut *mut c_char,
) -> VorxStatus {
    guard(|| {
        let d = &in_ref(d, "diagram")?.inner;
        give_string(out, serde_json::to_string(&d.stats).expect("serializable"))
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vorx_morton_encode(
    bits: u8,
    ix: u64,
    iy: u64,
    out: *mut u64,
) -> VorxStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        *slot = MortonGrid::new(bits)?.encode(ix, iy)?.0;
        Ok(())
    })
}

/// # Safety
/// `ix` and `iy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vorx_morton_decode(
    bits: u8,
    key: u64,
    ix: *mut u32,
    iy: *mut u32,
) -> VorxStatus {
    guard(|| {
        let ox = out_ref(ix, "ix")?;
        let oy = out_ref(iy, "iy")?;
        let (x, y) = MortonGrid::new(bits)?.decode(MortonKey(key))?;
        *ox = x;
        *oy = y;
        Ok(())
    })
}

/// Key ranges covering a cell extent, written as `[lo, hi]` pairs into
/// `pairs` (room for `cap_pairs` ranges). `max_ranges == 0` means unbounded.
/// `n_pairs` always receives the range count.
///
/// # Safety
/// `pairs` must have room for `2 * cap_pairs` values.
#[no_mangle]
pub unsafe extern "C" fn vorx_morton_decompose(
    bits: u8,
    ix0: u32,
    iy0: u32,
    ix1: u32,
    iy1: u32,
    max_ranges: usize,
    pairs: *mut u64,
    cap_pairs: usize,
    n_pairs: *mut usize,
) -> VorxStatus {
    guard(|| {
        let n = out_ref(n_pairs, "n_pairs")?;
        let grid = MortonGrid::new(bits)?;
        grid.encode(ix1 as u64, iy1 as u64)?;
        let extent = SearchExtent::new(ix0, iy0, ix1, iy1)?;
        let cap = if max_ranges == 0 {
            usize::MAX
        } else {
            max_ranges
        };
        let ranges = grid.decompose(&extent, cap)?;
        *n = ranges.len();
        if cap_pairs < ranges.len() {
            return Err(fail(
                VorxStatus::BufferTooSmall,
                format!("{} ranges, buffer holds {cap_pairs}", ranges.len()),
            ));
        }
        if pairs.is_null() {
            return Err(fail(VorxStatus::NullPointer, "pairs is null"));
        }
        let buf = std::slice::from_raw_parts_mut(pairs, 2 * cap_pairs);
        for (i, r) in ranges.iter().enumerate() {
            buf[2 * i] = r.lo.0;
            buf[2 * i + 1] = r.hi.0;
        }
        Ok(())
    })
}

/// Empty index over a world box with `bits` per dimension and the given page
/// capacity (0 selects the default).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vorx_index_new(
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    bits: u8,
    page_capacity: usize,
    out: *mut *mut VorxIndex,
) -> VorxStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let q = GridQuantizer::new(bbox(x0, y0, x1, y1)?, bits)?;
        let cap = if page_capacity == 0 {
            vorx::spatial_index::DEFAULT_PAGE_CAPACITY
        } else {
            page_capacity
        };
        *slot = Box::into_raw(Box::new(VorxIndex {
            inner: OrderedIndex::with_capacity(q, cap)?,
        }));
        Ok(())
    })
}

/// # Safety
/// `ix` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vorx_index_free(ix: *mut VorxIndex) {
    if !ix.is_null() {
        drop(Box::from_raw(ix));
    }
}

/// Inserts a reading at world position `(x, y)`; `key_out` may be null.
///
/// # Safety
/// `ix` must be a live handle; `payload` must hold `payload_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn vorx_index_insert(
    ix: *mut VorxIndex,
    site_id: u32,
    x: f64,
    y: f64,
    timestamp_us: u64,
    payload: *const u8,
    payload_len: usize,
    key_out: *mut u64,
) -> VorxStatus {
    guard(|| {
        let index = &mut out_ref(ix, "index")?.inner;
        let p = Point::new(x, y);
        if !(p.is_finite() && index.quantizer().world_box.contains(p)) {
            return Err(fail(
                VorxStatus::OutOfGrid,
                format!("({x}, {y}) is outside the index box"),
            ));
        }
        let bytes = in_slice(payload, payload_len, "payload")?.to_vec();
        let key = index.insert_reading(site_id, p, timestamp_us, bytes)?;
        if let Some(k) = key_out.as_mut() {
            *k = key.0;
        }
        Ok(())
    })
}

/// # Safety
/// `ix` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vorx_index_len(ix: *const VorxIndex, out: *mut usize) -> VorxStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(ix, "index")?.inner.len();
        Ok(())
    })
}

/// Range search over a cell extent. Writes the match count and, when `keys`
/// is non-null, up to `cap` matching keys in ascending order.
///
/// # Safety
/// `ix` must be a live handle; `keys` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn vorx_index_range_search(
    ix: *const VorxIndex,
    ix0: u32,
    iy0: u32,
    ix1: u32,
    iy1: u32,
    keys: *mut u64,
    cap: usize,
    n_out: *mut usize,
) -> VorxStatus {
    guard(|| {
        let index = &in_ref(ix, "index")?.inner;
        let n = out_ref(n_out, "n_out")?;
        index.quantizer().grid.encode(ix1 as u64, iy1 as u64)?;
        let extent = SearchExtent::new(ix0, iy0, ix1, iy1)?;
        let trace = index.range_search_traced(&extent)?;
        *n = trace.records.len();
        if !keys.is_null() {
            let buf = std::slice::from_raw_parts_mut(keys, cap);
            for (slot, r) in buf.iter_mut().zip(&trace.records) {
                *slot = r.key.0;
            }
        }
        Ok(())
    })
}

/// Index counters and sizes as a JSON object.
///
/// # Safety
/// `ix` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vorx_index_stats_json(
    ix: *const VorxIndex,
    out: *mut *mut c_char,
) -> VorxStatus {
    guard(|| {
        let index = &in_ref(ix, "index")?.inner;
        give_string(
            out,
            serde_json::to_string(&index.stats()).expect("serializable"),
        )
    })
}

/// Writes a `VORX1` snapshot to `path`.
///
/// # Safety
/// `ix` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vorx_index_save(ix: *const VorxIndex, path: *const c_char) -> VorxStatus {
    guard(|| {
        let index = &in_ref(ix, "index")?.inner;
        let path = in_str(path, "path")?;
        let f =
            File::create(path).map_err(|e| fail(VorxStatus::IoError, format!("{path}: {e}")))?;
        index.write_snapshot(BufWriter::new(f))?;
        Ok(())
    })
}

/// Loads a snapshot written for the same box and grid resolution.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vorx_index_load(
    path: *const c_char,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    bits: u8,
    page_capacity: usize,
    out: *mut *mut VorxIndex,
) -> VorxStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let path = in_str(path, "path")?;
        let q = GridQuantizer::new(bbox(x0, y0, x1, y1)?, bits)?;
        let f = File::open(path).map_err(|e| fail(VorxStatus::IoError, format!("{path}: {e}")))?;
        let cap = if page_capacity == 0 {
            vorx::spatial_index::DEFAULT_PAGE_CAPACITY
        } else {
            page_capacity
        };
        let index = OrderedIndex::read_snapshot(BufReader::new(f), q, cap)?;
        *slot = Box::into_raw(Box::new(VorxIndex { inner: index }));
        Ok(())
    })
}

/// Predicted mean sojourn of the single-server queue.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vorx_kingman_sojourn(
    rho: f64,
    t_bar: f64,
    a_bar: f64,
    var_a: f64,
    var_s: f64,
    out: *mut f64,
) -> VorxStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        *slot = kingman_sojourn(&TrafficParams {
            rho,
            t_bar,
            a_bar,
            var_a,
            var_s,
        })?;
        Ok(())
    })
}

/// Poisson probability of `x` arrivals at rate `lambda`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vorx_poisson_pmf(lambda: f64, x: i64, out: *mut f64) -> VorxStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        *slot = poisson_pmf(ArrivalModel::new(lambda)?, x)?;
        Ok(())
    })
}

/// Runs a simulation from a JSON pipeline config and returns the report as
/// JSON.
///
/// # Safety
/// `config_json` must be a nul-terminated string; `report_json` receives a
/// string for `vorx_string_free`.
#[no_mangle]
pub unsafe extern "C" fn vorx_simulate_json(
    config_json: *const c_char,
    report_json: *mut *mut c_char,
) -> VorxStatus {
    guard(|| {
        let text = in_str(config_json, "config_json")?;
        let cfg: PipelineConfig = serde_json::from_str(text)
            .map_err(|e| fail(VorxStatus::ConfigError, format!("config: {e}")))?;
        let run = simulate(&cfg)?;
        give_string(
            report_json,
            serde_json::to_string(&run.report).expect("serializable"),
        )
    })
}

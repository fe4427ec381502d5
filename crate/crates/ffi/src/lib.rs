//! C ABI for trackdet.
//!
//! Every function returns a [`TrackdetStatus`]; on failure the message is
//! available from [`trackdet_last_error`] on the same thread. Trackers are
//! opaque handles created by [`trackdet_tracker_new`] and released with
//! [`trackdet_tracker_free`]. Strings returned by the library are released
//! with [`trackdet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use trackdet::commands;
use trackdet::config::Config;
use trackdet::pipeline::{Detection, FrameRecord, Mode, Tracker};
use trackdet::{BBox, ClassDistribution, Embedding, Error};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackdetStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    NullArgument = 1,
    InvalidConfig = 2,
    InvalidInput = 3,
    Io = 4,
    /// A numerical or metric failure while running.
    Runtime = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackdetMode {
    Integrated = 0,
    Sequential = 1,
}

/// A kept box of the most recent frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackdetBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// Probability of `class_id`.
    pub confidence: f64,
    /// Top foreground class, 1-based.
    pub class_id: u32,
    /// -1 when the box belongs to no tracklet.
    pub track_id: i64,
}

/// Opaque tracker handle.
pub struct TrackdetTracker {
    inner: Tracker,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TrackdetStatus {
    match e {
        Error::InvalidConfig(_) => TrackdetStatus::InvalidConfig,
        Error::InvalidInput(_) | Error::Format { .. } => TrackdetStatus::InvalidInput,
        Error::Io(_) => TrackdetStatus::Io,
        _ => TrackdetStatus::Runtime,
    }
}

struct Fail(TrackdetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null_arg(name: &str) -> Fail {
    Fail(TrackdetStatus::NullArgument, format!("`{name}` is null"))
}

/// Runs `f`, records any failure, and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TrackdetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrackdetStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            TrackdetStatus::Panic
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p).to_str().map(Some).map_err(|_| {
        Fail(
            TrackdetStatus::NullArgument,
            format!("`{name}` is not UTF-8"),
        )
    })
}

unsafe fn req_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    opt_str(p, name)?.ok_or_else(|| null_arg(name))
}

unsafe fn config_from_path(p: *const c_char) -> Result<Config, Fail> {
    let path = opt_str(p, "config_path")?.map(PathBuf::from);
    Ok(commands::load_config(path.as_deref())?)
}

fn mode_of(m: TrackdetMode) -> Mode {
    match m {
        TrackdetMode::Integrated => Mode::Integrated,
        TrackdetMode::Sequential => Mode::Sequential,
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn trackdet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn trackdet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a tracker.
///
/// `config_toml` is the text of a flat TOML config, or null for defaults.
///
/// # Safety
/// `config_toml` must be null or a valid NUL-terminated string; `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn trackdet_tracker_new(
    config_toml: *const c_char,
    mode: TrackdetMode,
    propagate: bool,
    rescore: bool,
    num_classes: usize,
    out: *mut *mut TrackdetTracker,
) -> TrackdetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let config = match opt_str(config_toml, "config_toml")? {
            Some(text) => Config::parse(text)?,
            None => Config::default(),
        };
        let p = config
            .pipeline
            .to_pipeline(mode_of(mode), propagate, rescore, num_classes)?;
        let t = Box::new(TrackdetTracker {
            inner: Tracker::new(p)?,
        });
        *out = Box::into_raw(t);
        Ok(())
    })
}

/// Processes one frame of `num_candidates` candidates.
///
/// `boxes` holds `4 * n` corners `x1, y1, x2, y2`; `scores` holds
/// `n * (num_classes + 1)` class probabilities with background first;
/// `embeddings` holds `n * embedding_dim` values; `motion` is null or holds
/// `4 * n` displacements `dx, dy, dw, dh`.
///
/// # Safety
/// `tracker` must come from [`trackdet_tracker_new`]; the arrays must be
/// valid for the lengths above (they may be null when `num_candidates` is 0).
#[no_mangle]
pub unsafe extern "C" fn trackdet_tracker_push_frame(
    tracker: *mut TrackdetTracker,
    frame: u64,
    num_candidates: usize,
    boxes: *const f64,
    scores: *const f64,
    embeddings: *const f64,
    embedding_dim: usize,
    motion: *const f64,
) -> TrackdetStatus {
    guard(|| {
        let t = tracker.as_mut().ok_or_else(|| null_arg("tracker"))?;
        let n = num_candidates;
        let nc = t.inner.config().fusion.num_classes + 1;
        let slice = |p: *const f64, len: usize, name: &str| -> Result<&[f64], Fail> {
            if len == 0 {
                return Ok(&[]);
            }
            if p.is_null() {
                return Err(null_arg(name));
            }
            Ok(std::slice::from_raw_parts(p, len))
        };
        let boxes = slice(boxes, 4 * n, "boxes")?;
        let scores = slice(scores, nc * n, "scores")?;
        let embeddings = slice(embeddings, embedding_dim * n, "embeddings")?;
        let motion = if motion.is_null() {
            None
        } else {
            Some(slice(motion, 4 * n, "motion")?)
        };
        if n > 0 && embedding_dim == 0 {
            return Err(Fail(
                TrackdetStatus::InvalidInput,
                "embedding_dim must be positive".into(),
            ));
        }

        let mut candidates = Vec::with_capacity(n);
        for i in 0..n {
            let b = &boxes[4 * i..4 * i + 4];
            candidates.push(Detection {
                bbox: BBox::new(b[0], b[1], b[2], b[3])?,
                scores: ClassDistribution::new(scores[nc * i..nc * (i + 1)].to_vec())?,
                embedding: Embedding::new(
                    embeddings[embedding_dim * i..embedding_dim * (i + 1)].to_vec(),
                )?,
                motion: motion.map(|m| [m[4 * i], m[4 * i + 1], m[4 * i + 2], m[4 * i + 3]]),
            });
        }
        t.inner.step(&FrameRecord {
            frame,
            candidates,
            ground_truth: None,
        })?;
        Ok(())
    })
}

/// Number of boxes kept on the most recent frame.
///
/// # Safety
/// `tracker` must come from [`trackdet_tracker_new`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn trackdet_tracker_num_boxes(
    tracker: *const TrackdetTracker,
    out: *mut usize,
) -> TrackdetStatus {
    guard(|| {
        let t = tracker.as_ref().ok_or_else(|| null_arg("tracker"))?;
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        *out = t.inner.frames().last().map_or(0, |f| f.boxes.len());
        Ok(())
    })
}

/// Box `index` of the most recent frame.
///
/// # Safety
/// `tracker` must come from [`trackdet_tracker_new`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn trackdet_tracker_get_box(
    tracker: *const TrackdetTracker,
    index: usize,
    out: *mut TrackdetBox,
) -> TrackdetStatus {
    guard(|| {
        let t = tracker.as_ref().ok_or_else(|| null_arg("tracker"))?;
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        let b = t
            .inner
            .frames()
            .last()
            .and_then(|f| f.boxes.get(index))
            .ok_or_else(|| {
                Fail(
                    TrackdetStatus::InvalidInput,
                    format!("box index {index} out of range"),
                )
            })?;
        let (class_id, confidence) = b.score.top_foreground();
        *out = TrackdetBox {
            x1: b.bbox.x1(),
            y1: b.bbox.y1(),
            x2: b.bbox.x2(),
            y2: b.bbox.y2(),
            confidence,
            class_id: class_id as u32,
            track_id: b.track_id.map_or(-1, |id| id as i64),
        };
        Ok(())
    })
}

/// Releases a tracker. Null is ignored.
///
/// # Safety
/// `tracker` must be null or come from [`trackdet_tracker_new`], and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn trackdet_tracker_free(tracker: *mut TrackdetTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Writes a simulated detection stream.
///
/// # Safety
/// `config_path` must be null or a valid string; `output_path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn trackdet_simulate(
    config_path: *const c_char,
    output_path: *const c_char,
) -> TrackdetStatus {
    guard(|| {
        let config = config_from_path(config_path)?;
        let out = PathBuf::from(req_str(output_path, "output_path")?);
        commands::simulate(&config, &out)?;
        Ok(())
    })
}

/// Tracks a detection stream file and writes CSV rows.
///
/// # Safety
/// `config_path` must be null or a valid string; the paths must be valid.
#[no_mangle]
pub unsafe extern "C" fn trackdet_track(
    config_path: *const c_char,
    input_path: *const c_char,
    mode: TrackdetMode,
    propagate: bool,
    rescore: bool,
    output_path: *const c_char,
) -> TrackdetStatus {
    guard(|| {
        let config = config_from_path(config_path)?;
        let input = PathBuf::from(req_str(input_path, "input_path")?);
        let out = PathBuf::from(req_str(output_path, "output_path")?);
        commands::track(&config, &input, mode_of(mode), propagate, rescore, &out)?;
        Ok(())
    })
}

/// Evaluates predictions against ground truth; `*out_json` receives a JSON
/// report to be released with [`trackdet_string_free`].
///
/// # Safety
/// `config_path` must be null or a valid string; the paths and `out_json`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn trackdet_eval(
    config_path: *const c_char,
    pred_path: *const c_char,
    gt_path: *const c_char,
    out_json: *mut *mut c_char,
) -> TrackdetStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null_arg("out_json"));
        }
        let config = config_from_path(config_path)?;
        let pred = PathBuf::from(req_str(pred_path, "pred_path")?);
        let gt = PathBuf::from(req_str(gt_path, "gt_path")?);
        let report = commands::eval(&config, &pred, &gt)?;
        let json = serde_json::to_string(&report).map_err(Error::from)?;
        let c = CString::new(json).expect("JSON has no NUL bytes");
        *out_json = c.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or come from this library, and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn trackdet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

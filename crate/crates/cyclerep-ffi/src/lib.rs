//! C ABI over the cyclerep pipeline.
//!
//! Conventions:
//! - Opaque handles (`CyclerepConfig`, `CyclerepBench`, `CyclerepHead`,
//!   `CyclerepEmbeddings`) are created and freed by this library; a NULL
//!   handle is never returned on success.
//! - Functions returning `int32_t` use 0 for success, 1 config error,
//!   2 missing artifact, 3 numeric failure, 4 invalid argument. On any
//!   nonzero status `cyclerep_last_error()` holds a message for the
//!   calling thread.
//! - Strings returned as `char*` are owned by the caller and must be
//!   released with `cyclerep_string_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::PathBuf;

use cyclerep::harness::{self, Bench, EmbeddingSource, ExperimentConfig};
use cyclerep::head::adam::AdamState;
use cyclerep::head::checkpoint::Checkpoint;
use cyclerep::head::{EmbeddingSequence, HeadConfig, HeadParams};

pub const CYCLEREP_STATUS_OK: i32 = 0;
pub const CYCLEREP_STATUS_CONFIG: i32 = 1;
pub const CYCLEREP_STATUS_MISSING_ARTIFACT: i32 = 2;
pub const CYCLEREP_STATUS_NUMERIC: i32 = 3;
pub const CYCLEREP_STATUS_INVALID_ARGUMENT: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', "?")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &cyclerep::Error) -> i32 {
    err.exit_code()
}

fn catch<T>(result: cyclerep::Result<T>) -> Result<T, i32> {
    result.map_err(|e| {
        set_error(&e.to_string());
        status_of(&e)
    })
}

/// Experiment configuration handle.
pub struct CyclerepConfig(ExperimentConfig);

/// Generated + encoded benchmark data for one run seed.
pub struct CyclerepBench {
    bench: Bench,
    seed: u64,
}

/// Trained (or loaded) projection head.
pub struct CyclerepHead {
    config: HeadConfig,
    params: HeadParams,
    adam: Option<AdamState>,
    seed: u64,
}

/// Per-frame embeddings of a set of sequences.
pub struct CyclerepEmbeddings(Vec<EmbeddingSequence>);

/// Message of the last error raised on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cyclerep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn cyclerep_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a `cyclerep_*` function documented to
/// transfer string ownership, and must not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, i32> {
    if ptr.is_null() {
        set_error(&format!("{name} is NULL"));
        return Err(CYCLEREP_STATUS_INVALID_ARGUMENT);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{name} is not valid UTF-8"));
        CYCLEREP_STATUS_INVALID_ARGUMENT
    })
}

fn to_owned_cstring(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "?"))
        .unwrap_or_default()
        .into_raw()
}

macro_rules! deref_or {
    ($ptr:expr, $name:literal, $err:expr) => {
        match $ptr.as_ref() {
            Some(v) => v,
            None => {
                set_error(concat!($name, " handle is NULL"));
                return $err;
            }
        }
    };
}

/// Build a config from a JSON document; NULL or empty uses the defaults.
/// Returns NULL on error.
///
/// # Safety
/// `json`, when non-NULL, must point to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_config_new(json: *const c_char) -> *mut CyclerepConfig {
    let cfg = if json.is_null() {
        Ok(ExperimentConfig::default())
    } else {
        let text = match cstr_arg(json, "json") {
            Ok(t) => t,
            Err(_) => return std::ptr::null_mut(),
        };
        if text.trim().is_empty() {
            Ok(ExperimentConfig::default())
        } else {
            serde_json::from_str::<ExperimentConfig>(text)
                .map_err(cyclerep::Error::from)
                .and_then(|c| c.validate().map(|_| c))
        }
    };
    match catch(cfg) {
        Ok(c) => Box::into_raw(Box::new(CyclerepConfig(c))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Apply one `path.to.key=value` override, as on the CLI.
///
/// # Safety
/// `cfg` must be a live handle from `cyclerep_config_new`; `assignment`
/// must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_config_set(
    cfg: *mut CyclerepConfig,
    assignment: *const c_char,
) -> i32 {
    let handle = match cfg.as_mut() {
        Some(h) => h,
        None => {
            set_error("config handle is NULL");
            return CYCLEREP_STATUS_INVALID_ARGUMENT;
        }
    };
    let spec = match cstr_arg(assignment, "assignment") {
        Ok(s) => s,
        Err(code) => return code,
    };
    // round-trip through the JSON tree so dotted paths resolve the same
    // way they do on the command line
    let rebuilt = serde_json::to_value(&handle.0)
        .map_err(cyclerep::Error::from)
        .and_then(|mut tree| {
            cyclerep::harness::config::apply_json_override(&mut tree, spec)?;
            let cfg: ExperimentConfig =
                serde_json::from_value(tree).map_err(cyclerep::Error::from)?;
            cfg.validate()?;
            Ok(cfg)
        });
    match catch(rebuilt) {
        Ok(c) => {
            handle.0 = c;
            CYCLEREP_STATUS_OK
        }
        Err(code) => code,
    }
}

/// Serialize the effective config to JSON. Caller frees the string.
///
/// # Safety
/// `cfg` must be a live handle from `cyclerep_config_new`.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_config_to_json(cfg: *const CyclerepConfig) -> *mut c_char {
    let handle = deref_or!(cfg, "config", std::ptr::null_mut());
    match serde_json::to_string_pretty(&handle.0) {
        Ok(json) => to_owned_cstring(json),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `cfg` must come from `cyclerep_config_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_config_free(cfg: *mut CyclerepConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

macro_rules! command_fn {
    ($(#[$doc:meta])* $name:ident, $body:expr) => {
        $(#[$doc])*
        /// # Safety
        /// `cfg` must be a live handle from `cyclerep_config_new`.
        #[no_mangle]
        pub unsafe extern "C" fn $name(cfg: *const CyclerepConfig) -> i32 {
            let handle = deref_or!(cfg, "config", CYCLEREP_STATUS_INVALID_ARGUMENT);
            #[allow(clippy::redundant_closure_call)]
            match catch(($body)(&handle.0)) {
                Ok(()) => CYCLEREP_STATUS_OK,
                Err(code) => code,
            }
        }
    };
}

command_fn!(
    /// Generate the train/test datasets for every configured seed.
    cyclerep_cmd_gen,
    harness::cmd_gen
);
command_fn!(
    /// Train one head per seed from the on-disk dataset.
    cyclerep_cmd_train,
    harness::cmd_train
);
command_fn!(
    /// Embed the test split with the trained head.
    cyclerep_cmd_embed,
    harness::cmd_embed
);
command_fn!(
    /// Unsupervised anomaly scoring of the anomalous test videos.
    cyclerep_cmd_anomaly,
    harness::cmd_anomaly
);
command_fn!(
    /// Diagnostic CSV dumps (TSM, autocorrelation, PCA, NN distance).
    cyclerep_cmd_diag,
    harness::cmd_diag
);
command_fn!(
    /// Full chain: gen, train, embed, eval, anomaly, diag.
    cyclerep_cmd_run,
    harness::cmd_run
);

/// k-NN evaluation; `source` 0 = trained embeddings, 1 = frozen-encoder
/// baseline, 2 = random baseline.
///
/// # Safety
/// `cfg` must be a live handle from `cyclerep_config_new`.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_cmd_eval(cfg: *const CyclerepConfig, source: i32) -> i32 {
    let handle = deref_or!(cfg, "config", CYCLEREP_STATUS_INVALID_ARGUMENT);
    let source = match source {
        0 => EmbeddingSource::Trained,
        1 => EmbeddingSource::Frozen,
        2 => EmbeddingSource::Random,
        other => {
            set_error(&format!("unknown eval source {other}"));
            return CYCLEREP_STATUS_INVALID_ARGUMENT;
        }
    };
    match catch(harness::cmd_eval(&handle.0, source)) {
        Ok(()) => CYCLEREP_STATUS_OK,
        Err(code) => code,
    }
}

/// Generate and encode the benchmark for one run seed, in memory.
/// Returns NULL on error.
///
/// # Safety
/// `cfg` must be a live handle from `cyclerep_config_new`.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_bench_prepare(
    cfg: *const CyclerepConfig,
    seed: u64,
) -> *mut CyclerepBench {
    let handle = deref_or!(cfg, "config", std::ptr::null_mut());
    match catch(harness::prepare_bench(&handle.0, seed)) {
        Ok(bench) => Box::into_raw(Box::new(CyclerepBench { bench, seed })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `bench` must come from `cyclerep_bench_prepare` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_bench_free(bench: *mut CyclerepBench) {
    if !bench.is_null() {
        drop(Box::from_raw(bench));
    }
}

/// Train a head on the bench's train split. Returns NULL on error.
///
/// # Safety
/// `cfg` and `bench` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_train(
    cfg: *const CyclerepConfig,
    bench: *const CyclerepBench,
) -> *mut CyclerepHead {
    let cfg = deref_or!(cfg, "config", std::ptr::null_mut());
    let bench = deref_or!(bench, "bench", std::ptr::null_mut());
    match catch(harness::train_on_bench(&cfg.0, &bench.bench, bench.seed)) {
        Ok((params, adam, _report)) => {
            let mut head_cfg = cfg.0.train.head.clone();
            head_cfg.in_channels = cfg.0.dataset.encoder_channels;
            Box::into_raw(Box::new(CyclerepHead {
                config: head_cfg,
                params,
                adam: Some(adam),
                seed: bench.seed,
            }))
        }
        Err(_) => std::ptr::null_mut(),
    }
}

/// Persist a head as a checkpoint file.
///
/// # Safety
/// `head` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_head_save(
    head: *const CyclerepHead,
    path: *const c_char,
) -> i32 {
    let head = deref_or!(head, "head", CYCLEREP_STATUS_INVALID_ARGUMENT);
    let path = match cstr_arg(path, "path") {
        Ok(p) => PathBuf::from(p),
        Err(code) => return code,
    };
    let ckpt = Checkpoint::new(
        head.config.clone(),
        head.params.clone(),
        head.adam.clone(),
        head.seed,
    );
    match catch(ckpt.save(&path)) {
        Ok(()) => CYCLEREP_STATUS_OK,
        Err(code) => code,
    }
}

/// Load a checkpoint file into a head handle. Returns NULL on error.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_head_load(path: *const c_char) -> *mut CyclerepHead {
    let path = match cstr_arg(path, "path") {
        Ok(p) => PathBuf::from(p),
        Err(_) => return std::ptr::null_mut(),
    };
    match catch(Checkpoint::load(&path)) {
        Ok(ckpt) => Box::into_raw(Box::new(CyclerepHead {
            config: ckpt.config,
            params: ckpt.params,
            adam: ckpt.adam,
            seed: ckpt.seed,
        })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// # Safety
/// `head` must come from `cyclerep_train`/`cyclerep_head_load` and not
/// be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_head_free(head: *mut CyclerepHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// Embed the bench's test split with a trained head. Returns NULL on error.
///
/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_embed_test(
    bench: *const CyclerepBench,
    head: *const CyclerepHead,
) -> *mut CyclerepEmbeddings {
    let bench = deref_or!(bench, "bench", std::ptr::null_mut());
    let head = deref_or!(head, "head", std::ptr::null_mut());
    match catch(cyclerep::train::embed_dataset(
        &bench.bench.test_features,
        &head.params,
        &head.config,
    )) {
        Ok(embs) => Box::into_raw(Box::new(CyclerepEmbeddings(embs))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Number of embedded sequences, or -1 on a NULL handle.
///
/// # Safety
/// `embs` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_embeddings_count(embs: *const CyclerepEmbeddings) -> i64 {
    let embs = deref_or!(embs, "embeddings", -1);
    embs.0.len() as i64
}

/// Frame count of sequence `index`, or -1 when out of range.
///
/// # Safety
/// `embs` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_embeddings_frames(
    embs: *const CyclerepEmbeddings,
    index: usize,
) -> i64 {
    let embs = deref_or!(embs, "embeddings", -1);
    match embs.0.get(index) {
        Some(e) => e.len() as i64,
        None => {
            set_error("sequence index out of range");
            -1
        }
    }
}

/// Embedding dimensionality, or -1 on a NULL/empty handle.
///
/// # Safety
/// `embs` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_embeddings_dim(embs: *const CyclerepEmbeddings) -> i64 {
    let embs = deref_or!(embs, "embeddings", -1);
    embs.0.first().map_or(-1, |e| e.dim() as i64)
}

/// Copy the embedding of `(sequence, frame)` into `out` (length `dim`).
///
/// # Safety
/// `embs` must be a live handle and `out` must point to at least
/// `cyclerep_embeddings_dim()` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_embeddings_copy_row(
    embs: *const CyclerepEmbeddings,
    sequence: usize,
    frame: usize,
    out: *mut f64,
) -> i32 {
    let embs = deref_or!(embs, "embeddings", CYCLEREP_STATUS_INVALID_ARGUMENT);
    if out.is_null() {
        set_error("out buffer is NULL");
        return CYCLEREP_STATUS_INVALID_ARGUMENT;
    }
    let row = embs
        .0
        .get(sequence)
        .and_then(|e| e.embeddings.get(frame));
    match row {
        Some(row) => {
            std::ptr::copy_nonoverlapping(row.as_ptr(), out, row.len());
            CYCLEREP_STATUS_OK
        }
        None => {
            set_error("sequence/frame index out of range");
            CYCLEREP_STATUS_INVALID_ARGUMENT
        }
    }
}

/// # Safety
/// `embs` must come from `cyclerep_embed_test` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_embeddings_free(embs: *mut CyclerepEmbeddings) {
    if !embs.is_null() {
        drop(Box::from_raw(embs));
    }
}

/// Weighted k-NN metrics of the given embeddings against the bench's
/// test labels, returned as a JSON string (caller frees). NULL on error.
///
/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn cyclerep_eval_json(
    cfg: *const CyclerepConfig,
    bench: *const CyclerepBench,
    embs: *const CyclerepEmbeddings,
) -> *mut c_char {
    let cfg = deref_or!(cfg, "config", std::ptr::null_mut());
    let bench = deref_or!(bench, "bench", std::ptr::null_mut());
    let embs = deref_or!(embs, "embeddings", std::ptr::null_mut());
    let labels = harness::test_labels(&bench.bench);
    let report = catch(harness::eval_embeddings(&cfg.0, &embs.0, &labels))
        .and_then(|r| {
            serde_json::to_string_pretty(&r).map_err(|e| {
                set_error(&e.to_string());
                CYCLEREP_STATUS_NUMERIC
            })
        });
    match report {
        Ok(json) => to_owned_cstring(json),
        Err(_) => std::ptr::null_mut(),
    }
}

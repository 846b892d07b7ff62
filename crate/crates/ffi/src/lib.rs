//! C interface to the `bears` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! style functions and released with the matching `*_free`. Every fallible
//! call returns a [`BearsStatus`]; the message for the last failure on the
//! calling thread is available from [`bears_last_error`].
//!
//! Buffers are caller-owned. Functions that fill a buffer take its length
//! and return `BEARS_STATUS_BUFFER_TOO_SMALL` when it does not fit.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use bears::bears::{train_ensemble, BearsError, Ensemble, Method};
use bears::knowledge::Reasoner;
use bears::nn::Matrix;
use bears::presets;
use bears::rs::{count_rs, enumerate_optimal_maps, RsError};
use bears::tasks::{builtin_task, generate_dataset, GeneratedDataset, SplitName, TaskError, TaskSpec};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BearsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownTask = 3,
    Task = 4,
    Training = 5,
    HashMismatch = 6,
    Budget = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BearsSplit {
    Train = 0,
    Val = 1,
    Test = 2,
    Ood = 3,
}

impl From<BearsSplit> for SplitName {
    fn from(s: BearsSplit) -> Self {
        match s {
            BearsSplit::Train => SplitName::Train,
            BearsSplit::Val => SplitName::Val,
            BearsSplit::Test => SplitName::Test,
            BearsSplit::Ood => SplitName::Ood,
        }
    }
}

/// A task: schema, knowledge and the compiled reasoner.
pub struct BearsTask {
    spec: TaskSpec,
    reasoner: Arc<Reasoner>,
}

/// Generated train/val/test/ood splits of a task.
pub struct BearsDataset {
    data: GeneratedDataset,
}

/// A trained predictor or ensemble.
pub struct BearsModel {
    model: Ensemble,
}

struct Failure(BearsStatus, String);

impl From<TaskError> for Failure {
    fn from(e: TaskError) -> Self {
        let status = match e {
            TaskError::Unknown(_) => BearsStatus::UnknownTask,
            TaskError::Io(_) => BearsStatus::Io,
            _ => BearsStatus::Task,
        };
        Failure(status, e.to_string())
    }
}

impl From<BearsError> for Failure {
    fn from(e: BearsError) -> Self {
        let status = match e {
            BearsError::HashMismatch { .. } => BearsStatus::HashMismatch,
            BearsError::Io(_) => BearsStatus::Io,
            BearsError::Config(_) => BearsStatus::InvalidArgument,
            _ => BearsStatus::Training,
        };
        Failure(status, e.to_string())
    }
}

impl From<RsError> for Failure {
    fn from(e: RsError) -> Self {
        let status = match e {
            RsError::Budget { .. } => BearsStatus::Budget,
            _ => BearsStatus::Task,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BearsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BearsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside bears");
            BearsStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(BearsStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(BearsStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("string argument is not valid UTF-8"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], Failure> {
    if needed > len {
        return Err(Failure(
            BearsStatus::BufferTooSmall,
            format!("buffer holds {len} values, {needed} needed"),
        ));
    }
    if needed == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

fn new_task(spec: TaskSpec) -> Result<Box<BearsTask>, Failure> {
    let reasoner = Arc::new(spec.reasoner()?);
    Ok(Box::new(BearsTask { spec, reasoner }))
}

/// Message for the last failed call on this thread, empty after a success.
/// Valid until the next `bears_*` call on the same thread.
#[no_mangle]
pub extern "C" fn bears_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static, NUL-terminated name of a status code; "unknown status" for
/// values outside the enum.
#[no_mangle]
pub extern "C" fn bears_status_name(status: i32) -> *const c_char {
    let s: &'static CStr = match status {
        0 => c"ok",
        1 => c"null pointer",
        2 => c"invalid argument",
        3 => c"unknown task",
        4 => c"task error",
        5 => c"training error",
        6 => c"task hash mismatch",
        7 => c"search budget exhausted",
        8 => c"i/o error",
        9 => c"buffer too small",
        10 => c"panic",
        _ => c"unknown status",
    };
    s.as_ptr()
}

/// Loads a builtin task (`mnist_half`, `mnist_even_odd`, `kandinsky_mini`,
/// `traffic_mini`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bears_task_builtin(name: *const c_char, out: *mut *mut BearsTask) -> BearsStatus {
    guard(|| {
        let spec = builtin_task(str_arg(name)?)?;
        write_out(out, Box::into_raw(new_task(spec)?))
    })
}

/// Parses a task spec from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bears_task_from_json(json: *const c_char, out: *mut *mut BearsTask) -> BearsStatus {
    guard(|| {
        let spec = TaskSpec::from_json(str_arg(json)?)?;
        write_out(out, Box::into_raw(new_task(spec)?))
    })
}

/// # Safety
/// `task` must come from `bears_task_builtin`/`bears_task_from_json` or be
/// null, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bears_task_free(task: *mut BearsTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Number of concept variables.
///
/// # Safety
/// `task` must be a live task handle.
#[no_mangle]
pub unsafe extern "C" fn bears_task_num_concepts(task: *const BearsTask, out: *mut usize) -> BearsStatus {
    guard(|| write_out(out, handle(task)?.spec.schema.num_vars()))
}

/// Total number of values over all concept variables, i.e. the width of a
/// row of concatenated concept factors.
///
/// # Safety
/// `task` must be a live task handle.
#[no_mangle]
pub unsafe extern "C" fn bears_task_concept_width(task: *const BearsTask, out: *mut usize) -> BearsStatus {
    guard(|| write_out(out, handle(task)?.spec.schema.sizes().iter().sum()))
}

/// Number of joint label values.
///
/// # Safety
/// `task` must be a live task handle.
#[no_mangle]
pub unsafe extern "C" fn bears_task_num_labels(task: *const BearsTask, out: *mut usize) -> BearsStatus {
    guard(|| write_out(out, handle(task)?.reasoner.num_labels()))
}

/// Width of one input row (all objects concatenated).
///
/// # Safety
/// `task` must be a live task handle.
#[no_mangle]
pub unsafe extern "C" fn bears_task_input_dim(task: *const BearsTask, out: *mut usize) -> BearsStatus {
    guard(|| {
        let spec = &handle(task)?.spec;
        write_out(out, spec.renderer.dim * spec.schema.num_objects())
    })
}

/// Label index computed by the knowledge for a concept assignment.
///
/// # Safety
/// `assignment` must point to `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn bears_task_label_of(
    task: *const BearsTask,
    assignment: *const usize,
    len: usize,
    out: *mut usize,
) -> BearsStatus {
    guard(|| {
        let t = handle(task)?;
        if assignment.is_null() {
            return Err(null());
        }
        let c = std::slice::from_raw_parts(assignment, len);
        let y = t
            .spec
            .knowledge_expr()?
            .label_index(c)
            .map_err(|e| invalid(e.to_string()))?;
        write_out(out, y)
    })
}

/// Label distribution induced by independent concept factors given as one
/// concatenated row (see `bears_task_concept_width`).
///
/// # Safety
/// `factors` must point to `len` readable values and `out` to `out_len`
/// writable ones.
#[no_mangle]
pub unsafe extern "C" fn bears_task_label_probs(
    task: *const BearsTask,
    factors: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> BearsStatus {
    guard(|| {
        let t = handle(task)?;
        let sizes = t.spec.schema.sizes();
        if len != sizes.iter().sum::<usize>() {
            return Err(invalid(format!("expected {} factor values, got {len}", sizes.iter().sum::<usize>())));
        }
        if factors.is_null() {
            return Err(null());
        }
        let flat = std::slice::from_raw_parts(factors, len);
        let mut split = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for s in sizes {
            let f = &flat[at..at + s];
            let total: f64 = f.iter().sum();
            if f.iter().any(|v| !v.is_finite() || *v < 0.0) || (total - 1.0).abs() > 1e-6 {
                return Err(invalid("each concept factor must be a probability vector"));
            }
            split.push(f.to_vec());
            at += s;
        }
        let probs = t.reasoner.label_probs(&split);
        out_slice(out, out_len, probs.len())?.copy_from_slice(&probs);
        Ok(())
    })
}

/// Counts optimal concept maps over the task support and how many of them
/// are reasoning shortcuts (not the identity).
///
/// # Safety
/// `task` must be a live task handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn bears_task_count_shortcuts(
    task: *const BearsTask,
    node_budget: u64,
    out_optima: *mut u64,
    out_shortcuts: *mut u64,
) -> BearsStatus {
    guard(|| {
        let spec = &handle(task)?.spec;
        if out_optima.is_null() || out_shortcuts.is_null() {
            return Err(null());
        }
        let k = spec.knowledge_expr()?;
        let set = enumerate_optimal_maps(&k, &spec.support, spec.rs_codomain, node_budget)?;
        let (total, rs) = count_rs(&set);
        write_out(out_optima, total as u64)?;
        write_out(out_shortcuts, rs as u64)
    })
}

/// Generates the task's splits from `seed`.
///
/// # Safety
/// `task` must be a live task handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bears_dataset_generate(
    task: *const BearsTask,
    seed: u64,
    out: *mut *mut BearsDataset,
) -> BearsStatus {
    guard(|| {
        let data = generate_dataset(&handle(task)?.spec, seed)?;
        write_out(out, Box::into_raw(Box::new(BearsDataset { data })))
    })
}

/// # Safety
/// `data` must come from `bears_dataset_generate` or be null.
#[no_mangle]
pub unsafe extern "C" fn bears_dataset_free(data: *mut BearsDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Number of examples in a split.
///
/// # Safety
/// `data` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn bears_dataset_len(data: *const BearsDataset, split: BearsSplit, out: *mut usize) -> BearsStatus {
    guard(|| write_out(out, handle(data)?.data.split(split.into()).len()))
}

/// Copies the split inputs, row-major, into `out`.
///
/// # Safety
/// `out` must point to `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn bears_dataset_inputs(
    data: *const BearsDataset,
    split: BearsSplit,
    out: *mut f64,
    out_len: usize,
) -> BearsStatus {
    guard(|| {
        let x = &handle(data)?.data.split(split.into()).x.data;
        out_slice(out, out_len, x.len())?.copy_from_slice(x);
        Ok(())
    })
}

/// Copies the split label indices into `out`.
///
/// # Safety
/// `out` must point to `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn bears_dataset_labels(
    data: *const BearsDataset,
    split: BearsSplit,
    out: *mut usize,
    out_len: usize,
) -> BearsStatus {
    guard(|| {
        let y = &handle(data)?.data.split(split.into()).y;
        if y.len() > out_len {
            return Err(Failure(
                BearsStatus::BufferTooSmall,
                format!("buffer holds {out_len} values, {} needed", y.len()),
            ));
        }
        if !y.is_empty() {
            if out.is_null() {
                return Err(null());
            }
            std::slice::from_raw_parts_mut(out, y.len()).copy_from_slice(y);
        }
        Ok(())
    })
}

/// Trains `method` (`dpl`, `sl`, `bears`, `de`, `mcdo`) on the training
/// split with the task's default hyperparameters. `epochs == 0` keeps the
/// default epoch count.
///
/// # Safety
/// Handles must be live, `method` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bears_model_train(
    task: *const BearsTask,
    data: *const BearsDataset,
    method: *const c_char,
    seed: u64,
    epochs: u32,
    out: *mut *mut BearsModel,
) -> BearsStatus {
    guard(|| {
        let t = handle(task)?;
        let d = handle(data)?;
        if out.is_null() {
            return Err(null());
        }
        if d.data.task_hash != t.spec.content_hash() {
            return Err(invalid("dataset was generated from a different task"));
        }
        let method: Method = str_arg(method)?.parse().map_err(|e: String| invalid(e))?;
        let mut cfg = presets::ensemble_config(&t.spec, method, seed);
        if epochs > 0 {
            cfg.train.epochs = epochs as usize;
        }
        let train = &d.data.train;
        let model = train_ensemble(&cfg, t.reasoner.clone(), &train.x, &train.y, None, None)?;
        write_out(out, Box::into_raw(Box::new(BearsModel { model })))
    })
}

/// # Safety
/// `model` must come from `bears_model_train`/`bears_model_load` or be null.
#[no_mangle]
pub unsafe extern "C" fn bears_model_free(model: *mut BearsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of ensemble members (1 for single predictors).
///
/// # Safety
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn bears_model_num_members(model: *const BearsModel, out: *mut usize) -> BearsStatus {
    guard(|| write_out(out, handle(model)?.model.members.len()))
}

/// Predicts `rows` examples of width `cols`. Writes `rows * num_labels`
/// label probabilities and `rows * concept_width` concatenated concept
/// factors, both row-major. Either output may be null with length 0.
///
/// # Safety
/// `x` must hold `rows * cols` values; outputs must hold their lengths.
#[no_mangle]
pub unsafe extern "C" fn bears_model_predict(
    model: *const BearsModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    labels: *mut f64,
    labels_len: usize,
    concepts: *mut f64,
    concepts_len: usize,
) -> BearsStatus {
    guard(|| {
        let m = &handle(model)?.model;
        let expected = m.members[0].input_dim();
        if cols != expected {
            return Err(invalid(format!("expected {expected} input columns, got {cols}")));
        }
        let n = rows.checked_mul(cols).ok_or_else(|| invalid("input size overflows"))?;
        if x.is_null() && n > 0 {
            return Err(null());
        }
        let input = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(x, n).to_vec()
        };
        if input.iter().any(|v| !v.is_finite()) {
            return Err(invalid("inputs must be finite"));
        }
        let pred = m.predict(&Matrix::from_vec(rows, cols, input))?;
        let label_rows: Vec<f64> = pred.labels.iter().flatten().copied().collect();
        let concept_rows: Vec<f64> = pred
            .concepts
            .iter()
            .flat_map(|c| c.factors.iter().flatten().copied())
            .collect();
        if labels_len > 0 || !labels.is_null() {
            out_slice(labels, labels_len, label_rows.len())?.copy_from_slice(&label_rows);
        }
        if concepts_len > 0 || !concepts.is_null() {
            out_slice(concepts, concepts_len, concept_rows.len())?.copy_from_slice(&concept_rows);
        }
        Ok(())
    })
}

/// Writes a checkpoint directory tagged with the task hash.
///
/// # Safety
/// Handles must be live and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bears_model_save(
    model: *const BearsModel,
    task: *const BearsTask,
    dir: *const c_char,
) -> BearsStatus {
    guard(|| {
        let m = handle(model)?;
        let t = handle(task)?;
        m.model.save(Path::new(str_arg(dir)?), &t.spec.content_hash())?;
        Ok(())
    })
}

/// Loads a checkpoint written for `task`. Fails with
/// `BEARS_STATUS_HASH_MISMATCH` if it was trained on another task.
///
/// # Safety
/// `task` must be live, `dir` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bears_model_load(
    task: *const BearsTask,
    dir: *const c_char,
    out: *mut *mut BearsModel,
) -> BearsStatus {
    guard(|| {
        let t = handle(task)?;
        let dir = Path::new(str_arg(dir)?);
        if out.is_null() {
            return Err(null());
        }
        let model = Ensemble::load(dir, t.reasoner.clone(), &t.spec.content_hash())?;
        write_out(out, Box::into_raw(Box::new(BearsModel { model })))
    })
}

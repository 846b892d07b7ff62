use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use bears_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bears_last_error()) }.to_string_lossy().into_owned()
}

fn task(name: &str) -> *mut BearsTask {
    let name = CString::new(name).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { bears_task_builtin(name.as_ptr(), &mut t) }, BearsStatus::Ok);
    assert!(!t.is_null());
    t
}

fn size(f: unsafe extern "C" fn(*const BearsTask, *mut usize) -> BearsStatus, t: *const BearsTask) -> usize {
    let mut n = 0;
    assert_eq!(unsafe { f(t, &mut n) }, BearsStatus::Ok);
    n
}

#[test]
fn unknown_task_sets_status_and_message() {
    let name = CString::new("no_such_task").unwrap();
    let mut t = ptr::null_mut();
    let st = unsafe { bears_task_builtin(name.as_ptr(), &mut t) };
    assert_eq!(st, BearsStatus::UnknownTask);
    assert!(t.is_null());
    assert!(last_error().contains("no_such_task"));
    let name = unsafe { CStr::from_ptr(bears_status_name(st as i32)) };
    assert_eq!(name.to_str().unwrap(), "unknown task");
    let name = unsafe { CStr::from_ptr(bears_status_name(99)) };
    assert_eq!(name.to_str().unwrap(), "unknown status");
}

#[test]
fn null_arguments_are_rejected() {
    let mut n = 0;
    assert_eq!(unsafe { bears_task_num_labels(ptr::null(), &mut n) }, BearsStatus::NullPointer);
    assert_eq!(unsafe { bears_task_builtin(ptr::null(), ptr::null_mut()) }, BearsStatus::NullPointer);
    let t = task("traffic_mini");
    assert_eq!(unsafe { bears_task_num_labels(t, ptr::null_mut()) }, BearsStatus::NullPointer);
    unsafe {
        bears_task_free(t);
        bears_task_free(ptr::null_mut());
        bears_model_free(ptr::null_mut());
        bears_dataset_free(ptr::null_mut());
    }
}

#[test]
fn task_shapes_and_label_function() {
    let t = task("traffic_mini");
    assert_eq!(size(bears_task_num_concepts, t), 3);
    assert_eq!(size(bears_task_concept_width, t), 6);
    // stop, go and consistent flags
    assert_eq!(size(bears_task_num_labels, t), 8);

    // grn=0, red=1, ped=0 -> stop
    let g = [0usize, 1, 0];
    let mut y = usize::MAX;
    assert_eq!(unsafe { bears_task_label_of(t, g.as_ptr(), 3, &mut y) }, BearsStatus::Ok);
    let g_bad = [0usize, 2, 0];
    assert_eq!(
        unsafe { bears_task_label_of(t, g_bad.as_ptr(), 3, &mut y) },
        BearsStatus::InvalidArgument
    );

    // one-hot factors reproduce the label function
    let factors = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
    let mut probs = [0.0; 8];
    let st = unsafe { bears_task_label_probs(t, factors.as_ptr(), 6, probs.as_mut_ptr(), 8) };
    assert_eq!(st, BearsStatus::Ok);
    let mut y2 = 0;
    unsafe { bears_task_label_of(t, g.as_ptr(), 3, &mut y2) };
    assert_eq!(y, y2);
    assert!((probs[y] - 1.0).abs() < 1e-12);

    let mut small = [0.0; 7];
    let st = unsafe { bears_task_label_probs(t, factors.as_ptr(), 6, small.as_mut_ptr(), 7) };
    assert_eq!(st, BearsStatus::BufferTooSmall);
    let not_prob = [0.5, 0.0, 0.0, 1.0, 1.0, 0.0];
    let st = unsafe { bears_task_label_probs(t, not_prob.as_ptr(), 6, probs.as_mut_ptr(), 8) };
    assert_eq!(st, BearsStatus::InvalidArgument);
    unsafe { bears_task_free(t) };
}

#[test]
fn shortcut_counts_and_budget() {
    let t = task("mnist_half");
    let (mut total, mut rs) = (0u64, 0u64);
    assert_eq!(
        unsafe { bears_task_count_shortcuts(t, 50_000_000, &mut total, &mut rs) },
        BearsStatus::Ok
    );
    assert_eq!((total, rs), (3, 2));
    unsafe { bears_task_free(t) };

    let t = task("kandinsky_mini");
    let st = unsafe { bears_task_count_shortcuts(t, 1_000, &mut total, &mut rs) };
    assert_eq!(st, BearsStatus::Budget);
    assert!(!last_error().is_empty());
    unsafe { bears_task_free(t) };
}

#[test]
fn json_round_trip_matches_builtin() {
    let spec = bears::tasks::builtin_task("mnist_half").unwrap();
    let json = CString::new(spec.to_json()).unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { bears_task_from_json(json.as_ptr(), &mut t) }, BearsStatus::Ok);
    assert_eq!(size(bears_task_num_labels, t), 9);
    unsafe { bears_task_free(t) };

    let bad = CString::new("{\"name\": 3}").unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { bears_task_from_json(bad.as_ptr(), &mut t) }, BearsStatus::Task);
    assert!(t.is_null());
}

#[test]
fn train_predict_save_load() {
    let t = task("traffic_mini");
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { bears_dataset_generate(t, 3, &mut d) }, BearsStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { bears_dataset_len(d, BearsSplit::Test, &mut n) }, BearsStatus::Ok);
    assert!(n > 0);
    let cols = size(bears_task_input_dim, t);
    let mut x = vec![0.0; n * cols];
    assert_eq!(
        unsafe { bears_dataset_inputs(d, BearsSplit::Test, x.as_mut_ptr(), x.len()) },
        BearsStatus::Ok
    );
    let mut y = vec![0usize; n];
    assert_eq!(
        unsafe { bears_dataset_labels(d, BearsSplit::Test, y.as_mut_ptr(), n) },
        BearsStatus::Ok
    );

    let method = CString::new("bears").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { bears_model_train(t, d, method.as_ptr(), 3, 2, &mut m) }, BearsStatus::Ok);
    let mut k = 0;
    assert_eq!(unsafe { bears_model_num_members(m, &mut k) }, BearsStatus::Ok);
    assert!(k > 1);

    let nl = size(bears_task_num_labels, t);
    let cw = size(bears_task_concept_width, t);
    let mut labels = vec![0.0; n * nl];
    let mut concepts = vec![0.0; n * cw];
    let st = unsafe {
        bears_model_predict(m, x.as_ptr(), n, cols, labels.as_mut_ptr(), labels.len(), concepts.as_mut_ptr(), concepts.len())
    };
    assert_eq!(st, BearsStatus::Ok);
    for row in labels.chunks(nl) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    for row in concepts.chunks(2) {
        assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
    }
    let st = unsafe { bears_model_predict(m, x.as_ptr(), n, cols - 1, ptr::null_mut(), 0, ptr::null_mut(), 0) };
    assert_eq!(st, BearsStatus::InvalidArgument);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { bears_model_save(m, t, path.as_ptr()) }, BearsStatus::Ok);
    let mut m2 = ptr::null_mut();
    assert_eq!(unsafe { bears_model_load(t, path.as_ptr(), &mut m2) }, BearsStatus::Ok);
    let mut labels2 = vec![0.0; n * nl];
    let st = unsafe {
        bears_model_predict(m2, x.as_ptr(), n, cols, labels2.as_mut_ptr(), labels2.len(), ptr::null_mut(), 0)
    };
    assert_eq!(st, BearsStatus::Ok);
    assert_eq!(labels, labels2);

    let other = task("mnist_half");
    let mut m3 = ptr::null_mut();
    assert_eq!(unsafe { bears_model_load(other, path.as_ptr(), &mut m3) }, BearsStatus::HashMismatch);
    assert!(m3.is_null());

    let bad = CString::new("svm").unwrap();
    assert_eq!(
        unsafe { bears_model_train(t, d, bad.as_ptr(), 0, 1, &mut m3) },
        BearsStatus::InvalidArgument
    );
    let mut d_other = ptr::null_mut();
    unsafe { bears_dataset_generate(other, 0, &mut d_other) };
    assert_eq!(
        unsafe { bears_model_train(t, d_other, method.as_ptr(), 0, 1, &mut m3) },
        BearsStatus::InvalidArgument
    );

    unsafe {
        bears_model_free(m);
        bears_model_free(m2);
        bears_dataset_free(d);
        bears_dataset_free(d_other);
        bears_task_free(t);
        bears_task_free(other);
    }
}

#[test]
fn header_is_generated_and_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/bears.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["bears_task_builtin", "bears_model_train", "bears_model_predict", "bears_last_error"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"bears.h\"\nint main(void) { BearsTask *t = 0; \
         BearsStatus s = bears_task_builtin(\"traffic_mini\", &t); bears_task_free(t); return (int)s; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg(format!("-I{}/include", env!("CARGO_MANIFEST_DIR")))
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler available, skipping compile check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

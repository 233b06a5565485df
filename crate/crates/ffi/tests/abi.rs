use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use bagstack::ensemble::EnsembleConfig;
use bagstack::pipeline::{run_ensemble, run_train, FamilySelection, RunConfig, TrainRequest};
use bagstack::store::SnapshotStore;
use bagstack::synth::synth;
use bagstack_ffi::*;

/// Trains one family on two samples for three epochs.
fn small_store(root: &Path) -> PathBuf {
    let data = root.join("data.jsonl");
    synth(150, 15.0, 3).unwrap().save(&data).unwrap();
    let mut cfg = RunConfig {
        dataset: Some(data),
        workdir: root.join("run"),
        ..RunConfig::default()
    };
    cfg.train.epochs = 3;
    let req = TrainRequest {
        families: FamilySelection::First(1),
        samples: Some(2),
        parallel: 1,
    };
    run_train(&cfg, &req).unwrap().store
}

fn last_error() -> String {
    let p = bagstack_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn store_and_ensemble_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let store_dir = small_store(dir.path());
    let path = c(store_dir.to_str().unwrap());
    unsafe {
        let mut store = ptr::null_mut();
        assert_eq!(bagstack_store_open(path.as_ptr(), &mut store), BagstackStatus::Ok);
        let (mut snaps, mut docs, mut labels) = (0, 0, 0);
        assert_eq!(bagstack_store_shape(store, &mut snaps, &mut docs, &mut labels), BagstackStatus::Ok);
        assert_eq!((snaps, labels), (6, 7));

        let config = c("strategy = \"bag-samples\"\nn = 2\n");
        let mut e = ptr::null_mut();
        assert_eq!(bagstack_ensemble_build(store, config.as_ptr(), &mut e), BagstackStatus::Ok);
        let mut n = 0;
        assert_eq!(bagstack_ensemble_len(e, &mut n), BagstackStatus::Ok);
        assert_eq!(n, 4);

        // same numbers as the library
        let core = SnapshotStore::open(&store_dir).unwrap();
        let cfg = EnsembleConfig::parse("strategy = \"bag-samples\"\nn = 2\n").unwrap();
        let want = run_ensemble(&core, &cfg, None).unwrap();
        let mut metrics = BagstackMetrics::default();
        assert_eq!(bagstack_ensemble_evaluate(e, store, &mut metrics), BagstackStatus::Ok);
        assert_eq!(metrics.hamming_loss, want.report.hamming_loss);
        assert_eq!(metrics.macro_f1, want.report.macro_f1);
        assert_eq!(metrics.bce, want.report.bce);

        let mut m = ptr::null_mut();
        assert_eq!(bagstack_ensemble_aggregate(e, store, &mut m), BagstackStatus::Ok);
        let (mut rows, mut cols) = (0, 0);
        assert_eq!(bagstack_matrix_shape(m, &mut rows, &mut cols), BagstackStatus::Ok);
        assert_eq!((rows, cols), (docs, labels));
        let data = std::slice::from_raw_parts(bagstack_matrix_data(m), rows * cols);
        let expected = bagstack::ensemble::aggregate(&want.ensemble, &core).unwrap();
        assert_eq!(data, expected.values());

        let mut json = ptr::null_mut();
        assert_eq!(bagstack_ensemble_to_json(e, &mut json), BagstackStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(bagstack_ensemble_from_json(store, json, &mut again), BagstackStatus::Ok);
        let mut n2 = 0;
        bagstack_ensemble_len(again, &mut n2);
        assert_eq!(n2, 4);

        bagstack_string_free(json);
        bagstack_ensemble_free(again);
        bagstack_matrix_free(m);
        bagstack_ensemble_free(e);
        bagstack_store_free(store);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut store = ptr::null_mut();
        let missing = c("/definitely/not/a/store");
        assert_eq!(bagstack_store_open(missing.as_ptr(), &mut store), BagstackStatus::Io);
        assert!(store.is_null());
        assert!(last_error().contains("/definitely/not/a/store"));

        assert_eq!(bagstack_store_open(ptr::null(), &mut store), BagstackStatus::NullPointer);
        assert!(last_error().contains("path"));

        let bad = [0xffu8, 0];
        assert_eq!(bagstack_store_open(bad.as_ptr().cast(), &mut store), BagstackStatus::InvalidUtf8);

        let mut e = ptr::null_mut();
        let cfg = c("");
        assert_eq!(bagstack_ensemble_build(ptr::null(), cfg.as_ptr(), &mut e), BagstackStatus::NullPointer);
    }
}

#[test]
fn bad_config_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(small_store(dir.path()).to_str().unwrap());
    unsafe {
        let mut store = ptr::null_mut();
        assert_eq!(bagstack_store_open(path.as_ptr(), &mut store), BagstackStatus::Ok);
        let mut e = ptr::null_mut();
        let cfg = c("strategy = \"bag-k\"\nk = 99\n");
        let status = bagstack_ensemble_build(store, cfg.as_ptr(), &mut e);
        assert_ne!(status, BagstackStatus::Ok);
        assert!(e.is_null());
        assert!(last_error().contains("99"));
        let unknown = c("stratgy = \"bag-k\"\n");
        assert_eq!(bagstack_ensemble_build(store, unknown.as_ptr(), &mut e), BagstackStatus::InvalidInput);
        bagstack_store_free(store);
    }
}

#[test]
fn metrics_compute_matches_worked_example() {
    let probs = [0.9, 0.7, 0.8, 0.1, 0.6, 0.2];
    let truth = [1u8, 0, 1, 0, 1, 0];
    let mut m = BagstackMetrics::default();
    let status = unsafe { bagstack_metrics_compute(probs.as_ptr(), truth.as_ptr(), 2, 3, 0.5, &mut m) };
    assert_eq!(status, BagstackStatus::Ok);
    assert_eq!(m.hamming_loss, 1.0 / 6.0);
    assert!((m.instance_f1 - 0.9).abs() < 1e-15);
    assert_eq!(m.micro_f1, 6.0 / 7.0);
    assert!((m.macro_f1 - 8.0 / 9.0).abs() < 1e-15);

    let out_of_range = [0.5, 1.5, 0.5, 0.5, 0.5, 0.5];
    let status = unsafe { bagstack_metrics_compute(out_of_range.as_ptr(), truth.as_ptr(), 2, 3, 0.5, &mut m) };
    assert_eq!(status, BagstackStatus::InvalidInput);
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let mut store = ptr::null_mut();
        bagstack_store_open(ptr::null(), &mut store);
    }
    let other = std::thread::spawn(|| bagstack_last_error().is_null()).join().unwrap();
    assert!(other);
    assert!(!bagstack_last_error().is_null());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/bagstack.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct BagstackStore BagstackStore;"));
}

/// Compiles the C smoke program against the static library when a C
/// compiler is available.
#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| manifest.join("../../target"));
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| target.join("debug"));
    let lib = profile_dir.join("libbagstack_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no cc or {} missing", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "cc failed");

    let store = small_store(dir.path());
    let out = Command::new(&exe).arg(&store).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("snapshots=6"), "{text}");
    assert!(text.contains("members=4"), "{text}");
    assert!(text.contains("in_range=1"), "{text}");
    assert!(text.contains(&format!("bad_status={}", BagstackStatus::InvalidInput as i32)), "{text}");
    assert!(text.contains("has_msg=1"), "{text}");
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn kdpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdpinn"))
        .args(args)
        .env_remove("KDPINN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

/// Smoke preset cut down further so each training call takes well under a
/// second.
const TINY: &[&str] = &[
    "--preset",
    "bs_smoke",
    "--set",
    "teacher_train.iterations=40",
    "--set",
    "teacher_train.fine_tune_iterations=5",
    "--set",
    "student_train.iterations=30",
    "--set",
    "student_train.fine_tune_iterations=5",
    "--set",
    "evaluation.resolution=[21,11]",
];

fn with<'a>(cmd: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd, "-q"];
    v.extend_from_slice(TINY);
    v.extend_from_slice(&["--out", out]);
    v.extend_from_slice(extra);
    v
}

fn train(out: &Path, extra: &[&str]) -> PathBuf {
    let o = kdpinn(&with("train-teacher", out.to_str().unwrap(), extra));
    assert!(o.status.success(), "{}", stderr(&o));
    PathBuf::from(stdout(&o))
}

#[test]
fn missing_recipe_names_the_path() {
    let o = kdpinn(&["train-teacher", "--recipe", "/nonexistent/recipe.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("/nonexistent/recipe.json"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn unknown_override_lists_valid_keys() {
    let o = kdpinn(&[
        "recipe",
        "--preset",
        "bs_smoke",
        "--set",
        "teacher_train.iters=3",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("unknown key"), "{err}");
    assert!(err.contains("teacher_train.iterations"), "{err}");
    assert!(err.contains("mitigations.informed_eta"), "{err}");
}

#[test]
fn recipe_overrides_round_trip_through_a_file() {
    let o = kdpinn(&[
        "recipe",
        "--preset",
        "bs_smoke",
        "--set",
        "seed=9",
        "--set",
        "student.sizes=[2,6,1]",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    fs::write(&path, stdout(&o)).unwrap();
    let again = kdpinn(&["recipe", "--recipe", path.to_str().unwrap()]);
    assert_eq!(stdout(&again), stdout(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["seed"], 9);
    assert_eq!(doc["student"]["sizes"], serde_json::json!([2, 6, 1]));
}

#[test]
fn presets_are_listed() {
    let o = kdpinn(&["presets"]);
    let names = stdout(&o);
    for n in [
        "bs_smoke",
        "bs_in_domain_desk",
        "bs_ood_full",
        "navier_stokes_fast_desk",
    ] {
        assert!(names.lines().any(|l| l == n), "{n} missing from {names}");
    }
}

#[test]
fn bounds_for_ratio_six() {
    let o = kdpinn(&["bounds", "--r-flops", "6", "--f", "0.05"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(
        (doc["s_max"].as_f64().unwrap() - 4.8).abs() < 1e-12,
        "{doc}"
    );
    assert!((doc["amdahl_bound"].as_f64().unwrap() - 4.8).abs() < 1e-12);
}

#[test]
fn bounds_from_layer_sizes() {
    let o = kdpinn(&[
        "bounds",
        "--teacher-sizes",
        "2,50,50,50,1",
        "--student-sizes",
        "2,20,20,20,1",
        "--f",
        "0.02",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = doc["r_flops"].as_f64().unwrap();
    assert!((r - 5150.0 / 860.0).abs() < 1e-12);
    let expect = 1.0 / (0.02 + 0.98 / r);
    assert!((doc["s_max"].as_f64().unwrap() - expect).abs() < 1e-12);
}

#[test]
fn bounds_rejects_invalid_fraction() {
    let o = kdpinn(&["bounds", "--r-flops", "6", "--f", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_refuses_multiple_threads() {
    let o = Command::new(env!("CARGO_BIN_EXE_kdpinn"))
        .args(["bench", "--preset", "bs_smoke"])
        .env("KDPINN_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("KDPINN_THREADS"));
}

#[test]
fn bench_reports_speedup_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = kdpinn(&[
        "bench", "-q", "--preset", "bs_smoke", "--batch", "500", "--warmup", "1", "--runs", "3",
        "--out", out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(doc["speedup"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["teacher"]["runs"], 3);
    assert_eq!(doc["teacher"]["times_ms"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("bench.json").exists());
}

#[test]
fn train_distill_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let teacher = train(dir.path(), &[]);
    assert!(teacher.ends_with("teacher.ckpt.json"));
    let run = teacher.parent().unwrap();
    let history = fs::read_to_string(run.join("teacher_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 45);
    assert!(run.join("recipe.json").exists());

    let o = kdpinn(&with(
        "distill",
        out,
        &["--teacher", teacher.to_str().unwrap()],
    ));
    assert!(o.status.success(), "{}", stderr(&o));
    let student = PathBuf::from(stdout(&o));
    assert!(student.ends_with("student.ckpt.json"));
    let inputs: Value = serde_json::from_str(
        &fs::read_to_string(student.parent().unwrap().join("inputs.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(inputs["variant"], "kd_pinn_plus");

    let before = fs::read(&student).unwrap();
    let eval = |ckpt: &Path| {
        let o = kdpinn(&with(
            "evaluate",
            out,
            &["--checkpoint", ckpt.to_str().unwrap()],
        ));
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(stdout(&o)).unwrap()
    };
    let a = eval(&student);
    let b = eval(&student);
    assert_eq!(a, b, "evaluation is not reproducible");
    assert_eq!(
        fs::read(&student).unwrap(),
        before,
        "evaluate modified the checkpoint"
    );
    let doc: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(doc["role"], "student");
    assert!(doc["in_domain"]["rmse"].as_f64().unwrap().is_finite());
}

#[test]
fn seed_override_changes_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let a = fs::read(train(dir.path(), &["--seed", "1"])).unwrap();
    let b = fs::read(train(dir.path(), &["--seed", "2"])).unwrap();
    let c = fs::read(train(dir.path(), &["--seed", "1"])).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn corrupted_checkpoint_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let teacher = train(dir.path(), &[]);
    let text = fs::read_to_string(&teacher).unwrap();
    let mut doc: Value = serde_json::from_str(&text).unwrap();
    let w = doc["weights"][0][0][0].as_f64().unwrap();
    doc["weights"][0][0][0] = serde_json::json!(w + 0.5);
    let bad = dir.path().join("tampered.ckpt.json");
    fs::write(&bad, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let o = kdpinn(&with(
        "evaluate",
        out,
        &["--checkpoint", bad.to_str().unwrap()],
    ));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn distill_refuses_problem_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = train(dir.path(), &[]);
    let o = kdpinn(&[
        "distill",
        "-q",
        "--preset",
        "burgers_desk",
        "--teacher",
        teacher.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("burgers"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_3_with_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = kdpinn(&with(
        "train-teacher",
        dir.path().to_str().unwrap(),
        &["--set", "teacher_train.learning_rate=1e300"],
    ));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let run = fs::read_dir(dir.path())
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    assert!(run.join("teacher.partial.ckpt.json").exists());
    assert!(run.join("teacher_history.partial.csv").exists());
}

use std::path::Path;
use std::process::{Command, Output};

fn blendcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blendcap")).args(args).env("T2B_LOG", "warn").output().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = blendcap(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn count_with_ext(dir: &Path, ext: &str) -> usize {
    std::fs::read_dir(dir).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext)).count()
}

fn small_oracle_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("oracle.json");
    std::fs::write(&cfg, r#"{"resolution": 300, "size": 32, "views": 4, "frames": 4}"#).unwrap();
    cfg
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(blendcap(&[]).status.code(), Some(2));
    assert_eq!(blendcap(&["synth"]).status.code(), Some(2));
    assert_eq!(blendcap(&["fit", "--grid", "/nonexistent", "--out", "/tmp/x"]).status.code(), Some(2));
}

#[test]
fn bad_values_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(blendcap(&["synth", "--out", p(&out), "--script", "wobble"]).status.code(), Some(2));
    assert_eq!(blendcap(&["synth", "--out", p(&out), "--preset", "teapot"]).status.code(), Some(2));
    assert_eq!(blendcap(&["synth", "--out", p(&out), "--frames", "0"]).status.code(), Some(2));
}

#[test]
fn synth_writes_one_image_per_cell_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_oracle_config(dir.path());
    let out = dir.path().join("grid");
    run_ok(&["synth", "--config", p(&cfg), "--out", p(&out), "--views", "3", "--frames", "2", "--script", "yaw:10"]);
    // Frames and masks for 3 × 2 cells plus the front render.
    assert_eq!(count_with_ext(&out, "png"), 2 * 3 * 2 + 1);
    assert_eq!(count_with_ext(&out.join("gt"), "ply"), 2);
    let snap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(snap["views"], 3);
    assert_eq!(snap["frames"], 2);
    assert_eq!(snap["size"], 32);
    for f in
        ["character.ply", "cameras.json", "grid.json", "landmarks.json", "front_camera.json", "source_landmarks.csv"]
    {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn end_to_end_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_oracle_config(d);
    let grid = d.join("grid");
    run_ok(&["synth", "--config", p(&cfg), "--out", p(&grid), "--script", "random:3"]);

    let fit = d.join("fit");
    run_ok(&["--threads", "1", "fit", "--grid", p(&grid), "--out", p(&fit), "--iters", "8"]);
    for f in ["field.bin", "canonical.ply", "trace.csv", "config.json"] {
        assert!(fit.join(f).exists(), "{f} missing");
    }
    assert_eq!(count_with_ext(&fit.join("meshes"), "ply"), 4);

    let ext = d.join("ext");
    run_ok(&["extract", "--fit", p(&fit), "--out", p(&ext)]);
    for t in 0..4 {
        let name = format!("frame_{t:03}.ply");
        assert_eq!(std::fs::read(ext.join(&name)).unwrap(), std::fs::read(fit.join("meshes").join(&name)).unwrap());
    }

    let ev = d.join("eval");
    run_ok(&["eval", "--grid", p(&grid), "--fit", p(&fit), "--out", p(&ev)]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ev.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["frames"], 4);
    assert!(summary["mean_psnr"].as_f64().unwrap() > 0.0);
    assert_eq!(std::fs::read_to_string(ev.join("psnr.csv")).unwrap().lines().count(), 1 + 4 * 4);

    let model = d.join("model");
    let gt = grid.join("gt");
    run_ok(&[
        "build-model",
        "--meshes",
        p(&gt),
        "--components",
        "3",
        "--landmarks",
        p(&grid.join("landmarks.json")),
        "--out",
        p(&model),
    ]);
    let model_file = model.join("model.bin");

    let cap = d.join("cap");
    let capture = gt.join("frame_002.ply");
    run_ok(&[
        "fit-capture",
        "--model",
        p(&model_file),
        "--capture",
        p(&capture),
        "--image",
        p(&grid.join("front.png")),
        "--camera",
        p(&grid.join("front_camera.json")),
        "--out",
        p(&cap),
    ]);
    let coeffs: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cap.join("coeffs.json")).unwrap()).unwrap();
    assert_eq!(coeffs["coeffs"].as_array().unwrap().len(), 3);

    let rt = d.join("rt");
    run_ok(&[
        "retarget",
        "--model",
        p(&model_file),
        "--source",
        p(&grid.join("source_landmarks.csv")),
        "--camera",
        p(&grid.join("front_camera.json")),
        "--out",
        p(&rt),
    ]);
    assert_eq!(std::fs::read_to_string(rt.join("coeffs.csv")).unwrap().lines().count(), 1 + 4);

    let viewer = d.join("viewer");
    run_ok(&[
        "export-viewer",
        "--model",
        p(&model_file),
        "--components",
        "2",
        "--trajectory",
        p(&rt.join("coeffs.csv")),
        "--out",
        p(&viewer),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(viewer.join("model_viewer.json")).unwrap()).unwrap();
    assert_eq!(doc["components"], 2);
    assert_eq!(doc["golden"].as_array().unwrap().len(), 10);
    let traj = std::fs::read_to_string(viewer.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "frame,c0,c1");
}

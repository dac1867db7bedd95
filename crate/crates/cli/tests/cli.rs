use std::path::Path;
use std::process::{Command, Output};

fn stitchstab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stitchstab")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = stitchstab(args, dir);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth_clip(dir: &Path) {
    ok(&["synth", "--output", "clip.y4m", "--frames", "24", "--width", "160", "--height", "96", "--seed", "5", "--sidecar", "gt.jsonl"], dir);
}

fn y4m_dims(path: &Path) -> (usize, usize) {
    let data = std::fs::read(path).unwrap();
    let header = String::from_utf8_lossy(&data[..data.iter().position(|b| *b == b'\n').unwrap()]).to_string();
    let field = |tag: char| header.split(' ').find_map(|t| t.strip_prefix(tag)).unwrap().parse().unwrap();
    (field('W'), field('H'))
}

#[test]
fn synth_writes_frames_ground_truth_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    synth_clip(dir.path());
    let gt = std::fs::read_to_string(dir.path().join("clip.gt.txt")).unwrap();
    assert_eq!(gt.lines().count(), 24);
    assert!(gt.lines().all(|l| l.split_whitespace().count() == 3));
    let sc = std::fs::read_to_string(dir.path().join("gt.jsonl")).unwrap();
    assert_eq!(sc.lines().count(), 24);
    assert_eq!(y4m_dims(&dir.path().join("clip.y4m")), (160, 96));
}

#[test]
fn hyperlapse_prints_the_final_cost() {
    let dir = tempfile::tempdir().unwrap();
    synth_clip(dir.path());
    let out = ok(&["hyperlapse", "--input", "clip.y4m", "--sidecar", "gt.jsonl", "--skip", "4", "--preset", "lite", "--report", "h.json"], dir.path());
    let cost: f64 = out.trim().parse().expect("stdout is the cost");
    assert!(cost.is_finite() && cost >= 0.0);
    let report = std::fs::read_to_string(dir.path().join("h.json")).unwrap();
    assert!(report.contains("\"final_cost\""));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    synth_clip(dir.path());
    std::fs::write(dir.path().join("cfg.toml"), "[run.filter]\ncrop_ratio = 0.8\n").unwrap();
    ok(&["stabilize", "--input", "clip.y4m", "--config", "cfg.toml", "--output", "a.y4m"], dir.path());
    assert_eq!(y4m_dims(&dir.path().join("a.y4m")), (128, 77));
    ok(&["stabilize", "--input", "clip.y4m", "--config", "cfg.toml", "--crop-ratio", "0.75", "--output", "b.y4m"], dir.path());
    assert_eq!(y4m_dims(&dir.path().join("b.y4m")), (120, 72));
    ok(&["stabilize", "--input", "clip.y4m", "--output", "c.y4m"], dir.path());
    assert_eq!(y4m_dims(&dir.path().join("c.y4m")), (144, 86));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth_clip(dir.path());
    for name in ["1", "2"] {
        ok(&["stabilize", "--input", "clip.y4m", "--output", &format!("{name}.y4m"), "--report", &format!("{name}.json")], dir.path());
    }
    ok(&["stabilize", "--input", "clip.y4m", "--output", "3.y4m", "--report", "3.json", "--sequential"], dir.path());
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("1.y4m"), read("2.y4m"));
    assert_eq!(read("1.json"), read("2.json"));
    assert_eq!(read("1.y4m"), read("3.y4m"));
    assert_eq!(read("1.json"), read("3.json"));
}

#[test]
fn eval_reports_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    synth_clip(dir.path());
    let out = ok(&["eval", "--input", "clip.y4m", "--sidecar", "gt.jsonl", "--skip", "4", "--beam", "16", "--horizon", "8"], dir.path());
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["frames"], 24);
    assert!(report["conventional"]["n_f"].as_u64().unwrap() <= 24);
    assert!(report["stitching"]["n_f"].as_u64().unwrap() <= report["conventional"]["n_f"].as_u64().unwrap());
    assert_eq!(report["hyperlapse"].as_array().unwrap().len(), 2);
}

#[test]
fn analyze_then_stabilize_from_the_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    synth_clip(dir.path());
    let out = ok(&["analyze", "--input", "clip.y4m", "--sidecar", "est.jsonl"], dir.path());
    assert!(out.starts_with("23 transitions"));
    let a = ok(&["stabilize", "--input", "clip.y4m", "--sidecar", "est.jsonl", "--no-stitch"], dir.path());
    let b = ok(&["stabilize", "--input", "clip.y4m", "--no-stitch"], dir.path());
    assert_eq!(a, b);
}

#[test]
fn bad_invocations_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = stitchstab(&["stabilize"], dir.path());
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--input"));
    let bad_preset = stitchstab(&["hyperlapse", "--input", "x.y4m", "--preset", "huge"], dir.path());
    assert!(!bad_preset.status.success());
    std::fs::write(dir.path().join("bad.toml"), "[run]\ncrop_ratio = 0.8\n").unwrap();
    let bad_cfg = stitchstab(&["stabilize", "--input", "x.y4m", "--config", "bad.toml"], dir.path());
    assert!(!bad_cfg.status.success());
}

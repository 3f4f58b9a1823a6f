use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use lpsift::synth::{crop, fragment_grid, noise_image, synthetic_photo};

fn lpsift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpsift")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Scene {
    dir: TempDir,
}

impl Scene {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let src = synthetic_photo(400, 480, 12);
        crop(&src, 0, 0, 360, 360).unwrap().save_png(dir.path().join("a.png")).unwrap();
        crop(&src, 40, 100, 360, 360).unwrap().save_png(dir.path().join("b.png")).unwrap();
        noise_image(200, 200, 1).save_png(dir.path().join("n1.png")).unwrap();
        noise_image(200, 200, 2).save_png(dir.path().join("n2.png")).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn json_lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn detect_dumps_feature_records() {
    let sc = Scene::new();
    let out = lpsift(&["detect", s(&sc.path("a.png"))]);
    assert_eq!(code(&out), 0);
    let recs = json_lines(&String::from_utf8(out.stdout).unwrap());
    assert!(!recs.is_empty());
    for r in &recs {
        let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["col", "image_id", "polarity", "row", "scale", "value"]);
        assert_eq!(r["image_id"], "a.png");
    }

    let file = sc.path("d.jsonl");
    let out = lpsift(&["detect", "--descriptors", s(&sc.path("a.png")), "-o", s(&file)]);
    assert_eq!(code(&out), 0);
    let recs = json_lines(&std::fs::read_to_string(file).unwrap());
    assert_eq!(recs[0]["descriptor"].as_array().unwrap().len(), 128);
}

#[test]
fn match_dumps_pairs() {
    let sc = Scene::new();
    let out = lpsift(&["match", s(&sc.path("a.png")), s(&sc.path("b.png"))]);
    assert_eq!(code(&out), 0);
    let recs = json_lines(&String::from_utf8(out.stdout).unwrap());
    assert!(recs.len() > 10);
    let exact = recs
        .iter()
        .filter(|r| r["p1"][0].as_f64().unwrap() - r["p2"][0].as_f64().unwrap() == 40.0 && r["p1"][1].as_f64().unwrap() - r["p2"][1].as_f64().unwrap() == 100.0)
        .count();
    assert!(exact * 2 > recs.len());
    assert!(recs.iter().all(|r| r["delta"].as_f64().unwrap() < 0.3));
}

#[test]
fn stitch_writes_image_and_report() {
    let sc = Scene::new();
    let (png, report) = (sc.path("s.png"), sc.path("r.json"));
    let out = lpsift(&["stitch", s(&sc.path("a.png")), s(&sc.path("b.png")), "-o", s(&png), "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let img = image::open(&png).unwrap();
    assert!(img.width().abs_diff(460) <= 1 && img.height().abs_diff(400) <= 1, "{}x{}", img.width(), img.height());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["success"], true);
    for k in ["detection", "description", "matching", "stitching"] {
        assert!(r["timings"][k].as_f64().unwrap() >= 0.0);
    }
    assert!((r["registration"]["t_x"].as_f64().unwrap() - 100.0).abs() < 1.0);
    assert!((r["registration"]["t_y"].as_f64().unwrap() - 40.0).abs() < 1.0);
}

#[test]
fn stitch_failure_exits_2_with_report() {
    let sc = Scene::new();
    let (png, report) = (sc.path("s.png"), sc.path("r.json"));
    let out = lpsift(&["stitch", s(&sc.path("n1.png")), s(&sc.path("n2.png")), "-o", s(&png), "--report", s(&report)]);
    assert_eq!(code(&out), 2);
    assert!(!png.exists());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["success"], false);
    assert_eq!(r["registration"]["accepted"], false);
    assert_eq!(r["registration"]["inliers"], 0);
}

#[test]
fn self_stitch_reports_identity() {
    let sc = Scene::new();
    let report = sc.path("r.json");
    let a = s(&sc.path("a.png")).to_string();
    let out = lpsift(&["stitch", &a, &a, "-o", s(&sc.path("s.png")), "--report", s(&report)]);
    assert_eq!(code(&out), 0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    for k in ["theta_deg", "t_x", "t_y"] {
        assert!(r["registration"][k].as_f64().unwrap().abs() < 1e-9);
    }
}

#[test]
fn mosaic_directory_and_orphan() {
    let dir = tempfile::tempdir().unwrap();
    let src = synthetic_photo(500, 700, 3);
    for (k, f) in fragment_grid(&src, 2, 2, 0.3, 4).unwrap().iter().enumerate() {
        f.image.save_png(dir.path().join(format!("f{k}.png"))).unwrap();
    }
    let (png, plan) = (dir.path().join("out/m.png"), dir.path().join("out/plan.json"));
    std::fs::create_dir(dir.path().join("out")).unwrap();
    let out = lpsift(&["mosaic", s(dir.path()), "-o", s(&png), "--plan", s(&plan)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let p: Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    assert!(!p["rounds"].as_array().unwrap().is_empty());
    assert!(p["final_unmatched"].as_array().unwrap().is_empty());
    assert_eq!(p["pairs"].as_array().unwrap().len(), 6);
    assert!(p["total_time"].as_f64().unwrap() > 0.0);

    noise_image(300, 400, 5).save_png(dir.path().join("orphan.png")).unwrap();
    let out = lpsift(&["mosaic", s(dir.path()), "-o", s(&png), "--report", s(&plan)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("orphan.png"));
    let p: Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    assert_eq!(p["final_unmatched"].as_array().unwrap().len(), 1);
}

#[test]
fn config_errors_exit_4() {
    let sc = Scene::new();
    let a = s(&sc.path("a.png")).to_string();
    assert_eq!(code(&lpsift(&["--delta-s", "-1", "detect", &a])), 4);
    assert_eq!(code(&lpsift(&["detect", &a, "--window-min", "64", "--window-max", "32"])), 4);
    assert_eq!(code(&lpsift(&["detect", &a, "--beta0", "0.9"])), 4);
    assert_eq!(code(&lpsift(&["detect", &a, "--unknown-flag"])), 4);

    let cfg = sc.path("bad.conf");
    std::fs::write(&cfg, "window_min = 32\nbogus = 1\n").unwrap();
    assert_eq!(code(&lpsift(&["detect", &a, "--config", s(&cfg)])), 4);

    let spec = sc.path("empty.bench");
    std::fs::write(&spec, "# nothing here\n").unwrap();
    assert_eq!(code(&lpsift(&["bench", s(&spec), "-o", s(&sc.path("b.csv"))])), 4);
}

#[test]
fn flags_override_config_file() {
    let sc = Scene::new();
    let a = s(&sc.path("a.png")).to_string();
    let cfg = sc.path("c.conf");
    std::fs::write(&cfg, "window_min = 16\nwindow_max = 16\n").unwrap();
    let count = |args: &[&str]| json_lines(&String::from_utf8(lpsift(args).stdout).unwrap()).len();
    let from_file = count(&["detect", &a, "--config", s(&cfg)]);
    let overridden = count(&["detect", &a, "--config", s(&cfg), "--window-min", "64", "--window-max", "64"]);
    assert!(from_file > 4 * overridden, "{from_file} vs {overridden}");
}

#[test]
fn single_thread_output_is_identical() {
    let sc = Scene::new();
    let (a, b) = (s(&sc.path("a.png")).to_string(), s(&sc.path("b.png")).to_string());
    let one = lpsift(&["--threads", "1", "match", &a, &b]);
    let many = lpsift(&["--threads", "3", "match", &a, &b]);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn bench_writes_csv_and_table() {
    let sc = Scene::new();
    let spec = sc.path("small.bench");
    std::fs::write(&spec, "sizes_mpx = 0.05\ntransforms = translation, rotation\nrepetitions = 2\nwindow_min = 16\nwindow_max = 32\n").unwrap();
    let csv = sc.path("out.csv");
    let out = lpsift(&["bench", s(&spec), "-o", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("translation") && table.contains("rotation"));
    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    assert!(rdr.headers().unwrap().iter().any(|h| h == "t_detection"));
    assert_eq!(rdr.records().count(), 4);
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use surfkit::dtm::BinaryMask;
use surfkit::svf::{write_volume, Dtype, SvfVolume};
use surfkit::volume::{Grid3, LabelVolume, Normalization, ProbVolume, ScalarField};

fn surfkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surfkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn cube_labels(side: usize, lo: usize, hi: usize) -> LabelVolume {
    let grid = Grid3::new([side; 3], [1.0, 1.5, 2.0]).unwrap();
    let labels = (0..grid.len())
        .map(|i| u32::from(grid.coords(i).iter().all(|&c| (lo..hi).contains(&c))))
        .collect();
    LabelVolume::new(grid, labels, 2).unwrap()
}

fn write_labels(path: &Path, labels: &LabelVolume) {
    write_volume(path, &SvfVolume::from_labels(labels).unwrap()).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn version_reports_semver() {
    let out = surfkit(&["version"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn usage_errors_exit_with_one() {
    let out = surfkit(&[
        "loss", "--kind", "gsl", "--pred", "p.svf", "--truth", "t.svf",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--dtm"), "{}", stderr(&out));
    assert!(out.stdout.is_empty());

    assert_eq!(surfkit(&["version", "--bogus"]).status.code(), Some(1));
    assert_eq!(surfkit(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        surfkit(&["schedule", "--kind", "step", "--epochs", "10"])
            .status
            .code(),
        Some(1)
    );
    let out = surfkit(&[
        "loss",
        "--kind",
        "composite",
        "--pred",
        "p",
        "--truth",
        "t",
        "--dtm",
        "d",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--alpha"));
    assert_eq!(surfkit(&["metrics", "--help"]).status.code(), Some(0));
}

#[test]
fn missing_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.svf");
    let out = surfkit(&["metrics", "--pred", p(&missing), "--truth", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_masks_have_perfect_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.svf");
    let b = dir.path().join("b.svf");
    let labels = cube_labels(8, 2, 6);
    write_labels(&a, &labels);
    write_labels(&b, &labels);
    let out = surfkit(&["metrics", "--pred", p(&a), "--truth", p(&b)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = &json(&out)[0];
    assert_eq!(report["class"], 1);
    assert_eq!(report["dice"], 1.0);
    assert_eq!(report["hd95"], 0.0);
    assert_eq!(report["asd"], 0.0);
    assert!(report["undefined_reason"].is_null());
}

#[test]
fn empty_prediction_reports_undefined_distances() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.svf");
    let b = dir.path().join("b.svf");
    write_labels(&a, &cube_labels(6, 0, 0));
    write_labels(&b, &cube_labels(6, 1, 4));
    let out = surfkit(&[
        "metrics",
        "--pred",
        p(&a),
        "--truth",
        p(&b),
        "--classes",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = &json(&out)[0];
    assert!(report["hd95"].is_null());
    assert!(report["undefined_reason"].is_string());
}

#[test]
fn dtm_then_gsl_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.svf");
    let masks = dir.path().join("masks.svf");
    let dtm = dir.path().join("dtm.svf");
    let pred = dir.path().join("pred.svf");
    let labels = cube_labels(8, 2, 6);
    write_labels(&truth, &labels);
    let stack: Vec<BinaryMask> = (0..2).map(|k| labels.mask(k)).collect();
    write_volume(&masks, &SvfVolume::from_masks(&stack).unwrap()).unwrap();

    let out = surfkit(&["dtm", "--in", p(&masks), "--out", p(&dtm), "--dtype", "f64"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(json(&out)["channels"], 2);

    let perfect = surfkit::volume::one_hot(&labels).unwrap();
    write_volume(&pred, &SvfVolume::from_prob(&perfect, Dtype::F64).unwrap()).unwrap();
    let out = surfkit(&[
        "loss",
        "--kind",
        "gsl",
        "--pred",
        p(&pred),
        "--truth",
        p(&truth),
        "--dtm",
        p(&dtm),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(json(&out)["value"], 0.0);

    let out = surfkit(&[
        "loss",
        "--kind",
        "composite",
        "--alpha",
        "0.5",
        "--region",
        "dice",
        "--boundary",
        "bl",
        "--pred",
        p(&pred),
        "--truth",
        p(&truth),
        "--dtm",
        p(&dtm),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(json(&out)["per_class_terms"].as_array().unwrap().len(), 2);
}

#[test]
fn all_zero_distance_maps_are_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid3::isotropic([3, 3, 3]).unwrap();
    let truth = dir.path().join("truth.svf");
    let pred = dir.path().join("pred.svf");
    let dtm = dir.path().join("dtm.svf");
    write_labels(&truth, &LabelVolume::new(grid, vec![1; 27], 2).unwrap());
    let half = ProbVolume::new(grid, 2, vec![0.5; 54], Normalization::Simplex).unwrap();
    write_volume(&pred, &SvfVolume::from_prob(&half, Dtype::F32).unwrap()).unwrap();
    let zeros = [ScalarField::zeros(grid), ScalarField::zeros(grid)];
    write_volume(&dtm, &SvfVolume::from_fields(&zeros, Dtype::F32).unwrap()).unwrap();
    let out = surfkit(&[
        "loss",
        "--kind",
        "gsl",
        "--pred",
        p(&pred),
        "--truth",
        p(&truth),
        "--dtm",
        p(&dtm),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn weights_and_schedule_print_json() {
    let out = surfkit(&["weights", "--counts", "100,300"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["weights"], serde_json::json!([0.75, 0.25]));

    let out = surfkit(&[
        "schedule",
        "--kind",
        "step",
        "--epochs",
        "10",
        "--step-length",
        "5",
        "--table",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let table = json(&out);
    assert_eq!(table.as_array().unwrap().len(), 11);
    assert_eq!(table[0], serde_json::json!([0, 1.0]));
    assert_eq!(table[10], serde_json::json!([10, 0.0]));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["grad-check", "--kind", "composite", "--alpha", "0.3"];
    let first = surfkit(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert_eq!(json(&first)["seed"], 42);
    assert_eq!(first.stdout, surfkit(&args).stdout);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"scene":{"grid":{"shape":[8,8,8]},"spheres":[{"center":[4,4,4],"radius":2.5,"class":1}],"num_classes":2},
            "coarse_factor":2,"loss":{"region":"dice-ce","boundary":"gsl"},"epochs":6}"#,
    )
    .unwrap();
    let a = surfkit(&["train-toy", "--config", p(&cfg)]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(json(&a)["epochs"].as_array().unwrap().len(), 6);
    assert_eq!(
        a.stdout,
        surfkit(&["train-toy", "--config", p(&cfg)]).stdout
    );

    let report = dir.path().join("report.json");
    let out = surfkit(&["train-toy", "--config", p(&cfg), "--out", p(&report)]);
    assert_eq!(out.status.code(), Some(0));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved, json(&a));
}

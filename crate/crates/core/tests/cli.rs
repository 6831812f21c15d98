use std::path::Path;
use std::process::{Command, Output};

use rspose::bench::{rotation_error, generate_trial, TrialSetup};
use rspose::io::CorrespondenceFile;
use rspose::Mat3;

fn rspose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rspose")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn field<'a>(stdout: &'a str, key: &str) -> Vec<f64> {
    let line = stdout.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {stdout}"));
    line.split_whitespace().skip(1).filter_map(|v| v.parse().ok()).collect()
}

#[test]
fn export_then_estimate_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.txt");
    let out = rspose(&[
        "synth-export", "--motion", "forward", "--pixel-noise", "0.3", "--outliers", "0.1", "--seed", "21",
        "--out", path_str(&scene),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // the exported file matches the library's own trial generation
    let data = generate_trial(&TrialSetup {
        pixel_sigma: 0.3,
        outlier_fraction: 0.1,
        seed: 21,
        ..TrialSetup::default()
    });
    let file = CorrespondenceFile::read(&scene).unwrap();
    assert_eq!(file.pixels.len(), data.pixels.len());

    for algo in ["uniform9", "uniform11", "angular5"] {
        let out = rspose(&["estimate", "--in", path_str(&scene), "--algo", algo, "--seed", "1"]);
        assert!(out.status.success(), "{algo}: {}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        let mut rows = Vec::new();
        for i in 0..3 {
            rows.extend(field(&text, &format!("rotation_row{i}")));
        }
        let r = Mat3::from_row_slice(&rows);
        let err = rotation_error(&data.ground_truth().rotation.to_matrix(), &r).unwrap();
        assert!(err < 0.5, "{algo}: {err}");
        assert!(text.contains("energy"), "{text}");
    }
}

#[test]
fn sweep_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let out = rspose(&[
        "synth-sweep", "--sweep", "pixnoise", "--trials", "2", "--steps", "2", "--points", "60", "--out",
        path_str(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), rspose::bench::CSV_HEADER);
    assert_eq!(lines.count(), 3 * 2 * 2);

    let out = rspose(&["summarize", "--in", path_str(&csv), "--algos", "uniform9"]);
    assert!(out.status.success());
    let summary = String::from_utf8(out.stdout).unwrap();
    assert_eq!(summary.lines().filter(|l| l.starts_with("uniform9")).count(), 2);
    assert!(!summary.contains("gs5"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.txt");
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(code(rspose(&["estimate", "--in", path_str(&missing), "--algo", "uniform9"])), 1);

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "META focal 640 cx 960 cy 540 readout 6e-5 height 1080\nIMU1 0 9.81 0 0 0 0\nCORR 1 2 3 4\n")
        .unwrap();
    let out = rspose(&["estimate", "--in", path_str(&bad), "--algo", "uniform9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let few = dir.path().join("few.txt");
    std::fs::write(
        &few,
        "META focal 640 cx 960 cy 540 readout 6e-5 height 1080\n\
         IMU1 0 9.81 0 0 0 0\nIMU2 0 9.81 0 0 0 0\n\
         CORR 100 100 101 101\nCORR 200 300 202 301\n",
    )
    .unwrap();
    assert_eq!(code(rspose(&["estimate", "--in", path_str(&few), "--algo", "uniform11"])), 3);

    assert_eq!(code(rspose(&["estimate", "--in", path_str(&few), "--algo", "nine"])), 7);
    let csv = dir.path().join("x.csv");
    assert_eq!(code(rspose(&["synth-sweep", "--sweep", "speed", "--out", path_str(&csv)])), 7);
    assert_eq!(code(rspose(&["synth-export", "--outliers", "1.5", "--out", path_str(&csv)])), 7);
    // clap rejects unknown flags itself
    assert_eq!(code(rspose(&["estimate", "--bogus"])), 2);
}

//! File and exit-code contracts of the `mblingam` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mblingam::simulate::{generate_dataset, two_var_model, NoiseModel};

fn mblingam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mblingam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_data(path: &Path, n: usize) {
    let mut rows = two_var_model(0.0).to_rows();
    rows[1][0] = 0.7;
    let model = mblingam::ConnectionMatrix::from_rows(&rows).unwrap();
    let data = generate_dataset(&model, n, &NoiseModel::default(), 21).unwrap();
    let mut text = String::from("cause,effect\n");
    for col in data.values().column_iter() {
        text.push_str(&format!("{},{}\n", col[0], col[1]));
    }
    fs::write(path, text).unwrap();
}

const QUICK: [&str; 6] = ["--replicates", "20", "--num-scales", "4", "--restarts", "2"];

fn analyze(input: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "analyze",
        input.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--seed",
        "5",
    ];
    args.extend_from_slice(&QUICK);
    args.extend_from_slice(extra);
    mblingam(&args)
}

#[test]
fn analyze_writes_counts_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_data(&input, 300);
    let out = dir.path().join("out");
    let res = analyze(&input, &out, &[]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for f in ["counts.csv", "counts.json", "report.csv", "report.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("effect,cause,sign,p_bp,p_mb,model_kind,aic")
    );
    assert_eq!(lines.count(), 4);
    assert!(report.contains("effect,cause,+,"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["hypotheses"].as_array().unwrap().len(), 4);
}

#[test]
fn fit_reproduces_the_analyze_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_data(&input, 300);
    let a = dir.path().join("a");
    assert!(analyze(&input, &a, &[]).status.success());
    let b = dir.path().join("b");
    for counts in ["counts.csv", "counts.json"] {
        let res = mblingam(&[
            "fit",
            a.join(counts).to_str().unwrap(),
            "-o",
            b.to_str().unwrap(),
        ]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        assert_eq!(
            fs::read(a.join("report.csv")).unwrap(),
            fs::read(b.join("report.csv")).unwrap()
        );
        assert_eq!(
            fs::read(a.join("report.json")).unwrap(),
            fs::read(b.join("report.json")).unwrap()
        );
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_data(&input, 300);
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    assert!(analyze(&input, &one, &["--threads", "1"]).status.success());
    assert!(analyze(&input, &four, &["--threads", "4"]).status.success());
    for f in ["counts.csv", "counts.json", "report.csv", "report.json"] {
        assert_eq!(
            fs::read(one.join(f)).unwrap(),
            fs::read(four.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn format_selects_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_data(&input, 300);
    let out = dir.path().join("out");
    assert!(analyze(&input, &out, &["--format", "json"])
        .status
        .success());
    assert!(out.join("report.json").exists() && out.join("counts.json").exists());
    assert!(!out.join("report.csv").exists() && !out.join("counts.csv").exists());
}

#[test]
fn malformed_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,oops\n4,5\n").unwrap();
    let res = analyze(&bad, dir.path(), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));

    let missing = dir.path().join("missing.csv");
    assert_eq!(analyze(&missing, dir.path(), &[]).status.code(), Some(2));
    assert_eq!(mblingam(&["analyze"]).status.code(), Some(2));
    assert_eq!(
        mblingam(&["fit", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let input = dir.path().join("data.csv");
    write_data(&input, 300);
    assert_eq!(
        analyze(
            &input,
            dir.path(),
            &["--scales-min", "4", "--scales-max", "2"]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn presets_are_listed() {
    let res = mblingam(&["simulate", "--list-presets"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let names: Vec<&str> = text
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(names.len(), 10);
    for model in ["2var-b0", "2var-b001", "2var-b01", "6var-b0", "6var-b05"] {
        assert!(names.contains(&format!("paper-{model}").as_str()));
        assert!(names.contains(&format!("desk-{model}").as_str()));
    }
}

#[test]
fn simulate_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.json");
    fs::write(
        &config,
        r#"{
            "name": "tiny",
            "model": [[0, 0], [0.5, 0]],
            "n": 200,
            "datasets": 3,
            "scales_min": 0.5,
            "scales_max": 2.0,
            "num_scales": 4,
            "replicates": 20,
            "ica": { "restarts": 2 },
            "h": 3,
            "alpha_grid": [0.05, 0.5],
            "master_seed": 1,
            "focus": "x2<-x1:+"
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let res = mblingam(&[
        "simulate",
        config.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let pvalues = fs::read_to_string(out.join("pvalues.csv")).unwrap();
    assert_eq!(pvalues.lines().next(), Some("dataset,hypothesis,p_bp,p_mb"));
    assert_eq!(pvalues.lines().count(), 4);
    let rejection = fs::read_to_string(out.join("rejection.csv")).unwrap();
    assert_eq!(rejection.lines().next(), Some("alpha,prob_bp,prob_mb"));
    assert_eq!(rejection.lines().count(), 3);
    assert!(out.join("calibration.json").exists());

    fs::write(&config, r#"{"name": "x", "bogus_field": 1}"#).unwrap();
    let res = mblingam(&[
        "simulate",
        config.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

fn rcindex(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcindex"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = rcindex(
            dir,
            &["--quiet", "synth", "--seed", "7", "--countries", "172", "--years", "9"],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
    for f in ["synth.csv", "default_dictionary.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn efa_with_as_many_factors_as_variables_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(rcindex(dir.path(), &["--quiet", "synth", "--seed", "3"])
        .status
        .success());
    let data = dir.path().join("synth.csv");
    let dict = dir.path().join("default_dictionary.json");
    let out = rcindex(
        dir.path(),
        &[
            "--quiet",
            "ingest",
            "--data",
            data.to_str().unwrap(),
            "--dict",
            dict.to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = rcindex(dir.path(), &["efa", "--factors", "14"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "validation");
}

#[test]
fn exit_codes_by_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    // later stage without its inputs
    let out = rcindex(dir.path(), &["rank"]);
    assert_eq!(out.status.code(), Some(1));
    // unreadable input file
    let out = rcindex(
        dir.path(),
        &[
            "ingest",
            "--data",
            "/nonexistent/x.csv",
            "--dict",
            "/nonexistent/d.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "io");
    // unknown subcommand
    let out = rcindex(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    // regression without a seed
    let out = rcindex(dir.path(), &["regress"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("flat.csv");
    let dict = dir.path().join("dict.json");
    // the second variable is constant, so the correlation matrix is undefined
    let mut csv = String::from("country_code,country_name,region,year,A,B,C\n");
    for i in 0..10 {
        csv.push_str(&format!("K{i},k{i},R,2020,{},{},{}\n", i, 1.0, (i * i) % 7));
    }
    std::fs::write(&data, csv).unwrap();
    std::fs::write(
        &dict,
        r#"[{"name":"A","source_column":"A","transform":"none","missing_policy":"country_mean","group_hint":"capacity"},
            {"name":"B","source_column":"B","transform":"none","missing_policy":"country_mean","group_hint":"governance"},
            {"name":"C","source_column":"C","transform":"none","missing_policy":"country_mean","group_hint":"governance"}]"#,
    )
    .unwrap();
    let out = rcindex(
        dir.path(),
        &[
            "--quiet",
            "ingest",
            "--data",
            data.to_str().unwrap(),
            "--dict",
            dict.to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = rcindex(dir.path(), &["adequacy"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "numerical");
}

#[test]
fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    assert!(rcindex(dir.path(), &["--quiet", "synth", "--seed", "7"])
        .status
        .success());
    let data = dir.path().join("synth.csv");
    let dict = dir.path().join("default_dictionary.json");
    let out = rcindex(
        dir.path(),
        &[
            "pipeline",
            "--data",
            data.to_str().unwrap(),
            "--dict",
            dict.to_str().unwrap(),
            "--factors",
            "2",
            "--seed",
            "7",
            "--chains",
            "2",
            "--iters",
            "300",
            "--warmup",
            "150",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["stages"].as_array().unwrap().len(), 9);
    for f in [
        "manifest.json",
        "adequacy/scree.svg",
        "rank/ranks_factor_scores.svg",
        "rank/ranks_summative.svg",
        "regress/posterior_cross.json",
        "regress/posterior_panel.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

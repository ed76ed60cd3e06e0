use std::fs;
use std::path::Path;

use rcindex::pipeline::{self, OutputFormat, PipelineConfig, Workspace};
use rcindex::{default_dictionary, generate_synthetic_panel, FactorSpec};

fn write_inputs(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let panel = generate_synthetic_panel(7, 172, 9, &FactorSpec::research_indicators()).unwrap();
    let data = dir.join("synth.csv");
    panel.write_csv(fs::File::create(&data).unwrap()).unwrap();
    let dict = dir.join("dictionary.json");
    fs::write(&dict, default_dictionary().to_json()).unwrap();
    (data, dict)
}

fn quick_config() -> PipelineConfig {
    PipelineConfig {
        chains: 2,
        iterations: 400,
        warmup: 200,
        ..PipelineConfig::new(7)
    }
}

#[test]
fn pipeline_writes_every_stage_and_is_reproducible() {
    let inputs = tempfile::tempdir().unwrap();
    let (data, dict) = write_inputs(inputs.path());
    let run = |format| {
        let out = tempfile::tempdir().unwrap();
        let ws = Workspace::new(out.path(), format);
        let manifest = pipeline::run_pipeline(&ws, &data, &dict, &quick_config(), vec!["pipeline".into()]).unwrap();
        for d in manifest.output_digests() {
            assert!(ws.path(&d.path).is_file(), "{}", d.path);
            if d.path.ends_with(".svg") {
                let text = fs::read_to_string(ws.path(&d.path)).unwrap();
                roxmltree::Document::parse(&text).unwrap();
            }
        }
        assert!(ws.path(pipeline::MANIFEST).is_file());
        (out, manifest)
    };
    let (_a, first) = run(OutputFormat::Csv);
    let (_b, second) = run(OutputFormat::Csv);
    assert_eq!(first.output_digests(), second.output_digests());
    let stages: Vec<&str> = first.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(
        stages,
        [
            "ingest",
            "describe",
            "adequacy",
            "efa",
            "reliability",
            "index",
            "rank",
            "regress",
            "regress"
        ]
    );

    let (_c, json) = run(OutputFormat::Json);
    assert!(json.output_digests().iter().any(|d| d.path == "efa/loadings.json"));
}

#[test]
fn stages_need_their_inputs() {
    let out = tempfile::tempdir().unwrap();
    let ws = Workspace::new(out.path(), OutputFormat::Csv);
    let err = pipeline::efa(&ws, 2).unwrap_err();
    assert_eq!(err.kind(), rcindex::ErrorKind::Validation);
    assert!(err.to_string().contains("missing stage output"));
}

#[test]
fn efa_rejects_as_many_factors_as_variables() {
    let inputs = tempfile::tempdir().unwrap();
    let (data, dict) = write_inputs(inputs.path());
    let out = tempfile::tempdir().unwrap();
    let ws = Workspace::new(out.path(), OutputFormat::Csv);
    pipeline::ingest(&ws, &data, &dict).unwrap();
    let err = pipeline::efa(&ws, 14).unwrap_err();
    assert_eq!(err.kind(), rcindex::ErrorKind::Validation);
    let ok = pipeline::efa(&ws, 2).unwrap();
    eprintln!("{}", serde_json::to_string_pretty(&ok.summary).unwrap());
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use rcindex::index::AggregationMethod;
use rcindex::pipeline::{
    self, OutputFormat, PipelineConfig, RegressSettings, RegressionModel, StageOutcome, Workspace,
};
use rcindex::{default_dictionary, generate_synthetic_panel, Error, ErrorKind, FactorSpec};

#[derive(Parser)]
#[command(
    name = "rcindex",
    version,
    about = "Build a national research capacity index from a country-year panel"
)]
struct Cli {
    /// Directory holding every stage's outputs.
    #[arg(long, global = true, default_value = "rcindex-out")]
    out_dir: PathBuf,
    /// Encoding for report tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Cross,
    Panel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Predictors {
    FactorScores,
    Summative,
}

#[derive(clap::Args)]
struct SamplerArgs {
    /// Seed for the sampler; required so runs are reproducible.
    #[arg(long)]
    seed: u64,
    /// Drop countries with fewer total publications than this.
    #[arg(long, default_value_t = 50.0)]
    threshold: f64,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Iterations per chain, warmup included.
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 1000)]
    warmup: usize,
    /// Also write the post-warmup draws as CSV.
    #[arg(long)]
    draws: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load, validate and impute the panel, then collapse it to country means.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dict: PathBuf,
    },
    /// Descriptive statistics and the correlation matrix.
    Describe,
    /// KMO sampling adequacy, Bartlett's test and the scree plot.
    Adequacy,
    /// Principal-axis factoring with varimax rotation.
    Efa {
        #[arg(long, default_value_t = 2)]
        factors: usize,
    },
    /// Alpha, standardized alpha and lambda-6 per factor item set.
    Reliability,
    /// Factor-score and summative indexes with their interaction.
    Index,
    /// Country rankings and rank plots.
    Rank,
    /// Hierarchical Bayesian regression of the outcome on the indexes.
    Regress {
        #[arg(long, value_enum, default_value_t = Model::Cross)]
        model: Model,
        /// Index used for the country-level model.
        #[arg(long, value_enum, default_value_t = Predictors::FactorScores)]
        predictors: Predictors,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Run every stage in order and write a manifest.
    Pipeline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, default_value_t = 2)]
        factors: usize,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Write a seeded synthetic panel and the default dictionary.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 172)]
        countries: usize,
        #[arg(long, default_value_t = 9)]
        years: usize,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 1,
        ErrorKind::Numerical => 2,
        ErrorKind::Io => 3,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Validation => "validation",
        ErrorKind::Numerical => "numerical",
        ErrorKind::Io => "io",
    }
}

fn fail(kind: ErrorKind, message: String) -> ExitCode {
    let err = json!({ "error": { "kind": kind_name(kind), "message": message } });
    eprintln!("{err}");
    ExitCode::from(exit_code(kind))
}

fn report(cli: &Cli, outcome: &StageOutcome) {
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if !cli.quiet {
        let doc = json!({
            "stage": outcome.stage,
            "outputs": outcome.outputs,
            "warnings": outcome.warnings,
            "summary": outcome.summary,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn regress_settings(model: RegressionModel, predictors: Predictors, s: &SamplerArgs) -> RegressSettings {
    RegressSettings {
        cross_predictors: match predictors {
            Predictors::FactorScores => AggregationMethod::FactorScores,
            Predictors::Summative => AggregationMethod::Summative,
        },
        threshold: s.threshold,
        chains: s.chains,
        iterations: s.iters,
        warmup: s.warmup,
        write_draws: s.draws,
        ..RegressSettings::new(model, s.seed)
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let ws = Workspace::new(&cli.out_dir, format);
    let outcome = match &cli.command {
        Command::Ingest { data, dict } => pipeline::ingest(&ws, data, dict)?,
        Command::Describe => pipeline::describe(&ws)?,
        Command::Adequacy => pipeline::adequacy(&ws)?,
        Command::Efa { factors } => pipeline::efa(&ws, *factors)?,
        Command::Reliability => pipeline::reliability(&ws)?,
        Command::Index => pipeline::index(&ws)?,
        Command::Rank => pipeline::rank(&ws)?,
        Command::Regress {
            model,
            predictors,
            sampler,
        } => {
            let model = match model {
                Model::Cross => RegressionModel::Cross,
                Model::Panel => RegressionModel::Panel,
            };
            pipeline::regress(&ws, &regress_settings(model, *predictors, sampler))?
        }
        Command::Pipeline {
            data,
            dict,
            factors,
            sampler,
        } => {
            let config = PipelineConfig {
                factors: *factors,
                seed: sampler.seed,
                threshold: sampler.threshold,
                chains: sampler.chains,
                iterations: sampler.iters,
                warmup: sampler.warmup,
                write_draws: sampler.draws,
            };
            let command: Vec<String> = std::env::args().collect();
            let manifest = pipeline::run_pipeline(&ws, data, dict, &config, command)?;
            for stage in &manifest.stages {
                for w in &stage.warnings {
                    eprintln!("warning: {}: {w}", stage.stage);
                }
            }
            if !cli.quiet {
                let doc = json!({
                    "stage": "pipeline",
                    "manifest": ws.path(pipeline::MANIFEST),
                    "stages": manifest.stages.iter().map(|s| json!({
                        "stage": s.stage,
                        "outputs": s.outputs.len(),
                        "seconds": s.wall_clock_seconds,
                    })).collect::<Vec<_>>(),
                });
                println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
            }
            return Ok(());
        }
        Command::Synth { seed, countries, years } => {
            let panel = generate_synthetic_panel(*seed, *countries, *years, &FactorSpec::research_indicators())?;
            let mut buf = Vec::new();
            panel.write_csv(&mut buf)?;
            let data = cli.out_dir.join("synth.csv");
            let dict = cli.out_dir.join("default_dictionary.json");
            write_file(&data, &buf)?;
            write_file(&dict, (default_dictionary().to_json() + "\n").as_bytes())?;
            let mut outcome = StageOutcome {
                stage: "synth",
                consumes: vec![],
                outputs: vec![data.display().to_string(), dict.display().to_string()],
                warnings: vec![],
                summary: json!({ "countries": countries, "years": years, "seed": seed }),
            };
            outcome.outputs.sort();
            outcome
        }
    };
    report(cli, &outcome);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(ErrorKind::Validation, e.to_string().trim_end().to_string()),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nctorus_cli::config::{ExperimentConfig, ExperimentKind};
use nctorus_cli::experiments::{self, RunError};
use nctorus_cli::report::{self, Report, Status};

#[derive(Debug, Parser)]
#[command(name = "nctorus", version, about = "Experiments for pseudodifferential operators on noncommutative tori")]
struct Cli {
    #[arg(value_enum)]
    kind: ExperimentKind,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the global pool.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    let validated = match ExperimentConfig::load(&cli.config).and_then(|c| c.validate(cli.kind)) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("validation error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| validated.config.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", cli.kind.name(), &validated.hash[..12])));
    if cli.verbose {
        eprintln!("{} -> {} (config {})", cli.kind.name(), dir.display(), validated.hash);
    }
    let outcome = experiments::run(&validated);
    let mut rep = Report {
        kind: cli.kind.name().to_string(),
        config_hash: validated.hash.clone(),
        library_version: nctorus::VERSION.to_string(),
        harness_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: report::timestamp(),
        seed: validated.config.seed,
        cutoff: validated.config.cutoff,
        margin: validated.config.margin,
        operator: validated.operator.as_ref().map(|o| o.label.clone()),
        tolerances: Default::default(),
        checks: Vec::new(),
        results: serde_json::Value::Null,
        files: Vec::new(),
        status: Status::Ok,
        error: None,
    };
    let (tables, code) = match outcome {
        Ok(o) => {
            rep.tolerances = o.tolerances;
            rep.results = o.results;
            rep.checks = o.checks;
            let failed = rep.checks.iter().any(|c| !c.passed);
            if failed {
                rep.status = Status::CheckFailed;
            }
            (o.tables, if failed { EXIT_NUMERICAL } else { 0 })
        }
        Err(RunError::Params(m)) => {
            eprintln!("validation error: invalid params: {m}");
            return ExitCode::from(EXIT_VALIDATION);
        }
        Err(RunError::Numerical(e)) => {
            rep.status = Status::NumericalFailure;
            rep.error = Some(e.to_string());
            (Vec::new(), EXIT_NUMERICAL)
        }
    };
    if cli.verbose {
        for c in &rep.checks {
            eprintln!(
                "{} {}: {:.3e} (tolerance {:.3e})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance
            );
        }
    }
    if let Some(e) = &rep.error {
        eprintln!("numerical failure: {e}");
    }
    if let Err(e) = report::write(&dir, &mut rep, &tables) {
        eprintln!("cannot write {}: {e}", dir.display());
        return ExitCode::from(EXIT_NUMERICAL);
    }
    ExitCode::from(code)
}

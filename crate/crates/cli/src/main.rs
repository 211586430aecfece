//! `ddbound run`: mesh, solve, recover and estimate for every case of an
//! experiment configuration, then write CSV tables and VTK maps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddbound::experiment::{
    preset, run, write_outputs, ExperimentConfig, ExperimentResult, PRESETS,
};
use ddbound::{Error, FailureClass};

/// Environment variable overriding the configured output directory.
const OUT_ENV: &str = "DDBOUND_OUT";

#[derive(Parser)]
#[command(
    name = "ddbound",
    version,
    about = "Guaranteed error bounds for substructured elasticity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its reports.
    Run(RunArgs),
    /// Print a built-in preset as TOML.
    Show { name: String },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment: table1, table2, fig9 or fig10.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; takes precedence over DDBOUND_OUT and the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)
        }
        (None, Some(name)) => preset(name),
        (None, None) => Err(Error::Config("no configuration given".into())),
    }
}

fn output_dir(args: &RunArgs, config: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    config
        .outputs
        .dir
        .clone()
        .unwrap_or_else(|| Path::new("out").join(&config.name))
}

fn summarize(result: &ExperimentResult) {
    for c in &result.cases {
        match &c.outcome {
            Ok(d) => {
                let eff = d
                    .report
                    .effectivity
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:>8e}  {:<12} {:<14} relative {:.6e}  effectivity {eff}",
                    c.ratio, c.scheme, c.mode, d.report.relative
                );
            }
            Err(f) => eprintln!(
                "{:>8e}  {:<12} {:<14} {} failure at {}: {}",
                c.ratio,
                c.scheme,
                c.mode,
                f.class.name(),
                f.stage,
                f.message
            ),
        }
    }
}

fn fail(class: FailureClass, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error ({}): {msg}", class.name());
    ExitCode::from(class.exit_code())
}

fn run_command(args: RunArgs) -> ExitCode {
    let config = match load(&args) {
        Ok(c) => c,
        Err(e) => return fail(e.class(), e),
    };
    if let Some(n) = args.threads {
        if n == 0 {
            return fail(FailureClass::Config, "--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            return fail(FailureClass::Other, e);
        }
    }
    let dir = output_dir(&args, &config);
    let result = match run(&config) {
        Ok(r) => r,
        Err(e) => return fail(e.class(), e),
    };
    summarize(&result);
    match write_outputs(&result, &dir, &config.outputs) {
        Ok(files) => println!("wrote {}", files.report.display()),
        Err(e) => return fail(e.class(), e),
    }
    match result.failure() {
        Some(class) => ExitCode::from(class.exit_code()),
        None => ExitCode::SUCCESS,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run_command(args),
        Command::Show { name } => match PRESETS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            None => fail(FailureClass::Config, format!("unknown preset {name:?}")),
        },
    }
}

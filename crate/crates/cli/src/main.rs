use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qtherm::Truncation;
use qtherm_cli::config::{ExperimentConfig, Overrides};
use qtherm_cli::error::CliResult;
use qtherm_cli::output::{results_document, write_all, Format};
use qtherm_cli::{experiments, run_and_write, selftest, table1};

#[derive(Parser)]
#[command(name = "qtherm", version, about = "Quench work statistics and their optical analogues")]
struct Cli {
    /// Overrides `rng_seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fixes the Fock truncation instead of converging it.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Output directory; defaults to `results/<kind>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one experiment from a TOML config.
    Run { config: PathBuf },
    /// Recomputes the quench table and compares it with the published values.
    Table1,
    /// Checks internal identities and prints one PASS/FAIL line each.
    Selftest,
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    let overrides = Overrides { seed: cli.seed, dim: cli.dim, out: cli.out.clone() };
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let (dir, files) = run_and_write(&cfg, cli.format)?;
            for f in files {
                println!("{}", dir.join(f).display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Table1 => {
            let trunc = cli.dim.map(Truncation::fixed).unwrap_or_default();
            let reports = table1::table1_suite(&trunc)?;
            print!("{}", table1::render(&reports));
            if let Some(dir) = cli.out {
                let artifacts = experiments::run_table1(&trunc)?;
                let doc = results_document("table1", &serde_json::json!({ "truncation": trunc }), &artifacts.results)?;
                write_all(&dir, &doc, &artifacts, cli.format)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let lines = selftest::run_selftest();
            let mut ok = true;
            for l in &lines {
                println!("{l}");
                ok &= l.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

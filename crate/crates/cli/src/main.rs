use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thinfilm::experiments::{run_path, ExperimentKind, Overrides};

#[derive(Parser)]
#[command(name = "thinfilm", version, about = "Thin-film equation experiments under advection")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment named in the config.
    Run(RunArgs),
    /// Lemma verification suite.
    Verify(RunArgs),
    /// Dissipation-time sweep over flow amplitudes.
    Dissipation(RunArgs),
    /// Negative-energy blow-up run.
    Blowup(RunArgs),
    /// Suppression ladder over shear amplitudes.
    Suppress(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid size, overriding `grid.n`.
    #[arg(long)]
    grid: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.cmd {
        Cmd::Run(a) => (None, a),
        Cmd::Verify(a) => (Some(ExperimentKind::Verify), a),
        Cmd::Dissipation(a) => (Some(ExperimentKind::DissipationSweep), a),
        Cmd::Blowup(a) => (Some(ExperimentKind::Blowup), a),
        Cmd::Suppress(a) => (Some(ExperimentKind::Suppress), a),
    };
    let overrides = Overrides {
        experiment: kind,
        out: args.out,
        seed: args.seed,
        grid: args.grid,
    };
    match run_path(&args.config, &overrides) {
        Ok(outcome) => {
            let r = &outcome.report;
            for m in &r.metrics {
                let verdict = match m.pass {
                    Some(true) => "pass",
                    Some(false) => "FAIL",
                    None => "info",
                };
                println!("{verdict:4}  {:<40} {:e}", m.name, m.value);
            }
            if let Some(e) = &r.error {
                eprintln!("error: {e}");
            }
            println!("{}: {}", r.experiment, if r.pass { "pass" } else { "fail" });
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

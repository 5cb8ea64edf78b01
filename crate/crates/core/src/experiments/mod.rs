//! Config-driven experiments: each reads an [`ExperimentConfig`], writes
//! CSV artifacts under the output directory, and returns a [`RunReport`].

mod config;
mod datum;
mod report;
mod runs;

use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use config::{
    config_hash, BlowupSection, DissipationSection, ExperimentConfig, ExperimentKind, GridSection, InitialDatum, OutputSection,
    Overrides, SolverSection, SuppressSection, VerifyCheck, VerifySection,
};
pub use datum::{build_datum, cosine_pair, energy_crossover, fit_decay, seeded_modes, Crossover, DecayRate};
pub use report::{gnuplot_script, Metric, RunReport, Tolerance, SCHEMA_VERSION};
pub use runs::{BlowupRun, DissipationSweep, Simulate, Suppress, SuppressRow, Verify};

use crate::error::{Error, Result};
use crate::persist::{write_checkpoint, write_text, CsvTable};
use crate::registry::Registry;
use crate::solvers::Trajectory;

pub const THREADS_ENV: &str = "THINFILM_THREADS";

/// Shared state of one run.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn new(config: ExperimentConfig, config_hash: String) -> Self {
        let out_dir = config.output.dir.clone();
        RunContext {
            config,
            config_hash,
            out_dir,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write_csv(&self, report: &mut RunReport, name: &str, table: &CsvTable) -> Result<()> {
        table.write(&self.path(name))?;
        report.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn write_text(&self, report: &mut RunReport, name: &str, text: &str) -> Result<()> {
        write_text(&self.path(name), text)?;
        report.artifacts.push(name.to_string());
        Ok(())
    }

    /// Trajectory CSV plus its checkpoints under `<stem>_ckpt/`.
    pub fn write_trajectory(&self, report: &mut RunReport, stem: &str, traj: &Trajectory) -> Result<()> {
        self.write_csv(report, &format!("{stem}.csv"), &traj.table())?;
        for (i, (t, f)) in traj.checkpoints.iter().enumerate() {
            let name = format!("{stem}_ckpt/{i:05}.bin");
            write_checkpoint(&self.path(&name), f, *t)?;
            report.artifacts.push(name);
        }
        Ok(())
    }
}

pub trait Experiment: Send + Sync {
    fn kind(&self) -> ExperimentKind;

    /// Appends metrics to `report`; an error leaves whatever artifacts were
    /// already written.
    fn run(&self, ctx: &RunContext, report: &mut RunReport) -> Result<()>;
}

pub fn experiments() -> Registry<dyn Experiment> {
    let all: [Arc<dyn Experiment>; 5] = [
        Arc::new(Simulate),
        Arc::new(BlowupRun),
        Arc::new(Suppress),
        Arc::new(DissipationSweep),
        Arc::new(Verify),
    ];
    let mut r = Registry::new("experiment");
    for e in all {
        r.register(e.kind().name(), e);
    }
    r
}

/// Worker count from `THINFILM_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    /// 0 pass, 2 tolerance failure, 1 error.
    pub exit_code: i32,
}

/// Runs a parsed config and writes `report.toml` next to the artifacts.
pub fn run_config(config: ExperimentConfig, config_hash: String) -> Result<RunOutcome> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = thread_cap()? {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?
    };
    let ctx = RunContext::new(config, config_hash);
    let kind = ctx.config.experiment;
    let exp = experiments().get(kind.name())?;
    let mut report = RunReport::new(kind.name(), &ctx.config_hash, ctx.config.seed);
    let result = pool.install(|| exp.run(&ctx, &mut report));
    if let Err(e) = &result {
        report.fail_with(e);
    }
    report.artifacts.push("report.toml".into());
    report.write(&ctx.path("report.toml"))?;
    let exit_code = match (&result, report.pass) {
        (Err(_), _) => 1,
        (Ok(()), true) => 0,
        (Ok(()), false) => 2,
    };
    Ok(RunOutcome { report, exit_code })
}

/// Loads `path`, applies overrides and runs.
pub fn run_path(path: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let (mut config, bytes) = ExperimentConfig::load(path)?;
    config.apply(overrides)?;
    run_config(config, config_hash(&bytes, overrides))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names() {
        assert_eq!(
            experiments().names(),
            vec!["blowup", "dissipation_sweep", "simulate", "suppress", "verify"]
        );
    }
}

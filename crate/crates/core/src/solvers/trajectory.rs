use crate::error::{Error, Result};
use crate::persist::CsvTable;
use crate::spectral::{norm, Grid, NormKind, SpectralField};

/// Scalar diagnostics recorded at one output time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticRow {
    pub t: f64,
    pub l2: f64,
    /// `||Delta u||_2`.
    pub h2dot: f64,
    /// `\int |grad u|^p`.
    pub grad_lp_p: f64,
    pub grad_linf: f64,
    pub energy: f64,
    pub mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Horizon,
    BlowupThreshold,
    Stiffness,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Grid,
    pub rows: Vec<DiagnosticRow>,
    pub checkpoints: Vec<(f64, SpectralField)>,
    pub termination: Termination,
    pub steps: usize,
    pub final_state: SpectralField,
}

impl Trajectory {
    pub const CSV_HEADER: [&'static str; 7] = ["t", "l2", "h2dot", "gradLp_p", "gradLinf", "energy", "mean"];

    pub fn first(&self) -> &DiagnosticRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &DiagnosticRow {
        self.rows.last().expect("trajectory has at least the initial row")
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn l2_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.l2).collect()
    }

    pub fn blew_up(&self) -> bool {
        self.termination == Termination::BlowupThreshold
    }

    pub fn checkpoint_at(&self, t: f64) -> Result<&SpectralField> {
        self.checkpoints
            .iter()
            .find(|(tc, _)| (tc - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map(|(_, f)| f)
            .ok_or(Error::NoCheckpoint(t))
    }

    /// Norm of the stored checkpoint at time `t`.
    pub fn sobolev_norm_of_time_slice(&self, t: f64, which: NormKind) -> Result<f64> {
        norm(self.checkpoint_at(t)?, which)
    }

    pub fn table(&self) -> CsvTable {
        let mut table = CsvTable::new(&Self::CSV_HEADER);
        for r in &self.rows {
            table.push(vec![r.t, r.l2, r.h2dot, r.grad_lp_p, r.grad_linf, r.energy, r.mean]);
        }
        table
    }
}

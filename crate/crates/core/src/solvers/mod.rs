mod audit;
mod blowup;
pub mod etd;
mod integrate;
mod picard;
mod trajectory;

pub use audit::{energy_identity_residual, small_data_gradient_check, EnergyAudit, SmallDataConfig, SmallDataTable};
pub use blowup::{blowup_detect, BlowupReport, LOWER_CURVE_SLACK};
pub use integrate::{diagnostics, integrate, OutputConfig, StepperConfig};
pub use picard::{picard_horizon_bound, picard_solve, PicardConfig, PicardResult, QuadratureConfig};
pub use trajectory::{DiagnosticRow, Termination, Trajectory};

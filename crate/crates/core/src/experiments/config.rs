use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flows::{DissipationConfig, FlowSpec, LinearConfig};
use crate::model::ModelParams;
use crate::solvers::{OutputConfig, PicardConfig, SmallDataConfig, StepperConfig};
use crate::spectral::{Grid, WavenumberScale};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Blowup,
    Suppress,
    DissipationSweep,
    Verify,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Blowup => "blowup",
            ExperimentKind::Suppress => "suppress",
            ExperimentKind::DissipationSweep => "dissipation_sweep",
            ExperimentKind::Verify => "verify",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub scale: WavenumberScale,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n: 64,
            scale: WavenumberScale::TwoPi,
        }
    }
}

impl GridSection {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.scale)
    }
}

/// Initial datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialDatum {
    /// `a (cos x1 + cos x2)` on the lowest modes.
    CosinePair { amplitude: f64 },
    /// The cosine pair at `factor` times the smallest amplitude with
    /// negative energy, found by bisection.
    NegativeEnergy {
        #[serde(default = "two")]
        factor: f64,
    },
    /// Random phases on `|k_i| <= kmax`, scaled to the given L2 norm.
    RandomSmooth { kmax: usize, l2: f64 },
    Checkpoint { path: PathBuf },
}

fn two() -> f64 {
    2.0
}

impl Default for InitialDatum {
    fn default() -> Self {
        InitialDatum::NegativeEnergy { factor: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Run length for `simulate`; the blow-up experiments derive theirs.
    pub horizon: f64,
    pub stepper: StepperConfig,
    pub picard: PicardConfig,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            horizon: 1e-2,
            stepper: StepperConfig::default(),
            picard: PicardConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub interval: Option<f64>,
    pub times: Vec<f64>,
    pub growth_factor: Option<f64>,
    pub checkpoint_stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            interval: Some(1e-3),
            times: Vec::new(),
            growth_factor: None,
            checkpoint_stride: 0,
        }
    }
}

impl OutputSection {
    pub fn schedule(&self) -> OutputConfig {
        OutputConfig {
            interval: self.interval,
            times: self.times.clone(),
            growth_factor: self.growth_factor,
            checkpoint_stride: self.checkpoint_stride,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupSection {
    /// Horizon as a multiple of the upper bound on `T_max`.
    pub horizon_factor: f64,
    /// Relative slack on `fitted T_max <= T_max_upper`.
    pub slack: f64,
}

impl Default for BlowupSection {
    fn default() -> Self {
        BlowupSection {
            horizon_factor: 1.5,
            slack: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuppressSection {
    /// Multipliers `A` applied to the configured flow.
    pub ladder: Vec<f64>,
    pub horizon_factor: f64,
    /// Relative slack on `beta <= 2 e^{1/10}`.
    pub beta_slack: f64,
    /// Fit from the last time `||u|| >= ||u0||` down to `fit_floor ||u0||`.
    pub fit_floor: f64,
    /// Largest log-linear fit residual, as a fraction of the dynamic range.
    pub max_fit_residual: f64,
    pub dissipation: DissipationConfig,
}

impl Default for SuppressSection {
    fn default() -> Self {
        SuppressSection {
            ladder: vec![0.0, 10.0, 50.0, 250.0],
            horizon_factor: 5.0,
            beta_slack: 0.1,
            fit_floor: 1e-10,
            max_fit_residual: 0.05,
            dissipation: DissipationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DissipationSection {
    pub amplitudes: Vec<f64>,
    pub config: DissipationConfig,
}

impl Default for DissipationSection {
    fn default() -> Self {
        DissipationSection {
            amplitudes: vec![0.0, 1.0, 10.0, 100.0],
            config: DissipationConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyCheck {
    Semigroup,
    Energy,
    CouplingGap,
    SmallData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub checks: Vec<VerifyCheck>,
    /// Absolute tolerance on fitted decay slopes.
    pub slope_tol: f64,
    pub decay_points: usize,
    /// Energy audit: reference time and relative bound.
    pub energy_time: f64,
    pub energy_tol: f64,
    pub energy_amplitude: f64,
    /// Coupling gap: time window, number of samples, drift bound.
    pub gap_t_min: f64,
    pub gap_t_max: f64,
    pub gap_points: usize,
    pub gap_drift_tol: f64,
    pub gap_linear: LinearConfig,
    pub small_data: SmallDataConfig,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            checks: vec![
                VerifyCheck::Semigroup,
                VerifyCheck::Energy,
                VerifyCheck::CouplingGap,
                VerifyCheck::SmallData,
            ],
            slope_tol: 0.05,
            decay_points: 40,
            energy_time: 1e-2,
            energy_tol: 1e-6,
            energy_amplitude: 0.5,
            gap_t_min: 1e-4,
            gap_t_max: 1e-1,
            gap_points: 16,
            gap_drift_tol: 0.05,
            gap_linear: LinearConfig::default(),
            small_data: SmallDataConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub flow: Option<FlowSpec>,
    #[serde(default)]
    pub initial: InitialDatum,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub blowup: BlowupSection,
    #[serde(default)]
    pub suppress: SuppressSection,
    #[serde(default)]
    pub dissipation: DissipationSection,
    #[serde(default)]
    pub verify: VerifySection,
}

/// Command-line replacements applied after parsing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
}

impl Overrides {
    fn tag(&self) -> String {
        let mut parts = Vec::new();
        if let Some(e) = self.experiment {
            parts.push(format!("experiment={}", e.name()));
        }
        if let Some(s) = self.seed {
            parts.push(format!("seed={s}"));
        }
        if let Some(n) = self.grid {
            parts.push(format!("grid={n}"));
        }
        parts.join(";")
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        Ok((cfg, bytes))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(e) = o.experiment {
            self.experiment = e;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.grid {
            self.grid.n = n;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.grid()?;
        self.model.validate()?;
        if let Some(f) = &self.flow {
            f.validate()?;
        }
        self.solver.stepper.validate()?;
        if !(self.solver.horizon > 0.0) {
            return Err(Error::Config("solver.horizon must be positive".into()));
        }
        if self.suppress.ladder.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("suppress.ladder entries must be >= 0".into()));
        }
        if self.dissipation.amplitudes.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("dissipation.amplitudes must be >= 0".into()));
        }
        match &self.initial {
            InitialDatum::NegativeEnergy { factor } if !(*factor >= 1.0) => {
                Err(Error::Config("initial.factor must be >= 1".into()))
            }
            InitialDatum::RandomSmooth { kmax, l2 } if *kmax == 0 || !(*l2 >= 0.0) => {
                Err(Error::Config("initial.kmax must be >= 1 and l2 >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// The flow, or zero when none is configured.
    pub fn flow(&self) -> FlowSpec {
        self.flow.clone().unwrap_or_default()
    }

    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            output: self.output.schedule(),
            ..self.solver.stepper.clone()
        }
    }
}

/// SHA-256 over the raw config bytes and the override tag.
pub fn config_hash(bytes: &[u8], overrides: &Overrides) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let tag = overrides.tag();
    if !tag.is_empty() {
        h.update(b"\n#overrides:");
        h.update(tag.as_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "experiment = \"simulate\"\n";

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.grid.n, 64);
        assert_eq!(c.model.p, 2.5);
        assert!(c.flow.is_none());
    }

    #[test]
    fn full_sections_parse() {
        let text = r#"
experiment = "suppress"
seed = 9

[grid]
n = 32
scale = "unit"

[model]
p = 2.4
nonlinear = true

[flow]
amplitude = 1.0
[flow.family]
kind = "alternating_shear"
base_amplitude = 1.0
half_period = 0.5
phase_seed = 3

[initial]
kind = "negative_energy"
factor = 2.0

[solver]
horizon = 0.1
[solver.stepper]
scheme = "etdrk4"
dt_max = 1e-3

[output]
dir = "runs/a"
interval = 0.01

[suppress]
ladder = [0.0, 5.0]
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Suppress);
        assert_eq!(c.grid.scale, WavenumberScale::Unit);
        assert_eq!(c.solver.stepper.scheme, "etdrk4");
        assert_eq!(c.stepper().output.interval, Some(0.01));
        assert_eq!(c.flow().sup_norm(), 1.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        for bad in [
            "experiment = \"simulate\"\nbogus = 1\n",
            "experiment = \"simulate\"\n[grid]\nm = 3\n",
            "experiment = \"simulate\"\n[solver.stepper]\nscheme = \"etdrk2\"\nrho = 0.1\n",
            "experiment = \"explode\"\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ExperimentConfig::parse("experiment = \"simulate\"\n[grid]\nn = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::parse("experiment = \"simulate\"\n[grid]\nn = 6\n").is_err());
        assert!(ExperimentConfig::parse("experiment = \"simulate\"\n[model]\np = 3.5\n").is_err());
        let mut c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert!(c.apply(&Overrides { grid: Some(12), ..Overrides::default() }).is_err());
    }

    #[test]
    fn hash_tracks_bytes_and_overrides() {
        let base = config_hash(MINIMAL.as_bytes(), &Overrides::default());
        assert_eq!(base, config_hash(MINIMAL.as_bytes(), &Overrides::default()));
        let bytes = MINIMAL.as_bytes();
        for i in 0..bytes.len() {
            let mut m = bytes.to_vec();
            m[i] ^= 1;
            assert_ne!(config_hash(&m, &Overrides::default()), base);
        }
        let mut longer = bytes.to_vec();
        longer.push(b'\n');
        assert_ne!(config_hash(&longer, &Overrides::default()), base);
        let o = Overrides { seed: Some(1), ..Overrides::default() };
        assert_ne!(config_hash(bytes, &o), base);
        let o = Overrides { out: Some("elsewhere".into()), ..Overrides::default() };
        assert_eq!(config_hash(bytes, &o), base);
    }
}

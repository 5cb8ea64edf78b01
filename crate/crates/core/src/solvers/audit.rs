use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::semigroup::log_space;
use crate::spectral::SpectralField;

use super::integrate::{integrate, OutputConfig, StepperConfig};
use super::trajectory::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyAudit {
    /// `(t, residual / ||u0||^2)`.
    pub rows: Vec<(f64, f64)>,
    /// Set when consecutive rows differ too much for the trapezoid rule.
    pub under_resolved: bool,
}

impl EnergyAudit {
    pub fn at_end(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.1)
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.1.abs()))
    }
}

/// `||u(t)||^2 + 2 int ||Delta u||^2 - ||u0||^2 - 2 int ||grad u||_p^p`,
/// trapezoid in time, relative to `||u0||^2`.
pub fn energy_identity_residual(traj: &Trajectory, params: &ModelParams) -> EnergyAudit {
    let rows = &traj.rows;
    let u0 = rows[0].l2 * rows[0].l2;
    let norm = if u0 > 0.0 { u0 } else { 1.0 };
    let integrand = |r: &super::DiagnosticRow| {
        let forcing = if params.nonlinear { r.grad_lp_p } else { 0.0 };
        r.h2dot * r.h2dot - forcing
    };
    let mut acc = 0.0;
    let mut out = vec![(rows[0].t, 0.0)];
    let mut under = rows.len() < 3;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (fa, fb) = (integrand(a), integrand(b));
        acc += 0.5 * (b.t - a.t) * (fa + fb);
        let scale = a.h2dot.powi(2).max(b.h2dot.powi(2));
        if scale > 0.0 && (b.h2dot.powi(2) - a.h2dot.powi(2)).abs() > 0.5 * scale {
            under = true;
        }
        let res = b.l2 * b.l2 + 2.0 * acc - u0;
        out.push((b.t, res / norm));
    }
    EnergyAudit {
        rows: out,
        under_resolved: under,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmallDataConfig {
    pub delta_star: f64,
    pub varrho: f64,
    /// Log-spaced sample times on `[2 varrho 1e-4, 2 varrho]`.
    pub points: usize,
    pub stepper: StepperConfig,
}

impl Default for SmallDataConfig {
    fn default() -> Self {
        SmallDataConfig {
            delta_star: 1.0,
            varrho: 1e-3,
            points: 25,
            stepper: StepperConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallDataTable {
    /// `(t, t^{1/2} ||grad u||_inf / (delta* varrho^{-(3-p)/(2(p-2))}))`.
    pub rows: Vec<(f64, f64)>,
    pub max: f64,
}

pub fn small_data_gradient_check(u0: &SpectralField, params: &ModelParams, cfg: &SmallDataConfig) -> Result<SmallDataTable> {
    if !(cfg.delta_star > 0.0 && cfg.varrho > 0.0) {
        return Err(Error::params("delta_star and varrho must be positive"));
    }
    if cfg.points < 2 {
        return Err(Error::params("need at least two sample times"));
    }
    let p = params.p;
    let e = (3.0 - p) / (2.0 * (p - 2.0));
    let lhs = cfg.varrho.powf(e) * u0.l2_norm();
    if lhs > cfg.delta_star {
        return Err(Error::SmallDataViolation {
            lhs,
            delta_star: cfg.delta_star,
        });
    }
    let horizon = 2.0 * cfg.varrho;
    let times = log_space(horizon * 1e-4, horizon, cfg.points);
    let stepper = StepperConfig {
        output: OutputConfig {
            interval: None,
            times: times.clone(),
            ..OutputConfig::default()
        },
        ..cfg.stepper.clone()
    };
    let traj = integrate(u0, params, None, &stepper, horizon)?;
    let scale = cfg.delta_star * cfg.varrho.powf(-e);
    let rows: Vec<(f64, f64)> = traj.rows[1..].iter().map(|r| (r.t, r.t.sqrt() * r.grad_linf / scale)).collect();
    let max = rows.iter().fold(0.0f64, |m, r| m.max(r.1));
    Ok(SmallDataTable { rows, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Grid, WavenumberScale};

    fn cfg(interval: f64) -> StepperConfig {
        StepperConfig {
            dt_max: interval,
            cfl_safety: 1e3,
            output: OutputConfig {
                interval: Some(interval),
                ..OutputConfig::default()
            },
            ..StepperConfig::default()
        }
    }

    #[test]
    fn zero_data() {
        let g = Grid::new(16, WavenumberScale::Unit).unwrap();
        let u0 = SpectralField::zeros(g);
        let p = ModelParams::default();
        let traj = integrate(&u0, &p, None, &cfg(1e-3), 1e-2).unwrap();
        assert!(energy_identity_residual(&traj, &p).rows.iter().all(|r| r.1 == 0.0));
        let t = small_data_gradient_check(&u0, &p, &SmallDataConfig::default()).unwrap();
        assert_eq!(t.max, 0.0);
    }

    #[test]
    fn linear_residual_is_quadrature_error() {
        let g = Grid::new(32, WavenumberScale::Unit).unwrap();
        let u0 = SpectralField::random_smooth(g, 1, 7);
        let p = ModelParams::default().linear();
        let r1 = energy_identity_residual(&integrate(&u0, &p, None, &cfg(1e-3), 1e-2).unwrap(), &p).at_end();
        let r2 = energy_identity_residual(&integrate(&u0, &p, None, &cfg(5e-4), 1e-2).unwrap(), &p).at_end();
        assert!(r1.abs() < 1e-6, "{r1}");
        assert!((r1 / r2 - 4.0).abs() < 0.2, "{r1} {r2}");
    }

    #[test]
    fn pairing_enforced() {
        let g = Grid::new(16, WavenumberScale::Unit).unwrap();
        let u0 = SpectralField::cosine_mode(g, 1, 0, 10.0, 0.0).unwrap();
        let c = SmallDataConfig {
            delta_star: 1e-3,
            varrho: 1.0,
            ..SmallDataConfig::default()
        };
        let r = small_data_gradient_check(&u0, &ModelParams::default(), &c);
        assert!(matches!(r, Err(Error::SmallDataViolation { .. })));
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{advective_dt_cap, FlowSpec, ShearCache};
use crate::model::{self, ModelParams};
use crate::spectral::{grad_sup, SpectralField};

use super::etd::{steppers, TableCache};
use super::trajectory::{DiagnosticRow, Termination, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Uniform output spacing; `None` records only `times` and the end.
    pub interval: Option<f64>,
    pub times: Vec<f64>,
    /// Extra row whenever `||u||_2` grows by this factor since the last row.
    pub growth_factor: Option<f64>,
    /// Keep the state at every `checkpoint_stride`-th row (0 keeps none).
    pub checkpoint_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            interval: Some(1e-3),
            times: Vec::new(),
            growth_factor: None,
            checkpoint_stride: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperConfig {
    /// Registered stepper name.
    pub scheme: String,
    pub dt_init: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub cfl_safety: f64,
    /// Explicit advection cap `adv_cfl ||v||_inf^{-4/3}`.
    pub adv_cfl: f64,
    /// Stop once `||u||_2` exceeds this multiple of `||u0||_2`.
    pub blowup_threshold: f64,
    /// Filled from the run's output section rather than the stepper table.
    #[serde(skip)]
    pub output: OutputConfig,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            scheme: "etdrk2".into(),
            dt_init: 1e-4,
            dt_max: 1e-3,
            dt_min: 1e-12,
            cfl_safety: 1.0,
            adv_cfl: 0.5,
            blowup_threshold: 1e6,
            output: OutputConfig::default(),
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_init >= self.dt_min && self.dt_max >= self.dt_min) {
            return Err(Error::params("need 0 < dt_min <= dt_init, dt_max"));
        }
        if !(self.blowup_threshold > 1.0) {
            return Err(Error::params("blowup_threshold must exceed 1"));
        }
        if !(self.cfl_safety > 0.0 && self.adv_cfl > 0.0) {
            return Err(Error::params("cfl factors must be positive"));
        }
        if let Some(i) = self.output.interval {
            if !(i > 0.0) {
                return Err(Error::params("output interval must be positive"));
            }
        }
        if let Some(g) = self.output.growth_factor {
            if !(g > 1.0) {
                return Err(Error::params("growth_factor must exceed 1"));
            }
        }
        steppers().get(&self.scheme).map(|_| ())
    }

    /// Every step cap divided by `factor`.
    pub fn refined(&self, factor: f64) -> Self {
        StepperConfig {
            dt_init: self.dt_init / factor,
            dt_max: self.dt_max / factor,
            cfl_safety: self.cfl_safety / factor,
            adv_cfl: self.adv_cfl / factor,
            ..self.clone()
        }
    }
}

pub fn diagnostics(u: &SpectralField, t: f64, params: &ModelParams) -> Result<DiagnosticRow> {
    let grad_lp_p = if params.nonlinear { model::grad_lp_p(u, params)? } else { 0.0 };
    let en = model::energy(u, params)?;
    Ok(DiagnosticRow {
        t,
        l2: u.l2_norm(),
        h2dot: u.laplacian().l2_norm(),
        grad_lp_p,
        grad_linf: grad_sup(u),
        energy: en.e_rho.unwrap_or(en.e),
        mean: u.mean(),
    })
}

/// Output times strictly after 0 and up to `horizon`, increasing.
fn output_times(cfg: &OutputConfig, horizon: f64) -> Vec<f64> {
    let mut out: Vec<f64> = cfg.times.iter().copied().filter(|&t| t > 0.0 && t <= horizon).collect();
    if let Some(dt) = cfg.interval {
        let m = (horizon / dt * (1.0 + 1e-12)).floor() as usize;
        out.extend((1..=m).map(|i| (i as f64 * dt).min(horizon)));
    }
    out.push(horizon);
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    out
}

/// Exponential time differencing for `u_t = -Delta^2 u - N(u) - P(v . grad u)`.
pub fn integrate(u0: &SpectralField, params: &ModelParams, flow: Option<&FlowSpec>, cfg: &StepperConfig, horizon: f64) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(Error::params(format!("horizon {horizon} must be positive")));
    }
    params.validate()?;
    cfg.validate()?;
    if !u0.is_finite() {
        return Err(Error::NonFiniteField);
    }
    let zero = FlowSpec::zero();
    let flow = flow.unwrap_or(&zero);
    flow.validate()?;
    let stepper = steppers().get(&cfg.scheme)?;
    let grid = u0.grid();
    let targets = output_times(&cfg.output, horizon);
    let adv_cap = advective_dt_cap(flow.sup_norm(), cfg.adv_cfl);
    let scale_n = grid.scale().factor() * grid.n() as f64;
    let threshold = cfg.blowup_threshold * u0.l2_norm();
    let switch_eps = 1e-12 * (1.0 + horizon);

    let mut u = u0.clone();
    let mut t = 0.0;
    let mut rows = vec![diagnostics(&u, 0.0, params)?];
    let mut checkpoints = Vec::new();
    let stride = cfg.output.checkpoint_stride;
    if stride > 0 {
        checkpoints.push((0.0, u.clone()));
    }
    let mut tables = TableCache::default();
    let mut shears = ShearCache::new(grid);
    let mut next_out = 0;
    let mut steps = 0;
    let mut dt_prev = cfg.dt_init;
    let mut last_l2 = rows[0].l2;

    let finish = |rows, checkpoints, termination, steps, final_state| Trajectory {
        grid,
        rows,
        checkpoints,
        termination,
        steps,
        final_state,
    };

    while next_out < targets.len() {
        let target = targets[next_out];
        let mut dt = cfg.dt_max.min(2.0 * dt_prev).min(adv_cap);
        if params.nonlinear {
            dt = dt.min(cfg.cfl_safety / (1.0 + grad_sup(&u) * scale_n));
        }
        let mut end = (t + dt).min(target);
        if let Some(sw) = flow.next_switch(t + switch_eps) {
            if sw < end - switch_eps {
                end = sw;
            }
        }
        // avoid a sliver step just before an output or switch
        if target - end <= switch_eps {
            end = target;
        }
        let h = end - t;
        if h < cfg.dt_min {
            let partial = finish(rows, checkpoints, Termination::Stiffness, steps, u);
            return Err(Error::StiffnessFailure {
                t,
                dt: h,
                partial: Some(Box::new(partial)),
            });
        }
        let shear = flow.shear_at(t + 0.5 * h);
        let tb = tables.get(grid, h);
        let result = stepper.step(&u, &tb, &mut |w: &SpectralField| {
            let mut r = model::nonlinear_term(w, params)?.scaled(-1.0);
            if let Some(sh) = shear {
                r.axpy(-1.0, &shears.advection(sh, w)?);
            }
            Ok(r)
        });
        let next = match result {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::NonFiniteField) => {
                let partial = finish(rows, checkpoints, Termination::Stiffness, steps, u);
                return Err(Error::StiffnessFailure {
                    t,
                    dt: h,
                    partial: Some(Box::new(partial)),
                });
            }
            Err(e) => return Err(e),
        };
        u = next;
        t = end;
        steps += 1;
        if end < target || h >= dt_prev {
            dt_prev = h;
        }

        let l2 = u.l2_norm();
        let at_output = end == target;
        let grown = cfg.output.growth_factor.is_some_and(|g| l2 >= g * last_l2);
        let blown = threshold > 0.0 && l2 > threshold;
        if at_output || grown || blown {
            rows.push(diagnostics(&u, t, params)?);
            last_l2 = l2;
            if stride > 0 && (rows.len() - 1) % stride == 0 {
                checkpoints.push((t, u.clone()));
            }
        }
        if at_output {
            next_out += 1;
        }
        if blown {
            return Ok(finish(rows, checkpoints, Termination::BlowupThreshold, steps, u));
        }
    }
    Ok(finish(rows, checkpoints, Termination::Horizon, steps, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::apply_semigroup;
    use crate::spectral::{Grid, WavenumberScale};

    fn smooth(g: Grid, amp: f64) -> SpectralField {
        let mut u = SpectralField::cosine_mode(g, 1, 0, amp, 0.0).unwrap();
        u.axpy(1.0, &SpectralField::cosine_mode(g, 1, 2, 0.5 * amp, 0.3).unwrap());
        u.axpy(1.0, &SpectralField::constant(g, 0.2));
        u
    }

    #[test]
    fn output_schedule() {
        let cfg = OutputConfig {
            interval: Some(0.25),
            times: vec![0.1, 0.5, 2.0],
            ..OutputConfig::default()
        };
        assert_eq!(output_times(&cfg, 1.0), vec![0.1, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn linear_run_is_semigroup() {
        let g = Grid::new(32, WavenumberScale::TwoPi).unwrap();
        let u0 = SpectralField::random_smooth(g, 10, 4);
        let params = ModelParams::default().linear();
        let traj = integrate(&u0, &params, None, &StepperConfig { output: OutputConfig { checkpoint_stride: 1, ..OutputConfig::default() }, ..StepperConfig::default() }, 5e-3).unwrap();
        assert_eq!(traj.rows.len(), 6);
        for (t, f) in &traj.checkpoints {
            let want = apply_semigroup(*t, &u0).unwrap();
            assert!(f.sub(&want).l2_norm() <= 1e-12 * want.l2_norm().max(1e-300));
        }
    }

    #[test]
    fn mean_conserved_with_flow() {
        let g = Grid::new(32, WavenumberScale::Unit).unwrap();
        let u0 = smooth(g, 1.0);
        let flow = FlowSpec::alternating_shear(1.0, 0.5, 1);
        let flow = crate::flows::rescale_flow(&flow, 10.0).unwrap();
        let traj = integrate(&u0, &ModelParams::default(), Some(&flow), &StepperConfig::default(), 0.2).unwrap();
        for r in &traj.rows {
            assert!((r.mean - 0.2).abs() <= 1e-10 * 0.2);
        }
        assert_eq!(traj.termination, Termination::Horizon);
    }

    #[test]
    fn orders_under_halving() {
        let g = Grid::new(32, WavenumberScale::Unit).unwrap();
        let u0 = smooth(g, 1.0);
        let params = ModelParams::default();
        let horizon = 0.05;
        let run = |scheme: &str, f: f64| {
            let cfg = StepperConfig {
                scheme: scheme.into(),
                dt_init: 1e-2,
                dt_max: 1e-2,
                cfl_safety: 1e3,
                output: OutputConfig { interval: None, ..OutputConfig::default() },
                ..StepperConfig::default()
            }
            .refined(f);
            integrate(&u0, &params, None, &cfg, horizon).unwrap().final_state
        };
        let fine = run("etdrk4", 64.0);
        // Cox-Matthews ETDRK4 drops to its stiff order 3 here
        for (scheme, lo, hi) in [("etdrk2", 1.7, 2.5), ("etdrk4", 2.8, 4.5)] {
            let e1 = run(scheme, 1.0).sub(&fine).l2_norm();
            let e2 = run(scheme, 2.0).sub(&fine).l2_norm();
            let order = (e1 / e2).log2();
            assert!(order > lo && order < hi, "{scheme}: {order}");
        }
    }

    #[test]
    fn threshold_terminates() {
        let g = Grid::new(16, WavenumberScale::Unit).unwrap();
        let u0 = smooth(g, 3.0);
        let cfg = StepperConfig {
            blowup_threshold: 1.5,
            ..StepperConfig::default()
        };
        let traj = integrate(&u0, &ModelParams::default(), None, &cfg, 10.0).unwrap();
        assert!(traj.blew_up());
        assert!(traj.last().l2 > 1.5 * u0.l2_norm());
    }

    #[test]
    fn rejects_bad_input() {
        let g = Grid::new(16, WavenumberScale::Unit).unwrap();
        let u0 = SpectralField::zeros(g);
        let p = ModelParams::default();
        assert!(integrate(&u0, &p, None, &StepperConfig::default(), 0.0).is_err());
        let cfg = StepperConfig { scheme: "rk45".into(), ..StepperConfig::default() };
        assert!(matches!(integrate(&u0, &p, None, &cfg, 1.0), Err(Error::UnknownStrategy { .. })));
        let cfg = StepperConfig { dt_min: 1e-3, dt_max: 1e-3, dt_init: 1e-3, ..StepperConfig::default() };
        let u1 = smooth(g, 1.0);
        // steps pinned near an output time below dt_min surface as stiffness
        let out = OutputConfig { interval: None, times: vec![1e-3 + 1e-5], ..OutputConfig::default() };
        let r = integrate(&u1, &ModelParams::default().linear(), None, &StepperConfig { output: out, ..cfg }, 2e-3);
        assert!(matches!(r, Err(Error::StiffnessFailure { partial: Some(_), .. })));
    }
}

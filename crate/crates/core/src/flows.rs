//! Divergence-free shear flows, the linear advective hyper-diffusion
//! propagator, dissipation times, and the flow condition.

use std::f64::consts::{LN_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{self, ModelParams};
use crate::semigroup::apply_semigroup;
use crate::solvers::etd::{diag, EtdTables, Etdrk2, Stepper, TableCache};
use crate::spectral::{norm_oversampled, truncate_two_thirds, Grid, NormKind, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShearAxis {
    /// `v = (U sin(2 pi k x2 + phase), 0)`.
    Horizontal,
    /// `v = (0, U sin(2 pi k x1 + phase))`.
    Vertical,
}

/// One sinusoidal shear, constant in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shear {
    pub axis: ShearAxis,
    pub amplitude: f64,
    pub phase: f64,
    #[serde(default = "one")]
    pub k: i64,
}

fn one() -> i64 {
    1
}

impl Shear {
    /// The moving velocity component sampled on `grid`.
    pub fn profile(&self, grid: Grid) -> Vec<f64> {
        let n = grid.n();
        let w = TAU * self.k as f64;
        (0..n * n)
            .map(|idx| {
                let x = match self.axis {
                    ShearAxis::Horizontal => grid.x(idx % n),
                    ShearAxis::Vertical => grid.x(idx / n),
                };
                self.amplitude * (w * x + self.phase).sin()
            })
            .collect()
    }

    pub fn sample(&self, grid: Grid) -> Result<[SpectralField; 2]> {
        let (k1, k2) = match self.axis {
            ShearAxis::Horizontal => (0, self.k),
            ShearAxis::Vertical => (self.k, 0),
        };
        // sin(theta) = cos(theta - pi/2)
        let moving = SpectralField::cosine_mode(grid, k1, k2, self.amplitude, self.phase - 0.5 * PI)?;
        let still = SpectralField::zeros(grid);
        Ok(match self.axis {
            ShearAxis::Horizontal => [moving, still],
            ShearAxis::Vertical => [still, moving],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum FlowFamily {
    Zero,
    /// Horizontal shear for one half period, vertical for the next, with
    /// fresh phases drawn from `phase_seed` every period.
    AlternatingShear {
        base_amplitude: f64,
        half_period: f64,
        phase_seed: u64,
    },
    /// Segments played in order and repeated.
    UserTable { segments: Vec<Segment> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    pub shear: Shear,
}

/// A base flow `v` together with the rescaling `v_A(x, t) = A v(x, A t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub family: FlowFamily,
    #[serde(default = "unit_amplitude")]
    pub amplitude: f64,
}

fn unit_amplitude() -> f64 {
    1.0
}

impl Default for FlowSpec {
    fn default() -> Self {
        FlowSpec::zero()
    }
}

fn period_seed(base: u64, m: u64) -> u64 {
    base.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ m.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl FlowSpec {
    pub fn zero() -> Self {
        FlowSpec {
            family: FlowFamily::Zero,
            amplitude: 1.0,
        }
    }

    pub fn alternating_shear(base_amplitude: f64, half_period: f64, phase_seed: u64) -> Self {
        FlowSpec {
            family: FlowFamily::AlternatingShear {
                base_amplitude,
                half_period,
                phase_seed,
            },
            amplitude: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::params(format!("flow amplitude {} must be >= 0", self.amplitude)));
        }
        match &self.family {
            FlowFamily::Zero => Ok(()),
            FlowFamily::AlternatingShear {
                base_amplitude,
                half_period,
                ..
            } => {
                if !(*half_period > 0.0) || !base_amplitude.is_finite() {
                    return Err(Error::params("alternating shear needs half_period > 0 and finite amplitude"));
                }
                Ok(())
            }
            FlowFamily::UserTable { segments } => {
                if segments.is_empty() || segments.iter().any(|s| !(s.duration > 0.0)) {
                    return Err(Error::params("user table needs segments with positive durations"));
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_norm() == 0.0
    }

    /// `sup_{x,t} |v_A|`.
    pub fn sup_norm(&self) -> f64 {
        let base = match &self.family {
            FlowFamily::Zero => 0.0,
            FlowFamily::AlternatingShear { base_amplitude, .. } => base_amplitude.abs(),
            FlowFamily::UserTable { segments } => segments.iter().fold(0.0f64, |m, s| m.max(s.shear.amplitude.abs())),
        };
        self.amplitude * base
    }

    /// `sup_t ||v_A(t)||_2`.
    pub fn l2_sup(&self) -> f64 {
        self.sup_norm() / 2f64.sqrt()
    }

    /// Period in physical time, if the flow is time-periodic up to phases.
    pub fn period(&self) -> Option<f64> {
        if self.is_zero() {
            return None;
        }
        match &self.family {
            FlowFamily::Zero => None,
            FlowFamily::AlternatingShear { half_period, .. } => Some(2.0 * half_period / self.amplitude),
            FlowFamily::UserTable { segments } => {
                Some(segments.iter().map(|s| s.duration).sum::<f64>() / self.amplitude)
            }
        }
    }

    /// Shear in force at physical time `t`, or `None` for a zero flow.
    pub fn shear_at(&self, t: f64) -> Option<Shear> {
        if self.is_zero() {
            return None;
        }
        let a = self.amplitude;
        let tau = a * t.max(0.0);
        match &self.family {
            FlowFamily::Zero => None,
            FlowFamily::AlternatingShear {
                base_amplitude,
                half_period,
                phase_seed,
            } => {
                let half = (tau / half_period).floor() as u64;
                let m = half / 2;
                let mut rng = ChaCha8Rng::seed_from_u64(period_seed(*phase_seed, m));
                let phases: [f64; 2] = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
                let (axis, phase) = if half.is_multiple_of(2) {
                    (ShearAxis::Horizontal, phases[0])
                } else {
                    (ShearAxis::Vertical, phases[1])
                };
                Some(Shear {
                    axis,
                    amplitude: a * base_amplitude,
                    phase,
                    k: 1,
                })
            }
            FlowFamily::UserTable { segments } => {
                let total: f64 = segments.iter().map(|s| s.duration).sum();
                let mut r = tau % total;
                for s in segments {
                    if r < s.duration {
                        return Some(Shear {
                            amplitude: a * s.shear.amplitude,
                            ..s.shear
                        });
                    }
                    r -= s.duration;
                }
                segments.last().map(|s| Shear {
                    amplitude: a * s.shear.amplitude,
                    ..s.shear
                })
            }
        }
    }

    /// Switching times strictly inside `(t0, t1)`, increasing.
    pub fn switch_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = t0;
        while let Some(s) = self.next_switch(t) {
            if s >= t1 {
                break;
            }
            out.push(s);
            t = s;
        }
        out
    }

    /// First switching time strictly after `t`.
    pub fn next_switch(&self, t: f64) -> Option<f64> {
        if self.is_zero() {
            return None;
        }
        let a = self.amplitude;
        match &self.family {
            FlowFamily::Zero => None,
            FlowFamily::AlternatingShear { half_period, .. } => {
                let h = half_period / a;
                let mut j = (t / h).floor() + 1.0;
                while j * h <= t {
                    j += 1.0;
                }
                Some(j * h)
            }
            FlowFamily::UserTable { segments } => {
                let total: f64 = segments.iter().map(|s| s.duration).sum::<f64>() / a;
                let cycle = (t / total).floor();
                let mut acc = cycle * total;
                loop {
                    for s in segments {
                        acc += s.duration / a;
                        if acc > t {
                            return Some(acc);
                        }
                    }
                }
            }
        }
    }
}

/// `v(t)` on the grid; zero components for a zero flow.
pub fn sample_velocity(spec: &FlowSpec, grid: Grid, t: f64) -> Result<[SpectralField; 2]> {
    match spec.shear_at(t) {
        Some(s) => s.sample(grid),
        None => Ok([SpectralField::zeros(grid), SpectralField::zeros(grid)]),
    }
}

/// `v_A` from `v`: amplitudes multiplied and time compressed by `a`.
pub fn rescale_flow(spec: &FlowSpec, a: f64) -> Result<FlowSpec> {
    if !(a > 0.0) {
        return Err(Error::params(format!("rescale factor {a} must be positive")));
    }
    Ok(FlowSpec {
        amplitude: spec.amplitude * a,
        ..spec.clone()
    })
}

/// Shear advection on a fixed grid. A single-mode shear multiplies by
/// `sin`, which in Fourier space is a shift by `+-k` along one axis, so
/// the product is formed coefficientwise with no transforms.
pub struct ShearCache {
    grid: Grid,
}

impl ShearCache {
    pub fn new(grid: Grid) -> Self {
        ShearCache { grid }
    }

    /// `P(v . grad u)`: the exact product truncated to the two-thirds
    /// band, mean removed.
    pub fn advection(&mut self, shear: Shear, u: &SpectralField) -> Result<SpectralField> {
        if u.grid() != self.grid {
            return Err(Error::GridMismatch {
                left: self.grid.to_string(),
                right: u.grid().to_string(),
            });
        }
        let g = self.grid;
        let n = g.n();
        let sc = g.scale().factor();
        let c = u.coeffs();
        // U sin(theta) = (U / 2i) (e^{i theta} - e^{-i theta})
        let half = Complex64::new(0.0, -0.5 * shear.amplitude);
        let (up, dn) = (half * Complex64::from_polar(1.0, shear.phase), half * Complex64::from_polar(1.0, -shear.phase));
        let band = (n / 3) as i64;
        let fs: Vec<(i64, usize)> = (-band..=band).map(|f| (f, f.rem_euclid(n as i64) as usize)).collect();
        // storage index of a shifted frequency; Nyquist and out-of-range read as zero
        let src = |f: i64| g.index_of(f).filter(|&i| !g.is_nyquist(i));
        let shifted: Vec<(Option<usize>, Option<usize>)> = fs.iter().map(|&(f, _)| (src(f - shear.k), src(f + shear.k))).collect();
        let zero = Complex64::default();
        let mut out = vec![zero; n * n];
        match shear.axis {
            ShearAxis::Horizontal => {
                // sentinel slot n holds zero
                let idx: Vec<(usize, usize)> = shifted.iter().map(|&(l, h)| (l.unwrap_or(n), h.unwrap_or(n))).collect();
                let mut row = vec![zero; n + 1];
                for &(f1, i1) in &fs {
                    if f1 == 0 {
                        continue;
                    }
                    let dx = Complex64::new(0.0, sc * f1 as f64);
                    let (a, b) = (dx * up, dx * dn);
                    row[..n].copy_from_slice(&c[i1 * n..(i1 + 1) * n]);
                    let orow = &mut out[i1 * n..(i1 + 1) * n];
                    for (&(_, i2), &(l, h)) in fs.iter().zip(&idx) {
                        orow[i2] = a * row[l] - b * row[h];
                    }
                }
            }
            ShearAxis::Vertical => {
                let dy: Vec<Complex64> = fs.iter().map(|&(f2, _)| Complex64::new(0.0, sc * f2 as f64)).collect();
                let empty = vec![zero; n];
                let row_of = |j: Option<usize>| j.map_or(&empty[..], |j| &c[j * n..(j + 1) * n]);
                for (&(_, i1), &(l, h)) in fs.iter().zip(&shifted) {
                    let (lo, hi) = (row_of(l), row_of(h));
                    let orow = &mut out[i1 * n..(i1 + 1) * n];
                    for (&(_, i2), d) in fs.iter().zip(&dy) {
                        orow[i2] = d * (up * lo[i2] - dn * hi[i2]);
                    }
                }
            }
        }
        // the shift pairs (f, -f) conjugately, so the result is Hermitian as built
        Ok(SpectralField::from_hermitian(g, out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearConfig {
    pub dt_max: f64,
    pub cfl: f64,
    pub dt_min: f64,
    /// Lower bound on the number of advective steps across `[s, t]`.
    pub min_steps: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            dt_max: 1e-2,
            cfl: 0.5,
            dt_min: 1e-12,
            min_steps: 16,
        }
    }
}

/// Advective step cap `cfl ||v||_inf^{-4/3}`: keeps explicit advection
/// stable at the wavenumber where `e^{-h k^4}` stops damping.
pub fn advective_dt_cap(sup_v: f64, cfl: f64) -> f64 {
    if sup_v > 0.0 {
        cfl * sup_v.powf(-4.0 / 3.0)
    } else {
        f64::INFINITY
    }
}

/// Deterministic step schedule `(t_start, h, shear)` on `[s, t]`, with
/// boundaries on every switching time.
pub fn step_schedule(spec: &FlowSpec, s: f64, t: f64, cfg: &LinearConfig) -> Result<Vec<(f64, f64, Option<Shear>)>> {
    // switches within rounding of an endpoint are dropped
    let eps = 1e-12 * (1.0 + t.abs());
    let mut breaks = vec![s];
    breaks.extend(spec.switch_times(s, t).into_iter().filter(|&x| x > s + eps && x < t - eps));
    breaks.push(t);
    let cap = cfg
        .dt_max
        .min(advective_dt_cap(spec.sup_norm(), cfg.cfl))
        .min((t - s) / cfg.min_steps.max(1) as f64);
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let shear = spec.shear_at(0.5 * (a + b));
        let steps = if shear.is_none() { 1 } else { ((b - a) / cap).ceil().max(1.0) as usize };
        let h = (b - a) / steps as f64;
        if h < cfg.dt_min {
            return Err(Error::StiffnessFailure { t: a, dt: h, partial: None });
        }
        for i in 0..steps {
            out.push((a + i as f64 * h, h, shear));
        }
    }
    Ok(out)
}

/// Solution operator `S_{s,t}` of `phi_t + v . grad phi + Delta^2 phi = 0`.
pub fn linear_propagate(spec: &FlowSpec, s: f64, t: f64, f: &SpectralField, cfg: &LinearConfig) -> Result<SpectralField> {
    if t < s {
        return Err(Error::NegativeTime(t - s));
    }
    let sched = step_schedule(spec, s, t, cfg)?;
    let mut tables = TableCache::default();
    let mut cache = ShearCache::new(f.grid());
    let mut u = f.clone();
    for &(_, h, shear) in &sched {
        u = linear_step(&u, &tables.get(f.grid(), h), shear, &mut cache)?;
    }
    Ok(u)
}

fn linear_step(u: &SpectralField, tb: &EtdTables, shear: Option<Shear>, cache: &mut ShearCache) -> Result<SpectralField> {
    match shear {
        None => Ok(diag(&tb.e, u)),
        Some(sh) => Etdrk2.step(u, tb, &mut |w: &SpectralField| Ok(cache.advection(sh, w)?.scaled(-1.0))),
    }
}

/// Transpose of one linear ETDRK2 step. With `B = -P(v . grad)`, which
/// is antisymmetric on the two-thirds band,
/// `Phi^T w = E w - h B phi1 w - h E B phi2 w + h^2 B phi1 B phi2 w + h B phi2 w`.
fn linear_step_adjoint(w: &SpectralField, tb: &EtdTables, shear: Option<Shear>, cache: &mut ShearCache) -> Result<SpectralField> {
    let sh = match shear {
        None => return Ok(diag(&tb.e, w)),
        Some(sh) => sh,
    };
    let h = tb.h;
    let mut b = |x: &SpectralField| -> Result<SpectralField> { Ok(cache.advection(sh, x)?.scaled(-1.0)) };
    let b_p1w = b(&diag(&tb.phi1, w))?;
    let b_p2w = b(&diag(&tb.phi2, w))?;
    let b_p1_b_p2w = b(&diag(&tb.phi1, &b_p2w))?;
    let mut out = diag(&tb.e, w);
    out.axpy(-h, &b_p1w);
    out.axpy(-h, &diag(&tb.e, &b_p2w));
    out.axpy(h * h, &b_p1_b_p2w);
    out.axpy(h, &b_p2w);
    Ok(out)
}

/// Transpose of [`linear_propagate`] over the same step schedule: steps
/// run in reverse order, which is the time-reversed equation with the
/// advection sign flipped.
pub fn linear_propagate_adjoint(spec: &FlowSpec, s: f64, t: f64, g: &SpectralField, cfg: &LinearConfig) -> Result<SpectralField> {
    if t < s {
        return Err(Error::NegativeTime(t - s));
    }
    let sched = step_schedule(spec, s, t, cfg)?;
    let mut tables = TableCache::default();
    let mut cache = ShearCache::new(g.grid());
    let mut w = g.clone();
    for &(_, h, shear) in sched.iter().rev() {
        w = linear_step_adjoint(&w, &tables.get(g.grid(), h), shear, &mut cache)?;
    }
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    PowerIteration,
    RandomSup,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certified {
    /// Power iteration met its tolerance.
    Converged,
    /// A Rayleigh quotient or sampled ratio; never above the true norm.
    LowerBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormConfig {
    pub method: NormMethod,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub linear: LinearConfig,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            method: NormMethod::PowerIteration,
            tol: 1e-4,
            max_iter: 60,
            seed: 0,
            linear: LinearConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorNorm {
    pub value: f64,
    pub iterations: usize,
    pub certified: Certified,
}

/// Random mean-zero unit field in the two-thirds band.
fn probe(grid: Grid, seed: u64) -> SpectralField {
    let mut f = SpectralField::random_smooth(grid, grid.n() / 3, seed);
    truncate_two_thirds(&mut f);
    f.set_mean(0.0);
    let l2 = f.l2_norm();
    f.scaled(1.0 / l2)
}

/// Power iteration on `S^* S` from `x`; also returns the last iterate so a
/// nearby query can start from it.
fn power_norm(
    spec: &FlowSpec,
    s: f64,
    t: f64,
    mut x: SpectralField,
    cfg: &NormConfig,
) -> Result<(OperatorNorm, SpectralField)> {
    let mut prev = f64::NAN;
    for it in 1..=cfg.max_iter {
        let y = linear_propagate(spec, s, t, &x, &cfg.linear)?;
        let est = y.l2_norm();
        if (est - prev).abs() <= cfg.tol * est {
            let n = OperatorNorm {
                value: est,
                iterations: it,
                certified: Certified::Converged,
            };
            return Ok((n, x));
        }
        prev = est;
        let mut z = linear_propagate_adjoint(spec, s, t, &y, &cfg.linear)?;
        z.set_mean(0.0);
        truncate_two_thirds(&mut z);
        let zn = z.l2_norm();
        if zn == 0.0 {
            let n = OperatorNorm {
                value: 0.0,
                iterations: it,
                certified: Certified::Converged,
            };
            return Ok((n, x));
        }
        x = z.scaled(1.0 / zn);
    }
    let n = OperatorNorm {
        value: prev,
        iterations: cfg.max_iter,
        certified: Certified::LowerBound,
    };
    Ok((n, x))
}

/// `||S_{s,t}||` on mean-zero L2.
pub fn operator_norm(spec: &FlowSpec, grid: Grid, s: f64, t: f64, cfg: &NormConfig) -> Result<OperatorNorm> {
    if !(cfg.tol > 0.0 && cfg.tol <= 0.1) {
        return Err(Error::params(format!("operator norm tol {} must lie in (0, 0.1]", cfg.tol)));
    }
    match cfg.method {
        NormMethod::PowerIteration => Ok(power_norm(spec, s, t, probe(grid, cfg.seed), cfg)?.0),
        NormMethod::RandomSup => {
            let vals: Vec<f64> = (0..cfg.max_iter.max(1))
                .into_par_iter()
                .map(|i| {
                    let x = probe(grid, cfg.seed.wrapping_add(i as u64));
                    linear_propagate(spec, s, t, &x, &cfg.linear).map(|y| y.l2_norm())
                })
                .collect::<Result<_>>()?;
            Ok(OperatorNorm {
                value: vals.into_iter().fold(0.0, f64::max),
                iterations: cfg.max_iter.max(1),
                certified: Certified::LowerBound,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DissipationConfig {
    /// Relative width of the final bisection bracket.
    pub tol: f64,
    /// Start times per flow period.
    pub s_samples: usize,
    pub norm: NormConfig,
}

impl Default for DissipationConfig {
    fn default() -> Self {
        DissipationConfig {
            tol: 1e-3,
            s_samples: 8,
            norm: NormConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DissipationEstimate {
    pub tau_star: f64,
    pub method: NormMethod,
    pub norm_at_tau: f64,
    pub iterations: usize,
    pub certified: Certified,
}

/// Smallest `t` with `sup_s ||S_{s,s+t}|| <= 1/2`, by bisection.
const WARM_MIX: f64 = 0.05;

pub fn dissipation_time(spec: &FlowSpec, grid: Grid, cfg: &DissipationConfig) -> Result<DissipationEstimate> {
    if cfg.s_samples == 0 {
        return Err(Error::params("need at least one start time"));
    }
    let starts: Vec<f64> = match spec.period() {
        Some(p) => (0..cfg.s_samples).map(|i| p * i as f64 / cfg.s_samples as f64).collect(),
        None => vec![0.0],
    };
    // power iteration restarts from the previous singular vector for the
    // same start time, nudged by the probe so no direction is lost
    let mut warm: Vec<Option<SpectralField>> = vec![None; starts.len()];
    let mut worst = |t: f64| -> Result<OperatorNorm> {
        let pairs: Vec<(OperatorNorm, SpectralField)> = starts
            .par_iter()
            .zip(warm.par_iter())
            .map(|(&s, w)| match (cfg.norm.method, w) {
                (NormMethod::PowerIteration, Some(w)) => {
                    let mut x = w.add(&probe(grid, cfg.norm.seed).scaled(WARM_MIX));
                    x = x.scaled(1.0 / x.l2_norm());
                    power_norm(spec, s, s + t, x, &cfg.norm)
                }
                (NormMethod::PowerIteration, None) => power_norm(spec, s, s + t, probe(grid, cfg.norm.seed), &cfg.norm),
                (NormMethod::RandomSup, _) => {
                    operator_norm(spec, grid, s, s + t, &cfg.norm).map(|n| (n, SpectralField::zeros(grid)))
                }
            })
            .collect::<Result<_>>()?;
        let mut norms = Vec::with_capacity(pairs.len());
        for (slot, (n, x)) in warm.iter_mut().zip(pairs) {
            if cfg.norm.method == NormMethod::PowerIteration {
                *slot = Some(x);
            }
            norms.push(n);
        }
        let mut out = norms[0];
        let mut iters = 0;
        for n in &norms {
            iters += n.iterations;
            if n.value > out.value {
                out = *n;
            }
            if n.certified == Certified::LowerBound {
                out.certified = Certified::LowerBound;
            }
        }
        out.iterations = iters;
        Ok(out)
    };
    // Poincare: ||S_{s,s+t}|| <= exp(-t s^4) whatever the flow
    let k1 = grid.scale().factor().powi(4);
    let mut hi = 1.05 * LN_2 / k1;
    let mut at_hi = worst(hi)?;
    let mut total_iter = at_hi.iterations;
    if at_hi.value > 0.5 {
        return Err(Error::BracketError {
            lo: 0.0,
            hi,
            reason: format!("norm {} > 1/2 at the Poincare bound", at_hi.value),
        });
    }
    let mut lo = hi;
    let mut found = false;
    for _ in 0..60 {
        lo *= 0.5;
        let v = worst(lo)?;
        total_iter += v.iterations;
        if v.value > 0.5 {
            found = true;
            break;
        }
        hi = lo;
        at_hi = v;
    }
    if !found {
        return Err(Error::BracketError {
            lo,
            hi,
            reason: "norm stays below 1/2 down to the smallest scanned time".into(),
        });
    }
    while hi / lo - 1.0 > cfg.tol {
        let mid = (lo * hi).sqrt();
        let v = worst(mid)?;
        total_iter += v.iterations;
        if v.value > 0.5 {
            lo = mid;
        } else {
            hi = mid;
            at_hi = v;
        }
    }
    Ok(DissipationEstimate {
        tau_star: hi,
        method: cfg.norm.method,
        norm_at_tau: at_hi.value,
        iterations: total_iter,
        certified: at_hi.certified,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowCondition {
    pub t1: f64,
    pub terms: [f64; 3],
    pub lhs: f64,
    pub satisfied: bool,
}

/// `||v||_inf tau*^{5/4} + tau*^{3/4} <= T1(||u0||_2)`.
pub fn flow_condition(spec: &FlowSpec, tau_star: f64, u0_l2: f64, params: &ModelParams) -> Result<FlowCondition> {
    let terms = model::t1_terms(u0_l2, params)?;
    let t1 = terms.iter().cloned().fold(f64::INFINITY, f64::min);
    let lhs = spec.sup_norm() * tau_star.powf(1.25) + tau_star.powf(0.75);
    Ok(FlowCondition {
        t1,
        terms,
        lhs,
        satisfied: lhs <= t1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub t: f64,
    pub raw: f64,
    pub normalized: f64,
}

/// `||e^{-tL} f - S_{0,t} f||_2 / (t^{1/4} ||v||_inf ||f||_1)` on `t_grid`.
pub fn linear_coupling_gap(spec: &FlowSpec, f: &SpectralField, t_grid: &[f64], cfg: &LinearConfig) -> Result<Vec<GapRow>> {
    let l1 = norm_oversampled(f, NormKind::Lp(1.0), 2)?;
    if l1 == 0.0 {
        return Err(Error::params("coupling gap needs nonzero data"));
    }
    let vsup = spec.sup_norm();
    let mut times = t_grid.to_vec();
    times.sort_by(f64::total_cmp);
    let mut phi = f.clone();
    let mut t_prev = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in &times {
        phi = linear_propagate(spec, t_prev, t, &phi, cfg)?;
        t_prev = t;
        let theta = apply_semigroup(t, f)?;
        let raw = theta.sub(&phi).l2_norm();
        let normalized = if vsup == 0.0 { 0.0 } else { raw / (t.powf(0.25) * vsup * l1) };
        out.push(GapRow { t, raw, normalized });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::WavenumberScale;

    fn grid(n: usize, scale: WavenumberScale) -> Grid {
        Grid::new(n, scale).unwrap()
    }

    fn band_limited(g: Grid, seed: u64) -> SpectralField {
        probe(g, seed)
    }

    #[test]
    fn zero_flow_samples_zero() {
        let g = grid(16, WavenumberScale::TwoPi);
        for t in [0.0, 0.3, 10.0] {
            let [a, b] = sample_velocity(&FlowSpec::zero(), g, t).unwrap();
            assert_eq!(a.l2_norm() + b.l2_norm(), 0.0);
        }
    }

    #[test]
    fn shear_halves_and_divergence() {
        let g = grid(16, WavenumberScale::TwoPi);
        let spec = FlowSpec::alternating_shear(1.0, 0.5, 3);
        let [_, v2] = sample_velocity(&spec, g, 0.2).unwrap();
        assert_eq!(v2.l2_norm(), 0.0);
        let [v1, _] = sample_velocity(&spec, g, 0.7).unwrap();
        assert_eq!(v1.l2_norm(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s = FlowSpec {
                amplitude: rng.gen_range(0.1..100.0),
                ..FlowSpec::alternating_shear(rng.gen_range(0.1..3.0), rng.gen_range(0.01..1.0), rng.gen())
            };
            let v = sample_velocity(&s, g, rng.gen_range(0.0..5.0)).unwrap();
            let div = SpectralField::divergence(&v).unwrap();
            assert!(div.l2_norm() <= 1e-10 * (1.0 + v[0].l2_norm() + v[1].l2_norm()));
        }
    }

    #[test]
    fn sampled_velocity_matches_profile() {
        let g = grid(16, WavenumberScale::Unit);
        let spec = FlowSpec::alternating_shear(2.0, 0.5, 9);
        for t in [0.1, 0.6] {
            let sh = spec.shear_at(t).unwrap();
            let v = sample_velocity(&spec, g, t).unwrap();
            let comp = if sh.axis == ShearAxis::Horizontal { 0 } else { 1 };
            let phys = v[comp].to_physical();
            for (a, b) in phys.data().iter().zip(sh.profile(g)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn shift_advection_matches_padded_product() {
        for scale in [WavenumberScale::Unit, WavenumberScale::TwoPi] {
            let g = grid(32, scale);
            let u = SpectralField::random_smooth(g, 8, 4);
            for (axis, k) in [(ShearAxis::Horizontal, 1), (ShearAxis::Vertical, 3)] {
                let sh = Shear { axis, amplitude: 1.7, phase: 0.4, k };
                let [v1, v2] = sh.sample(g).unwrap();
                let grad = u.gradient();
                let mut want = crate::spectral::product(&v1, &grad[0], crate::spectral::DealiasRule::Padded(2)).unwrap();
                want.axpy(1.0, &crate::spectral::product(&v2, &grad[1], crate::spectral::DealiasRule::Padded(2)).unwrap());
                truncate_two_thirds(&mut want);
                want.set_mean(0.0);
                let got = ShearCache::new(g).advection(sh, &u).unwrap();
                assert!(got.sub(&want).l2_norm() <= 1e-12 * want.l2_norm(), "{axis:?}");
            }
        }
    }

    #[test]
    fn rescaling() {
        let spec = FlowSpec::alternating_shear(1.5, 0.5, 1);
        assert_eq!(rescale_flow(&spec, 1.0).unwrap(), spec);
        let r = rescale_flow(&spec, 4.0).unwrap();
        assert_eq!(r.sup_norm(), 4.0 * spec.sup_norm());
        let base = spec.switch_times(0.0, 3.0);
        let fast = r.switch_times(0.0, 3.0 / 4.0);
        assert_eq!(base.len(), fast.len());
        for (a, b) in base.iter().zip(&fast) {
            assert!((a / 4.0 - b).abs() < 1e-14);
        }
        // v_A(x, t) = A v(x, A t)
        let g = grid(16, WavenumberScale::TwoPi);
        let t = 0.13;
        let a = sample_velocity(&r, g, t).unwrap();
        let b = sample_velocity(&spec, g, 4.0 * t).unwrap();
        assert!(a[0].sub(&b[0].scaled(4.0)).l2_norm() < 1e-14);
        assert!(rescale_flow(&spec, 0.0).is_err());
    }

    #[test]
    fn user_table_cycles() {
        let spec = FlowSpec {
            family: FlowFamily::UserTable {
                segments: vec![
                    Segment {
                        duration: 0.25,
                        shear: Shear { axis: ShearAxis::Horizontal, amplitude: 1.0, phase: 0.0, k: 1 },
                    },
                    Segment {
                        duration: 0.75,
                        shear: Shear { axis: ShearAxis::Vertical, amplitude: 2.0, phase: 0.5, k: 2 },
                    },
                ],
            },
            amplitude: 2.0,
        };
        assert_eq!(spec.switch_times(0.0, 1.0), vec![0.125, 0.5, 0.625]);
        assert_eq!(spec.shear_at(0.55).unwrap().axis, ShearAxis::Horizontal);
        assert_eq!(spec.shear_at(0.2).unwrap().amplitude, 4.0);
    }

    #[test]
    fn zero_flow_propagation_is_semigroup() {
        let g = grid(32, WavenumberScale::TwoPi);
        let f = SpectralField::random_smooth(g, 10, 2);
        let a = linear_propagate(&FlowSpec::zero(), 0.1, 0.1 + 3e-4, &f, &LinearConfig::default()).unwrap();
        let b = apply_semigroup(3e-4, &f).unwrap();
        assert!(a.sub(&b).l2_norm() <= 1e-14 * f.l2_norm());
        let c = SpectralField::constant(g, 2.0);
        let spec = FlowSpec::alternating_shear(5.0, 0.5, 1);
        let out = linear_propagate(&spec, 0.0, 0.7, &c, &LinearConfig::default()).unwrap();
        assert!(out.sub(&c).l2_norm() < 1e-14);
    }

    #[test]
    fn mean_conserved_and_l2_monotone() {
        let g = grid(32, WavenumberScale::Unit);
        let spec = rescale_flow(&FlowSpec::alternating_shear(1.0, 0.5, 4), 20.0).unwrap();
        let mut f = band_limited(g, 8);
        f.set_mean(0.7);
        let cfg = LinearConfig::default();
        let mut prev = f.clone();
        for i in 1..=40 {
            let t = 0.01 * i as f64;
            let next = linear_propagate(&spec, t - 0.01, t, &prev, &cfg).unwrap();
            assert!((next.mean() - 0.7).abs() <= 1e-12);
            let (mut a, mut b) = (next.clone(), prev.clone());
            a.set_mean(0.0);
            b.set_mean(0.0);
            assert!(a.l2_norm() <= b.l2_norm());
            prev = next;
        }
    }

    #[test]
    fn adjoint_identity() {
        let g = grid(32, WavenumberScale::Unit);
        let spec = rescale_flow(&FlowSpec::alternating_shear(1.0, 0.5, 2), 10.0).unwrap();
        let cfg = LinearConfig::default();
        let (f, h) = (band_limited(g, 1), band_limited(g, 2));
        let (s, t) = (0.013, 0.21);
        let sf = linear_propagate(&spec, s, t, &f, &cfg).unwrap();
        let sh = linear_propagate_adjoint(&spec, s, t, &h, &cfg).unwrap();
        let (a, b) = (sf.inner(&h), f.inner(&sh));
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-300), "{a} vs {b}");
    }

    #[test]
    fn zero_flow_norm_closed_form() {
        let cfg = NormConfig::default();
        let g = grid(32, WavenumberScale::TwoPi);
        let k4 = (2.0 * PI).powi(4);
        for dt in [1e-4, 4e-4, 1e-3] {
            let n = operator_norm(&FlowSpec::zero(), g, 0.0, dt, &cfg).unwrap();
            let want = (-k4 * dt).exp();
            assert!((n.value / want - 1.0).abs() < 1e-2, "{} vs {want}", n.value);
        }
    }

    #[test]
    fn norm_dominates_samples() {
        let g = grid(16, WavenumberScale::Unit);
        let spec = rescale_flow(&FlowSpec::alternating_shear(1.0, 0.5, 2), 10.0).unwrap();
        let cfg = NormConfig::default();
        let n = operator_norm(&spec, g, 0.0, 0.3, &cfg).unwrap();
        for seed in 0..5 {
            let f = band_limited(g, 100 + seed);
            let r = linear_propagate(&spec, 0.0, 0.3, &f, &cfg.linear).unwrap().l2_norm();
            assert!(r <= n.value * (1.0 + 1e-6));
        }
        let rs = operator_norm(&spec, g, 0.0, 0.3, &NormConfig { method: NormMethod::RandomSup, max_iter: 6, ..cfg }).unwrap();
        assert!(rs.value <= n.value * (1.0 + 1e-6));
        assert_eq!(rs.certified, Certified::LowerBound);
    }

    #[test]
    fn zero_flow_dissipation_time() {
        let cfg = DissipationConfig::default();
        let tp = dissipation_time(&FlowSpec::zero(), grid(16, WavenumberScale::TwoPi), &cfg).unwrap();
        let want = LN_2 / (16.0 * PI.powi(4));
        assert!((tp.tau_star / want - 1.0).abs() < 1e-2);
        assert!(tp.norm_at_tau <= 0.5);
        let un = dissipation_time(&FlowSpec::zero(), grid(16, WavenumberScale::Unit), &cfg).unwrap();
        assert!((un.tau_star / LN_2 - 1.0).abs() < 1e-2);
    }

    #[test]
    fn flow_condition_terms() {
        let params = ModelParams::default();
        let c = flow_condition(&FlowSpec::zero(), 1e-6, 1.0, &params).unwrap();
        assert!((c.t1 - 0.1778).abs() < 1e-4);
        assert!(c.satisfied);
        let mut prev = f64::INFINITY;
        for b in [0.5, 1.0, 2.0, 4.0] {
            let v = model::t1(b, &params).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        let spec = FlowSpec::alternating_shear(1.0, 0.5, 0);
        let mut last = f64::INFINITY;
        for tau in [1e-1, 1e-2, 1e-3, 1e-4] {
            let c = flow_condition(&spec, tau, 1.0, &params).unwrap();
            assert!(c.lhs < last);
            last = c.lhs;
        }
        assert!(flow_condition(&spec, 1e-4, 1.0, &params).unwrap().satisfied);
    }

    #[test]
    fn coupling_gap_zero_for_zero_flow() {
        let g = grid(16, WavenumberScale::TwoPi);
        let f = SpectralField::random_smooth(g, 5, 1);
        let rows = linear_coupling_gap(&FlowSpec::zero(), &f, &[1e-4, 1e-3], &LinearConfig::default()).unwrap();
        assert!(rows.iter().all(|r| r.normalized == 0.0 && r.raw < 1e-15));
        let spec = FlowSpec::alternating_shear(1.0, 0.5, 0);
        let rows = linear_coupling_gap(&spec, &f, &[1e-7, 1e-6, 1e-5], &LinearConfig::default()).unwrap();
        assert!(rows[0].raw < rows[1].raw && rows[1].raw < rows[2].raw);
    }
}

//! The thin-film nonlinearity, its energies, and the closed-form
//! continuation and blow-up quantities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{banded_divergence_packed, padded_gradient_packed, SpectralField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub p: f64,
    pub rho: f64,
    pub a_p: f64,
    /// The unnamed constant `C` of the `T1` threshold.
    pub c_t1: f64,
    pub mu: f64,
    /// When false the flux is dropped and the equation is linear.
    pub nonlinear: bool,
    /// Oversampling factor for evaluating the flux in physical space.
    pub dealias_pad: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            p: 2.5,
            rho: 0.0,
            a_p: 1.0,
            c_t1: 1.0,
            mu: 1.0,
            nonlinear: true,
            dealias_pad: 2,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0 && self.p < 3.0) {
            return Err(Error::params(format!("p = {} must lie in (2, 3)", self.p)));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::params(format!("rho = {} must be >= 0", self.rho)));
        }
        for (name, v) in [("a_p", self.a_p), ("c_t1", self.c_t1), ("mu", self.mu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::params(format!("{name} = {v} must be positive")));
            }
        }
        if !(1..=4).contains(&self.dealias_pad) {
            return Err(Error::params(format!("dealias_pad = {} must be 1..=4", self.dealias_pad)));
        }
        Ok(())
    }

    pub fn linear(&self) -> Self {
        ModelParams {
            nonlinear: false,
            ..self.clone()
        }
    }

    /// Exponent `2/(3-p)` of the L2 term in the energy estimate.
    pub fn gn_exponent(&self) -> f64 {
        2.0 / (3.0 - self.p)
    }
}

/// `F_rho(xi) = (|xi|^2 + rho)^{(p-2)/2} xi`, with `F(0) = 0` for `rho = 0`.
#[inline]
pub fn flux_point(xi: (f64, f64), p: f64, rho: f64) -> (f64, f64) {
    let w = (xi.0 * xi.0 + xi.1 * xi.1 + rho).powf(0.5 * (p - 2.0));
    (w * xi.0, w * xi.1)
}

/// Pointwise flux of a sampled gradient field.
pub fn flux(gx: &[f64], gy: &[f64], params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    let w = flux_weight(params);
    gx.iter()
        .zip(gy)
        .map(|(&a, &b)| {
            let k = w(a * a + b * b);
            (k * a, k * b)
        })
        .unzip()
}

/// `s -> (s + rho)^{(p-2)/2}`. p = 2.5 and p = 3 use roots; pow dominates
/// the step otherwise.
fn flux_weight(params: &ModelParams) -> impl Fn(f64) -> f64 {
    let (p, rho) = (params.p, params.rho);
    let e = 0.5 * (p - 2.0);
    move |s: f64| {
        let s = s + rho;
        if p == 2.5 {
            s.sqrt().sqrt()
        } else if p == 3.0 {
            s.sqrt()
        } else {
            s.powf(e)
        }
    }
}

/// `N(u) = div F_rho(grad u)`: spectral gradient, flux on the padded grid,
/// spectral divergence, two-thirds truncation.
pub fn nonlinear_term(u: &SpectralField, params: &ModelParams) -> Result<SpectralField> {
    let g = u.grid();
    if !params.nonlinear {
        return Ok(SpectralField::zeros(g));
    }
    let (m, mut buf) = padded_gradient_packed(u, params.dealias_pad)?;
    let w = flux_weight(params);
    for z in buf.iter_mut() {
        let k = w(z.re * z.re + z.im * z.im);
        *z *= k;
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFiniteField);
        }
    }
    Ok(banded_divergence_packed(buf, m, g))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub e: f64,
    /// `||Delta u||^2 / 2`.
    pub bending: f64,
    /// `||grad u||_p^p / p`.
    pub stretch: f64,
    pub e_rho: Option<f64>,
    pub g_rho: f64,
}

/// Integrals of `|grad u|` needed by the energies, on the flux quadrature.
struct GradIntegrals {
    lp: f64,
    e_rho_term: f64,
    g_rho_term: f64,
}

fn grad_integrals(u: &SpectralField, params: &ModelParams) -> Result<GradIntegrals> {
    let (_, buf) = padded_gradient_packed(u, params.dealias_pad)?;
    let (p, rho) = (params.p, params.rho);
    let m = buf.len() as f64;
    let mut acc = GradIntegrals {
        lp: 0.0,
        e_rho_term: 0.0,
        g_rho_term: 0.0,
    };
    let (rp, rp2) = (rho.powf(0.5 * p), rho.powf(0.5 * (p - 2.0)));
    for z in &buf {
        let s = z.norm_sqr();
        acc.lp += s.powf(0.5 * p);
        if rho > 0.0 {
            acc.e_rho_term += (s + rho).powf(0.5 * p) - rp;
            acc.g_rho_term += (s + rho).powf(0.5 * (p - 2.0)) - rp2;
        }
    }
    acc.lp /= m;
    acc.e_rho_term /= m;
    acc.g_rho_term /= m;
    Ok(acc)
}

/// `\int |grad u|^p` on the same quadrature as [`nonlinear_term`].
pub fn grad_lp_p(u: &SpectralField, params: &ModelParams) -> Result<f64> {
    Ok(grad_integrals(u, params)?.lp)
}

pub fn energy(u: &SpectralField, params: &ModelParams) -> Result<EnergyReport> {
    let lap = u.laplacian().l2_norm();
    let bending = 0.5 * lap * lap;
    if !params.nonlinear {
        return Ok(EnergyReport {
            e: bending,
            bending,
            stretch: 0.0,
            e_rho: (params.rho > 0.0).then_some(bending),
            g_rho: (params.p - 2.0) * lap * lap,
        });
    }
    let gi = grad_integrals(u, params)?;
    let p = params.p;
    let stretch = gi.lp / p;
    Ok(EnergyReport {
        e: bending - stretch,
        bending,
        stretch,
        e_rho: (params.rho > 0.0).then(|| bending - gi.e_rho_term / p),
        g_rho: (p - 2.0) * lap * lap - 2.0 * params.rho * gi.g_rho_term,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApEstimateConfig {
    pub samples: usize,
    pub seed: u64,
    /// Largest mode index `max(|k1|,|k2|)` of the random trial fields.
    pub kmax: usize,
    pub refine_steps: usize,
    pub floor: f64,
}

impl Default for ApEstimateConfig {
    fn default() -> Self {
        ApEstimateConfig {
            samples: 128,
            seed: 0,
            kmax: 6,
            refine_steps: 40,
            floor: 1e-3,
        }
    }
}

/// Sampled lower bound on `A_p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApEstimate {
    pub value: f64,
    pub best_sample: usize,
    pub best_eta: f64,
    /// Maximizing `eta` of each sample, in sample order.
    pub etas: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// `(eta^p P - eta^2 B)_+ / eta^gamma` for a unit-L2 profile with
/// `P = ||grad phi||_p^p`, `B = ||Delta phi||^2 / 2`.
fn ap_ratio(eta: f64, pp: f64, bb: f64, p: f64, gamma: f64) -> f64 {
    (eta.powf(p) * pp - eta * eta * bb).max(0.0) / eta.powf(gamma)
}

/// Golden-section search for the maximizing `eta` of [`ap_ratio`] over
/// `log eta` in `[-30, 30]`; the ratio is unimodal there.
pub fn ap_line_search(pp: f64, bb: f64, p: f64, gamma: f64) -> (f64, f64) {
    let f = |x: f64| ap_ratio(x.exp(), pp, bb, p, gamma);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-30.0f64, 30.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x.exp(), f(x))
}

fn sample_seed(base: u64, i: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn profile_ratio(phi: &SpectralField, params: &ModelParams) -> Result<(f64, f64)> {
    let l2 = phi.l2_norm();
    let unit = phi.scaled(1.0 / l2);
    let pp = grad_lp_p(&unit, params)?;
    let lap = unit.laplacian().l2_norm();
    let (eta, r) = ap_line_search(pp, 0.5 * lap * lap, params.p, params.gn_exponent());
    Ok((eta / l2, r))
}

/// Lower bound on the constant `A_p` in
/// `||grad u||_p^p <= ||Delta u||^2/2 + A_p ||u||_2^{2/(3-p)}` from random
/// band-limited trial fields on `grid`, each optimized over its amplitude,
/// followed by a random-perturbation hill climb from the best sample.
pub fn estimate_ap(grid: crate::spectral::Grid, params: &ModelParams, cfg: &ApEstimateConfig) -> Result<ApEstimate> {
    params.validate()?;
    if cfg.samples < 100 {
        return Err(Error::params(format!("sample budget {} < 100", cfg.samples)));
    }
    let kmax = cfg.kmax.clamp(1, grid.n() / 3);
    let results: Vec<(f64, f64)> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let seed = sample_seed(cfg.seed, i);
            let k = 1 + (seed % kmax as u64) as usize;
            let phi = SpectralField::random_smooth(grid, k, seed);
            profile_ratio(&phi, params)
        })
        .collect::<Result<_>>()?;
    let (etas, mut ratios): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    let (mut best, mut best_val) = (0, f64::NEG_INFINITY);
    for (i, &r) in ratios.iter().enumerate() {
        if r > best_val {
            best = i;
            best_val = r;
        }
    }
    if !(best_val > 0.0) {
        return Err(Error::DegenerateEstimate { floor: cfg.floor });
    }
    let seed = sample_seed(cfg.seed, best);
    let mut phi = SpectralField::random_smooth(grid, 1 + (seed % kmax as u64) as usize, seed);
    let mut best_eta = etas[best];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_A5A5);
    let mut step = 0.2;
    for i in 0..cfg.refine_steps {
        let mut trial = SpectralField::random_smooth(grid, kmax, rng.gen());
        trial.scale(step);
        let cand = phi.add(&trial);
        let (eta, r) = profile_ratio(&cand, params)?;
        if r > best_val {
            best_val = r;
            best_eta = eta;
            phi = cand;
        } else if i % 8 == 7 {
            step *= 0.5;
        }
    }
    ratios[best] = ratios[best].max(best_val);
    Ok(ApEstimate {
        value: best_val,
        best_sample: best,
        best_eta,
        etas,
        ratios,
    })
}

/// `T0^2(B) = \int_B^{2B} y / (A_p y^{2/(3-p)}) dy` in closed form.
pub fn t0_squared(b: f64, params: &ModelParams) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::params(format!("B = {b} must be positive")));
    }
    let alpha = (1.0 - params.p) / (3.0 - params.p);
    let a1 = alpha + 1.0;
    Ok(b.powf(a1) * (2f64.powf(a1) - 1.0) / (a1 * params.a_p))
}

/// The three terms whose minimum is the threshold `T1` for `B = ||u0||_2`.
pub fn t1_terms(b: f64, params: &ModelParams) -> Result<[f64; 3]> {
    let p = params.p;
    let inner = params.a_p * b.powf(2.0 * (p - 2.0) / (3.0 - p)) + params.mu;
    let first = 2.0 / (5.0 * params.c_t1 * inner.powf(p / 4.0) * b.powf(p - 2.0));
    let second = (1.0 / (10.0 * params.mu)).powf(0.75);
    let third = t0_squared(b, params)?.powf(0.75);
    Ok([first, second, third])
}

pub fn t1(b: f64, params: &ModelParams) -> Result<f64> {
    Ok(t1_terms(b, params)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Finite-time blow-up bounds for data of negative energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupBounds {
    pub t_max_upper: f64,
    pub l2_0: f64,
    pub e0: f64,
    pub p: f64,
}

impl BlowupBounds {
    pub fn from_values(l2_0: f64, e0: f64, p: f64) -> Option<Self> {
        (e0 < 0.0).then(|| BlowupBounds {
            t_max_upper: -l2_0 * l2_0 / (p * (p - 2.0) * e0),
            l2_0,
            e0,
            p,
        })
    }

    /// `(||u0||^p / (||u0||^2 + p(p-2) E0 t))^{1/(p-2)}`; infinite at and
    /// beyond `t_max_upper`.
    pub fn lower_curve(&self, t: f64) -> f64 {
        let p = self.p;
        let den = self.l2_0 * self.l2_0 + p * (p - 2.0) * self.e0 * t;
        if den <= 0.0 {
            return f64::INFINITY;
        }
        (self.l2_0.powf(p) / den).powf(1.0 / (p - 2.0))
    }
}

/// `None` unless `E(u0) < 0`.
pub fn blowup_bounds(u0: &SpectralField, params: &ModelParams) -> Result<Option<BlowupBounds>> {
    let e0 = energy(u0, &ModelParams { rho: 0.0, ..params.clone() })?.e;
    Ok(BlowupBounds::from_values(u0.l2_norm(), e0, params.p))
}

pub fn blowup_rate_exponent(p: f64) -> f64 {
    (3.0 - p) / (2.0 * (p - 2.0))
}

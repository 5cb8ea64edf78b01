//! The hyper-diffusion semigroup `e^{-tL}`, `L = Delta^2`, and empirical
//! checks of its smoothing rates.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{bilaplacian_symbol, frac_symbol, norm, norm_oversampled, Grid, NormKind, SpectralField};

/// Multiplier table `exp(-t |sk|^4)` for one grid and one time.
#[derive(Clone, Debug)]
pub struct PropagatorPlan {
    grid: Grid,
    t: f64,
    table: Vec<f64>,
}

impl PropagatorPlan {
    pub fn new(grid: Grid, t: f64) -> Result<Self> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        let table = (0..grid.len()).map(|idx| (-t * bilaplacian_symbol(&grid, idx)).exp()).collect();
        Ok(PropagatorPlan { grid, t, table })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn apply(&self, f: &SpectralField) -> Result<SpectralField> {
        if f.grid() != self.grid {
            return Err(Error::GridMismatch {
                left: self.grid.to_string(),
                right: f.grid().to_string(),
            });
        }
        Ok(f.apply_real_symbol(|idx| self.table[idx]))
    }
}

pub fn apply_semigroup(t: f64, f: &SpectralField) -> Result<SpectralField> {
    PropagatorPlan::new(f.grid(), t)?.apply(f)
}

/// `(-Delta)^{s/2} e^{-tL} f`.
pub fn apply_frac_semigroup(s: f64, t: f64, f: &SpectralField) -> Result<SpectralField> {
    if !(s > 0.0) {
        return Err(Error::InvalidExponent {
            value: s,
            reason: "fractional order must be positive",
        });
    }
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 {
        return Err(Error::SingularAtZero);
    }
    let g = f.grid();
    Ok(f.apply_real_symbol(|idx| frac_symbol(&g, idx, s) * (-t * bilaplacian_symbol(&g, idx)).exp()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phases {
    /// Independent uniform phases per mode pair.
    Random(u64),
    /// All coefficients real and positive; the field concentrates at the
    /// origin.
    Aligned,
}

/// Mean-zero data with `|f_hat(k)| = |k|^{2/q - 2}` on every non-Nyquist
/// mode, normalized to unit L2 norm.
///
/// This is the roughest profile whose `L^q` norm still grows only
/// logarithmically with `n`, so the smoothing rate of the `L^q -> X`
/// estimates is visible over the whole resolved range.
pub fn rough_data(grid: Grid, q: f64, phases: Phases) -> Result<SpectralField> {
    if !(q >= 1.0) {
        return Err(Error::InvalidExponent {
            value: q,
            reason: "Lebesgue exponent must be >= 1",
        });
    }
    let n = grid.n();
    let expo = 2.0 / q - 2.0;
    let mut rng = match phases {
        Phases::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Phases::Aligned => None,
    };
    let mut coeffs = vec![Complex64::default(); grid.len()];
    for i1 in 0..n {
        for i2 in 0..n {
            let idx = i1 * n + i2;
            let partner = ((n - i1) % n) * n + (n - i2) % n;
            if idx == 0 || grid.is_nyquist(i1) || grid.is_nyquist(i2) || partner < idx {
                continue;
            }
            let (k1, k2) = (grid.freq(i1) as f64, grid.freq(i2) as f64);
            let amp = (k1 * k1 + k2 * k2).powf(0.5 * expo);
            let phase = rng.as_mut().map_or(0.0, |r| r.gen_range(0.0..std::f64::consts::TAU));
            let c = Complex64::from_polar(amp, phase);
            coeffs[idx] = c;
            coeffs[partner] = c.conj();
        }
    }
    let mut f = SpectralField::from_coeffs(grid, coeffs)?;
    f.scale(1.0 / f.l2_norm());
    Ok(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "lemma")]
pub enum DecayLemma {
    /// `||e^{-tL} f||_2 <= C t^{-(p-2)/4} ||f||_{L^{2/(p-1)}}`.
    L2FromLq { p: f64 },
    /// `||(-Delta)^{s/2} e^{-tL} f||_2 <= C t^{-s/4} ||f||_2`.
    Frac { s: f64 },
    /// `||grad^j e^{-tL} f||_inf <= C_j t^{-1/(2r) - j/4} ||f||_r`.
    LinfFromLr { r: f64, j: u32 },
}

impl DecayLemma {
    pub fn target_slope(&self) -> f64 {
        match *self {
            DecayLemma::L2FromLq { p } => -(p - 2.0) / 4.0,
            DecayLemma::Frac { s } => -s / 4.0,
            DecayLemma::LinfFromLr { r, j } => -1.0 / (2.0 * r) - j as f64 / 4.0,
        }
    }

    /// Lebesgue exponent of the data norm on the right-hand side.
    pub fn data_exponent(&self) -> f64 {
        match *self {
            DecayLemma::L2FromLq { p } => 2.0 / (p - 1.0),
            DecayLemma::Frac { .. } => 2.0,
            DecayLemma::LinfFromLr { r, .. } => r,
        }
    }

    /// Critical-roughness data matched to this lemma.
    pub fn rough_data(&self, grid: Grid, seed: u64) -> Result<SpectralField> {
        match self {
            DecayLemma::LinfFromLr { .. } => rough_data(grid, self.data_exponent(), Phases::Aligned),
            _ => rough_data(grid, self.data_exponent(), Phases::Random(seed)),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DecayLemma::L2FromLq { p } if !(p > 2.0 && p < 3.0) => Err(Error::InvalidExponent {
                value: p,
                reason: "p must lie in (2, 3)",
            }),
            DecayLemma::Frac { s } if !(s > 0.0) => Err(Error::InvalidExponent {
                value: s,
                reason: "fractional order must be positive",
            }),
            DecayLemma::LinfFromLr { r, .. } if !(r >= 1.0) => Err(Error::InvalidExponent {
                value: r,
                reason: "r must be >= 1",
            }),
            DecayLemma::LinfFromLr { j, .. } if j > 2 => Err(Error::InvalidExponent {
                value: j as f64,
                reason: "derivative order j must be 0, 1 or 2",
            }),
            _ => Ok(()),
        }
    }

    /// Left-hand side of the estimate at time `t`.
    pub fn lhs(&self, t: f64, f: &SpectralField) -> Result<f64> {
        match *self {
            DecayLemma::L2FromLq { .. } => Ok(apply_semigroup(t, f)?.l2_norm()),
            DecayLemma::Frac { s } => Ok(apply_frac_semigroup(s, t, f)?.l2_norm()),
            DecayLemma::LinfFromLr { j, .. } => {
                let w = apply_semigroup(t, f)?;
                sup_derivative(&w, j)
            }
        }
    }
}

/// Sup over a 2x oversampled grid of `|grad^j w|` (Frobenius norm for
/// the Hessian).
fn sup_derivative(w: &SpectralField, j: u32) -> Result<f64> {
    let fields: Vec<SpectralField> = match j {
        0 => vec![w.clone()],
        1 => w.gradient().to_vec(),
        _ => {
            let [a, b] = w.gradient();
            let [aa, ab] = a.gradient();
            let bb = b.partial(1);
            vec![aa, ab.clone(), ab, bb]
        }
    };
    let phys: Vec<_> = fields
        .iter()
        .map(|f| crate::spectral::physical_oversampled(f, 2).map(|p| p.into_data()))
        .collect::<Result<_>>()?;
    let len = phys[0].len();
    Ok((0..len)
        .map(|i| phys.iter().map(|p| p[i] * p[i]).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max))
}

/// Range of times in which the continuum scaling of a decay estimate is
/// visible on a given grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayWindow {
    pub t_min: f64,
    pub t_max: f64,
}

impl DecayWindow {
    /// Smoothing length `t^{1/4}` between 3 grid wavelengths at the top of
    /// the resolved band and a third of the slowest mode's wavelength.
    pub fn for_grid(grid: Grid) -> Self {
        let s = grid.scale().factor();
        let kmax = s * (grid.n() / 2) as f64;
        DecayWindow {
            t_min: (3.0 / kmax).powi(4),
            t_max: (1.0 / (3.0 * s)).powi(4),
        }
    }

    pub fn log_grid(&self, points: usize) -> Vec<f64> {
        log_space(self.t_min, self.t_max, points)
    }
}

pub fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    /// Log of the empirical constant.
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub target: f64,
    /// Times that fell inside the window.
    pub used: Vec<f64>,
    /// Data norm on the right-hand side of the estimate.
    pub data_norm: f64,
    /// For `L2FromLq`, the data norm in `L^{2/(p-2)}`, the exponent the
    /// proof's Hausdorff-Young step actually produces.
    pub alt_data_norm: Option<f64>,
}

impl DecayFit {
    pub fn constant(&self) -> f64 {
        self.intercept.exp()
    }
}

pub const MIN_FIT_POINTS: usize = 8;

/// Least-squares slope of `log(lhs / ||f||)` against `log t` over the
/// points of `t_grid` that fall inside `window`.
pub fn decay_exponent_fit(lemma: DecayLemma, f: &SpectralField, t_grid: &[f64], window: DecayWindow) -> Result<DecayFit> {
    lemma.validate()?;
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::params("fit times must be positive"));
    }
    let used: Vec<f64> = t_grid
        .iter()
        .copied()
        .filter(|&t| t >= window.t_min * (1.0 - 1e-12) && t <= window.t_max * (1.0 + 1e-12))
        .collect();
    if used.is_empty() && !t_grid.is_empty() {
        return Err(Error::SaturatedRegime(format!(
            "no time in [{:e}, {:e}] lies inside the scaling window [{:e}, {:e}]",
            t_grid.iter().cloned().fold(f64::INFINITY, f64::min),
            t_grid.iter().cloned().fold(0.0, f64::max),
            window.t_min,
            window.t_max
        )));
    }
    if used.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            have: used.len(),
            need: MIN_FIT_POINTS,
        });
    }
    let q = lemma.data_exponent();
    let data_norm = norm_oversampled(f, NormKind::Lp(q), 2)?;
    let alt_data_norm = match lemma {
        DecayLemma::L2FromLq { p } => Some(norm_oversampled(f, NormKind::Lp(2.0 / (p - 2.0)), 2)?),
        _ => None,
    };
    let mut xs = Vec::with_capacity(used.len());
    let mut ys = Vec::with_capacity(used.len());
    for &t in &used {
        let v = lemma.lhs(t, f)?;
        xs.push(t.ln());
        ys.push((v / data_norm).ln());
    }
    let (slope, intercept, residual) = linear_fit(&xs, &ys);
    Ok(DecayFit {
        slope,
        intercept,
        residual,
        target: lemma.target_slope(),
        used,
        data_norm,
        alt_data_norm,
    })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, rms residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    (a, b, (rss / m).sqrt())
}

/// L2 norm of `f` restricted to mean zero.
pub fn mean_free_l2(f: &SpectralField) -> Result<f64> {
    let mut g = f.clone();
    g.set_mean(0.0);
    norm(&g, NormKind::L2)
}

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{energy, ModelParams};
use crate::persist::read_checkpoint;
use crate::semigroup::linear_fit;
use crate::solvers::Trajectory;
use crate::spectral::{Grid, SpectralField};

use super::config::InitialDatum;

/// `a (cos x1 + cos x2)` on the `(1, 0)` and `(0, 1)` modes.
pub fn cosine_pair(grid: Grid, a: f64) -> Result<SpectralField> {
    let mut u = SpectralField::cosine_mode(grid, 1, 0, a, 0.0)?;
    u.axpy(1.0, &SpectralField::cosine_mode(grid, 0, 1, a, 0.0)?);
    Ok(u)
}

/// Random amplitudes and phases on `max(|k1|, |k2|) <= kmax`, drawn in a
/// fixed mode order so the same seed gives the same function on any grid
/// that resolves it. Unit L2 norm, zero mean.
pub fn seeded_modes(grid: Grid, kmax: i64, seed: u64) -> Result<SpectralField> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut u = SpectralField::zeros(grid);
    for k1 in -kmax..=kmax {
        for k2 in 0..=kmax {
            if k2 == 0 && k1 <= 0 {
                continue;
            }
            let (a, ph): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU));
            u.axpy(1.0, &SpectralField::cosine_mode(grid, k1, k2, a, ph)?);
        }
    }
    let l2 = u.l2_norm();
    Ok(u.scaled(1.0 / l2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Crossover {
    /// Smallest tested amplitude with `E < 0`.
    pub amplitude: f64,
    pub energy: f64,
    pub evaluations: usize,
}

/// Bisection on `a` for the sign change of `E(a (cos x1 + cos x2))`.
pub fn energy_crossover(grid: Grid, params: &ModelParams) -> Result<Crossover> {
    if !params.nonlinear {
        return Err(Error::params("energy is positive for the linear model"));
    }
    let params = ModelParams { rho: 0.0, ..params.clone() };
    let mut evals = 0;
    let mut e = |a: f64| -> Result<f64> {
        evals += 1;
        Ok(energy(&cosine_pair(grid, a)?, &params)?.e)
    };
    let mut hi = 1.0;
    while e(hi)? >= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::BracketError {
                lo: 0.0,
                hi,
                reason: "energy stays non-negative".into(),
            });
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if e(mid)? < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let energy = e(hi)?;
    Ok(Crossover {
        amplitude: hi,
        energy,
        evaluations: evals,
    })
}

pub fn build_datum(datum: &InitialDatum, grid: Grid, params: &ModelParams, seed: u64) -> Result<(SpectralField, Option<Crossover>)> {
    match datum {
        InitialDatum::CosinePair { amplitude } => Ok((cosine_pair(grid, *amplitude)?, None)),
        InitialDatum::NegativeEnergy { factor } => {
            let c = energy_crossover(grid, params)?;
            Ok((cosine_pair(grid, factor * c.amplitude)?, Some(c)))
        }
        InitialDatum::RandomSmooth { kmax, l2 } => {
            let f = SpectralField::random_smooth(grid, *kmax, seed);
            Ok((f.scaled(*l2), None))
        }
        InitialDatum::Checkpoint { path } => {
            let (f, _) = read_checkpoint(path)?;
            if f.grid() != grid {
                return Err(Error::GridMismatch {
                    left: f.grid().to_string(),
                    right: grid.to_string(),
                });
            }
            Ok((f, None))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayRate {
    pub mu: f64,
    pub beta: f64,
    /// RMS residual over the dynamic range of `log ||u||`.
    pub residual: f64,
    pub points: usize,
}

/// `log(||u(t)|| / ||u0||) = log beta - mu t`, fitted from the last time
/// `||u|| >= ||u0||` until `||u||` falls below `floor ||u0||`.
pub fn fit_decay(traj: &Trajectory, floor: f64) -> Option<DecayRate> {
    let u0 = traj.first().l2;
    if !(u0 > 0.0) {
        return None;
    }
    let rows = &traj.rows;
    let start = rows.iter().rposition(|r| r.l2 >= u0).map_or(0, |i| i + 1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows[start..]
        .iter()
        .take_while(|r| r.l2 >= floor * u0)
        .map(|r| (r.t, (r.l2 / u0).ln()))
        .unzip();
    if xs.len() < 3 {
        return None;
    }
    let (a, b, rms) = linear_fit(&xs, &ys);
    let range = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ys.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(DecayRate {
        mu: -a,
        beta: b.exp(),
        residual: if range > 0.0 { rms / range } else { f64::INFINITY },
        points: xs.len(),
    })
}

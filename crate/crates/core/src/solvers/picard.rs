//! Fixed-point iteration on the mild formulation
//! `u(t) = e^{-tL} u0 - int_0^t e^{-(t-s)L} (N(u) + P(v . grad u))(s) ds`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{FlowSpec, ShearCache};
use crate::model::{self, ModelParams};
use crate::quadrature::{chebyshev_lobatto, composite_rule, gauss_legendre, graded_panels, lagrange_basis, lobatto_weights};
use crate::spectral::{bilaplacian_symbol, Grid, SpectralField};

use super::integrate::diagnostics;
use super::trajectory::{Termination, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub nodes_per_panel: usize,
    pub panels: usize,
    pub grading_exponent: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes_per_panel: 8,
            panels: 12,
            grading_exponent: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    /// Horizon `T`.
    #[serde(rename = "T")]
    pub t_horizon: f64,
    /// Chebyshev-Lobatto intervals in time.
    pub time_nodes: usize,
    pub quadrature: QuadratureConfig,
    /// Stop once the defect in the S~_T norm falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Contraction radius; `None` uses `2 C0 ||u0||_2`.
    pub radius_r: Option<f64>,
    pub c0: f64,
    /// Dense output times in `(0, T]`; `T` is always included.
    pub output_times: Vec<f64>,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            t_horizon: 1e-3,
            time_nodes: 24,
            quadrature: QuadratureConfig::default(),
            tol: 1e-12,
            max_sweeps: 40,
            radius_r: None,
            c0: 1.0,
            output_times: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PicardResult {
    /// Rows and checkpoints at the output times (plus `t = 0`).
    pub trajectory: Trajectory,
    pub sweeps: usize,
    pub final_defect: f64,
    /// Largest ratio of consecutive defects.
    pub lipschitz_ratio: f64,
    pub radius_r: f64,
    pub t_formula: f64,
}

/// `min{1, (4 C0 R^{p-2} + 1)^{-2/(3-p)}, (16 C0^2 ||v||^2 + 1)^{-1}}`.
pub fn picard_horizon_bound(c0: f64, r: f64, p: f64, v_l2: f64) -> f64 {
    let a = (4.0 * c0 * r.powf(p - 2.0) + 1.0).powf(-2.0 / (3.0 - p));
    let b = 1.0 / (16.0 * c0 * c0 * v_l2 * v_l2 + 1.0);
    1f64.min(a).min(b)
}

/// `int_0^t e^{-(t-s) lam} l_j(s) ds` for every basis polynomial `l_j`.
/// Panels graded toward `s = t`, then halved toward `t` until the last
/// panel is narrow against the boundary layer of width `1/lam`.
fn kernel_row(t: f64, lam: f64, nodes: &[f64], bw: &[f64], q: &QuadratureConfig, gl: &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
    let mut out = vec![0.0; nodes.len()];
    if t <= 0.0 {
        return out;
    }
    let mut breaks = graded_panels(t, q.panels, q.grading_exponent);
    loop {
        let k = breaks.len();
        let (a, b) = (breaks[k - 2], breaks[k - 1]);
        if lam * (b - a) <= 1.0 || b - a <= 1e-15 * t {
            break;
        }
        breaks.insert(k - 1, 0.5 * (a + b));
    }
    let (xs, ws) = composite_rule(&breaks, gl);
    for (s, w) in xs.into_iter().zip(ws) {
        let f = w * (-(t - s) * lam).exp();
        if f == 0.0 {
            continue;
        }
        for (o, l) in out.iter_mut().zip(lagrange_basis(nodes, bw, s)) {
            *o += f * l;
        }
    }
    out
}

/// Duhamel kernels for one set of evaluation times, grouped by `|k|^2`.
struct Kernels {
    /// Storage index -> group, for modes in the two-thirds band.
    group_of: Vec<Option<usize>>,
    /// Per group: rows indexed by evaluation time, columns by node.
    weights: Vec<Vec<Vec<f64>>>,
}

fn kernels(grid: Grid, times: &[f64], nodes: &[f64], q: &QuadratureConfig) -> Kernels {
    let n = grid.n();
    let kmax = (n / 3) as i64;
    let mut keys = BTreeMap::new();
    let mut group_of = vec![None; grid.len()];
    let mut lams = Vec::new();
    for (idx, slot) in group_of.iter_mut().enumerate() {
        let (k1, k2) = (grid.freq(idx / n), grid.freq(idx % n));
        if k1.abs() > kmax || k2.abs() > kmax || (k1 == 0 && k2 == 0) {
            continue;
        }
        let key = k1 * k1 + k2 * k2;
        let next = keys.len();
        let g = *keys.entry(key).or_insert_with(|| {
            lams.push(bilaplacian_symbol(&grid, idx));
            next
        });
        *slot = Some(g);
    }
    let bw = lobatto_weights(nodes.len() - 1);
    let gl = gauss_legendre(q.nodes_per_panel);
    let weights = lams
        .par_iter()
        .map(|&lam| times.iter().map(|&t| kernel_row(t, lam, nodes, &bw, q, &gl)).collect())
        .collect();
    Kernels { group_of, weights }
}

/// `e^{-tL} u0 - sum_j K_j(t) g_j` at every evaluation time.
fn duhamel(u0: &SpectralField, g: &[SpectralField], times: &[f64], ker: &Kernels) -> Vec<SpectralField> {
    let grid = u0.grid();
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut out = crate::semigroup::apply_semigroup(t, u0).expect("t >= 0");
            let coeffs = out.coeffs_mut();
            for idx in 0..grid.len() {
                if let Some(gr) = ker.group_of[idx] {
                    let row = &ker.weights[gr][i];
                    let mut acc = Complex64::default();
                    for (w, gj) in row.iter().zip(g) {
                        acc += gj.coeffs()[idx] * *w;
                    }
                    coeffs[idx] -= acc;
                }
            }
            out
        })
        .collect()
}

/// `max{||f||_2, t^{1/4} ||grad f||_2}`.
fn s_tilde_norm(f: &SpectralField, t: f64) -> f64 {
    let [gx, gy] = f.gradient();
    let grad = (gx.l2_norm().powi(2) + gy.l2_norm().powi(2)).sqrt();
    f.l2_norm().max(t.powf(0.25) * grad)
}

pub fn picard_solve(u0: &SpectralField, params: &ModelParams, flow: Option<&FlowSpec>, cfg: &PicardConfig) -> Result<PicardResult> {
    params.validate()?;
    let t_end = cfg.t_horizon;
    if !(t_end > 0.0 && t_end <= 1.0) {
        return Err(Error::params(format!("Picard horizon {t_end} must lie in (0, 1]")));
    }
    if !(cfg.tol > 0.0) || cfg.time_nodes < 2 || cfg.max_sweeps == 0 || cfg.quadrature.panels == 0 {
        return Err(Error::params("Picard needs tol > 0, time_nodes >= 2, max_sweeps >= 1"));
    }
    if !(cfg.c0 > 0.0) {
        return Err(Error::params("C0 must be positive"));
    }
    let zero = FlowSpec::zero();
    let flow = flow.unwrap_or(&zero);
    flow.validate()?;
    if !flow.switch_times(0.0, t_end).is_empty() {
        return Err(Error::params("flow switches inside the Picard horizon"));
    }
    let auto_r = 2.0 * cfg.c0 * u0.l2_norm();
    let radius = match cfg.radius_r {
        Some(r) if r < auto_r => return Err(Error::params(format!("radius {r} below 2 C0 ||u0|| = {auto_r}"))),
        Some(r) => r,
        None => auto_r,
    };
    let t_formula = picard_horizon_bound(cfg.c0, radius, params.p, flow.l2_sup());
    if t_end > t_formula {
        return Err(Error::HorizonTooLong {
            horizon: t_end,
            bound: t_formula,
        });
    }

    let grid = u0.grid();
    let mean = u0.mean();
    let mut base = u0.clone();
    base.set_mean(0.0);
    let nodes = chebyshev_lobatto(cfg.time_nodes, 0.0, t_end);
    let ker = kernels(grid, &nodes, &nodes, &cfg.quadrature);
    let shear = flow.shear_at(0.5 * t_end);
    let rhs = |u: &SpectralField| -> Result<SpectralField> {
        let mut g = model::nonlinear_term(u, params)?;
        if let Some(sh) = shear {
            g.axpy(1.0, &ShearCache::new(grid).advection(sh, u)?);
        }
        Ok(g)
    };

    let mut u: Vec<SpectralField> = nodes
        .iter()
        .map(|&t| crate::semigroup::apply_semigroup(t, &base))
        .collect::<Result<_>>()?;
    let mut prev_defect = f64::NAN;
    let mut ratio: f64 = 0.0;
    let mut sweeps = 0;
    let mut growing = 0;
    let defect = loop {
        let g: Vec<SpectralField> = u.par_iter().map(rhs).collect::<Result<_>>()?;
        let next = duhamel(&base, &g, &nodes, &ker);
        sweeps += 1;
        let d = next
            .iter()
            .zip(&u)
            .zip(&nodes)
            .map(|((a, b), &t)| s_tilde_norm(&a.sub(b), t))
            .fold(0.0f64, f64::max);
        u = next;
        if prev_defect > 0.0 {
            let r = d / prev_defect;
            ratio = ratio.max(r);
            growing = if r >= 1.0 { growing + 1 } else { 0 };
        }
        if d < cfg.tol {
            break d;
        }
        if sweeps >= cfg.max_sweeps || growing >= 3 {
            return Err(Error::NoContraction {
                defect: d,
                sweeps,
                ratio: if prev_defect > 0.0 { d / prev_defect } else { f64::NAN },
            });
        }
        prev_defect = d;
    };

    let mut times: Vec<f64> = cfg.output_times.iter().copied().filter(|&t| t > 0.0 && t < t_end).collect();
    times.push(t_end);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let g: Vec<SpectralField> = u.par_iter().map(rhs).collect::<Result<_>>()?;
    let out_ker = kernels(grid, &times, &nodes, &cfg.quadrature);
    let states = duhamel(&base, &g, &times, &out_ker);

    let mut rows = vec![diagnostics(u0, 0.0, params)?];
    let mut checkpoints = vec![(0.0, u0.clone())];
    for (t, mut s) in times.into_iter().zip(states) {
        s.set_mean(mean);
        rows.push(diagnostics(&s, t, params)?);
        checkpoints.push((t, s));
    }
    let final_state = checkpoints.last().expect("T recorded").1.clone();
    Ok(PicardResult {
        trajectory: Trajectory {
            grid,
            rows,
            checkpoints,
            termination: Termination::Horizon,
            steps: sweeps,
            final_state,
        },
        sweeps,
        final_defect: defect,
        lipschitz_ratio: ratio,
        radius_r: radius,
        t_formula,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::apply_semigroup;
    use crate::spectral::WavenumberScale;

    #[test]
    fn kernel_weights_integrate_exponentials() {
        let nodes = chebyshev_lobatto(8, 0.0, 1e-3);
        let bw = lobatto_weights(8);
        let gl = gauss_legendre(8);
        let q = QuadratureConfig::default();
        for lam in [0.0, 10.0, 1e4, 1e7] {
            let row = kernel_row(1e-3, lam, &nodes, &bw, &q, &gl);
            // sum_j K_j = int_0^t e^{-(t-s) lam} ds
            let want = if lam == 0.0 { 1e-3 } else { (1.0 - (-1e-3 * lam).exp()) / lam };
            let got: f64 = row.iter().sum();
            assert!((got / want - 1.0).abs() < 1e-10, "lam {lam}: {got} vs {want}");
        }
    }

    #[test]
    fn horizon_bound() {
        assert_eq!(picard_horizon_bound(1.0, 0.0, 2.5, 0.0), 1.0);
        let b = picard_horizon_bound(1.0, 1.0, 2.5, 0.0);
        assert!((b - 5f64.powi(-4)).abs() < 1e-15);
        assert!((picard_horizon_bound(1.0, 0.0, 2.5, 1.0) - 1.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn trivial_cases_one_sweep() {
        let g = Grid::new(16, WavenumberScale::TwoPi).unwrap();
        let cfg = PicardConfig::default();
        let r = picard_solve(&SpectralField::zeros(g), &ModelParams::default(), None, &cfg).unwrap();
        assert_eq!(r.sweeps, 1);
        assert_eq!(r.trajectory.final_state.l2_norm(), 0.0);

        let u0 = SpectralField::random_smooth(g, 6, 3);
        let cfg = PicardConfig { t_horizon: 1e-4, ..cfg };
        let r = picard_solve(&u0, &ModelParams::default().linear(), None, &cfg).unwrap();
        assert_eq!(r.sweeps, 1);
        let want = apply_semigroup(1e-4, &u0).unwrap();
        assert!(r.trajectory.final_state.sub(&want).l2_norm() < 1e-14);
    }

    #[test]
    fn errors() {
        let g = Grid::new(16, WavenumberScale::TwoPi).unwrap();
        let u0 = SpectralField::cosine_mode(g, 1, 0, 10.0, 0.0).unwrap();
        let cfg = PicardConfig { t_horizon: 0.5, ..PicardConfig::default() };
        assert!(matches!(picard_solve(&u0, &ModelParams::default(), None, &cfg), Err(Error::HorizonTooLong { .. })));
        let flow = FlowSpec::alternating_shear(1.0, 1e-4, 0);
        let small = SpectralField::cosine_mode(g, 1, 0, 1e-3, 0.0).unwrap();
        assert!(picard_solve(&small, &ModelParams::default(), Some(&flow), &PicardConfig::default()).is_err());
        let tight = PicardConfig { max_sweeps: 1, tol: 1e-300, ..PicardConfig::default() };
        assert!(matches!(picard_solve(&small, &ModelParams::default(), None, &tight), Err(Error::NoContraction { .. })));
    }
}

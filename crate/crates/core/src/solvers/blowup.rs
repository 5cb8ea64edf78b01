use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{blowup_rate_exponent, BlowupBounds, ModelParams};
use crate::semigroup::linear_fit;

use super::trajectory::{DiagnosticRow, Trajectory};

/// Relative slack of the pointwise lower-curve check.
pub const LOWER_CURVE_SLACK: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowupReport {
    pub detected: bool,
    pub t_stop: f64,
    pub fitted_t_max: f64,
    pub fitted_rate_gamma: f64,
    /// `min (T_max - t)^{(3-p)/(2(p-2))} ||u(t)||_2` over the fit window.
    pub scaled_liminf_proxy: f64,
    pub fit_points: usize,
    pub fit_rms: f64,
    /// `-||u0||^2 / (p (p-2) E(u0))` when `E(u0) < 0`.
    pub t_max_upper: Option<f64>,
    /// `min ||u(t)|| / lower_curve(t)` over the recorded rows.
    pub lower_curve_ratio: Option<f64>,
    pub lower_curve_ok: Option<bool>,
}

/// `log ||u|| = log c + gamma (-log(T - t))` at fixed `T`.
fn fit_at(rows: &[DiagnosticRow], t_max: f64) -> (f64, f64, f64) {
    let xs: Vec<f64> = rows.iter().map(|r| -(t_max - r.t).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.l2.ln()).collect();
    linear_fit(&xs, &ys)
}

/// Rows of the last decade of growth: the monotone tail ending at the
/// final row, cut where `||u||` first exceeds a tenth of its final value.
fn growth_window(rows: &[DiagnosticRow]) -> Option<&[DiagnosticRow]> {
    let last = rows.last()?;
    let mut start = rows.len() - 1;
    while start > 0 && rows[start - 1].l2 < rows[start].l2 && rows[start - 1].l2 >= 0.1 * last.l2 {
        start -= 1;
    }
    let w = &rows[start..];
    (w.len() >= 4 && w[0].l2 < last.l2).then_some(w)
}

/// Fits `||u(t)||_2 ~ c (T_max - t)^{-gamma}` on the last decade of growth
/// by least squares, profiling out `c` and `gamma` and searching `T_max`.
pub fn blowup_detect(traj: &Trajectory, params: &ModelParams) -> Result<BlowupReport> {
    let rows = &traj.rows;
    let window = growth_window(rows).ok_or(Error::NoBlowupSignal)?;
    let t_stop = window.last().expect("non-empty").t;
    let span = t_stop - window[0].t;
    if !(span > 0.0) {
        return Err(Error::NoBlowupSignal);
    }
    let rss = |s: f64| fit_at(window, t_stop + s.exp()).2;
    // coarse scan over log(T - t_stop), then golden section around the best
    let (lo, hi) = ((1e-9 * span).ln(), (100.0 * span).ln());
    let m = 240;
    let grid: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
    let best = (0..=m).min_by(|&a, &b| rss(grid[a]).total_cmp(&rss(grid[b]))).expect("scan");
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(m)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    for _ in 0..100 {
        if rss(c) < rss(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let s = 0.5 * (a + b);
    let t_max = t_stop + s.exp();
    let (gamma, _, rms) = fit_at(window, t_max);
    if !(gamma > 0.0) {
        return Err(Error::NoBlowupSignal);
    }
    let rate = blowup_rate_exponent(params.p);
    let proxy = window
        .iter()
        .map(|r| (t_max - r.t).powf(rate) * r.l2)
        .fold(f64::INFINITY, f64::min);

    let first = traj.first();
    let bounds = (params.nonlinear && params.rho == 0.0)
        .then(|| BlowupBounds::from_values(first.l2, first.energy, params.p))
        .flatten();
    let ratio = bounds.map(|bd| {
        rows.iter()
            .map(|r| r.l2 / bd.lower_curve(r.t))
            .fold(f64::INFINITY, f64::min)
    });
    Ok(BlowupReport {
        detected: true,
        t_stop,
        fitted_t_max: t_max,
        fitted_rate_gamma: gamma,
        scaled_liminf_proxy: proxy,
        fit_points: window.len(),
        fit_rms: rms,
        t_max_upper: bounds.map(|b| b.t_max_upper),
        lower_curve_ratio: ratio,
        lower_curve_ok: ratio.map(|r| r >= 1.0 - LOWER_CURVE_SLACK),
    })
}

//! Gauss-Legendre rules, Chebyshev-Lobatto nodes and barycentric
//! interpolation.

use std::f64::consts::PI;

/// `m`-point Gauss-Legendre rule on `[-1, 1]` by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

/// `m + 1` Chebyshev-Lobatto points on `[a, b]`, increasing.
pub fn chebyshev_lobatto(m: usize, a: f64, b: f64) -> Vec<f64> {
    (0..=m)
        .map(|j| {
            let c = -(PI * j as f64 / m as f64).cos();
            let x = 0.5 * (a + b) + 0.5 * (b - a) * c;
            if j == 0 {
                a
            } else if j == m {
                b
            } else {
                x
            }
        })
        .collect()
}

/// Barycentric weights for Chebyshev-Lobatto points.
pub fn lobatto_weights(m: usize) -> Vec<f64> {
    (0..=m)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == m {
                0.5 * s
            } else {
                s
            }
        })
        .collect()
}

/// Values at `x` of the Lagrange basis on `nodes`.
pub fn lagrange_basis(nodes: &[f64], weights: &[f64], x: f64) -> Vec<f64> {
    if let Some(j) = nodes.iter().position(|&t| t == x) {
        let mut out = vec![0.0; nodes.len()];
        out[j] = 1.0;
        return out;
    }
    let terms: Vec<f64> = nodes.iter().zip(weights).map(|(t, w)| w / (x - t)).collect();
    let total: f64 = terms.iter().sum();
    terms.into_iter().map(|v| v / total).collect()
}

/// Panels of `[0, t]` graded toward `t`: breakpoints `t (1 - (1 - j/m)^g)`.
pub fn graded_panels(t: f64, m: usize, grading: f64) -> Vec<f64> {
    (0..=m)
        .map(|j| {
            if j == m {
                t
            } else {
                t * (1.0 - (1.0 - j as f64 / m as f64).powf(grading))
            }
        })
        .collect()
}

/// Composite Gauss-Legendre nodes and weights over the given breakpoints.
pub fn composite_rule(breaks: &[f64], gl: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity((breaks.len() - 1) * gl.0.len());
    let mut ws = Vec::with_capacity(xs.capacity());
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in gl.0.iter().zip(&gl.1) {
            xs.push(c + h * x);
            ws.push(h * w);
        }
    }
    (xs, ws)
}

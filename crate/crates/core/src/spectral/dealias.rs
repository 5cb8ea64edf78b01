use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft;
use super::field::{RealField, SpectralField};
use super::grid::Grid;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DealiasRule {
    /// Zero every mode with `max(|k1|,|k2|) > n/3`.
    TwoThirds,
    /// Evaluate products on a grid `factor` times finer. Acts as the
    /// identity on a single field.
    Padded(usize),
}

/// Project `field` according to `rule`.
pub fn dealias(field: &SpectralField, rule: DealiasRule) -> SpectralField {
    match rule {
        DealiasRule::TwoThirds => {
            let mut out = field.clone();
            truncate_two_thirds(&mut out);
            out
        }
        DealiasRule::Padded(_) => field.clone(),
    }
}

#[inline]
pub(crate) fn in_two_thirds_band(g: &Grid, idx: usize) -> bool {
    let n = g.n();
    let (a, b) = (g.freq(idx / n).unsigned_abs() as usize, g.freq(idx % n).unsigned_abs() as usize);
    3 * a <= n && 3 * b <= n
}

pub(crate) fn truncate_two_thirds(field: &mut SpectralField) {
    let g = field.grid();
    field.map_in_place(|idx, c| if in_two_thirds_band(&g, idx) { c } else { Complex64::default() });
}

/// Per-axis map from a source index to one or two target indices with
/// weights. The Nyquist mode of the coarse grid is split evenly between
/// `+n/2` and `-n/2` on the fine grid, which keeps interpolation exact and
/// real.
fn axis_targets(coarse: usize, fine: usize, i: usize) -> ([(usize, f64); 2], usize) {
    let h = coarse / 2;
    if i < h {
        ([(i, 1.0), (0, 0.0)], 1)
    } else if i == h {
        ([(h, 0.5), (fine - h, 0.5)], 2)
    } else {
        ([(fine - (coarse - i), 1.0), (0, 0.0)], 1)
    }
}

/// Zero-pad coefficients onto a grid `factor` times finer (exact
/// trigonometric interpolation).
pub fn pad(field: &SpectralField, factor: usize) -> Result<SpectralField> {
    let g = field.grid();
    if factor == 1 {
        return Ok(field.clone());
    }
    let fg = g.with_n(g.n() * factor)?;
    let (n, m) = (g.n(), fg.n());
    let mut out = vec![Complex64::default(); fg.len()];
    let src = field.coeffs();
    for i1 in 0..n {
        let (t1, c1) = axis_targets(n, m, i1);
        for i2 in 0..n {
            let v = src[i1 * n + i2];
            if v == Complex64::default() {
                continue;
            }
            let (t2, c2) = axis_targets(n, m, i2);
            for &(a, wa) in &t1[..c1] {
                for &(b, wb) in &t2[..c2] {
                    out[a * m + b] += v * (wa * wb);
                }
            }
        }
    }
    SpectralField::from_coeffs(fg, out)
}

/// Samples of `grad u` on a grid `factor` times finer, packed as
/// `d1 u + i d2 u` in one complex buffer of side `n factor`.
pub(crate) fn padded_gradient_packed(u: &SpectralField, factor: usize) -> Result<(usize, Vec<Complex64>)> {
    let g = u.grid();
    let (n, m) = (g.n(), g.with_n(g.n() * factor)?.n());
    let s = g.scale().factor();
    let src = u.coeffs();
    let mut buf = vec![Complex64::default(); m * m];
    for i1 in 0..n {
        let (t1, c1) = axis_targets(n, m, i1);
        let d1 = if g.is_nyquist(i1) { 0.0 } else { s * g.freq(i1) as f64 };
        for i2 in 0..n {
            let c = src[i1 * n + i2];
            if c == Complex64::default() {
                continue;
            }
            let d2 = if g.is_nyquist(i2) { 0.0 } else { s * g.freq(i2) as f64 };
            // i d1 c + i (i d2 c)
            let v = c * Complex64::new(-d2, d1);
            let (t2, c2) = axis_targets(n, m, i2);
            for &(a, wa) in &t1[..c1] {
                for &(b, wb) in &t2[..c2] {
                    buf[a * m + b] += v * (wa * wb);
                }
            }
        }
    }
    fft::plan(m).inverse(&mut buf);
    Ok((m, buf))
}

/// `div F` on the two-thirds band of `coarse`, from physical samples of
/// `F` packed as `F1 + i F2` on a finer grid of side `m`. Mean removed.
pub(crate) fn banded_divergence_packed(mut buf: Vec<Complex64>, m: usize, coarse: Grid) -> SpectralField {
    fft::plan(m).forward(&mut buf);
    let n = coarse.n();
    let s = coarse.scale().factor();
    let norm = 1.0 / (m * m) as f64;
    let band = (n / 3) as i64;
    let wrap = |k: i64| k.rem_euclid(m as i64) as usize;
    let mut out = vec![Complex64::default(); n * n];
    for k1 in -band..=band {
        let (j1, jm1) = (wrap(k1), wrap(-k1));
        let i1 = k1.rem_euclid(n as i64) as usize;
        for k2 in -band..=band {
            let (j2, jm2) = (wrap(k2), wrap(-k2));
            let z = buf[j1 * m + j2];
            let zc = buf[jm1 * m + jm2].conj();
            let f1 = 0.5 * (z + zc) * norm;
            let f2 = Complex64::new(0.0, -0.5) * (z - zc) * norm;
            out[i1 * n + k2.rem_euclid(n as i64) as usize] =
                Complex64::new(0.0, s * k1 as f64) * f1 + Complex64::new(0.0, s * k2 as f64) * f2;
        }
    }
    out[0] = Complex64::default();
    // conjugate pairs are formed symmetrically, so the result is Hermitian
    SpectralField::from_hermitian(coarse, out)
}

/// Restrict a fine-grid field to the modes representable on `coarse`.
/// This is the adjoint of [`pad`].
pub fn restrict(field: &SpectralField, coarse: Grid) -> SpectralField {
    let fg = field.grid();
    let (n, m) = (coarse.n(), fg.n());
    if n == m {
        return field.clone();
    }
    let src = field.coeffs();
    let mut out = vec![Complex64::default(); coarse.len()];
    for i1 in 0..n {
        let (t1, c1) = axis_targets(n, m, i1);
        for i2 in 0..n {
            let (t2, c2) = axis_targets(n, m, i2);
            let mut acc = Complex64::default();
            for &(a, wa) in &t1[..c1] {
                for &(b, wb) in &t2[..c2] {
                    acc += src[a * m + b] * (wa * wb);
                }
            }
            out[i1 * n + i2] = acc;
        }
    }
    let mut f = SpectralField::zeros(coarse);
    f.coeffs_mut().copy_from_slice(&out);
    f.symmetrize();
    f
}

/// Physical values of `field` on a grid `factor` times finer.
pub fn physical_oversampled(field: &SpectralField, factor: usize) -> Result<RealField> {
    Ok(pad(field, factor)?.to_physical())
}

/// Pointwise product `a * b` evaluated under `rule`, returned on the grid
/// of `a`.
pub fn product(a: &SpectralField, b: &SpectralField, rule: DealiasRule) -> Result<SpectralField> {
    a.check_same_grid(b)?;
    let g = a.grid();
    match rule {
        DealiasRule::TwoThirds => {
            let pa = a.to_physical();
            let pb = b.to_physical();
            let prod: Vec<f64> = pa.data().iter().zip(pb.data()).map(|(x, y)| x * y).collect();
            let mut out = SpectralField::from_physical(&RealField::new(g, prod)?)?;
            truncate_two_thirds(&mut out);
            Ok(out)
        }
        DealiasRule::Padded(factor) => {
            let pa = physical_oversampled(a, factor)?;
            let pb = physical_oversampled(b, factor)?;
            let prod: Vec<f64> = pa.data().iter().zip(pb.data()).map(|(x, y)| x * y).collect();
            let fine = SpectralField::from_physical(&RealField::new(pa.grid(), prod)?)?;
            Ok(restrict(&fine, g))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::WavenumberScale;

    fn g(n: usize) -> Grid {
        Grid::new(n, WavenumberScale::TwoPi).unwrap()
    }

    #[test]
    fn in_band_field_unchanged() {
        let grid = g(32);
        let f = SpectralField::random_smooth(grid, 10, 3);
        let d = dealias(&f, DealiasRule::TwoThirds);
        assert_eq!(d, f);
    }

    #[test]
    fn two_thirds_is_idempotent() {
        let grid = g(32);
        let f = SpectralField::random_smooth(grid, 16, 4);
        let once = dealias(&f, DealiasRule::TwoThirds);
        let twice = dealias(&once, DealiasRule::TwoThirds);
        assert_eq!(once, twice);
        assert!(once.l2_norm() < f.l2_norm());
    }

    #[test]
    fn pad_restrict_roundtrip_and_interpolation() {
        let grid = g(16);
        // off the Nyquist line, where pad splits the mode in two
        let f = SpectralField::random_smooth(grid, 7, 5);
        let p = pad(&f, 2).unwrap();
        assert!((p.l2_norm() - f.l2_norm()).abs() < 1e-14);
        let back = restrict(&p, grid);
        assert!(back.sub(&f).l2_norm() < 1e-14);
        // fine-grid samples at even indices reproduce the coarse samples
        let fine = p.to_physical();
        let coarse = f.to_physical();
        for j1 in 0..16 {
            for j2 in 0..16 {
                let a = coarse.data()[j1 * 16 + j2];
                let b = fine.data()[(2 * j1) * 32 + 2 * j2];
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn padded_product_matches_direct_convolution() {
        let n = 16;
        let grid = g(n);
        // keep inputs off the Nyquist line so the convolution is unambiguous
        let u = SpectralField::random_smooth(grid, 7, 6);
        let out = product(&u, &u, DealiasRule::Padded(2)).unwrap();
        let h = (n / 2) as i64;
        for k1 in -h + 1..h {
            for k2 in -h + 1..h {
                let mut acc = Complex64::default();
                for a1 in -7..=7i64 {
                    for a2 in -7..=7i64 {
                        acc += u.coeff(a1, a2) * u.coeff(k1 - a1, k2 - a2);
                    }
                }
                assert!((out.coeff(k1, k2) - acc).norm() < 1e-14, "mode ({k1},{k2})");
            }
        }
    }
}

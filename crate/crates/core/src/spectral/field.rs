use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fft;
use super::grid::Grid;
use crate::error::{Error, Result};

/// Real scalar field sampled on the collocation points of a [`Grid`].
///
/// `data[j1 * n + j2]` holds the value at `(x1, x2) = (j1/n, j2/n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: Grid,
    data: Vec<f64>,
}

/// Pair of real fields `(v1, v2)`.
pub type VectorField = [RealField; 2];

impl RealField {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch {
                left: grid.to_string(),
                right: format!("{} samples", data.len()),
            });
        }
        Ok(RealField { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        RealField {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let data = (0..n * n)
            .map(|idx| f(grid.x(idx / n), grid.x(idx % n)))
            .collect();
        RealField { grid, data }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Fourier coefficients of a real field on the unit torus.
///
/// Coefficients are normalized as `f_hat(k) = \int f(x) e^{-2 pi i k.x} dx`,
/// so a constant `c` has `f_hat(0) = c` and `cos(2 pi x1)` has `1/2` at
/// `k = (+-1, 0)`. Storage is the full `n x n` array in FFT order, with
/// Hermitian symmetry maintained by every operation in this crate.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        SpectralField {
            grid,
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// Build from raw coefficients. Hermitian symmetry is enforced.
    pub fn from_coeffs(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch {
                left: grid.to_string(),
                right: format!("{} coefficients", coeffs.len()),
            });
        }
        let mut f = SpectralField { grid, coeffs };
        f.symmetrize();
        Ok(f)
    }

    /// Wraps coefficients already known to be Hermitian.
    pub(crate) fn from_hermitian(grid: Grid, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.len());
        SpectralField { grid, coeffs }
    }

    pub fn from_physical(field: &RealField) -> Result<Self> {
        if field.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField);
        }
        let grid = field.grid;
        let mut buf: Vec<Complex64> = field.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::plan(grid.n()).forward(&mut buf);
        let norm = 1.0 / grid.len() as f64;
        for c in &mut buf {
            *c *= norm;
        }
        let mut f = SpectralField { grid, coeffs: buf };
        f.symmetrize();
        Ok(f)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::from_physical(&RealField::from_fn(grid, f))
    }

    /// `amplitude * cos(2 pi (k1 x1 + k2 x2) + phase)`.
    pub fn cosine_mode(grid: Grid, k1: i64, k2: i64, amplitude: f64, phase: f64) -> Result<Self> {
        let (i1, i2) = match (grid.index_of(k1), grid.index_of(k2)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::params(format!(
                    "mode ({k1},{k2}) not representable on {grid}"
                )))
            }
        };
        let mut f = Self::zeros(grid);
        let n = grid.n();
        let c = Complex64::from_polar(0.5 * amplitude, phase);
        f.coeffs[i1 * n + i2] += c;
        let (j1, j2) = ((n - i1) % n, (n - i2) % n);
        f.coeffs[j1 * n + j2] += c.conj();
        f.symmetrize();
        Ok(f)
    }

    /// Random band-limited field with `max(|k1|,|k2|) <= kmax`, zero mean,
    /// unit L2 norm.
    pub fn random_smooth(grid: Grid, kmax: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Self::zeros(grid);
        let n = grid.n();
        for idx in 0..grid.len() {
            let (k1, k2) = (grid.freq(idx / n), grid.freq(idx % n));
            if idx != 0 && k1.unsigned_abs() as usize <= kmax && k2.unsigned_abs() as usize <= kmax {
                f.coeffs[idx] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        f.symmetrize();
        let l2 = f.l2_norm();
        if l2 > 0.0 {
            f.scale(1.0 / l2);
        }
        f
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at signed frequency `(k1, k2)`; zero if not representable.
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        match (self.grid.index_of(k1), self.grid.index_of(k2)) {
            (Some(a), Some(b)) => self.coeffs[a * self.grid.n() + b],
            _ => Complex64::default(),
        }
    }

    pub fn to_physical(&self) -> RealField {
        let buf = self.to_complex_physical();
        RealField {
            grid: self.grid,
            data: buf.into_iter().map(|c| c.re).collect(),
        }
    }

    pub(crate) fn to_complex_physical(&self) -> Vec<Complex64> {
        let mut buf = self.coeffs.clone();
        fft::plan(self.grid.n()).inverse(&mut buf);
        buf
    }

    /// Largest imaginary part of the inverse transform; zero for exactly
    /// Hermitian coefficients.
    pub fn reality_defect(&self) -> f64 {
        self.to_complex_physical()
            .iter()
            .fold(0.0f64, |m, c| m.max(c.im.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn set_mean(&mut self, m: f64) {
        self.coeffs[0] = Complex64::new(m, 0.0);
    }

    /// L2 norm via Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real L2 inner product.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn check_same_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.to_string(),
                right: other.grid.to_string(),
            });
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &SpectralField) {
        debug_assert_eq!(self.grid, x.grid);
        for (c, d) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += d * a;
        }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Multiply mode-wise by a real symbol evaluated on flat indices.
    pub fn apply_real_symbol(&self, symbol: impl Fn(usize) -> f64) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| c * symbol(idx))
            .collect();
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }

    pub(crate) fn map_in_place(&mut self, f: impl Fn(usize, Complex64) -> Complex64) {
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            *c = f(idx, *c);
        }
    }

    /// Spectral partial derivative along `axis` (0 for x1, 1 for x2).
    /// The Nyquist row/column is zeroed to keep the result real.
    pub fn partial(&self, axis: usize) -> SpectralField {
        let g = self.grid;
        let n = g.n();
        let s = g.scale().factor();
        let mut out = self.clone();
        out.map_in_place(|idx, c| {
            let i = if axis == 0 { idx / n } else { idx % n };
            if g.is_nyquist(i) {
                Complex64::default()
            } else {
                c * Complex64::new(0.0, s * g.freq(i) as f64)
            }
        });
        out
    }

    pub fn gradient(&self) -> [SpectralField; 2] {
        [self.partial(0), self.partial(1)]
    }

    pub fn divergence(v: &[SpectralField; 2]) -> Result<SpectralField> {
        v[0].check_same_grid(&v[1])?;
        let mut out = v[0].partial(0);
        out.axpy(1.0, &v[1].partial(1));
        Ok(out)
    }

    pub fn laplacian(&self) -> SpectralField {
        let g = self.grid;
        self.apply_real_symbol(|idx| laplacian_symbol(&g, idx))
    }

    pub fn bilaplacian(&self) -> SpectralField {
        let g = self.grid;
        self.apply_real_symbol(|idx| bilaplacian_symbol(&g, idx))
    }

    /// `(-Delta)^{s/2}` with symbol `|sk|^s`; the mean is sent to zero.
    pub fn frac_laplacian(&self, s: f64) -> Result<SpectralField> {
        if !(s > 0.0) {
            return Err(Error::InvalidExponent {
                value: s,
                reason: "fractional Laplacian needs s > 0",
            });
        }
        let g = self.grid;
        Ok(self.apply_real_symbol(|idx| frac_symbol(&g, idx, s)))
    }

    /// Enforce `c(-k) = conj(c(k))`, taking the average of each pair.
    pub fn symmetrize(&mut self) {
        let n = self.grid.n();
        for i1 in 0..n {
            let j1 = if i1 == 0 { 0 } else { n - i1 };
            for i2 in 0..n {
                let j2 = if i2 == 0 { 0 } else { n - i2 };
                let a = i1 * n + i2;
                let b = j1 * n + j2;
                if a < b {
                    let avg = 0.5 * (self.coeffs[a] + self.coeffs[b].conj());
                    self.coeffs[a] = avg;
                    self.coeffs[b] = avg.conj();
                } else if a == b {
                    self.coeffs[a].im = 0.0;
                }
            }
        }
    }
}

#[inline]
pub fn laplacian_symbol(g: &Grid, idx: usize) -> f64 {
    -g.k2(idx)
}

#[inline]
pub fn bilaplacian_symbol(g: &Grid, idx: usize) -> f64 {
    let l = laplacian_symbol(g, idx);
    l * l
}

#[inline]
pub fn frac_symbol(g: &Grid, idx: usize, s: f64) -> f64 {
    if idx == 0 {
        0.0
    } else {
        g.k2(idx).powf(0.5 * s)
    }
}

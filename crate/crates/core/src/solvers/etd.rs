//! Exponential time differencing for `u_t = -Delta^2 u + R(u)`.

use std::sync::Arc;

use crate::error::Result;
use crate::registry::Registry;
use crate::spectral::{bilaplacian_symbol, Grid, SpectralField};

/// `(e^z, phi_1(z), phi_2(z), phi_3(z))`, with a Taylor series near 0.
pub fn phi_functions(z: f64) -> (f64, f64, f64, f64) {
    let e = z.exp();
    if z.abs() < 0.5 {
        // phi_k(z) = sum_m z^m / (m + k)!
        let mut out = [0.0f64; 3];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut term = 1.0;
            for j in 1..=k + 1 {
                term /= j as f64;
            }
            let mut acc = 0.0;
            for m in 0..30 {
                acc += term;
                term *= z / (m + k + 2) as f64;
            }
            *slot = acc;
        }
        (e, out[0], out[1], out[2])
    } else {
        let p1 = (e - 1.0) / z;
        let p2 = (e - 1.0 - z) / (z * z);
        let p3 = (e - 1.0 - z - 0.5 * z * z) / (z * z * z);
        (e, p1, p2, p3)
    }
}

/// Mode-wise ETD weights for one step size.
#[derive(Clone, Debug)]
pub struct EtdTables {
    pub grid: Grid,
    pub h: f64,
    pub e: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub phi3: Vec<f64>,
    pub e_half: Vec<f64>,
    pub phi1_half: Vec<f64>,
    // step weights with h folded in
    hphi1: Vec<f64>,
    hphi2: Vec<f64>,
    hphi1_half: Vec<f64>,
    rk4: [Vec<f64>; 3],
}

impl EtdTables {
    pub fn new(grid: Grid, h: f64) -> Self {
        let len = grid.len();
        let mut t = EtdTables {
            grid,
            h,
            e: Vec::with_capacity(len),
            phi1: Vec::with_capacity(len),
            phi2: Vec::with_capacity(len),
            phi3: Vec::with_capacity(len),
            e_half: Vec::with_capacity(len),
            phi1_half: Vec::with_capacity(len),
            hphi1: Vec::with_capacity(len),
            hphi2: Vec::with_capacity(len),
            hphi1_half: Vec::with_capacity(len),
            rk4: [Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len)],
        };
        for idx in 0..len {
            let z = -h * bilaplacian_symbol(&grid, idx);
            let (e, p1, p2, p3) = phi_functions(z);
            let (eh, p1h, _, _) = phi_functions(0.5 * z);
            t.e.push(e);
            t.phi1.push(p1);
            t.phi2.push(p2);
            t.phi3.push(p3);
            t.e_half.push(eh);
            t.phi1_half.push(p1h);
            t.hphi1.push(h * p1);
            t.hphi2.push(h * p2);
            t.hphi1_half.push(0.5 * h * p1h);
            t.rk4[0].push(h * (p1 - 3.0 * p2 + 4.0 * p3));
            t.rk4[1].push(2.0 * h * (p2 - 2.0 * p3));
            t.rk4[2].push(h * (4.0 * p3 - p2));
        }
        t
    }
}

/// Reuses tables while the step size stays the same.
#[derive(Default)]
pub struct TableCache {
    last: Option<Arc<EtdTables>>,
}

impl TableCache {
    pub fn get(&mut self, grid: Grid, h: f64) -> Arc<EtdTables> {
        match &self.last {
            Some(t) if t.h == h && t.grid == grid => t.clone(),
            _ => {
                let t = Arc::new(EtdTables::new(grid, h));
                self.last = Some(t.clone());
                t
            }
        }
    }
}

pub(crate) fn diag(table: &[f64], f: &SpectralField) -> SpectralField {
    f.apply_real_symbol(|idx| table[idx])
}

/// `a .* x + b .* y` with mode-wise tables.
fn diag2(ta: &[f64], x: &SpectralField, tb: &[f64], y: &SpectralField) -> SpectralField {
    let mut out = x.clone();
    let yc = y.coeffs();
    out.map_in_place(|idx, c| c * ta[idx] + yc[idx] * tb[idx]);
    out
}

/// Explicit part of the right-hand side, frozen over one step.
pub type Explicit<'a> = dyn FnMut(&SpectralField) -> Result<SpectralField> + 'a;

/// One-step exponential integrator.
pub trait Stepper: Send + Sync {
    fn name(&self) -> &'static str;
    fn order(&self) -> u32;
    fn step(&self, u: &SpectralField, tables: &EtdTables, rhs: &mut Explicit<'_>) -> Result<SpectralField>;
}

/// Second-order Cox-Matthews scheme.
pub struct Etdrk2;

impl Stepper for Etdrk2 {
    fn name(&self) -> &'static str {
        "etdrk2"
    }

    fn order(&self) -> u32 {
        2
    }

    fn step(&self, u: &SpectralField, tb: &EtdTables, rhs: &mut Explicit<'_>) -> Result<SpectralField> {
        let nu = rhs(u)?;
        let mut out = diag2(&tb.e, u, &tb.hphi1, &nu);
        let na = rhs(&out)?;
        let (d, a, b) = (&tb.hphi2, na.coeffs(), nu.coeffs());
        out.map_in_place(|i, c| c + (a[i] - b[i]) * d[i]);
        Ok(out)
    }
}

/// Fourth-order Cox-Matthews scheme.
pub struct Etdrk4;

impl Stepper for Etdrk4 {
    fn name(&self) -> &'static str {
        "etdrk4"
    }

    fn order(&self) -> u32 {
        4
    }

    fn step(&self, u: &SpectralField, tb: &EtdTables, rhs: &mut Explicit<'_>) -> Result<SpectralField> {
        let hh = &tb.hphi1_half;
        let nu = rhs(u)?;
        let a = diag2(&tb.e_half, u, hh, &nu);
        let na = rhs(&a)?;
        let b = diag2(&tb.e_half, u, hh, &na);
        let nb = rhs(&b)?;
        let mut two_nb = nb.scaled(2.0);
        two_nb.axpy(-1.0, &nu);
        let c = diag2(&tb.e_half, &a, hh, &two_nb);
        let nc = rhs(&c)?;

        let [f1, f2, f3] = &tb.rk4;
        let mut out = diag2(&tb.e, u, f1, &nu);
        let (na, nb, nc) = (na.coeffs(), nb.coeffs(), nc.coeffs());
        out.map_in_place(|i, c| c + (na[i] + nb[i]) * f2[i] + nc[i] * f3[i]);
        Ok(out)
    }
}

pub fn steppers() -> Registry<dyn Stepper> {
    let two: Arc<dyn Stepper> = Arc::new(Etdrk2);
    let four: Arc<dyn Stepper> = Arc::new(Etdrk4);
    Registry::new("stepper").with("etdrk2", two).with("etdrk4", four)
}

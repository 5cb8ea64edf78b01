use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which physical wavenumber a Fourier index `k` carries.
///
/// `TwoPi` is the analytic convention on `[0,1]^2` (mode `k` has wavenumber
/// `2 pi k`); `Unit` drops the `2 pi` so that `e^{-t L}` has symbol
/// `exp(-t |k|^4)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WavenumberScale {
    #[default]
    TwoPi,
    Unit,
}

impl WavenumberScale {
    pub fn factor(self) -> f64 {
        match self {
            WavenumberScale::TwoPi => 2.0 * PI,
            WavenumberScale::Unit => 1.0,
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            WavenumberScale::TwoPi => 0,
            WavenumberScale::Unit => 1,
        }
    }

    pub(crate) fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(WavenumberScale::TwoPi),
            1 => Some(WavenumberScale::Unit),
            _ => None,
        }
    }
}

impl fmt::Display for WavenumberScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WavenumberScale::TwoPi => f.write_str("two_pi"),
            WavenumberScale::Unit => f.write_str("unit"),
        }
    }
}

/// Square `n x n` collocation grid on the unit torus.
///
/// Fourier indices are stored in FFT order. Index `i` carries frequency
/// `i` for `i <= n/2` and `i - n` above, so the frequency set is
/// `{-n/2+1, ..., n/2}` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
    scale: WavenumberScale,
}

impl Grid {
    pub fn new(n: usize, scale: WavenumberScale) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n}: need a power of two >= 8"
            )));
        }
        Ok(Grid { n, scale })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scale(&self) -> WavenumberScale {
        self.scale
    }

    /// Number of collocation points (and of stored coefficients).
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed frequency of storage index `i`.
    #[inline]
    pub fn freq(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Storage index of a signed frequency, if representable.
    pub fn index_of(&self, k: i64) -> Option<usize> {
        let n = self.n as i64;
        if k > n / 2 || k <= -n / 2 {
            return None;
        }
        Some(k.rem_euclid(n) as usize)
    }

    #[inline]
    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    /// Scaled wavevector `(s k1, s k2)` of flat storage index `idx`.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> (f64, f64) {
        let s = self.scale.factor();
        let (i1, i2) = (idx / self.n, idx % self.n);
        (s * self.freq(i1) as f64, s * self.freq(i2) as f64)
    }

    /// `|s k|^2` of flat storage index `idx`.
    #[inline]
    pub fn k2(&self, idx: usize) -> f64 {
        let (a, b) = self.wavevector(idx);
        a * a + b * b
    }

    /// Coordinate of collocation index `j` along either axis.
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Grid::new(n, self.scale)
    }

    /// Largest scaled wavenumber kept by the two-thirds rule.
    pub fn dealiased_kmax(&self) -> f64 {
        (self.n / 3) as f64 * self.scale.factor()
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} ({})", self.n, self.n, self.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_odd_sizes() {
        assert!(Grid::new(4, WavenumberScale::Unit).is_err());
        assert!(Grid::new(12, WavenumberScale::Unit).is_err());
        assert!(Grid::new(8, WavenumberScale::Unit).is_ok());
    }

    #[test]
    fn frequency_set() {
        let g = Grid::new(8, WavenumberScale::Unit).unwrap();
        let f: Vec<i64> = (0..8).map(|i| g.freq(i)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, 4, -3, -2, -1]);
        for i in 0..8 {
            assert_eq!(g.index_of(g.freq(i)), Some(i));
        }
        assert_eq!(g.index_of(-4), None);
    }
}

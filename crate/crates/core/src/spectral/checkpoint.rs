//! Binary checkpoint format.
//!
//! Layout (little-endian): 16-byte magic `THINFILM-CKPT-01`, `n` as u64,
//! wavenumber scale as u64 (0 = two_pi, 1 = unit), time as f64, then
//! `n * (n/2 + 1)` complex coefficients as `(re, im)` f64 pairs. Rows run
//! over the first frequency index in FFT order, columns over the second
//! index `0..=n/2` (the Hermitian half).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::field::SpectralField;
use super::grid::{Grid, WavenumberScale};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 16] = b"THINFILM-CKPT-01";

pub fn encode(field: &SpectralField, t: f64) -> Vec<u8> {
    let g = field.grid();
    let n = g.n();
    let half = n / 2 + 1;
    let mut out = Vec::with_capacity(16 + 24 + n * half * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&g.scale().code().to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    let c = field.coeffs();
    for i1 in 0..n {
        for i2 in 0..half {
            let v = c[i1 * n + i2];
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(SpectralField, f64), String> {
    if bytes.len() < 40 || &bytes[..16] != MAGIC {
        return Err("missing magic".into());
    }
    let word = |at: usize| -> [u8; 8] { bytes[at..at + 8].try_into().expect("8 bytes") };
    let n = u64::from_le_bytes(word(16)) as usize;
    let scale = WavenumberScale::from_code(u64::from_le_bytes(word(24)))
        .ok_or_else(|| "unknown wavenumber scale code".to_string())?;
    let t = f64::from_le_bytes(word(32));
    let grid = Grid::new(n, scale).map_err(|e| e.to_string())?;
    let half = n / 2 + 1;
    if bytes.len() != 40 + n * half * 16 {
        return Err(format!("expected {} bytes, found {}", 40 + n * half * 16, bytes.len()));
    }
    let mut coeffs = vec![Complex64::default(); n * n];
    let mut at = 40;
    for i1 in 0..n {
        for i2 in 0..half {
            let re = f64::from_le_bytes(word(at));
            let im = f64::from_le_bytes(word(at + 8));
            at += 16;
            coeffs[i1 * n + i2] = Complex64::new(re, im);
        }
    }
    // fill the other half from Hermitian symmetry
    for i1 in 0..n {
        for i2 in half..n {
            let (j1, j2) = ((n - i1) % n, n - i2);
            coeffs[i1 * n + i2] = coeffs[j1 * n + j2].conj();
        }
    }
    let mut f = SpectralField::zeros(grid);
    f.coeffs_mut().copy_from_slice(&coeffs);
    Ok((f, t))
}

pub fn write(path: &Path, field: &SpectralField, t: f64) -> Result<()> {
    let bytes = encode(field, t);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<(SpectralField, f64)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}

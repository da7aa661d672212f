//! Centered log-magnitude spectra and their correlation.
//!
//! Slices are mean-subtracted, zero-padded to powers of two, transformed with
//! a radix-2 FFT, and stored as `ln(1 + |X|)` with DC moved to the center.

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::pearson_correlation;
use crate::imaging::portable::{write_raw, RawImage};
use crate::imaging::SliceImage;

/// In-place iterative radix-2 FFT. `inverse` flips the twiddle sign; no scaling is applied.
fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * std::f64::consts::PI / len as f64;
        // Twiddles computed directly per index to avoid accumulated rounding.
        let twiddles: Vec<Complex64> = (0..half).map(|k| Complex64::from_polar(1.0, step * k as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn check_pow2(rows: usize, cols: usize) -> Result<()> {
    if !(rows.is_power_of_two() && cols.is_power_of_two()) {
        return Err(Error::invalid(format!(
            "FFT dimensions must be powers of two, got {rows}x{cols}"
        )));
    }
    Ok(())
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(src.len());
    for c in 0..cols {
        out.extend((0..rows).map(|r| src[r * cols + c]));
    }
    out
}

fn transform(data: &mut Array2<Complex64>, inverse: bool) {
    let (rows, cols) = data.dim();
    let mut buf: Vec<Complex64> = data.iter().copied().collect();
    buf.par_chunks_mut(cols).for_each(|row| fft_in_place(row, inverse));
    let mut t = transpose(&buf, rows, cols);
    t.par_chunks_mut(rows).for_each(|col| fft_in_place(col, inverse));
    let back = transpose(&t, cols, rows);
    *data = Array2::from_shape_vec((rows, cols), back).expect("shape preserved");
}

/// Forward 2-D DFT, unnormalized. Both dimensions must be powers of two.
pub fn fft2d(values: &Array2<f64>) -> Result<Array2<Complex64>> {
    let (rows, cols) = values.dim();
    check_pow2(rows, cols)?;
    let mut data = values.mapv(|v| Complex64::new(v, 0.0));
    transform(&mut data, false);
    Ok(data)
}

/// Inverse 2-D DFT with the `1/(rows·cols)` factor.
pub fn ifft2d(spectrum: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let (rows, cols) = spectrum.dim();
    check_pow2(rows, cols)?;
    let mut data = spectrum.clone();
    transform(&mut data, true);
    let scale = 1.0 / (rows * cols) as f64;
    data.mapv_inplace(|c| c * scale);
    Ok(data)
}

/// Log-magnitude spectrum with DC at `(rows/2, cols/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Array2<f64>,
}

impl Spectrum {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        check_pow2(r, c)?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("spectrum values must be finite and non-negative"));
        }
        Ok(Spectrum { values })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Padded size for a slice: next power of two on each axis.
pub fn pad_target(rows: usize, cols: usize) -> (usize, usize) {
    (rows.next_power_of_two(), cols.next_power_of_two())
}

pub fn to_spectrum(slice: &SliceImage) -> Spectrum {
    to_spectrum_padded(slice, pad_target(slice.rows(), slice.cols())).expect("own pad target fits")
}

/// Spectrum at a fixed padded size, so spectra of differently sized slices can be averaged.
pub fn to_spectrum_padded(slice: &SliceImage, (pr, pc): (usize, usize)) -> Result<Spectrum> {
    check_pow2(pr, pc)?;
    let (rows, cols) = (slice.rows(), slice.cols());
    if rows > pr || cols > pc {
        return Err(Error::invalid(format!(
            "slice {rows}x{cols} exceeds pad target {pr}x{pc}"
        )));
    }
    let mean = slice.values.iter().map(|&v| f64::from(v)).sum::<f64>() / slice.len() as f64;
    let mut padded = Array2::<f64>::zeros((pr, pc));
    padded
        .slice_mut(ndarray::s![..rows, ..cols])
        .zip_mut_with(&slice.values, |p, &v| *p = f64::from(v) - mean);
    let freq = fft2d(&padded)?;
    let mut out = Array2::<f64>::zeros((pr, pc));
    let (hr, hc) = (pr / 2, pc / 2);
    for ((r, c), x) in freq.indexed_iter() {
        out[[(r + hr) % pr, (c + hc) % pc]] = x.norm().ln_1p();
    }
    Spectrum::new(out)
}

pub fn average_spectrum(specs: &[Spectrum]) -> Result<Spectrum> {
    let first = specs
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty list of spectra"))?;
    let dim = first.dim();
    let mut acc = Array2::<f64>::zeros(dim);
    for (j, s) in specs.iter().enumerate() {
        if s.dim() != dim {
            return Err(Error::invalid(format!(
                "spectrum dimensions differ: {:?} vs {:?}",
                dim,
                s.dim()
            )));
        }
        let w = 1.0 / (j + 1) as f64;
        acc.zip_mut_with(&s.values, |a, &v| *a += (v - *a) * w);
    }
    Ok(Spectrum { values: acc })
}

/// Pearson correlation over all spectrum cells.
pub fn spectrum_correlation(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "spectrum dimensions differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let xa: Vec<f64> = a.values.iter().copied().collect();
    let xb: Vec<f64> = b.values.iter().copied().collect();
    pearson_correlation(&xa, &xb, "spectrum")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    pub kind: String,
    /// Spectrum value represented by gray level 65535.
    pub scale: f64,
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Writes a spectrum as a 16-bit grayscale image (`.pgm` or `.png`), linearly
/// scaled so the maximum maps to 65535, with the scale in a `.json` sidecar.
pub fn export_spectrum(spec: &Spectrum, path: impl AsRef<Path>, label: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let max = spec.values.iter().copied().fold(0.0f64, f64::max);
    let (rows, cols) = spec.dim();
    let samples = spec
        .values
        .iter()
        .map(|&v| if max > 0.0 { (v / max * 65535.0).round() as u16 } else { 0 })
        .collect();
    write_raw(path, &RawImage { rows, cols, samples })?;
    let side = path.with_extension("json");
    let sidecar = SpectrumSidecar {
        kind: "log-magnitude spectrum, DC centered".into(),
        scale: max,
        rows,
        cols,
        label: label.map(str::to_string),
    };
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

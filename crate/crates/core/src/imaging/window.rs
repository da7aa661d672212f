use ndarray::Array2;

use super::slice::SliceImage;
use crate::error::{Error, Result};

/// Maps one value through a window: `clamp(round((v - lower) / width * 255), 0, 255)`.
#[inline]
pub fn window_value(v: f64, center: f64, width: f64) -> u8 {
    let lower = center - width / 2.0;
    // f64::round is half away from zero.
    ((v - lower) / width * 255.0).round().clamp(0.0, 255.0) as u8
}

fn check_window(center: f64, width: f64) -> Result<()> {
    if width <= 0.0 || !width.is_finite() || !center.is_finite() {
        return Err(Error::invalid(format!(
            "window width must be positive and finite (center {center}, width {width})"
        )));
    }
    Ok(())
}

/// Renders a slice to 8-bit gray levels with window center `center` and width `width`.
pub fn window_to_8bit(slice: &SliceImage, center: f64, width: f64) -> Result<Array2<u8>> {
    check_window(center, width)?;
    Ok(slice.values.mapv(|v| window_value(f64::from(v), center, width)))
}

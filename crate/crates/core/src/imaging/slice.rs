use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default CT calibration range in Hounsfield units.
pub const DEFAULT_HU_RANGE: (f64, f64) = (-1024.0, 3071.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "CT")]
    Ct,
    #[serde(rename = "MR_T1_IP")]
    MrT1InPhase,
    #[serde(rename = "MR_T1_OOP")]
    MrT1OutOfPhase,
    #[serde(rename = "MR_T2")]
    MrT2,
}

impl Modality {
    pub fn is_ct(self) -> bool {
        matches!(self, Modality::Ct)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ct => "CT",
            Modality::MrT1InPhase => "MR_T1_IP",
            Modality::MrT1OutOfPhase => "MR_T1_OOP",
            Modality::MrT2 => "MR_T2",
        }
    }
}

/// Linear map from stored 16-bit samples to physical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Calibration {
    Linear { slope: f64, intercept: f64 },
    /// Sample 0 maps to `minmax[0]`, sample 65535 to `minmax[1]`.
    MinMax { minmax: [f64; 2] },
}

impl Calibration {
    pub const IDENTITY: Calibration = Calibration::Linear {
        slope: 1.0,
        intercept: 0.0,
    };

    pub fn apply(&self, raw: f64) -> f64 {
        match *self {
            Calibration::Linear { slope, intercept } => raw * slope + intercept,
            Calibration::MinMax { minmax: [lo, hi] } => lo + raw / 65535.0 * (hi - lo),
        }
    }

    /// Inverse of [`Calibration::apply`], rounded half away from zero and
    /// saturated to the 16-bit sample range.
    pub fn invert(&self, value: f64) -> u16 {
        let raw = match *self {
            Calibration::Linear { slope, intercept } => (value - intercept) / slope,
            Calibration::MinMax { minmax: [lo, hi] } => (value - lo) / (hi - lo) * 65535.0,
        };
        raw.round().clamp(0.0, 65535.0) as u16
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            Calibration::Linear { slope, intercept } => {
                if !(slope.is_finite() && intercept.is_finite()) || slope == 0.0 {
                    return Err(Error::invalid(format!(
                        "calibration slope {slope} / intercept {intercept} must be finite with nonzero slope"
                    )));
                }
            }
            Calibration::MinMax { minmax: [lo, hi] } => {
                if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                    return Err(Error::invalid(format!(
                        "calibration minmax [{lo}, {hi}] must be finite and increasing"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One 2-D axial scan in physical units (HU for CT).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub volume_id: String,
    /// 0-based axial position within the volume.
    pub slice_index: u32,
    /// Row and column spacing in millimetres.
    pub pixel_spacing: (f64, f64),
    pub values: Array2<f32>,
    pub modality: Modality,
    pub contrast_enhanced: bool,
    /// Mapping used at ingestion, kept so the slice can be written back.
    pub calibration: Option<Calibration>,
}

impl SliceImage {
    /// Builds a slice from physical values, checking shape and finiteness.
    pub fn new(
        volume_id: impl Into<String>,
        slice_index: u32,
        modality: Modality,
        values: Array2<f32>,
    ) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("slice must be at least 1x1, got {rows}x{cols}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("slice contains non-finite values"));
        }
        Ok(SliceImage {
            volume_id: volume_id.into(),
            slice_index,
            pixel_spacing: (1.0, 1.0),
            values,
            modality,
            contrast_enhanced: false,
            calibration: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Identifier `"{volume_id}/{slice_index}"` used by feature sidecars and overrides.
    pub fn key(&self) -> String {
        slice_key(&self.volume_id, self.slice_index)
    }

    /// Saturates CT values into `[lo, hi]`.
    pub fn clamp_to(&mut self, (lo, hi): (f64, f64)) {
        let (lo, hi) = (lo as f32, hi as f32);
        self.values.mapv_inplace(|v| v.clamp(lo, hi));
    }
}

pub fn slice_key(volume_id: &str, slice_index: u32) -> String {
    format!("{volume_id}/{slice_index}")
}

pub(crate) fn validate_range((lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::invalid(format!("range [{lo}, {hi}] must be finite with lo < hi")));
    }
    Ok(())
}

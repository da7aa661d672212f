//! Run configuration shared by the command-line front end.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::histogram::{TissueBinning, DEFAULT_BINS};
use crate::stratified::{EvalConfig, DEFAULT_MIN_SLICES};

/// Inputs and tunables of one run. Defaults match the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub real_manifest: Option<PathBuf>,
    pub synth_manifest: Option<PathBuf>,
    pub real_features: Option<PathBuf>,
    pub synth_features: Option<PathBuf>,
    pub n_bins: usize,
    pub tissue_thresholds: (f64, f64),
    pub hu_range: Option<(f64, f64)>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub min_slices: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            real_manifest: None,
            synth_manifest: None,
            real_features: None,
            synth_features: None,
            n_bins: DEFAULT_BINS,
            tissue_thresholds: (TissueBinning::DEFAULT_T1, TissueBinning::DEFAULT_T2),
            hu_range: None,
            seed: 0,
            out_dir: None,
            min_slices: DEFAULT_MIN_SLICES,
        }
    }
}

impl RunConfig {
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_bins: self.n_bins,
            tissue_thresholds: self.tissue_thresholds,
            hu_range: self.hu_range,
            min_slices: self.min_slices,
            seed: Some(self.seed),
            ..EvalConfig::default()
        }
    }
}

//! Layer-wise comparison of two image sets with baseline normalization.
//!
//! Slices of both sets are grouped by axial layer; within each layer the
//! histograms and spectra of every slice are averaged per set and the two
//! averages compared. FID uses the per-slice feature rows of the layer.

mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frechet::{fit_gaussian, frechet_distance, FeatureMatrix, DEFAULT_FRECHET_EPS};
use crate::histogram::{
    average_histogram, hist_correlation, hist_intersection, image_histogram, kl_divergence, tissue_histogram,
    TissueBinning, DEFAULT_BINS, DEFAULT_KL_EPSILON,
};
use crate::imaging::{ImageSet, LayerId, Provenance, SlicePos};
use crate::spectral::{average_spectrum, pad_target, spectrum_correlation, to_spectrum_padded, Spectrum};

pub use report::{chart_file_name, export_report, export_reports, render_chart, ChartAxis};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MIN_SLICES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "FID")]
    Fid,
    #[serde(rename = "KL256")]
    Kl256,
    #[serde(rename = "KL3")]
    Kl3,
    HistCorr,
    HistInter,
    SpectCorr,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Fid,
        Metric::Kl256,
        Metric::Kl3,
        Metric::HistCorr,
        Metric::HistInter,
        Metric::SpectCorr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Fid => "FID",
            Metric::Kl256 => "KL256",
            Metric::Kl3 => "KL3",
            Metric::HistCorr => "HistCorr",
            Metric::HistInter => "HistInter",
            Metric::SpectCorr => "SpectCorr",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tunables of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_bins: usize,
    pub tissue_thresholds: (f64, f64),
    /// Histogram range for CT; defaults to the real set's HU range.
    pub hu_range: Option<(f64, f64)>,
    pub min_slices: usize,
    pub kl_epsilon: f64,
    pub frechet_eps: f64,
    pub seed: Option<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_bins: DEFAULT_BINS,
            tissue_thresholds: (TissueBinning::DEFAULT_T1, TissueBinning::DEFAULT_T2),
            hu_range: None,
            min_slices: DEFAULT_MIN_SLICES,
            kl_epsilon: DEFAULT_KL_EPSILON,
            frechet_eps: DEFAULT_FRECHET_EPS,
            seed: None,
        }
    }
}

/// Settings as applied, embedded in every report and baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub n_bins: usize,
    pub tissue_thresholds: [f64; 2],
    pub hu_range: [f64; 2],
    /// Range actually binned: the HU range for CT, `[0, 1]` for MR.
    pub value_range: [f64; 2],
    pub min_slices: usize,
    pub kl_epsilon: f64,
    pub kl_direction: String,
    pub frechet_eps: f64,
    pub spectrum_size: [usize; 2],
    pub seed: Option<u64>,
    pub extractor_desc: Option<String>,
}

/// Feature matrices for the two sides of a comparison; rows are looked up by slice key.
#[derive(Debug, Clone, Copy)]
pub struct FeaturePair<'a> {
    pub real: &'a FeatureMatrix,
    pub synth: &'a FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScore {
    pub layer: LayerId,
    pub metric: Metric,
    pub raw: f64,
    pub normalized: Option<f64>,
    pub n_real: usize,
    pub n_synth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLayer {
    pub layer: LayerId,
    pub n_real: usize,
    pub n_synth: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAverage {
    pub metric: Metric,
    /// Mean raw score over scored layers.
    pub raw: f64,
    /// Mean raw score divided by the baseline mean, over layers present in both.
    pub normalized: Option<f64>,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: u32,
    pub set_real: String,
    pub set_synth: String,
    pub n_real: usize,
    pub n_synth: usize,
    pub baseline: Option<String>,
    pub config: ConfigSnapshot,
    pub per_layer: Vec<LayerScore>,
    pub averages: Vec<MetricAverage>,
    pub skipped_layers: Vec<SkippedLayer>,
}

impl EvaluationReport {
    pub fn score(&self, layer: LayerId, metric: Metric) -> Option<&LayerScore> {
        self.per_layer.iter().find(|s| s.layer == layer && s.metric == metric)
    }

    pub fn scored_layers(&self) -> Vec<LayerId> {
        let mut v: Vec<LayerId> = self.per_layer.iter().map(|s| s.layer).collect();
        v.dedup();
        v
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, "report", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub layer: LayerId,
    pub metric: Metric,
    pub value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Real-vs-real scores per layer and metric, the denominators of normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub schema: u32,
    pub set_a: String,
    pub set_b: String,
    pub config: ConfigSnapshot,
    pub entries: Vec<BaselineEntry>,
    pub skipped_layers: Vec<SkippedLayer>,
}

impl Baseline {
    pub fn value(&self, layer: LayerId, metric: Metric) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.layer == layer && e.metric == metric)
            .map(|e| e.value)
    }

    /// Every entry must be strictly positive to serve as a divisor.
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if e.value.is_nan() || e.value <= 0.0 {
                return Err(Error::DegenerateBaseline {
                    layer: e.layer.get(),
                    metric: e.metric.to_string(),
                    value: e.value,
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = serde_json::to_string_pretty(self).expect("baseline serializes");
        s.push('\n');
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let b: Baseline =
            serde_json::from_str(&text).map_err(|e| Error::malformed(path, "baseline", e.to_string()))?;
        if b.schema != SCHEMA_VERSION {
            return Err(Error::malformed(path, "schema", format!("unsupported schema {}", b.schema)));
        }
        Ok(b)
    }
}

struct Context<'a> {
    range: (f64, f64),
    n_bins: usize,
    tissue: Option<TissueBinning>,
    pad: (usize, usize),
    kl_epsilon: f64,
    frechet_eps: f64,
    features: Option<(FeatureLookup<'a>, FeatureLookup<'a>)>,
}

struct FeatureLookup<'a> {
    matrix: &'a FeatureMatrix,
    rows: HashMap<&'a str, usize>,
}

impl<'a> FeatureLookup<'a> {
    fn new(matrix: &'a FeatureMatrix, set: &ImageSet) -> Result<Self> {
        let rows = matrix.index();
        for (_, s) in set.iter_slices() {
            if !rows.contains_key(s.key().as_str()) {
                return Err(Error::MissingFeature(format!("{}:{}", set.set_id, s.key())));
            }
        }
        Ok(FeatureLookup { matrix, rows })
    }

    fn select(&self, set: &ImageSet, members: &[SlicePos]) -> FeatureMatrix {
        let idx: Vec<usize> = members.iter().map(|&p| self.rows[set.slice(p).key().as_str()]).collect();
        self.matrix.select(&idx)
    }
}

struct Layered {
    layer: LayerId,
    n_a: usize,
    n_b: usize,
    outcome: std::result::Result<Vec<(Metric, f64)>, String>,
}

fn build_context<'a>(
    a: &ImageSet,
    b: &ImageSet,
    config: &EvalConfig,
    features: Option<FeaturePair<'a>>,
) -> Result<(Context<'a>, ConfigSnapshot)> {
    for s in [a, b] {
        if !s.is_layered() {
            return Err(Error::invalid(format!("set {} has no layer assignment", s.set_id)));
        }
    }
    if a.contrast_enhanced != b.contrast_enhanced {
        return Err(Error::invalid(format!(
            "cannot compare contrast-enhanced and non-contrast sets ({} vs {})",
            a.set_id, b.set_id
        )));
    }
    let modality = a.modality()?;
    if b.modality()? != modality {
        return Err(Error::invalid(format!("sets {} and {} differ in modality", a.set_id, b.set_id)));
    }
    if config.n_bins == 0 {
        return Err(Error::invalid("n_bins must be at least 1"));
    }
    if config.min_slices < 2 {
        return Err(Error::invalid("min_slices must be at least 2"));
    }
    let hu_range = config.hu_range.unwrap_or(a.hu_range);
    let (range, tissue) = if modality.is_ct() {
        let (t1, t2) = config.tissue_thresholds;
        (hu_range, Some(TissueBinning::new(hu_range, t1, t2)?))
    } else {
        ((0.0, 1.0), None)
    };
    let (mut rows, mut cols) = (1, 1);
    for (_, s) in a.iter_slices().chain(b.iter_slices()) {
        rows = rows.max(s.rows());
        cols = cols.max(s.cols());
    }
    let pad = pad_target(rows, cols);
    let features = match features {
        Some(fp) => Some((FeatureLookup::new(fp.real, a)?, FeatureLookup::new(fp.synth, b)?)),
        None => None,
    };
    let extractor_desc = features
        .as_ref()
        .and_then(|(r, s)| r.matrix.extractor_desc.clone().or_else(|| s.matrix.extractor_desc.clone()));
    let snapshot = ConfigSnapshot {
        n_bins: config.n_bins,
        tissue_thresholds: [config.tissue_thresholds.0, config.tissue_thresholds.1],
        hu_range: [hu_range.0, hu_range.1],
        value_range: [range.0, range.1],
        min_slices: config.min_slices,
        kl_epsilon: config.kl_epsilon,
        kl_direction: "D(real || synthetic)".into(),
        frechet_eps: config.frechet_eps,
        spectrum_size: [pad.0, pad.1],
        seed: config.seed,
        extractor_desc,
    };
    let ctx = Context {
        range,
        n_bins: config.n_bins,
        tissue,
        pad,
        kl_epsilon: config.kl_epsilon,
        frechet_eps: config.frechet_eps,
        features,
    };
    Ok((ctx, snapshot))
}

fn score_layer(a: &ImageSet, b: &ImageSet, ma: &[SlicePos], mb: &[SlicePos], ctx: &Context) -> Result<Vec<(Metric, f64)>> {
    let hist = |set: &ImageSet, m: &[SlicePos]| -> Result<_> {
        let hs = m
            .par_iter()
            .map(|&p| image_histogram(set.slice(p), ctx.n_bins, ctx.range))
            .collect::<Result<Vec<_>>>()?;
        average_histogram(&hs)
    };
    let spec = |set: &ImageSet, m: &[SlicePos]| -> Result<_> {
        let ss = m
            .par_iter()
            .map(|&p| to_spectrum_padded(set.slice(p), ctx.pad))
            .collect::<Result<Vec<_>>>()?;
        average_spectrum(&ss)
    };
    let mut out = Vec::with_capacity(6);
    if let Some((fa, fb)) = &ctx.features {
        let ga = fit_gaussian(&fa.select(a, ma))?;
        let gb = fit_gaussian(&fb.select(b, mb))?;
        out.push((Metric::Fid, frechet_distance(&ga, &gb, ctx.frechet_eps)?));
    }
    let (ha, hb) = (hist(a, ma)?, hist(b, mb)?);
    out.push((Metric::Kl256, kl_divergence(&ha, &hb, ctx.kl_epsilon)?));
    if let Some(tb) = &ctx.tissue {
        let tissue = |set: &ImageSet, m: &[SlicePos]| -> Result<_> {
            let hs = m
                .iter()
                .map(|&p| tissue_histogram(set.slice(p), tb))
                .collect::<Result<Vec<_>>>()?;
            average_histogram(&hs)
        };
        out.push((Metric::Kl3, kl_divergence(&tissue(a, ma)?, &tissue(b, mb)?, ctx.kl_epsilon)?));
    }
    out.push((Metric::HistCorr, hist_correlation(&ha, &hb)?));
    out.push((Metric::HistInter, hist_intersection(&ha, &hb)?));
    out.push((Metric::SpectCorr, spectrum_correlation(&spec(a, ma)?, &spec(b, mb)?)?));
    Ok(out)
}

/// Scores every layer of `a` against `b`. Layers with too few slices on
/// either side are reported as skipped. Results are in layer order.
fn score_layers(a: &ImageSet, b: &ImageSet, min_slices: usize, ctx: &Context) -> Result<Vec<Layered>> {
    let layers: Vec<LayerId> = LayerId::all().collect();
    let results: Vec<Result<Layered>> = layers
        .par_iter()
        .map(|&layer| {
            let (ma, mb) = (a.layer_members(layer), b.layer_members(layer));
            let (n_a, n_b) = (ma.len(), mb.len());
            if n_a < min_slices || n_b < min_slices {
                return Ok(Layered {
                    layer,
                    n_a,
                    n_b,
                    outcome: Err(format!("fewer than {min_slices} slices ({n_a} vs {n_b})")),
                });
            }
            Ok(Layered {
                layer,
                n_a,
                n_b,
                outcome: Ok(score_layer(a, b, &ma, &mb, ctx)?),
            })
        })
        .collect();
    results.into_iter().collect()
}

/// Real-vs-real scores between a held-out subset and the rest.
pub fn compute_baseline(
    holdout: &ImageSet,
    rest: &ImageSet,
    features: Option<FeaturePair>,
    config: &EvalConfig,
) -> Result<Baseline> {
    for s in [holdout, rest] {
        if s.provenance != Provenance::Real {
            return Err(Error::invalid(format!("baseline set {} is not real", s.set_id)));
        }
    }
    let (ctx, snapshot) = build_context(holdout, rest, config, features)?;
    let mut entries = Vec::new();
    let mut skipped_layers = Vec::new();
    for l in score_layers(holdout, rest, config.min_slices, &ctx)? {
        match l.outcome {
            Ok(scores) => entries.extend(scores.into_iter().map(|(metric, value)| BaselineEntry {
                layer: l.layer,
                metric,
                value,
                n_a: l.n_a,
                n_b: l.n_b,
            })),
            Err(reason) => skipped_layers.push(SkippedLayer {
                layer: l.layer,
                n_real: l.n_a,
                n_synth: l.n_b,
                reason,
            }),
        }
    }
    let baseline = Baseline {
        schema: SCHEMA_VERSION,
        set_a: holdout.set_id.clone(),
        set_b: rest.set_id.clone(),
        config: snapshot,
        entries,
        skipped_layers,
    };
    baseline.validate()?;
    Ok(baseline)
}

/// Layer-wise scores of `synth` against `real`, normalized when a baseline is given.
pub fn evaluate_sets(
    real: &ImageSet,
    synth: &ImageSet,
    baseline: Option<&Baseline>,
    features: Option<FeaturePair>,
    config: &EvalConfig,
) -> Result<EvaluationReport> {
    if let Some(b) = baseline {
        b.validate()?;
    }
    let (ctx, snapshot) = build_context(real, synth, config, features)?;
    let mut per_layer = Vec::new();
    let mut skipped_layers = Vec::new();
    for l in score_layers(real, synth, config.min_slices, &ctx)? {
        match l.outcome {
            Ok(scores) => per_layer.extend(scores.into_iter().map(|(metric, raw)| LayerScore {
                layer: l.layer,
                metric,
                raw,
                normalized: baseline.and_then(|b| b.value(l.layer, metric)).map(|d| raw / d),
                n_real: l.n_a,
                n_synth: l.n_b,
            })),
            Err(reason) => skipped_layers.push(SkippedLayer {
                layer: l.layer,
                n_real: l.n_a,
                n_synth: l.n_b,
                reason,
            }),
        }
    }
    let averages = averages(&per_layer, baseline);
    Ok(EvaluationReport {
        schema: SCHEMA_VERSION,
        set_real: real.set_id.clone(),
        set_synth: synth.set_id.clone(),
        n_real: real.num_slices(),
        n_synth: synth.num_slices(),
        baseline: baseline.map(|b| format!("{} vs {}", b.set_a, b.set_b)),
        config: snapshot,
        per_layer,
        averages,
        skipped_layers,
    })
}

fn averages(per_layer: &[LayerScore], baseline: Option<&Baseline>) -> Vec<MetricAverage> {
    let mut by_metric: BTreeMap<Metric, Vec<&LayerScore>> = BTreeMap::new();
    for s in per_layer {
        by_metric.entry(s.metric).or_default().push(s);
    }
    by_metric
        .into_iter()
        .map(|(metric, scores)| {
            let raw = scores.iter().map(|s| s.raw).sum::<f64>() / scores.len() as f64;
            let normalized = baseline.and_then(|b| {
                let pairs: Vec<(f64, f64)> = scores
                    .iter()
                    .filter_map(|s| b.value(s.layer, metric).map(|d| (s.raw, d)))
                    .collect();
                if pairs.is_empty() {
                    return None;
                }
                let num: f64 = pairs.iter().map(|p| p.0).sum();
                let den: f64 = pairs.iter().map(|p| p.1).sum();
                Some(num / den)
            });
            MetricAverage {
                metric,
                raw,
                normalized,
                layers: scores.len(),
            }
        })
        .collect()
}

/// Average spectrum of every non-empty layer, all at the set's common padded size.
pub fn layer_spectra(set: &ImageSet) -> Result<Vec<(LayerId, Spectrum)>> {
    if !set.is_layered() {
        return Err(Error::invalid(format!("set {} has no layer assignment", set.set_id)));
    }
    let (mut rows, mut cols) = (1, 1);
    for (_, s) in set.iter_slices() {
        rows = rows.max(s.rows());
        cols = cols.max(s.cols());
    }
    let pad = pad_target(rows, cols);
    let mut out = Vec::new();
    for layer in LayerId::all() {
        let members = set.layer_members(layer);
        if members.is_empty() {
            continue;
        }
        let specs = members
            .par_iter()
            .map(|&p| to_spectrum_padded(set.slice(p), pad))
            .collect::<Result<Vec<_>>>()?;
        out.push((layer, average_spectrum(&specs)?));
    }
    Ok(out)
}

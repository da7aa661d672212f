//! Intensity histograms and the histogram-based similarity scores:
//! KL divergence, Pearson correlation over bins, and intersection.
//!
//! All scores operate on densities, so sets with different slice counts are
//! directly comparable and intersection stays within `[0, 1]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::slice::validate_range;
use crate::imaging::SliceImage;

pub const DEFAULT_BINS: usize = 256;
pub const DEFAULT_KL_EPSILON: f64 = 1e-12;

/// Binned intensity distribution. `density` always sums to 1 when any mass is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "HistogramFile", try_from = "HistogramFile")]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    density: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HistogramFile {
    n_bins: usize,
    edges: Vec<f64>,
    counts: Vec<u64>,
}

impl From<Histogram> for HistogramFile {
    fn from(h: Histogram) -> Self {
        HistogramFile {
            n_bins: h.n_bins(),
            edges: h.edges,
            counts: h.counts,
        }
    }
}

impl TryFrom<HistogramFile> for Histogram {
    type Error = Error;
    fn try_from(f: HistogramFile) -> Result<Self> {
        if f.n_bins != f.counts.len() {
            return Err(Error::invalid(format!(
                "n_bins {} but {} counts",
                f.n_bins,
                f.counts.len()
            )));
        }
        Histogram::from_counts(f.edges, f.counts)
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::invalid("a histogram needs at least one bin"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("histogram edges must be finite and strictly increasing"));
    }
    Ok(())
}

fn uniform_edges(n_bins: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    let width = hi - lo;
    (0..=n_bins)
        .map(|i| if i == n_bins { hi } else { lo + width * i as f64 / n_bins as f64 })
        .collect()
}

impl Histogram {
    pub fn from_counts(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        check_edges(&edges)?;
        if counts.len() + 1 != edges.len() {
            return Err(Error::invalid(format!(
                "{} edges do not bound {} bins",
                edges.len(),
                counts.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        let density = if total > 0 {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        } else {
            vec![0.0; counts.len()]
        };
        Ok(Histogram { edges, counts, density })
    }

    /// Counts over `n_bins` unit-width bins `[0, n_bins)`; handy for tests and the C API.
    pub fn from_bin_counts(counts: Vec<u64>) -> Result<Self> {
        let n = counts.len();
        Histogram::from_counts((0..=n).map(|i| i as f64).collect(), counts)
    }

    /// A histogram known only by its density (no sample counts). Density must sum to 1.
    pub fn from_density(edges: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        if density.len() + 1 != edges.len() {
            return Err(Error::invalid("density length does not match edges"));
        }
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("density entries must be finite and non-negative"));
        }
        let sum: f64 = density.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("density sums to {sum}, expected 1")));
        }
        let counts = vec![0; density.len()];
        Ok(Histogram { edges, counts, density })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn same_binning(&self, other: &Histogram) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::invalid(format!(
                "histograms have different binning ({} vs {} bins)",
                self.n_bins(),
                other.n_bins()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("histogram serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, "histogram", e.to_string()))
    }
}

/// Bin index of `v` for `n_bins` uniform bins over `[lo, hi]`, saturating at both ends.
#[inline]
pub fn uniform_bin(v: f64, n_bins: usize, lo: f64, hi: f64) -> usize {
    let pos = ((v - lo) / (hi - lo) * n_bins as f64).floor();
    if pos <= 0.0 {
        0
    } else {
        (pos as usize).min(n_bins - 1)
    }
}

/// Uniform-bin histogram of a slice over `range`. Out-of-range values fall in the end bins.
pub fn image_histogram(slice: &SliceImage, n_bins: usize, range: (f64, f64)) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be at least 1"));
    }
    validate_range(range)?;
    if slice.is_empty() {
        return Err(Error::invalid("cannot histogram an empty slice"));
    }
    let (lo, hi) = range;
    let mut counts = vec![0u64; n_bins];
    for &v in slice.values.iter() {
        counts[uniform_bin(f64::from(v), n_bins, lo, hi)] += 1;
    }
    Histogram::from_counts(uniform_edges(n_bins, range), counts)
}

/// Element-wise mean of densities; counts are summed.
pub fn average_histogram(hists: &[Histogram]) -> Result<Histogram> {
    let first = hists
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty list of histograms"))?;
    for h in &hists[1..] {
        first.same_binning(h)?;
    }
    let n = first.n_bins();
    let mut counts = vec![0u64; n];
    let mut density = vec![0.0; n];
    // Running mean: exact when all inputs are equal.
    for (j, h) in hists.iter().enumerate() {
        let w = 1.0 / (j + 1) as f64;
        for i in 0..n {
            counts[i] += h.counts[i];
            density[i] += (h.density[i] - density[i]) * w;
        }
    }
    Ok(Histogram {
        edges: first.edges.clone(),
        counts,
        density,
    })
}

/// Three radio-opacity classes over a HU range: gas/liquid, soft tissue, bone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueBinning {
    pub hu_lo: f64,
    pub t1: f64,
    pub t2: f64,
    pub hu_hi: f64,
}

impl TissueBinning {
    pub const DEFAULT_T1: f64 = -200.0;
    pub const DEFAULT_T2: f64 = 200.0;

    pub fn new(hu_range: (f64, f64), t1: f64, t2: f64) -> Result<Self> {
        let (hu_lo, hu_hi) = hu_range;
        if !(hu_lo < t1 && t1 < t2 && t2 < hu_hi) {
            return Err(Error::invalid(format!(
                "tissue thresholds must satisfy {hu_lo} < t1={t1} < t2={t2} < {hu_hi}"
            )));
        }
        Ok(TissueBinning { hu_lo, t1, t2, hu_hi })
    }

    pub fn with_defaults(hu_range: (f64, f64)) -> Result<Self> {
        Self::new(hu_range, Self::DEFAULT_T1, Self::DEFAULT_T2)
    }

    pub fn edges(&self) -> Vec<f64> {
        vec![self.hu_lo, self.t1, self.t2, self.hu_hi]
    }

    #[inline]
    pub fn class_of(&self, v: f64) -> usize {
        if v < self.t1 {
            0
        } else if v < self.t2 {
            1
        } else {
            2
        }
    }
}

/// 3-bin histogram over `[hu_lo, t1)`, `[t1, t2)`, `[t2, hu_hi]`. CT only.
pub fn tissue_histogram(slice: &SliceImage, binning: &TissueBinning) -> Result<Histogram> {
    if !slice.modality.is_ct() {
        return Err(Error::invalid(format!(
            "tissue binning is defined in HU; slice {} is {}",
            slice.key(),
            slice.modality.as_str()
        )));
    }
    if slice.is_empty() {
        return Err(Error::invalid("cannot histogram an empty slice"));
    }
    let mut counts = vec![0u64; 3];
    for &v in slice.values.iter() {
        counts[binning.class_of(f64::from(v))] += 1;
    }
    Histogram::from_counts(binning.edges(), counts)
}

/// KL divergence `D(p || q)` in nats, after adding `epsilon` to every bin of
/// both densities and renormalizing.
pub fn kl_divergence(p: &Histogram, q: &Histogram, epsilon: f64) -> Result<f64> {
    p.same_binning(q)?;
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let smooth = |d: &[f64]| -> Vec<f64> {
        let total: f64 = d.iter().map(|x| x + epsilon).sum();
        d.iter().map(|x| (x + epsilon) / total).collect()
    };
    let ps = smooth(&p.density);
    let qs = smooth(&q.density);
    Ok(ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum())
}

fn pearson(a: &[f64], b: &[f64], what: &str) -> Result<f64> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateDistribution(format!("{what} has zero variance")));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of two density vectors, centred on their per-bin means.
pub fn hist_correlation(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    h1.same_binning(h2)?;
    pearson(&h1.density, &h2.density, "histogram density")
}

pub(crate) fn pearson_correlation(a: &[f64], b: &[f64], what: &str) -> Result<f64> {
    pearson(a, b, what)
}

/// Sum over bins of the smaller density.
pub fn hist_intersection(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    h1.same_binning(h2)?;
    Ok(h1.density.iter().zip(&h2.density).map(|(a, b)| a.min(*b)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Modality;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ct(values: Vec<f32>, rows: usize, cols: usize) -> SliceImage {
        SliceImage::new("v", 0, Modality::Ct, Array2::from_shape_vec((rows, cols), values).unwrap()).unwrap()
    }

    fn h(counts: &[u64]) -> Histogram {
        Histogram::from_bin_counts(counts.to_vec()).unwrap()
    }

    #[test]
    fn constant_slice_at_lo_fills_bin_zero() {
        let hist = image_histogram(&ct(vec![-1024.0; 9], 3, 3), 256, (-1024.0, 3071.0)).unwrap();
        assert_eq!(hist.counts()[0], 9);
        assert_eq!(hist.density()[0], 1.0);
    }

    #[test]
    fn two_bin_symmetry() {
        let hist = image_histogram(&ct(vec![0.0, 0.0, 1.0, 1.0], 2, 2), 2, (0.0, 1.0)).unwrap();
        assert_eq!(hist.density(), &[0.5, 0.5]);
    }

    #[test]
    fn random_slice_matches_brute_force_binning() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vals: Vec<f32> = (0..256).map(|_| rng.random_range(-1100.0f32..3100.0)).collect();
        let slice = ct(vals.clone(), 16, 16);
        let (lo, hi, n) = (-1024.0f64, 3071.0f64, 64usize);
        let hist = image_histogram(&slice, n, (lo, hi)).unwrap();

        // Oracle: scan bins by edge comparison rather than the floor formula.
        let width = (hi - lo) / n as f64;
        let mut expected = vec![0u64; n];
        for v in vals {
            let v = f64::from(v);
            let mut bin = 0;
            for b in 0..n {
                if v >= lo + b as f64 * width {
                    bin = b;
                }
            }
            expected[bin] += 1;
        }
        assert_eq!(hist.counts(), expected.as_slice());
        assert_eq!(hist.total(), 256);
    }

    #[test]
    fn empty_slice_errors() {
        let mut s = ct(vec![0.0], 1, 1);
        s.values = Array2::zeros((0, 0));
        assert!(image_histogram(&s, 4, (0.0, 1.0)).is_err());
        assert!(image_histogram(&ct(vec![0.0], 1, 1), 0, (0.0, 1.0)).is_err());
    }

    #[test]
    fn average_of_one_is_identity() {
        let a = h(&[3, 1]);
        assert_eq!(average_histogram(std::slice::from_ref(&a)).unwrap().density(), a.density());
    }

    #[test]
    fn average_of_disjoint_pair() {
        let avg = average_histogram(&[h(&[1, 0]), h(&[0, 1])]).unwrap();
        assert_eq!(avg.density(), &[0.5, 0.5]);
        assert_eq!(avg.counts(), &[1, 1]);
    }

    #[test]
    fn average_matches_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hists: Vec<Histogram> = (0..10)
            .map(|_| h(&(0..8).map(|_| rng.random_range(0..50u64) + 1).collect::<Vec<_>>()))
            .collect();
        let avg = average_histogram(&hists).unwrap();
        for i in 0..8 {
            let mut s = 0.0;
            for hh in &hists {
                s += hh.density()[i];
            }
            assert!((avg.density()[i] - s / 10.0).abs() < 1e-15 * s.max(1.0));
        }
    }

    #[test]
    fn average_rejects_mismatch_and_empty() {
        assert!(average_histogram(&[]).is_err());
        assert!(average_histogram(&[h(&[1, 1]), h(&[1, 1, 1])]).is_err());
    }

    #[test]
    fn tissue_bins() {
        let b = TissueBinning::with_defaults((-1024.0, 3071.0)).unwrap();
        let air = tissue_histogram(&ct(vec![-1000.0; 4], 2, 2), &b).unwrap();
        assert_eq!(air.density(), &[1.0, 0.0, 0.0]);
        let mixed = tissue_histogram(&ct(vec![30.0, 30.0, 1000.0, 1000.0], 2, 2), &b).unwrap();
        assert_eq!(mixed.density(), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn tissue_matches_per_pixel_classification() {
        let b = TissueBinning::with_defaults((-1024.0, 3071.0)).unwrap();
        let vals = vec![-1024.0, -200.0, -200.5, 199.9, 200.0, 3071.0, -50.0, 0.0, 900.0];
        let hist = tissue_histogram(&ct(vals.clone(), 3, 3), &b).unwrap();
        let mut expected = [0u64; 3];
        for v in vals {
            let c = if v < -200.0 {
                0
            } else if v < 200.0 {
                1
            } else {
                2
            };
            expected[c] += 1;
        }
        assert_eq!(hist.counts(), &expected);
    }

    #[test]
    fn tissue_rejects_mr() {
        let b = TissueBinning::with_defaults((-1024.0, 3071.0)).unwrap();
        let mut s = ct(vec![0.0], 1, 1);
        s.modality = Modality::MrT2;
        assert!(matches!(tissue_histogram(&s, &b), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn tissue_threshold_ordering() {
        assert!(TissueBinning::new((-1024.0, 3071.0), 200.0, -200.0).is_err());
        assert!(TissueBinning::new((-1024.0, 3071.0), -2000.0, 200.0).is_err());
    }

    #[test]
    fn kl_identity_and_ln2() {
        let p = h(&[3, 1]);
        assert!(kl_divergence(&p, &p, DEFAULT_KL_EPSILON).unwrap().abs() < 1e-12);
        let d = kl_divergence(&h(&[1, 0]), &h(&[1, 1]), DEFAULT_KL_EPSILON).unwrap();
        assert!((d - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn kl_is_asymmetric() {
        // 0.9 ln 1.8 + 0.1 ln 0.2 = 0.368064...; 0.5 ln(5/9) + 0.5 ln 5 = 0.510826...
        let p = h(&[9, 1]);
        let q = h(&[5, 5]);
        let pq = kl_divergence(&p, &q, DEFAULT_KL_EPSILON).unwrap();
        let qp = kl_divergence(&q, &p, DEFAULT_KL_EPSILON).unwrap();
        assert!((pq - (0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln())).abs() < 1e-9);
        assert!((qp - (0.5 * (5.0f64 / 9.0).ln() + 0.5 * 5.0f64.ln())).abs() < 1e-9);
        assert!((pq - qp).abs() > 0.1);
    }

    #[test]
    fn kl_rejects_bad_input() {
        assert!(kl_divergence(&h(&[1, 1]), &h(&[1, 1, 1]), 1e-12).is_err());
        assert!(kl_divergence(&h(&[1, 1]), &h(&[1, 1]), 0.0).is_err());
    }

    #[test]
    fn correlation_cases() {
        let a = h(&[5, 2, 1, 7]);
        assert_eq!(hist_correlation(&a, &a).unwrap(), 1.0);
        assert_eq!(hist_correlation(&h(&[1, 0]), &h(&[0, 1])).unwrap(), -1.0);
        assert!(matches!(
            hist_correlation(&h(&[1, 1, 1, 1]), &a),
            Err(Error::DegenerateDistribution(_))
        ));
    }

    #[test]
    fn intersection_cases() {
        let a = h(&[7, 3]);
        assert_eq!(hist_intersection(&a, &a).unwrap(), 1.0);
        assert_eq!(hist_intersection(&h(&[1, 0]), &h(&[0, 1])).unwrap(), 0.0);
        assert!((hist_intersection(&a, &h(&[4, 6])).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn json_recomputes_density() {
        let a = Histogram::from_counts(vec![0.0, 1.0, 3.0], vec![1, 3]).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(text, r#"{"n_bins":2,"edges":[0.0,1.0,3.0],"counts":[1,3]}"#);
        let back: Histogram = serde_json::from_str(&text).unwrap();
        assert_eq!(back.density(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<Histogram>(r#"{"n_bins":3,"edges":[0,1,3],"counts":[1,3]}"#).is_err());
    }

    fn counts_strategy() -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
        (2usize..32).prop_flat_map(|n| {
            (
                prop::collection::vec(0u64..1000, n),
                prop::collection::vec(0u64..1000, n),
            )
        })
    }

    proptest! {
        #[test]
        fn kl_gibbs((a, b) in counts_strategy()) {
            prop_assume!(a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0);
            let (p, q) = (h(&a), h(&b));
            prop_assert!(kl_divergence(&p, &q, DEFAULT_KL_EPSILON).unwrap() >= -1e-12);
            prop_assert!(kl_divergence(&p, &p, DEFAULT_KL_EPSILON).unwrap().abs() <= 1e-12);
        }

        #[test]
        fn correlation_symmetric_and_scale_invariant((a, b) in counts_strategy(), k in 1u64..50) {
            let (p, q) = (h(&a), h(&b));
            if let (Ok(pq), Ok(qp)) = (hist_correlation(&p, &q), hist_correlation(&q, &p)) {
                prop_assert!((pq - qp).abs() <= 1e-12);
                let scaled = h(&a.iter().map(|c| c * k).collect::<Vec<_>>());
                prop_assert!((hist_correlation(&scaled, &q).unwrap() - pq).abs() <= 1e-12);
            }
        }

        #[test]
        fn intersection_symmetric_and_bounded((a, b) in counts_strategy()) {
            prop_assume!(a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0);
            let (p, q) = (h(&a), h(&b));
            let pq = hist_intersection(&p, &q).unwrap();
            prop_assert!((pq - hist_intersection(&q, &p).unwrap()).abs() <= 1e-15);
            let bound = p.density().iter().sum::<f64>().min(q.density().iter().sum::<f64>());
            prop_assert!(pq <= bound + 1e-15 && pq >= 0.0);
        }

        #[test]
        fn average_of_copies_is_exact(a in prop::collection::vec(0u64..1000, 2..32), k in 1usize..12) {
            prop_assume!(a.iter().sum::<u64>() > 0);
            let p = h(&a);
            let copies = vec![p.clone(); k];
            let avg = average_histogram(&copies).unwrap();
            prop_assert_eq!(avg.density(), p.density());
        }

        #[test]
        fn tissue_matches_reaggregated_fine_histogram(vals in prop::collection::vec(-1100.0f32..3100.0, 1..200)) {
            // 256 bins of width 16 over [-1024, 3072): thresholds sit on bin edges 51 and 77.
            let range = (-1024.0, 3072.0);
            let binning = TissueBinning::new(range, -208.0, 208.0).unwrap();
            let n = vals.len();
            let slice = ct(vals, 1, n);
            let fine = image_histogram(&slice, 256, range).unwrap();
            let coarse = tissue_histogram(&slice, &binning).unwrap();
            let c = fine.counts();
            let agg = [c[..51].iter().sum::<u64>(), c[51..77].iter().sum(), c[77..].iter().sum()];
            prop_assert_eq!(coarse.counts(), &agg[..]);
        }
    }
}

//! Gaussian summaries of feature embeddings and the Fréchet distance between them.
//!
//! The distance is
//! `‖m₁ − m₂‖² + Tr(C₁) + Tr(C₂) − 2·Tr((C₁^{1/2} C₂ C₁^{1/2})^{1/2})`.
//! The trace of the root is taken over the symmetric product, which equals
//! `Tr((C₁C₂)^{1/2})` but stays within real symmetric eigenproblems.

pub mod features;
pub mod linalg;

use rayon::prelude::*;

pub use features::{load_features, FeatureMatrix};
pub use linalg::{sqrt_spd, trace_sqrt_spd, Matrix};

use crate::error::{Error, Result};

pub const DEFAULT_FRECHET_EPS: f64 = 1e-6;

/// Mean vector and covariance matrix of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl GaussianSummary {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::invalid(format!(
                "mean has dimension {}, covariance {}",
                mean.len(),
                cov.dim()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) || !cov.is_finite() {
            return Err(Error::invalid("gaussian summary has non-finite entries"));
        }
        let scale = cov.frobenius().max(1e-300);
        if cov.asymmetry() > 1e-10 * scale {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        Ok(GaussianSummary { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Column means and unbiased (n−1) sample covariance, symmetrized.
pub fn fit_gaussian(f: &FeatureMatrix) -> Result<GaussianSummary> {
    let (n, d) = (f.n(), f.d());
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(f.row(i)) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered: Vec<f64> = (0..n)
        .flat_map(|i| f.row(i).iter().zip(&mean).map(|(&v, m)| f64::from(v) - m))
        .collect();
    let denom = (n - 1) as f64;
    let mut cov = vec![0.0; d * d];
    cov.par_chunks_mut(d).enumerate().for_each(|(a, row)| {
        for i in 0..n {
            let x = &centered[i * d..(i + 1) * d];
            let xa = x[a];
            if xa == 0.0 {
                continue;
            }
            for (r, &xb) in row.iter_mut().zip(x) {
                *r += xa * xb;
            }
        }
        row.iter_mut().for_each(|r| *r /= denom);
    });
    let mut cov = Matrix::from_rows(d, cov)?;
    cov.symmetrize();
    GaussianSummary::new(mean, cov)
}

fn trace_term(c1: &Matrix, c2: &Matrix) -> Result<f64> {
    let root = sqrt_spd(c1)?;
    let mut inner = root.matmul(c2).matmul(&root);
    inner.symmetrize();
    trace_sqrt_spd(&inner)
}

/// Squared Fréchet distance between two Gaussians, clamped at zero.
///
/// If the cross term turns out numerically indefinite, `eps` is added to both
/// covariance diagonals for the square root only and the computation retried.
pub fn frechet_distance(g1: &GaussianSummary, g2: &GaussianSummary, eps: f64) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::invalid(format!(
            "feature dimensions differ: {} vs {}",
            g1.dim(),
            g2.dim()
        )));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::invalid(format!("eps must be non-negative, got {eps}")));
    }
    let mean_term: f64 = g1.mean.iter().zip(&g2.mean).map(|(a, b)| (a - b) * (a - b)).sum();
    // The trace term is analytically symmetric but not in floating point when a
    // covariance is near singular. A fixed order makes d(g1,g2) == d(g2,g1) exactly.
    let (c1, c2) = if rooted_first(&g1.cov, &g2.cov) {
        (&g1.cov, &g2.cov)
    } else {
        (&g2.cov, &g1.cov)
    };
    let tr_sqrt = match trace_term(c1, c2) {
        Ok(t) => t,
        Err(Error::NotPositiveSemidefinite { .. }) if eps > 0.0 => {
            let mut c1 = c1.clone();
            let mut c2 = c2.clone();
            c1.add_diagonal(eps);
            c2.add_diagonal(eps);
            trace_term(&c1, &c2)?
        }
        Err(e) => return Err(e),
    };
    let d2 = mean_term + (g1.cov.trace() + g2.cov.trace()) - 2.0 * tr_sqrt;
    Ok(d2.max(0.0))
}

/// Which covariance is square-rooted in the trace term: larger trace first,
/// ties broken by the entries.
fn rooted_first(a: &Matrix, b: &Matrix) -> bool {
    match a.trace().total_cmp(&b.trace()) {
        std::cmp::Ordering::Equal => {
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne())
                != Some(std::cmp::Ordering::Less)
        }
        o => o.is_gt(),
    }
}

/// Fréchet distance between Gaussians fitted to two feature sets.
pub fn fid_between_sets(real: &FeatureMatrix, synth: &FeatureMatrix) -> Result<f64> {
    if real.d() != synth.d() {
        return Err(Error::invalid(format!(
            "feature dimensions differ: {} vs {}",
            real.d(),
            synth.d()
        )));
    }
    let g1 = fit_gaussian(real)?;
    let g2 = fit_gaussian(synth)?;
    frechet_distance(&g1, &g2, DEFAULT_FRECHET_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn summary(mean: &[f64], cov_diag: &[f64]) -> GaussianSummary {
        GaussianSummary::new(mean.to_vec(), Matrix::diag(cov_diag)).unwrap()
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let b = Matrix::from_rows(n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut a = b.transpose().matmul(&b);
        a.symmetrize();
        a
    }

    /// Random orthogonal matrix by Gram-Schmidt on a random square matrix.
    fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut cols: Vec<Vec<f64>> = Vec::new();
        while cols.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                cols.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        let mut q = Matrix::zeros(n);
        for (j, c) in cols.iter().enumerate() {
            for i in 0..n {
                q[(i, j)] = c[i];
            }
        }
        q
    }

    #[test]
    fn identical_summaries_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GaussianSummary::new(vec![0.3, -1.0, 2.0, 0.0], random_spd(4, &mut rng)).unwrap();
        assert!(frechet_distance(&g, &g, DEFAULT_FRECHET_EPS).unwrap().abs() < 1e-9);
    }

    #[test]
    fn one_dimensional_shift() {
        let d = frechet_distance(&summary(&[0.0], &[1.0]), &summary(&[1.0], &[1.0]), DEFAULT_FRECHET_EPS).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_two_dimensional() {
        // Σ(Δm)² + Σ(σ₁ − σ₂)² = 2 + (1 + 1) = 4.
        let d = frechet_distance(
            &summary(&[0.0, 0.0], &[1.0, 4.0]),
            &summary(&[1.0, 1.0], &[4.0, 1.0]),
            DEFAULT_FRECHET_EPS,
        )
        .unwrap();
        assert!((d - 4.0).abs() < 1e-8);
    }

    #[test]
    fn dimension_mismatch() {
        let r = frechet_distance(&summary(&[0.0], &[1.0]), &summary(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    proptest! {
        #[test]
        fn symmetric_and_rotation_invariant(seed in any::<u64>(), n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g1 = GaussianSummary::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect(), random_spd(n, &mut rng)).unwrap();
            let g2 = GaussianSummary::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect(), random_spd(n, &mut rng)).unwrap();
            let d12 = frechet_distance(&g1, &g2, DEFAULT_FRECHET_EPS).unwrap();
            let d21 = frechet_distance(&g2, &g1, DEFAULT_FRECHET_EPS).unwrap();
            prop_assert_eq!(d12, d21);

            let q = random_rotation(n, &mut rng);
            let rotate = |g: &GaussianSummary| {
                let mean = (0..n).map(|i| (0..n).map(|j| q[(i, j)] * g.mean[j]).sum()).collect();
                let mut cov = q.matmul(&g.cov).matmul(&q.transpose());
                cov.symmetrize();
                GaussianSummary::new(mean, cov).unwrap()
            };
            let dr = frechet_distance(&rotate(&g1), &rotate(&g2), DEFAULT_FRECHET_EPS).unwrap();
            prop_assert!((dr - d12).abs() < 1e-8, "{dr} vs {d12}");
        }
    }

    #[test]
    fn symmetric_trace_equals_explicit_root_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c1 = random_spd(6, &mut rng);
        let c2 = random_spd(6, &mut rng);
        let root = sqrt_spd(&c1).unwrap();
        let mut inner = root.matmul(&c2).matmul(&root);
        inner.symmetrize();
        let via_eigen = trace_sqrt_spd(&inner).unwrap();
        let explicit = sqrt_spd(&inner).unwrap().trace();
        assert!((via_eigen - explicit).abs() < 1e-9 * explicit.max(1.0));
    }

    #[test]
    fn fit_constant_rows_gives_zero_cov() {
        let f = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let g = fit_gaussian(&f).unwrap();
        assert_eq!(g.mean, vec![1.0, 2.0]);
        assert_eq!(g.cov, Matrix::zeros(2));
    }

    #[test]
    fn fit_unbiased_1d() {
        let f = FeatureMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let g = fit_gaussian(&f).unwrap();
        assert_eq!(g.mean, vec![1.0]);
        assert_eq!(g.cov[(0, 0)], 2.0);
    }

    #[test]
    fn fit_matches_brute_force_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| f64::from(rng.random_range(-10.0f32..10.0))).collect())
            .collect();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        let g = fit_gaussian(&f).unwrap();
        // Oracle: two-pass, one (a, b) entry at a time.
        for a in 0..4 {
            let ma: f64 = rows.iter().map(|r| r[a]).sum::<f64>() / 50.0;
            for b in 0..4 {
                let mb: f64 = rows.iter().map(|r| r[b]).sum::<f64>() / 50.0;
                let c: f64 = rows.iter().map(|r| (r[a] - ma) * (r[b] - mb)).sum::<f64>() / 49.0;
                assert!((g.cov[(a, b)] - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
            assert!((g.mean[a] - ma).abs() <= 1e-12 * ma.abs().max(1.0));
        }
    }

    #[test]
    fn fit_needs_two_samples() {
        let f = FeatureMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(fit_gaussian(&f), Err(Error::InsufficientSamples { .. })));
        let ok = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(fid_between_sets(&f, &ok), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn same_features_give_zero_fid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        assert!(fid_between_sets(&f, &f).unwrap().abs() < 1e-8);
    }

    #[test]
    fn rank_deficient_covariances_fall_back_to_eps() {
        // Rank-one covariances along orthogonal axes: cross term is exactly zero.
        let g1 = summary(&[0.0, 0.0], &[1.0, 0.0]);
        let g2 = summary(&[0.0, 0.0], &[0.0, 1.0]);
        let d = frechet_distance(&g1, &g2, DEFAULT_FRECHET_EPS).unwrap();
        assert!((d - 2.0).abs() < 1e-8);
    }
}

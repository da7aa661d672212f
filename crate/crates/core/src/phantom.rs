//! Deterministic CT-like phantom volumes for fixtures and self-checks.
//!
//! Each slice is an elliptical body of soft tissue with a fat rim, a spine,
//! pelvic bones in the caudal part, a liver-like organ mid-volume and lungs in
//! the rostral part, plus mild per-pixel texture. Everything is seeded.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frechet::FeatureMatrix;
use crate::imaging::set::{ManifestSlice, ManifestVolume};
use crate::imaging::{
    assign_layers, save_portable_slice, Calibration, ImageSet, Manifest, Modality, Provenance, SliceImage, Volume,
    DEFAULT_HU_RANGE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhantomSpec {
    pub volumes: usize,
    pub slices_per_volume: usize,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    /// 4 volumes of 50 slices, 64x64 pixels: 200 slices, 20 per layer.
    fn default() -> Self {
        PhantomSpec {
            volumes: 4,
            slices_per_volume: 50,
            rows: 64,
            cols: 64,
            seed: 0,
        }
    }
}

fn volume_rng(seed: u64, v: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (v as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn in_ellipse(x: f64, y: f64, cx: f64, cy: f64, ax: f64, ay: f64) -> bool {
    let (dx, dy) = ((x - cx) / ax, (y - cy) / ay);
    dx * dx + dy * dy <= 1.0
}

fn phantom_slice(spec: &PhantomSpec, vol_id: &str, i: usize, scale: f64, rng: &mut ChaCha8Rng) -> Result<SliceImage> {
    let z = (i as f64 + 0.5) / spec.slices_per_volume as f64;
    let (ax, ay) = (0.8 * scale * (1.0 - 0.15 * z), 0.6 * scale);
    let lung = if z > 0.6 { 0.08 + 0.22 * (z - 0.6) / 0.4 } else { 0.0 };
    let (lo, hi) = DEFAULT_HU_RANGE;
    let values = Array2::from_shape_fn((spec.rows, spec.cols), |(r, c)| {
        let x = (c as f64 + 0.5) / spec.cols as f64 * 2.0 - 1.0;
        let y = (r as f64 + 0.5) / spec.rows as f64 * 2.0 - 1.0;
        let texture = f64::from(rng.random_range(-12i32..=12));
        let hu = if !in_ellipse(x, y, 0.0, 0.0, ax, ay) {
            -1000.0 + texture * 0.5
        } else if in_ellipse(x, y, 0.0, 0.4 * scale, 0.05, 0.05) {
            250.0 + texture
        } else if in_ellipse(x, y, 0.0, 0.4 * scale, 0.11, 0.1) {
            700.0 + 2.0 * texture
        } else if z < 0.3 && (in_ellipse(x, y, 0.45 * scale, 0.15, 0.1, 0.12) || in_ellipse(x, y, -0.45 * scale, 0.15, 0.1, 0.12)) {
            600.0 + 2.0 * texture
        } else if lung > 0.0
            && (in_ellipse(x, y, 0.33 * scale, -0.1, lung, lung * 1.3)
                || in_ellipse(x, y, -0.33 * scale, -0.1, lung, lung * 1.3))
        {
            -850.0 + 3.0 * texture
        } else if (0.25..0.7).contains(&z) && in_ellipse(x, y, -0.3 * scale, -0.05, 0.28, 0.22) {
            60.0 + texture
        } else if !in_ellipse(x, y, 0.0, 0.0, ax * 0.9, ay * 0.88) {
            -100.0 + texture
        } else {
            40.0 + texture
        };
        hu.round().clamp(lo, hi) as f32
    });
    let mut s = SliceImage::new(vol_id, i as u32, Modality::Ct, values)?;
    s.pixel_spacing = (0.8, 0.8);
    s.calibration = Some(Calibration::Linear {
        slope: 1.0,
        intercept: lo,
    });
    Ok(s)
}

/// A real-provenance CT phantom set with layers assigned by the decile rule.
pub fn phantom_set(set_id: &str, spec: &PhantomSpec) -> Result<ImageSet> {
    if spec.volumes == 0 || spec.slices_per_volume == 0 || spec.rows == 0 || spec.cols == 0 {
        return Err(Error::invalid("phantom dimensions must be positive"));
    }
    let volumes = (0..spec.volumes)
        .map(|v| {
            let mut rng = volume_rng(spec.seed, v);
            let scale = rng.random_range(0.9..1.05);
            let vol_id = format!("vol{v:02}");
            let slices = (0..spec.slices_per_volume)
                .map(|i| phantom_slice(spec, &vol_id, i, scale, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            Ok(Volume {
                volume_id: vol_id,
                slices,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let set = ImageSet::new(set_id, Provenance::Real, DEFAULT_HU_RANGE, volumes)?;
    assign_layers(set, None)
}

/// Copy of `set` with Gaussian noise of standard deviation `sigma·(hi − lo)`
/// over the set's value range, rounded for CT and clamped to the range.
pub fn degrade(set: &ImageSet, sigma: f64, seed: u64, set_id: &str) -> Result<ImageSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise level must be finite and non-negative, got {sigma}")));
    }
    let (lo, hi) = set.value_range()?;
    let ct = set.modality()?.is_ct();
    let normal = Normal::new(0.0, sigma * (hi - lo)).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = set.map_slices(set_id, |_, s| {
        s.values.mapv_inplace(|v| {
            let mut x = f64::from(v) + normal.sample(&mut rng);
            if ct {
                x = x.round();
            }
            x.clamp(lo, hi) as f32
        });
    });
    Ok(out.with_provenance(Provenance::Synthetic))
}

pub const PHANTOM_EXTRACTOR: &str =
    "phantom descriptor: mean, std, mean |dx|, mean |dy|, fraction < -200 HU, fraction >= 200 HU (intensities / 1000)";

/// Six hand-crafted statistics per slice, ids are slice keys. A stand-in for
/// learned embeddings when exercising FID on phantoms.
pub fn phantom_features(set: &ImageSet) -> FeatureMatrix {
    let mut data = Vec::new();
    let mut ids = Vec::new();
    for (_, s) in set.iter_slices() {
        let v = s.values.mapv(f64::from);
        let n = v.len() as f64;
        let mean = v.sum() / n;
        let std = (v.mapv(|x| (x - mean) * (x - mean)).sum() / n).sqrt();
        let grad = |axis: usize| {
            let d: Vec<f64> = v
                .lanes(ndarray::Axis(axis))
                .into_iter()
                .flat_map(|lane| lane.windows(2).into_iter().map(|w| (w[1] - w[0]).abs()).collect::<Vec<_>>())
                .collect();
            if d.is_empty() {
                0.0
            } else {
                d.iter().sum::<f64>() / d.len() as f64
            }
        };
        let air = v.iter().filter(|&&x| x < -200.0).count() as f64 / n;
        let bone = v.iter().filter(|&&x| x >= 200.0).count() as f64 / n;
        for f in [mean / 1000.0, std / 1000.0, grad(1) / 1000.0, grad(0) / 1000.0, air, bone] {
            data.push(f as f32);
        }
        ids.push(s.key());
    }
    let n = ids.len();
    let mut fm = FeatureMatrix::new(n, 6, data, ids).expect("phantom features are well-formed");
    fm.extractor_desc = Some(PHANTOM_EXTRACTOR.into());
    fm
}

/// Writes every slice as `<volume>/<index>.pgm` under `dir` plus a manifest
/// named `<set_id>.json`, and returns the manifest path.
pub fn write_set(set: &ImageSet, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mut volumes = Vec::new();
    for vol in set.volumes() {
        let vdir = dir.join(&set.set_id).join(&vol.volume_id);
        std::fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
        let mut slices = Vec::new();
        for s in &vol.slices {
            let rel = PathBuf::from(&set.set_id)
                .join(&vol.volume_id)
                .join(format!("{:04}.pgm", s.slice_index));
            save_portable_slice(s, dir.join(&rel))?;
            slices.push(ManifestSlice {
                path: rel,
                slice_index: s.slice_index,
                layer: None,
            });
        }
        volumes.push(ManifestVolume {
            volume_id: vol.volume_id.clone(),
            slices,
        });
    }
    let manifest = Manifest {
        set_id: set.set_id.clone(),
        provenance: set.provenance,
        hu_range: [set.hu_range.0, set.hu_range.1],
        contrast_enhanced: Some(set.contrast_enhanced),
        modality: None,
        volumes,
    };
    let path = dir.join(format!("{}.json", set.set_id));
    manifest.save(&path)?;
    Ok(path)
}

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dicom::{load_dicom_slice, IngestConfig};
use super::layers::{LayerId, LayerOverrides};
use super::portable::load_portable_slice_with;
use super::slice::{validate_range, Modality, SliceImage, DEFAULT_HU_RANGE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
        }
    }
}

/// Slices of one volume, sorted by `slice_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub volume_id: String,
    pub slices: Vec<SliceImage>,
}

/// A provenance-uniform collection of volumes, optionally stratified into layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub set_id: String,
    pub provenance: Provenance,
    pub contrast_enhanced: bool,
    pub hu_range: (f64, f64),
    volumes: Vec<Volume>,
    /// Per-slice layers in volume/slice order, once assigned.
    layers: Option<Vec<Vec<LayerId>>>,
    /// Layer entries declared inline in the manifest.
    manifest_layers: LayerOverrides,
    /// Source path of every slice, when loaded from a manifest.
    sources: BTreeMap<String, PathBuf>,
}

/// Reference to one slice of a set: `(volume position, slice position)`.
pub type SlicePos = (usize, usize);

impl ImageSet {
    /// Builds a set from in-memory volumes. Slices are sorted per volume and
    /// indices must be unique and contiguous.
    pub fn new(
        set_id: impl Into<String>,
        provenance: Provenance,
        hu_range: (f64, f64),
        mut volumes: Vec<Volume>,
    ) -> Result<Self> {
        validate_range(hu_range)?;
        let set_id = set_id.into();
        let mut seen = HashSet::new();
        for vol in &mut volumes {
            if !seen.insert(vol.volume_id.clone()) {
                return Err(Error::invalid(format!("duplicate volume {:?} in set {set_id}", vol.volume_id)));
            }
            if vol.slices.is_empty() {
                return Err(Error::invalid(format!("volume {:?} has no slices", vol.volume_id)));
            }
            vol.slices.sort_by_key(|s| s.slice_index);
            for s in &vol.slices {
                if s.volume_id != vol.volume_id {
                    return Err(Error::invalid(format!(
                        "slice {} listed under volume {:?}",
                        s.key(),
                        vol.volume_id
                    )));
                }
            }
            for w in vol.slices.windows(2) {
                if w[1].slice_index != w[0].slice_index + 1 {
                    return Err(Error::invalid(format!(
                        "volume {:?}: slice indices {} and {} are not contiguous and unique",
                        vol.volume_id, w[0].slice_index, w[1].slice_index
                    )));
                }
            }
        }
        let contrast_enhanced = volumes
            .first()
            .and_then(|v| v.slices.first())
            .map(|s| s.contrast_enhanced)
            .unwrap_or(false);
        Ok(ImageSet {
            set_id,
            provenance,
            contrast_enhanced,
            hu_range,
            volumes,
            layers: None,
            manifest_layers: LayerOverrides::default(),
            sources: BTreeMap::new(),
        })
    }

    pub fn volumes(&self) -> &[Volume] {
        &self.volumes
    }

    pub fn num_slices(&self) -> usize {
        self.volumes.iter().map(|v| v.slices.len()).sum()
    }

    pub fn slice(&self, (v, s): SlicePos) -> &SliceImage {
        &self.volumes[v].slices[s]
    }

    /// All slices in volume order.
    pub fn iter_slices(&self) -> impl Iterator<Item = (SlicePos, &SliceImage)> {
        self.volumes
            .iter()
            .enumerate()
            .flat_map(|(vi, v)| v.slices.iter().enumerate().map(move |(si, s)| ((vi, si), s)))
    }

    pub fn source_path(&self, slice: &SliceImage) -> Option<&Path> {
        self.sources.get(&slice.key()).map(PathBuf::as_path)
    }

    pub fn is_layered(&self) -> bool {
        self.layers.is_some()
    }

    pub fn layer_of(&self, (v, s): SlicePos) -> Option<LayerId> {
        self.layers.as_ref().map(|l| l[v][s])
    }

    /// Positions of every slice in `layer`, in volume order. Empty when unassigned.
    pub fn layer_members(&self, layer: LayerId) -> Vec<SlicePos> {
        let Some(layers) = &self.layers else {
            return Vec::new();
        };
        layers
            .iter()
            .enumerate()
            .flat_map(|(vi, ls)| {
                ls.iter()
                    .enumerate()
                    .filter(move |(_, l)| **l == layer)
                    .map(move |(si, _)| (vi, si))
            })
            .collect()
    }

    /// Every slice's modality, or an error if the set mixes modalities.
    pub fn modality(&self) -> Result<Modality> {
        let mut it = self.iter_slices().map(|(_, s)| s.modality);
        let first = it
            .next()
            .ok_or_else(|| Error::invalid(format!("set {} is empty", self.set_id)))?;
        if it.any(|m| m != first) {
            return Err(Error::invalid(format!("set {} mixes modalities", self.set_id)));
        }
        Ok(first)
    }

    /// Intensity range histograms should cover: the HU range for CT, `[0, 1]` for MR.
    pub fn value_range(&self) -> Result<(f64, f64)> {
        Ok(if self.modality()?.is_ct() { self.hu_range } else { (0.0, 1.0) })
    }

    /// Subset keeping only the listed volumes, in the given order. Layers carry over.
    pub fn select_volumes(&self, set_id: impl Into<String>, volume_ids: &[&str]) -> Result<ImageSet> {
        let mut volumes = Vec::new();
        let mut layers = Vec::new();
        for id in volume_ids {
            let vi = self
                .volumes
                .iter()
                .position(|v| v.volume_id == *id)
                .ok_or_else(|| Error::invalid(format!("set {} has no volume {id:?}", self.set_id)))?;
            volumes.push(self.volumes[vi].clone());
            if let Some(l) = &self.layers {
                layers.push(l[vi].clone());
            }
        }
        Ok(ImageSet {
            set_id: set_id.into(),
            provenance: self.provenance,
            contrast_enhanced: self.contrast_enhanced,
            hu_range: self.hu_range,
            volumes,
            layers: self.layers.as_ref().map(|_| layers),
            manifest_layers: self.manifest_layers.clone(),
            sources: self.sources.clone(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Applies `f` to every slice's values; layers and metadata are preserved.
    pub fn map_slices(&self, set_id: impl Into<String>, mut f: impl FnMut(SlicePos, &mut SliceImage)) -> ImageSet {
        let mut out = self.clone();
        out.set_id = set_id.into();
        for (vi, vol) in out.volumes.iter_mut().enumerate() {
            for (si, s) in vol.slices.iter_mut().enumerate() {
                f((vi, si), s);
            }
        }
        out
    }
}

/// Assigns every slice one of the ten axial layers.
///
/// Slice at rank `i` of an `n`-slice volume gets the decile layer
/// `floor(i/n * 10) + 1`. Entries in `overrides`, and then layers declared in
/// the manifest, take precedence. Overrides naming unknown slices are rejected.
pub fn assign_layers(mut set: ImageSet, overrides: Option<&LayerOverrides>) -> Result<ImageSet> {
    let empty = LayerOverrides::default();
    let overrides = overrides.unwrap_or(&empty);
    for (vol_id, idx, _) in overrides.iter().chain(set.manifest_layers.iter()) {
        let known = set
            .volumes
            .iter()
            .find(|v| v.volume_id == vol_id)
            .is_some_and(|v| v.slices.iter().any(|s| s.slice_index == idx));
        if !known {
            return Err(Error::malformed(
                format!("set:{}", set.set_id),
                "layer override",
                format!("unknown slice {vol_id}/{idx}"),
            ));
        }
    }
    let layers = set
        .volumes
        .iter()
        .map(|vol| {
            let n = vol.slices.len();
            vol.slices
                .iter()
                .enumerate()
                .map(|(rank, s)| {
                    overrides
                        .get(&vol.volume_id, s.slice_index)
                        .or_else(|| set.manifest_layers.get(&vol.volume_id, s.slice_index))
                        .unwrap_or_else(|| LayerId::from_position(rank, n))
                })
                .collect()
        })
        .collect();
    set.layers = Some(layers);
    Ok(set)
}

/// On-disk description of an image set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub set_id: String,
    pub provenance: Provenance,
    #[serde(default = "default_hu_range")]
    pub hu_range: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_enhanced: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    pub volumes: Vec<ManifestVolume>,
}

fn default_hu_range() -> [f64; 2] {
    [DEFAULT_HU_RANGE.0, DEFAULT_HU_RANGE.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestVolume {
    pub volume_id: String,
    pub slices: Vec<ManifestSlice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSlice {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub slice_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<LayerId>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, "manifest", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Loads one slice, picking the decoder from the file extension
/// (`.pgm`/`.png` portable, anything else DICOM).
pub fn load_slice_file(path: &Path, config: &IngestConfig) -> Result<SliceImage> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("pgm") | Some("png") => load_portable_slice_with(path, config),
        _ => load_dicom_slice(path, config),
    }
}

/// Reads a manifest and every slice it lists.
///
/// CT slices are clamped to the manifest's HU range. MR volumes are min-max
/// normalized to `[0, 1]` per volume.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<ImageSet> {
    let path = path.as_ref();
    let manifest = Manifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let hu_range = (manifest.hu_range[0], manifest.hu_range[1]);
    validate_range(hu_range).map_err(|e| Error::malformed(path, "hu_range", e.to_string()))?;

    let jobs: Vec<(usize, &ManifestVolume, &ManifestSlice)> = manifest
        .volumes
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| v.slices.iter().map(move |s| (vi, v, s)))
        .collect();
    let loaded: Vec<(usize, PathBuf, SliceImage)> = jobs
        .par_iter()
        .map(|(vi, vol, entry)| {
            let file = base.join(&entry.path);
            let config = IngestConfig {
                hu_range,
                modality: manifest.modality,
                contrast_enhanced: manifest.contrast_enhanced,
                volume_id: Some(vol.volume_id.clone()),
                slice_index: Some(entry.slice_index),
            };
            load_slice_file(&file, &config).map(|s| (*vi, file, s))
        })
        .collect::<Result<_>>()?;

    let mut volumes: Vec<Volume> = manifest
        .volumes
        .iter()
        .map(|v| Volume {
            volume_id: v.volume_id.clone(),
            slices: Vec::with_capacity(v.slices.len()),
        })
        .collect();
    let mut sources = BTreeMap::new();
    for (vi, file, slice) in loaded {
        sources.insert(slice.key(), file);
        volumes[vi].slices.push(slice);
    }
    for vol in &mut volumes {
        normalize_mr_volume(vol);
    }

    let mut set = ImageSet::new(manifest.set_id.clone(), manifest.provenance, hu_range, volumes)
        .map_err(|e| Error::malformed(path, "volumes", e.to_string()))?;
    let flags: HashSet<bool> = set.iter_slices().map(|(_, s)| s.contrast_enhanced).collect();
    set.contrast_enhanced = match manifest.contrast_enhanced {
        Some(flag) => flag,
        None if flags.len() > 1 => {
            return Err(Error::malformed(path, "contrast_enhanced", "slices disagree on contrast enhancement"))
        }
        None => flags.into_iter().next().unwrap_or(false),
    };
    for vol in &manifest.volumes {
        for s in &vol.slices {
            if let Some(layer) = s.layer {
                set.manifest_layers.insert(vol.volume_id.clone(), s.slice_index, layer);
            }
        }
    }
    set.sources = sources;
    Ok(set)
}

/// Rescales an MR volume's intensities to `[0, 1]`. Constant volumes become all zeros.
pub fn normalize_mr_volume(vol: &mut Volume) {
    if vol.slices.iter().any(|s| s.modality.is_ct()) {
        return;
    }
    let (lo, hi) = vol
        .slices
        .iter()
        .flat_map(|s| s.values.iter())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    for s in &mut vol.slices {
        if span > 0.0 {
            s.values.mapv_inplace(|v| (v - lo) / span);
        } else {
            s.values.fill(0.0);
        }
        s.calibration = None;
    }
}

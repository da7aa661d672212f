//! Slice ingestion, calibration, windowing and axial-layer stratification.

pub mod dicom;
pub mod layers;
pub mod portable;
pub mod set;
pub mod slice;
pub mod window;

pub use dicom::{load_dicom_slice, IngestConfig};
pub use layers::{LayerId, LayerOverrides, NUM_LAYERS};
pub use portable::{load_portable_slice, save_portable_slice};
pub use set::{assign_layers, load_manifest, load_slice_file, ImageSet, Manifest, Provenance, SlicePos, Volume};
pub use slice::{slice_key, Calibration, Modality, SliceImage, DEFAULT_HU_RANGE};
pub use window::window_to_8bit;

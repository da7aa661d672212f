//! Evaluation toolkit for synthetic CT slices produced by unpaired MRI→CT translation.
//!
//! Real and synthetic slice sets are stratified into ten axial layers and
//! compared per layer with distribution-based scores (Fréchet distance on
//! feature embeddings, KL divergence and histogram comparison on intensity
//! histograms, correlation of log-magnitude spectra), each normalized by a
//! real-vs-real baseline. The `survey` module runs blind reader studies and
//! their Chi-squared analysis.

pub mod config;
pub mod error;
pub mod frechet;
pub mod histogram;
pub mod imaging;
pub mod phantom;
pub mod spectral;
pub mod stratified;
pub mod survey;

pub use error::{Error, Result};

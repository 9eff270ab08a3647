//! CutMix for multi-label rasters with label propagation.
//!
//! Labels of mixed samples are read off the mixed reference map or the mixed
//! explanation masks instead of being area-weighted, so classes erased by the
//! pasted box disappear from the label and pasted classes appear in it.

pub mod audit;
pub mod boxgen;
pub mod config;
pub mod cutmix;
pub mod dataset;
pub mod error;
pub mod noise;
pub mod pipeline;
pub mod pngio;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod xai;

pub use audit::{audit, AuditReport, HardReading};
pub use boxgen::{gen_boxes, sample_partner_box, BoxSizeRange};
pub use config::{PartnerMode, PipelineConfig};
pub use cutmix::{augment, AugmentedSample, Label, LpConfig, Policy, Provenance, Sample};
pub use dataset::{load_dataset, Dataset, MemoryDataset, SampleSource};
pub use error::{Error, Result};
pub use noise::{apply_noise_suite, NoiseKind, NoiseSpec};
pub use pipeline::{run_pipeline, Batch, Pipeline, Slot};
pub use raster::{BoxR, Dtype, Heatmap, ImageRaster, MaskStack, MultiLabel, PixelData, RefMap, SoftLabel};

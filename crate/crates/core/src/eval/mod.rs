//! Inference-time tools: dense maps, fixed-patch corruption sweeps, dataset
//! scores and activation dumps.

pub mod activations;
pub mod curve;
pub mod map;
pub mod plot;
pub mod score;

pub use activations::{dump_activations, write_activations, ActivationPlane};
pub use curve::{correlation_curve, fixed_patch_eval, random_locations, CurveReport, FixedPatchResult, LevelStats, PatchLocation};
pub use map::{qf_map, QfMap};
pub use score::{corpus_id, score_dataset, score_image, score_images, DatasetScore, ImageScore, PatchPolicy};

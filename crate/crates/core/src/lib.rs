//! Brain–LLM lesion mapping toolkit.
//!
//! The crate covers the whole chain from response scoring to statistical
//! validation:
//!
//! * [`taxonomy`] scores (target, response) pairs into clinical error
//!   categories and aggregates them into [`ErrorProfile`]s.
//! * [`lesion_model`] fits per-ROI linear symptom-to-lesion models.
//! * [`perturb`] provides a small deterministic transformer and the
//!   multiplicative-noise lesioning engine.
//! * [`projection`] filters degenerate profiles and projects the rest into
//!   lesion space.
//! * [`validation`] matches conditions to behaviourally similar humans and
//!   tests lesion correspondence against permutation nulls.
//! * [`lsm_stats`] holds the human-side lesion–symptom statistics.
//! * [`synth`] generates synthetic cohorts with planted ground truth.
//! * [`data_io`] reads and writes every file format.

pub mod cli;
pub mod data_io;
pub mod error;
pub mod lesion_model;
pub mod lsm_stats;
pub mod perturb;
pub mod projection;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod taxonomy;
pub mod validation;

pub use error::{Error, Result};
pub use lesion_model::{LesionMap, RoiAtlas, Stream, SymptomToLesionModel};
pub use perturb::{PerturbationSpec, ToyTransformer};
pub use taxonomy::{ErrorProfile, LexicalResources, ResponseCategory, Task};

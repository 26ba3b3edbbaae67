// SPDX-License-Identifier: Apache-2.0

//! Fair adaptation of precomputed node embeddings with per-node provable
//! fairness certificates.
//!
//! A small adapter (down projection, ReLU, up projection) and a classifier
//! are trained on top of frozen embeddings, optionally with augmentation
//! along the sensitive-attribute direction (`randat`) or a min-max penalty on
//! the adapter's response to it (`minmax`). Each node is then certified by
//! center smoothing of the adapter composed with randomized smoothing of the
//! classifier.

pub mod augmenter;
pub mod data;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod smoothing;
pub mod training;

pub use augmenter::{compute_direction, SensitiveDirection};
pub use data::{EmbeddingDataset, Scope, Split, SyntheticSpec};
pub use error::{Error, Result};
pub use nn::{AdapterParams, Checkpoint, ClassifierParams, Model};
pub use pipeline::{FairnessReport, RunConfig};
pub use smoothing::{NodeCertificate, SmoothingConfig};
pub use training::{Scheme, TrainConfig};

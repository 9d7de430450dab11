//! Supervised learning over tables that mix numeric, categorical and
//! free-form text columns.
//!
//! The crate is organised bottom-up:
//!
//! - [`frame`]: typed tables, CSV ingestion, modality inference, preprocessing
//!   and train/validation splitting.
//! - [`textprep`]: word vocabulary, tokenization and multi-field merging.
//! - [`neuralnet`]: a reverse-mode autodiff tape, Transformer text encoders,
//!   the multimodal fusion networks and their fine-tuning loop.
//! - [`featurize`]: n-gram and embedding featurizers that turn text columns
//!   into numeric columns for tabular models.
//! - [`tabmodels`]: extremely randomized trees, gradient boosted trees and a
//!   tabular MLP.
//! - [`ensemble`]: ensemble selection and bagged stack ensembles.
//! - [`evalkit`]: metrics, benchmark aggregation and permutation importance.

pub mod ensemble;
pub mod error;
pub mod evalkit;
pub mod featurize;
pub mod frame;
pub mod model;
pub mod neuralnet;
pub mod prediction;
pub mod rng;
pub mod tabmodels;
pub mod textprep;

pub use error::{Error, Result};
pub use frame::{Cell, Column, DataTable, FeatureSchema, Modality, SplitSpec, Task};
pub use model::{Learner, LearnerKind, Model};
pub use prediction::{PredictionMatrix, Target};

//! The fit/predict contract shared by every model family.

use crate::error::Result;
use crate::frame::DataTable;
use crate::prediction::PredictionMatrix;

/// A fitted model that owns its whole preprocessing pipeline, so it can be
/// applied to raw tables (which is what permutation importance needs).
pub trait Model: Send + Sync {
    fn predict(&self, table: &DataTable) -> Result<PredictionMatrix>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    /// Operates on numeric/categorical features (plus featurized text).
    Tabular,
    /// A text or multimodal network; never allowed as a stacker.
    Network,
}

/// Something that can be fitted on a table with a target.
pub trait Learner: Send + Sync {
    fn name(&self) -> String;

    fn kind(&self) -> LearnerKind;

    /// Fits on `train`. `valid`, when given, is used for early stopping and
    /// checkpoint selection only.
    fn fit(&self, train: &DataTable, valid: Option<&DataTable>, seed: u64) -> Result<Box<dyn Model>>;
}

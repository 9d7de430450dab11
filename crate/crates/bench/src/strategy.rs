//! Strategy ids and the learner each one builds.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{anyhow, Result};
use serde::{Deserialize, Serialize};
use tabtext::ensemble::{StackLearner, WeightedLearner};
use tabtext::featurize::{EmbeddingKind, EmbeddingLearner};
use tabtext::frame::{infer_schema, DEFAULT_CATEGORICAL_THRESHOLD};
use tabtext::neuralnet::{NetLearner, Variant};
use tabtext::tabmodels::{TabKind, TabularLearner, TextHandling};
use tabtext::{DataTable, Learner, Modality};

use crate::config::StrategyOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TextNet,
    AllText,
    FuseEarly,
    FuseLate,
    PreEmbedding,
    TextEmbedding,
    MultimodalEmbedding,
    WeightedEnsemble,
    StackEnsemble,
    TabWeighted,
    TabStack,
    TabWeightedNgram,
    TabStackNgram,
}

impl Strategy {
    pub const ALL: [Strategy; 13] = [
        Strategy::TextNet,
        Strategy::AllText,
        Strategy::FuseEarly,
        Strategy::FuseLate,
        Strategy::PreEmbedding,
        Strategy::TextEmbedding,
        Strategy::MultimodalEmbedding,
        Strategy::WeightedEnsemble,
        Strategy::StackEnsemble,
        Strategy::TabWeighted,
        Strategy::TabStack,
        Strategy::TabWeightedNgram,
        Strategy::TabStackNgram,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Strategy::TextNet => "text_net",
            Strategy::AllText => "all_text",
            Strategy::FuseEarly => "fuse_early",
            Strategy::FuseLate => "fuse_late",
            Strategy::PreEmbedding => "pre_embedding",
            Strategy::TextEmbedding => "text_embedding",
            Strategy::MultimodalEmbedding => "multimodal_embedding",
            Strategy::WeightedEnsemble => "weighted_ensemble",
            Strategy::StackEnsemble => "stack_ensemble",
            Strategy::TabWeighted => "tab_weighted",
            Strategy::TabStack => "tab_stack",
            Strategy::TabWeightedNgram => "tab_weighted_ngram",
            Strategy::TabStackNgram => "tab_stack_ngram",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Strategy {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.id() == s)
            .ok_or_else(|| anyhow!("unknown strategy {s:?}"))
    }
}

/// A benchmark row: a configurable strategy or one bare tabular model (the
/// latter is used to compare ensembles with their members).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Strategy(Strategy),
    Single(TabKind),
}

impl Method {
    pub fn id(self) -> &'static str {
        match self {
            Method::Strategy(s) => s.id(),
            Method::Single(k) => k.name(),
        }
    }
}

impl From<Strategy> for Method {
    fn from(s: Strategy) -> Self {
        Method::Strategy(s)
    }
}

/// Which feature modalities a training table offers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableProfile {
    pub text: usize,
    pub tabular: usize,
}

impl TableProfile {
    pub fn of(table: &DataTable) -> Result<TableProfile> {
        let schema = infer_schema(table, DEFAULT_CATEGORICAL_THRESHOLD)?;
        let text = schema.columns_of(Modality::Text).len();
        Ok(TableProfile {
            text,
            tabular: schema.columns.len() - text,
        })
    }
}

fn tab_zoo(text: TextHandling) -> Vec<Arc<dyn Learner>> {
    TabKind::ALL
        .into_iter()
        .map(|k| Arc::new(TabularLearner::new(k, text)) as Arc<dyn Learner>)
        .collect()
}

/// The network an ensemble adds to the tabular zoo: fuse-late when both
/// modalities exist, text-only on text-only tables, none without text.
fn ensemble_net(profile: TableProfile, opts: &StrategyOptions, epochs: usize) -> Option<Arc<dyn Learner>> {
    let mut spec = match (profile.text > 0, profile.tabular > 0) {
        (true, true) => opts.net.with_variant(Variant::FuseLate),
        (true, false) => opts.net.with_variant(Variant::TextOnly),
        (false, _) => return None,
    };
    spec.train.epochs = epochs;
    let name = match spec.variant {
        Variant::FuseLate => "fuse_late",
        _ => "text_net",
    };
    Some(Arc::new(NetLearner::new(name, spec)))
}

/// Builds the learner for `method`, or the reason it cannot run on a table
/// with this profile.
pub fn build_learner(
    method: Method,
    profile: TableProfile,
    opts: &StrategyOptions,
) -> std::result::Result<Arc<dyn Learner>, String> {
    let needs_text = || {
        if profile.text == 0 {
            Err("table has no text columns".to_string())
        } else {
            Ok(())
        }
    };
    let needs_tabular = || {
        if profile.tabular == 0 {
            Err("table has no numeric or categorical columns".to_string())
        } else {
            Ok(())
        }
    };
    let net = |variant: Variant, id: &str| -> Arc<dyn Learner> { Arc::new(NetLearner::new(id, opts.net.with_variant(variant))) };
    let weighted = |name: &str, members: Vec<Arc<dyn Learner>>| -> Arc<dyn Learner> {
        Arc::new(WeightedLearner {
            name: name.into(),
            members,
            rounds: opts.rounds,
        })
    };
    let stack = |name: &str, base: Vec<Arc<dyn Learner>>| -> Arc<dyn Learner> {
        Arc::new(StackLearner {
            name: name.into(),
            base,
            stackers: tab_zoo(TextHandling::Drop),
            k: opts.folds,
            rounds: opts.rounds,
        })
    };
    let embedding = |kind: EmbeddingKind, id: &str| -> Arc<dyn Learner> {
        Arc::new(EmbeddingLearner {
            name: id.into(),
            kind,
            spec: opts.net.clone(),
            inner: Box::new(WeightedLearner {
                name: format!("{id}_tab"),
                members: tab_zoo(TextHandling::Drop),
                rounds: opts.rounds,
            }),
        })
    };

    let id = method.id();
    let learner = match method {
        Method::Single(kind) => {
            needs_tabular()?;
            Arc::new(TabularLearner::new(kind, TextHandling::Drop)) as Arc<dyn Learner>
        }
        Method::Strategy(s) => match s {
            Strategy::TextNet => {
                needs_text()?;
                net(Variant::TextOnly, id)
            }
            Strategy::AllText => {
                needs_text()?;
                net(Variant::AllText, id)
            }
            Strategy::FuseEarly | Strategy::FuseLate => {
                needs_text()?;
                needs_tabular()?;
                net(if s == Strategy::FuseEarly { Variant::FuseEarly } else { Variant::FuseLate }, id)
            }
            Strategy::PreEmbedding | Strategy::TextEmbedding | Strategy::MultimodalEmbedding => {
                needs_text()?;
                let kind = match s {
                    Strategy::PreEmbedding => EmbeddingKind::PreEmbedding,
                    Strategy::TextEmbedding => EmbeddingKind::TextEmbedding,
                    _ => {
                        needs_tabular()?;
                        EmbeddingKind::MultimodalEmbedding
                    }
                };
                embedding(kind, id)
            }
            Strategy::WeightedEnsemble => {
                needs_tabular()?;
                let mut members = tab_zoo(TextHandling::Drop);
                members.extend(ensemble_net(profile, opts, opts.net.train.epochs));
                weighted(id, members)
            }
            Strategy::StackEnsemble => {
                needs_tabular()?;
                let mut base = tab_zoo(TextHandling::Drop);
                base.extend(ensemble_net(profile, opts, opts.stack_net_epochs.unwrap_or(opts.net.train.epochs)));
                stack(id, base)
            }
            Strategy::TabWeighted => {
                needs_tabular()?;
                weighted(id, tab_zoo(TextHandling::Drop))
            }
            Strategy::TabStack => {
                needs_tabular()?;
                stack(id, tab_zoo(TextHandling::Drop))
            }
            Strategy::TabWeightedNgram => weighted(id, tab_zoo(TextHandling::ngram())),
            Strategy::TabStackNgram => stack(id, tab_zoo(TextHandling::ngram())),
        },
    };
    Ok(learner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.id().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.id()));
        }
    }

    #[test]
    fn fusion_needs_text() {
        let p = TableProfile { text: 0, tabular: 3 };
        let opts = StrategyOptions::default();
        for s in [Strategy::FuseLate, Strategy::FuseEarly, Strategy::TextNet, Strategy::TextEmbedding] {
            assert!(build_learner(s.into(), p, &opts).is_err(), "{s}");
        }
        assert!(build_learner(Strategy::StackEnsemble.into(), p, &opts).is_ok());
    }

    #[test]
    fn fusion_needs_tabular() {
        let p = TableProfile { text: 2, tabular: 0 };
        let opts = StrategyOptions::default();
        assert!(build_learner(Strategy::FuseLate.into(), p, &opts).is_err());
        assert!(build_learner(Strategy::TextNet.into(), p, &opts).is_ok());
        assert!(build_learner(Strategy::TabStackNgram.into(), p, &opts).is_ok());
    }
}

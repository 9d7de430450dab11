//! Fine-tuning loop with early stopping and checkpoint averaging.

use log::debug;
use rand::seq::SliceRandom;

use super::net::{NetBatch, TrainedNet};
use super::optim::{lr_at, AdamW};
use super::params::ParamStore;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::evalkit::{score, MetricKind};
use crate::prediction::Target;
use crate::rng;

/// Network-ready rows with their labels.
#[derive(Debug, Clone)]
pub struct NetData {
    pub batch: NetBatch,
    pub target: Target,
}

impl NetData {
    pub fn n_rows(&self) -> usize {
        self.batch.n_rows()
    }
}

/// Parameter snapshot taken at the end of an epoch.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub validation_score: f64,
    pub params: ParamStore,
}

/// Trains `net` and returns it with its checkpoint log and averaged final
/// parameters. `metric` scores the validation rows after each epoch; when it
/// is undefined there (e.g. AUC on a single-class validation set) the
/// negated validation loss is used for every epoch instead.
pub fn train(mut net: TrainedNet, train: &NetData, val: &NetData, cfg: &TrainConfig, metric: MetricKind) -> Result<TrainedNet> {
    cfg.validate()?;
    if train.n_rows() == 0 || val.n_rows() == 0 {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    let steps_per_epoch = train.n_rows().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut opt = AdamW::new(&net.params, cfg);
    let mut rng = rng::seeded(rng::derive_seed(cfg.seed, 0x7472_6169_6e));
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    let mut log: Vec<Checkpoint> = Vec::new();
    let mut use_loss = false;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut lr = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.batch.select(chunk);
            let target = train.target.take(chunk);
            let (loss, grads) = net.loss_and_gradients(&net.params, &batch, &target)?;
            lr = lr_at(step + 1, total, cfg)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, lr });
            }
            opt.step(&mut net.params, &grads, lr)?;
            step += 1;
        }
        let validation_score = if use_loss {
            -net.loss(&net.params, &val.batch, &val.target)?
        } else {
            match score(metric, &net.forward_with(&net.params, &val.batch)?, &val.target) {
                Ok(s) => s,
                Err(_) if epoch == 0 => {
                    use_loss = true;
                    -net.loss(&net.params, &val.batch, &val.target)?
                }
                Err(e) => return Err(e),
            }
        };
        if !validation_score.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, lr });
        }
        debug!("epoch {epoch}: validation {validation_score:.5}");
        log.push(Checkpoint {
            epoch,
            validation_score,
            params: net.params.clone(),
        });
        if validation_score > best {
            best = validation_score;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                debug!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    net.final_params = average_top(&log, cfg.checkpoints_to_average)?;
    net.checkpoint_log = log;
    Ok(net)
}

/// Elementwise mean of the `k` best-scoring checkpoints (ties go to the
/// earlier epoch).
pub fn average_top(log: &[Checkpoint], k: usize) -> Result<ParamStore> {
    if log.is_empty() || k == 0 {
        return Err(Error::InvalidArgument("nothing to average".into()));
    }
    let mut ranked: Vec<&Checkpoint> = log.iter().collect();
    ranked.sort_by(|a, b| {
        b.validation_score
            .total_cmp(&a.validation_score)
            .then(a.epoch.cmp(&b.epoch))
    });
    let chosen: Vec<&ParamStore> = ranked.iter().take(k).map(|c| &c.params).collect();
    ParamStore::average(&chosen)
}

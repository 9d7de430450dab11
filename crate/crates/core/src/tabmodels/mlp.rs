//! Fully connected ReLU network on one-hot encoded features.

use rand::seq::SliceRandom;

use super::{FeatureColumn, FeatureMatrix};
use crate::error::{Error, Result};
use crate::frame::Task;
use crate::neuralnet::tape::{sigmoid, softmax_rows, Tape, Var};
use crate::neuralnet::{lr_at, AdamW, Init, ParamStore, TrainConfig};
use crate::prediction::Target;
use crate::rng;

const HIDDEN: [usize; 2] = [128, 64];
const HOLDOUT: f64 = 0.1;

fn config() -> TrainConfig {
    TrainConfig {
        peak_lr: 3e-3,
        layer_decay: 1.0,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    pub task: Task,
    pub params: ParamStore,
    pub n_inputs: usize,
    pub n_outputs: usize,
    /// Regression target standardization.
    pub target_scale: (f64, f64),
    /// Epochs actually run before early stopping.
    pub epochs_run: usize,
}

/// Dense row-major input with categoricals expanded to one-hot blocks.
fn dense(x: &FeatureMatrix) -> (Vec<f64>, usize) {
    let width: usize = x
        .columns
        .iter()
        .map(|c| match c {
            FeatureColumn::Numeric(_) => 1,
            FeatureColumn::Categorical { n_levels, .. } => *n_levels,
        })
        .sum();
    let mut out = vec![0.0; x.n_rows * width];
    let mut offset = 0;
    for c in &x.columns {
        match c {
            FeatureColumn::Numeric(v) => {
                for r in 0..x.n_rows {
                    out[r * width + offset] = v[r];
                }
                offset += 1;
            }
            FeatureColumn::Categorical { codes, n_levels } => {
                for r in 0..x.n_rows {
                    out[r * width + offset + codes[r].min(n_levels - 1)] = 1.0;
                }
                offset += n_levels;
            }
        }
    }
    (out, width)
}

impl MlpModel {
    fn forward(&self, tape: &mut Tape, params: &ParamStore, input: Var) -> Var {
        let mut leaf = |name: &str| {
            let idx = params.position(name).expect("parameter");
            let t = &params.params()[idx].tensor;
            let (r, c) = t.matrix_shape();
            tape.param(idx, r, c, t.data.clone())
        };
        let w: Vec<Var> = ["l0.w", "l0.b", "l1.w", "l1.b", "l2.w", "l2.b"].iter().map(|n| leaf(n)).collect();
        let h = tape.linear(input, w[0], Some(w[1]));
        let h = tape.relu(h);
        let h = tape.linear(h, w[2], Some(w[3]));
        let h = tape.relu(h);
        tape.linear(h, w[4], Some(w[5]))
    }

    fn loss(&self, tape: &mut Tape, out: Var, y: &[f64], labels: &[usize]) -> Var {
        match self.task {
            Task::Regression => tape.mse_loss(out, y.to_vec()),
            Task::Binary => tape.bce_loss(out, labels.iter().map(|&l| l as f64).collect()),
            Task::Multiclass => tape.softmax_xent(out, labels.to_vec()),
        }
    }

    fn batch_loss(&self, params: &ParamStore, x: &[f64], rows: &[usize], y: &[f64], labels: &[usize]) -> (f64, Tape, Var) {
        let mut tape = Tape::new();
        let mut xb = Vec::with_capacity(rows.len() * self.n_inputs);
        for &r in rows {
            xb.extend_from_slice(&x[r * self.n_inputs..(r + 1) * self.n_inputs]);
        }
        let input = tape.input(rows.len(), self.n_inputs, xb);
        let out = self.forward(&mut tape, params, input);
        let yb: Vec<f64> = if y.is_empty() { Vec::new() } else { rows.iter().map(|&r| y[r]).collect() };
        let lb: Vec<usize> = if labels.is_empty() { Vec::new() } else { rows.iter().map(|&r| labels[r]).collect() };
        let loss = self.loss(&mut tape, out, &yb, &lb);
        (tape.value(loss)[0], tape, loss)
    }

    /// Trains with the slanted-triangular AdamW loop for up to 10 epochs,
    /// keeping the parameters of the best epoch on a 10% holdout.
    pub fn fit(x: &FeatureMatrix, y: &Target, task: Task, width: usize, seed: u64) -> Result<MlpModel> {
        let (input, n_inputs) = dense(x);
        let n_outputs = if task == Task::Multiclass { width } else { 1 };
        let (values, labels, target_scale) = match y {
            Target::Values(v) => {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / v.len() as f64;
                let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                (v.iter().map(|a| (a - mean) / std).collect(), Vec::new(), (mean, std))
            }
            Target::Classes { labels, .. } => (Vec::new(), labels.clone(), (0.0, 1.0)),
        };
        let mut r = rng::seeded(rng::derive_seed(seed, 0x6d6c70));
        let mut params = ParamStore::new();
        let dims = [n_inputs, HIDDEN[0], HIDDEN[1], n_outputs];
        for l in 0..3 {
            params.add(&format!("l{l}.w"), vec![dims[l], dims[l + 1]], Init::Xavier, 0, &mut r);
            params.add(&format!("l{l}.b"), vec![dims[l + 1]], Init::Zeros, 0, &mut r);
        }
        let mut model = MlpModel {
            task,
            params,
            n_inputs,
            n_outputs,
            target_scale,
            epochs_run: 0,
        };

        let mut rows: Vec<usize> = (0..x.n_rows).collect();
        rows.shuffle(&mut r);
        let n_hold = ((x.n_rows as f64 * HOLDOUT).round() as usize).min(x.n_rows.saturating_sub(1));
        let (hold, mut fit_rows) = if n_hold >= 2 {
            (rows[..n_hold].to_vec(), rows[n_hold..].to_vec())
        } else {
            (rows.clone(), rows.clone())
        };
        let cfg = config();
        let steps_per_epoch = fit_rows.len().div_ceil(cfg.batch_size);
        let total = steps_per_epoch * cfg.epochs;
        let mut opt = AdamW::new(&model.params, &cfg);
        let mut best = (f64::INFINITY, model.params.clone());
        let mut stale = 0;
        let mut step = 0;
        for epoch in 0..cfg.epochs {
            fit_rows.shuffle(&mut r);
            for chunk in fit_rows.chunks(cfg.batch_size) {
                let (loss, tape, node) = model.batch_loss(&model.params, &input, chunk, &values, &labels);
                let lr = lr_at(step + 1, total, &cfg)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, lr });
                }
                let grads = tape.backward(node).param_grads(&model.params.sizes());
                opt.step(&mut model.params, &grads, lr)?;
                step += 1;
            }
            model.epochs_run = epoch + 1;
            let (hold_loss, ..) = model.batch_loss(&model.params, &input, &hold, &values, &labels);
            if hold_loss < best.0 {
                best = (hold_loss, model.params.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        model.params = best.1;
        Ok(model)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let (input, width) = dense(x);
        if width != self.n_inputs {
            return Err(Error::SchemaMismatch(format!(
                "mlp expects {} inputs, got {width}",
                self.n_inputs
            )));
        }
        let mut tape = Tape::new();
        let v = tape.input(x.n_rows, width, input);
        let out = self.forward(&mut tape, &self.params, v);
        let raw = tape.value(out).to_vec();
        Ok(match self.task {
            Task::Regression => raw.iter().map(|z| z * self.target_scale.1 + self.target_scale.0).collect(),
            Task::Binary => raw
                .iter()
                .flat_map(|&z| {
                    let p = sigmoid(z);
                    [1.0 - p, p]
                })
                .collect(),
            Task::Multiclass => softmax_rows(&raw, self.n_outputs),
        })
    }
}

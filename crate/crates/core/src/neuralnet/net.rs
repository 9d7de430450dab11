//! Network wiring for the four variants.

use super::params::{Init, ParamStore};
use super::tape::{sigmoid, softmax_rows, Tape, Var};
use super::train::Checkpoint;
use super::{NetConfig, Variant};
use crate::error::{Error, Result};
use crate::frame::Task;
use crate::prediction::{PredictionMatrix, Target};
use crate::rng::{self, Rng};
use crate::textprep::{MergedInput, Vocab, N_RESERVED, PAD};

const EMBED_STD: f64 = 0.1;

/// Network inputs for a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NetBatch {
    /// Merged text sequence per row (CLS-only when there are no text fields).
    pub texts: Vec<MergedInput>,
    /// Row-major `[n_rows, n_numeric]` standardized numerics.
    pub numeric: Vec<f64>,
    /// Row-major `[n_rows, n_categorical]` category codes.
    pub categorical: Vec<usize>,
    pub n_numeric: usize,
    pub n_categorical: usize,
}

impl NetBatch {
    pub fn n_rows(&self) -> usize {
        self.texts.len()
    }

    pub fn select(&self, rows: &[usize]) -> NetBatch {
        let mut numeric = Vec::with_capacity(rows.len() * self.n_numeric);
        let mut categorical = Vec::with_capacity(rows.len() * self.n_categorical);
        for &r in rows {
            numeric.extend_from_slice(&self.numeric[r * self.n_numeric..(r + 1) * self.n_numeric]);
            categorical.extend_from_slice(&self.categorical[r * self.n_categorical..(r + 1) * self.n_categorical]);
        }
        NetBatch {
            texts: rows.iter().map(|&r| self.texts[r].clone()).collect(),
            numeric,
            categorical,
            n_numeric: self.n_numeric,
            n_categorical: self.n_categorical,
        }
    }
}

/// Parameters and configuration of a text or multimodal network, plus the
/// per-epoch checkpoint history once trained.
#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub config: NetConfig,
    /// Live parameters (last optimizer state).
    pub params: ParamStore,
    pub checkpoint_log: Vec<Checkpoint>,
    /// Parameters used for inference: the average of the best checkpoints
    /// after training, the initial values before.
    pub final_params: ParamStore,
}

/// Creates an untrained network. Initialization is deterministic in `seed`.
pub fn build_net(config: &NetConfig, vocab: &Vocab, seed: u64) -> Result<TrainedNet> {
    let mut config = config.clone();
    // Sized by vocabulary capacity so equally configured nets share
    // parameter shapes whatever corpus they were built on.
    config.vocab_size = vocab.len().max(N_RESERVED + vocab.max_size());
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let mut store = ParamStore::new();
    register(&config, &mut store, &mut rng);
    Ok(TrainedNet {
        config,
        final_params: store.clone(),
        params: store,
        checkpoint_log: Vec::new(),
    })
}

fn reg_linear(s: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, depth: usize, rng: &mut Rng) {
    s.add(&format!("{name}.w"), vec![fan_in, fan_out], Init::Xavier, depth, rng);
    s.add(&format!("{name}.b"), vec![fan_out], Init::Zeros, depth, rng);
}

fn reg_norm(s: &mut ParamStore, name: &str, width: usize, depth: usize, rng: &mut Rng) {
    s.add(&format!("{name}.gamma"), vec![width], Init::Ones, depth, rng);
    s.add(&format!("{name}.beta"), vec![width], Init::Zeros, depth, rng);
}

/// Single-hidden-layer block: linear → layer norm → leaky ReLU → linear.
fn reg_mlp(s: &mut ParamStore, name: &str, fan_in: usize, bottleneck: usize, fan_out: usize, depth: usize, rng: &mut Rng) {
    reg_linear(s, &format!("{name}.fc1"), fan_in, bottleneck, depth, rng);
    reg_norm(s, &format!("{name}.ln"), bottleneck, depth, rng);
    reg_linear(s, &format!("{name}.fc2"), bottleneck, fan_out, depth, rng);
}

fn reg_block(s: &mut ParamStore, name: &str, d: usize, ffn: usize, depth: usize, rng: &mut Rng) {
    for proj in ["q", "k", "v", "o"] {
        reg_linear(s, &format!("{name}.{proj}"), d, d, depth, rng);
    }
    reg_norm(s, &format!("{name}.ln1"), d, depth, rng);
    reg_linear(s, &format!("{name}.ff1"), d, ffn, depth, rng);
    reg_linear(s, &format!("{name}.ff2"), ffn, d, depth, rng);
    reg_norm(s, &format!("{name}.ln2"), d, depth, rng);
}

fn reg_text_embeddings(s: &mut ParamStore, c: &NetConfig, depth: usize, rng: &mut Rng) {
    let d = c.hidden_size;
    s.add("text.emb.tok", vec![c.vocab_size, d], Init::Normal(EMBED_STD), depth, rng);
    s.add("text.emb.pos", vec![c.max_length, d], Init::Normal(EMBED_STD), depth, rng);
    s.add("text.emb.seg", vec![2, d], Init::Normal(EMBED_STD), depth, rng);
    reg_norm(s, "text.emb.ln", d, depth, rng);
}

fn register(c: &NetConfig, s: &mut ParamStore, rng: &mut Rng) {
    let d = c.hidden_size;
    match c.variant {
        Variant::TextOnly | Variant::AllText => {
            reg_text_embeddings(s, c, c.n_layers + 1, rng);
            for i in 0..c.n_layers {
                reg_block(s, &format!("text.block{i}"), d, c.ffn_size, c.n_layers - i, rng);
            }
            reg_linear(s, "head.fc1", d, d, 0, rng);
            reg_linear(s, "head.fc2", d, c.output_dim, 0, rng);
        }
        Variant::FuseLate => {
            let mut branches = 0;
            if c.n_text_fields > 0 {
                reg_text_embeddings(s, c, c.n_layers + 1, rng);
                for i in 0..c.n_layers {
                    reg_block(s, &format!("text.block{i}"), d, c.ffn_size, c.n_layers - i, rng);
                }
                branches += 1;
            }
            if c.n_categorical() > 0 {
                for (j, &size) in c.categorical_sizes.iter().enumerate() {
                    s.add(&format!("cat{j}.emb"), vec![size, c.cat_embed_units], Init::Normal(EMBED_STD), 3, rng);
                    reg_mlp(s, &format!("cat{j}.enc"), c.cat_embed_units, c.cat_bottleneck, d, 2, rng);
                }
                reg_mlp(s, "cat.mix", c.n_categorical() * d, c.late_bottleneck, d, 1, rng);
                branches += 1;
            }
            if c.n_numeric > 0 {
                reg_mlp(s, "num.mlp", c.n_numeric, c.late_bottleneck, d, 1, rng);
                branches += 1;
            }
            reg_linear(s, "head.fc1", branches * d, d, 0, rng);
            reg_linear(s, "head.fc2", d, c.output_dim, 0, rng);
        }
        Variant::FuseEarly => {
            let enc = c.fuse_early_encoder;
            let input_depth = enc.layers + 1;
            reg_text_embeddings(s, c, input_depth, rng);
            for (j, &size) in c.categorical_sizes.iter().enumerate() {
                s.add(&format!("cat{j}.emb"), vec![size, c.cat_embed_units], Init::Normal(EMBED_STD), input_depth, rng);
                reg_mlp(s, &format!("cat{j}.enc"), c.cat_embed_units, c.cat_bottleneck, d, input_depth, rng);
            }
            if c.n_numeric > 0 {
                reg_mlp(s, "num.mlp", c.n_numeric, c.cat_bottleneck, d, input_depth, rng);
            }
            if d != enc.units {
                reg_linear(s, "enc.proj", d, enc.units, input_depth, rng);
            }
            for i in 0..enc.layers {
                reg_block(s, &format!("enc.block{i}"), enc.units, enc.ffn, enc.layers - i, rng);
            }
            reg_linear(s, "head.fc1", enc.units, enc.units, 0, rng);
            reg_linear(s, "head.fc2", enc.units, c.output_dim, 0, rng);
        }
    }
}

/// Graph-building context: parameter leaves are created once per pass.
struct Ctx<'a> {
    tape: Tape,
    store: &'a ParamStore,
    leaves: Vec<Option<Var>>,
}

impl<'a> Ctx<'a> {
    fn new(store: &'a ParamStore) -> Self {
        Ctx {
            tape: Tape::new(),
            store,
            leaves: vec![None; store.len()],
        }
    }

    fn p(&mut self, name: &str) -> Var {
        let idx = self
            .store
            .position(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        if let Some(v) = self.leaves[idx] {
            return v;
        }
        let t = &self.store.params()[idx].tensor;
        let (r, c) = t.matrix_shape();
        let v = self.tape.param(idx, r, c, t.data.clone());
        self.leaves[idx] = Some(v);
        v
    }

    fn linear(&mut self, name: &str, x: Var) -> Var {
        let w = self.p(&format!("{name}.w"));
        let b = self.p(&format!("{name}.b"));
        self.tape.linear(x, w, Some(b))
    }

    fn norm(&mut self, name: &str, x: Var) -> Var {
        let g = self.p(&format!("{name}.gamma"));
        let b = self.p(&format!("{name}.beta"));
        self.tape.layer_norm(x, g, b)
    }

    fn mlp(&mut self, name: &str, x: Var, slope: f64) -> Var {
        let h = self.linear(&format!("{name}.fc1"), x);
        let h = self.norm(&format!("{name}.ln"), h);
        let h = self.tape.leaky_relu(h, slope);
        self.linear(&format!("{name}.fc2"), h)
    }

    /// Post-norm Transformer block with GeLU feed-forward.
    fn block(&mut self, name: &str, x: Var, seq: &SeqLayout, heads: usize) -> Var {
        let q = self.linear(&format!("{name}.q"), x);
        let k = self.linear(&format!("{name}.k"), x);
        let v = self.linear(&format!("{name}.v"), x);
        let a = self
            .tape
            .attention(q, k, v, seq.batch, seq.len, heads, seq.key_valid.clone());
        let a = self.linear(&format!("{name}.o"), a);
        let x = self.tape.add(x, a);
        let x = self.norm(&format!("{name}.ln1"), x);
        let f = self.linear(&format!("{name}.ff1"), x);
        let f = self.tape.gelu(f);
        let f = self.linear(&format!("{name}.ff2"), f);
        let x = self.tape.add(x, f);
        self.norm(&format!("{name}.ln2"), x)
    }

    fn text_embeddings(&mut self, text: &TextLayout) -> Var {
        let tok = self.p("text.emb.tok");
        let pos = self.p("text.emb.pos");
        let seg = self.p("text.emb.seg");
        let t = self.tape.gather(tok, text.tokens.clone());
        let p = self.tape.gather(pos, text.positions.clone());
        let s = self.tape.gather(seg, text.segments.clone());
        let x = self.tape.add(t, p);
        let x = self.tape.add(x, s);
        self.norm("text.emb.ln", x)
    }
}

struct SeqLayout {
    batch: usize,
    len: usize,
    key_valid: Vec<bool>,
}

struct TextLayout {
    tokens: Vec<usize>,
    segments: Vec<usize>,
    positions: Vec<usize>,
    seq: SeqLayout,
}

fn text_layout(texts: &[MergedInput], max_length: usize) -> Result<TextLayout> {
    let len = texts.iter().map(MergedInput::len).max().unwrap_or(1).max(1);
    if len > max_length {
        return Err(Error::InvalidArgument(format!(
            "sequence of length {len} exceeds max_length {max_length}; truncate before the forward pass"
        )));
    }
    let batch = texts.len();
    let mut tokens = vec![PAD as usize; batch * len];
    let mut segments = vec![0usize; batch * len];
    let mut positions = Vec::with_capacity(batch * len);
    for (b, t) in texts.iter().enumerate() {
        for i in 0..t.len() {
            tokens[b * len + i] = t.token_ids[i] as usize;
            segments[b * len + i] = t.segment_ids[i] as usize;
        }
        positions.extend(0..len);
    }
    let key_valid = tokens.iter().map(|&t| t != PAD as usize).collect();
    Ok(TextLayout {
        tokens,
        segments,
        positions,
        seq: SeqLayout { batch, len, key_valid },
    })
}

struct GraphOut {
    logits: Var,
    embedding: Option<Var>,
}

impl TrainedNet {
    fn graph(&self, ctx: &mut Ctx, batch: &NetBatch) -> Result<GraphOut> {
        let c = &self.config;
        if batch.n_numeric != c.n_numeric || batch.n_categorical != c.n_categorical() {
            return Err(Error::InvalidArgument(format!(
                "batch has {} numeric / {} categorical columns, network expects {} / {}",
                batch.n_numeric,
                batch.n_categorical,
                c.n_numeric,
                c.n_categorical()
            )));
        }
        let b = batch.n_rows();
        let slope = c.leaky_slope;
        match c.variant {
            Variant::TextOnly | Variant::AllText => {
                let text = text_layout(&batch.texts, c.max_length)?;
                let mut x = ctx.text_embeddings(&text);
                for i in 0..c.n_layers {
                    x = ctx.block(&format!("text.block{i}"), x, &text.seq, c.n_heads);
                }
                let cls = ctx.tape.select_rows(x, (0..b).map(|r| r * text.seq.len).collect());
                let logits = head(ctx, cls, slope);
                Ok(GraphOut {
                    logits,
                    embedding: Some(cls),
                })
            }
            Variant::FuseLate => {
                let mut pooled = Vec::new();
                let mut text_cls = None;
                if c.n_text_fields > 0 {
                    let text = text_layout(&batch.texts, c.max_length)?;
                    let mut x = ctx.text_embeddings(&text);
                    for i in 0..c.n_layers {
                        x = ctx.block(&format!("text.block{i}"), x, &text.seq, c.n_heads);
                    }
                    let cls = ctx.tape.select_rows(x, (0..b).map(|r| r * text.seq.len).collect());
                    text_cls = Some(cls);
                    pooled.push(cls);
                }
                if c.n_categorical() > 0 {
                    let encoded: Vec<Var> = (0..c.n_categorical())
                        .map(|j| categorical_token(ctx, batch, j, slope))
                        .collect();
                    let cat = ctx.tape.concat_cols(encoded);
                    pooled.push(ctx.mlp("cat.mix", cat, slope));
                }
                if c.n_numeric > 0 {
                    let num = ctx.tape.input(b, c.n_numeric, batch.numeric.clone());
                    pooled.push(ctx.mlp("num.mlp", num, slope));
                }
                let joined = ctx.tape.concat_cols(pooled);
                let logits = head(ctx, joined, slope);
                Ok(GraphOut {
                    logits,
                    embedding: text_cls,
                })
            }
            Variant::FuseEarly => {
                let enc = c.fuse_early_encoder;
                let text = text_layout(&batch.texts, c.max_length)?;
                let text_x = ctx.text_embeddings(&text);
                let mut parts = vec![(text_x, text.seq.len)];
                for j in 0..c.n_categorical() {
                    parts.push((categorical_token(ctx, batch, j, slope), 1));
                }
                if c.n_numeric > 0 {
                    let num = ctx.tape.input(b, c.n_numeric, batch.numeric.clone());
                    parts.push((ctx.mlp("num.mlp", num, slope), 1));
                }
                let n_tab = parts.len() - 1;
                let seq_len = text.seq.len + n_tab;
                let mut key_valid = Vec::with_capacity(b * seq_len);
                for r in 0..b {
                    key_valid.extend_from_slice(&text.seq.key_valid[r * text.seq.len..(r + 1) * text.seq.len]);
                    key_valid.extend(std::iter::repeat_n(true, n_tab));
                }
                let seq = SeqLayout {
                    batch: b,
                    len: seq_len,
                    key_valid,
                };
                let mut x = ctx.tape.interleave(parts, b);
                if c.hidden_size != enc.units {
                    x = ctx.linear("enc.proj", x);
                }
                for i in 0..enc.layers {
                    x = ctx.block(&format!("enc.block{i}"), x, &seq, enc.heads);
                }
                let cls = ctx.tape.select_rows(x, (0..b).map(|r| r * seq_len).collect());
                let logits = head(ctx, cls, slope);
                Ok(GraphOut {
                    logits,
                    embedding: Some(cls),
                })
            }
        }
    }

    /// Raw network outputs `[n_rows, output_dim]` under `params`.
    pub fn logits_with(&self, params: &ParamStore, batch: &NetBatch) -> Result<Vec<f64>> {
        let mut ctx = Ctx::new(params);
        let out = self.graph(&mut ctx, batch)?;
        Ok(ctx.tape.value(out.logits).to_vec())
    }

    pub fn forward(&self, batch: &NetBatch) -> Result<PredictionMatrix> {
        self.forward_with(&self.final_params, batch)
    }

    /// Regression: raw scalar; binary: logistic link; multiclass: softmax.
    pub fn forward_with(&self, params: &ParamStore, batch: &NetBatch) -> Result<PredictionMatrix> {
        let logits = self.logits_with(params, batch)?;
        Ok(link(self.config.task, self.config.output_dim, logits))
    }

    /// Width of [`TrainedNet::embed`] rows.
    pub fn embedding_width(&self) -> usize {
        match self.config.variant {
            Variant::FuseEarly => self.config.fuse_early_encoder.units,
            _ => self.config.hidden_size,
        }
    }

    /// Top-layer CLS vector per row; for fuse-late, the text-branch part of
    /// the pooled representation. Row-major `[n_rows, embedding_width]`.
    pub fn embed(&self, batch: &NetBatch) -> Result<Vec<f64>> {
        let mut ctx = Ctx::new(&self.final_params);
        let out = self.graph(&mut ctx, batch)?;
        let emb = out
            .embedding
            .ok_or_else(|| Error::InvalidArgument("network has no text branch to embed".into()))?;
        Ok(ctx.tape.value(emb).to_vec())
    }

    /// Mean loss of `batch` against `target` and its gradient for every
    /// parameter in `params` (same order as the store).
    pub fn loss_and_gradients(&self, params: &ParamStore, batch: &NetBatch, target: &Target) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut ctx = Ctx::new(params);
        let out = self.graph(&mut ctx, batch)?;
        let loss = loss_node(&mut ctx.tape, out.logits, self.config.task, target)?;
        let value = ctx.tape.value(loss)[0];
        let grads = ctx.tape.backward(loss).param_grads(&params.sizes());
        Ok((value, grads))
    }

    pub fn loss(&self, params: &ParamStore, batch: &NetBatch, target: &Target) -> Result<f64> {
        let mut ctx = Ctx::new(params);
        let out = self.graph(&mut ctx, batch)?;
        let loss = loss_node(&mut ctx.tape, out.logits, self.config.task, target)?;
        Ok(ctx.tape.value(loss)[0])
    }
}

fn categorical_token(ctx: &mut Ctx, batch: &NetBatch, j: usize, slope: f64) -> Var {
    let table = ctx.p(&format!("cat{j}.emb"));
    let ids = (0..batch.n_rows())
        .map(|r| batch.categorical[r * batch.n_categorical + j])
        .collect();
    let e = ctx.tape.gather(table, ids);
    ctx.mlp(&format!("cat{j}.enc"), e, slope)
}

fn head(ctx: &mut Ctx, x: Var, slope: f64) -> Var {
    let h = ctx.linear("head.fc1", x);
    let h = ctx.tape.leaky_relu(h, slope);
    ctx.linear("head.fc2", h)
}

pub(crate) fn loss_node(tape: &mut Tape, logits: Var, task: Task, target: &Target) -> Result<Var> {
    match (task, target) {
        (Task::Regression, Target::Values(v)) => Ok(tape.mse_loss(logits, v.clone())),
        (Task::Binary, Target::Classes { labels, .. }) => {
            Ok(tape.bce_loss(logits, labels.iter().map(|&l| l as f64).collect()))
        }
        (Task::Multiclass, Target::Classes { labels, .. }) => Ok(tape.softmax_xent(logits, labels.clone())),
        _ => Err(Error::InvalidArgument("target kind does not match the task".into())),
    }
}

pub(crate) fn link(task: Task, width: usize, logits: Vec<f64>) -> PredictionMatrix {
    match task {
        Task::Regression => PredictionMatrix::regression(logits),
        Task::Binary => {
            let p: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
            PredictionMatrix::binary(&p)
        }
        Task::Multiclass => {
            PredictionMatrix::new(Task::Multiclass, width, softmax_rows(&logits, width)).expect("softmax rows")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::EncoderDims;
    use crate::textprep::{build_vocab, merge_fields, tokenize};
    use rand::Rng as _;

    fn vocab() -> Vocab {
        build_vocab(&["alpha beta gamma delta", "eps zeta eta theta iota"], 100)
    }

    fn config(variant: Variant, task: Task) -> NetConfig {
        let mut c = NetConfig::new(variant, task);
        c.hidden_size = 8;
        c.n_layers = 2;
        c.n_heads = 2;
        c.ffn_size = 12;
        c.cat_embed_units = 4;
        c.cat_bottleneck = 6;
        c.late_bottleneck = 6;
        c.fuse_early_encoder = EncoderDims {
            layers: 2,
            units: 12,
            heads: 2,
            ffn: 10,
        };
        c.n_text_fields = 2;
        c.output_dim = if task == Task::Multiclass { 3 } else { 1 };
        if matches!(variant, Variant::FuseEarly | Variant::FuseLate) {
            c.n_numeric = 2;
            c.categorical_sizes = vec![3, 4];
        }
        c
    }

    fn batch(v: &Vocab, c: &NetConfig, rows: usize, seed: u64) -> NetBatch {
        let mut r = rng::seeded(seed);
        let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta"];
        let texts = (0..rows)
            .map(|_| {
                let fields: Vec<Vec<u32>> = (0..2)
                    .map(|_| {
                        let n = r.random_range(1..5);
                        let s: Vec<&str> = (0..n).map(|_| words[r.random_range(0..words.len())]).collect();
                        tokenize(&s.join(" "), v)
                    })
                    .collect();
                merge_fields(&fields, c.max_length).unwrap()
            })
            .collect();
        NetBatch {
            texts,
            numeric: (0..rows * c.n_numeric).map(|_| r.random_range(-1.0..1.0)).collect(),
            categorical: (0..rows)
                .flat_map(|_| c.categorical_sizes.iter().map(|&s| r.random_range(0..s)).collect::<Vec<_>>())
                .collect(),
            n_numeric: c.n_numeric,
            n_categorical: c.n_categorical(),
        }
    }

    fn target(task: Task, rows: usize) -> Target {
        match task {
            Task::Regression => Target::Values((0..rows).map(|i| i as f64 * 0.3 - 0.5).collect()),
            Task::Binary => Target::Classes {
                labels: (0..rows).map(|i| i % 2).collect(),
                n_classes: 2,
            },
            Task::Multiclass => Target::Classes {
                labels: (0..rows).map(|i| i % 3).collect(),
                n_classes: 3,
            },
        }
    }

    fn grad_check(variant: Variant, task: Task) {
        let v = vocab();
        let c = config(variant, task);
        let net = build_net(&c, &v, 3).unwrap();
        let b = batch(&v, &c, 4, 9);
        let y = target(task, 4);
        let (_, grads) = net.loss_and_gradients(&net.params, &b, &y).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (i, p) in net.params.params().iter().enumerate() {
            for j in 0..p.tensor.data.len() {
                let mut plus = net.params.clone();
                plus.params_mut()[i].tensor.data[j] += h;
                let mut minus = net.params.clone();
                minus.params_mut()[i].tensor.data[j] -= h;
                let fd = (net.loss(&plus, &b, &y).unwrap() - net.loss(&minus, &b, &y).unwrap()) / (2.0 * h);
                let an = grads[i][j];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                worst = worst.max(rel);
                assert!(rel < 1e-4, "{variant:?} {} [{j}]: fd {fd} vs {an}", p.name);
            }
        }
        assert!(worst < 1e-4);
    }

    #[test]
    fn gradients_text_only() {
        grad_check(Variant::TextOnly, Task::Multiclass);
    }

    #[test]
    fn gradients_fuse_late() {
        grad_check(Variant::FuseLate, Task::Binary);
    }

    #[test]
    fn gradients_fuse_early() {
        grad_check(Variant::FuseEarly, Task::Regression);
    }

    #[test]
    fn same_seed_same_init() {
        let v = vocab();
        let c = config(Variant::FuseLate, Task::Binary);
        assert_eq!(build_net(&c, &v, 5).unwrap().params, build_net(&c, &v, 5).unwrap().params);
        assert_ne!(build_net(&c, &v, 5).unwrap().params, build_net(&c, &v, 6).unwrap().params);
    }

    #[test]
    fn fuse_late_pooled_width() {
        let v = vocab();
        let mut c = config(Variant::FuseLate, Task::Binary);
        c.n_numeric = 2;
        c.categorical_sizes = vec![5];
        let net = build_net(&c, &v, 1).unwrap();
        assert_eq!(net.params.get("head.fc1.w").unwrap().tensor.shape, vec![3 * c.hidden_size, c.hidden_size]);
    }

    #[test]
    fn fusion_without_tabular_is_rejected() {
        let v = vocab();
        let mut c = config(Variant::FuseEarly, Task::Binary);
        c.n_numeric = 0;
        c.categorical_sizes.clear();
        let err = build_net(&c, &v, 1).unwrap_err().to_string();
        assert!(err.contains("text_only"), "{err}");
    }

    #[test]
    fn padding_does_not_change_cls() {
        let v = vocab();
        for variant in [Variant::TextOnly, Variant::FuseEarly] {
            let c = config(variant, Task::Binary);
            let net = build_net(&c, &v, 2).unwrap();
            let short = batch(&v, &c, 1, 4);
            let mut padded = short.clone();
            padded.texts[0].token_ids.extend([PAD; 7]);
            padded.texts[0].segment_ids.extend([0; 7]);
            let a = net.embed(&short).unwrap();
            let b = net.embed(&padded).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9, "{variant:?}");
            }
        }
    }

    #[test]
    fn outputs_are_probabilities_and_row_independent() {
        let v = vocab();
        let c = config(Variant::FuseLate, Task::Multiclass);
        let net = build_net(&c, &v, 2).unwrap();
        let b = batch(&v, &c, 5, 1);
        let p = net.forward(&b).unwrap();
        for row in p.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let perm = [3, 0, 4, 1, 2];
        let q = net.forward(&b.select(&perm)).unwrap();
        for (i, &r) in perm.iter().enumerate() {
            for (x, y) in q.row(i).iter().zip(p.row(r)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_head_gives_half() {
        let v = vocab();
        let c = config(Variant::TextOnly, Task::Binary);
        let mut net = build_net(&c, &v, 2).unwrap();
        for name in ["head.fc2.w", "head.fc2.b"] {
            net.final_params.get_mut(name).unwrap().tensor.data.fill(0.0);
        }
        let p = net.forward(&batch(&v, &c, 3, 1)).unwrap();
        assert!(p.positive_scores().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn embeddings_follow_information_flow() {
        let v = vocab();
        let mut b = batch(&v, &config(Variant::FuseLate, Task::Binary), 2, 8);
        b.texts[1] = b.texts[0].clone();
        b.categorical.copy_within(0..2, 2);
        b.numeric[2] += 1.5;
        let text_only = config(Variant::TextOnly, Task::Binary);
        let net = build_net(&text_only, &v, 1).unwrap();
        let tb = NetBatch {
            numeric: Vec::new(),
            categorical: Vec::new(),
            n_numeric: 0,
            n_categorical: 0,
            ..b.clone()
        };
        let e = net.embed(&tb).unwrap();
        assert_eq!(e.len(), 2 * net.embedding_width());
        assert_eq!(e[..8], e[8..]);
        let early = build_net(&config(Variant::FuseEarly, Task::Binary), &v, 1).unwrap();
        let e = early.embed(&b).unwrap();
        let w = early.embedding_width();
        assert_ne!(e[..w], e[w..]);
        assert_eq!(early.embed(&b).unwrap(), e);
    }

    #[test]
    fn overlong_sequence_is_rejected() {
        let v = vocab();
        let mut c = config(Variant::TextOnly, Task::Binary);
        c.max_length = 8;
        let net = build_net(&c, &v, 1).unwrap();
        let mut b = batch(&v, &c, 1, 1);
        b.texts[0].token_ids = vec![4; 9];
        b.texts[0].segment_ids = vec![0; 9];
        assert!(net.forward(&b).is_err());
    }
}

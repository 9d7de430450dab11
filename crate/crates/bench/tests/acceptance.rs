//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every expected value is recomputed here by an independent oracle
//! (brute-force pair counting, direct formulas, exhaustive grids, a greedy
//! truncation simulator) rather than copied from the library.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use tabtext::ensemble::{ensemble_selection, fold_assignment, oof_fit, predict_weighted, Objective};
use tabtext::evalkit::{permutation_importance, permutation_importance_with, score, BenchmarkResult, MetricKind};
use tabtext::neuralnet::{average_top, build_net, lr_at, AdamW, Checkpoint, EncoderDims, NetBatch, NetConfig, TrainConfig, Variant};
use tabtext::prediction::{PredictionMatrix, Target};
use tabtext::rng;
use tabtext::tabmodels::TabKind;
use tabtext::textprep::{build_vocab, merge_fields, tokenize, Vocab, CLS, SEP};
use tabtext::{Cell, Column, DataTable, Learner, LearnerKind, Model, Result as TtResult, Task};
use tabtext_bench::config::DatasetConfig;
use tabtext_bench::runner::execute;
use tabtext_bench::synth::write_synthetic;
use tabtext_bench::{Allocation, Method, RunConfig, Strategy, SyntheticSpec};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- criterion 1

fn brute_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let mut hits = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    hits += 1.0;
                } else if scores[i] == scores[j] {
                    hits += 0.5;
                }
            }
        }
    }
    hits / pairs
}

fn metric_oracles() -> Outcome {
    let mut r = rng::seeded(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.random_range(2..=50);
        let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        labels.shuffle(&mut r);
        // coarse scores produce plenty of ties
        let levels = r.random_range(2..20);
        let p: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        let got = score(MetricKind::Auc, &PredictionMatrix::binary(&p), &Target::Classes { labels: labels.clone(), n_classes: 2 })
            .map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_auc(&p, &labels)).abs());

        let y: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let yhat: Vec<f64> = y.iter().map(|v| v + r.random_range(-1.0..1.0)).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let ss_res: f64 = y.iter().zip(&yhat).map(|(a, b)| (a - b) * (a - b)).sum();
        let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
        let got = score(MetricKind::R2, &PredictionMatrix::regression(yhat), &Target::Values(y)).map_err(|e| e.to_string())?;
        worst = worst.max((got - (1.0 - ss_res / ss_tot)).abs());

        let k = r.random_range(2..6);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let probs: Vec<f64> = (0..n * k).map(|_| r.random_range(0.0..1.0)).collect();
        let hits = (0..n)
            .filter(|&i| {
                let row = &probs[i * k..(i + 1) * k];
                let best = (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                best == labels[i]
            })
            .count();
        let pm = PredictionMatrix::new(Task::Multiclass, k, probs).map_err(|e| e.to_string())?;
        let got = score(MetricKind::Accuracy, &pm, &Target::Classes { labels, n_classes: k }).map_err(|e| e.to_string())?;
        worst = worst.max((got - hits as f64 / n as f64).abs());
    }
    check(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("1000 instances, max deviation from oracles {worst:.1e}"))
}

// ---------------------------------------------------------------- criterion 2

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn selection_instance(r: &mut rng::Rng, m: usize, binary: bool) -> (Vec<PredictionMatrix>, Target, Objective) {
    let n = 200;
    let normal = |r: &mut rng::Rng| -> f64 { rand_distr::Distribution::sample(&rand_distr::StandardNormal, r) };
    let latent: Vec<f64> = (0..n).map(|_| normal(r)).collect();
    let shared: Vec<f64> = (0..n).map(|_| normal(r)).collect();
    let mut preds = Vec::new();
    for _ in 0..m {
        let noise = r.random_range(0.2..2.0);
        let mix = r.random_range(0.0..1.0);
        let bias = r.random_range(-0.5..0.5);
        let v: Vec<f64> = (0..n)
            .map(|i| latent[i] + noise * (mix * shared[i] + (1.0 - mix) * normal(r)) + bias)
            .collect();
        preds.push(if binary {
            PredictionMatrix::binary(&v.iter().map(|&x| sigmoid(1.5 * x)).collect::<Vec<_>>())
        } else {
            PredictionMatrix::regression(v)
        });
    }
    if binary {
        let labels = latent.iter().map(|&l| usize::from(l + 0.5 * normal(r) > 0.0)).collect();
        (preds, Target::Classes { labels, n_classes: 2 }, Objective::Metric(MetricKind::Auc))
    } else {
        let y = latent.iter().map(|&l| l + 0.3 * normal(r)).collect();
        (preds, Target::Values(y), Objective::Metric(MetricKind::R2))
    }
}

fn ensemble_selection_quality() -> Outcome {
    let mut r = rng::seeded(2);
    let mut grid_checked = 0;
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    let mut worst_grid: f64 = f64::NEG_INFINITY;
    for inst in 0..200 {
        let m = r.random_range(3..=6);
        let (preds, y, obj) = selection_instance(&mut r, m, inst % 2 == 0);
        let refs: Vec<&PredictionMatrix> = preds.iter().collect();
        let w = ensemble_selection(&refs, &y, obj, 100).map_err(|e| e.to_string())?;
        let eval = |w: &[f64]| obj.evaluate(&predict_weighted(&refs, w).unwrap(), &y).unwrap();
        let got = eval(&w);
        let best_single = preds.iter().map(|p| obj.evaluate(p, &y).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        worst_gap = worst_gap.max(best_single - got);
        check(got >= best_single - 1e-9, format!("instance {inst}: {got} below best single {best_single}"))?;
        if m == 3 {
            let mut grid_best = f64::NEG_INFINITY;
            for a in 0..=20 {
                for b in 0..=20 - a {
                    let wg = [a as f64 / 20.0, b as f64 / 20.0, (20 - a - b) as f64 / 20.0];
                    grid_best = grid_best.max(eval(&wg));
                }
            }
            grid_checked += 1;
            worst_grid = worst_grid.max(grid_best - got);
            check(got >= grid_best - 0.01, format!("instance {inst}: {got} vs grid optimum {grid_best}"))?;
        }
    }
    Ok(format!(
        "200 instances; worst shortfall vs best single {worst_gap:.2e}; {grid_checked} three-model instances, worst shortfall vs 0.05 grid {worst_grid:.4}"
    ))
}

// ---------------------------------------------------------------- criterion 3

/// Remembers the label of every training key; unseen keys get the uniform
/// distribution. Also records which keys each fit saw.
struct Memorizer {
    seen: Mutex<Vec<HashSet<String>>>,
}

struct Memory(HashMap<String, usize>, usize);

impl Model for Memory {
    fn predict(&self, t: &DataTable) -> TtResult<PredictionMatrix> {
        let mut v = Vec::new();
        for c in &t.column("key").unwrap().cells {
            let mut row = vec![1.0 / self.1 as f64; self.1];
            if let Some(&l) = self.0.get(&c.as_string().unwrap()) {
                row = vec![0.0; self.1];
                row[l] = 1.0;
            }
            v.extend(row);
        }
        PredictionMatrix::new(t.task(), self.1, v)
    }
}

impl Learner for Memorizer {
    fn name(&self) -> String {
        "memorizer".into()
    }

    fn kind(&self) -> LearnerKind {
        LearnerKind::Tabular
    }

    fn fit(&self, t: &DataTable, _: Option<&DataTable>, _: u64) -> TtResult<Box<dyn Model>> {
        let labels = t.target_values()?.labels().unwrap().to_vec();
        let keys: Vec<String> = t.column("key").unwrap().cells.iter().map(|c| c.as_string().unwrap()).collect();
        self.seen.lock().unwrap().push(keys.iter().cloned().collect());
        Ok(Box::new(Memory(keys.into_iter().zip(labels).collect(), t.n_classes())))
    }
}

fn keyed_table(n: usize, classes: usize, r: &mut rng::Rng) -> DataTable {
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(r);
    let task = if classes == 2 { Task::Binary } else { Task::Multiclass };
    DataTable::new(
        "keyed",
        vec![
            Column::new("key", (0..n).map(|i| Cell::Text(format!("key{i}"))).collect()),
            Column::new("y", labels.iter().map(|l| Cell::Categorical(format!("c{l}"))).collect()),
        ],
    )
    .unwrap()
    .with_target("y", task)
    .unwrap()
}

fn oof_leakage_guard() -> Outcome {
    let mut r = rng::seeded(3);
    let t = keyed_table(500, 2, &mut r);
    let folds = fold_assignment(&t, 5, 0).map_err(|e| e.to_string())?;
    let learner = Memorizer { seen: Mutex::new(Vec::new()) };
    let m = oof_fit(&learner, &t, None, &folds, 5, 0).map_err(|e| e.to_string())?;
    let y = t.target_values().unwrap();
    let mut in_fold: f64 = 1.0;
    for f in 0..5 {
        let rows = &m.fold_train_rows[f];
        let acc = score(MetricKind::Accuracy, &m.fold_models[f].predict(&t.take_rows(rows)).unwrap(), &y.take(rows)).unwrap();
        in_fold = in_fold.min(acc);
    }
    let oof = score(MetricKind::Accuracy, &m.oof, &y).unwrap();
    check(in_fold == 1.0, format!("in-fold accuracy {in_fold}"))?;
    check(oof <= 0.5 + 0.10, format!("OOF accuracy {oof} above chance + 0.10"))?;

    // structural fuzz: arbitrary assignments, every fold non-empty
    for case in 0..1000 {
        let n = r.random_range(6..60);
        let k = r.random_range(2..=n.min(8));
        let classes = r.random_range(2..4);
        let t = keyed_table(n, classes, &mut r);
        let mut folds: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
        folds.shuffle(&mut r);
        let learner = Memorizer { seen: Mutex::new(Vec::new()) };
        let m = oof_fit(&learner, &t, None, &folds, k, case).map_err(|e| format!("case {case}: {e}"))?;
        for f in 0..k {
            let held: HashSet<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            check(
                m.fold_train_rows[f].iter().all(|i| !held.contains(i)),
                format!("case {case}: fold {f} trained on its own OOF rows"),
            )?;
            check(
                m.fold_train_rows[f].len() + held.len() == n,
                format!("case {case}: fold {f} does not train on all other rows"),
            )?;
        }
        // the keys each fit actually saw never include a row it predicts out of fold
        let seen = learner.seen.lock().unwrap();
        check(seen.len() == k, format!("case {case}: {} fits for k={k}", seen.len()))?;
        for keys in seen.iter() {
            let f = (0..k)
                .find(|&f| (0..n).filter(|&i| folds[i] != f).all(|i| keys.contains(&format!("key{i}"))) && keys.len() == n - folds.iter().filter(|&&x| x == f).count())
                .ok_or_else(|| format!("case {case}: a fit saw rows of no single fold complement"))?;
            check(
                (0..n).filter(|&i| folds[i] == f).all(|i| !keys.contains(&format!("key{i}"))),
                format!("case {case}: leak in fold {f}"),
            )?;
        }
    }
    Ok(format!("in-fold accuracy 1.0, OOF accuracy {oof:.3}; 1000 fuzzed assignments leak-free"))
}

// ---------------------------------------------------------------- criterion 4

fn grad_vocab() -> Vocab {
    build_vocab(&["alpha beta gamma delta", "eps zeta eta theta iota kappa"], 100)
}

fn grad_config(variant: Variant, task: Task) -> NetConfig {
    let mut c = NetConfig::new(variant, task);
    c.hidden_size = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.ffn_size = 32;
    c.cat_embed_units = 8;
    c.cat_bottleneck = 8;
    c.late_bottleneck = 8;
    c.max_length = 24;
    c.fuse_early_encoder = EncoderDims {
        layers: 2,
        units: 16,
        heads: 2,
        ffn: 32,
    };
    c.n_text_fields = if variant == Variant::AllText { 3 } else { 2 };
    c.output_dim = if task == Task::Multiclass { 3 } else { 1 };
    if matches!(variant, Variant::FuseEarly | Variant::FuseLate) {
        c.n_numeric = 2;
        c.categorical_sizes = vec![3, 4];
    }
    c
}

fn grad_batch(v: &Vocab, c: &NetConfig, rows: usize, seed: u64) -> NetBatch {
    let mut r = rng::seeded(seed);
    let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "kappa"];
    let texts = (0..rows)
        .map(|_| {
            let fields: Vec<Vec<u32>> = (0..c.n_text_fields)
                .map(|_| {
                    let n = r.random_range(1..6);
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

fn grad_target(task: Task, rows: usize) -> Target {
    match task {
        Task::Regression => Target::Values((0..rows).map(|i| i as f64 * 0.4 - 0.6).collect()),
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

fn gradient_checks() -> Outcome {
    let v = grad_vocab();
    let mut parts = Vec::new();
    let cases = [
        (Variant::TextOnly, Task::Binary),
        (Variant::AllText, Task::Multiclass),
        (Variant::FuseEarly, Task::Regression),
        (Variant::FuseLate, Task::Multiclass),
    ];
    for (i, (variant, task)) in cases.into_iter().enumerate() {
        let c = grad_config(variant, task);
        let net = build_net(&c, &v, 10 + i as u64).map_err(|e| e.to_string())?;
        let b = grad_batch(&v, &c, 4, 20 + i as u64);
        let y = grad_target(task, 4);
        let (_, grads) = net.loss_and_gradients(&net.params, &b, &y).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for (pi, p) in net.params.params().iter().enumerate() {
            for j in 0..p.tensor.data.len() {
                let mut plus = net.params.clone();
                plus.params_mut()[pi].tensor.data[j] += h;
                let mut minus = net.params.clone();
                minus.params_mut()[pi].tensor.data[j] -= h;
                let fd = (net.loss(&plus, &b, &y).unwrap() - net.loss(&minus, &b, &y).unwrap()) / (2.0 * h);
                let an = grads[pi][j];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                check(rel < 1e-4, format!("{variant:?} {}[{j}]: fd {fd:e} vs analytic {an:e}", p.name))?;
                worst = worst.max(rel);
                count += 1;
            }
        }
        parts.push(format!("{variant:?} {count} params max rel {worst:.1e}"));
    }
    Ok(parts.join("; "))
}

// ---------------------------------------------------------------- criterion 5

fn schedule_decay_averaging() -> Outcome {
    let cfg = TrainConfig::default();
    let total = 1000;
    let warm = (cfg.warmup_fraction * total as f64).ceil() as usize;
    let lrs: Vec<f64> = (0..=total).map(|s| lr_at(s, total, &cfg).unwrap()).collect();
    check(lrs[0] == 0.0, format!("lr_at(0) = {}", lrs[0]))?;
    check(lrs[warm] == 5e-5, format!("lr at warmup boundary {}", lrs[warm]))?;
    check(lrs.iter().all(|&l| l <= 5e-5), "schedule exceeds the peak")?;
    check(lrs[total] == 0.0, format!("lr_at(total) = {}", lrs[total]))?;

    // instrumented AdamW step: with eps = 0 the first Adam direction is
    // sign(g), so each entry moves by exactly lr * tau^depth
    let v = grad_vocab();
    let c = grad_config(Variant::TextOnly, Task::Binary);
    let net = build_net(&c, &v, 5).map_err(|e| e.to_string())?;
    let b = grad_batch(&v, &c, 4, 6);
    let (_, grads) = net.loss_and_gradients(&net.params, &b, &grad_target(Task::Binary, 4)).map_err(|e| e.to_string())?;
    let tau = 0.8;
    let tcfg = TrainConfig {
        layer_decay: tau,
        adam_eps: 0.0,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let mut store = net.params.clone();
    let mut opt = AdamW::new(&store, &tcfg);
    let lr = 1e-3;
    opt.step(&mut store, &grads, lr).map_err(|e| e.to_string())?;
    let step_of = |name: &str| -> Result<(usize, f64), String> {
        let i = net.params.position(name).ok_or(format!("no parameter {name}"))?;
        let j = grads[i].iter().position(|g| g.abs() > 1e-12).ok_or(format!("{name} has no gradient"))?;
        let d = net.params.params()[i].depth;
        Ok((d, (store.params()[i].tensor.data[j] - net.params.params()[i].tensor.data[j]).abs()))
    };
    let (emb_depth, emb_step) = step_of("text.emb.tok")?;
    let head = net
        .params
        .params()
        .iter()
        .find(|p| p.depth == 0)
        .map(|p| p.name.clone())
        .ok_or("no head parameter")?;
    let (head_depth, head_step) = step_of(&head)?;
    check(head_depth == 0 && emb_depth == c.n_layers + 1, format!("depths {head_depth}/{emb_depth}"))?;
    let ratio = emb_step / head_step;
    let expected = tau.powi(emb_depth as i32);
    check((ratio - expected).abs() < 1e-6, format!("step ratio {ratio} vs tau^L {expected}"))?;

    // checkpoint averaging against an elementwise mean of the top 3
    let mut r = rng::seeded(7);
    let log: Vec<Checkpoint> = (0..6)
        .map(|epoch| {
            let mut p = net.params.clone();
            for param in p.params_mut() {
                for x in &mut param.tensor.data {
                    *x += r.random_range(-1.0..1.0);
                }
            }
            Checkpoint {
                epoch,
                validation_score: r.random_range(0.0..1.0),
                params: p,
            }
        })
        .collect();
    let avg = average_top(&log, 3).map_err(|e| e.to_string())?;
    let mut order: Vec<usize> = (0..log.len()).collect();
    order.sort_by(|&a, &b| log[b].validation_score.partial_cmp(&log[a].validation_score).unwrap());
    let mut worst: f64 = 0.0;
    for (pi, p) in avg.params().iter().enumerate() {
        for (j, &x) in p.tensor.data.iter().enumerate() {
            let mean = order[..3].iter().map(|&e| log[e].params.params()[pi].tensor.data[j]).sum::<f64>() / 3.0;
            worst = worst.max((x - mean).abs());
        }
    }
    check(worst <= 1e-12, format!("average deviates by {worst:e}"))?;
    Ok(format!(
        "lr 0 / 5e-5 / 0 at 0 / {warm} / {total}; step ratio {ratio:.9} vs tau^{emb_depth} {expected:.9}; average max deviation {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- criterion 6

/// Greedy oracle: remove one token at a time from the longest field
/// (lowest index among ties) until everything fits.
fn greedy_truncate(lengths: &[usize], budget: usize) -> Vec<usize> {
    let mut l = lengths.to_vec();
    while l.iter().sum::<usize>() > budget {
        let max = *l.iter().max().unwrap();
        let i = l.iter().position(|&x| x == max).unwrap();
        l[i] -= 1;
    }
    l
}

fn truncation_fuzz() -> Outcome {
    let mut r = rng::seeded(8);
    let mut truncated_cases = 0;
    for case in 0..10_000 {
        let k = r.random_range(1..=8);
        let cap = *[20usize, 100, 300, 700].choose(&mut r).unwrap();
        let lengths: Vec<usize> = (0..k).map(|_| r.random_range(0..=cap)).collect();
        let fields: Vec<Vec<u32>> = lengths.iter().map(|&n| (0..n).map(|_| r.random_range(4..100)).collect()).collect();
        let m = merge_fields(&fields, 512).map_err(|e| format!("case {case}: {e}"))?;
        check(m.len() <= 512, format!("case {case}: merged length {}", m.len()))?;
        let kept: Vec<usize> = m.field_spans.iter().map(|(a, b)| b - a).collect();
        let oracle = greedy_truncate(&lengths, 512 - 1 - k);
        check(kept == oracle, format!("case {case}: kept {kept:?}, greedy oracle {oracle:?}"))?;
        if kept != lengths {
            truncated_cases += 1;
        }
        // a field only shrinks while it is among the longest, so every shrunk
        // field ends within one token of the longest kept field and no
        // untouched field is longer than a shrunk one plus one
        let max_kept = *kept.iter().max().unwrap_or(&0);
        for i in 0..k {
            if kept[i] < lengths[i] {
                check(kept[i] + 1 >= max_kept, format!("case {case}: field {i} shrank below the maximum"))?;
                for j in 0..k {
                    if kept[j] == lengths[j] {
                        check(lengths[j] <= kept[i] + 1, format!("case {case}: shorter field {i} shrank before {j}"))?;
                    }
                }
            }
        }
        check(m.token_ids[0] == CLS && m.segment_ids[0] == 0, format!("case {case}: bad CLS"))?;
        for (i, &(a, b)) in m.field_spans.iter().enumerate() {
            check(
                m.segment_ids[a..=b].iter().all(|&s| s as usize == i % 2) && m.token_ids[b] == SEP,
                format!("case {case}: field {i} segment ids or SEP wrong"),
            )?;
            check(m.token_ids[a..b] == fields[i][..b - a], format!("case {case}: field {i} not a prefix"))?;
        }
    }
    Ok(format!("10000 cases ({truncated_cases} truncated), lengths <= 512, greedy oracle matched, segment ids = field mod 2"))
}

// ---------------------------------------------------------- criteria 7 and 8

fn synth_dataset(dir: &Path, spec: &SyntheticSpec, metric: Option<MetricKind>) -> DatasetConfig {
    let sub = dir.join(&spec.name);
    write_synthetic(spec, &sub).unwrap();
    DatasetConfig {
        name: spec.name.clone(),
        path: sub.join("train.csv"),
        test_path: Some(sub.join("test.csv")),
        target: spec.target_name().into(),
        task: spec.task,
        metric,
        type_overrides: spec.hints(),
        test_fraction: None,
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn interaction_reproduction() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec {
        name: "xor".into(),
        n_rows: 4000,
        signal_allocation: Allocation::new(0.0, 0.0, 1.0),
        seed: 70,
        ..SyntheticSpec::default()
    };
    let ds = synth_dataset(dir.path(), &spec, Some(MetricKind::Accuracy));
    let seeds: Vec<u64> = (0..5).collect();
    let methods = [Strategy::FuseLate, Strategy::TextNet, Strategy::TabStack];
    let config = RunConfig::new(vec![ds], methods.to_vec(), seeds.clone());
    let methods: Vec<Method> = methods.iter().map(|&s| s.into()).collect();
    let report = execute(&config, &methods, workers()).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for (m, lo, hi) in [("fuse_late", 0.85, 1.0), ("text_net", 0.0, 0.65), ("tab_stack", 0.0, 0.65)] {
        let scores: Vec<f64> = seeds
            .iter()
            .map(|&s| report.score(m, "xor", s).ok_or(format!("{m} seed {s} not scored")))
            .collect::<Result<_, _>>()?;
        for (s, v) in seeds.iter().zip(&scores) {
            check(*v >= lo && *v <= hi, format!("{m} seed {s}: accuracy {v:.3} outside [{lo}, {hi}]"))?;
        }
        summary.push(format!(
            "{m} {}",
            scores.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join("/")
        ));
    }
    Ok(summary.join("; "))
}

fn aggregation_ordering() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let regimes = [
        (1.0, 0.0, 0.0, Task::Binary),
        (0.0, 1.0, 0.0, Task::Binary),
        (0.5, 0.5, 0.0, Task::Binary),
        (0.3, 0.3, 0.4, Task::Binary),
        (0.6, 0.2, 0.2, Task::Multiclass),
        (0.2, 0.6, 0.2, Task::Multiclass),
        (0.4, 0.4, 0.2, Task::Regression),
        (0.25, 0.5, 0.25, Task::Regression),
    ];
    let datasets: Vec<DatasetConfig> = regimes
        .iter()
        .enumerate()
        .map(|(i, &(t, u, x, task))| {
            let spec = SyntheticSpec {
                name: format!("mix{i}"),
                n_rows: 2000,
                signal_allocation: Allocation::new(t, u, x),
                noise: 0.1,
                task,
                seed: 800 + i as u64,
                ..SyntheticSpec::default()
            };
            synth_dataset(dir.path(), &spec, None)
        })
        .collect();
    let names: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();
    let seeds = vec![0, 1, 2];
    let mut methods: Vec<Method> = [
        Strategy::StackEnsemble,
        Strategy::WeightedEnsemble,
        Strategy::FuseLate,
        Strategy::TextEmbedding,
        Strategy::PreEmbedding,
    ]
    .iter()
    .map(|&s| s.into())
    .collect();
    methods.extend(TabKind::ALL.iter().map(|&k| Method::Single(k)));
    let config = RunConfig::new(datasets, vec![Strategy::StackEnsemble], seeds.clone());
    let report = execute(&config, &methods, workers()).map_err(|e| e.to_string())?;

    // per-dataset means over seeds, ranked across all compared methods
    let mut result = BenchmarkResult::new();
    for m in &methods {
        for d in &names {
            let v: Vec<f64> = seeds
                .iter()
                .map(|&s| report.score(m.id(), d, s).ok_or(format!("{} on {d} seed {s} not scored", m.id())))
                .collect::<Result<_, _>>()?;
            result.insert(m.id(), d, v.iter().sum::<f64>() / v.len() as f64);
        }
    }
    let ranks: BTreeMap<String, f64> = result
        .methods()
        .iter()
        .cloned()
        .zip(result.mean_rank().map_err(|e| e.to_string())?)
        .collect();
    let agg = result.aggregate().map_err(|e| e.to_string())?;
    let avg: BTreeMap<String, f64> = agg.methods.iter().cloned().zip(agg.avg.iter().copied()).collect();
    let base = ["fuse_late", "ert", "gbm_a", "gbm_b", "tab_mlp"];
    let (best, best_rank) = base
        .iter()
        .map(|b| (*b, ranks[*b]))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let (stack, weighted) = (ranks["stack_ensemble"], ranks["weighted_ensemble"]);
    let (te, pe) = (avg["text_embedding"], avg["pre_embedding"]);
    let detail = format!(
        "mean ranks stack {stack:.3}, weighted {weighted:.3}, best single ({best}) {best_rank:.3}; avg text_embedding {te:.4} vs pre_embedding {pe:.4}"
    );
    eprintln!("{}", result.render_table().map_err(|e| e.to_string())?);
    check(stack <= weighted && weighted <= best_rank && te >= pe, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- criterion 9

/// Predicts the value of one column; every other column is ignored.
struct Copier(&'static str);

impl Model for Copier {
    fn predict(&self, t: &DataTable) -> TtResult<PredictionMatrix> {
        Ok(PredictionMatrix::regression(
            t.column(self.0).unwrap().cells.iter().map(|c| c.as_f64().unwrap()).collect(),
        ))
    }
}

fn permutation_importance_check() -> Outcome {
    let mut r = rng::seeded(9);
    let n = 1000;
    let x: Vec<f64> = (0..n).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r)).collect();
    let z: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let t = DataTable::new(
        "imp",
        vec![
            Column::new("x", x.iter().map(|&v| Cell::Numeric(v)).collect()),
            Column::new("z", z.iter().map(|&v| Cell::Numeric(v)).collect()),
            Column::new("y", x.iter().map(|&v| Cell::Numeric(v)).collect()),
        ],
    )
    .unwrap()
    .with_target("y", Task::Regression)
    .unwrap();
    let model = Copier("x");
    let copied = permutation_importance(&model, &t, "x", MetricKind::R2, 5, 0).map_err(|e| e.to_string())?;
    let ignored = permutation_importance(&model, &t, "z", MetricKind::R2, 5, 0).map_err(|e| e.to_string())?;
    let again = permutation_importance(&model, &t, "x", MetricKind::R2, 5, 0).map_err(|e| e.to_string())?;
    let identity = permutation_importance_with(&model, &t, "x", MetricKind::R2, &[(0..n).collect()]).map_err(|e| e.to_string())?;
    check(ignored.abs() <= 0.01, format!("ignored feature importance {ignored}"))?;
    check(copied >= 0.5, format!("copied feature importance {copied}"))?;
    check(copied.to_bits() == again.to_bits(), "repeat with the same seed differs")?;
    check(identity == 0.0, format!("identity permutation gives {identity}"))?;
    check(
        permutation_importance(&model, &t, "nope", MetricKind::R2, 5, 0).is_err(),
        "unknown column accepted",
    )?;
    Ok(format!("copied {copied:.3}, ignored {ignored:.4}, identity permutation 0, repeat bit-identical"))
}

// --------------------------------------------------------------- criterion 10

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let exe = env!("CARGO_BIN_EXE_tabtext");
    let spec = SyntheticSpec {
        name: "det".into(),
        n_rows: 400,
        seed: 10,
        ..SyntheticSpec::default()
    };
    std::fs::write(dir.path().join("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    let status = Command::new(exe)
        .args(["synth", "--spec"])
        .arg(dir.path().join("spec.json"))
        .arg("--out")
        .arg(dir.path().join("data"))
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    check(status.success(), "synth failed")?;
    let config = serde_json::json!({
        "datasets": [{
            "name": "det", "path": "data/train.csv", "test_path": "data/test.csv",
            "target": "label", "task": "binary", "type_overrides": spec.hints()
        }],
        "strategies": ["tab_weighted", "text_net", "fuse_late", "stack_ensemble", "tab_stack_ngram", "pre_embedding"],
        "seeds": [0, 1],
        "net": {"train": {"epochs": 3}}
    });
    std::fs::write(dir.path().join("config.json"), config.to_string()).unwrap();
    let run = |out: &str, workers: &str| -> Result<Vec<u8>, String> {
        let status = Command::new(exe)
            .args(["run", "--config"])
            .arg(dir.path().join("config.json"))
            .arg("--out")
            .arg(dir.path().join(out))
            .args(["--workers", workers])
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        check(status.success(), format!("run {out} exited with {status}"))?;
        std::fs::read(dir.path().join(out).join("results.csv")).map_err(|e| e.to_string())
    };
    let a = run("a", "2")?;
    let b = run("b", "2")?;
    let c = run("c", "1")?;
    check(a == b, "repeated run produced a different results.csv")?;
    check(a == c, "worker count changed results.csv")?;
    let rows = String::from_utf8_lossy(&a).lines().count() - 1;
    check(rows == 12, format!("{rows} result rows, expected 12"))?;
    Ok(format!("3 runs, {} bytes, {rows} rows, byte-identical", a.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("metric oracles", metric_oracles, Duration::from_secs(10)),
        ("ensemble selection", ensemble_selection_quality, Duration::from_secs(120)),
        ("OOF leakage guard", oof_leakage_guard, Duration::from_secs(60)),
        ("gradient checks", gradient_checks, Duration::from_secs(300)),
        ("schedule/decay/averaging", schedule_decay_averaging, Duration::from_secs(60)),
        ("truncation fuzz", truncation_fuzz, Duration::from_secs(60)),
        ("interaction reproduction", interaction_reproduction, Duration::from_secs(15 * 60)),
        ("aggregation ordering", aggregation_ordering, Duration::from_secs(45 * 60)),
        ("permutation importance", permutation_importance_check, Duration::from_secs(60)),
        ("determinism", cli_determinism, Duration::from_secs(15 * 60)),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let result = result.and_then(|d| {
            if took <= *budget {
                Ok(d)
            } else {
                Err(format!("{d}; took {:.0}s, budget {}s", took.as_secs_f64(), budget.as_secs()))
            }
        });
        match result {
            Ok(d) => println!("criterion {n} ({name}): PASS [{:.1}s] {d}", took.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{:.1}s] {d}", took.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

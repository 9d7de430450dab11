//! Executes (dataset, seed, method) cells and writes the results files.
//!
//! For every (dataset, seed) the test rows and the train/validation split
//! are drawn once and shared by all methods, which is checked through a
//! digest of the training row indices recorded in the manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tabtext::evalkit::{score, BenchmarkResult, MetricKind};
use tabtext::frame::{read_csv, split_indices};
use tabtext::rng;
use tabtext::{DataTable, Model, SplitSpec};

use crate::config::{DatasetConfig, RunConfig, StrategyOptions, DEFAULT_TEST_FRACTION};
use crate::strategy::{build_learner, Method, TableProfile};

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_TABLE: &str = "results.txt";
pub const MANIFEST: &str = "manifest.json";
pub const MODELS_DIR: &str = "models";

const TEST_STREAM: u64 = 0x7465_7374;
const VALID_STREAM: u64 = 0x7661_6c69;

/// Version string recorded in manifests.
pub fn version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("TABTEXT_GIT_DESCRIBE"))
}

/// A dataset as read from disk: the rows available for fitting and, when a
/// separate test file exists, the test table.
pub struct Loaded {
    pub config: DatasetConfig,
    pub pool: DataTable,
    pub test: Option<DataTable>,
}

pub fn load_dataset(config: &DatasetConfig) -> Result<Loaded> {
    let read = |path: &Path| -> Result<DataTable> {
        let t = read_csv(path, &config.type_overrides).with_context(|| format!("reading {}", path.display()))?;
        Ok(t.with_name(config.name.clone()).with_target(&config.target, config.task)?)
    };
    let pool = read(&config.path)?;
    let test = match &config.test_path {
        Some(p) => {
            let t = read(p)?;
            if let Some(c) = t.classes().iter().find(|c| !pool.classes().contains(c)) {
                bail!("test file {} has label {c:?} absent from training data", p.display());
            }
            Some(t.with_classes(pool.classes().to_vec()))
        }
        None => None,
    };
    Ok(Loaded {
        config: config.clone(),
        pool,
        test,
    })
}

/// The shared split of one (dataset, seed).
pub struct Prepared {
    pub dataset: String,
    pub seed: u64,
    pub metric: MetricKind,
    pub train: DataTable,
    pub valid: DataTable,
    pub test: DataTable,
    /// Training rows as indices into the loaded training file.
    pub train_rows: Vec<usize>,
    pub profile: TableProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub dataset: String,
    pub seed: u64,
    pub train_rows_hash: String,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
}

impl Prepared {
    pub fn record(&self) -> SplitRecord {
        SplitRecord {
            dataset: self.dataset.clone(),
            seed: self.seed,
            train_rows_hash: rows_hash(&self.train_rows),
            n_train: self.train.n_rows(),
            n_valid: self.valid.n_rows(),
            n_test: self.test.n_rows(),
        }
    }
}

/// SHA-256 over the row indices, hex encoded.
pub fn rows_hash(rows: &[usize]) -> String {
    let mut h = Sha256::new();
    for &r in rows {
        h.update((r as u64).to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

pub fn prepare(loaded: &Loaded, seed: u64, validation_fraction: f64) -> Result<Prepared> {
    let (pool, test, pool_rows) = match &loaded.test {
        Some(t) => (loaded.pool.clone(), t.clone(), (0..loaded.pool.n_rows()).collect::<Vec<_>>()),
        None => {
            let f = loaded.config.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION);
            let (keep, held) =
                split_indices(&loaded.pool, &SplitSpec::new(f, rng::derive_seed(seed, TEST_STREAM), true))?;
            (loaded.pool.take_rows(&keep), loaded.pool.take_rows(&held), keep)
        }
    };
    let (tr, va) = split_indices(
        &pool,
        &SplitSpec::new(validation_fraction, rng::derive_seed(seed, VALID_STREAM), true),
    )?;
    let train = pool.take_rows(&tr);
    Ok(Prepared {
        dataset: loaded.config.name.clone(),
        seed,
        metric: loaded.config.metric(),
        profile: TableProfile::of(&train)?,
        valid: pool.take_rows(&va),
        train,
        test,
        train_rows: tr.iter().map(|&i| pool_rows[i]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum Outcome {
    Scored(f64),
    /// The method does not apply to this dataset.
    Skipped(String),
    /// Fitting or scoring raised an error.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub outcome: Outcome,
}

impl CellResult {
    pub fn score(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Scored(s) => Some(s),
            _ => None,
        }
    }
}

/// Fits `method` on the shared split and returns the model with its score.
pub fn fit_cell(prepared: &Prepared, method: Method, opts: &StrategyOptions) -> Result<(Box<dyn Model>, f64), Outcome> {
    let learner = build_learner(method, prepared.profile, opts).map_err(Outcome::Skipped)?;
    let failed = |e: tabtext::Error| Outcome::Failed(e.to_string());
    let model = learner
        .fit(&prepared.train, Some(&prepared.valid), prepared.seed)
        .map_err(failed)?;
    let preds = model.predict(&prepared.test).map_err(failed)?;
    let y = prepared.test.target_values().map_err(failed)?;
    let s = score(prepared.metric, &preds, &y).map_err(failed)?;
    Ok((model, s))
}

pub fn run_cell(prepared: &Prepared, method: Method, opts: &StrategyOptions) -> CellResult {
    let start = Instant::now();
    let outcome = match fit_cell(prepared, method, opts) {
        Ok((_, s)) => Outcome::Scored(s),
        Err(o) => o,
    };
    log::info!(
        "{} / {} / seed {}: {:?} in {:.1}s",
        prepared.dataset,
        method.id(),
        prepared.seed,
        outcome,
        start.elapsed().as_secs_f64()
    );
    CellResult {
        method: method.id().to_string(),
        dataset: prepared.dataset.clone(),
        seed: prepared.seed,
        outcome,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub cells: Vec<CellResult>,
    pub splits: Vec<SplitRecord>,
    /// Datasets that could not be read or split, with the error.
    pub dataset_errors: Vec<(String, String)>,
}

impl RunReport {
    pub fn score(&self, method: &str, dataset: &str, seed: u64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.dataset == dataset && c.seed == seed)
            .and_then(CellResult::score)
    }
}

/// Runs every (dataset, seed, method) cell with at most `workers` threads.
/// Cell order in the report is dataset, then seed, then method, as given.
pub fn execute(config: &RunConfig, methods: &[Method], workers: usize) -> Result<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| anyhow!("building worker pool: {e}"))?;
    let mut report = RunReport::default();
    let mut prepared = Vec::new();
    for d in &config.datasets {
        let splits = load_dataset(d).and_then(|loaded| {
            config
                .seeds
                .iter()
                .map(|&seed| prepare(&loaded, seed, config.validation_fraction))
                .collect::<Result<Vec<_>>>()
        });
        match splits {
            Ok(p) => prepared.extend(p),
            Err(e) => {
                log::error!("dataset {}: {e:#}", d.name);
                report.dataset_errors.push((d.name.clone(), format!("{e:#}")));
            }
        }
    }
    report.splits = prepared.iter().map(Prepared::record).collect();
    let jobs: Vec<(&Prepared, Method)> = prepared
        .iter()
        .flat_map(|p| methods.iter().map(move |&m| (p, m)))
        .collect();
    report.cells = pool.install(|| {
        jobs.par_iter()
            .map(|(p, m)| run_cell(p, *m, &config.options))
            .collect()
    });
    Ok(report)
}

/// Writes the per-seed results CSV with columns
/// `method,dataset,seed,score,status,reason`.
pub fn write_results_csv<W: std::io::Write>(cells: &[CellResult], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["method", "dataset", "seed", "score", "status", "reason"])?;
    for c in cells {
        let (score, status, reason) = match &c.outcome {
            Outcome::Scored(s) => (format!("{s}"), "ok", String::new()),
            Outcome::Skipped(r) => (String::new(), "skipped", r.clone()),
            Outcome::Failed(r) => (String::new(), "failed", r.clone()),
        };
        wtr.write_record([c.method.as_str(), c.dataset.as_str(), &c.seed.to_string(), &score, status, &reason])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<CellResult>> {
    #[derive(Deserialize)]
    struct Row {
        method: String,
        dataset: String,
        seed: u64,
        score: Option<f64>,
        status: String,
        reason: String,
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cells = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        let outcome = match (r.status.as_str(), r.score) {
            ("ok", Some(s)) => Outcome::Scored(s),
            ("skipped", None) => Outcome::Skipped(r.reason),
            ("failed", None) => Outcome::Failed(r.reason),
            (status, _) => bail!("row {}/{}/{}: inconsistent status {status:?}", r.method, r.dataset, r.seed),
        };
        cells.push(CellResult {
            method: r.method,
            dataset: r.dataset,
            seed: r.seed,
            outcome,
        });
    }
    Ok(cells)
}

/// Renders one table per seed plus a table of per-dataset means over seeds.
/// Methods missing any score are left out of a table and listed below it,
/// since aggregation needs every (method, dataset) cell.
pub fn render_report(cells: &[CellResult]) -> Result<String> {
    let mut methods: Vec<&str> = Vec::new();
    let mut datasets: Vec<&str> = Vec::new();
    let mut seeds: Vec<u64> = Vec::new();
    for c in cells {
        if !methods.contains(&c.method.as_str()) {
            methods.push(&c.method);
        }
        if !datasets.contains(&c.dataset.as_str()) {
            datasets.push(&c.dataset);
        }
        if !seeds.contains(&c.seed) {
            seeds.push(c.seed);
        }
    }
    let lookup: BTreeMap<(&str, &str, u64), Option<f64>> = cells
        .iter()
        .map(|c| ((c.method.as_str(), c.dataset.as_str(), c.seed), c.score()))
        .collect();

    let table = |title: &str, value: &dyn Fn(&str, &str) -> Option<f64>| -> Result<String> {
        let mut result = BenchmarkResult::new();
        let mut excluded = Vec::new();
        for &m in &methods {
            let scores: Option<Vec<f64>> = datasets.iter().map(|&d| value(m, d)).collect();
            match scores {
                Some(s) => {
                    for (&d, v) in datasets.iter().zip(s) {
                        result.insert(m, d, v);
                    }
                }
                None => excluded.push(m),
            }
        }
        let mut out = format!("== {title} ==\n");
        if result.methods().is_empty() {
            out.push_str("(no method scored on every dataset)\n");
        } else {
            out.push_str(&result.render_table()?);
        }
        if !excluded.is_empty() {
            out.push_str(&format!("not aggregated (missing cells): {}\n", excluded.join(", ")));
        }
        Ok(out)
    };

    let mut out = String::new();
    for &seed in &seeds {
        out.push_str(&table(&format!("seed {seed}"), &|m, d| lookup.get(&(m, d, seed)).copied().flatten())?);
        out.push('\n');
    }
    out.push_str(&table(&format!("mean over {} seed(s)", seeds.len()), &|m, d| {
        let v: Option<Vec<f64>> = seeds.iter().map(|&s| lookup.get(&(m, d, s)).copied().flatten()).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    })?);
    Ok(out)
}

/// Everything needed to refit one cell's model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub version: String,
    pub dataset: DatasetConfig,
    pub method: Method,
    pub seed: u64,
    pub validation_fraction: f64,
    pub options: StrategyOptions,
    pub split: SplitRecord,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub splits: Vec<SplitRecord>,
    pub dataset_errors: Vec<(String, String)>,
    pub models: Vec<PathBuf>,
}

pub fn model_manifest_name(dataset: &str, method: &str, seed: u64) -> String {
    format!("{dataset}__{method}__seed{seed}.json")
}

/// Runs the config and writes the results CSV, the rendered table, the run
/// manifest and one model manifest per cell into `out`.
pub fn run(config: &RunConfig, out: &Path, workers: usize) -> Result<RunReport> {
    let methods: Vec<Method> = config.strategies.iter().map(|&s| s.into()).collect();
    let report = execute(config, &methods, workers)?;
    fs::create_dir_all(out.join(MODELS_DIR)).with_context(|| format!("creating {}", out.display()))?;

    write_results_csv(&report.cells, fs::File::create(out.join(RESULTS_CSV))?)?;
    let mut text = render_report(&report.cells)?;
    for (d, e) in &report.dataset_errors {
        text.push_str(&format!("dataset {d} failed: {e}\n"));
    }
    fs::write(out.join(RESULTS_TABLE), text)?;

    let mut models = Vec::new();
    for cell in &report.cells {
        let split = report
            .splits
            .iter()
            .find(|s| s.dataset == cell.dataset && s.seed == cell.seed)
            .expect("every cell has a split")
            .clone();
        let dataset = config
            .datasets
            .iter()
            .find(|d| d.name == cell.dataset)
            .expect("every cell has a dataset")
            .clone();
        let method = *methods.iter().find(|m| m.id() == cell.method).expect("known method");
        let manifest = ModelManifest {
            version: version(),
            dataset,
            method,
            seed: cell.seed,
            validation_fraction: config.validation_fraction,
            options: config.options.clone(),
            split,
            outcome: cell.outcome.clone(),
        };
        let rel = PathBuf::from(MODELS_DIR).join(model_manifest_name(&cell.dataset, &cell.method, cell.seed));
        fs::write(out.join(&rel), serde_json::to_string_pretty(&manifest)?)?;
        models.push(rel);
    }
    let manifest = RunManifest {
        version: version(),
        config: config.clone(),
        splits: report.splits.clone(),
        dataset_errors: report.dataset_errors.clone(),
        models,
    };
    fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(report)
}

/// Refits the model a manifest describes, checking that the recreated
/// training rows match the recorded digest.
pub fn refit(manifest: &ModelManifest) -> Result<Box<dyn Model>> {
    let loaded = load_dataset(&manifest.dataset)?;
    let prepared = prepare(&loaded, manifest.seed, manifest.validation_fraction)?;
    let digest = rows_hash(&prepared.train_rows);
    if digest != manifest.split.train_rows_hash {
        bail!(
            "training rows differ from the manifest (digest {digest}, recorded {})",
            manifest.split.train_rows_hash
        );
    }
    match fit_cell(&prepared, manifest.method, &manifest.options) {
        Ok((model, _)) => Ok(model),
        Err(Outcome::Skipped(r)) => bail!("method skipped: {r}"),
        Err(Outcome::Failed(r)) => bail!("fit failed: {r}"),
        Err(Outcome::Scored(_)) => unreachable!("errors never carry scores"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(method: &str, dataset: &str, seed: u64, outcome: Outcome) -> CellResult {
        CellResult {
            method: method.into(),
            dataset: dataset.into(),
            seed,
            outcome,
        }
    }

    #[test]
    fn results_csv_round_trip() {
        let cells = vec![
            cell("a", "d", 0, Outcome::Scored(0.75)),
            cell("b", "d", 0, Outcome::Skipped("table has no text columns".into())),
            cell("c", "d", 0, Outcome::Failed("boom, again".into())),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results_csv(&cells, fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(read_results_csv(&path).unwrap(), cells);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("method,dataset,seed,score,status,reason\n"));
        assert!(text.contains("b,d,0,,skipped,table has no text columns"));
    }

    #[test]
    fn report_excludes_holes_and_averages_seeds() {
        let cells = vec![
            cell("a", "d", 0, Outcome::Scored(0.5)),
            cell("a", "d", 1, Outcome::Scored(0.7)),
            cell("b", "d", 0, Outcome::Scored(0.9)),
            cell("b", "d", 1, Outcome::Skipped("no text".into())),
        ];
        let text = render_report(&cells).unwrap();
        assert!(text.contains("== mean over 2 seed(s) =="));
        let mean = text.split("== mean").nth(1).unwrap();
        assert!(mean.contains("0.6"), "{mean}");
        assert!(mean.contains("not aggregated (missing cells): b"));
    }

    #[test]
    fn rows_hash_depends_on_rows() {
        assert_eq!(rows_hash(&[1, 2, 3]), rows_hash(&[1, 2, 3]));
        assert_ne!(rows_hash(&[1, 2, 3]), rows_hash(&[1, 2, 4]));
        assert_eq!(rows_hash(&[]).len(), 64);
    }
}

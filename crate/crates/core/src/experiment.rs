//! End-to-end orchestration: ingest → split → balance → impute → train →
//! evaluate, and the on-disk layout of a run directory.
//!
//! ```text
//! <output>/
//!   run_manifest.json       config, corpus hash, sha256 of every file below
//!   split.json              train/test case ids
//!   balanced_sets.json      balanced set ids per authority
//!   propensity.json         fitted propensity model (when obs_ip runs)
//!   datasets/<method>_set<i>.jsonl
//!   models/<method>_set<i>.json
//!   results.csv
//!   predictions.csv
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{self, LinearModel, TrainConfig, TrainOutcome};
use crate::corpus::{
    self, balanced_resample, head_tail_truncate, temporal_split, tokenize, vectorize, Authority, BalancedSet,
    CaseRecord, DocumentFrequency, SplitCorpus,
};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvaluationReport, PredictionRow};
use crate::imputation::{self, FeaturizedCase, ImputeOptions, ImputedDataset, MethodId, PropensityModel};
use crate::parallel::Strategy;

pub const RESULTS_FILE: &str = "results.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub output: PathBuf,
    pub cutoff_year: i32,
    /// Number of balanced training sets per authority.
    pub k: usize,
    pub dimension: usize,
    pub truncation_limit: usize,
    pub head_fraction: f64,
    pub methods: Vec<MethodId>,
    pub seed: u64,
    pub include_determinate: bool,
    pub normalize_ip_weights: bool,
    pub clip_min: f64,
    pub threshold: f64,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: PathBuf::new(),
            output: PathBuf::new(),
            cutoff_year: 2015,
            k: 7,
            dimension: corpus::DEFAULT_DIMENSION,
            truncation_limit: corpus::DEFAULT_TRUNCATION_LIMIT,
            head_fraction: corpus::DEFAULT_HEAD_FRACTION,
            methods: MethodId::ALL.to_vec(),
            seed: 0,
            include_determinate: true,
            normalize_ip_weights: false,
            clip_min: 0.01,
            threshold: evaluation::DEFAULT_THRESHOLD,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.truncation_limit < 2 {
            return Err(Error::Config("truncation_limit must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.head_fraction) {
            return Err(Error::Config("head_fraction must lie in [0, 1]".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("methods contain duplicates".into()));
        }
        if !(self.clip_min > 0.0 && self.clip_min <= 1.0) {
            return Err(Error::Config("clip_min must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must lie in [0, 1]".into()));
        }
        self.train.validate()
    }

    pub fn impute_options(&self) -> ImputeOptions {
        ImputeOptions {
            include_determinate: self.include_determinate,
            normalize_ip_weights: self.normalize_ip_weights,
            clip_min: self.clip_min,
        }
    }

    fn needs_indeterminate(&self) -> bool {
        self.methods.iter().any(|m| !m.is_observed_only())
    }
}

/// Split corpus with a feature vector for every case.
pub struct Featurized {
    pub split: SplitCorpus,
    pub cases: HashMap<String, FeaturizedCase>,
}

impl Featurized {
    pub fn features(&self) -> HashMap<String, Arc<corpus::FeatureVector>> {
        self.cases
            .iter()
            .map(|(id, c)| (id.clone(), Arc::clone(&c.features)))
            .collect()
    }

    fn lookup<'a>(&'a self, ids: &[String]) -> Result<Vec<&'a FeaturizedCase>> {
        ids.iter()
            .map(|id| {
                self.cases.get(id).ok_or_else(|| Error::UnknownCase {
                    id: id.clone(),
                    available: self.cases.len(),
                })
            })
            .collect()
    }
}


/// Temporal split, then tokenization, head-tail truncation and TF-IDF
/// vectorization with document frequencies from the training split.
pub fn featurize(records: &[CaseRecord], config: &ExperimentConfig, strategy: Strategy) -> Result<Featurized> {
    let split = temporal_split(records, config.cutoff_year);
    let all: Vec<&CaseRecord> = split.train.iter().chain(&split.test).collect();
    let tokens: Vec<Vec<String>> = strategy
        .map(&all, |c| head_tail_truncate(&tokenize(&c.text), config.truncation_limit, config.head_fraction))
        .into_iter()
        .collect::<Result<_>>()
        .map_err(Error::in_stage("preprocess"))?;
    let stats = DocumentFrequency::fit(tokens[..split.train.len()].iter().map(Vec::as_slice), config.dimension)
        .map_err(Error::in_stage("vectorize"))?;
    let vectors = strategy.map(&tokens, |t| vectorize(t, &stats));
    let cases = all
        .into_iter()
        .zip(vectors)
        .map(|(c, v)| {
            (
                c.id.clone(),
                FeaturizedCase {
                    record: c.clone(),
                    features: Arc::new(v),
                },
            )
        })
        .collect();
    Ok(Featurized { split, cases })
}

/// Everything the training grid needs.
pub struct Prepared {
    pub data: Featurized,
    pub balanced_determinate: Vec<BalancedSet>,
    /// Empty when only observed-only methods run.
    pub balanced_indeterminate: Vec<BalancedSet>,
    pub propensity: Option<PropensityModel>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedManifest {
    pub determinate: Vec<BalancedSet>,
    pub indeterminate: Vec<BalancedSet>,
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn prepare(records: &[CaseRecord], config: &ExperimentConfig, strategy: Strategy) -> Result<Prepared> {
    config.validate()?;
    let data = featurize(records, config, strategy)?;
    let balanced_determinate =
        balanced_resample(data.split.train_of(Authority::Determinate), config.k, derived_seed(config.seed, 1))
            .map_err(Error::in_stage("balance determinate pool"))?;
    let balanced_indeterminate = if config.needs_indeterminate() {
        balanced_resample(data.split.train_of(Authority::Indeterminate), config.k, derived_seed(config.seed, 2))
            .map_err(Error::in_stage("balance indeterminate pool"))?
    } else {
        Vec::new()
    };
    let propensity = if config.methods.contains(&MethodId::ObsIp) {
        let pool: Vec<&FeaturizedCase> = data.lookup(&data.split.manifest().train)?;
        Some(imputation::fit_propensity(&pool, &config.train, config.clip_min).map_err(Error::in_stage("propensity"))?)
    } else {
        None
    };
    Ok(Prepared {
        data,
        balanced_determinate,
        balanced_indeterminate,
        propensity,
    })
}

impl Prepared {
    pub fn balanced_manifest(&self) -> BalancedManifest {
        BalancedManifest {
            determinate: self.balanced_determinate.clone(),
            indeterminate: self.balanced_indeterminate.clone(),
        }
    }
}

pub struct GridCell {
    pub dataset: ImputedDataset,
    pub outcome: TrainOutcome,
}

impl GridCell {
    pub fn model(&self) -> &LinearModel {
        &self.outcome.model
    }
}

/// Imputes and trains every (method, set) cell, ordered by configured
/// method then set index.
pub fn train_grid(prepared: &Prepared, config: &ExperimentConfig, strategy: Strategy) -> Result<Vec<GridCell>> {
    let options = config.impute_options();
    let cells: Vec<(MethodId, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| (0..config.k).map(move |i| (m, i)))
        .collect();
    // Parallelism goes to the grid; each cell trains sequentially.
    let results = strategy.map(&cells, |&(method, set_index)| -> Result<GridCell> {
        let determinate = prepared.data.lookup(&prepared.balanced_determinate[set_index].case_ids)?;
        let indeterminate = match prepared.balanced_indeterminate.get(set_index) {
            Some(set) => prepared.data.lookup(&set.case_ids)?,
            None => Vec::new(),
        };
        let dataset = imputation::run_method(
            method,
            set_index,
            &indeterminate,
            &determinate,
            prepared.propensity.as_ref(),
            &options,
        )
        .map_err(Error::in_stage("impute"))?;
        let outcome = classifier::train_with(&dataset.instances, &config.train, Strategy::Sequential)
            .map_err(Error::in_stage("train"))?;
        Ok(GridCell { dataset, outcome })
    });
    results.into_iter().collect()
}

/// Predicts every test case with every model, in model order then file order.
pub fn predict_test(
    data: &Featurized,
    models: &[(MethodId, usize, &LinearModel)],
    strategy: Strategy,
) -> Result<Vec<PredictionRow>> {
    let per_model = strategy.map(models, |&(method, set_index, model)| -> Result<Vec<PredictionRow>> {
        data.split
            .test
            .iter()
            .map(|c| {
                Ok(PredictionRow {
                    method,
                    set_index,
                    case_id: c.id.clone(),
                    prediction: classifier::predict(model, &data.cases[&c.id].features)?,
                    label: c.outcome,
                    authority: c.authority,
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_model {
        rows.extend(r.map_err(Error::in_stage("predict"))?);
    }
    Ok(rows)
}

/// Reports in configured method order, determinate test set first. Test
/// sets without cases are omitted.
pub fn evaluate(rows: &[PredictionRow], config: &ExperimentConfig) -> Result<Vec<EvaluationReport>> {
    let reports = evaluation::evaluate_rows(rows, config.threshold).map_err(Error::in_stage("evaluate"))?;
    let mut by_key: BTreeMap<(MethodId, Authority), EvaluationReport> =
        reports.into_iter().map(|r| ((r.method, r.test_set), r)).collect();
    Ok(config
        .methods
        .iter()
        .flat_map(|&m| Authority::ALL.map(|a| (m, a)))
        .filter_map(|key| by_key.remove(&key))
        .collect())
}

/// Content hashes of everything a run wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub corpus_sha256: String,
    pub files: BTreeMap<String, String>,
}

pub struct RunSummary {
    pub split: Vec<corpus::AuthoritySummary>,
    pub balanced_sizes: (usize, usize),
    pub models: usize,
    pub reports: Vec<EvaluationReport>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn model_path(dir: &Path, method: MethodId, set_index: usize) -> PathBuf {
    dir.join("models").join(format!("{method}_set{set_index}.json"))
}

pub fn dataset_path(dir: &Path, method: MethodId, set_index: usize) -> PathBuf {
    dir.join("datasets").join(format!("{method}_set{set_index}.jsonl"))
}

fn read_corpus(config: &ExperimentConfig) -> Result<(Vec<CaseRecord>, String)> {
    let path = &config.corpus;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e)).map_err(Error::in_stage("ingest"))?;
    let records = corpus::parse_corpus_reader(bytes.as_slice())
        .map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
        .map_err(Error::in_stage("ingest"))?;
    Ok((records, sha256_hex(&bytes)))
}

/// Runs the whole grid on the corpus named in `config` and writes the run directory.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    run_with(config, Strategy::default())
}

pub fn run_with(config: &ExperimentConfig, strategy: Strategy) -> Result<RunSummary> {
    config.validate()?;
    let (records, corpus_sha256) = read_corpus(config)?;
    let prepared = prepare(&records, config, strategy)?;
    let cells = train_grid(&prepared, config, strategy)?;

    let out = &config.output;
    let write = Error::in_stage("write outputs");
    create_dir(&out.join("models")).map_err(write)?;
    create_dir(&out.join("datasets")).map_err(Error::in_stage("write outputs"))?;
    write_outputs(out, config, &prepared, &cells).map_err(Error::in_stage("write outputs"))?;

    let models: Vec<(MethodId, usize, &LinearModel)> = cells
        .iter()
        .map(|c| (c.dataset.method, c.dataset.set_index, c.model()))
        .collect();
    let rows = predict_test(&prepared.data, &models, strategy)?;
    let reports = evaluate(&rows, config)?;
    write_tables(out, &rows, &reports).map_err(Error::in_stage("write outputs"))?;
    write_manifest(out, config, corpus_sha256).map_err(Error::in_stage("write manifest"))?;

    Ok(RunSummary {
        split: prepared.data.split.summary(),
        balanced_sizes: (
            prepared.balanced_determinate.first().map_or(0, |s| s.case_ids.len()),
            prepared.balanced_indeterminate.first().map_or(0, |s| s.case_ids.len()),
        ),
        models: cells.len(),
        reports,
    })
}

fn write_outputs(out: &Path, config: &ExperimentConfig, prepared: &Prepared, cells: &[GridCell]) -> Result<()> {
    write_json(&out.join("split.json"), &prepared.data.split.manifest())?;
    write_json(&out.join("balanced_sets.json"), &prepared.balanced_manifest())?;
    if let Some(p) = &prepared.propensity {
        write_json(&out.join("propensity.json"), p)?;
    }
    for cell in cells {
        let (m, i) = (cell.dataset.method, cell.dataset.set_index);
        cell.dataset.write_jsonl(dataset_path(out, m, i), config.seed)?;
        write_json(&model_path(out, m, i), cell.model())?;
    }
    Ok(())
}

fn write_tables(out: &Path, rows: &[PredictionRow], reports: &[EvaluationReport]) -> Result<()> {
    evaluation::write_predictions_csv(out.join(PREDICTIONS_FILE), rows)?;
    evaluation::write_results_csv(out.join(RESULTS_FILE), reports)
}

fn write_manifest(out: &Path, config: &ExperimentConfig, corpus_sha256: String) -> Result<()> {
    let mut files = BTreeMap::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                let rel = path.strip_prefix(out).expect("walked from out").to_string_lossy().replace('\\', "/");
                files.insert(rel, sha256_file(&path)?);
            }
        }
    }
    write_json(
        &out.join(MANIFEST_FILE),
        &RunManifest {
            config: config.clone(),
            seed: config.seed,
            corpus_sha256,
            files,
        },
    )
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest> {
    let path = run_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| Error::IncompleteRun(format!("{} is missing", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Recomputes `predictions.csv` and `results.csv` from the saved models of a run.
pub fn eval_run(run_dir: &Path) -> Result<Vec<EvaluationReport>> {
    let manifest = read_manifest(run_dir)?;
    let config = ExperimentConfig {
        output: run_dir.to_path_buf(),
        ..manifest.config
    };
    let (records, digest) = read_corpus(&config)?;
    if digest != manifest.corpus_sha256 {
        return Err(Error::IncompleteRun(format!(
            "corpus {} changed since the run was recorded",
            config.corpus.display()
        )));
    }
    let strategy = Strategy::default();
    let data = featurize(&records, &config, strategy)?;
    let mut models = Vec::new();
    for &method in &config.methods {
        for set_index in 0..config.k {
            let path = model_path(run_dir, method, set_index);
            let text = std::fs::read_to_string(&path)
                .map_err(|_| Error::IncompleteRun(format!("model {} is missing", path.display())))?;
            models.push((method, set_index, serde_json::from_str::<LinearModel>(&text)?));
        }
    }
    let refs: Vec<(MethodId, usize, &LinearModel)> = models.iter().map(|(m, i, model)| (*m, *i, model)).collect();
    let rows = predict_test(&data, &refs, strategy)?;
    let reports = evaluate(&rows, &config)?;
    write_tables(run_dir, &rows, &reports).map_err(Error::in_stage("write outputs"))?;
    Ok(reports)
}

/// Case × method table of mean predictions read from a run's `predictions.csv`.
pub fn compare_run(run_dir: &Path, case_ids: &[String]) -> Result<Vec<evaluation::CaseComparison>> {
    let path = run_dir.join(PREDICTIONS_FILE);
    if !path.exists() {
        return Err(Error::IncompleteRun(format!("{} is missing", path.display())));
    }
    let rows = evaluation::read_predictions_csv(&path)?;
    evaluation::compare_cases(case_ids, &rows)
}

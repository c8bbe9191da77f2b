//! The nine label-imputation strategies.
//!
//! Every strategy maps the indeterminate and determinate cases of one
//! balanced training set to weighted soft-target instances. Determinate
//! cases always keep their outcome as target; only `obs_ip` reweights them.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, LinearModel, TrainConfig};
use crate::corpus::{Authority, CaseRecord, FeatureVector};
use crate::error::{Error, Result};
use crate::parallel::Strategy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    Corr,
    Obs,
    ObsIp,
    Nn,
    ExpAll,
    ExpAvg,
    ExpMax,
    ExpMin,
    ExpAgr,
}

impl MethodId {
    pub const ALL: [MethodId; 9] = [
        MethodId::Corr,
        MethodId::Obs,
        MethodId::ObsIp,
        MethodId::Nn,
        MethodId::ExpAll,
        MethodId::ExpAvg,
        MethodId::ExpMax,
        MethodId::ExpMin,
        MethodId::ExpAgr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Corr => "corr",
            MethodId::Obs => "obs",
            MethodId::ObsIp => "obs_ip",
            MethodId::Nn => "nn",
            MethodId::ExpAll => "exp_all",
            MethodId::ExpAvg => "exp_avg",
            MethodId::ExpMax => "exp_max",
            MethodId::ExpMin => "exp_min",
            MethodId::ExpAgr => "exp_agr",
        }
    }

    /// Methods that train on determinate cases only.
    pub fn is_observed_only(self) -> bool {
        matches!(self, MethodId::Obs | MethodId::ObsIp)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown imputation method `{s}`")))
    }
}

/// A case together with its feature vector.
#[derive(Clone, Debug)]
pub struct FeaturizedCase {
    pub record: CaseRecord,
    pub features: Arc<FeatureVector>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedInstance {
    pub case_id: String,
    pub features: Arc<FeatureVector>,
    pub target: f64,
    pub weight: f64,
    /// Position of the vote an `exp_all` duplicate was made from; 0 otherwise.
    pub replica_index: usize,
}

impl WeightedInstance {
    fn of(case: &FeaturizedCase, target: f64) -> Self {
        WeightedInstance {
            case_id: case.record.id.clone(),
            features: Arc::clone(&case.features),
            target,
            weight: 1.0,
            replica_index: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImputedDataset {
    pub method: MethodId,
    pub set_index: usize,
    pub instances: Vec<WeightedInstance>,
}

fn outcome(case: &FeaturizedCase) -> f64 {
    f64::from(case.record.outcome)
}

fn votes(case: &FeaturizedCase) -> Result<&[u8]> {
    match &case.record.votes {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::MissingVotes(case.record.id.clone())),
    }
}

fn passthrough<'a>(determinate: &'a [&'a FeaturizedCase]) -> impl Iterator<Item = WeightedInstance> + 'a {
    determinate.iter().map(|c| WeightedInstance::of(c, outcome(c)))
}

/// Indeterminate labels are taken at face value.
pub fn impute_corr(indeterminate: &[&FeaturizedCase], determinate: &[&FeaturizedCase]) -> Vec<WeightedInstance> {
    indeterminate
        .iter()
        .map(|c| WeightedInstance::of(c, outcome(c)))
        .chain(passthrough(determinate))
        .collect()
}

/// Indeterminate cases are dropped.
pub fn impute_obs(_indeterminate: &[&FeaturizedCase], determinate: &[&FeaturizedCase]) -> Result<Vec<WeightedInstance>> {
    if determinate.is_empty() {
        return Err(Error::EmptyDeterminate);
    }
    Ok(passthrough(determinate).collect())
}

/// Logistic model of `P(authority = determinate | features)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub model: LinearModel,
    pub clip_min: f64,
    /// Mean clipped propensity over the fitting pool, per authority.
    pub mean_determinate: f64,
    pub mean_indeterminate: f64,
}

impl PropensityModel {
    /// Estimated propensity clipped to `[clip_min, 1]`.
    pub fn propensity(&self, features: &FeatureVector) -> Result<f64> {
        Ok(classifier::predict(&self.model, features)?.max(self.clip_min))
    }

    pub fn weight(&self, features: &FeatureVector) -> Result<f64> {
        Ok(1.0 / self.propensity(features)?)
    }
}

pub fn fit_propensity(pool: &[&FeaturizedCase], config: &TrainConfig, clip_min: f64) -> Result<PropensityModel> {
    if !(clip_min > 0.0 && clip_min <= 1.0) {
        return Err(Error::Config(format!("clip_min must lie in (0, 1], got {clip_min}")));
    }
    let is_det = |c: &&FeaturizedCase| c.record.authority == Authority::Determinate;
    if !pool.iter().any(is_det) || pool.iter().all(is_det) {
        return Err(Error::SingleAuthority);
    }
    let instances: Vec<WeightedInstance> = pool
        .iter()
        .map(|c| WeightedInstance::of(c, if is_det(c) { 1.0 } else { 0.0 }))
        .collect();
    let model = classifier::train(&instances, config)?.model;
    let mut fitted = PropensityModel {
        model,
        clip_min,
        mean_determinate: 0.0,
        mean_indeterminate: 0.0,
    };
    let (mut sums, mut counts) = ([0.0; 2], [0usize; 2]);
    for c in pool {
        let slot = usize::from(!is_det(c));
        sums[slot] += fitted.propensity(&c.features)?;
        counts[slot] += 1;
    }
    fitted.mean_determinate = sums[0] / counts[0] as f64;
    fitted.mean_indeterminate = sums[1] / counts[1] as f64;
    Ok(fitted)
}

/// Determinate cases only, each weighted by its inverse clipped propensity.
/// With `normalize`, weights are rescaled to mean 1.
pub fn impute_obs_ip(
    indeterminate: &[&FeaturizedCase],
    determinate: &[&FeaturizedCase],
    propensity: &PropensityModel,
    normalize: bool,
) -> Result<Vec<WeightedInstance>> {
    let mut out = impute_obs(indeterminate, determinate)?;
    for (inst, case) in out.iter_mut().zip(determinate) {
        inst.weight = propensity.weight(&case.features)?;
    }
    if normalize {
        let mean = out.iter().map(|i| i.weight).sum::<f64>() / out.len() as f64;
        for inst in &mut out {
            inst.weight /= mean;
        }
    }
    Ok(out)
}

/// Most similar determinate case by dot product; ties go to the smallest id.
pub fn nearest_determinate<'a>(query: &FeatureVector, determinate: &[&'a FeaturizedCase]) -> Option<&'a FeaturizedCase> {
    let mut best: Option<(&FeaturizedCase, f64)> = None;
    for &cand in determinate {
        let sim = query.dot(&cand.features);
        best = match best {
            Some((b, s)) if s > sim || (s == sim && b.record.id <= cand.record.id) => Some((b, s)),
            _ => Some((cand, sim)),
        };
    }
    best.map(|(c, _)| c)
}

/// Each indeterminate case takes the outcome of its nearest determinate case.
pub fn impute_nn(indeterminate: &[&FeaturizedCase], determinate: &[&FeaturizedCase]) -> Result<Vec<WeightedInstance>> {
    impute_nn_with(indeterminate, determinate, Strategy::default())
}

pub fn impute_nn_with(
    indeterminate: &[&FeaturizedCase],
    determinate: &[&FeaturizedCase],
    strategy: Strategy,
) -> Result<Vec<WeightedInstance>> {
    if determinate.is_empty() {
        return Err(Error::EmptyDeterminate);
    }
    let labels = strategy.map(indeterminate, |c| {
        let nearest = nearest_determinate(&c.features, determinate).expect("determinate set is non-empty");
        outcome(nearest)
    });
    Ok(indeterminate
        .iter()
        .zip(labels)
        .map(|(c, y)| WeightedInstance::of(c, y))
        .chain(passthrough(determinate))
        .collect())
}

/// One instance per vote, each weighted `1/n`.
pub fn impute_exp_all(indeterminate: &[&FeaturizedCase], determinate: &[&FeaturizedCase]) -> Result<Vec<WeightedInstance>> {
    let mut out = Vec::new();
    for c in indeterminate {
        let votes = votes(c)?;
        let weight = 1.0 / votes.len() as f64;
        for (j, &v) in votes.iter().enumerate() {
            out.push(WeightedInstance {
                weight,
                replica_index: j,
                ..WeightedInstance::of(c, f64::from(v))
            });
        }
    }
    out.extend(passthrough(determinate));
    Ok(out)
}

fn aggregate_votes(
    indeterminate: &[&FeaturizedCase],
    determinate: &[&FeaturizedCase],
    rule: impl Fn(&[u8]) -> Option<f64>,
) -> Result<Vec<WeightedInstance>> {
    let mut out = Vec::with_capacity(indeterminate.len() + determinate.len());
    for c in indeterminate {
        if let Some(target) = rule(votes(c)?) {
            out.push(WeightedInstance::of(c, target));
        }
    }
    out.extend(passthrough(determinate));
    Ok(out)
}

/// Target is the fraction of votes for a violation.
pub fn impute_exp_avg(indeterminate: &[&FeaturizedCase], determinate: &[&FeaturizedCase]) -> Result<Vec<WeightedInstance>> {
    aggregate_votes(indeterminate, determinate, |v| {
        Some(v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64)
    })
}

/// Violation if any vote is for a violation.
pub fn impute_exp_max(indeterminate: &[&FeaturizedCase], determinate: &[&FeaturizedCase]) -> Result<Vec<WeightedInstance>> {
    aggregate_votes(indeterminate, determinate, |v| v.iter().max().map(|&x| f64::from(x)))
}

/// Non-violation if any vote is against a violation.
pub fn impute_exp_min(indeterminate: &[&FeaturizedCase], determinate: &[&FeaturizedCase]) -> Result<Vec<WeightedInstance>> {
    aggregate_votes(indeterminate, determinate, |v| v.iter().min().map(|&x| f64::from(x)))
}

/// Keeps only unanimous panels.
pub fn impute_exp_agr(indeterminate: &[&FeaturizedCase], determinate: &[&FeaturizedCase]) -> Result<Vec<WeightedInstance>> {
    aggregate_votes(indeterminate, determinate, |v| {
        v.iter().all(|&x| x == v[0]).then(|| f64::from(v[0]))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeOptions {
    /// Add the balanced determinate set to the corr, nn and expert methods.
    pub include_determinate: bool,
    pub normalize_ip_weights: bool,
    pub clip_min: f64,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        ImputeOptions {
            include_determinate: true,
            normalize_ip_weights: false,
            clip_min: 0.01,
        }
    }
}

/// Applies `method` to the paired balanced sets with index `set_index`.
/// `propensity` is required by `obs_ip` only.
pub fn run_method(
    method: MethodId,
    set_index: usize,
    indeterminate: &[&FeaturizedCase],
    determinate: &[&FeaturizedCase],
    propensity: Option<&PropensityModel>,
    options: &ImputeOptions,
) -> Result<ImputedDataset> {
    let mut instances = match method {
        MethodId::Corr => impute_corr(indeterminate, determinate),
        MethodId::Obs => impute_obs(indeterminate, determinate)?,
        MethodId::ObsIp => {
            let propensity = propensity.ok_or_else(|| Error::Config("obs_ip requires a fitted propensity model".into()))?;
            impute_obs_ip(indeterminate, determinate, propensity, options.normalize_ip_weights)?
        }
        MethodId::Nn => impute_nn(indeterminate, determinate)?,
        MethodId::ExpAll => impute_exp_all(indeterminate, determinate)?,
        MethodId::ExpAvg => impute_exp_avg(indeterminate, determinate)?,
        MethodId::ExpMax => impute_exp_max(indeterminate, determinate)?,
        MethodId::ExpMin => impute_exp_min(indeterminate, determinate)?,
        MethodId::ExpAgr => impute_exp_agr(indeterminate, determinate)?,
    };
    if !options.include_determinate && !method.is_observed_only() {
        let keep: std::collections::HashSet<&str> = indeterminate.iter().map(|c| c.record.id.as_str()).collect();
        instances.retain(|i| keep.contains(i.case_id.as_str()));
    }
    Ok(ImputedDataset {
        method,
        set_index,
        instances,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub method: MethodId,
    pub set_index: usize,
    pub seed: u64,
    pub instances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub case_id: String,
    pub target: f64,
    pub weight: f64,
    pub replica: usize,
}

impl ImputedDataset {
    pub fn header(&self, seed: u64) -> DatasetHeader {
        DatasetHeader {
            method: self.method,
            set_index: self.set_index,
            seed,
            instances: self.instances.len(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = InstanceRecord> + '_ {
        self.instances.iter().map(|i| InstanceRecord {
            case_id: i.case_id.clone(),
            target: i.target,
            weight: i.weight,
            replica: i.replica_index,
        })
    }

    /// Header object on the first line, then one instance per line.
    pub fn write_jsonl(&self, path: impl AsRef<Path>, seed: u64) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, &self.header(seed))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        for r in self.records() {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn read_dataset_jsonl(path: impl AsRef<Path>) -> Result<(DatasetHeader, Vec<InstanceRecord>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::MalformedLine { line: 1, message: "missing dataset header".into() })?
        .map_err(|e| Error::io(path, e))?;
    let header: DatasetHeader =
        serde_json::from_str(&first).map_err(|e| Error::MalformedLine { line: 1, message: e.to_string() })?;
    let mut records = Vec::with_capacity(header.instances);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        records.push(
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine { line: i + 2, message: e.to_string() })?,
        );
    }
    Ok((header, records))
}

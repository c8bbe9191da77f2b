//! Selective-labels worlds with known counterfactual outcomes.
//!
//! Each case has latent features `x ~ N(0, I)` and a latent score `u·x` for a
//! fixed random unit vector `u`. The determinate authority's outcome (the
//! counterfactual for cases it never saw) is `1[u·x + ε > 0]` with logistic
//! noise `ε`. Indeterminate outcomes disagree with it at rate `flip_rate`;
//! by default the disagreement is systematic (see [`WorldConfig::flip_bias`]).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::{self, LinearModel};
use crate::corpus::{Authority, CaseRecord, FeatureVector};
use crate::error::{Error, Result};
use crate::evaluation::{self, Confusion, PredictionRow};
use crate::imputation::MethodId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Every case reaches the determinate authority with the same probability.
    #[serde(rename = "mar")]
    Mar,
    /// Referral probability grows with `|u·x|`.
    #[serde(rename = "outcome_dependent")]
    OutcomeDependent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub population: usize,
    /// Latent feature dimension.
    pub dimension: usize,
    pub seed: u64,
    pub selection_mode: SelectionMode,
    pub selection_rate: f64,
    /// Marginal probability that an indeterminate outcome differs from the counterfactual.
    pub flip_rate: f64,
    pub panel_size: usize,
    /// Per-judge probability of voting against the case outcome.
    pub vote_noise: f64,
    /// Scale of the logistic noise in the counterfactual outcome; 0 makes it a deterministic linear rule.
    pub outcome_noise: f64,
    /// Slope of the referral logit in `|u·x|` under outcome-dependent selection.
    pub selection_strength: f64,
    /// Slope of the flip logit along a second latent direction `v ⟂ u`.
    /// Non-violations far along `v` and violations far against it are the
    /// likeliest to flip, so the indeterminate authority effectively applies
    /// a rule tilted towards `v`. Zero gives flips independent of the case.
    pub flip_bias: f64,
    pub first_year: i32,
    pub last_year: i32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            population: 6000,
            dimension: 8,
            seed: 0,
            selection_mode: SelectionMode::OutcomeDependent,
            selection_rate: 0.03,
            flip_rate: 0.2,
            panel_size: 7,
            vote_noise: 0.1,
            outcome_noise: 1.0,
            selection_strength: 2.0,
            flip_bias: 3.0,
            first_year: 1995,
            last_year: 2023,
        }
    }
}

impl SelectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::Mar => "mar",
            SelectionMode::OutcomeDependent => "outcome_dependent",
        }
    }
}

impl std::str::FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mar" => Ok(SelectionMode::Mar),
            "outcome_dependent" => Ok(SelectionMode::OutcomeDependent),
            other => Err(Error::Config(format!("unknown selection mode `{other}`"))),
        }
    }
}

impl WorldConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: WorldConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.population == 0 || self.dimension == 0 {
            return fail("population and dimension must be positive".into());
        }
        if !(self.selection_rate > 0.0 && self.selection_rate < 1.0) {
            return fail(format!("selection_rate must lie in (0, 1), got {}", self.selection_rate));
        }
        if !(0.0..1.0).contains(&self.flip_rate) {
            return fail(format!("flip_rate must lie in [0, 1), got {}", self.flip_rate));
        }
        if !(0.0..1.0).contains(&self.vote_noise) {
            return fail(format!("vote_noise must lie in [0, 1), got {}", self.vote_noise));
        }
        if self.panel_size.is_multiple_of(2) {
            return fail(format!("panel_size must be odd, got {}", self.panel_size));
        }
        if !(self.outcome_noise >= 0.0 && self.selection_strength.is_finite() && self.flip_bias.is_finite()) {
            return fail("noise and slope parameters must be finite, outcome_noise non-negative".into());
        }
        if self.first_year > self.last_year {
            return fail("first_year after last_year".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCase {
    pub record: CaseRecord,
    pub counterfactual_outcome: u8,
    pub latent: Vec<f64>,
    pub score: f64,
}

/// A generated world together with its latent rule.
#[derive(Clone, Debug)]
pub struct World {
    pub cases: Vec<SyntheticCase>,
    /// Unit vector of the determinate authority's rule.
    pub rule: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    classifier::sigmoid(z)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Intercept `a` such that the mean of `σ(a + sᵢ)` over `slopes` equals `rate`.
fn calibrate_intercept(slopes: &[f64], rate: f64) -> f64 {
    let mean = |a: f64| slopes.iter().map(|s| sigmoid(a + s)).sum::<f64>() / slopes.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn logistic_noise(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    scale * (u / (1.0 - u)).ln()
}

/// Renders latent features as a token stream: one `f{j}p`/`f{j}n` token per
/// coordinate sign, repeated `1 + ⌊2|xⱼ|⌋` times.
fn render_text(latent: &[f64]) -> String {
    let mut text = String::from("1. The facts.\n");
    for (j, &x) in latent.iter().enumerate() {
        let token = format!("f{j}{}", if x >= 0.0 { 'p' } else { 'n' });
        for _ in 0..1 + (2.0 * x.abs()).floor() as usize {
            text.push_str(&token);
            text.push(' ');
        }
    }
    text.pop();
    text
}

fn draw_votes(rng: &mut ChaCha8Rng, outcome: u8, panel: usize, noise: f64) -> Vec<u8> {
    loop {
        let votes: Vec<u8> = (0..panel)
            .map(|_| if rng.random::<f64>() < noise { 1 - outcome } else { outcome })
            .collect();
        let ones = votes.iter().filter(|&&v| v == 1).count();
        if u8::from(2 * ones > panel) == outcome {
            return votes;
        }
    }
}

pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dimension;
    let rule = random_unit(&mut rng, dim);
    let tilt = if dim > 1 {
        let mut v = random_unit(&mut rng, dim);
        let proj = dot(&v, &rule);
        v.iter_mut().zip(&rule).for_each(|(x, u)| *x -= proj * u);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    } else {
        vec![0.0]
    };

    struct Draft {
        latent: Vec<f64>,
        score: f64,
        counterfactual: u8,
        year: i32,
    }
    let drafts: Vec<Draft> = (0..config.population)
        .map(|_| {
            let latent: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let score = dot(&rule, &latent);
            let noise = if config.outcome_noise > 0.0 { logistic_noise(&mut rng, config.outcome_noise) } else { 0.0 };
            let year = rng.random_range(config.first_year..=config.last_year);
            Draft {
                latent,
                score,
                counterfactual: u8::from(score + noise > 0.0),
                year,
            }
        })
        .collect();

    let determinate: Vec<bool> = match config.selection_mode {
        SelectionMode::Mar => drafts.iter().map(|_| rng.random::<f64>() < config.selection_rate).collect(),
        SelectionMode::OutcomeDependent => {
            let slopes: Vec<f64> = drafts.iter().map(|d| config.selection_strength * d.score.abs()).collect();
            let a = calibrate_intercept(&slopes, config.selection_rate);
            slopes.iter().map(|s| rng.random::<f64>() < sigmoid(a + s)).collect()
        }
    };

    let flip_slopes: Vec<f64> = drafts
        .iter()
        .map(|d| {
            let along = dot(&tilt, &d.latent);
            config.flip_bias * if d.counterfactual == 0 { along } else { -along }
        })
        .collect();
    let indeterminate_slopes: Vec<f64> = flip_slopes
        .iter()
        .zip(&determinate)
        .filter(|(_, &det)| !det)
        .map(|(s, _)| *s)
        .collect();
    let flip_intercept = if config.flip_rate > 0.0 && !indeterminate_slopes.is_empty() {
        Some(calibrate_intercept(&indeterminate_slopes, config.flip_rate))
    } else {
        None
    };

    let width = config.population.to_string().len();
    let cases = drafts
        .into_iter()
        .zip(determinate)
        .zip(flip_slopes)
        .enumerate()
        .map(|(i, ((d, det), slope))| {
            let (authority, outcome, votes) = if det {
                (Authority::Determinate, d.counterfactual, None)
            } else {
                let flipped = match flip_intercept {
                    Some(c) => rng.random::<f64>() < sigmoid(c + slope),
                    None => false,
                };
                let outcome = if flipped { 1 - d.counterfactual } else { d.counterfactual };
                let votes = draw_votes(&mut rng, outcome, config.panel_size, config.vote_noise);
                (Authority::Indeterminate, outcome, Some(votes))
            };
            SyntheticCase {
                record: CaseRecord {
                    id: format!("syn{i:0width$}"),
                    text: render_text(&d.latent),
                    year: d.year,
                    authority,
                    outcome,
                    votes,
                },
                counterfactual_outcome: d.counterfactual,
                latent: d.latent,
                score: d.score,
            }
        })
        .collect();
    Ok(World { cases, rule })
}

impl World {
    pub fn records(&self) -> Vec<CaseRecord> {
        self.cases.iter().map(|c| c.record.clone()).collect()
    }

    pub fn counterfactuals(&self) -> HashMap<String, u8> {
        self.cases
            .iter()
            .map(|c| (c.record.id.clone(), c.counterfactual_outcome))
            .collect()
    }

    /// Writes the corpus JSONL and the `{"id", "counterfactual_outcome"}` sidecar.
    pub fn write(&self, corpus_path: impl AsRef<Path>, sidecar_path: impl AsRef<Path>) -> Result<()> {
        crate::corpus::write_corpus(corpus_path, &self.records())?;
        let path = sidecar_path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for c in &self.cases {
            serde_json::to_writer(
                &mut out,
                &Counterfactual {
                    id: c.record.id.clone(),
                    counterfactual_outcome: c.counterfactual_outcome,
                },
            )?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct Counterfactual {
    id: String,
    counterfactual_outcome: u8,
}

pub fn read_counterfactuals(path: impl AsRef<Path>) -> Result<HashMap<String, u8>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let c: Counterfactual =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine { line: i + 1, message: e.to_string() })?;
        out.insert(c.id, c.counterfactual_outcome);
    }
    Ok(out)
}

/// Scores of one model against counterfactual outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleEvaluation {
    pub confusion: Confusion,
    pub mcc: f64,
}

/// Scores `model` on `cases` against their counterfactual outcomes, looking
/// up each case's features by id.
pub fn oracle_evaluate(
    model: &LinearModel,
    cases: &[&SyntheticCase],
    features: &HashMap<String, Arc<FeatureVector>>,
    threshold: f64,
) -> Result<OracleEvaluation> {
    let mut preds = Vec::with_capacity(cases.len());
    let mut labels = Vec::with_capacity(cases.len());
    for c in cases {
        let x = features.get(&c.record.id).ok_or_else(|| Error::UnknownCase {
            id: c.record.id.clone(),
            available: features.len(),
        })?;
        preds.push(classifier::predict(model, x)?);
        labels.push(c.counterfactual_outcome);
    }
    let confusion = evaluation::confusion(&preds, &labels, threshold)?;
    Ok(OracleEvaluation {
        mcc: evaluation::mcc(&confusion),
        confusion,
    })
}

/// Oracle MCC (in `[-1, 1]`) of every (method, set) model whose predictions
/// appear in `rows`, indexed by method and ordered by set index. Rows whose
/// case has no known counterfactual are skipped.
pub fn oracle_mcc_by_method(
    rows: &[PredictionRow],
    counterfactual: &HashMap<String, u8>,
    threshold: f64,
) -> Result<std::collections::BTreeMap<MethodId, Vec<f64>>> {
    let mut grouped: std::collections::BTreeMap<(MethodId, usize), (Vec<f64>, Vec<u8>)> = Default::default();
    for r in rows {
        if let Some(&y) = counterfactual.get(&r.case_id) {
            let e = grouped.entry((r.method, r.set_index)).or_default();
            e.0.push(r.prediction);
            e.1.push(y);
        }
    }
    let mut out: std::collections::BTreeMap<MethodId, Vec<f64>> = Default::default();
    for ((method, _), (p, y)) in grouped {
        out.entry(method)
            .or_default()
            .push(evaluation::mcc(&evaluation::confusion(&p, &y, threshold)?));
    }
    Ok(out)
}

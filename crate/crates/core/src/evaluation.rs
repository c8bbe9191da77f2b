//! Confusion counts, Matthews correlation, aggregation over balanced sets,
//! and the plot-ready prediction tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Authority;
use crate::error::{Error, Result};
use crate::imputation::MethodId;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_pos + self.true_neg) as f64 / self.total() as f64
    }
}

/// A prediction at or above `threshold` counts as positive.
pub fn confusion(predictions: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p >= threshold, y == 1) {
            (true, true) => c.true_pos += 1,
            (false, false) => c.true_neg += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Matthews correlation coefficient in `[-1, 1]`; 0 when any marginal is empty.
pub fn mcc(c: &Confusion) -> f64 {
    let (tp, tn, fp, fn_) = (
        c.true_pos as f64,
        c.true_neg as f64,
        c.false_pos as f64,
        c.false_neg as f64,
    );
    let marginals = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if marginals.contains(&0.0) {
        return 0.0;
    }
    let denom = marginals.iter().product::<f64>().sqrt();
    ((tp * tn - fp * fn_) / denom).clamp(-1.0, 1.0)
}

/// MCC on the ×100 scale used in reports.
pub fn mcc_percent(c: &Confusion) -> f64 {
    100.0 * mcc(c)
}

/// One row of `predictions.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub method: MethodId,
    pub set_index: usize,
    pub case_id: String,
    pub prediction: f64,
    pub label: u8,
    pub authority: Authority,
}

/// Predictions of the model for one (method, balanced set) on one test set.
#[derive(Clone, Debug, PartialEq)]
pub struct SetEvaluation {
    pub method: MethodId,
    pub test_set: Authority,
    pub set_index: usize,
    pub confusion: Confusion,
    pub predictions: Vec<(String, f64)>,
}

impl SetEvaluation {
    /// Builds from prediction rows that all belong to one model and test set.
    pub fn from_rows(rows: &[&PredictionRow], threshold: f64) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::MixedReports("no predictions for model".into()))?;
        if rows
            .iter()
            .any(|r| r.method != first.method || r.set_index != first.set_index || r.authority != first.authority)
        {
            return Err(Error::MixedReports("rows mix models or test sets".into()));
        }
        let preds: Vec<f64> = rows.iter().map(|r| r.prediction).collect();
        let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
        Ok(SetEvaluation {
            method: first.method,
            test_set: first.authority,
            set_index: first.set_index,
            confusion: confusion(&preds, &labels, threshold)?,
            predictions: rows.iter().map(|r| (r.case_id.clone(), r.prediction)).collect(),
        })
    }

    pub fn mcc_percent(&self) -> f64 {
        mcc_percent(&self.confusion)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: MethodId,
    pub test_set: Authority,
    pub n_cases: usize,
    /// Percent scale, ordered by set index.
    pub per_set_mcc: Vec<f64>,
    pub mean_mcc: f64,
    /// Population standard deviation of `per_set_mcc`.
    pub std_mcc: f64,
    /// Minimum, lower quartile, median, upper quartile, maximum of all raw predictions.
    pub prediction_quantiles: [f64; 5],
    pub per_case_mean_prediction: BTreeMap<String, f64>,
}

/// Linear-interpolation quantile of sorted data; NaN for empty input.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn five_number_summary(values: &[f64]) -> [f64; 5] {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(&sorted, q))
}

pub fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Combines the per-set evaluations of one method on one test set.
pub fn aggregate(sets: &[SetEvaluation]) -> Result<EvaluationReport> {
    let first = sets
        .first()
        .ok_or_else(|| Error::MixedReports("nothing to aggregate".into()))?;
    if sets.iter().any(|s| s.method != first.method || s.test_set != first.test_set) {
        return Err(Error::MixedReports(format!(
            "expected only {} on the {} test set",
            first.method, first.test_set
        )));
    }
    let mut ordered: Vec<&SetEvaluation> = sets.iter().collect();
    ordered.sort_by_key(|s| s.set_index);
    if ordered.windows(2).any(|w| w[0].set_index == w[1].set_index) {
        return Err(Error::MixedReports("duplicate set index".into()));
    }

    let per_set_mcc: Vec<f64> = ordered.iter().map(|s| s.mcc_percent()).collect();
    let (mean_mcc, std_mcc) = mean_and_population_std(&per_set_mcc);

    let pooled: Vec<f64> = ordered.iter().flat_map(|s| s.predictions.iter().map(|p| p.1)).collect();
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for s in &ordered {
        for (id, p) in &s.predictions {
            let e = sums.entry(id.clone()).or_insert((0.0, 0));
            e.0 += p;
            e.1 += 1;
        }
    }
    Ok(EvaluationReport {
        method: first.method,
        test_set: first.test_set,
        n_cases: first.predictions.len(),
        per_set_mcc,
        mean_mcc,
        std_mcc,
        prediction_quantiles: five_number_summary(&pooled),
        per_case_mean_prediction: sums.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect(),
    })
}

/// Groups prediction rows into one report per (method, test set), in
/// method order then determinate before indeterminate.
pub fn evaluate_rows(rows: &[PredictionRow], threshold: f64) -> Result<Vec<EvaluationReport>> {
    let mut groups: BTreeMap<(MethodId, Authority, usize), Vec<&PredictionRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.authority, r.set_index)).or_default().push(r);
    }
    let mut per_report: BTreeMap<(MethodId, Authority), Vec<SetEvaluation>> = BTreeMap::new();
    for ((method, authority, _), group) in groups {
        per_report
            .entry((method, authority))
            .or_default()
            .push(SetEvaluation::from_rows(&group, threshold)?);
    }
    per_report.values().map(|sets| aggregate(sets)).collect()
}

/// Mean prediction of every method for one case, plus the max − min spread.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseComparison {
    pub case_id: String,
    pub mean_prediction: BTreeMap<MethodId, f64>,
    pub spread: f64,
}

/// Per-case mean prediction over the balanced sets, for every method present in `rows`.
pub fn compare_cases(case_ids: &[String], rows: &[PredictionRow]) -> Result<Vec<CaseComparison>> {
    type PerSet = Vec<(usize, f64)>;
    let mut sums: BTreeMap<&str, BTreeMap<MethodId, PerSet>> = BTreeMap::new();
    for r in rows {
        sums.entry(r.case_id.as_str())
            .or_default()
            .entry(r.method)
            .or_default()
            .push((r.set_index, r.prediction));
    }
    case_ids
        .iter()
        .map(|id| {
            let per_method = sums.get(id.as_str()).ok_or_else(|| Error::UnknownCase {
                id: id.clone(),
                available: sums.len(),
            })?;
            let mean_prediction: BTreeMap<MethodId, f64> = per_method
                .iter()
                .map(|(m, preds)| {
                    let mut preds = preds.clone();
                    preds.sort_by_key(|p| p.0);
                    (*m, preds.iter().map(|p| p.1).sum::<f64>() / preds.len() as f64)
                })
                .collect();
            let max = mean_prediction.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = mean_prediction.values().copied().fold(f64::INFINITY, f64::min);
            Ok(CaseComparison {
                case_id: id.clone(),
                mean_prediction,
                spread: max - min,
            })
        })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Table of mean/std MCC per method and test set, with the five-number
/// summary of predictions and the per-set MCCs.
///
/// Columns: `method,test_set,n_cases,mean_mcc,std_mcc,pred_min,pred_q1,
/// pred_median,pred_q3,pred_max,mcc_set_0,…,mcc_set_{k-1}`.
pub fn write_results_csv(path: impl AsRef<Path>, reports: &[EvaluationReport]) -> Result<()> {
    let path = path.as_ref();
    let k = reports.iter().map(|r| r.per_set_mcc.len()).max().unwrap_or(0);
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = [
        "method", "test_set", "n_cases", "mean_mcc", "std_mcc", "pred_min", "pred_q1", "pred_median", "pred_q3",
        "pred_max",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..k).map(|i| format!("mcc_set_{i}")));
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.method.to_string(),
            r.test_set.to_string(),
            r.n_cases.to_string(),
            fmt6(r.mean_mcc),
            fmt6(r.std_mcc),
        ];
        row.extend(r.prediction_quantiles.iter().map(|&q| fmt6(q)));
        row.extend(r.per_set_mcc.iter().map(|&m| fmt6(m)));
        row.resize(header.len(), String::new());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Columns: `method,set_index,case_id,prediction,label,authority`.
pub fn write_predictions_csv(path: impl AsRef<Path>, rows: &[PredictionRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Columns: `case_id`, one column per method, `spread`.
pub fn write_comparison_csv(path: impl AsRef<Path>, rows: &[CaseComparison]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_comparison(file, rows).map_err(|e| match e {
        Error::Csv(e) if e.is_io_error() => Error::io(path, std::io::Error::other(e.to_string())),
        other => other,
    })
}

/// Same layout as [`write_comparison_csv`], to any writer.
pub fn write_comparison<W: std::io::Write>(out: W, rows: &[CaseComparison]) -> Result<()> {
    let methods: Vec<MethodId> = rows
        .iter()
        .flat_map(|r| r.mean_prediction.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut header = vec!["case_id".to_string()];
    header.extend(methods.iter().map(|m| m.to_string()));
    header.push("spread".into());
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.case_id.clone()];
        row.extend(methods.iter().map(|m| r.mean_prediction.get(m).map(|&v| fmt6(v)).unwrap_or_default()));
        row.push(fmt6(r.spread));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use label_indeterminacy::classifier::TrainConfig;
use label_indeterminacy::corpus::{Authority, CaseRecord, FeatureVector};
use label_indeterminacy::evaluation;
use label_indeterminacy::experiment::{self, ExperimentConfig};
use label_indeterminacy::imputation::{self, FeaturizedCase, MethodId};
use label_indeterminacy::parallel::Strategy;
use label_indeterminacy::synthetic::{generate_world, oracle_mcc_by_method, SelectionMode, World, WorldConfig};
use label_indeterminacy::Error;

fn case(id: String, authority: Authority, outcome: u8) -> FeaturizedCase {
    FeaturizedCase {
        record: CaseRecord {
            id,
            text: String::new(),
            year: 2010,
            authority,
            outcome,
            votes: (authority == Authority::Indeterminate).then(|| vec![outcome; 7]),
        },
        features: Arc::new(FeatureVector::from_dense(&[1.0])),
    }
}

#[test]
fn corr_instance_count_for_table_sized_sets() {
    let ind: Vec<_> = (0..1376).map(|i| case(format!("c{i}"), Authority::Indeterminate, (i % 2) as u8)).collect();
    let det: Vec<_> = (0..116).map(|i| case(format!("g{i}"), Authority::Determinate, (i % 2) as u8)).collect();
    let ind: Vec<&FeaturizedCase> = ind.iter().collect();
    let det: Vec<&FeaturizedCase> = det.iter().collect();
    assert_eq!(imputation::impute_corr(&ind, &det).len(), 1492);
    assert_eq!(imputation::impute_obs(&ind, &det).unwrap().len(), 116);
}

fn run_in_memory(world: &World, cfg: &ExperimentConfig) -> Vec<evaluation::PredictionRow> {
    let prepared = experiment::prepare(&world.records(), cfg, Strategy::default()).unwrap();
    let cells = experiment::train_grid(&prepared, cfg, Strategy::default()).unwrap();
    let models: Vec<_> = cells.iter().map(|c| (c.dataset.method, c.dataset.set_index, c.model())).collect();
    experiment::predict_test(&prepared.data, &models, Strategy::default()).unwrap()
}

#[test]
fn propensity_recovers_base_rate_when_selection_ignores_features() {
    let world = generate_world(&WorldConfig {
        population: 10_000,
        selection_mode: SelectionMode::Mar,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let cfg = ExperimentConfig {
        dimension: 512,
        ..Default::default()
    };
    let data = experiment::featurize(&world.records(), &cfg, Strategy::default()).unwrap();
    let train: Vec<&FeaturizedCase> = data.split.train.iter().map(|c| &data.cases[&c.id]).collect();
    let model = imputation::fit_propensity(&train, &TrainConfig::default(), 0.01).unwrap();
    let held_out: Vec<f64> = data
        .split
        .test
        .iter()
        .map(|c| model.propensity(&data.cases[&c.id].features).unwrap())
        .collect();
    let mean = held_out.iter().sum::<f64>() / held_out.len() as f64;
    let base = data.split.train.iter().filter(|c| c.authority == Authority::Determinate).count() as f64
        / data.split.train.len() as f64;
    assert!((mean - base).abs() <= 0.01, "mean propensity {mean} vs base rate {base}");
}

#[test]
fn propensity_of_separable_authorities_approaches_the_clip() {
    let mut pool = Vec::new();
    for i in 0..40 {
        let det = i % 4 == 0;
        let x = if det { [1.0, 0.0] } else { [0.0, 1.0] };
        pool.push(FeaturizedCase {
            features: Arc::new(FeatureVector::from_dense(&x)),
            ..case(format!("p{i:02}"), if det { Authority::Determinate } else { Authority::Indeterminate }, 1)
        });
    }
    let refs: Vec<&FeaturizedCase> = pool.iter().collect();
    let config = TrainConfig {
        epochs: 3000,
        l2_penalty: 0.0,
        ..Default::default()
    };
    let model = imputation::fit_propensity(&refs, &config, 0.01).unwrap();
    let det = model.propensity(&FeatureVector::from_dense(&[1.0, 0.0])).unwrap();
    let ind = model.propensity(&FeatureVector::from_dense(&[0.0, 1.0])).unwrap();
    assert!(det > 0.97, "determinate propensity {det}");
    assert!(ind < 0.03, "indeterminate propensity {ind}");
    assert_eq!(model, imputation::fit_propensity(&refs, &config, 0.01).unwrap());
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, i) in order.into_iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn obs_advantage_grows_with_flip_rate() {
    let cfg = ExperimentConfig {
        k: 3,
        dimension: 512,
        methods: vec![MethodId::Corr, MethodId::Obs],
        ..Default::default()
    };
    let flip_rates = [0.0, 0.1, 0.2, 0.3, 0.4];
    let mut gaps = Vec::new();
    for &flip_rate in &flip_rates {
        let mut gap = 0.0;
        for seed in 0..3 {
            let world = generate_world(&WorldConfig {
                seed,
                flip_rate,
                ..Default::default()
            })
            .unwrap();
            let rows = run_in_memory(&world, &cfg);
            let mcc = oracle_mcc_by_method(&rows, &world.counterfactuals(), 0.5).unwrap();
            let mean = |m: MethodId| mcc[&m].iter().sum::<f64>() / mcc[&m].len() as f64;
            gap += (mean(MethodId::Obs) - mean(MethodId::Corr)) / 3.0;
        }
        gaps.push(gap);
    }
    let rho = spearman(&flip_rates, &gaps);
    assert!(rho >= 0.9, "gaps {gaps:?}, spearman {rho}");
}

#[test]
fn corr_and_obs_agree_without_indeterminacy() {
    let cfg = ExperimentConfig {
        k: 3,
        dimension: 512,
        methods: vec![MethodId::Corr, MethodId::Obs],
        ..Default::default()
    };
    let world = generate_world(&WorldConfig {
        selection_mode: SelectionMode::Mar,
        selection_rate: 0.1,
        flip_rate: 0.0,
        vote_noise: 0.0,
        ..Default::default()
    })
    .unwrap();
    let rows = run_in_memory(&world, &cfg);
    let mcc = oracle_mcc_by_method(&rows, &world.counterfactuals(), 0.5).unwrap();
    let mean = |m: MethodId| mcc[&m].iter().sum::<f64>() / mcc[&m].len() as f64;
    assert!((mean(MethodId::Obs) - mean(MethodId::Corr)).abs() < 0.1);
}

fn write_world(dir: &std::path::Path, config: &WorldConfig) -> std::path::PathBuf {
    let corpus = dir.join("corpus.jsonl");
    generate_world(config).unwrap().write(&corpus, dir.join("truth.jsonl")).unwrap();
    corpus
}

#[test]
fn saved_run_can_be_reevaluated_and_compared() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_world(dir.path(), &WorldConfig { population: 1500, selection_rate: 0.1, ..Default::default() });
    let cfg = ExperimentConfig {
        corpus,
        output: dir.path().join("run"),
        dimension: 256,
        ..Default::default()
    };
    let summary = experiment::run(&cfg).unwrap();
    assert_eq!(summary.models, 63);
    let results = cfg.output.join(experiment::RESULTS_FILE);
    let original = std::fs::read(&results).unwrap();
    let predictions = std::fs::read(cfg.output.join(experiment::PREDICTIONS_FILE)).unwrap();
    std::fs::remove_file(&results).unwrap();
    experiment::eval_run(&cfg.output).unwrap();
    assert!(std::fs::read(&results).unwrap() == original, "results differ");
    assert!(std::fs::read(cfg.output.join(experiment::PREDICTIONS_FILE)).unwrap() == predictions, "predictions differ");

    let manifest = experiment::read_manifest(&cfg.output).unwrap();
    assert_eq!(manifest.files.len(), 63 * 2 + 5);
    assert_eq!(manifest.config, cfg);

    let rows = evaluation::read_predictions_csv(cfg.output.join(experiment::PREDICTIONS_FILE)).unwrap();
    let ids: Vec<String> = rows.iter().map(|r| r.case_id.clone()).collect::<BTreeSet<_>>().into_iter().take(2).collect();
    let table = experiment::compare_run(&cfg.output, &ids).unwrap();
    assert_eq!(table.len(), 2);
    for row in &table {
        assert_eq!(row.mean_prediction.len(), 9);
        let hi = row.mean_prediction.values().cloned().fold(f64::MIN, f64::max);
        let lo = row.mean_prediction.values().cloned().fold(f64::MAX, f64::min);
        assert_eq!(row.spread, hi - lo);
    }
    let missing = experiment::compare_run(&cfg.output, &["nope".to_string()]).unwrap_err();
    let test_cases = summary.split.iter().map(|s| s.test).sum::<usize>();
    assert!(matches!(missing, Error::UnknownCase { available, .. } if available == test_cases));
}

#[test]
fn incomplete_runs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(experiment::compare_run(dir.path(), &["a".into()]), Err(Error::IncompleteRun(_))));
    assert!(matches!(experiment::eval_run(dir.path()), Err(Error::IncompleteRun(_))));

    let corpus = write_world(dir.path(), &WorldConfig { population: 800, selection_rate: 0.2, ..Default::default() });
    let cfg = ExperimentConfig {
        corpus,
        output: dir.path().join("run"),
        dimension: 64,
        k: 2,
        methods: vec![MethodId::Obs, MethodId::Nn],
        ..Default::default()
    };
    experiment::run(&cfg).unwrap();
    std::fs::remove_file(experiment::model_path(&cfg.output, MethodId::Nn, 1)).unwrap();
    assert!(matches!(experiment::eval_run(&cfg.output), Err(Error::IncompleteRun(_))));
}

#[test]
fn datasets_on_disk_match_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_world(dir.path(), &WorldConfig { population: 900, selection_rate: 0.15, ..Default::default() });
    let cfg = ExperimentConfig {
        corpus,
        output: dir.path().join("run"),
        dimension: 64,
        k: 2,
        ..Default::default()
    };
    experiment::run(&cfg).unwrap();
    let split: HashMap<String, serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(cfg.output.join("split.json")).unwrap()).unwrap();
    let train: BTreeSet<String> = serde_json::from_value(split["train"].clone()).unwrap();
    for m in MethodId::ALL {
        for i in 0..2 {
            let (header, records) = imputation::read_dataset_jsonl(experiment::dataset_path(&cfg.output, m, i)).unwrap();
            assert_eq!((header.method, header.set_index, header.instances), (m, i, records.len()));
            assert!(records.iter().all(|r| train.contains(&r.case_id)));
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn labelind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelind")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> (PathBuf, PathBuf) {
    let corpus = dir.join(format!("{name}.jsonl"));
    let truth = dir.join(format!("{name}.truth.jsonl"));
    let mut args = vec!["synth", "--corpus", corpus.to_str().unwrap(), "--counterfactuals", truth.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = labelind(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    (corpus, truth)
}

#[test]
fn synth_writes_one_line_per_case_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, truth) = synth(dir.path(), "a", &["--population", "1000", "--seed", "4"]);
    let (b, _) = synth(dir.path(), "b", &["--population", "1000", "--seed", "4"]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1000);
    assert_eq!(std::fs::read_to_string(truth).unwrap().lines().count(), 1000);
    assert_eq!(text, std::fs::read_to_string(b).unwrap());
}

#[test]
fn synth_selection_count_is_within_binomial_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = synth(dir.path(), "w", &["--population", "10000", "--selection-mode", "mar"]);
    let determinate = std::fs::read_to_string(corpus)
        .unwrap()
        .lines()
        .filter(|l| l.contains("\"authority\":\"determinate\""))
        .count();
    // 99% interval of Binomial(10000, 0.03): 300 ± 2.576·√291.
    assert!((256..=344).contains(&determinate), "{determinate}");
}

#[test]
fn synth_reads_a_config_file_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("world.toml");
    std::fs::write(&config, "population = 50\nseed = 9\nflip_rate = 0.0\n").unwrap();
    let (corpus, _) = synth(dir.path(), "c", &["--config", config.to_str().unwrap(), "--population", "70"]);
    assert_eq!(std::fs::read_to_string(corpus).unwrap().lines().count(), 70);

    std::fs::write(&config, "populaton = 50\n").unwrap();
    let out = labelind(&["synth", "--config", config.to_str().unwrap(), "--corpus", "x", "--counterfactuals", "y"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn run_compare_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = synth(dir.path(), "w", &["--population", "1500", "--selection-rate", "0.1"]);
    let run = dir.path().join("run");
    let out = labelind(&[
        "run",
        "--corpus",
        corpus.to_str().unwrap(),
        "--output",
        run.to_str().unwrap(),
        "--dimension",
        "256",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let results = std::fs::read_to_string(run.join("results.csv")).unwrap();
    let mut lines = results.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("method,test_set,n_cases,mean_mcc,std_mcc,pred_min,pred_q1,pred_median,pred_q3,pred_max,mcc_set_0"));
    assert!(header.ends_with("mcc_set_6"));
    assert_eq!(lines.count(), 18);
    assert_eq!(std::fs::read_dir(run.join("models")).unwrap().count(), 63);

    let predictions = std::fs::read_to_string(run.join("predictions.csv")).unwrap();
    let ids: Vec<&str> = predictions.lines().skip(1).take(2).map(|l| l.split(',').nth(2).unwrap()).collect();
    let out = labelind(&["compare", run.to_str().unwrap(), ids[0], ids[1]]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].len(), 11);
    assert_eq!(rows[0][0], "case_id");
    assert_eq!(rows[0][10], "spread");
    for row in &rows[1..] {
        let values: Vec<f64> = row[1..10].iter().map(|v| v.parse().unwrap()).collect();
        let hi = values.iter().cloned().fold(f64::MIN, f64::max);
        let lo = values.iter().cloned().fold(f64::MAX, f64::min);
        let spread: f64 = row[10].parse().unwrap();
        assert!((spread - (hi - lo)).abs() <= 2e-6);
    }

    let out = labelind(&["compare", run.to_str().unwrap(), "no-such-case"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cases available"), "{}", stderr(&out));

    std::fs::remove_file(run.join("results.csv")).unwrap();
    let out = labelind(&["eval", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(run.join("results.csv")).unwrap(), results);
}

#[test]
fn obs_only_run_trains_seven_models() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = synth(dir.path(), "w", &["--population", "800", "--selection-rate", "0.2"]);
    let config = dir.path().join("exp.toml");
    let run = dir.path().join("run");
    std::fs::write(
        &config,
        format!(
            "corpus = {:?}\noutput = {:?}\ndimension = 128\nmethods = [\"corr\"]\n[train]\nepochs = 10\n",
            corpus.to_str().unwrap(),
            run.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = labelind(&["run", "--config", config.to_str().unwrap(), "--methods", "obs", "--sequential"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let models: Vec<String> = std::fs::read_dir(run.join("models"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(models.len(), 7);
    assert!(models.iter().all(|m| m.starts_with("obs_set")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(labelind(&[]).status.code(), Some(1));
    assert_eq!(labelind(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(labelind(&["--help"]).status.code(), Some(0));
    assert_eq!(labelind(&["run", "--k", "seven"]).status.code(), Some(1));
    assert_eq!(labelind(&["run", "--methods", "corr,median"]).status.code(), Some(1));

    let out = labelind(&["run", "--corpus", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));

    let missing = dir.path().join("missing.jsonl");
    let out = labelind(&["run", "--corpus", missing.to_str().unwrap(), "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ingest"), "{}", stderr(&out));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"a\",\"text\":\"t\",\"year\":2000,\"authority\":\"indeterminate\",\"outcome\":1,\"votes\":[0,0,1]}\n").unwrap();
    let out = labelind(&["run", "--corpus", bad.to_str().unwrap(), "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ingest"), "{}", stderr(&out));

    let out = labelind(&["eval", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

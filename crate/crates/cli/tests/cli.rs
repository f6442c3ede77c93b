use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn vocadapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vocadapt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = vocadapt(args);
    assert!(
        out.status.success(),
        "vocadapt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `id -> metric -> [p, r, f1]` from `per_pair.csv`.
fn per_pair(path: &Path) -> BTreeMap<String, BTreeMap<String, [f64; 3]>> {
    let mut out: BTreeMap<String, BTreeMap<String, [f64; 3]>> = BTreeMap::new();
    for line in fs::read_to_string(path).unwrap().lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v = |i: usize| f[i].parse::<f64>().unwrap();
        out.entry(f[0].into()).or_default().insert(f[1].into(), [v(2), v(3), v(4)]);
    }
    out
}

fn adapt_args<'a>(out: &'a str, base: &'a str) -> Vec<String> {
    [
        "adapt",
        "--target",
        s(&fixture("target.jsonl")),
        "--pac",
        s(&fixture("pac.jsonl")),
        "--base",
        base,
        "--dict",
        s(&fixture("toy_medical_dict.tsv")),
        "--a-grid",
        "0.5,1,2",
        "--k-values",
        "5,10,20",
        "--out",
        out,
    ]
    .iter()
    .map(|a| a.to_string())
    .collect()
}

fn run_owned(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs)
}

#[test]
fn analyze_reports_median_of_three_documents() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "analyze",
        "--corpus",
        s(&fixture("analyze_corpus.jsonl")),
        "--vocab",
        s(&fixture("analyze_vocab.txt")),
        "--out",
        s(dir.path()),
    ]);
    let report = json(&dir.path().join("oov_report.json"));
    // one of four, one of two and two of two distinct words are split
    assert_eq!(report["median_oov_pct"], 50.0);
    assert_eq!(report["per_doc_oov_fraction"], serde_json::json!([0.25, 0.5, 1.0]));
    let hist = fs::read_to_string(dir.path().join("split_histogram.csv")).unwrap();
    assert_eq!(hist, "pieces,words\n1,4\n11,1\n12,2\n14,1\n");
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn analyze_with_covering_vocabulary_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "analyze",
        "--corpus",
        s(&fixture("target.jsonl")),
        "--vocab",
        s(&fixture("covering_vocab.txt")),
        "--reference",
        s(&fixture("target.jsonl")),
        "--reference-side",
        "summary",
        "--out",
        s(dir.path()),
    ]);
    let report = json(&dir.path().join("oov_report.json"));
    assert_eq!(report["median_oov_pct"], 0.0);
    assert_eq!(report["split_histogram"].as_object().unwrap().len(), 1);
    let overlap = json(&dir.path().join("domain_overlap.json"));
    assert_eq!(overlap["similarity"], 1.0);
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_corpus.jsonl");
    let out = vocadapt(&[
        "analyze",
        "--corpus",
        s(&missing),
        "--vocab",
        s(&fixture("analyze_vocab.txt")),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_corpus.jsonl"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(vocadapt(&["adapt"]).status.code(), Some(2));
    assert_eq!(vocadapt(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(vocadapt(&["--help"]).status.code(), Some(0));
}

#[test]
fn adapt_writes_grid_and_consistent_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adapt");
    run_owned(&adapt_args(s(&out), s(&fixture("base_vocab.txt"))));

    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    let rows: Vec<Vec<f64>> = grid
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3 * 3);

    // Re-derive the choice from the grid table alone.
    let min = rows.iter().map(|r| r[5]).fold(f64::INFINITY, f64::min);
    let best = rows
        .iter()
        .filter(|r| r[5] <= min + 0.04 + 1e-9)
        .min_by(|x, y| {
            (x[4] as u64, x[1] as u64)
                .cmp(&(y[4] as u64, y[1] as u64))
                .then(x[0].total_cmp(&y[0]))
        })
        .unwrap();
    let prov = json(&out.join("provenance.json"));
    assert_eq!(prov["chosen"]["a"].as_f64().unwrap(), best[0]);
    assert_eq!(prov["chosen"]["k"].as_f64().unwrap(), best[1]);

    let base = fs::read_to_string(fixture("base_vocab.txt")).unwrap();
    let vocab = fs::read_to_string(out.join("vocab.txt")).unwrap();
    let added = fs::read_to_string(out.join("added_tokens.txt")).unwrap();
    assert!(vocab.starts_with(&base));
    assert_eq!(vocab.lines().count(), best[4] as usize);
    assert_eq!(vocab.lines().count() - base.lines().count(), added.lines().count());
    assert!(added.lines().count() <= base.lines().count());
    assert!(prov["chosen"]["fragment_score"].as_f64() <= prov["base_fragment_score"].as_f64());
    for f in ["v_tgt_temp.txt", "v_pac.txt", "candidate_words.tsv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn adapt_without_candidates_keeps_base() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adapt");
    let base = fixture("covering_vocab.txt");
    run_owned(&adapt_args(s(&out), s(&base)));
    assert_eq!(fs::read_to_string(out.join("candidate_words.tsv")).unwrap(), "");
    assert_eq!(fs::read_to_string(out.join("added_tokens.txt")).unwrap(), "");
    assert_eq!(
        fs::read_to_string(out.join("vocab.txt")).unwrap(),
        fs::read_to_string(&base).unwrap()
    );
}

#[test]
fn adapt_baseline_stops_at_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adapt");
    let mut args = adapt_args(s(&out), s(&fixture("base_vocab.txt")));
    args.push("--with-avocado".into());
    run_owned(&args);
    let trace = json(&out.join("avocado/trace.json"));
    let steps = trace.as_array().unwrap();
    let last = steps.last().unwrap()["fragment_score"].as_f64().unwrap();
    assert!(last <= 3.0);
    for s in &steps[..steps.len() - 1] {
        assert!(s["fragment_score"].as_f64().unwrap() > 3.0);
    }
    let added = fs::read_to_string(out.join("avocado/added_tokens.txt")).unwrap();
    assert_eq!(added.lines().count() as u64, steps.last().unwrap()["added"].as_u64().unwrap());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"adapt": {"margin": 0.5, "a_grid": [1.0]}, "seed": 4}"#).unwrap();
    let out = dir.path().join("adapt");
    let mut args = adapt_args(s(&out), s(&fixture("base_vocab.txt")));
    args.extend(["--config".into(), s(&cfg).into(), "--margin".into(), "0.1".into()]);
    run_owned(&args);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["adapt"]["margin"], 0.1);
    // the flag also overrides the file's A grid
    assert_eq!(manifest["config"]["adapt"]["a_grid"], serde_json::json!([0.5, 1.0, 2.0]));
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 4);

    fs::write(&cfg, r#"{"adapt": {"no_such_key": 1}}"#).unwrap();
    let mut bad = adapt_args(s(&dir.path().join("bad")), s(&fixture("base_vocab.txt")));
    bad.extend(["--config".into(), s(&cfg).into()]);
    let refs: Vec<&str> = bad.iter().map(String::as_str).collect();
    assert_eq!(vocadapt(&refs).status.code(), Some(2));
}

#[test]
fn evaluate_matches_hand_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "evaluate",
        "--pairs",
        s(&fixture("worked_pairs.jsonl")),
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    let t = per_pair(&dir.path().join("per_pair.csv"));
    let close = |got: [f64; 3], want: [f64; 3]| {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-6, "{got:?} vs {want:?}");
        }
    };
    close(t["cat"]["rouge-1"], [0.8, 1.0, 8.0 / 9.0]);
    close(t["cat"]["rouge-2"], [0.5, 2.0 / 3.0, 4.0 / 7.0]);
    close(t["cat"]["rouge-l"], [0.8, 1.0, 8.0 / 9.0]);
    close(t["cat"]["rouge-su*"], [10.0 / 15.0, 1.0, 0.8]);
    close(t["clip"]["rouge-1"], [1.0 / 3.0, 0.5, 0.4]);
    close(t["swap"]["rouge-su*"], [2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
    close(t["swap"]["rouge-2"], [0.0, 0.0, 0.0]);
    let agg = json(&dir.path().join("aggregate.json"));
    assert_eq!(agg["seed"], 1);
    assert_eq!(agg["params"]["stemming"], false);
    assert!(agg["metrics"]["medrouge-1"].is_null());
}

#[test]
fn evaluate_identical_pairs_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    fs::write(
        &pairs,
        "{\"id\":\"a\",\"candidate\":\"aspirin therapy reduced fever in adults\",\"reference\":\"aspirin therapy reduced fever in adults\"}\n\
         {\"id\":\"b\",\"candidate\":\"the heart attack risk was lower overall\",\"reference\":\"the heart attack risk was lower overall\"}\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&[
        "evaluate",
        "--pairs",
        s(&pairs),
        "--dict",
        s(&fixture("toy_medical_dict.tsv")),
        "--seed",
        "9",
        "--out",
        s(&out),
    ]);
    for (id, metrics) in per_pair(&out.join("per_pair.csv")) {
        assert_eq!(metrics.len(), 10);
        for (m, prf) in metrics {
            assert_eq!(prf[2], 1.0, "{id} {m}");
        }
    }
}

#[test]
fn evaluate_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = vocadapt(&["evaluate", "--pairs", s(&fixture("worked_pairs.jsonl")), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--seed"));
    assert!(!out.exists());
}

#[test]
fn prepare_removes_duplicates_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&[
        "prepare",
        "--pac",
        s(&fixture("pac_prepare.jsonl")),
        "--downstream",
        s(&fixture("downstream.jsonl")),
        "--train",
        s(&fixture("train.jsonl")),
        "--dict",
        s(&fixture("toy_medical_dict.tsv")),
        "--out",
        s(&first),
    ]);
    let log = fs::read_to_string(first.join("removals.jsonl")).unwrap();
    let records: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["pac_id"], "pac-exact");
    assert_eq!(records[0]["criterion"], "exact");
    assert_eq!(records[0]["downstream_id"], "t1");
    assert_eq!(records[1]["pac_id"], "pac-near");
    assert_eq!(records[1]["criterion"], "jaccard");
    // 19 words, last one changed: 11 of 13 distinct shingles shared
    assert_eq!(records[1]["jaccard"], 0.857143);

    let report = json(&first.join("prepare_report.json"));
    assert_eq!(report["pac_after"], 3);
    assert_eq!(report["train"][0]["no_shared_concept"], 1);
    assert_eq!(report["train"][0]["summary_longer"], 1);
    let kept: Vec<Value> = fs::read_to_string(first.join("train.clean.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids: Vec<&str> = kept.iter().map(|d| d["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["k1", "k2"]);

    let second = dir.path().join("second");
    ok(&[
        "prepare",
        "--pac",
        s(&first.join("pac_prepare.jsonl")),
        "--downstream",
        s(&fixture("downstream.jsonl")),
        "--dict",
        s(&fixture("toy_medical_dict.tsv")),
        "--out",
        s(&second),
    ]);
    assert_eq!(fs::read_to_string(second.join("removals.jsonl")).unwrap(), "");
    assert_eq!(
        fs::read(second.join("pac_prepare.jsonl")).unwrap(),
        fs::read(first.join("pac_prepare.jsonl")).unwrap()
    );
}

#[test]
fn compare_identical_vocabularies_scores_equal() {
    let dir = tempfile::tempdir().unwrap();
    let adapted = dir.path().join("adapt");
    run_owned(&adapt_args(s(&adapted), s(&fixture("base_vocab.txt"))));
    let vocab = adapted.join("vocab.txt");
    let out = dir.path().join("cmp");
    ok(&[
        "compare",
        "--a",
        s(&vocab),
        "--b",
        s(&vocab),
        "--target",
        s(&fixture("target.jsonl")),
        "--out",
        s(&out),
    ]);
    let c = json(&out.join("comparison.json"));
    assert_eq!(c["score_a"], c["score_b"]);
    assert_eq!(c["unique_a"], 0);
    for e in c["equalized"].as_array().unwrap() {
        assert_eq!(e["score_a"], e["score_b"]);
    }
    assert_eq!(c["equalized"][1]["mode"], "sampled");
    assert_eq!(c["equalized"][1]["seed"], 0);
    assert_eq!(json(&out.join("manifest.json"))["seed"], 0);
}

#[test]
fn train_vocab_writes_requested_size() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "train-vocab",
        "--corpus",
        s(&fixture("pac.jsonl")),
        "--size",
        "300",
        "--family",
        "bpe",
        "--out",
        s(dir.path()),
    ]);
    let vocab = fs::read_to_string(dir.path().join("vocab.txt")).unwrap();
    assert_eq!(vocab.lines().count(), 300);
    assert!(dir.path().join("vocab.merges.txt").exists());
    let meta = json(&dir.path().join("vocab.meta.json"));
    assert_eq!(meta["family"], "bpe");
}

/// All files under `dir` except the manifest, by relative path.
fn outputs(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.insert(p.strip_prefix(dir).unwrap().to_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (i, jobs) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("adapt{i}"));
        let mut args = adapt_args(s(&out), s(&fixture("base_vocab.txt")));
        args.extend(["--with-avocado".into(), "--jobs".into(), jobs.to_string()]);
        run_owned(&args);
        runs.push(outputs(&out));
    }
    assert!(runs[0].len() >= 9);
    assert_eq!(runs[0], runs[1]);

    let mut evals = Vec::new();
    for (i, jobs) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("eval{i}"));
        ok(&[
            "evaluate",
            "--pairs",
            s(&fixture("eval_pairs.jsonl")),
            "--dict",
            s(&fixture("toy_medical_dict.tsv")),
            "--seed",
            "17",
            "--jobs",
            jobs,
            "--out",
            s(&out),
        ]);
        evals.push(outputs(&out));
    }
    assert_eq!(evals[0], evals[1]);
}

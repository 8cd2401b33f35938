use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dialeval::analytics::{
    evaluate, meta_from_csv, meta_to_csv, EvalConfig, ExampleMeta, ScoreTable, UTTERANCE_TABLE,
};
use dialeval::corpus::SourceModel;
use tempfile::TempDir;

fn dialeval(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dialeval"))
        .current_dir(root)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> Output {
    let out = dialeval(root, args);
    assert!(
        out.status.success(),
        "dialeval {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// The resolved configuration printed on stdout, minus the comment line.
fn resolved(out: &Output) -> toml::Table {
    let text = String::from_utf8_lossy(&out.stdout);
    let body: String = text
        .lines()
        .skip_while(|l| l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    body.parse().expect("stdout is TOML")
}

const SMALL: &str = "\
[synth]
contexts = 80
[prepare]
bpe_merges = 100
vocab_size = 200
[pretrain]
embed_dim = 8
utterance_hidden = 12
context_hidden = 12
latent_dim = 4
mlp_hidden = 12
decoder_hidden = 12
batches = 20
batch_size = 8
anneal_batches = 10
[adem]
pca_dim = 6
max_epochs = 5
patience = 2
[sweep]
fractions = [1.0, 0.5]
seeds = 1
";

fn workspace() -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    tmp
}

/// synth → prepare → pretrain → train → score → eval under `small.toml`.
fn text_pipeline(root: &Path, extra: &[&str]) {
    let run = |args: &[&str]| {
        let mut all = vec!["--config", "small.toml"];
        all.extend_from_slice(extra);
        all.extend_from_slice(args);
        ok(root, &all);
    };
    run(&["synth", "--out", "synth"]);
    run(&["prepare", "--dataset", "synth/dataset.jsonl", "--out", "prep"]);
    run(&["pretrain", "--prepared", "prep", "--out", "pre"]);
    run(&["train", "--prepared", "prep", "--encoder", "pre/encoder.ckpt", "--out", "adem"]);
    run(&[
        "score", "--prepared", "prep", "--encoder", "pre/encoder.ckpt", "--adem", "adem/adem.ckpt",
        "--out", "scores",
    ]);
    run(&["eval", "--scores", "scores", "--out", "eval"]);
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&dialeval(tmp.path(), &["--help"])), 0);
    assert_eq!(code(&dialeval(tmp.path(), &["--version"])), 0);
    assert_eq!(code(&dialeval(tmp.path(), &["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    assert_eq!(code(&dialeval(root, &[])), 1);
    assert_eq!(code(&dialeval(root, &["frobnicate"])), 1);
    assert_eq!(code(&dialeval(root, &["synth"])), 1, "missing --out");
    let out = dialeval(root, &["fit-pca", "--out", "x"]);
    assert_eq!(code(&out), 1, "no data source: {}", stderr(&out));
}

#[test]
fn invalid_configuration_lists_every_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    fs::write(root.join("bad.toml"), "[adem]\nlr = -1.0\nbatch_size = 0\n").unwrap();
    let out = dialeval(root, &["--config", "bad.toml", "synth", "--out", "s"]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("lr"), "{err}");
    assert!(err.contains("batch_size"), "{err}");
    assert!(!root.join("s").exists());

    fs::write(root.join("typo.toml"), "[adem]\nlearning_rate = 0.1\n").unwrap();
    let out = dialeval(root, &["--config", "typo.toml", "synth", "--out", "s"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("learning_rate"), "{}", stderr(&out));

    let out = dialeval(root, &["--config", "missing.toml", "synth", "--out", "s"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let out = dialeval(root, &["prepare", "--dataset", "nope.jsonl", "--out", "p"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    fs::write(
        root.join("bad.jsonl"),
        "{\"context\": {\"context_id\": \"a\", \"utterances\": []}}\n",
    )
    .unwrap();
    let out = dialeval(root, &["prepare", "--dataset", "bad.jsonl", "--out", "p"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
}

#[test]
fn report_on_empty_directory_names_missing_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    fs::create_dir(root.join("empty")).unwrap();
    let out = dialeval(root, &["report", "--results", "empty", "--out", "r"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    for t in ["utterance_correlation.csv", "system_correlation.csv", "length_bias.csv"] {
        assert!(err.contains(t), "{err}");
    }
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let out = ok(root, &["synth", "--out", "a"]);
    let cfg = resolved(&out);
    assert_eq!(cfg["synth"]["contexts"].as_integer(), Some(1026));
    assert_eq!(cfg["run"]["seed"].as_integer(), Some(0));

    fs::write(root.join("c.toml"), "[run]\nseed = 5\n[synth]\ncontexts = 30\ndim = 7\n").unwrap();
    let out = ok(root, &["--config", "c.toml", "synth", "--out", "b"]);
    let cfg = resolved(&out);
    assert_eq!(cfg["synth"]["contexts"].as_integer(), Some(30));
    assert_eq!(cfg["run"]["seed"].as_integer(), Some(5));
    // untouched keys keep their defaults
    assert_eq!(cfg["synth"]["responses_per_context"].as_integer(), Some(4));

    let out = ok(root, &["--config", "c.toml", "--seed", "9", "synth", "--contexts", "12", "--out", "c"]);
    let cfg = resolved(&out);
    assert_eq!(cfg["synth"]["contexts"].as_integer(), Some(12));
    assert_eq!(cfg["synth"]["dim"].as_integer(), Some(7));
    assert_eq!(cfg["run"]["seed"].as_integer(), Some(9));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("# resolved configuration (seed 9)"));

    // the written config is the resolved one
    let written: toml::Table = fs::read_to_string(root.join("c/config.toml")).unwrap().parse().unwrap();
    assert_eq!(written, cfg);
    let lines = fs::read_to_string(root.join("c/dataset.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 12 * 4);
}

#[test]
fn published_training_preset_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    ok(root, &["synth", "--kind", "realizable", "--out", "emb"]);
    let out = ok(
        root,
        &[
            "train", "--embeddings", "emb", "--gamma", "0.075", "--lr", "0.01", "--batch-size", "32",
            "--pca-dim", "50", "--max-epochs", "3", "--out", "adem",
        ],
    );
    let cfg = resolved(&out);
    assert_eq!(cfg["adem"]["gamma"].as_float(), Some(0.075));
    assert_eq!(cfg["adem"]["lr"].as_float(), Some(0.01));
    assert_eq!(cfg["adem"]["batch_size"].as_integer(), Some(32));
    assert_eq!(cfg["adem"]["pca_dim"].as_integer(), Some(50));
    let log = fs::read_to_string(root.join("adem/train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_pearson,val_spearman\n"));
    assert_eq!(log.lines().count(), 1 + 4);
}

#[test]
fn eval_of_a_perfect_metric_gives_unit_correlation() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let sources = [SourceModel::Tfidf, SourceModel::De, SourceModel::Hred, SourceModel::Human];
    let meta: Vec<ExampleMeta> = (0..40)
        .map(|i| ExampleMeta {
            context_id: format!("c{}", i / 4),
            source_model: sources[i % 4],
            human_score: (1 + (i * 7) % 5) as f64,
            response_len: 1 + i % 9,
            reference_len: 5,
        })
        .collect();
    let human: Vec<f64> = meta.iter().map(|m| m.human_score).collect();
    let mut table = ScoreTable {
        context_ids: meta.iter().map(|m| m.context_id.clone()).collect(),
        columns: Vec::new(),
    };
    table.push("oracle", human.clone()).unwrap();
    table.push("shifted", human.iter().map(|h| 2.0 * h + 1.0).collect()).unwrap();
    fs::create_dir(root.join("s")).unwrap();
    fs::write(root.join("s/scores.csv"), table.to_csv().unwrap()).unwrap();
    fs::write(root.join("s/meta.csv"), meta_to_csv(&meta).unwrap()).unwrap();
    ok(root, &["eval", "--scores", "s", "--out", "e"]);

    let text = fs::read_to_string(root.join("e").join(UTTERANCE_TABLE)).unwrap();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().clone();
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let p: f64 = row[col("pearson")].parse().unwrap();
        let s: f64 = row[col("spearman")].parse().unwrap();
        assert!((p - 1.0).abs() < 1e-12, "{row:?}");
        assert!((s - 1.0).abs() < 1e-12, "{row:?}");
    }
    ok(root, &["report", "--results", "e", "--out", "r"]);
    let report = fs::read_to_string(root.join("r/report.txt")).unwrap();
    assert!(report.contains("oracle"));
    assert!(report.contains("1.0000 (0.0000)"), "{report}");
}

#[test]
fn pipeline_tables_match_in_memory_evaluation() {
    let tmp = workspace();
    let root = tmp.path();
    text_pipeline(root, &["--seed", "3"]);

    let table = ScoreTable::from_csv(&fs::read_to_string(root.join("scores/scores.csv")).unwrap()).unwrap();
    let names: Vec<&str> = table.columns.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "meteor", "adem"]);
    let meta = meta_from_csv(&fs::read_to_string(root.join("scores/meta.csv")).unwrap()).unwrap();
    let tables = evaluate(&meta, &table, &EvalConfig { seed: 3, ..EvalConfig::default() }).unwrap();
    assert!(!tables.files.is_empty());
    for (name, content) in &tables.files {
        let on_disk = fs::read_to_string(root.join("eval").join(name)).unwrap();
        assert_eq!(&on_disk, content, "{name}");
    }

    ok(root, &["report", "--results", "eval", "--out", "report"]);
    let report = fs::read_to_string(root.join("report/report.txt")).unwrap();
    for section in ["Utterance-level", "System-level", "Length bias", "Failure analysis"] {
        assert!(report.contains(section), "{section} missing:\n{report}");
    }
}

#[test]
fn manifests_record_inputs_outputs_and_config() {
    let tmp = workspace();
    let root = tmp.path();
    text_pipeline(root, &[]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("scores/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "score");
    assert_eq!(manifest["seed"], 0);
    let inputs = manifest["inputs"].as_array().unwrap();
    assert!(inputs.iter().any(|i| i["path"].as_str().unwrap().ends_with("adem.ckpt")));
    for entry in manifest["outputs"].as_array().unwrap() {
        let p = root.join("scores").join(entry["path"].as_str().unwrap());
        let bytes = fs::read(&p).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap().len(), 64);
        assert!(!bytes.is_empty(), "{}", p.display());
    }
    let config = fs::read(root.join("scores/config.toml")).unwrap();
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert!(outputs.contains(&"scores.csv") && outputs.contains(&"config.toml"));
    let config_entry = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["path"] == "config.toml")
        .unwrap();
    assert_eq!(manifest["config_hash"], config_entry["sha256"]);
    assert!(!config.is_empty());
}

#[test]
fn sequential_and_parallel_runs_write_the_same_artifacts() {
    let par = workspace();
    let seq = workspace();
    text_pipeline(par.path(), &[]);
    text_pipeline(seq.path(), &["--sequential"]);
    for file in [
        "prep/train.jsonl",
        "prep/vocab.txt",
        "pre/encoder.ckpt",
        "pre/pretrain_log.csv",
        "adem/adem.ckpt",
        "adem/train_log.csv",
        "scores/scores.csv",
        "eval/utterance_correlation.csv",
        "eval/system_correlation.csv",
    ] {
        assert_eq!(
            fs::read(par.path().join(file)).unwrap(),
            fs::read(seq.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn timing_is_opt_in_and_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    ok(root, &["synth", "--kind", "realizable", "--dim", "8", "--out", "emb"]);
    ok(root, &["train", "--embeddings", "emb", "--pca-dim", "8", "--max-epochs", "2", "--out", "adem"]);
    ok(root, &["score", "--embeddings", "emb", "--adem", "adem/adem.ckpt", "--out", "plain"]);
    assert!(!root.join("plain/timing.json").exists());
    ok(
        root,
        &["score", "--embeddings", "emb", "--adem", "adem/adem.ckpt", "--timing", "--out", "timed"],
    );
    let t: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("timed/timing.json")).unwrap()).unwrap();
    assert!(t["adem_seconds"].as_f64().unwrap() >= 0.0);
    ok(root, &["eval", "--scores", "timed", "--out", "eval"]);
    ok(
        root,
        &["report", "--results", "eval", "--timing", "timed/timing.json", "--out", "report"],
    );
    let report = fs::read_to_string(root.join("report/report.txt")).unwrap();
    assert!(report.contains("ADEM: "), "{report}");
}

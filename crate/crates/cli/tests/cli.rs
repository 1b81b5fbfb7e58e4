use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const FIG1: &str = r#"{"term":"sql","tokens":["sql","is","a","language","for","querying","databases"],"pos":["NN","VBZ","DT","NN","IN","VBG","NNS"],"hypernym":"language"}"#;

fn defhyper(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defhyper"))
        .args(args)
        .env_remove("DEFHYPER_CACHE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = defhyper(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic corpus and a model trained on its first 80%, shared
/// by the tests that only read them.
struct Fixture {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    model: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus.jsonl");
        let model = dir.path().join("model.json");
        ok(&["synth", "--output", s(&corpus), "--records", "1000", "--seed", "7"]);
        ok(&[
            "train", "--corpus", s(&corpus), "--output", s(&model), "--train-frac", "0.8", "--epochs", "8",
            "--hidden", "16",
        ]);
        Fixture {
            _dir: dir,
            corpus,
            model,
        }
    })
}

#[test]
fn train_writes_model_and_decreasing_loss_log() {
    let f = fixture();
    let log = fs::read_to_string(f.model.with_file_name("model.loss.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("stage,epoch,loss"));
    let stage1: Vec<f64> = lines
        .filter(|l| l.starts_with("stage1,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(stage1.len(), 8);
    assert!(stage1.last() < stage1.first(), "{stage1:?}");
    assert!(log.contains("\nrefine,30,"));
}

#[test]
fn identical_runs_give_identical_files() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again.json");
    ok(&[
        "train", "--corpus", s(&f.corpus), "--output", s(&again), "--train-frac", "0.8", "--epochs", "8",
        "--hidden", "16",
    ]);
    assert_eq!(fs::read(&again).unwrap(), fs::read(&f.model).unwrap());
    assert_eq!(
        fs::read(dir.path().join("again.loss.csv")).unwrap(),
        fs::read(f.model.with_file_name("model.loss.csv")).unwrap()
    );
}

#[test]
fn eval_writes_metrics_and_details() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("m.csv");
    let details = dir.path().join("d.tsv");
    let stdout = ok(&[
        "eval", "--model", s(&f.model), "--corpus", s(&f.corpus), "--train-frac", "0.8", "--metrics",
        s(&metrics), "--details", s(&details),
    ]);
    assert!(stdout.starts_with("neural(pos): "), "{stdout}");
    let m = fs::read_to_string(&metrics).unwrap();
    let mut rows = m.lines();
    assert_eq!(rows.next(), Some("precision,recall,f1,predicted,correct,total_gold"));
    let cells: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert_eq!(cells[5], "200");
    assert!(cells[2].parse::<f64>().unwrap() > 0.8, "{m}");

    let d = fs::read_to_string(&details).unwrap();
    assert_eq!(d.lines().next(), Some("term\tpredicted\tgold\tcorrect"));
    assert_eq!(d.lines().count(), 201);
    let correct = d.lines().skip(1).filter(|l| l.ends_with("\ttrue")).count();
    assert_eq!(correct.to_string(), cells[4]);
}

#[test]
fn threshold_one_abstains_everywhere() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("m.csv");
    ok(&[
        "eval", "--model", s(&f.model), "--corpus", s(&f.corpus), "--train-frac", "0.8", "--threshold", "1.0",
        "--metrics", s(&metrics),
    ]);
    let m = fs::read_to_string(&metrics).unwrap();
    assert_eq!(m.lines().nth(1), Some("0.0000,0.0000,0.0000,0,0,200"));
}

#[test]
fn predict_on_the_running_example() {
    let f = fixture();
    let out = ok(&[
        "predict",
        "--model",
        s(&f.model),
        "--sentence",
        "sql is a language for querying databases",
    ]);
    assert!(out.starts_with("position\tword\tp_init\tp_final\n"), "{out}");
    assert!(out.ends_with("selected: language\n"), "{out}");
    // explicit tags and term give the same selection
    let out = ok(&[
        "predict",
        "--model",
        s(&f.model),
        "--sentence",
        "sql is a language for querying databases",
        "--tags",
        "NN VBZ DT NN IN VBG NNS",
        "--term",
        "sql",
    ]);
    assert!(out.ends_with("selected: language\n"), "{out}");
}

#[test]
fn stats_on_training_split() {
    let f = fixture();
    let out = ok(&["stats", "--corpus", s(&f.corpus)]);
    assert_eq!(out.lines().next(), Some("pos,p1_n,p2_n,p1_h,p2_h"));
    let row: Vec<&str> = out.lines().find(|l| l.starts_with("IN,")).unwrap().split(',').collect();
    let (p1_h, p2_h): (f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap());
    assert!(p2_h > p1_h, "{out}");
}

#[test]
fn sweep_emits_one_row_per_value() {
    let f = fixture();
    let out = ok(&[
        "sweep", "--corpus", s(&f.corpus), "--axis", "window", "--values", "2,3,4", "--epochs", "2",
        "--hidden", "8",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "value,precision,recall,f1");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("2,") && lines[3].starts_with("4,"));
}

#[test]
fn baseline_models_share_the_eval_schema() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("tree.json");
    let metrics = dir.path().join("m.csv");
    ok(&[
        "baseline", "--corpus", s(&f.corpus), "--kind", "decision-tree", "--output", s(&model), "--train-frac",
        "0.8",
    ]);
    let stdout = ok(&[
        "eval", "--model", s(&model), "--corpus", s(&f.corpus), "--train-frac", "0.8", "--metrics",
        s(&metrics),
    ]);
    assert!(stdout.starts_with("decision-tree: "), "{stdout}");
    let m = fs::read_to_string(&metrics).unwrap();
    assert_eq!(m.lines().next(), Some("precision,recall,f1,predicted,correct,total_gold"));
}

#[test]
fn prepare_reports_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    let out = dir.path().join("corpus.jsonl");
    let rejects = dir.path().join("rejects.txt");
    fs::write(&raw, format!("{FIG1}\n")).unwrap();
    let stdout = ok(&["prepare", "--input", s(&raw), "--output", s(&out)]);
    assert_eq!(stdout, "loaded 1 definition(s), rejected 0\n");
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1);

    fs::write(&raw, format!("{FIG1}\n{{not json\n")).unwrap();
    let stdout = ok(&["prepare", "--input", s(&raw), "--output", s(&out), "--rejects", s(&rejects)]);
    assert_eq!(stdout, "loaded 1 definition(s), rejected 1\n");
    assert!(fs::read_to_string(&rejects).unwrap().starts_with("line 2: "));

    fs::write(&raw, "").unwrap();
    let result = defhyper(&["prepare", "--input", s(&raw), "--output", s(&out)]);
    assert!(result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("empty"));
}

#[test]
fn usage_and_version_errors() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    fs::write(&corpus, format!("{FIG1}\n")).unwrap();
    let model = dir.path().join("m.json");
    let out = defhyper(&["train", "--corpus", s(&corpus), "--output", s(&model), "--mode", "hybrid-embed"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("top-K"));
    assert!(!model.exists());

    fs::write(&model, r#"{"version": 99, "kind": "neural"}"#).unwrap();
    let out = defhyper(&["eval", "--model", s(&model), "--corpus", s(&corpus)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 99"));
}

#[test]
fn fetch_offline_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    fs::create_dir(&cache).unwrap();
    fs::write(
        cache.join("sql.json"),
        r#"{"items":[{"excerpt":"SQL is a language for querying databases.","tag_name":"sql"}],"has_more":false,"quota_remaining":100}"#,
    )
    .unwrap();
    let tags = dir.path().join("tags.txt");
    fs::write(&tags, "sql mysql\n").unwrap();
    let raw = dir.path().join("raw.jsonl");
    let out = Command::new(env!("CARGO_BIN_EXE_defhyper"))
        .args(["fetch-so", "--tags", s(&tags), "--output", s(&raw), "--offline", "--annotate-pattern"])
        .env("DEFHYPER_CACHE", &cache)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mysql"));
    let text = fs::read_to_string(&raw).unwrap();
    let record: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(record["term"], "sql");
    assert_eq!(record["hypernym"], "language");
    assert_eq!(record["tag_partners"], serde_json::json!(["mysql"]));

    // the fetched record goes straight through prepare
    let corpus = dir.path().join("corpus.jsonl");
    let stdout = ok(&["prepare", "--input", s(&raw), "--output", s(&corpus)]);
    assert_eq!(stdout, "loaded 1 definition(s), rejected 0\n");
}

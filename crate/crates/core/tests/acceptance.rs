//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any gating criterion fails.
//!
//! Run with `cargo test -p defhyper --test acceptance -- --nocapture`.
//! Set `DEFHYPER_WCL` to an annotated JSONL corpus to run the optional
//! real-data check.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use defhyper::baselines::{BaselineKind, BaselineModel};
use defhyper::cograph::CooccurrenceGraph;
use defhyper::corpus::{synth_generate, Corpus, SynthConfig};
use defhyper::eval::{pos_position_stats, score_definitions, sweep, Metrics, SweepAxis};
use defhyper::model::{HypernymModel, Mode, ModelConfig, Stage1};
use defhyper::neural::{dropout_mask, grad_check, Parameters};
use defhyper::postag::PosType;
use defhyper::rng;
use rand::Rng;

/// Data-dependent check; reported but never fails the suite.
const STRETCH: &str = "9";

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: Option<bool>,
    detail: String,
}

#[derive(Default)]
struct Report {
    rows: Vec<Outcome>,
}

impl Report {
    fn record(&mut self, id: &'static str, name: &'static str, pass: bool, detail: String) {
        println!("[{}] criterion {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.rows.push(Outcome {
            id,
            name,
            pass: Some(pass),
            detail,
        });
    }

    fn skip(&mut self, id: &'static str, name: &'static str, detail: String) {
        println!("[SKIP] criterion {id} {name}: {detail}");
        self.rows.push(Outcome {
            id,
            name,
            pass: None,
            detail,
        });
    }
}

fn evaluate(model: &HypernymModel, test: &Corpus) -> Metrics {
    let preds = model.predict_all(&test.definitions).unwrap();
    score_definitions(&preds, &test.definitions).unwrap()
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn gradient_oracle(report: &mut Report) {
    let start = Instant::now();
    let mut r = rng::stream(2024, 0);
    let mut net = Stage1::new(PosType::ALL.len(), None, 8, &mut r);
    let batch = 16;
    let ids: Vec<Vec<u32>> = (0..batch)
        .map(|_| (0..6).map(|_| r.random_range(0..16)).collect())
        .collect();
    let ids: Vec<&[u32]> = ids.iter().map(Vec::as_slice).collect();
    let labels: Vec<f64> = (0..batch).map(|_| f64::from(r.random_bool(0.3))).collect();
    let weights = vec![1.0; batch];
    let mask = dropout_mask(batch, 16, 0.5, &mut r);
    let loss = |n: &Stage1| Stage1::loss(&n.forward(&ids, Some(mask.clone())).unwrap(), &labels, &weights);
    let pass = net.forward(&ids, Some(mask.clone())).unwrap();
    let grad = net.backward(&pass, &ids, &labels, &weights);
    // smaller steps let roundoff swamp gradients near 1e-8
    let eps = 1e-4;
    let good = grad_check(&mut net, &grad, eps, loss);

    let mut corrupted = grad.clone();
    let slot = &mut corrupted.tensors_mut()[1][3];
    *slot = *slot * 1.5 + 1e-3;
    let bad = grad_check(&mut net, &corrupted, eps, loss);
    let elapsed = start.elapsed();

    let ok = good.max_relative_error <= 1e-4 && bad.max_relative_error > 1e-4 && elapsed < Duration::from_secs(10);
    report.record(
        "1",
        "gradient oracle",
        ok,
        format!(
            "max rel err {:.2e} over {} params (<= 1e-4), corrupted gradient err {:.2e} (> 1e-4), {:.2}s (< 10s)",
            good.max_relative_error,
            good.checked,
            bad.max_relative_error,
            elapsed.as_secs_f64()
        ),
    );
}

fn polarization(report: &mut Report, train: &Corpus) {
    let table = pos_position_stats(&train.definitions);
    let hyper = |pos| table.row(pos).and_then(|r| r.hypernym);
    let in_p2 = hyper(PosType::IN).map(|(_, p2)| p2).unwrap_or(0.0);
    let dt_p1 = hyper(PosType::DT).map(|(p1, _)| p1).unwrap_or(0.0);
    let sums_exact = table.rows.iter().all(|r| {
        [r.non_hypernym, r.hypernym]
            .iter()
            .flatten()
            .all(|(a, b)| a + b == 1.0)
    });
    report.record(
        "5",
        "position polarization",
        in_p2 >= 0.9 && dt_p1 >= 0.9 && sums_exact,
        format!("IN P2(H) = {in_p2:.4} (>= 0.9), DT P1(H) = {dt_p1:.4} (>= 0.9), P1+P2 = 1 on every row: {sums_exact}"),
    );
}

fn graph_oracle(report: &mut Report) {
    let mut r = rng::stream(77, 0);
    let mut failures = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=50);
        let names: Vec<String> = (0..n).map(|k| format!("h{k}")).collect();
        let mut hypernym_map = BTreeMap::new();
        for (k, name) in names.iter().enumerate() {
            hypernym_map.insert(format!("t{k}"), name.clone());
        }
        let sets: Vec<Vec<String>> = (0..r.random_range(1..80))
            .map(|_| {
                (0..r.random_range(1..6))
                    .map(|_| {
                        let k = r.random_range(0..n + 5);
                        format!("t{k}")
                    })
                    .collect()
            })
            .collect();
        let graph = CooccurrenceGraph::build(&sets, &hypernym_map);

        // brute force: two hypernyms are neighbours if some set maps to both
        let mapped: Vec<BTreeSet<&String>> = sets
            .iter()
            .map(|s| s.iter().filter_map(|t| hypernym_map.get(t)).collect())
            .collect();
        for u in &names {
            let in_graph = mapped.iter().any(|s| s.contains(u));
            let count = names
                .iter()
                .filter(|v| *v != u && mapped.iter().any(|s| s.contains(u) && s.contains(v)))
                .count();
            let scaled = graph.degree_centrality(u) * graph.max_degree() as f64;
            let integral = scaled.round();
            if (scaled - integral).abs() > 1e-9
                || integral as usize != count
                || graph.contains(u) != in_graph
            {
                failures += 1;
            }
        }
    }
    report.record(
        "6",
        "graph oracle",
        failures == 0,
        format!("{failures} mismatching nodes over 100 random graphs (n <= 50)"),
    );
}

fn wcl_stretch(report: &mut Report) {
    let Some(path) = std::env::var_os("DEFHYPER_WCL").map(PathBuf::from) else {
        report.skip("9", "annotated corpus stretch", "DEFHYPER_WCL not set".into());
        return;
    };
    let (corpus, _) = Corpus::load(&path).unwrap();
    let (train, test) = corpus.split(0.8, 42).unwrap();
    let pos = evaluate(&HypernymModel::train(&train, &ModelConfig::default()).unwrap(), &test);
    let word_config = ModelConfig {
        mode: Mode::Word,
        ..ModelConfig::default()
    };
    let word = evaluate(&HypernymModel::train(&train, &word_config).unwrap(), &test);
    report.record(
        "9",
        "annotated corpus stretch",
        pos.f1 >= 0.8 && pos.f1 - word.f1 >= 0.05,
        format!("pos F1 {} (>= 80), word F1 {} (gap >= 5)", pct(pos.f1), pct(word.f1)),
    );
}

#[test]
fn acceptance() {
    let mut report = Report::default();

    gradient_oracle(&mut report);

    let corpus = synth_generate(&SynthConfig::default(), 42).unwrap();
    let (train, test) = corpus.split(0.8, 42).unwrap();
    let base = ModelConfig::default();

    // 2: end to end, PoS versus word
    let start = Instant::now();
    let pos_model = HypernymModel::train(&train, &base).unwrap();
    let pos = evaluate(&pos_model, &test);
    let word_config = ModelConfig {
        mode: Mode::Word,
        ..base.clone()
    };
    let word = evaluate(&HypernymModel::train(&train, &word_config).unwrap(), &test);
    let elapsed = start.elapsed();
    report.record(
        "2",
        "synthetic end-to-end",
        pos.f1 >= 0.95 && pos.f1 - word.f1 >= 0.05 && elapsed < Duration::from_secs(300),
        format!(
            "pos F1 {} (>= 95), word F1 {} (gap {} >= 5 points), {:.1}s (< 300s)",
            pct(pos.f1),
            pct(word.f1),
            pct(pos.f1 - word.f1),
            elapsed.as_secs_f64()
        ),
    );

    // 3: baselines on integer-encoded windows
    let mut scores = Vec::new();
    for kind in BaselineKind::ALL {
        let model = BaselineModel::train(&train, kind, base.window, base.threshold).unwrap();
        let preds = model.predict_all(&test.definitions).unwrap();
        scores.push((kind, score_definitions(&preds, &test.definitions).unwrap().f1));
    }
    report.record(
        "3",
        "baseline ordering",
        scores.iter().all(|(_, f1)| pos.f1 > *f1),
        format!(
            "pos F1 {} vs {}",
            pct(pos.f1),
            scores
                .iter()
                .map(|(k, f1)| format!("{} {}", k.as_str(), pct(*f1)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );

    // 4: hybrid degeneracies
    let k0 = ModelConfig {
        mode: Mode::HybridOnehot,
        topk: Some(0),
        ..base.clone()
    };
    let k0_model = HypernymModel::train(&train, &k0).unwrap();
    let k0_metrics = evaluate(&k0_model, &test);
    let mut best = (0, f64::NEG_INFINITY);
    for k in [25, 100, 400] {
        let config = ModelConfig {
            mode: Mode::HybridEmbed,
            topk: Some(k),
            ..base.clone()
        };
        let f1 = evaluate(&HypernymModel::train(&train, &config).unwrap(), &test).f1;
        if f1 > best.1 {
            best = (k, f1);
        }
    }
    let k0_exact = k0_metrics == pos && k0_model.history == pos_model.history;
    report.record(
        "4",
        "hybrid degeneracies",
        k0_exact && best.1 <= pos.f1 + 0.01,
        format!(
            "K=0 reproduces pos metrics and losses exactly: {k0_exact}; best hybrid-embed K={} F1 {} <= pos {} + 1",
            best.0,
            pct(best.1),
            pct(pos.f1)
        ),
    );

    polarization(&mut report, &train);
    graph_oracle(&mut report);

    // 7: determinism and persistence
    let dir = tempfile::tempdir().unwrap();
    let again = HypernymModel::train(&train, &base).unwrap();
    let a = pos_model.to_json().unwrap();
    let b = again.to_json().unwrap();
    let path = dir.path().join("model.json");
    pos_model.save(&path).unwrap();
    let loaded = HypernymModel::load(&path).unwrap();
    let reloaded = evaluate(&loaded, &test);
    let identical = a == b;
    let round_trip = loaded == pos_model && loaded.to_json().unwrap() == a;
    let same_metrics = reloaded == pos && reloaded.f1.to_bits() == pos.f1.to_bits();
    report.record(
        "7",
        "determinism and persistence",
        identical && round_trip && same_metrics,
        format!("identical files: {identical}, exact round trip: {round_trip}, reloaded metrics identical: {same_metrics}"),
    );

    // 8: hyperparameter flatness
    let spread = |axis, values: &[f64]| {
        let rows = sweep(axis, values, &base, &corpus, 0.8, 42).unwrap();
        let f1s: Vec<f64> = rows.iter().map(|r| r.outcome.as_ref().map(|m| m.f1).unwrap_or(f64::NAN)).collect();
        let hi = f1s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = f1s.iter().copied().fold(f64::INFINITY, f64::min);
        (hi - lo, f1s)
    };
    let (window_spread, window_f1) = spread(SweepAxis::Window, &[2.0, 3.0, 4.0, 5.0, 6.0]);
    let (hidden_spread, hidden_f1) = spread(SweepAxis::Hidden, &[32.0, 64.0, 128.0]);
    let fmt = |v: &[f64]| v.iter().map(|x| pct(*x)).collect::<Vec<_>>().join("/");
    report.record(
        "8",
        "hyperparameter flatness",
        window_spread <= 0.05 && hidden_spread <= 0.05,
        format!(
            "window L=2..6 F1 {} (spread {}), hidden 32/64/128 F1 {} (spread {}), both <= 5 points",
            fmt(&window_f1),
            pct(window_spread),
            fmt(&hidden_f1),
            pct(hidden_spread)
        ),
    );

    wcl_stretch(&mut report);

    println!("\nsummary:");
    for row in &report.rows {
        let status = match row.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        println!("  {status} {} {} ({})", row.id, row.name, row.detail);
    }
    let failed: Vec<&str> = report
        .rows
        .iter()
        .filter(|r| r.pass == Some(false) && r.id != STRETCH)
        .map(|r| r.id)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

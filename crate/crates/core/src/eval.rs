//! Scoring, PoS position statistics and hyperparameter sweeps.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::{Corpus, Definition};
use crate::error::{Error, Result};
use crate::model::{HypernymModel, ModelConfig, Prediction};
use crate::postag::{PosType, POS_DIM};

/// Per-definition selection scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub predicted: usize,
    pub correct: usize,
    pub total_gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(predicted: usize, correct: usize, total_gold: usize) -> Metrics {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, total_gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            predicted,
            correct,
            total_gold,
            precision,
            recall,
            f1,
        }
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P={:.4} R={:.4} F1={:.4} ({} correct / {} predicted / {} gold)",
            self.precision, self.recall, self.f1, self.correct, self.predicted, self.total_gold
        )
    }
}

/// A selection is correct iff it lies in the gold set; abstentions count
/// toward `total_gold` only.
pub fn score(predictions: &[Prediction], gold: &[BTreeSet<usize>]) -> Result<Metrics> {
    if predictions.len() != gold.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} gold sets",
            predictions.len(),
            gold.len()
        )));
    }
    let mut predicted = 0;
    let mut correct = 0;
    for (p, g) in predictions.iter().zip(gold) {
        if let Some(sel) = p.selected {
            predicted += 1;
            if g.contains(&sel) {
                correct += 1;
            }
        }
    }
    let total_gold = gold.iter().filter(|g| !g.is_empty()).count();
    Ok(Metrics::from_counts(predicted, correct, total_gold))
}

pub fn score_definitions(predictions: &[Prediction], definitions: &[Definition]) -> Result<Metrics> {
    let gold: Vec<BTreeSet<usize>> = definitions.iter().map(|d| d.gold.clone()).collect();
    score(predictions, &gold)
}

/// One PoS row: how often the tag sits immediately before (`p1`) or after
/// (`p2`) a non-hypernym / hypernym candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionRow {
    pub pos: PosType,
    /// `(P1(N), P2(N))`, absent without observations.
    pub non_hypernym: Option<(f64, f64)>,
    /// `(P1(H), P2(H))`.
    pub hypernym: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PositionTable {
    pub rows: Vec<PositionRow>,
}

impl PositionTable {
    pub fn row(&self, pos: PosType) -> Option<&PositionRow> {
        self.rows.iter().find(|r| r.pos == pos)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pos,p1_n,p2_n,p1_h,p2_h\n");
        let cell = |v: Option<(f64, f64)>| match v {
            Some((a, b)) => format!("{a:.4},{b:.4}"),
            None => ",".to_string(),
        };
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.pos, cell(r.non_hypernym), cell(r.hypernym));
        }
        out
    }
}

/// Neighbour statistics with a window of one on each side. Padding is not
/// counted; rows appear in canonical PoS order when observed at all.
pub fn pos_position_stats(definitions: &[Definition]) -> PositionTable {
    // [pos][class][before=0/after=1]
    let mut counts = [[[0u64; 2]; 2]; POS_DIM];
    for d in definitions {
        for c in &d.candidates {
            let class = usize::from(d.is_gold(c.position));
            let i = c.position;
            if i >= 2 {
                counts[d.tags[i - 2].index() - 1][class][0] += 1;
            }
            if i < d.tags.len() {
                counts[d.tags[i].index() - 1][class][1] += 1;
            }
        }
    }
    let ratio = |c: [u64; 2]| {
        let total = c[0] + c[1];
        (total > 0).then(|| {
            let p1 = c[0] as f64 / total as f64;
            (p1, 1.0 - p1)
        })
    };
    let rows = PosType::ALL
        .iter()
        .enumerate()
        .filter_map(|(k, &pos)| {
            let non_hypernym = ratio(counts[k][0]);
            let hypernym = ratio(counts[k][1]);
            (non_hypernym.is_some() || hypernym.is_some()).then_some(PositionRow {
                pos,
                non_hypernym,
                hypernym,
            })
        })
        .collect();
    PositionTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Window,
    Hidden,
    TrainRatio,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<SweepAxis> {
        match s {
            "window" => Ok(SweepAxis::Window),
            "hidden" => Ok(SweepAxis::Hidden),
            "train-ratio" => Ok(SweepAxis::TrainRatio),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// Training or evaluation failure is recorded here, not propagated.
    pub outcome: Result<Metrics, String>,
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,precision,recall,f1\n");
    for r in rows {
        match &r.outcome {
            Ok(m) => {
                let _ = writeln!(out, "{},{:.4},{:.4},{:.4}", r.value, m.precision, m.recall, m.f1);
            }
            Err(_) => {
                let _ = writeln!(out, "{},,,", r.value);
            }
        }
    }
    out
}

fn integral(value: f64, what: &str) -> std::result::Result<usize, String> {
    if value >= 1.0 && value.fract() == 0.0 {
        Ok(value as usize)
    } else {
        Err(format!("{what} must be a positive integer, got {value}"))
    }
}

/// Trains and scores one model per value, everything else fixed. Every cell
/// uses the same seed; the window and hidden axes share one split.
pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    base: &ModelConfig,
    corpus: &Corpus,
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let shared = match axis {
        SweepAxis::TrainRatio => None,
        _ => Some(corpus.split(train_fraction, seed)?),
    };
    let cell = |value: f64| -> std::result::Result<Metrics, String> {
        let mut config = base.clone();
        let owned;
        let (train, test) = match axis {
            SweepAxis::Window => {
                config.window = integral(value, "window")?;
                let (a, b) = shared.as_ref().unwrap();
                (a, b)
            }
            SweepAxis::Hidden => {
                config.hidden = integral(value, "hidden size")?;
                let (a, b) = shared.as_ref().unwrap();
                (a, b)
            }
            SweepAxis::TrainRatio => {
                owned = corpus.split(value, seed).map_err(|e| e.to_string())?;
                (&owned.0, &owned.1)
            }
        };
        let model = HypernymModel::train(train, &config).map_err(|e| e.to_string())?;
        let preds = model.predict_all(&test.definitions).map_err(|e| e.to_string())?;
        score_definitions(&preds, &test.definitions).map_err(|e| e.to_string())
    };
    Ok(values
        .iter()
        .map(|&value| SweepRow {
            value,
            outcome: cell(value),
        })
        .collect())
}

//! Versioned JSON model files.
//!
//! Every file is an object with `version` and `kind`; the remaining fields
//! depend on the kind. Floats are written in shortest round-trip form, so a
//! load reproduces every weight bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{HypernymModel, ModelConfig, Prediction, Refiner, Stage1, TokenEncoder, TrainingHistory};
use crate::baselines::BaselineModel;
use crate::cograph::{CooccurrenceGraph, GraphExport};
use crate::corpus::Definition;
use crate::error::{Error, Result};
use crate::features::{FeatureContext, TrainStats};
use crate::neural::Parameters;

pub const FORMAT_VERSION: u64 = 1;
pub(crate) const NEURAL_KIND: &str = "neural";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Validates the envelope and returns `(kind, document)`.
pub fn read_envelope(text: &str) -> Result<(String, Value)> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
    let version = doc
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Corrupt("missing `version` field".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let kind = doc
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Corrupt("missing `kind` field".into()))?
        .to_string();
    Ok((kind, doc))
}

pub(crate) fn export_tensors<P: Parameters>(p: &P, out: &mut BTreeMap<String, TensorJson>) {
    for (name, t) in p.tensors() {
        out.insert(
            name,
            TensorJson {
                shape: t.shape,
                data: t.data.to_vec(),
            },
        );
    }
}

pub(crate) fn import_tensors<P: Parameters>(p: &mut P, weights: &mut BTreeMap<String, TensorJson>) -> Result<()> {
    let specs: Vec<(String, Vec<usize>)> = p.tensors().into_iter().map(|(n, t)| (n, t.shape)).collect();
    for ((name, shape), slot) in specs.into_iter().zip(p.tensors_mut()) {
        let t = weights
            .remove(&name)
            .ok_or_else(|| Error::Corrupt(format!("missing tensor `{name}`")))?;
        if t.shape != shape || t.data.len() != slot.len() {
            return Err(Error::Dimension(format!(
                "tensor `{name}` has shape {:?} with {} values, expected {shape:?}",
                t.shape,
                t.data.len()
            )));
        }
        slot.copy_from_slice(&t.data);
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeuralFile {
    version: u64,
    kind: String,
    config: ModelConfig,
    vocab: Vec<String>,
    weights: BTreeMap<String, TensorJson>,
    train_counts: BTreeMap<String, u64>,
    graph: GraphExport,
    history: TrainingHistory,
}

impl HypernymModel {
    pub fn to_json(&self) -> Result<String> {
        let mut weights = BTreeMap::new();
        export_tensors(&self.stage1, &mut weights);
        if let Some(r) = &self.refiner {
            export_tensors(r, &mut weights);
        }
        let file = NeuralFile {
            version: FORMAT_VERSION,
            kind: NEURAL_KIND.into(),
            config: self.config.clone(),
            vocab: self.encoder.vocabulary().to_vec(),
            weights,
            train_counts: self.context.stats.counts.clone(),
            graph: self.context.graph.export(),
            history: self.history.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<HypernymModel> {
        let (kind, doc) = read_envelope(text)?;
        if kind != NEURAL_KIND {
            return Err(Error::Corrupt(format!("expected a neural model, found kind `{kind}`")));
        }
        HypernymModel::from_document(doc)
    }

    fn from_document(doc: Value) -> Result<HypernymModel> {
        let file: NeuralFile = serde_json::from_value(doc).map_err(|e| Error::Corrupt(e.to_string()))?;
        file.config.validate()?;
        let config = file.config;
        let encoder = TokenEncoder::from_vocab(config.mode, file.vocab);
        let mut weights = file.weights;
        let mut stage1 = Stage1::zeros(
            encoder.token_count(),
            config.mode.embedded().then_some(config.embedding_dim),
            config.hidden,
        );
        import_tensors(&mut stage1, &mut weights)?;
        let refiner = if config.refine {
            let mut r = Refiner::zeros(config.refine_hidden);
            import_tensors(&mut r, &mut weights)?;
            Some(r)
        } else {
            None
        };
        if let Some(extra) = weights.keys().next() {
            return Err(Error::Corrupt(format!("unexpected tensor `{extra}`")));
        }
        Ok(HypernymModel {
            config,
            encoder,
            stage1,
            refiner,
            context: FeatureContext {
                stats: TrainStats {
                    counts: file.train_counts,
                },
                graph: CooccurrenceGraph::import(&file.graph)?,
            },
            history: file.history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<HypernymModel> {
        HypernymModel::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Either kind of model file, for commands that accept both.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Neural(HypernymModel),
    Baseline(BaselineModel),
}

impl AnyModel {
    pub fn from_json(text: &str) -> Result<AnyModel> {
        let (kind, doc) = read_envelope(text)?;
        if kind == NEURAL_KIND {
            Ok(AnyModel::Neural(HypernymModel::from_document(doc)?))
        } else {
            Ok(AnyModel::Baseline(BaselineModel::from_document(&kind, doc)?))
        }
    }

    pub fn load(path: &Path) -> Result<AnyModel> {
        AnyModel::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            AnyModel::Neural(m) => m.save(path),
            AnyModel::Baseline(m) => m.save(path),
        }
    }

    pub fn kind(&self) -> String {
        match self {
            AnyModel::Neural(m) => format!("{}({})", NEURAL_KIND, m.config.mode),
            AnyModel::Baseline(m) => m.kind.to_string(),
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            AnyModel::Neural(m) => m.config.threshold,
            AnyModel::Baseline(m) => m.threshold,
        }
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        match self {
            AnyModel::Neural(m) => m.set_threshold(threshold),
            AnyModel::Baseline(m) => m.set_threshold(threshold),
        }
    }

    pub fn predict_all(&self, definitions: &[Definition]) -> Result<Vec<Prediction>> {
        match self {
            AnyModel::Neural(m) => m.predict_all(definitions),
            AnyModel::Baseline(m) => m.predict_all(definitions),
        }
    }
}

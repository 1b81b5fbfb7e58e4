//! The full extraction pipeline: token encoding, stage-1 training, stage-2
//! refinement, prediction and persistence.

mod network;
mod persist;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_topk, Corpus, Definition};
use crate::error::{Error, Result};
use crate::features::{window_around, FeatureContext, RefinementFeatures};
use crate::neural::{dropout_mask, RmsProp};
use crate::postag::{PosType, POS_DIM};
use crate::rng;

pub use network::{Refiner, RefinerPass, Stage1, Stage1Pass, REFINE_INPUTS};
pub use persist::{read_envelope, AnyModel, TensorJson, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Pos,
    Word,
    HybridEmbed,
    HybridOnehot,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pos => "pos",
            Mode::Word => "word",
            Mode::HybridEmbed => "hybrid-embed",
            Mode::HybridOnehot => "hybrid-onehot",
        }
    }

    fn embedded(self) -> bool {
        matches!(self, Mode::Word | Mode::HybridEmbed)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "pos" => Ok(Mode::Pos),
            "word" => Ok(Mode::Word),
            "hybrid-embed" => Ok(Mode::HybridEmbed),
            "hybrid-onehot" => Ok(Mode::HybridOnehot),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: Mode,
    pub window: usize,
    pub hidden: usize,
    /// Required by the hybrid modes; caps the vocabulary in word mode.
    pub topk: Option<usize>,
    pub embedding_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Loss weight of positive (hypernym) instances.
    pub positive_weight: f64,
    pub refine: bool,
    pub refine_hidden: usize,
    pub refine_epochs: usize,
    pub refine_learning_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: Mode::Pos,
            window: 3,
            hidden: 64,
            topk: None,
            embedding_dim: 100,
            dropout: 0.5,
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
            epochs: 30,
            batch_size: 32,
            seed: 42,
            threshold: 0.5,
            positive_weight: 1.0,
            refine: true,
            refine_hidden: 8,
            refine_epochs: 30,
            refine_learning_rate: 1e-2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window < 1 {
            return bad("window must be at least 1".into());
        }
        if self.hidden < 1 || self.embedding_dim < 1 || self.refine_hidden < 1 {
            return bad("layer sizes must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate > 0.0 && self.refine_learning_rate > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.decay) || !(self.epsilon > 0.0) {
            return bad("decay must lie in [0, 1) and epsilon be positive".into());
        }
        if self.batch_size < 1 || self.epochs < 1 {
            return bad("batch size and epochs must be at least 1".into());
        }
        if !(self.positive_weight > 0.0 && self.positive_weight.is_finite()) {
            return bad("positive weight must be positive".into());
        }
        if matches!(self.mode, Mode::HybridEmbed | Mode::HybridOnehot) && self.topk.is_none() {
            return bad(format!("mode {} requires a top-K value", self.mode));
        }
        Ok(())
    }
}

/// Maps a definition's tokens to the integer ids the stage-1 network reads.
///
/// PoS and hybrid modes: word slot `k` for the `k`-th top word, then the 16
/// PoS slots (`K + index - 1`). Word mode: `0` is UNK, `1` the padding
/// element, vocabulary words from `2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEncoder {
    mode: Mode,
    words: Vec<String>,
    index: HashMap<String, u32>,
}

const UNK: u32 = 0;
const WORD_PAD: u32 = 1;

impl TokenEncoder {
    pub fn fit(train: &Corpus, config: &ModelConfig) -> TokenEncoder {
        let words = match (config.mode, config.topk) {
            (Mode::Pos, _) => Vec::new(),
            (Mode::Word, None) => train.frequency.keys().cloned().collect(),
            (_, k) => build_topk(train, k.unwrap_or(0)),
        };
        TokenEncoder::from_vocab(config.mode, words)
    }

    pub fn from_vocab(mode: Mode, words: Vec<String>) -> TokenEncoder {
        let offset = if mode == Mode::Word { 2 } else { 0 };
        let index = words
            .iter()
            .enumerate()
            .map(|(k, w)| (w.clone(), (k + offset) as u32))
            .collect();
        TokenEncoder { mode, words, index }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.words
    }

    pub fn token_count(&self) -> usize {
        match self.mode {
            Mode::Word => self.words.len() + 2,
            _ => self.words.len() + POS_DIM,
        }
    }

    fn pos_id(&self, p: PosType) -> u32 {
        (self.words.len() + p.index() - 1) as u32
    }

    fn pad(&self) -> u32 {
        match self.mode {
            Mode::Word => WORD_PAD,
            _ => self.pos_id(PosType::Null),
        }
    }

    /// One id per retained token of the definition.
    pub fn sequence(&self, definition: &Definition) -> Vec<u32> {
        definition
            .words
            .iter()
            .zip(&definition.tags)
            .map(|(w, &p)| {
                let hit = self.index.get(&w.to_lowercase()).copied();
                match (self.mode, hit) {
                    (Mode::Word, id) => id.unwrap_or(UNK),
                    (_, Some(id)) => id,
                    (_, None) => self.pos_id(p),
                }
            })
            .collect()
    }

    /// Pre window followed by post window (`2L` ids) around 1-based `position`.
    pub fn window(&self, sequence: &[u32], position: usize, window: usize) -> Vec<u32> {
        let (mut pre, post) = window_around(sequence, position, window, self.pad());
        pre.extend(post);
        pre
    }
}

/// Per-candidate stage-1 inputs for a list of definitions.
#[derive(Debug, Clone, Default)]
pub struct Instances {
    pub ids: Vec<Vec<u32>>,
    pub labels: Vec<f64>,
    /// `(definition index, 1-based position)` per instance.
    pub owners: Vec<(usize, usize)>,
}

impl Instances {
    pub fn build(definitions: &[Definition], encoder: &TokenEncoder, window: usize) -> Instances {
        let mut out = Instances::default();
        for (d, def) in definitions.iter().enumerate() {
            let seq = encoder.sequence(def);
            for c in &def.candidates {
                out.ids.push(encoder.window(&seq, c.position, window));
                out.labels.push(if def.is_gold(c.position) { 1.0 } else { 0.0 });
                out.owners.push((d, c.position));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn weights(&self, positive_weight: f64) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&y| if y > 0.5 { positive_weight } else { 1.0 })
            .collect()
    }
}

/// Shuffled minibatch epochs; returns the mean per-instance loss of each epoch.
fn run_epochs<F>(n: usize, batch_size: usize, epochs: usize, seed: u64, stream: u64, mut step: F) -> Result<Vec<f64>>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    use rand::seq::SliceRandom;
    let mut rng = rng::stream(seed, stream);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            total += step(batch)? * batch.len() as f64;
        }
        trace.push(total / n as f64);
    }
    Ok(trace)
}

const INFERENCE_BATCH: usize = 512;

/// Inference-mode `P_init` for every instance.
pub fn stage1_probabilities(network: &Stage1, ids: &[Vec<u32>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ids.len());
    for chunk in ids.chunks(INFERENCE_BATCH) {
        let refs: Vec<&[u32]> = chunk.iter().map(Vec::as_slice).collect();
        out.extend(network.probabilities(&refs)?);
    }
    Ok(out)
}

/// Output of stage-1 training.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Fit {
    pub encoder: TokenEncoder,
    pub network: Stage1,
    pub losses: Vec<f64>,
}

/// Trains the bidirectional GRU classifier on every candidate of `train`.
pub fn train_stage1(train: &Corpus, config: &ModelConfig) -> Result<Stage1Fit> {
    config.validate()?;
    let encoder = TokenEncoder::fit(train, config);
    let inst = Instances::build(&train.definitions, &encoder, config.window);
    if inst.is_empty() {
        return Err(Error::Data("training corpus has no candidates".into()));
    }
    let embedding = config.mode.embedded().then_some(config.embedding_dim);
    let mut network = Stage1::new(
        encoder.token_count(),
        embedding,
        config.hidden,
        &mut rng::stream(config.seed, rng::STREAM_INIT),
    );
    let weights = inst.weights(config.positive_weight);
    let mut drop_rng = rng::stream(config.seed, rng::STREAM_DROPOUT);
    let mut opt = RmsProp::new(config.learning_rate, config.decay, config.epsilon);
    let losses = run_epochs(
        inst.len(),
        config.batch_size,
        config.epochs,
        config.seed,
        rng::STREAM_SHUFFLE,
        |batch| {
            let ids: Vec<&[u32]> = batch.iter().map(|&k| inst.ids[k].as_slice()).collect();
            let labels: Vec<f64> = batch.iter().map(|&k| inst.labels[k]).collect();
            let w: Vec<f64> = batch.iter().map(|&k| weights[k]).collect();
            let mask = (config.dropout > 0.0)
                .then(|| dropout_mask(batch.len(), 2 * config.hidden, config.dropout, &mut drop_rng));
            let pass = network.forward(&ids, mask)?;
            let loss = Stage1::loss(&pass, &labels, &w);
            let grad = network.backward(&pass, &ids, &labels, &w);
            opt.step(&mut network, &grad)?;
            Ok(loss)
        },
    )?;
    Ok(Stage1Fit {
        encoder,
        network,
        losses,
    })
}

/// `[P_init, position, capitalized, frequency, dc]`.
pub fn refinement_input(p_init: f64, feats: &RefinementFeatures) -> [f64; REFINE_INPUTS] {
    let [position, capitalized, frequency, dc] = feats.to_array();
    [p_init, position, capitalized, frequency, dc]
}

fn refinement_matrix(p_init: &[f64], owners: &[(usize, usize)], defs: &[Definition], ctx: &FeatureContext) -> Array2<f64> {
    let mut x = Array2::zeros((p_init.len(), REFINE_INPUTS));
    for (k, (&p, &(d, pos))) in p_init.iter().zip(owners).enumerate() {
        let row = refinement_input(p, &ctx.features(&defs[d], pos));
        for (c, v) in row.into_iter().enumerate() {
            x[[k, c]] = v;
        }
    }
    x
}

/// Trains the refinement network on frozen stage-1 outputs.
pub fn train_refine(
    train: &Corpus,
    stage1: &Stage1Fit,
    context: &FeatureContext,
    config: &ModelConfig,
) -> Result<(Refiner, Vec<f64>)> {
    config.validate()?;
    let inst = Instances::build(&train.definitions, &stage1.encoder, config.window);
    if inst.is_empty() {
        return Err(Error::Data("training corpus has no candidates".into()));
    }
    let p_init = stage1_probabilities(&stage1.network, &inst.ids)?;
    let x = refinement_matrix(&p_init, &inst.owners, &train.definitions, context);
    let weights = inst.weights(config.positive_weight);
    let mut refiner = Refiner::new(
        config.refine_hidden,
        &mut rng::stream(config.seed, rng::STREAM_REFINE_INIT),
    );
    let mut opt = RmsProp::new(config.refine_learning_rate, config.decay, config.epsilon);
    let losses = run_epochs(
        inst.len(),
        config.batch_size,
        config.refine_epochs,
        config.seed,
        rng::STREAM_REFINE_SHUFFLE,
        |batch| {
            let xb = x.select(ndarray::Axis(0), batch);
            let labels: Vec<f64> = batch.iter().map(|&k| inst.labels[k]).collect();
            let w: Vec<f64> = batch.iter().map(|&k| weights[k]).collect();
            let pass = refiner.forward(xb)?;
            let loss = Refiner::loss(&pass, &labels, &w);
            let grad = refiner.backward(&pass, &labels, &w);
            opt.step(&mut refiner, &grad)?;
            Ok(loss)
        },
    )?;
    Ok((refiner, losses))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub stage1_loss: Vec<f64>,
    pub refine_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateScore {
    pub position: usize,
    pub word: String,
    pub p_init: f64,
    pub p_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub candidates: Vec<CandidateScore>,
    /// 1-based position of the chosen candidate.
    pub selected: Option<usize>,
}

impl Prediction {
    /// Argmax of `p_final` (earliest position on ties), kept only if it
    /// reaches `threshold`.
    pub fn select(candidates: Vec<CandidateScore>, threshold: f64) -> Prediction {
        let mut best: Option<&CandidateScore> = None;
        for c in &candidates {
            if best.is_none_or(|b| c.p_final > b.p_final) {
                best = Some(c);
            }
        }
        let selected = best.filter(|b| b.p_final >= threshold).map(|b| b.position);
        Prediction {
            candidates,
            selected,
        }
    }

    pub fn selected_word(&self) -> Option<&str> {
        let pos = self.selected?;
        self.candidates
            .iter()
            .find(|c| c.position == pos)
            .map(|c| c.word.as_str())
    }

    /// Re-applies the selection rule under a different threshold.
    pub fn rethreshold(&self, threshold: f64) -> Prediction {
        Prediction::select(self.candidates.clone(), threshold)
    }
}

/// A trained extraction model.
#[derive(Debug, Clone, PartialEq)]
pub struct HypernymModel {
    pub config: ModelConfig,
    pub encoder: TokenEncoder,
    pub stage1: Stage1,
    pub refiner: Option<Refiner>,
    pub context: FeatureContext,
    pub history: TrainingHistory,
}

impl HypernymModel {
    pub fn train(train: &Corpus, config: &ModelConfig) -> Result<HypernymModel> {
        HypernymModel::train_with_tag_sets(train, config, &[])
    }

    /// Trains with extra co-tag groups feeding the co-occurrence graph.
    pub fn train_with_tag_sets(train: &Corpus, config: &ModelConfig, tag_sets: &[Vec<String>]) -> Result<HypernymModel> {
        let fit = train_stage1(train, config)?;
        let context = FeatureContext::with_tag_sets(train, tag_sets);
        let (refiner, refine_loss) = if config.refine {
            let (r, l) = train_refine(train, &fit, &context, config)?;
            (Some(r), l)
        } else {
            (None, Vec::new())
        };
        Ok(HypernymModel {
            config: config.clone(),
            encoder: fit.encoder,
            stage1: fit.network,
            refiner,
            context,
            history: TrainingHistory {
                stage1_loss: fit.losses,
                refine_loss,
            },
        })
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
        }
        self.config.threshold = threshold;
        Ok(())
    }

    pub fn predict(&self, definition: &Definition) -> Result<Prediction> {
        Ok(self
            .predict_all(std::slice::from_ref(definition))?
            .pop()
            .expect("one prediction per definition"))
    }

    pub fn predict_all(&self, definitions: &[Definition]) -> Result<Vec<Prediction>> {
        let inst = Instances::build(definitions, &self.encoder, self.config.window);
        let p_init = stage1_probabilities(&self.stage1, &inst.ids)?;
        let p_final = match &self.refiner {
            Some(r) if !inst.is_empty() => {
                let x = refinement_matrix(&p_init, &inst.owners, definitions, &self.context);
                r.forward(x)?.probs
            }
            _ => p_init.clone(),
        };
        let mut per_def: Vec<Vec<CandidateScore>> = vec![Vec::new(); definitions.len()];
        for (k, &(d, pos)) in inst.owners.iter().enumerate() {
            per_def[d].push(CandidateScore {
                position: pos,
                word: definitions[d].words[pos - 1].clone(),
                p_init: p_init[k],
                p_final: p_final[k],
            });
        }
        Ok(per_def
            .into_iter()
            .map(|c| Prediction::select(c, self.config.threshold))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_generate, SynthConfig, Template};
    use crate::corpus::{parse_record, RawRecord};

    fn fig1() -> Definition {
        parse_record(
            r#"{"term":"sql","tokens":["sql","is","a","language","for","querying","databases"],"pos":["NN","VBZ","DT","NN","IN","VBG","NNS"],"hypernym":"language"}"#,
            1,
        )
        .unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            epochs: 30,
            ..ModelConfig::default()
        }
    }

    fn single_template(records: usize) -> Corpus {
        let config = SynthConfig {
            records,
            vocab_size: 300,
            hypernyms: 30,
            templates: vec![Template::new("{T} is/VBZ {DT} {H} for/IN {VBG} {D}", 1.0)],
            ..SynthConfig::default()
        };
        synth_generate(&config, 5).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        for c in [
            ModelConfig { window: 0, ..ModelConfig::default() },
            ModelConfig { hidden: 0, ..ModelConfig::default() },
            ModelConfig { threshold: 1.5, ..ModelConfig::default() },
            ModelConfig { dropout: 1.0, ..ModelConfig::default() },
            ModelConfig { mode: Mode::HybridEmbed, ..ModelConfig::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
        assert_eq!("hybrid-onehot".parse::<Mode>().unwrap(), Mode::HybridOnehot);
        assert!("lstm".parse::<Mode>().is_err());
    }

    #[test]
    fn encoder_ids() {
        let d = fig1();
        let pos = TokenEncoder::from_vocab(Mode::Pos, vec![]);
        assert_eq!(pos.sequence(&d), vec![3, 10, 0, 3, 2, 7, 3]);
        assert_eq!(pos.window(&pos.sequence(&d), 7, 2), vec![2, 7, 15, 15]);
        let hybrid = TokenEncoder::from_vocab(Mode::HybridOnehot, vec!["is".into(), "a".into()]);
        assert_eq!(hybrid.token_count(), 18);
        assert_eq!(hybrid.sequence(&d), vec![5, 0, 1, 5, 4, 9, 5]);
        let word = TokenEncoder::from_vocab(Mode::Word, vec!["a".into(), "sql".into()]);
        assert_eq!(word.sequence(&d), vec![3, 0, 2, 0, 0, 0, 0]);
        assert_eq!(word.window(&word.sequence(&d), 1, 1), vec![1, 0]);
    }

    #[test]
    fn selection_rules() {
        let c = |position, p| CandidateScore {
            position,
            word: String::new(),
            p_init: p,
            p_final: p,
        };
        assert_eq!(Prediction::select(vec![c(2, 0.1)], 0.0).selected, Some(2));
        assert_eq!(Prediction::select(vec![c(2, 0.4), c(5, 0.4)], 0.3).selected, Some(2));
        assert_eq!(Prediction::select(vec![c(2, 0.4), c(5, 0.45)], 0.5).selected, None);
        assert_eq!(Prediction::select(vec![], 0.0).selected, None);
    }

    #[test]
    fn single_template_training_converges_and_is_deterministic() {
        let corpus = single_template(200);
        let config = small_config();
        let a = train_stage1(&corpus, &config).unwrap();
        assert!(*a.losses.last().unwrap() < 0.1, "{:?}", a.losses);
        let b = train_stage1(&corpus, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn figure_one_sentence_selects_language() {
        let corpus = single_template(200);
        let model = HypernymModel::train(&corpus, &small_config()).unwrap();
        let p = model.predict(&fig1()).unwrap();
        assert_eq!(p.selected_word(), Some("language"));
        for c in &p.candidates {
            assert!((0.0..=1.0).contains(&c.p_init) && (0.0..=1.0).contains(&c.p_final));
        }
    }

    #[test]
    fn empty_training_data_is_an_error() {
        let empty = Corpus::new(vec![], "empty");
        assert!(matches!(train_stage1(&empty, &small_config()), Err(Error::Data(_))));
    }

    #[test]
    fn no_candidates_predicts_nothing() {
        let corpus = single_template(50);
        let model = HypernymModel::train(&corpus, &ModelConfig { epochs: 1, ..small_config() }).unwrap();
        let mut d = fig1();
        d.candidates.clear();
        let p = model.predict(&d).unwrap();
        assert!(p.candidates.is_empty() && p.selected.is_none());
    }

    #[test]
    fn pos_window_is_all_stage1_sees() {
        let corpus = single_template(60);
        let fit = train_stage1(&corpus, &ModelConfig { epochs: 2, ..small_config() }).unwrap();
        let rec = |tokens: &[&str]| RawRecord {
            term: "t".into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            pos: Some(
                ["NN", "VBZ", "DT", "NN", "IN", "VBG", "NN", "IN", "DT", "NN"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            ),
            hypernym: None,
            hypernym_index: Some(4),
            tag_partners: None,
        };
        let a = Definition::from_record(&rec(&["t", "is", "a", "x", "for", "y", "z", "of", "the", "w"])).unwrap();
        let b = Definition::from_record(&rec(&["t", "was", "an", "x", "in", "q", "z", "by", "any", "k"])).unwrap();
        let ids = |d: &Definition| {
            let seq = fit.encoder.sequence(d);
            vec![fit.encoder.window(&seq, 4, 3)]
        };
        assert_eq!(
            stage1_probabilities(&fit.network, &ids(&a)).unwrap(),
            stage1_probabilities(&fit.network, &ids(&b)).unwrap()
        );
    }
}

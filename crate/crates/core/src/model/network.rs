//! Stage-1 encoder/classifier and the stage-2 refinement network.

use ndarray::{s, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{
    cross_entropy, glorot, matrix_ref, sigmoid, softmax_rows, Dense, GruParams, GruStep,
    Parameters, TensorRef,
};

/// Bidirectional GRU over a token window, a tanh hidden layer and a
/// two-way softmax. Tokens are integer ids; they enter the GRUs either as
/// one-hot vectors or through an embedding matrix (`d × tokens`).
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1 {
    pub embedding: Option<Array2<f64>>,
    pub positive: GruParams,
    pub negative: GruParams,
    pub hidden: Dense,
    pub output: Dense,
    tokens: usize,
}

/// Activations of one batched forward pass.
#[derive(Debug, Clone)]
pub struct Stage1Pass {
    steps_pos: Vec<GruStep>,
    steps_neg: Vec<GruStep>,
    mask: Option<Array2<f64>>,
    merged: Array2<f64>,
    activation: Array2<f64>,
    pub probs: Array2<f64>,
}

impl Stage1 {
    pub fn new<R: Rng>(tokens: usize, embedding_dim: Option<usize>, hidden: usize, rng: &mut R) -> Stage1 {
        let embedding = embedding_dim.map(|d| glorot(d, tokens, rng));
        let input = embedding_dim.unwrap_or(tokens);
        let positive = GruParams::new(input, hidden, rng);
        let negative = GruParams::new(input, hidden, rng);
        let hidden_layer = Dense::new(2 * hidden, hidden, rng);
        let output = Dense::new(hidden, 2, rng);
        Stage1 {
            embedding,
            positive,
            negative,
            hidden: hidden_layer,
            output,
            tokens,
        }
    }

    pub fn zeros(tokens: usize, embedding_dim: Option<usize>, hidden: usize) -> Stage1 {
        let input = embedding_dim.unwrap_or(tokens);
        Stage1 {
            embedding: embedding_dim.map(|d| Array2::zeros((d, tokens))),
            positive: GruParams::zeros(input, hidden),
            negative: GruParams::zeros(input, hidden),
            hidden: Dense::zeros(2 * hidden, hidden),
            output: Dense::zeros(hidden, 2),
            tokens,
        }
    }

    pub fn zeros_like(&self) -> Stage1 {
        Stage1::zeros(
            self.tokens,
            self.embedding.as_ref().map(|e| e.nrows()),
            self.positive.hidden(),
        )
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn hidden_size(&self) -> usize {
        self.positive.hidden()
    }

    /// `B × input` matrix for window column `col` of every instance.
    fn inputs(&self, ids: &[&[u32]], col: usize) -> Array2<f64> {
        match &self.embedding {
            Some(e) => {
                let mut x = Array2::zeros((ids.len(), e.nrows()));
                for (b, row) in ids.iter().enumerate() {
                    x.row_mut(b).assign(&e.column(row[col] as usize));
                }
                x
            }
            None => {
                let mut x = Array2::zeros((ids.len(), self.tokens));
                for (b, row) in ids.iter().enumerate() {
                    x[[b, row[col] as usize]] = 1.0;
                }
                x
            }
        }
    }

    fn check_ids(&self, ids: &[&[u32]]) -> Result<usize> {
        let width = ids.first().map_or(0, |r| r.len());
        if width == 0 || width % 2 != 0 {
            return Err(Error::Dimension(format!("window width {width} is not a positive even number")));
        }
        for r in ids {
            if r.len() != width {
                return Err(Error::Dimension("ragged window batch".into()));
            }
            if let Some(bad) = r.iter().find(|&&t| t as usize >= self.tokens) {
                return Err(Error::Dimension(format!(
                    "token id {bad} outside vocabulary of {}",
                    self.tokens
                )));
            }
        }
        Ok(width / 2)
    }

    /// Each row of `ids` holds the pre window then the post window (2L ids).
    /// `mask` is an inverted-dropout mask over the merged encoding.
    pub fn forward(&self, ids: &[&[u32]], mask: Option<Array2<f64>>) -> Result<Stage1Pass> {
        let l = self.check_ids(ids)?;
        let b = ids.len();
        let h = self.hidden_size();
        let xs_pos: Vec<Array2<f64>> = (0..l).map(|t| self.inputs(ids, t)).collect();
        let xs_neg: Vec<Array2<f64>> = (0..l).map(|t| self.inputs(ids, 2 * l - 1 - t)).collect();
        let (y1, steps_pos) = self.positive.forward_batch(&xs_pos, Array2::zeros((b, h)));
        let (y2, steps_neg) = self.negative.forward_batch(&xs_neg, Array2::zeros((b, h)));
        let mut merged = ndarray::concatenate![Axis(1), y1, y2];
        if let Some(m) = &mask {
            if m.dim() != merged.dim() {
                return Err(Error::Dimension("dropout mask does not match encoding".into()));
            }
            merged *= m;
        }
        let activation = self.hidden.forward(&merged).mapv(f64::tanh);
        let probs = softmax_rows(&self.output.forward(&activation));
        Ok(Stage1Pass {
            steps_pos,
            steps_neg,
            mask,
            merged,
            activation,
            probs,
        })
    }

    /// Inference-mode `P_init` per row.
    pub fn probabilities(&self, ids: &[&[u32]]) -> Result<Vec<f64>> {
        if ids.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.forward(ids, None)?.probs.column(1).to_vec())
    }

    /// Mean weighted cross-entropy of a pass.
    pub fn loss(pass: &Stage1Pass, labels: &[f64], weights: &[f64]) -> f64 {
        let n = labels.len() as f64;
        pass.probs
            .column(1)
            .iter()
            .zip(labels)
            .zip(weights)
            .map(|((&p, &y), &w)| w * cross_entropy(p, y))
            .sum::<f64>()
            / n
    }

    pub fn backward(&self, pass: &Stage1Pass, ids: &[&[u32]], labels: &[f64], weights: &[f64]) -> Stage1 {
        let b = labels.len();
        let h = self.hidden_size();
        let mut grad = self.zeros_like();
        let mut dlogits = pass.probs.clone();
        for (k, (&y, &w)) in labels.iter().zip(weights).enumerate() {
            dlogits[[k, 1]] -= y;
            dlogits[[k, 0]] -= 1.0 - y;
            let scale = w / b as f64;
            dlogits[[k, 0]] *= scale;
            dlogits[[k, 1]] *= scale;
        }
        let mut da = self.output.backward(&pass.activation, &dlogits, &mut grad.output);
        ndarray::Zip::from(&mut da)
            .and(&pass.activation)
            .for_each(|d, &a| *d *= 1.0 - a * a);
        let mut dy = self.hidden.backward(&pass.merged, &da, &mut grad.hidden);
        if let Some(m) = &pass.mask {
            dy *= m;
        }
        let want_dx = self.embedding.is_some();
        let dy1 = dy.slice(s![.., ..h]).to_owned();
        let dy2 = dy.slice(s![.., h..]).to_owned();
        let (_, dx_pos) = self
            .positive
            .backward_batch(&pass.steps_pos, dy1, &mut grad.positive, want_dx);
        let (_, dx_neg) = self
            .negative
            .backward_batch(&pass.steps_neg, dy2, &mut grad.negative, want_dx);
        if let Some(ge) = grad.embedding.as_mut() {
            let l = dx_pos.len();
            for (t, dx) in dx_pos.iter().enumerate() {
                for (row, d) in ids.iter().zip(dx.rows()) {
                    let mut col = ge.column_mut(row[t] as usize);
                    col += &d;
                }
            }
            for (t, dx) in dx_neg.iter().enumerate() {
                for (row, d) in ids.iter().zip(dx.rows()) {
                    let mut col = ge.column_mut(row[2 * l - 1 - t] as usize);
                    col += &d;
                }
            }
        }
        grad
    }
}

impl Parameters for Stage1 {
    fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out = Vec::new();
        if let Some(e) = &self.embedding {
            out.push(("embedding".to_string(), matrix_ref(e)));
        }
        self.positive.push_tensors("gru_pos", &mut out);
        self.negative.push_tensors("gru_neg", &mut out);
        self.hidden.push_tensors("head.hidden", &mut out);
        self.output.push_tensors("head.output", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(e) = self.embedding.as_mut() {
            out.push(e.as_slice_mut().unwrap());
        }
        self.positive.push_tensors_mut(&mut out);
        self.negative.push_tensors_mut(&mut out);
        self.hidden.push_tensors_mut(&mut out);
        self.output.push_tensors_mut(&mut out);
        out
    }
}

/// Number of refinement inputs: `[P_init, position, capitalized, frequency, dc]`.
pub const REFINE_INPUTS: usize = 5;

/// `Dense(5→k) → tanh → Dense(k→1) → sigmoid`.
#[derive(Debug, Clone, PartialEq)]
pub struct Refiner {
    pub hidden: Dense,
    pub output: Dense,
}

#[derive(Debug, Clone)]
pub struct RefinerPass {
    inputs: Array2<f64>,
    activation: Array2<f64>,
    pub probs: Vec<f64>,
}

impl Refiner {
    pub fn new<R: Rng>(hidden: usize, rng: &mut R) -> Refiner {
        let h = Dense::new(REFINE_INPUTS, hidden, rng);
        let o = Dense::new(hidden, 1, rng);
        Refiner { hidden: h, output: o }
    }

    pub fn zeros(hidden: usize) -> Refiner {
        Refiner {
            hidden: Dense::zeros(REFINE_INPUTS, hidden),
            output: Dense::zeros(hidden, 1),
        }
    }

    pub fn zeros_like(&self) -> Refiner {
        Refiner::zeros(self.hidden.outputs())
    }

    pub fn forward(&self, inputs: Array2<f64>) -> Result<RefinerPass> {
        if inputs.ncols() != REFINE_INPUTS {
            return Err(Error::Dimension(format!(
                "refinement expects {REFINE_INPUTS} inputs, got {}",
                inputs.ncols()
            )));
        }
        let activation = self.hidden.forward(&inputs).mapv(f64::tanh);
        let probs = self
            .output
            .forward(&activation)
            .column(0)
            .iter()
            .map(|&z| sigmoid(z))
            .collect();
        Ok(RefinerPass {
            inputs,
            activation,
            probs,
        })
    }

    pub fn loss(pass: &RefinerPass, labels: &[f64], weights: &[f64]) -> f64 {
        pass.probs
            .iter()
            .zip(labels)
            .zip(weights)
            .map(|((&p, &y), &w)| w * cross_entropy(p, y))
            .sum::<f64>()
            / labels.len() as f64
    }

    pub fn backward(&self, pass: &RefinerPass, labels: &[f64], weights: &[f64]) -> Refiner {
        let n = labels.len() as f64;
        let mut grad = self.zeros_like();
        let dz = Array2::from_shape_fn((labels.len(), 1), |(k, _)| {
            weights[k] * (pass.probs[k] - labels[k]) / n
        });
        let mut da = self.output.backward(&pass.activation, &dz, &mut grad.output);
        ndarray::Zip::from(&mut da)
            .and(&pass.activation)
            .for_each(|d, &a| *d *= 1.0 - a * a);
        self.hidden.backward(&pass.inputs, &da, &mut grad.hidden);
        grad
    }
}

impl Parameters for Refiner {
    fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out = Vec::new();
        self.hidden.push_tensors("refine.hidden", &mut out);
        self.output.push_tensors("refine.output", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.hidden.push_tensors_mut(&mut out);
        self.output.push_tensors_mut(&mut out);
        out
    }
}

//! Minimal differentiable kernel with hand-derived gradients.
//!
//! Everything is batched: activations are `B × features` matrices, weights are
//! stored `out × in`. All arithmetic is `f64`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

/// A named, shaped view of one parameter tensor.
#[derive(Debug, Clone)]
pub struct TensorRef<'a> {
    /// `[rows, cols]` for matrices, `[len]` for vectors.
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Anything that owns trainable tensors in a fixed visiting order.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, TensorRef<'_>)>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }
}

pub(crate) fn matrix_ref(m: &Array2<f64>) -> TensorRef<'_> {
    TensorRef {
        shape: vec![m.nrows(), m.ncols()],
        data: m.as_slice().expect("standard layout"),
    }
}

pub(crate) fn vector_ref(v: &Array1<f64>) -> TensorRef<'_> {
    TensorRef {
        shape: vec![v.len()],
        data: v.as_slice().expect("standard layout"),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform in ±√(6/(fan_in+fan_out)).
pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Dense {
        Dense {
            weight: glorot(outputs, inputs, rng),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Dense {
        Dense {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros_like(&self) -> Dense {
        Dense::zeros(self.inputs(), self.outputs())
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates weight gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        general_mat_mul(1.0, &dy.t(), x, 1.0, &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }

    pub(crate) fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, TensorRef<'a>)>) {
        out.push((format!("{prefix}.weight"), matrix_ref(&self.weight)));
        out.push((format!("{prefix}.bias"), vector_ref(&self.bias)));
    }

    pub(crate) fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.weight.as_slice_mut().unwrap());
        out.push(self.bias.as_slice_mut().unwrap());
    }
}

impl Parameters for Dense {
    fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out = Vec::new();
        self.push_tensors("dense", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.push_tensors_mut(&mut out);
        out
    }
}

/// Standard GRU:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Array2<f64>,
    pub u_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_r: Array2<f64>,
    pub u_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_h: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_h: Array1<f64>,
}

/// Activations of one recurrence step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct GruStep {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    rh: Array2<f64>,
    h_tilde: Array2<f64>,
}

impl GruParams {
    pub fn new<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> GruParams {
        GruParams {
            w_z: glorot(hidden, inputs, rng),
            u_z: glorot(hidden, hidden, rng),
            b_z: Array1::zeros(hidden),
            w_r: glorot(hidden, inputs, rng),
            u_r: glorot(hidden, hidden, rng),
            b_r: Array1::zeros(hidden),
            w_h: glorot(hidden, inputs, rng),
            u_h: glorot(hidden, hidden, rng),
            b_h: Array1::zeros(hidden),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> GruParams {
        GruParams {
            w_z: Array2::zeros((hidden, inputs)),
            u_z: Array2::zeros((hidden, hidden)),
            b_z: Array1::zeros(hidden),
            w_r: Array2::zeros((hidden, inputs)),
            u_r: Array2::zeros((hidden, hidden)),
            b_r: Array1::zeros(hidden),
            w_h: Array2::zeros((hidden, inputs)),
            u_h: Array2::zeros((hidden, hidden)),
            b_h: Array1::zeros(hidden),
        }
    }

    pub fn zeros_like(&self) -> GruParams {
        GruParams::zeros(self.inputs(), self.hidden())
    }

    pub fn hidden(&self) -> usize {
        self.u_z.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.w_z.ncols()
    }

    fn check(&self) -> Result<()> {
        let (h, i) = (self.hidden(), self.inputs());
        let mats = [
            (&self.w_z, (h, i)),
            (&self.w_r, (h, i)),
            (&self.w_h, (h, i)),
            (&self.u_z, (h, h)),
            (&self.u_r, (h, h)),
            (&self.u_h, (h, h)),
        ];
        let biases = [&self.b_z, &self.b_r, &self.b_h];
        if mats.iter().any(|(m, s)| m.dim() != *s) || biases.iter().any(|b| b.len() != h) {
            return Err(Error::Dimension("inconsistent GRU parameter shapes".into()));
        }
        Ok(())
    }

    /// One batched step; `x` is `B × inputs`, `h` is `B × hidden`.
    pub fn step(&self, x: &Array2<f64>, h: &Array2<f64>) -> (Array2<f64>, GruStep) {
        let mut z = x.dot(&self.w_z.t()) + &self.b_z;
        general_mat_mul(1.0, h, &self.u_z.t(), 1.0, &mut z);
        z.mapv_inplace(sigmoid);
        let mut r = x.dot(&self.w_r.t()) + &self.b_r;
        general_mat_mul(1.0, h, &self.u_r.t(), 1.0, &mut r);
        r.mapv_inplace(sigmoid);
        let rh = &r * h;
        let mut h_tilde = x.dot(&self.w_h.t()) + &self.b_h;
        general_mat_mul(1.0, &rh, &self.u_h.t(), 1.0, &mut h_tilde);
        h_tilde.mapv_inplace(f64::tanh);
        let mut next = h.clone();
        Zip::from(&mut next)
            .and(&z)
            .and(&h_tilde)
            .for_each(|n, &z, &ht| *n = (1.0 - z) * *n + z * ht);
        let step = GruStep {
            x: x.clone(),
            h_prev: h.clone(),
            z,
            r,
            rh,
            h_tilde,
        };
        (next, step)
    }

    pub fn forward_batch(&self, xs: &[Array2<f64>], h0: Array2<f64>) -> (Array2<f64>, Vec<GruStep>) {
        let mut h = h0;
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let (next, step) = self.step(x, &h);
            h = next;
            steps.push(step);
        }
        (h, steps)
    }

    /// Backpropagates `dh` (gradient of the final hidden state) through
    /// `steps`, accumulating into `grad`. Returns per-step input gradients
    /// when `want_dx` is set, otherwise an empty vector.
    pub fn backward_batch(
        &self,
        steps: &[GruStep],
        dh: Array2<f64>,
        grad: &mut GruParams,
        want_dx: bool,
    ) -> (Array2<f64>, Vec<Array2<f64>>) {
        let mut dh = dh;
        let mut dxs = Vec::with_capacity(if want_dx { steps.len() } else { 0 });
        for s in steps.iter().rev() {
            let mut dz = &s.h_tilde - &s.h_prev;
            dz *= &dh;
            let mut da_h = &dh * &s.z;
            Zip::from(&mut da_h)
                .and(&s.h_tilde)
                .for_each(|d, &ht| *d *= 1.0 - ht * ht);
            let mut dh_prev = dh.clone();
            Zip::from(&mut dh_prev).and(&s.z).for_each(|d, &z| *d *= 1.0 - z);

            general_mat_mul(1.0, &da_h.t(), &s.x, 1.0, &mut grad.w_h);
            general_mat_mul(1.0, &da_h.t(), &s.rh, 1.0, &mut grad.u_h);
            grad.b_h += &da_h.sum_axis(Axis(0));
            let d_rh = da_h.dot(&self.u_h);
            let mut da_r = &d_rh * &s.h_prev;
            Zip::from(&mut da_r).and(&s.r).for_each(|d, &r| *d *= r * (1.0 - r));
            Zip::from(&mut dh_prev)
                .and(&d_rh)
                .and(&s.r)
                .for_each(|d, &g, &r| *d += g * r);

            Zip::from(&mut dz).and(&s.z).for_each(|d, &z| *d *= z * (1.0 - z));
            let da_z = dz;
            general_mat_mul(1.0, &da_z.t(), &s.x, 1.0, &mut grad.w_z);
            general_mat_mul(1.0, &da_z.t(), &s.h_prev, 1.0, &mut grad.u_z);
            grad.b_z += &da_z.sum_axis(Axis(0));
            general_mat_mul(1.0, &da_z, &self.u_z, 1.0, &mut dh_prev);

            general_mat_mul(1.0, &da_r.t(), &s.x, 1.0, &mut grad.w_r);
            general_mat_mul(1.0, &da_r.t(), &s.h_prev, 1.0, &mut grad.u_r);
            grad.b_r += &da_r.sum_axis(Axis(0));
            general_mat_mul(1.0, &da_r, &self.u_r, 1.0, &mut dh_prev);

            if want_dx {
                let mut dx = da_z.dot(&self.w_z);
                general_mat_mul(1.0, &da_r, &self.w_r, 1.0, &mut dx);
                general_mat_mul(1.0, &da_h, &self.w_h, 1.0, &mut dx);
                dxs.push(dx);
            }
            dh = dh_prev;
        }
        dxs.reverse();
        (dh, dxs)
    }

    pub(crate) fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, TensorRef<'a>)>) {
        for (name, m) in [("w_z", &self.w_z), ("u_z", &self.u_z)] {
            out.push((format!("{prefix}.{name}"), matrix_ref(m)));
        }
        out.push((format!("{prefix}.b_z"), vector_ref(&self.b_z)));
        for (name, m) in [("w_r", &self.w_r), ("u_r", &self.u_r)] {
            out.push((format!("{prefix}.{name}"), matrix_ref(m)));
        }
        out.push((format!("{prefix}.b_r"), vector_ref(&self.b_r)));
        for (name, m) in [("w_h", &self.w_h), ("u_h", &self.u_h)] {
            out.push((format!("{prefix}.{name}"), matrix_ref(m)));
        }
        out.push((format!("{prefix}.b_h"), vector_ref(&self.b_h)));
    }

    pub(crate) fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.w_z.as_slice_mut().unwrap());
        out.push(self.u_z.as_slice_mut().unwrap());
        out.push(self.b_z.as_slice_mut().unwrap());
        out.push(self.w_r.as_slice_mut().unwrap());
        out.push(self.u_r.as_slice_mut().unwrap());
        out.push(self.b_r.as_slice_mut().unwrap());
        out.push(self.w_h.as_slice_mut().unwrap());
        out.push(self.u_h.as_slice_mut().unwrap());
        out.push(self.b_h.as_slice_mut().unwrap());
    }
}

impl Parameters for GruParams {
    fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out = Vec::new();
        self.push_tensors("gru", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.push_tensors_mut(&mut out);
        out
    }
}

fn stack_rows(rows: &[&Array1<f64>], width: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((rows.len(), width));
    for (k, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Dimension(format!(
                "expected vector of length {width}, got {}",
                r.len()
            )));
        }
        m.row_mut(k).assign(r);
    }
    Ok(m)
}

/// Runs the recurrence over one sequence and returns the last hidden state.
pub fn gru_forward(inputs: &[Array1<f64>], params: &GruParams, h0: &Array1<f64>) -> Result<Array1<f64>> {
    params.check()?;
    if h0.len() != params.hidden() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, GRU hidden size is {}",
            h0.len(),
            params.hidden()
        )));
    }
    let xs = inputs
        .iter()
        .map(|x| stack_rows(&[x], params.inputs()))
        .collect::<Result<Vec<_>>>()?;
    let h0 = stack_rows(&[h0], params.hidden())?;
    let (h, _) = params.forward_batch(&xs, h0);
    Ok(h.row(0).to_owned())
}

/// Output of the bidirectional encoder for a single context window.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub forward: Array1<f64>,
    pub backward: Array1<f64>,
}

impl EncoderOutput {
    /// `[Y1; Y2]`.
    pub fn merged(&self) -> Array1<f64> {
        ndarray::concatenate![Axis(0), self.forward, self.backward]
    }
}

/// Encodes a window: the positive GRU reads `pre` left to right, the
/// negative GRU reads `post` from its far end back toward the candidate.
pub fn bi_encode(
    pre: &[Array1<f64>],
    post: &[Array1<f64>],
    positive: &GruParams,
    negative: &GruParams,
) -> Result<EncoderOutput> {
    let reversed: Vec<Array1<f64>> = post.iter().rev().cloned().collect();
    Ok(EncoderOutput {
        forward: gru_forward(pre, positive, &Array1::zeros(positive.hidden()))?,
        backward: gru_forward(&reversed, negative, &Array1::zeros(negative.hidden()))?,
    })
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Row-wise softmax of a `B × C` logit matrix.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(logits.dim());
    for (src, mut dst) in logits.rows().into_iter().zip(out.rows_mut()) {
        dst.assign(&Array1::from(softmax(&src.to_vec())));
    }
    out
}

/// Feedforward head: one tanh hidden layer, then two logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    pub hidden: Dense,
    pub output: Dense,
}

/// Probability of the "hypernym" class (logit index 1).
pub fn ff_softmax(y: &Array1<f64>, head: &SoftmaxHead) -> Result<f64> {
    if y.len() != head.hidden.inputs() || head.output.outputs() != 2 {
        return Err(Error::Dimension("head does not fit encoder output".into()));
    }
    let x = y.view().insert_axis(Axis(0)).to_owned();
    let a = head.hidden.forward(&x).mapv(f64::tanh);
    let logits = head.output.forward(&a);
    Ok(softmax(&logits.row(0).to_vec())[1])
}

pub const PROB_EPSILON: f64 = 1e-12;

/// Binary cross-entropy with the probability clamped to `[ε, 1-ε]`.
pub fn cross_entropy(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Inverted-dropout keep mask: 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<R: Rng>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Array2<f64> {
    let scale = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn((rows, cols), || {
        if rate > 0.0 && rng.random::<f64>() < rate {
            0.0
        } else {
            scale
        }
    })
}

pub fn dropout<R: Rng>(x: &Array1<f64>, rate: f64, training: bool, rng: &mut R) -> Array1<f64> {
    if !training || rate == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask(1, x.len(), rate, rng);
    x * &mask.row(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    cache: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(learning_rate: f64, decay: f64, epsilon: f64) -> RmsProp {
        RmsProp {
            learning_rate,
            decay,
            epsilon,
            cache: Vec::new(),
        }
    }

    pub fn cache(&self) -> &[Vec<f64>] {
        &self.cache
    }

    /// `cache ← ρ·cache + (1-ρ)·g²;  θ ← θ − lr·g/(√cache + ε)`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if params.len() != grads.len() {
            return Err(Error::Dimension(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.cache.is_empty() {
            self.cache = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for ((p, (name, g)), c) in params.iter_mut().zip(&grads).zip(&mut self.cache) {
            if p.len() != g.data.len() || p.len() != c.len() {
                return Err(Error::Dimension(format!("shape mismatch in `{name}`")));
            }
            for ((w, &g), c) in p.iter_mut().zip(g.data).zip(c.iter_mut()) {
                *c = self.decay * *c + (1.0 - self.decay) * g * g;
                *w -= self.learning_rate * g / (c.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss` at `params`.
/// Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<P, F>(params: &mut P, analytic: &P, eps: f64, mut loss: F) -> GradCheckReport
where
    P: Parameters + Clone,
    F: FnMut(&P) -> f64,
{
    let names: Vec<(String, usize)> = analytic
        .tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.data.len()))
        .collect();
    let analytic_data: Vec<Vec<f64>> = analytic
        .tensors()
        .iter()
        .map(|(_, t)| t.data.to_vec())
        .collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for (t, (name, len)) in names.iter().enumerate() {
        for i in 0..*len {
            let original = params.tensors_mut()[t][i];
            params.tensors_mut()[t][i] = original + eps;
            let plus = loss(params);
            params.tensors_mut()[t][i] = original - eps;
            let minus = loss(params);
            params.tensors_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic_data[t][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_tensor = name.clone();
                report.worst_index = i;
            }
        }
    }
    report
}

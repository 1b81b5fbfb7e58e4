//! Traditional classifiers over integer-encoded windows: Gaussian naive
//! Bayes, softmax regression and a CART decision tree.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cograph::{CooccurrenceGraph, GraphExport};
use crate::corpus::{Corpus, Definition};
use crate::error::{Error, Result};
use crate::features::{context_segment, integer_encode, FeatureContext, IntegerEncoding, TrainStats};
use crate::model::{CandidateScore, Prediction, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    NaiveBayes,
    SoftmaxRegression,
    DecisionTree,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::NaiveBayes,
        BaselineKind::SoftmaxRegression,
        BaselineKind::DecisionTree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::NaiveBayes => "naive-bayes",
            BaselineKind::SoftmaxRegression => "softmax-regression",
            BaselineKind::DecisionTree => "decision-tree",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<BaselineKind> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNaiveBayes {
    /// `(n_c + 1) / (n + 2)`.
    pub prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub variance: [Vec<f64>; 2],
}

/// Relative variance floor, as a fraction of the largest feature variance.
const VAR_SMOOTHING: f64 = 1e-9;

impl GaussianNaiveBayes {
    fn fit(x: &[Vec<f64>], y: &[bool]) -> GaussianNaiveBayes {
        let d = x[0].len();
        let n = x.len() as f64;
        let overall_var = (0..d)
            .map(|j| {
                let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
                x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n
            })
            .fold(0.0, f64::max);
        let floor = (VAR_SMOOTHING * overall_var).max(1e-12);
        let class = |c: bool| {
            let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
            let k = rows.len() as f64;
            let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / k).collect();
            let var: Vec<f64> = (0..d)
                .map(|j| rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / k + floor)
                .collect();
            (rows.len(), mean, var)
        };
        let (n0, m0, v0) = class(false);
        let (n1, m1, v1) = class(true);
        GaussianNaiveBayes {
            prior: [(n0 as f64 + 1.0) / (n + 2.0), (n1 as f64 + 1.0) / (n + 2.0)],
            mean: [m0, m1],
            variance: [v0, v1],
        }
    }

    fn proba(&self, x: &[f64]) -> f64 {
        let log_joint = |c: usize| {
            self.prior[c].ln()
                + x.iter()
                    .zip(&self.mean[c])
                    .zip(&self.variance[c])
                    .map(|((xi, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (xi - m).powi(2) / v))
                    .sum::<f64>()
        };
        let (a, b) = (log_joint(0), log_joint(1));
        crate::neural::sigmoid(b - a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegression {
    /// Two rows of weights over standardized features.
    pub weight: [Vec<f64>; 2],
    pub bias: [f64; 2],
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

const SOFTMAX_L2: f64 = 1e-4;
const SOFTMAX_LR: f64 = 0.5;
const SOFTMAX_ITERATIONS: usize = 1000;

impl SoftmaxRegression {
    pub fn zeros(d: usize) -> SoftmaxRegression {
        SoftmaxRegression {
            weight: [vec![0.0; d], vec![0.0; d]],
            bias: [0.0; 2],
            center: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    fn fit(x: &[Vec<f64>], y: &[bool]) -> SoftmaxRegression {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut m = SoftmaxRegression::zeros(d);
        for j in 0..d {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            m.center[j] = mean;
            m.scale[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        let z: Vec<Vec<f64>> = x.iter().map(|r| m.standardize(r)).collect();
        for _ in 0..SOFTMAX_ITERATIONS {
            let mut gw = [vec![0.0; d], vec![0.0; d]];
            let mut gb = [0.0; 2];
            for (row, &label) in z.iter().zip(y) {
                let p = m.logits_proba(row);
                for c in 0..2 {
                    let target = if (c == 1) == label { 1.0 } else { 0.0 };
                    let g = p[c] - target;
                    gb[c] += g;
                    for (gwj, rj) in gw[c].iter_mut().zip(row) {
                        *gwj += g * rj;
                    }
                }
            }
            for c in 0..2 {
                m.bias[c] -= SOFTMAX_LR * gb[c] / n;
                for (w, g) in m.weight[c].iter_mut().zip(&gw[c]) {
                    *w -= SOFTMAX_LR * (g / n + SOFTMAX_L2 * *w);
                }
            }
        }
        m
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((v, c), s)| (v - c) / s)
            .collect()
    }

    fn logits_proba(&self, z: &[f64]) -> [f64; 2] {
        let logit = |c: usize| self.bias[c] + self.weight[c].iter().zip(z).map(|(w, v)| w * v).sum::<f64>();
        let p = crate::neural::softmax(&[logit(0), logit(1)]);
        [p[0], p[1]]
    }

    fn proba(&self, x: &[f64]) -> f64 {
        self.logits_proba(&self.standardize(x))[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Index of the `x <= threshold` child.
        left: usize,
        right: usize,
    },
    Leaf {
        positives: usize,
        total: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

pub const TREE_MAX_DEPTH: usize = 12;
pub const TREE_MIN_LEAF: usize = 5;

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

impl DecisionTree {
    fn fit(x: &[Vec<f64>], y: &[bool]) -> DecisionTree {
        let mut tree = DecisionTree { nodes: Vec::new() };
        let rows: Vec<usize> = (0..x.len()).collect();
        tree.grow(x, y, rows, 0);
        tree
    }

    fn grow(&mut self, x: &[Vec<f64>], y: &[bool], rows: Vec<usize>, depth: usize) -> usize {
        let total = rows.len();
        let positives = rows.iter().filter(|&&r| y[r]).count();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { positives, total });
        if depth >= TREE_MAX_DEPTH || positives == 0 || positives == total || total < 2 * TREE_MIN_LEAF {
            return id;
        }
        let Some((feature, threshold)) = best_split(x, y, &rows, positives) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&k| x[k][feature] <= threshold);
        let left = self.grow(x, y, l, depth + 1);
        let right = self.grow(x, y, r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn proba(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { positives, total } => return *positives as f64 / *total as f64,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Lowest weighted Gini over midpoints of consecutive distinct values; ties
/// keep the lowest feature index, then the lowest threshold.
fn best_split(x: &[Vec<f64>], y: &[bool], rows: &[usize], positives: usize) -> Option<(usize, f64)> {
    let total = rows.len();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted = rows.to_vec();
    for feature in 0..x[rows[0]].len() {
        sorted.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let mut left_pos = 0;
        for k in 0..total - 1 {
            if y[sorted[k]] {
                left_pos += 1;
            }
            let (v, next) = (x[sorted[k]][feature], x[sorted[k + 1]][feature]);
            let n_left = k + 1;
            if v == next || n_left < TREE_MIN_LEAF || total - n_left < TREE_MIN_LEAF {
                continue;
            }
            let impurity = (n_left as f64 * gini(left_pos, n_left)
                + (total - n_left) as f64 * gini(positives - left_pos, total - n_left))
                / total as f64;
            if best.is_none_or(|(b, _, _)| impurity < b - 1e-12) {
                best = Some((impurity, feature, (v + next) / 2.0));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classifier {
    NaiveBayes(GaussianNaiveBayes),
    SoftmaxRegression(SoftmaxRegression),
    DecisionTree(DecisionTree),
}

impl Classifier {
    pub fn kind(&self) -> BaselineKind {
        match self {
            Classifier::NaiveBayes(_) => BaselineKind::NaiveBayes,
            Classifier::SoftmaxRegression(_) => BaselineKind::SoftmaxRegression,
            Classifier::DecisionTree(_) => BaselineKind::DecisionTree,
        }
    }

    fn width(&self) -> Option<usize> {
        match self {
            Classifier::NaiveBayes(m) => Some(m.mean[0].len()),
            Classifier::SoftmaxRegression(m) => Some(m.center.len()),
            Classifier::DecisionTree(_) => None,
        }
    }
}

/// Fits one classifier; both classes must be present.
pub fn train_baseline(kind: BaselineKind, instances: &[(IntegerEncoding, bool)]) -> Result<Classifier> {
    let Some((first, _)) = instances.first() else {
        return Err(Error::Data("no training instances".into()));
    };
    let width = first.values.len();
    if instances.iter().any(|(e, _)| e.values.len() != width) {
        return Err(Error::Dimension("training encodings differ in length".into()));
    }
    let positives = instances.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == instances.len() {
        return Err(Error::Data("baseline training needs both classes".into()));
    }
    let x: Vec<Vec<f64>> = instances.iter().map(|(e, _)| e.values.clone()).collect();
    let y: Vec<bool> = instances.iter().map(|(_, l)| *l).collect();
    Ok(match kind {
        BaselineKind::NaiveBayes => Classifier::NaiveBayes(GaussianNaiveBayes::fit(&x, &y)),
        BaselineKind::SoftmaxRegression => Classifier::SoftmaxRegression(SoftmaxRegression::fit(&x, &y)),
        BaselineKind::DecisionTree => Classifier::DecisionTree(DecisionTree::fit(&x, &y)),
    })
}

/// Probability of the hypernym class.
pub fn predict_baseline(model: &Classifier, encoding: &IntegerEncoding) -> Result<f64> {
    if let Some(w) = model.width() {
        if w != encoding.values.len() {
            return Err(Error::Dimension(format!(
                "encoding has {} values, model expects {w}",
                encoding.values.len()
            )));
        }
    }
    let x = &encoding.values;
    Ok(match model {
        Classifier::NaiveBayes(m) => m.proba(x),
        Classifier::SoftmaxRegression(m) => m.proba(x),
        Classifier::DecisionTree(m) => m.proba(x),
    })
}

/// A baseline classifier together with what it needs to encode candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub window: usize,
    pub threshold: f64,
    pub classifier: Classifier,
    pub context: FeatureContext,
}

fn encode_candidates(defs: &[Definition], window: usize, ctx: &FeatureContext) -> Result<Vec<(usize, usize, IntegerEncoding)>> {
    let mut out = Vec::new();
    for (d, def) in defs.iter().enumerate() {
        for c in &def.candidates {
            let seg = context_segment(&def.tags, c.position, window)?;
            out.push((d, c.position, integer_encode(&seg, &ctx.features(def, c.position))));
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineFile {
    version: u64,
    kind: BaselineKind,
    window: usize,
    threshold: f64,
    classifier: Classifier,
    train_counts: std::collections::BTreeMap<String, u64>,
    graph: GraphExport,
}

impl BaselineModel {
    pub fn train(train: &Corpus, kind: BaselineKind, window: usize, threshold: f64) -> Result<BaselineModel> {
        BaselineModel::train_with_tag_sets(train, kind, window, threshold, &[])
    }

    pub fn train_with_tag_sets(
        train: &Corpus,
        kind: BaselineKind,
        window: usize,
        threshold: f64,
        tag_sets: &[Vec<String>],
    ) -> Result<BaselineModel> {
        if window < 1 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
        }
        let context = FeatureContext::with_tag_sets(train, tag_sets);
        let instances: Vec<(IntegerEncoding, bool)> = encode_candidates(&train.definitions, window, &context)?
            .into_iter()
            .map(|(d, pos, e)| (e, train.definitions[d].is_gold(pos)))
            .collect();
        let classifier = train_baseline(kind, &instances)?;
        Ok(BaselineModel {
            kind,
            window,
            threshold,
            classifier,
            context,
        })
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
        }
        self.threshold = threshold;
        Ok(())
    }

    pub fn predict_all(&self, definitions: &[Definition]) -> Result<Vec<Prediction>> {
        let mut per_def: Vec<Vec<CandidateScore>> = vec![Vec::new(); definitions.len()];
        for (d, pos, enc) in encode_candidates(definitions, self.window, &self.context)? {
            let p = predict_baseline(&self.classifier, &enc)?;
            per_def[d].push(CandidateScore {
                position: pos,
                word: definitions[d].words[pos - 1].clone(),
                p_init: p,
                p_final: p,
            });
        }
        Ok(per_def
            .into_iter()
            .map(|c| Prediction::select(c, self.threshold))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&BaselineFile {
            version: FORMAT_VERSION,
            kind: self.kind,
            window: self.window,
            threshold: self.threshold,
            classifier: self.classifier.clone(),
            train_counts: self.context.stats.counts.clone(),
            graph: self.context.graph.export(),
        })?)
    }

    pub(crate) fn from_document(kind: &str, doc: Value) -> Result<BaselineModel> {
        let kind: BaselineKind = kind
            .parse()
            .map_err(|_| Error::Corrupt(format!("unknown model kind `{kind}`")))?;
        let file: BaselineFile = serde_json::from_value(doc).map_err(|e| Error::Corrupt(e.to_string()))?;
        if file.classifier.kind() != kind {
            return Err(Error::Corrupt("classifier does not match the declared kind".into()));
        }
        Ok(BaselineModel {
            kind,
            window: file.window,
            threshold: file.threshold,
            classifier: file.classifier,
            context: FeatureContext {
                stats: TrainStats {
                    counts: file.train_counts,
                },
                graph: CooccurrenceGraph::import(&file.graph)?,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enc(v: &[f64]) -> IntegerEncoding {
        IntegerEncoding { values: v.to_vec() }
    }

    fn data(points: &[(&[f64], bool)], copies: usize) -> Vec<(IntegerEncoding, bool)> {
        (0..copies)
            .flat_map(|_| points.iter().map(|(v, y)| (enc(v), *y)))
            .collect()
    }

    fn accuracy(m: &Classifier, d: &[(IntegerEncoding, bool)]) -> f64 {
        d.iter()
            .filter(|(e, y)| (predict_baseline(m, e).unwrap() >= 0.5) == *y)
            .count() as f64
            / d.len() as f64
    }

    #[test]
    fn separable_toy_set() {
        let d = data(
            &[(&[0.0, 1.0], false), (&[1.0, 2.0], false), (&[3.0, 0.5], true), (&[4.0, 1.5], true)],
            5,
        );
        let m = train_baseline(BaselineKind::SoftmaxRegression, &d).unwrap();
        assert_eq!(accuracy(&m, &d), 1.0);
    }

    #[test]
    fn xor_needs_a_tree() {
        let d = data(
            &[(&[0.0, 0.0], false), (&[0.0, 1.0], true), (&[1.0, 0.0], true), (&[1.0, 1.0], false)],
            10,
        );
        let tree = train_baseline(BaselineKind::DecisionTree, &d).unwrap();
        assert_eq!(accuracy(&tree, &d), 1.0);
        if let Classifier::DecisionTree(t) = &tree {
            assert!(t.depth() >= 2);
        }
        let lr = train_baseline(BaselineKind::SoftmaxRegression, &d).unwrap();
        assert!(accuracy(&lr, &d) <= 0.75);
    }

    #[test]
    fn constant_features_predict_majority() {
        let mut d = data(&[(&[1.0, 1.0], false)], 30);
        d.extend(data(&[(&[1.0, 1.0], true)], 10));
        for kind in BaselineKind::ALL {
            let m = train_baseline(kind, &d).unwrap();
            assert!(predict_baseline(&m, &enc(&[1.0, 1.0])).unwrap() < 0.5, "{kind}");
        }
    }

    #[test]
    fn probability_examples() {
        let d = data(&[(&[-1.0], false), (&[-3.0], false), (&[1.0], true), (&[3.0], true)], 5);
        let nb = train_baseline(BaselineKind::NaiveBayes, &d).unwrap();
        assert!((predict_baseline(&nb, &enc(&[0.0])).unwrap() - 0.5).abs() < 1e-12);
        assert!(predict_baseline(&nb, &enc(&[0.0, 1.0])).is_err());

        let tree = DecisionTree {
            nodes: vec![TreeNode::Leaf { positives: 9, total: 10 }],
        };
        assert!((tree.proba(&[0.0]) - 0.9).abs() < 1e-15);

        let zero = Classifier::SoftmaxRegression(SoftmaxRegression::zeros(3));
        assert_eq!(predict_baseline(&zero, &enc(&[5.0, -2.0, 1.0])).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        let d = data(&[(&[1.0], true), (&[2.0], true)], 3);
        for kind in BaselineKind::ALL {
            assert!(matches!(train_baseline(kind, &d), Err(Error::Data(_))));
        }
        assert!(train_baseline(BaselineKind::NaiveBayes, &[]).is_err());
    }

    #[test]
    fn tree_respects_min_leaf() {
        let mut d = data(&[(&[0.0], false)], 20);
        d.extend(data(&[(&[1.0], true)], 3));
        let Classifier::DecisionTree(t) = train_baseline(BaselineKind::DecisionTree, &d).unwrap() else {
            unreachable!()
        };
        assert_eq!(t.nodes.len(), 1);
    }

    proptest! {
        #[test]
        fn probabilities_are_valid(
            rows in proptest::collection::vec((proptest::collection::vec(-50.0f64..50.0, 3), any::<bool>()), 12..40),
            probe in proptest::collection::vec(-1e3f64..1e3, 3),
        ) {
            let mut d: Vec<(IntegerEncoding, bool)> = rows.iter().map(|(v, y)| (enc(v), *y)).collect();
            d.push((enc(&[0.0, 0.0, 0.0]), true));
            d.push((enc(&[1.0, 1.0, 1.0]), false));
            for kind in BaselineKind::ALL {
                let m = train_baseline(kind, &d).unwrap();
                let p = predict_baseline(&m, &enc(&probe)).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                prop_assert_eq!(train_baseline(kind, &d).unwrap(), m);
            }
        }
    }
}

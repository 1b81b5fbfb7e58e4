//! Model inputs derived from a preprocessed definition.

use std::collections::{BTreeMap, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cograph::CooccurrenceGraph;
use crate::corpus::{Corpus, Definition};
use crate::error::{Error, Result};
use crate::postag::{one_hot, PosType, POS_DIM};

/// The PoS window around one candidate, the candidate itself excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSegment {
    pub position: usize,
    pub window: usize,
    /// Positions `i-L .. i-1`, padded with `Null`.
    pub pre: Vec<PosType>,
    /// Positions `i+1 .. i+L`, padded with `Null`.
    pub post: Vec<PosType>,
}

impl ContextSegment {
    /// 16 × 2L one-hot matrix, columns ordered pre then post.
    pub fn matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((POS_DIM, 2 * self.window));
        for (col, p) in self.pre.iter().chain(&self.post).enumerate() {
            for (row, v) in one_hot(*p).iter().enumerate() {
                m[[row, col]] = *v;
            }
        }
        m
    }
}

/// Slices `L` items either side of 1-based `position`, substituting `pad`
/// outside the sequence.
pub fn window_around<T: Clone>(
    seq: &[T],
    position: usize,
    window: usize,
    pad: T,
) -> (Vec<T>, Vec<T>) {
    let at = |k: isize| -> T {
        if k >= 1 && (k as usize) <= seq.len() {
            seq[k as usize - 1].clone()
        } else {
            pad.clone()
        }
    };
    let i = position as isize;
    let l = window as isize;
    let pre = (i - l..i).map(at).collect();
    let post = (i + 1..=i + l).map(at).collect();
    (pre, post)
}

pub fn context_segment(tags: &[PosType], position: usize, window: usize) -> Result<ContextSegment> {
    if position == 0 || position > tags.len() {
        return Err(Error::Data(format!(
            "candidate position {position} outside 1..={}",
            tags.len()
        )));
    }
    if window == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    let (pre, post) = window_around(tags, position, window, PosType::Null);
    Ok(ContextSegment {
        position,
        window,
        pre,
        post,
    })
}

/// Token statistics from the training split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub counts: BTreeMap<String, u64>,
}

impl TrainStats {
    pub fn from_corpus(train: &Corpus) -> TrainStats {
        TrainStats {
            counts: train.frequency.clone(),
        }
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    /// `ln(1+count) / ln(1+max_count)`, 0 for unseen words.
    pub fn normalized_frequency(&self, word: &str) -> f64 {
        let max = self.max_count();
        if max == 0 {
            return 0.0;
        }
        let c = self.counts.get(&word.to_lowercase()).copied().unwrap_or(0);
        (c as f64).ln_1p() / (max as f64).ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementFeatures {
    pub position: f64,
    pub capitalized: f64,
    pub frequency: f64,
    pub dc: f64,
}

impl RefinementFeatures {
    pub const LEN: usize = 4;

    pub fn to_array(self) -> [f64; Self::LEN] {
        [self.position, self.capitalized, self.frequency, self.dc]
    }
}

pub fn refinement_features(
    definition: &Definition,
    position: usize,
    stats: &TrainStats,
    graph: &CooccurrenceGraph,
) -> RefinementFeatures {
    let word = &definition.words[position - 1];
    RefinementFeatures {
        position: position as f64 / definition.len() as f64,
        capitalized: if word.chars().next().is_some_and(char::is_uppercase) {
            1.0
        } else {
            0.0
        },
        frequency: stats.normalized_frequency(word),
        dc: graph.degree_centrality(word),
    }
}

/// Training-split statistics shared by the refinement stage and the
/// baselines: token counts and the co-occurrence graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureContext {
    pub stats: TrainStats,
    pub graph: CooccurrenceGraph,
}

impl FeatureContext {
    pub fn from_train(train: &Corpus) -> FeatureContext {
        FeatureContext::with_tag_sets(train, &[])
    }

    /// Like [`FeatureContext::from_train`], with extra co-tag groups (for
    /// example from a tag-set file) added to the graph.
    pub fn with_tag_sets(train: &Corpus, extra: &[Vec<String>]) -> FeatureContext {
        let mut sets = train.tag_sets();
        sets.extend(extra.iter().cloned());
        FeatureContext {
            stats: TrainStats::from_corpus(train),
            graph: CooccurrenceGraph::build(&sets, &train.hypernym_map()),
        }
    }

    pub fn features(&self, definition: &Definition, position: usize) -> RefinementFeatures {
        refinement_features(definition, position, &self.stats, &self.graph)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum HybridToken {
    Word(String),
    Pos(PosType),
}

/// Frequent words stay as (lowercased) words, everything else becomes its PoS.
pub fn hybrid_tokens(words: &[String], tags: &[PosType], top: &HashSet<String>) -> Vec<HybridToken> {
    words
        .iter()
        .zip(tags)
        .map(|(w, p)| {
            let lower = w.to_lowercase();
            if top.contains(&lower) {
                HybridToken::Word(lower)
            } else {
                HybridToken::Pos(*p)
            }
        })
        .collect()
}

/// Flat numeric layout for the traditional classifiers:
/// `[I(pre)..., 33 - I(post)..., dc, position, capitalized, frequency]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerEncoding {
    pub values: Vec<f64>,
}

pub fn integer_encode(segment: &ContextSegment, feats: &RefinementFeatures) -> IntegerEncoding {
    let mut values: Vec<f64> = segment.pre.iter().map(|p| p.index() as f64).collect();
    values.extend(segment.post.iter().map(|p| (33 - p.index()) as f64));
    values.extend([feats.dc, feats.position, feats.capitalized, feats.frequency]);
    IntegerEncoding { values }
}

//! Annotated definitions: ingestion, preprocessing, splitting and vocabulary.

mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postag::{fallback_tag, map_penn_tag, PosType};
use crate::rng;

pub use synth::{synth_generate, vocabulary_histogram, SynthConfig, Template, DEFAULT_TEMPLATES};

/// One input line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub term: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypernym: Option<String>,
    /// 1-based index into `tokens`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypernym_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_partners: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawToken {
    pub surface: String,
    pub penn: String,
}

/// A hypernym candidate: the `ordinal`-th noun, found at 1-based `position` in W.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub ordinal: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Definition {
    pub term: String,
    /// Tokens after parenthetical removal, before PoS filtering.
    pub raw_tokens: Vec<RawToken>,
    /// Retained surface tokens (W).
    pub words: Vec<String>,
    /// Retained PoS sequence (Q); never contains `Null`.
    pub tags: Vec<PosType>,
    /// 0-based index into `raw_tokens` for each retained token.
    raw_index: Vec<usize>,
    pub candidates: Vec<Candidate>,
    /// 1-based positions in W annotated as hypernym.
    pub gold: BTreeSet<usize>,
    pub tag_partners: Vec<String>,
}

/// Why a record could not become a [`Definition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordIssue {
    Malformed(String),
    Annotation(String),
}

impl RecordIssue {
    pub fn reason(&self) -> &str {
        match self {
            RecordIssue::Malformed(r) | RecordIssue::Annotation(r) => r,
        }
    }

    fn at(self, line: usize) -> Error {
        match self {
            RecordIssue::Malformed(message) => Error::Parse { line, message },
            RecordIssue::Annotation(reason) => Error::Annotation { line, reason },
        }
    }
}

fn is_punctuation(surface: &str, penn: &str) -> bool {
    !surface.chars().any(char::is_alphanumeric)
        || matches!(penn, "," | "." | ":" | "``" | "''" | "-LRB-" | "-RRB-" | "#" | "$")
}

/// Marks which tokens survive removal of parenthesized spans.
///
/// Nested spans go with their enclosing span, an unmatched `(` removes
/// everything up to the end, and an unmatched `)` removes only itself.
pub fn parenthetical_mask<S: AsRef<str>>(surfaces: &[S]) -> Vec<bool> {
    let mut depth = 0usize;
    surfaces
        .iter()
        .map(|s| match s.as_ref() {
            "(" => {
                depth += 1;
                false
            }
            ")" => {
                depth = depth.saturating_sub(1);
                false
            }
            _ => depth == 0,
        })
        .collect()
}

pub fn strip_parentheticals(tokens: &[RawToken]) -> Vec<RawToken> {
    let surfaces: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
    tokens
        .iter()
        .zip(parenthetical_mask(&surfaces))
        .filter(|(_, keep)| *keep)
        .map(|(t, _)| t.clone())
        .collect()
}

impl Definition {
    /// Runs the preprocessing pipeline on one raw record.
    pub fn from_record(record: &RawRecord) -> Result<Definition, RecordIssue> {
        if record.term.trim().is_empty() {
            return Err(RecordIssue::Malformed("empty term".into()));
        }
        if record.tokens.is_empty() {
            return Err(RecordIssue::Malformed("empty token list".into()));
        }
        let penn = match &record.pos {
            Some(pos) if pos.len() != record.tokens.len() => {
                return Err(RecordIssue::Malformed(format!(
                    "{} tokens but {} tags",
                    record.tokens.len(),
                    pos.len()
                )))
            }
            Some(pos) => pos.clone(),
            None => fallback_tag(&record.tokens),
        };
        let gold_raw = match (&record.hypernym, record.hypernym_index) {
            (_, Some(idx)) if idx == 0 || idx > record.tokens.len() => {
                return Err(RecordIssue::Malformed(format!(
                    "hypernym_index {idx} outside 1..={}",
                    record.tokens.len()
                )))
            }
            (_, Some(idx)) => GoldSpec::Index(idx - 1),
            (Some(h), None) => GoldSpec::Surface(h.clone()),
            (None, None) => {
                return Err(RecordIssue::Malformed(
                    "one of `hypernym` or `hypernym_index` is required".into(),
                ))
            }
        };

        let mask = parenthetical_mask(&record.tokens);
        let mut raw_tokens = Vec::new();
        let mut kept_from_input = Vec::new();
        for (k, keep) in mask.iter().enumerate() {
            if *keep {
                kept_from_input.push(k);
                raw_tokens.push(RawToken {
                    surface: record.tokens[k].clone(),
                    penn: penn[k].clone(),
                });
            }
        }
        let gold = match gold_raw {
            GoldSpec::Index(k) => match kept_from_input.iter().position(|&x| x == k) {
                Some(r) => GoldSpec::Index(r),
                None => {
                    return Err(RecordIssue::Annotation(
                        "hypernym lies inside a parenthetical".into(),
                    ))
                }
            },
            other => other,
        };
        Self::build(
            record.term.clone(),
            raw_tokens,
            Some(gold),
            record.tag_partners.clone().unwrap_or_default(),
        )
    }

    /// A definition without gold, for prediction. Tags come from the
    /// fallback tagger when `pos` is absent; a sentence without candidate
    /// nouns is accepted.
    pub fn unannotated(term: &str, tokens: &[String], pos: Option<&[String]>) -> Result<Definition, RecordIssue> {
        if tokens.is_empty() {
            return Err(RecordIssue::Malformed("empty token list".into()));
        }
        let penn = match pos {
            Some(p) if p.len() != tokens.len() => {
                return Err(RecordIssue::Malformed(format!(
                    "{} tokens but {} tags",
                    tokens.len(),
                    p.len()
                )))
            }
            Some(p) => p.to_vec(),
            None => fallback_tag(tokens),
        };
        let mask = parenthetical_mask(tokens);
        let raw_tokens = tokens
            .iter()
            .zip(penn)
            .zip(mask)
            .filter(|(_, keep)| *keep)
            .map(|((surface, penn), _)| RawToken {
                surface: surface.clone(),
                penn,
            })
            .collect();
        Self::build(term.to_string(), raw_tokens, None, Vec::new())
    }

    fn build(
        term: String,
        raw_tokens: Vec<RawToken>,
        gold: Option<GoldSpec>,
        tag_partners: Vec<String>,
    ) -> Result<Definition, RecordIssue> {
        let term_words: HashSet<String> =
            term.split_whitespace().map(str::to_lowercase).collect();
        let mut words = Vec::new();
        let mut tags = Vec::new();
        let mut raw_index = Vec::new();
        for (k, tok) in raw_tokens.iter().enumerate() {
            if is_punctuation(&tok.surface, &tok.penn) {
                continue;
            }
            if let Some(p) = map_penn_tag(&tok.penn) {
                words.push(tok.surface.clone());
                tags.push(p);
                raw_index.push(k);
            }
        }
        let mut candidates = Vec::new();
        for (k, (w, p)) in words.iter().zip(&tags).enumerate() {
            if *p == PosType::NN && !term_words.contains(&w.to_lowercase()) {
                candidates.push(Candidate {
                    ordinal: candidates.len() + 1,
                    position: k + 1,
                });
            }
        }
        let Some(gold) = gold else {
            return Ok(Definition {
                term,
                raw_tokens,
                words,
                tags,
                raw_index,
                candidates,
                gold: BTreeSet::new(),
                tag_partners,
            });
        };
        if candidates.is_empty() {
            return Err(RecordIssue::Annotation("no candidate nouns".into()));
        }
        let position = match &gold {
            GoldSpec::Index(r) => raw_index
                .iter()
                .position(|x| x == r)
                .map(|k| k + 1)
                .filter(|pos| candidates.iter().any(|c| c.position == *pos)),
            GoldSpec::Surface(h) => {
                let head = h.split_whitespace().last().unwrap_or("").to_lowercase();
                candidates
                    .iter()
                    .find(|c| words[c.position - 1].to_lowercase() == head)
                    .map(|c| c.position)
            }
        };
        let Some(position) = position else {
            return Err(RecordIssue::Annotation(
                "gold hypernym is not among the candidate nouns".into(),
            ));
        };
        Ok(Definition {
            term,
            raw_tokens,
            words,
            tags,
            raw_index,
            candidates,
            gold: BTreeSet::from([position]),
            tag_partners,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_gold(&self, position: usize) -> bool {
        self.gold.contains(&position)
    }

    /// Surface of the first gold position.
    pub fn gold_word(&self) -> Option<&str> {
        self.gold
            .iter()
            .next()
            .map(|&p| self.words[p - 1].as_str())
    }

    /// Inverse of [`Definition::from_record`] for already-preprocessed data.
    pub fn to_record(&self) -> RawRecord {
        let gold = self.gold.iter().next().map(|&p| self.raw_index[p - 1] + 1);
        RawRecord {
            term: self.term.clone(),
            tokens: self.raw_tokens.iter().map(|t| t.surface.clone()).collect(),
            pos: Some(self.raw_tokens.iter().map(|t| t.penn.clone()).collect()),
            hypernym: None,
            hypernym_index: gold,
            tag_partners: if self.tag_partners.is_empty() {
                None
            } else {
                Some(self.tag_partners.clone())
            },
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("record serialization is infallible")
    }
}

enum GoldSpec {
    Index(usize),
    Surface(String),
}

/// Parses one JSON line (1-based `line` is used in error messages).
pub fn parse_record(text: &str, line: usize) -> Result<Definition> {
    let record: RawRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    Definition::from_record(&record).map_err(|issue| issue.at(line))
}

/// A line that was not loaded, with its reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub definitions: Vec<Definition>,
    pub frequency: BTreeMap<String, u64>,
    pub source: String,
}

impl Corpus {
    pub fn new(definitions: Vec<Definition>, source: impl Into<String>) -> Corpus {
        let frequency = count_tokens(&definitions);
        Corpus {
            definitions,
            frequency,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.definitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.definitions.is_empty()
    }

    pub fn candidate_count(&self) -> usize {
        self.definitions.iter().map(|d| d.candidates.len()).sum()
    }

    /// Parses JSON Lines text, skipping blank lines. Bad records are reported,
    /// not fatal.
    pub fn from_jsonl<R: BufRead>(reader: R, source: &str) -> Result<(Corpus, Vec<Rejection>)> {
        let mut definitions = Vec::new();
        let mut rejected = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match parse_record(&line, k + 1) {
                Ok(d) => definitions.push(d),
                Err(Error::Parse { line, message }) => rejected.push(Rejection {
                    line,
                    reason: message,
                }),
                Err(Error::Annotation { line, reason }) => {
                    rejected.push(Rejection { line, reason })
                }
                Err(e) => return Err(e),
            }
        }
        Ok((Corpus::new(definitions, source), rejected))
    }

    pub fn load(path: &Path) -> Result<(Corpus, Vec<Rejection>)> {
        let file = fs::File::open(path)?;
        Corpus::from_jsonl(BufReader::new(file), &path.display().to_string())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for d in &self.definitions {
            writeln!(out, "{}", d.to_json_line())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    /// Deterministic shuffled split; the first `⌊fraction·n⌋` records train.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        if self.len() < 2 {
            return Err(Error::Data("cannot split a corpus with fewer than 2 records".into()));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, rng::STREAM_SPLIT));
        let cut = (train_fraction * self.len() as f64).floor() as usize;
        let pick = |idx: &[usize]| idx.iter().map(|&i| self.definitions[i].clone()).collect();
        Ok((
            Corpus::new(pick(&order[..cut]), format!("{}#train", self.source)),
            Corpus::new(pick(&order[cut..]), format!("{}#test", self.source)),
        ))
    }

    /// Map from each (lowercased) term to its first gold hypernym.
    pub fn hypernym_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        for d in &self.definitions {
            if let Some(h) = d.gold_word() {
                map.entry(d.term.to_lowercase())
                    .or_insert_with(|| h.to_lowercase());
            }
        }
        map
    }

    /// Co-tag groups: each definition's term together with its tag partners.
    pub fn tag_sets(&self) -> Vec<Vec<String>> {
        self.definitions
            .iter()
            .filter(|d| !d.tag_partners.is_empty())
            .map(|d| {
                std::iter::once(&d.term)
                    .chain(&d.tag_partners)
                    .map(|t| t.to_lowercase())
                    .collect()
            })
            .collect()
    }
}

fn count_tokens(definitions: &[Definition]) -> BTreeMap<String, u64> {
    let mut freq = BTreeMap::new();
    for d in definitions {
        for w in &d.words {
            *freq.entry(w.to_lowercase()).or_insert(0) += 1;
        }
    }
    freq
}

/// The `k` most frequent lowercased tokens; ties go to the lexicographically
/// smaller word.
pub fn build_topk(train: &Corpus, k: usize) -> Vec<String> {
    let mut ranked: Vec<(&String, &u64)> = train.frequency.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(w, _)| w.clone()).collect()
}

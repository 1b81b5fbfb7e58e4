//! Template-driven synthetic definitions with ground-truth tags.
//!
//! Templates are whitespace-separated items, each either a slot in braces or
//! a literal `surface/PENN` pair, e.g. `{T} is/VBZ {DT} {H} for/IN {VBG} {D}`.
//! A leading `?` makes an item optional; it is emitted with probability 1/2.
//!
//! | slot | fills with | tag |
//! |------|------------|-----|
//! | `T`  | the defined term | NN |
//! | `H`  | gold hypernym, Zipf over the hypernym pool | NN |
//! | `HP` | gold hypernym drawn from the most popular few | NN |
//! | `D`  | distractor noun (hypernym pool or general nouns) | NN |
//! | `N`  | noun modifier, drawn like `D` | NN |
//! | `F`  | general noun outside the hypernym pool | NN |
//! | `J`  | adjective | JJ |
//! | `DT`, `IN` | determiner / preposition | DT / IN |
//! | `VB`, `VBD`, `VBG`, `VBN`, `VBP`, `VBZ` | inflected verb | same |

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Definition, RawRecord};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub pattern: String,
    pub weight: f64,
}

impl Template {
    pub fn new(pattern: &str, weight: f64) -> Template {
        Template {
            pattern: pattern.to_string(),
            weight,
        }
    }
}

/// Built-in template set with relative weights.
pub const DEFAULT_TEMPLATES: &[(&str, f64)] = &[
    ("{T} is/VBZ {DT} {H} {VBN} {IN} ?{DT} {D}", 10.0),
    ("{T} is/VBZ {DT} {N} {H} {IN} ?{DT} {D}", 10.0),
    ("{T} is/VBZ {DT} {H} {VBG} ?{DT} {D}", 8.0),
    ("{T} is/VBZ {DT} {N} {H} for/IN {VBG} {D}", 8.0),
    ("{T} :/: {DT} ?{J} {H} {VBN} {IN} {D}", 6.0),
    ("{T} :/: {DT} ?{N} {H} of/IN {D}", 6.0),
    ("{T} was/VBD defined/VBN as/IN {DT} ?{N} {H} that/WDT {VBZ} ?{DT} {D}", 5.0),
    ("{T} is/VBZ {DT} ?{J} {H} used/VBN to/TO {VB} ?{N} {D}", 5.0),
    ("{T} refers/VBZ to/TO {DT} {H} {IN} {D} ?{VBG} ?{N}", 5.0),
    ("{T} are/VBP ?{N} {H} which/WDT {VBP} {D}", 4.0),
    ("In/IN {D} ,/, {T} is/VBZ {DT} {H} {VBN} by/IN {D}", 4.0),
    ("{T} (/-LRB- ?{J} {D} )/-RRB- is/VBZ {DT} {H} {IN} ?{N} {D}", 4.0),
    ("{T} {VBZ} {DT} {H} {IN} {DT} {D} ?{N}", 5.0),
    ("{T} ,/, {DT} ?{N} {H} where/WRB {D} {VBZ} {D}", 4.0),
    ("{T} :/: the/DT {HP} is/VBZ an/DT ?{J} {F} for/IN {D}", 3.0),
    ("{T} :/: the/DT {F} is/VBZ an/DT ?{J} {HP} for/IN {D}", 3.0),
];

const DETERMINERS: &[&str] = &["a", "the", "an", "any", "each", "some", "this", "every", "another"];
const PREPOSITIONS: &[&str] = &[
    "of", "for", "in", "with", "by", "on", "from", "into", "within", "across", "via", "among",
    "under", "over", "through", "toward", "beyond", "upon",
];
const POPULAR_HYPERNYMS: usize = 8;
/// Share of verb stems that are also nouns ("map", "control").
const SHARED_STEMS: f64 = 0.3;
/// Share of `N` modifiers that are gerunds ("logging framework").
const GERUND_MODIFIER: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub records: usize,
    /// Distinct open-class lexemes (nouns, verb stems, adjectives).
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    /// Minimum fraction of the emitted vocabulary that occurs exactly once.
    pub singleton_fraction: f64,
    /// Size of the noun pool that hypernyms are drawn from.
    pub hypernyms: usize,
    pub max_partners: usize,
    pub templates: Vec<Template>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            records: 5000,
            vocab_size: 20000,
            zipf_exponent: 0.6,
            singleton_fraction: 0.2,
            hypernyms: 1500,
            max_partners: 3,
            templates: DEFAULT_TEMPLATES
                .iter()
                .map(|(p, w)| Template::new(p, *w))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Slot {
    Term,
    Hyper,
    PopularHyper,
    Distractor,
    Filler,
    Modifier,
    Adjective,
    Det,
    Prep,
    Verb(&'static str),
}

#[derive(Debug, Clone)]
enum Item {
    Slot(Slot),
    Literal { surface: String, penn: String },
}

/// Parsed items paired with whether each one is optional.
fn parse_template(pattern: &str) -> Result<Vec<(Item, bool)>> {
    let mut items = Vec::new();
    let mut gold = 0;
    for piece in pattern.split_whitespace() {
        let (piece, optional) = match piece.strip_prefix('?') {
            Some(rest) if !rest.is_empty() => (rest, true),
            _ => (piece, false),
        };
        if let Some(name) = piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
            let slot = match name {
                "T" => Slot::Term,
                "H" => Slot::Hyper,
                "HP" => Slot::PopularHyper,
                "D" => Slot::Distractor,
                "F" => Slot::Filler,
                "N" => Slot::Modifier,
                "J" => Slot::Adjective,
                "DT" => Slot::Det,
                "IN" => Slot::Prep,
                "VB" => Slot::Verb("VB"),
                "VBD" => Slot::Verb("VBD"),
                "VBG" => Slot::Verb("VBG"),
                "VBN" => Slot::Verb("VBN"),
                "VBP" => Slot::Verb("VBP"),
                "VBZ" => Slot::Verb("VBZ"),
                other => {
                    return Err(Error::Config(format!(
                        "unknown template slot `{{{other}}}` in `{pattern}`"
                    )))
                }
            };
            if matches!(slot, Slot::Hyper | Slot::PopularHyper) {
                if optional {
                    return Err(Error::Config(format!(
                        "the hypernym slot cannot be optional in `{pattern}`"
                    )));
                }
                gold += 1;
            }
            items.push((Item::Slot(slot), optional));
        } else {
            let (surface, penn) = piece.rsplit_once('/').ok_or_else(|| {
                Error::Config(format!("literal `{piece}` needs a /TAG suffix in `{pattern}`"))
            })?;
            if surface.is_empty() || penn.is_empty() {
                return Err(Error::Config(format!("bad literal `{piece}` in `{pattern}`")));
            }
            items.push((
                Item::Literal {
                    surface: surface.into(),
                    penn: penn.into(),
                },
                optional,
            ));
        }
    }
    if gold != 1 {
        return Err(Error::Config(format!(
            "template `{pattern}` must contain exactly one {{H}} or {{HP}} slot"
        )));
    }
    Ok(items)
}

fn inflect(stem: &str, tag: &str) -> String {
    match tag {
        "VBZ" => format!("{stem}s"),
        "VBG" => format!("{stem}ing"),
        "VBD" | "VBN" => format!("{stem}ed"),
        _ => stem.to_string(),
    }
}

struct WordMaker {
    taken: HashSet<String>,
}

impl WordMaker {
    fn new() -> Self {
        let mut taken: HashSet<String> = HashSet::new();
        for w in DETERMINERS.iter().chain(PREPOSITIONS) {
            taken.insert(w.to_string());
        }
        for w in [
            "is", "are", "was", "defined", "as", "that", "which", "used", "to", "refers", "in",
            "where", "an", "the",
        ] {
            taken.insert(w.to_string());
        }
        WordMaker { taken }
    }

    fn make(&mut self, rng: &mut ChaCha8Rng, min_syllables: usize) -> String {
        const ONSETS: &[&str] = &[
            "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr",
            "st", "pl", "gr", "sk",
        ];
        const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
        loop {
            let syllables = min_syllables + rng.random_range(0..2);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).unwrap());
                w.push_str(VOWELS.choose(rng).unwrap());
            }
            if rng.random_bool(0.5) {
                w.push_str(["n", "r", "l", "x", "m"].choose(rng).unwrap());
            }
            if self.taken.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn zipf(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| (k as f64).powf(-exponent))).expect("non-empty pool")
}

struct Lexicon {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjectives: Vec<String>,
    noun_dist: WeightedIndex<f64>,
    hyper_dist: WeightedIndex<f64>,
    verb_dist: WeightedIndex<f64>,
    adj_dist: WeightedIndex<f64>,
    det_dist: WeightedIndex<f64>,
    prep_dist: WeightedIndex<f64>,
    hypernyms: usize,
}

/// Where an open-class lexeme was placed, so it can later be swapped for a
/// fresh singleton.
struct Placement {
    record: usize,
    token: usize,
    verb_tag: Option<&'static str>,
    word: String,
}

fn validate(config: &SynthConfig) -> Result<()> {
    let bad = |m: &str| Err(Error::Config(m.to_string()));
    if config.records == 0 {
        return bad("records must be positive");
    }
    if config.vocab_size < 20 {
        return bad("vocab_size must be at least 20");
    }
    if !(config.zipf_exponent >= 0.0 && config.zipf_exponent.is_finite()) {
        return bad("zipf_exponent must be finite and non-negative");
    }
    if !(0.0..1.0).contains(&config.singleton_fraction) {
        return bad("singleton_fraction must lie in [0, 1)");
    }
    if config.hypernyms == 0 {
        return bad("hypernyms must be positive");
    }
    if config.templates.is_empty() {
        return bad("at least one template is required");
    }
    if config.templates.iter().any(|t| !(t.weight > 0.0)) {
        return bad("template weights must be positive");
    }
    Ok(())
}

/// Emits `config.records` annotated definitions, deterministic per seed.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Corpus> {
    validate(config)?;
    let templates: Vec<Vec<(Item, bool)>> = config
        .templates
        .iter()
        .map(|t| parse_template(&t.pattern))
        .collect::<Result<_>>()?;
    let template_dist = WeightedIndex::new(config.templates.iter().map(|t| t.weight))
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = rng::stream(seed, rng::STREAM_SYNTH);
    let mut maker = WordMaker::new();

    let n_nouns = (config.vocab_size * 3 / 5).max(config.hypernyms + 1);
    let n_verbs = (config.vocab_size / 4).max(4);
    let n_adj = config.vocab_size.saturating_sub(n_nouns + n_verbs).max(4);
    let nouns: Vec<String> = (0..n_nouns).map(|_| maker.make(&mut rng, 2)).collect();
    let verbs: Vec<String> = (0..n_verbs)
        .map(|_| {
            if rng.random_bool(SHARED_STEMS) {
                nouns[rng.random_range(config.hypernyms..n_nouns)].clone()
            } else {
                maker.make(&mut rng, 1)
            }
        })
        .collect();
    let adjectives: Vec<String> = (0..n_adj).map(|_| maker.make(&mut rng, 2)).collect();
    let lex = Lexicon {
        noun_dist: zipf(nouns.len() - config.hypernyms, config.zipf_exponent),
        hyper_dist: zipf(config.hypernyms, config.zipf_exponent),
        verb_dist: zipf(verbs.len(), config.zipf_exponent),
        adj_dist: zipf(adjectives.len(), config.zipf_exponent),
        det_dist: zipf(DETERMINERS.len(), 1.5),
        prep_dist: zipf(PREPOSITIONS.len(), 1.2),
        nouns,
        verbs,
        adjectives,
        hypernyms: config.hypernyms,
    };
    let terms: Vec<String> = (0..config.records)
        .map(|_| maker.make(&mut rng, 3))
        .collect();

    let mut records = Vec::with_capacity(config.records);
    let mut placements = Vec::new();
    for (r, term) in terms.iter().enumerate() {
        let items = &templates[template_dist.sample(&mut rng)];
        let mut tokens = Vec::with_capacity(items.len());
        let mut pos = Vec::with_capacity(items.len());
        let mut gold = 0;
        for (item, optional) in items {
            if *optional && rng.random_bool(0.5) {
                continue;
            }
            let (surface, penn) = match item {
                Item::Literal { surface, penn } => (surface.clone(), penn.clone()),
                Item::Slot(slot) => {
                    let (word, penn) = fill(*slot, term, &lex, &mut rng);
                    match slot {
                        Slot::Hyper | Slot::PopularHyper => gold = tokens.len() + 1,
                        _ => {}
                    }
                    if matches!(
                        slot,
                        Slot::Hyper | Slot::PopularHyper | Slot::Distractor | Slot::Modifier | Slot::Filler
                    ) {
                        placements.push(Placement {
                            record: r,
                            token: tokens.len(),
                            verb_tag: None,
                            word: word.to_lowercase(),
                        });
                    } else if let Slot::Verb(tag) = slot {
                        placements.push(Placement {
                            record: r,
                            token: tokens.len(),
                            verb_tag: Some(tag),
                            word: word.clone(),
                        });
                    }
                    (word, penn)
                }
            };
            tokens.push(surface);
            pos.push(penn);
        }
        records.push(RawRecord {
            term: term.clone(),
            tokens,
            pos: Some(pos),
            hypernym: None,
            hypernym_index: Some(gold),
            tag_partners: None,
        });
    }

    inject_singletons(&mut records, &mut placements, config, &mut maker, &mut rng);

    for r in 0..records.len() {
        let k = rng.random_range(0..=config.max_partners);
        let mut partners = Vec::new();
        for _ in 0..k {
            let other = rng.random_range(0..terms.len());
            if other != r && !partners.contains(&terms[other]) {
                partners.push(terms[other].clone());
            }
        }
        if !partners.is_empty() {
            records[r].tag_partners = Some(partners);
        }
    }

    let definitions = records
        .iter()
        .map(|rec| {
            Definition::from_record(rec).map_err(|issue| {
                Error::Config(format!(
                    "template produced an invalid record ({}): {}",
                    issue.reason(),
                    rec.tokens.join(" ")
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(definitions, format!("synthetic(seed={seed})")))
}

fn fill(slot: Slot, term: &str, lex: &Lexicon, rng: &mut ChaCha8Rng) -> (String, String) {
    let noun = |w: &String, rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.1) {
            let mut c = w.chars();
            let first = c.next().map(|f| f.to_uppercase().collect::<String>());
            (first.unwrap_or_default() + c.as_str(), "NN".to_string())
        } else {
            (w.clone(), "NN".to_string())
        }
    };
    match slot {
        Slot::Term => {
            if rng.random_bool(0.3) {
                (term.to_uppercase(), "NNP".into())
            } else {
                (term.to_string(), "NN".into())
            }
        }
        Slot::Hyper => noun(&lex.nouns[lex.hyper_dist.sample(rng)], rng),
        Slot::PopularHyper => {
            let k = rng.random_range(0..POPULAR_HYPERNYMS.min(lex.hypernyms));
            noun(&lex.nouns[k], rng)
        }
        Slot::Modifier if rng.random_bool(GERUND_MODIFIER) => {
            (inflect(&lex.verbs[lex.verb_dist.sample(rng)], "VBG"), "NN".into())
        }
        Slot::Distractor | Slot::Modifier => {
            let w = if rng.random_bool(0.5) {
                &lex.nouns[lex.hyper_dist.sample(rng)]
            } else {
                &lex.nouns[lex.hypernyms + lex.noun_dist.sample(rng)]
            };
            noun(w, rng)
        }
        Slot::Filler => noun(&lex.nouns[lex.hypernyms + lex.noun_dist.sample(rng)], rng),
        Slot::Adjective => (lex.adjectives[lex.adj_dist.sample(rng)].clone(), "JJ".into()),
        Slot::Det => (DETERMINERS[lex.det_dist.sample(rng)].to_string(), "DT".into()),
        Slot::Prep => (PREPOSITIONS[lex.prep_dist.sample(rng)].to_string(), "IN".into()),
        Slot::Verb(tag) => (inflect(&lex.verbs[lex.verb_dist.sample(rng)], tag), tag.into()),
    }
}

/// Replaces repeated open-class words with fresh ones until the requested
/// share of the (retained-token) vocabulary occurs exactly once.
fn inject_singletons(
    records: &mut [RawRecord],
    placements: &mut [Placement],
    config: &SynthConfig,
    maker: &mut WordMaker,
    rng: &mut ChaCha8Rng,
) {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for rec in records.iter() {
        for (t, p) in rec.tokens.iter().zip(rec.pos.as_ref().unwrap()) {
            if p != "JJ" && t.chars().any(char::is_alphanumeric) {
                *counts.entry(t.to_lowercase()).or_insert(0) += 1;
            }
        }
    }
    let mut order: Vec<usize> = (0..placements.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let mut singletons = counts.values().filter(|&&c| c == 1).count();
    let target = config.singleton_fraction;
    let mut order = order.into_iter();
    while (singletons as f64) < target * counts.len() as f64 {
        let Some(k) = order.next() else { break };
        let place = &mut placements[k];
        let current = place.word.to_lowercase();
        let count = counts[&current];
        if count < 2 {
            continue;
        }
        let fresh = match place.verb_tag {
            Some(tag) => {
                let stem = maker.make(rng, 2);
                inflect(&stem, tag)
            }
            None => maker.make(rng, 3),
        };
        let slot = &mut records[place.record].tokens[place.token];
        let fresh = if slot.chars().next().is_some_and(char::is_uppercase) {
            let mut c = fresh.chars();
            c.next().unwrap().to_uppercase().collect::<String>() + c.as_str()
        } else {
            fresh
        };
        *slot = fresh.clone();
        *counts.get_mut(&current).unwrap() -= 1;
        if count == 2 {
            singletons += 1;
        }
        counts.insert(fresh.to_lowercase(), 1);
        singletons += 1;
        place.word = fresh;
    }
}

/// Counts of how often each lowercased retained token appears.
pub fn vocabulary_histogram(corpus: &Corpus) -> BTreeMap<u64, usize> {
    let mut hist = BTreeMap::new();
    for &c in corpus.frequency.values() {
        *hist.entry(c).or_insert(0) += 1;
    }
    hist
}

//! Closed part-of-speech type system.
//!
//! Fifteen Penn-Treebank-derived categories are retained after preprocessing,
//! plus a `Null` element used only to pad context windows past the sentence
//! boundaries. Everything else the tagger produces (adjectives, adverbs,
//! pronouns, punctuation, ...) is dropped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of one-hot slots: 15 retained categories plus the null element.
pub const POS_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosType {
    DT,
    EX,
    IN,
    NN,
    TO,
    VB,
    VBD,
    VBG,
    VBN,
    VBP,
    VBZ,
    WDT,
    WP,
    #[serde(rename = "WP$")]
    WPS,
    WRB,
    #[serde(rename = "NULL")]
    Null,
}

impl PosType {
    /// All variants in canonical order (index 1..=16).
    pub const ALL: [PosType; POS_DIM] = [
        PosType::DT,
        PosType::EX,
        PosType::IN,
        PosType::NN,
        PosType::TO,
        PosType::VB,
        PosType::VBD,
        PosType::VBG,
        PosType::VBN,
        PosType::VBP,
        PosType::VBZ,
        PosType::WDT,
        PosType::WP,
        PosType::WPS,
        PosType::WRB,
        PosType::Null,
    ];

    /// The 15 categories that tag mapping can produce.
    pub const RETAINED: [PosType; 15] = [
        PosType::DT,
        PosType::EX,
        PosType::IN,
        PosType::NN,
        PosType::TO,
        PosType::VB,
        PosType::VBD,
        PosType::VBG,
        PosType::VBN,
        PosType::VBP,
        PosType::VBZ,
        PosType::WDT,
        PosType::WP,
        PosType::WPS,
        PosType::WRB,
    ];

    /// 1-based canonical index, `DT = 1` through `NULL = 16`.
    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn from_index(index: usize) -> Option<PosType> {
        index.checked_sub(1).and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PosType::DT => "DT",
            PosType::EX => "EX",
            PosType::IN => "IN",
            PosType::NN => "NN",
            PosType::TO => "TO",
            PosType::VB => "VB",
            PosType::VBD => "VBD",
            PosType::VBG => "VBG",
            PosType::VBN => "VBN",
            PosType::VBP => "VBP",
            PosType::VBZ => "VBZ",
            PosType::WDT => "WDT",
            PosType::WP => "WP",
            PosType::WPS => "WP$",
            PosType::WRB => "WRB",
            PosType::Null => "NULL",
        }
    }
}

impl fmt::Display for PosType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown part-of-speech type `{0}`")]
pub struct UnknownPosType(pub String);

impl FromStr for PosType {
    type Err = UnknownPosType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosType::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownPosType(s.to_string()))
    }
}

/// Maps a Penn-Treebank tag onto the retained type system.
///
/// All noun tags collapse to `NN`; tags outside the 15 retained categories
/// return `None` and the token is dropped by preprocessing.
pub fn map_penn_tag(tag: &str) -> Option<PosType> {
    match tag {
        "NN" | "NNS" | "NNP" | "NNPS" => Some(PosType::NN),
        "NULL" => None,
        other => other.parse().ok(),
    }
}

/// Dense one-hot vector with 1.0 at the canonical index of `pos`.
pub fn one_hot(pos: PosType) -> [f64; POS_DIM] {
    let mut v = [0.0; POS_DIM];
    v[pos.index() - 1] = 1.0;
    v
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "these", "those", "each", "every", "some", "any", "no", "another",
    "all", "both", "either", "neither",
];

const PREPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "by", "for", "with", "from", "into", "onto", "about", "as", "through",
    "over", "under", "between", "among", "against", "during", "without", "within", "upon", "via",
    "across", "after", "before", "since", "than", "like", "per", "toward", "towards", "behind",
    "beyond", "around", "along", "inside", "outside", "near", "because", "if", "while", "whether",
    "although", "unlike",
];

const VERB_STEMS: &[&str] = &[
    "use", "allow", "provide", "make", "run", "contain", "refer", "describe", "represent",
    "implement", "define", "manage", "store", "support", "enable", "create", "handle", "consist",
    "denote", "process", "return", "build", "generate", "include", "perform", "serve", "mean",
    "hold", "help", "let", "give", "take", "work", "call", "compute", "convert", "display",
    "render", "execute", "specify", "extend", "offer",
];

fn closed_class(lower: &str) -> Option<&'static str> {
    let tag = match lower {
        "there" => "EX",
        "to" => "TO",
        "that" | "which" | "whichever" | "whatever" => "WDT",
        "who" | "whom" | "what" => "WP",
        "whose" => "WP$",
        "where" | "when" | "why" | "how" | "whenever" | "wherever" => "WRB",
        "is" | "does" | "has" => "VBZ",
        "are" | "am" | "do" | "have" => "VBP",
        "was" | "were" | "did" | "had" => "VBD",
        "be" => "VB",
        "been" | "done" => "VBN",
        "being" => "VBG",
        "can" | "could" | "will" | "would" | "should" | "may" | "might" | "must" | "shall" => "MD",
        "it" | "they" | "he" | "she" | "we" | "you" | "i" | "them" | "him" | "her" | "us" => "PRP",
        "its" | "their" | "his" | "our" | "your" | "my" => "PRP$",
        "and" | "or" | "but" | "nor" => "CC",
        "not" | "also" | "very" | "often" | "usually" => "RB",
        _ => return None,
    };
    Some(tag)
}

fn punctuation_tag(token: &str) -> Option<&'static str> {
    let tag = match token {
        "(" | "[" | "{" => "-LRB-",
        ")" | "]" | "}" => "-RRB-",
        "," => ",",
        "." | "!" | "?" => ".",
        ":" | ";" | "-" | "--" | "..." => ":",
        "\"" | "``" => "``",
        "''" => "''",
        "$" => "$",
        "#" => "#",
        _ if !token.chars().any(char::is_alphanumeric) => ":",
        _ => return None,
    };
    Some(tag)
}

fn is_be_or_have(lower: &str) -> bool {
    matches!(
        lower,
        "is" | "are" | "was" | "were" | "be" | "been" | "being" | "has" | "have" | "had"
    )
}

/// Rule-based Penn tagger for untagged input.
///
/// Uses a closed-class lexicon plus a handful of suffix rules; every other
/// token is tagged `NN`. Deterministic, and much less accurate than a
/// statistical tagger: ambiguous words such as "control" or "programming"
/// always receive the same tag regardless of context.
pub fn fallback_tag<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut tags: Vec<String> = Vec::with_capacity(tokens.len());
    for (k, token) in tokens.iter().enumerate() {
        let token = token.as_ref();
        let lower = token.to_lowercase();
        let tag = if let Some(tag) = punctuation_tag(token) {
            tag
        } else if lower.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
            "CD"
        } else if DETERMINERS.contains(&lower.as_str()) {
            "DT"
        } else if PREPOSITIONS.contains(&lower.as_str()) {
            "IN"
        } else if let Some(tag) = closed_class(&lower) {
            tag
        } else if lower.len() > 4 && lower.ends_with("ing") {
            "VBG"
        } else if lower.len() > 3 && lower.ends_with("ed") {
            let after_aux = k > 0 && is_be_or_have(&tokens[k - 1].as_ref().to_lowercase());
            if after_aux {
                "VBN"
            } else {
                "VBD"
            }
        } else if lower.len() > 4 && lower.ends_with("ly") {
            "RB"
        } else if is_third_person_verb(&lower) {
            "VBZ"
        } else {
            "NN"
        };
        tags.push(tag.to_string());
    }
    tags
}

fn is_third_person_verb(lower: &str) -> bool {
    let Some(stem) = lower.strip_suffix('s') else {
        return false;
    };
    if VERB_STEMS.contains(&stem) {
        return true;
    }
    lower
        .strip_suffix("es")
        .is_some_and(|stem| VERB_STEMS.contains(&stem))
        || lower
            .strip_suffix("ies")
            .is_some_and(|stem| VERB_STEMS.contains(&format!("{stem}y").as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn penn_mapping_examples() {
        assert_eq!(map_penn_tag("NNS"), Some(PosType::NN));
        assert_eq!(map_penn_tag("NNP"), Some(PosType::NN));
        assert_eq!(map_penn_tag("NNPS"), Some(PosType::NN));
        assert_eq!(map_penn_tag("JJ"), None);
        assert_eq!(map_penn_tag("RB"), None);
        assert_eq!(map_penn_tag("TO"), Some(PosType::TO));
        assert_eq!(map_penn_tag("WP$"), Some(PosType::WPS));
        assert_eq!(map_penn_tag("NULL"), None);
        assert_eq!(map_penn_tag(","), None);
    }

    #[test]
    fn image_of_mapping_is_the_retained_set() {
        let penn = [
            "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP",
            "NNPS", "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB",
            "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", ",", ".", ":", "-LRB-",
            "-RRB-", "``", "''", "$", "#",
        ];
        let mut image: Vec<PosType> = penn.iter().filter_map(|t| map_penn_tag(t)).collect();
        image.sort();
        image.dedup();
        assert_eq!(image, PosType::RETAINED.to_vec());
    }

    #[test]
    fn one_hot_examples() {
        let dt = one_hot(PosType::DT);
        assert_eq!(dt[0], 1.0);
        assert_eq!(dt.iter().sum::<f64>(), 1.0);
        let null = one_hot(PosType::Null);
        assert_eq!(null[15], 1.0);
        assert_eq!(null.iter().sum::<f64>(), 1.0);
        // position 11 in 1-based terms
        assert_eq!(one_hot(PosType::VBZ)[10], 1.0);
    }

    #[test]
    fn canonical_indices() {
        assert_eq!(PosType::DT.index(), 1);
        assert_eq!(PosType::VBZ.index(), 11);
        assert_eq!(PosType::WPS.index(), 14);
        assert_eq!(PosType::Null.index(), 16);
        for p in PosType::ALL {
            assert_eq!(PosType::from_index(p.index()), Some(p));
            assert_eq!(p.as_str().parse::<PosType>().unwrap(), p);
        }
        assert_eq!(PosType::from_index(0), None);
        assert_eq!(PosType::from_index(17), None);
    }

    #[test]
    fn fallback_examples() {
        assert_eq!(fallback_tag(&["a"]), vec!["DT"]);
        assert_eq!(fallback_tag(&["querying"]), vec!["VBG"]);
        assert_eq!(fallback_tag(&["database"]), vec!["NN"]);
        assert_eq!(
            fallback_tag(&["sql", "is", "a", "language", "for", "querying", "databases"]),
            vec!["NN", "VBZ", "DT", "NN", "IN", "VBG", "NN"]
        );
        assert_eq!(fallback_tag(&["it", "was", "defined"]), vec!["PRP", "VBD", "VBN"]);
        assert_eq!(fallback_tag(&["defined", "as"]), vec!["VBD", "IN"]);
        assert_eq!(fallback_tag(&["provides", "(", ")"]), vec!["VBZ", "-LRB-", "-RRB-"]);
        assert_eq!(fallback_tag(&["classes"]), vec!["NN"]);
    }

    proptest! {
        #[test]
        fn one_hot_has_single_unit_entry(i in 0usize..POS_DIM) {
            let v = one_hot(PosType::ALL[i]);
            prop_assert_eq!(v.iter().sum::<f64>(), 1.0);
            prop_assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
        }

        #[test]
        fn mapping_is_pure_and_never_null(tag in "[A-Z$]{1,5}") {
            let a = map_penn_tag(&tag);
            prop_assert_eq!(a, map_penn_tag(&tag));
            prop_assert_ne!(a, Some(PosType::Null));
        }

        #[test]
        fn fallback_is_total(tokens in proptest::collection::vec("[a-zA-Z(),.]{1,8}", 1..10)) {
            let tags = fallback_tag(&tokens);
            prop_assert_eq!(tags.len(), tokens.len());
            prop_assert_eq!(tags, fallback_tag(&tokens));
        }
    }
}

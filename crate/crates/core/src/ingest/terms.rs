use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// One query term. Multi-word surfaces match across any run of whitespace;
/// other separators (the hyphen in `low-income`) must match exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTerm {
    pub id: String,
    pub surface: String,
    #[serde(default)]
    pub noun_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTermSet {
    pub terms: Vec<QueryTerm>,
}

impl QueryTermSet {
    /// The twelve collection terms. Only `the poor` is restricted to noun use.
    pub fn collection_default() -> Self {
        let spec: [(&str, &str, bool); 12] = [
            ("the_poor", "the poor", true),
            ("poor_people", "poor people", false),
            ("poor_ppl", "poor ppl", false),
            ("poor_folks", "poor folks", false),
            ("poor_families", "poor families", false),
            ("homeless", "homeless", false),
            ("on_welfare", "on welfare", false),
            ("welfare_recipients", "welfare recipients", false),
            ("low_income", "low-income", false),
            ("underprivileged", "underprivileged", false),
            ("disadvantaged", "disadvantaged", false),
            ("lower_class", "lower class", false),
        ];
        QueryTermSet {
            terms: spec
                .iter()
                .map(|(id, surface, noun_only)| QueryTerm {
                    id: (*id).into(),
                    surface: (*surface).into(),
                    noun_only: *noun_only,
                })
                .collect(),
        }
    }
}

impl Default for QueryTermSet {
    fn default() -> Self {
        Self::collection_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    pub term_id: String,
    /// Byte offsets into the matched text.
    pub start: usize,
    pub end: usize,
}

/// Decides whether a `noun_only` match is used as a noun.
pub trait NounUsage {
    /// `end` is the byte offset just past the candidate match in `text`.
    fn is_noun_use(&self, text: &str, start: usize, end: usize) -> bool;
}

/// Accepts a noun-only match when nothing follows it, when punctuation
/// follows it, or when the next word is a closed-class word (auxiliary,
/// preposition, conjunction, pronoun). `the poor performance` is rejected,
/// `help the poor.` and `the poor are` are accepted.
#[derive(Debug, Clone)]
pub struct ClosedClassFollower {
    pub words: HashSet<String>,
}

const CLOSED_CLASS: &[&str] = &[
    // auxiliaries and modals
    "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "do", "does",
    "did", "will", "would", "shall", "should", "can", "could", "may", "might", "must", "ought",
    "isn", "aren", "wasn", "weren", "don", "doesn", "didn", "won", "wouldn", "can't", "cannot",
    "shouldn", "couldn", "hasn", "haven", "hadn",
    // prepositions
    "about", "above", "across", "after", "against", "along", "among", "around", "as", "at",
    "before", "behind", "below", "beneath", "beside", "between", "beyond", "by", "despite",
    "down", "during", "except", "for", "from", "in", "inside", "into", "like", "near", "of",
    "off", "on", "onto", "out", "outside", "over", "since", "through", "throughout", "to",
    "toward", "towards", "under", "until", "up", "upon", "with", "within", "without", "via",
    // conjunctions
    "and", "or", "but", "nor", "so", "yet", "because", "while", "if", "when", "although",
    "though", "than", "whereas", "unless", "whether", "where", "then",
    // pronouns
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "who",
    "whom", "whose", "which", "that", "this", "these", "those", "my", "your", "his", "its",
    "our", "their", "mine", "yours", "ours", "theirs", "themselves", "itself", "what",
];

impl Default for ClosedClassFollower {
    fn default() -> Self {
        ClosedClassFollower {
            words: CLOSED_CLASS.iter().map(|w| (*w).to_string()).collect(),
        }
    }
}

impl NounUsage for ClosedClassFollower {
    fn is_noun_use(&self, text: &str, _start: usize, end: usize) -> bool {
        let rest = &text[end..];
        let next_word_at = rest.find(|c: char| c.is_alphanumeric());
        let Some(offset) = next_word_at else {
            return true;
        };
        let gap = &rest[..offset];
        if gap == "-" {
            // compound modifier: `the poor-quality`
            return false;
        }
        if gap.chars().any(|c| !c.is_whitespace()) {
            return true;
        }
        let word: String = rest[offset..]
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '\'')
            .flat_map(char::to_lowercase)
            .collect();
        let bare = word.split('\'').next().unwrap_or("");
        self.words.contains(&word) || self.words.contains(bare)
    }
}

#[derive(Debug)]
enum Sep {
    Whitespace,
    Exact(String),
}

struct CompiledTerm<'a> {
    term: &'a QueryTerm,
    words: Vec<String>,
    seps: Vec<Sep>,
}

fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            spans.push((s, i));
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

fn compile(term: &QueryTerm) -> Option<CompiledTerm<'_>> {
    let spans = word_spans(&term.surface);
    if spans.is_empty() {
        return None;
    }
    let words = spans.iter().map(|&(s, e)| term.surface[s..e].to_lowercase()).collect();
    let seps = spans
        .windows(2)
        .map(|w| {
            let gap = &term.surface[w[0].1..w[1].0];
            if gap.chars().all(char::is_whitespace) {
                Sep::Whitespace
            } else {
                Sep::Exact(gap.to_string())
            }
        })
        .collect();
    Some(CompiledTerm { term, words, seps })
}

/// Find query-term mentions with the default closed-class noun check.
pub fn match_query_terms(text: &str, terms: &QueryTermSet) -> Vec<TermMatch> {
    match_query_terms_with(text, terms, &ClosedClassFollower::default())
}

/// Find case-insensitive, word-boundary query-term mentions. Matches are
/// leftmost-longest and non-overlapping.
pub fn match_query_terms_with(
    text: &str,
    terms: &QueryTermSet,
    noun_check: &dyn NounUsage,
) -> Vec<TermMatch> {
    let compiled: Vec<_> = terms.terms.iter().filter_map(compile).collect();
    let tokens = word_spans(text);
    let lowered: Vec<String> = tokens.iter().map(|&(s, e)| text[s..e].to_lowercase()).collect();
    let mut matches = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut best: Option<(usize, usize, &QueryTerm)> = None;
        for ct in &compiled {
            let k = ct.words.len();
            if i + k > tokens.len() || !ct.words.iter().zip(&lowered[i..i + k]).all(|(a, b)| a == b) {
                continue;
            }
            let seps_ok = ct.seps.iter().enumerate().all(|(j, sep)| {
                let gap = &text[tokens[i + j].1..tokens[i + j + 1].0];
                match sep {
                    Sep::Whitespace => !gap.is_empty() && gap.chars().all(char::is_whitespace),
                    Sep::Exact(s) => gap == s,
                }
            });
            if !seps_ok {
                continue;
            }
            let (start, end) = (tokens[i].0, tokens[i + k - 1].1);
            if ct.term.noun_only && !noun_check.is_noun_use(text, start, end) {
                continue;
            }
            let longer = match best {
                None => true,
                Some((bk, bend, _)) => k > bk || (k == bk && end > bend),
            };
            if longer {
                best = Some((k, end, ct.term));
            }
        }
        match best {
            Some((k, end, term)) => {
                matches.push(TermMatch {
                    term_id: term.id.clone(),
                    start: tokens[i].0,
                    end,
                });
                i += k;
            }
            None => i += 1,
        }
    }
    matches
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(text: &str) -> Vec<String> {
        match_query_terms(text, &QueryTermSet::collection_default())
            .into_iter()
            .map(|m| m.term_id)
            .collect()
    }

    #[test]
    fn default_set_has_twelve_terms_one_noun_only() {
        let set = QueryTermSet::collection_default();
        assert_eq!(set.terms.len(), 12);
        let noun_only: Vec<_> = set.terms.iter().filter(|t| t.noun_only).collect();
        assert_eq!(noun_only.len(), 1);
        assert_eq!(noun_only[0].surface, "the poor");
    }

    #[test]
    fn the_poor_as_noun() {
        let m = match_query_terms("help the poor.", &QueryTermSet::collection_default());
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].term_id, "the_poor");
        assert_eq!(&"help the poor."[m[0].start..m[0].end], "the poor");
        assert_eq!(ids("the poor are always blamed"), ["the_poor"]);
        assert_eq!(ids("blame the poor"), ["the_poor"]);
        assert_eq!(ids("The Poor, again"), ["the_poor"]);
    }

    #[test]
    fn the_poor_as_adjective_rejected() {
        assert!(ids("the poor performance of the team").is_empty());
        assert!(ids("the poor-quality roads").is_empty());
    }

    #[test]
    fn plain_terms() {
        assert_eq!(ids("Poor people deserve dignity"), ["poor_people"]);
        assert_eq!(ids("poor\tpeople"), ["poor_people"]);
        assert_eq!(ids("low-income families"), ["low_income"]);
        assert!(ids("low income").is_empty());
        assert_eq!(ids("#homeless crisis"), ["homeless"]);
        assert!(ids("homelessness").is_empty());
        assert_eq!(ids("homeless and on welfare"), ["homeless", "on_welfare"]);
    }

    #[test]
    fn leftmost_longest() {
        let set = QueryTermSet {
            terms: vec![
                QueryTerm { id: "a".into(), surface: "poor".into(), noun_only: false },
                QueryTerm { id: "b".into(), surface: "poor people".into(), noun_only: false },
            ],
        };
        let m = match_query_terms("poor people poor", &set);
        let got: Vec<_> = m.iter().map(|m| (m.term_id.as_str(), m.start, m.end)).collect();
        assert_eq!(got, [("b", 0, 11), ("a", 12, 16)]);
    }

    struct Never;
    impl NounUsage for Never {
        fn is_noun_use(&self, _: &str, _: usize, _: usize) -> bool {
            false
        }
    }

    #[test]
    fn pluggable_noun_check() {
        let m = match_query_terms_with("help the poor.", &QueryTermSet::collection_default(), &Never);
        assert!(m.is_empty());
    }
}

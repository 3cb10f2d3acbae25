use std::collections::{BTreeMap, HashMap, HashSet};

use crate::ingest::DEFAULT_PLACEHOLDER;

/// Lowercase, split on non-alphanumerics, drop single-character tokens and
/// stop words. Occurrences of `placeholder` are removed first so the mask
/// token never becomes a topic word.
pub fn tokenize(text: &str, placeholder: &str, stopwords: &HashSet<String>) -> Vec<String> {
    let cleaned = if placeholder.is_empty() {
        text.to_string()
    } else {
        text.replace(placeholder, " ")
    };
    cleaned
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() > 1)
        .map(str::to_lowercase)
        .filter(|t| !stopwords.contains(t))
        .collect()
}

/// [`tokenize`] with the default mask placeholder.
pub fn tokenize_default(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    tokenize(text, DEFAULT_PLACEHOLDER, stopwords)
}

/// One class of the partition: a class id and the indices of its documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMembers {
    pub class_id: i32,
    pub docs: Vec<usize>,
}

/// Full c-TF-IDF weight table: class id → term → weight.
///
/// `W(t, c) = tf(t, c) · ln(1 + A / f(t))`, where `tf(t, c)` counts `t` in
/// class `c`, `f(t)` counts `t` over all classes and `A` is the total term
/// count divided by the number of classes. Terms in `stopwords` or with
/// document frequency below `min_df · n_docs` are dropped before counting.
pub fn ctfidf_weights(
    classes: &[ClassMembers],
    docs: &[Vec<String>],
    min_df: f64,
    stopwords: &HashSet<String>,
) -> BTreeMap<i32, HashMap<String, f64>> {
    let n_docs: usize = classes.iter().map(|c| c.docs.len()).sum();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for class in classes {
        for &d in &class.docs {
            let uniq: HashSet<&str> = docs[d].iter().map(String::as_str).collect();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
    }
    let keep = |t: &str| -> bool {
        !stopwords.contains(t) && (df.get(t).copied().unwrap_or(0) as f64) >= min_df * n_docs as f64
    };

    let mut tf: BTreeMap<i32, HashMap<String, usize>> = BTreeMap::new();
    let mut total_freq: HashMap<String, usize> = HashMap::new();
    let mut total_terms = 0usize;
    for class in classes {
        let counts = tf.entry(class.class_id).or_default();
        for &d in &class.docs {
            for t in docs[d].iter().filter(|t| keep(t)) {
                *counts.entry(t.clone()).or_default() += 1;
                *total_freq.entry(t.clone()).or_default() += 1;
                total_terms += 1;
            }
        }
    }
    let n_classes = tf.len().max(1);
    let avg = total_terms as f64 / n_classes as f64;
    tf.into_iter()
        .map(|(class_id, counts)| {
            let weights = counts
                .into_iter()
                .map(|(t, c)| {
                    let f = total_freq[&t] as f64;
                    let w = c as f64 * (1.0 + avg / f).ln();
                    (t, w)
                })
                .collect();
            (class_id, weights)
        })
        .collect()
}

/// Top-`k` terms per class by c-TF-IDF weight, ties broken by term.
/// A class with no surviving terms yields an empty list and a warning.
pub fn ctfidf_topic_words(
    classes: &[ClassMembers],
    docs: &[Vec<String>],
    k: usize,
    min_df: f64,
    stopwords: &HashSet<String>,
) -> BTreeMap<i32, Vec<(String, f64)>> {
    ctfidf_weights(classes, docs, min_df, stopwords)
        .into_iter()
        .map(|(class_id, weights)| {
            if weights.is_empty() {
                log::warn!("topic {class_id} has no terms left after filtering");
            }
            (class_id, top_k(weights, k))
        })
        .collect()
}

fn top_k(weights: HashMap<String, f64>, k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = weights.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

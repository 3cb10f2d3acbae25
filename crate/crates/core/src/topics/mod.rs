//! Topic discovery: embeddings, density clustering, c-TF-IDF topic words,
//! representative documents and the manual topic selection.

mod cache;
mod ctfidf;
mod embed;
mod hdbscan;
mod reduce;
mod select;
pub mod stopwords;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cache::{decode_cache, encode_cache, read_cache, write_cache};
pub use ctfidf::{ctfidf_topic_words, ctfidf_weights, tokenize, tokenize_default, ClassMembers};
pub use embed::{cosine, embed_documents, normalize, EmbeddingMatrix, HashingEncoder, TextEncoder};
pub use hdbscan::{hdbscan, HdbscanParams};
pub use reduce::{pca, Reduction};
pub use select::{parse_selection, select_topics, TopicSelection};

/// Topic id reserved for documents that belong to no cluster.
pub const OUTLIER_TOPIC: i32 = -1;

#[derive(Debug, thiserror::Error)]
pub enum TopicError {
    #[error("{0}")]
    Invalid(String),
    #[error("encoder failed on batch {batch_index}: {message}")]
    Encoder { batch_index: usize, message: String },
    #[error("embedding cache: {0}")]
    Cache(String),
    #[error("unknown topic id {0}")]
    UnknownTopic(i32),
    #[error("document `{0}` has no embedding")]
    UnknownDocument(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: i32,
    pub member_ids: Vec<String>,
    pub topic_words: Vec<(String, f64)>,
    pub representative_ids: Vec<String>,
}

/// Clustering output and its topic descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub encoder_id: String,
    pub config: ClusterConfig,
    /// Resolved minimum cluster size actually used.
    pub min_cluster_size: usize,
    pub topics: Vec<Topic>,
    /// The outlier set, with `topic_id == OUTLIER_TOPIC`.
    pub outliers: Topic,
}

impl TopicModel {
    pub fn topic_ids(&self) -> Vec<i32> {
        self.topics.iter().map(|t| t.topic_id).collect()
    }

    pub fn topic(&self, id: i32) -> Option<&Topic> {
        if id == OUTLIER_TOPIC {
            return Some(&self.outliers);
        }
        self.topics.iter().find(|t| t.topic_id == id)
    }

    /// Document id → topic id, outliers included.
    pub fn assignments(&self) -> HashMap<String, i32> {
        self.topics
            .iter()
            .chain(std::iter::once(&self.outliers))
            .flat_map(|t| t.member_ids.iter().map(move |id| (id.clone(), t.topic_id)))
            .collect()
    }

    pub fn outlier_fraction(&self) -> f64 {
        let total: usize =
            self.topics.iter().map(|t| t.member_ids.len()).sum::<usize>() + self.outliers.member_ids.len();
        if total == 0 {
            0.0
        } else {
            self.outliers.member_ids.len() as f64 / total as f64
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), TopicError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| TopicError::Invalid(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|source| TopicError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TopicError> {
        let text = std::fs::read_to_string(path).map_err(|source| TopicError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| TopicError::Invalid(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    /// `None` scales with corpus size, see [`default_min_cluster_size`].
    #[serde(default)]
    pub min_cluster_size: Option<usize>,
    #[serde(default)]
    pub min_samples: Option<usize>,
    #[serde(default)]
    pub reduction: Reduction,
    #[serde(default = "default_min_df")]
    pub min_df: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_representatives")]
    pub representatives: usize,
}

fn default_min_df() -> f64 {
    0.05
}

fn default_k() -> usize {
    10
}

fn default_representatives() -> usize {
    3
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            min_cluster_size: None,
            min_samples: None,
            reduction: Reduction::default(),
            min_df: default_min_df(),
            k: default_k(),
            representatives: default_representatives(),
        }
    }
}

/// `max(5, round(n / 1200))`: 500 at 600K documents.
pub fn default_min_cluster_size(n_docs: usize) -> usize {
    ((n_docs as f64 / 1200.0).round() as usize).max(5)
}

/// Cluster membership before topic words are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Member ids per cluster, largest cluster first.
    pub clusters: Vec<Vec<String>>,
    pub outliers: Vec<String>,
}

/// Reduce, then run HDBSCAN. Clusters are ordered by size (descending), ties
/// by their first member's position.
pub fn cluster_documents(
    emb: &EmbeddingMatrix,
    min_cluster_size: usize,
    min_samples: Option<usize>,
    reduction: Reduction,
) -> Result<Clustering, TopicError> {
    if min_cluster_size < 2 {
        return Err(TopicError::Invalid(format!(
            "min_cluster_size must be at least 2, got {min_cluster_size}"
        )));
    }
    if emb.len() < min_cluster_size {
        log::warn!(
            "{} documents is fewer than min_cluster_size {min_cluster_size}; everything is an outlier",
            emb.len()
        );
        return Ok(Clustering {
            clusters: Vec::new(),
            outliers: emb.doc_ids.clone(),
        });
    }
    let points = reduction.apply(&emb.to_points());
    let params = HdbscanParams {
        min_samples: min_samples.unwrap_or(min_cluster_size),
        ..HdbscanParams::new(min_cluster_size)
    };
    let labels = hdbscan(&points, &params);
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut clusters = vec![Vec::new(); n_clusters];
    let mut outliers = Vec::new();
    for (id, label) in emb.doc_ids.iter().zip(&labels) {
        match label {
            Some(c) => clusters[*c].push(id.clone()),
            None => outliers.push(id.clone()),
        }
    }
    // labels are in first-appearance order, so a stable sort keeps ties stable
    clusters.sort_by_key(|c| std::cmp::Reverse(c.len()));
    Ok(Clustering { clusters, outliers })
}

/// The `m` members closest (cosine) to the mean of the members' vectors;
/// ties go to the smaller id. Fewer than `m` members returns them all.
pub fn representative_docs(
    member_ids: &[String],
    emb: &EmbeddingMatrix,
    m: usize,
) -> Result<Vec<String>, TopicError> {
    if member_ids.is_empty() {
        return Ok(Vec::new());
    }
    let index: HashMap<&str, usize> = emb.doc_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let rows: Vec<usize> = member_ids
        .iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| TopicError::UnknownDocument(id.clone())))
        .collect::<Result<_, _>>()?;
    // sum in sorted-id order so the centroid does not depend on member order
    let mut ordered: Vec<(&str, usize)> = member_ids.iter().map(String::as_str).zip(rows).collect();
    ordered.sort();
    let mut centroid = vec![0.0f64; emb.dim];
    for (_, r) in &ordered {
        for (c, v) in centroid.iter_mut().zip(emb.row(*r)) {
            *c += f64::from(*v);
        }
    }
    let centroid: Vec<f32> = centroid.iter().map(|c| (*c / ordered.len() as f64) as f32).collect();
    let mut scored: Vec<(f64, &str)> = ordered.iter().map(|(id, r)| (cosine(emb.row(*r), &centroid), *id)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored.into_iter().take(m).map(|(_, id)| id.to_string()).collect())
}

/// Cluster, then describe each cluster (and the outliers) with c-TF-IDF
/// words and representative documents. `texts[i]` belongs to
/// `emb.doc_ids[i]`.
pub fn fit_topic_model(
    emb: &EmbeddingMatrix,
    texts: &[&str],
    config: &ClusterConfig,
) -> Result<TopicModel, TopicError> {
    if texts.len() != emb.len() {
        return Err(TopicError::Invalid(format!(
            "{} texts for {} embeddings",
            texts.len(),
            emb.len()
        )));
    }
    if !(0.0..1.0).contains(&config.min_df) {
        return Err(TopicError::Invalid(format!("min_df {} outside [0, 1)", config.min_df)));
    }
    let mcs = config.min_cluster_size.unwrap_or_else(|| default_min_cluster_size(emb.len()));
    let clustering = cluster_documents(emb, mcs, config.min_samples, config.reduction)?;

    let stop = stopwords::english();
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize_default(t, &stop)).collect();
    let pos: HashMap<&str, usize> = emb.doc_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let to_rows = |ids: &[String]| ids.iter().map(|id| pos[id.as_str()]).collect::<Vec<_>>();
    let mut classes: Vec<ClassMembers> = clustering
        .clusters
        .iter()
        .enumerate()
        .map(|(i, ids)| ClassMembers { class_id: i as i32, docs: to_rows(ids) })
        .collect();
    if !clustering.outliers.is_empty() {
        classes.push(ClassMembers { class_id: OUTLIER_TOPIC, docs: to_rows(&clustering.outliers) });
    }
    let mut words = ctfidf_topic_words(&classes, &docs, config.k, config.min_df, &stop);

    let mut describe = |topic_id: i32, member_ids: Vec<String>| -> Result<Topic, TopicError> {
        let representative_ids = representative_docs(&member_ids, emb, config.representatives)?;
        Ok(Topic {
            topic_id,
            topic_words: words.remove(&topic_id).unwrap_or_default(),
            member_ids,
            representative_ids,
        })
    };
    let topics = clustering
        .clusters
        .into_iter()
        .enumerate()
        .map(|(i, ids)| describe(i as i32, ids))
        .collect::<Result<Vec<_>, _>>()?;
    let outliers = describe(OUTLIER_TOPIC, clustering.outliers)?;
    Ok(TopicModel {
        encoder_id: emb.encoder_id.clone(),
        config: config.clone(),
        min_cluster_size: mcs,
        topics,
        outliers,
    })
}

/// Check the partition invariants of a model against the documents it was
/// fitted on. Returns human-readable violations.
pub fn check_partition(model: &TopicModel, doc_ids: &[String]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for t in model.topics.iter().chain(std::iter::once(&model.outliers)) {
        for id in &t.member_ids {
            if !seen.insert(id.as_str()) {
                problems.push(format!("document `{id}` is in more than one topic"));
            }
        }
        if t.topic_id != OUTLIER_TOPIC && t.member_ids.len() < model.min_cluster_size {
            problems.push(format!("topic {} is smaller than min_cluster_size", t.topic_id));
        }
        if t.topic_words.windows(2).any(|w| w[0].1 < w[1].1) {
            problems.push(format!("topic {} words are not sorted", t.topic_id));
        }
    }
    for id in doc_ids {
        if !seen.contains(id.as_str()) {
            problems.push(format!("document `{id}` is unassigned"));
        }
    }
    if seen.len() != doc_ids.len() {
        problems.push(format!("{} members for {} documents", seen.len(), doc_ids.len()));
    }
    problems
}

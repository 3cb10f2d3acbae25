use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::TopicError;
use crate::hashing::fnv1a64;

/// A text encoder producing fixed-width dense vectors.
///
/// Implementations must be deterministic for a fixed `id()`.
pub trait TextEncoder: Send + Sync {
    /// Identifier recorded in caches and manifests.
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, String>;
}

/// Row-major matrix of unit-normalised document vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub encoder_id: String,
    pub dim: usize,
    pub doc_ids: Vec<String>,
    pub data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn empty(encoder_id: impl Into<String>, dim: usize) -> Self {
        EmbeddingMatrix {
            encoder_id: encoder_id.into(),
            dim,
            doc_ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Append a row, normalising it to unit length.
    pub fn push(&mut self, id: impl Into<String>, vector: &[f32]) {
        assert_eq!(vector.len(), self.dim, "vector width");
        self.doc_ids.push(id.into());
        let normalized = normalize(vector);
        self.data.extend_from_slice(&normalized);
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == id)
    }

    /// Rows as `f64` vectors.
    pub fn to_points(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.row(i).iter().map(|v| f64::from(*v)).collect())
            .collect()
    }
}

/// L2-normalise; the zero vector maps to the first basis vector so every
/// row stays on the unit sphere.
pub fn normalize(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        let mut out = vec![0.0; v.len()];
        if let Some(first) = out.first_mut() {
            *first = 1.0;
        }
        return out;
    }
    v.iter().map(|x| (f64::from(*x) / norm) as f32).collect()
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Encode `texts` in batches. An empty input yields an empty matrix, or an
/// error when `allow_empty` is false.
pub fn embed_documents(
    ids: &[String],
    texts: &[&str],
    encoder: &dyn TextEncoder,
    batch_size: usize,
    allow_empty: bool,
) -> Result<EmbeddingMatrix, TopicError> {
    if ids.len() != texts.len() {
        return Err(TopicError::Invalid(format!(
            "{} ids for {} texts",
            ids.len(),
            texts.len()
        )));
    }
    let mut matrix = EmbeddingMatrix::empty(encoder.id(), encoder.dim());
    if texts.is_empty() {
        return if allow_empty {
            Ok(matrix)
        } else {
            Err(TopicError::Invalid("no documents to embed".into()))
        };
    }
    let batch_size = batch_size.max(1);
    for (batch_index, (id_chunk, text_chunk)) in
        ids.chunks(batch_size).zip(texts.chunks(batch_size)).enumerate()
    {
        let vectors = encoder
            .encode_batch(text_chunk)
            .map_err(|message| TopicError::Encoder {
                batch_index,
                message,
            })?;
        if vectors.len() != text_chunk.len() || vectors.iter().any(|v| v.len() != encoder.dim()) {
            return Err(TopicError::Encoder {
                batch_index,
                message: "encoder returned vectors of the wrong shape".into(),
            });
        }
        for (id, v) in id_chunk.iter().zip(&vectors) {
            matrix.push(id.clone(), v);
        }
    }
    Ok(matrix)
}

/// Feature-hashing encoder over word unigrams and character trigrams.
///
/// A dependency-free stand-in for a sentence-transformer. Stop words are
/// dropped from the unigram features; trigrams are taken over `<word>` with
/// boundary markers, so inflections share features.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    pub dim: usize,
    pub trigram_weight: f32,
    stopwords: HashSet<String>,
}

impl HashingEncoder {
    pub fn new(dim: usize) -> Self {
        HashingEncoder {
            dim: dim.max(1),
            trigram_weight: 0.35,
            stopwords: super::stopwords::english(),
        }
    }

    fn add(&self, v: &mut [f32], feature: &str, weight: f32) {
        let h = fnv1a64(feature.as_bytes());
        let idx = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[idx] += sign * weight;
    }

    pub fn encode_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        let mut any = false;
        for word in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
        {
            if self.stopwords.contains(&word) {
                continue;
            }
            any = true;
            self.add(&mut v, &format!("w:{word}"), 1.0);
            let marked: Vec<char> = format!("<{word}>").chars().collect();
            for tri in marked.windows(3) {
                let s: String = tri.iter().collect();
                self.add(&mut v, &format!("c:{s}"), self.trigram_weight);
            }
        }
        if !any {
            self.add(&mut v, "<empty>", 1.0);
        }
        v
    }
}

impl Default for HashingEncoder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl TextEncoder for HashingEncoder {
    fn id(&self) -> String {
        format!("hashing-v1-d{}-t{}", self.dim, self.trigram_weight)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, String> {
        Ok(texts.iter().map(|t| self.encode_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embed(texts: &[&str]) -> EmbeddingMatrix {
        let ids: Vec<String> = (0..texts.len()).map(|i| i.to_string()).collect();
        embed_documents(&ids, texts, &HashingEncoder::default(), 2, true).unwrap()
    }

    #[test]
    fn identical_texts_identical_vectors() {
        let m = embed(&["the poor are here", "the poor are here"]);
        assert_eq!(m.row(0), m.row(1));
    }

    #[test]
    fn rows_are_unit_norm() {
        let m = embed(&["a", "shelter food", "", "crime crime police"]);
        for i in 0..m.len() {
            let n: f64 = m.row(i).iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6, "row {i} norm {n}");
        }
    }

    #[test]
    fn semantic_ordering() {
        let m = embed(&["the cat sat", "a cat was sitting", "tax policy reform"]);
        assert!(cosine(m.row(0), m.row(1)) > cosine(m.row(0), m.row(2)));
    }

    #[test]
    fn empty_input_flag() {
        assert!(embed(&[]).is_empty());
        let err = embed_documents(&[], &[], &HashingEncoder::default(), 8, false);
        assert!(err.is_err());
    }

    struct Failing;
    impl TextEncoder for Failing {
        fn id(&self) -> String {
            "failing".into()
        }
        fn dim(&self) -> usize {
            2
        }
        fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, String> {
            if texts.iter().any(|t| t.contains("boom")) {
                Err("model crashed".into())
            } else {
                Ok(vec![vec![1.0, 0.0]; texts.len()])
            }
        }
    }

    #[test]
    fn encoder_failure_names_batch() {
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let err = embed_documents(&ids, &["a", "b", "c", "boom", "e"], &Failing, 2, true).unwrap_err();
        assert!(matches!(err, TopicError::Encoder { batch_index: 1, .. }), "{err}");
    }
}

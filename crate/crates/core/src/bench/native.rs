//! Offline fine-tune adapter: a softmax classifier over hashed word
//! unigrams and bigrams, trained with mini-batch Adam.

use std::collections::BTreeMap;
use std::marker::PhantomData;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{strip_mentions_and_urls, BenchError, FineTuneAdapter, LabeledText};
use crate::hashing::fnv1a64;
use crate::label::ClassSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NativeConfig {
    /// Number of hash buckets.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
}

fn default_dim() -> usize {
    1 << 16
}

fn default_batch() -> usize {
    4
}

fn default_epochs() -> usize {
    4
}

fn default_lr() -> f64 {
    0.05
}

impl Default for NativeConfig {
    fn default() -> Self {
        NativeConfig {
            dim: default_dim(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Weights {
    dim: usize,
    classes: usize,
    /// Row-major `classes × dim`, then one bias per class.
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    config: NativeConfig,
    classes: usize,
    /// Non-zero parameters only.
    nonzero: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct NativeClassifier<C> {
    config: NativeConfig,
    weights: Option<Weights>,
    _class: PhantomData<C>,
}

/// Hashed, L2-normalised binary features of a text.
fn features(text: &str, dim: usize) -> Vec<(usize, f64)> {
    let clean = strip_mentions_and_urls(text).to_lowercase();
    let words: Vec<&str> = clean
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .collect();
    let mut idx: Vec<usize> = words
        .iter()
        .map(|w| fnv1a64(format!("u:{w}").as_bytes()))
        .chain(words.windows(2).map(|p| fnv1a64(format!("b:{} {}", p[0], p[1]).as_bytes())))
        .map(|h| (h % dim as u64) as usize)
        .collect();
    idx.sort_unstable();
    idx.dedup();
    let v = if idx.is_empty() { 0.0 } else { 1.0 / (idx.len() as f64).sqrt() };
    idx.into_iter().map(|i| (i, v)).collect()
}

fn softmax(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

impl Weights {
    fn probs(&self, feats: &[(usize, f64)]) -> Vec<f64> {
        let bias = self.classes * self.dim;
        let mut logits: Vec<f64> = (0..self.classes)
            .map(|c| self.values[bias + c] + feats.iter().map(|(f, x)| self.values[c * self.dim + f] * x).sum::<f64>())
            .collect();
        softmax(&mut logits);
        logits
    }
}

impl<C: ClassSet> NativeClassifier<C> {
    pub fn new(config: NativeConfig) -> Self {
        NativeClassifier {
            config,
            weights: None,
            _class: PhantomData,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.weights.is_some()
    }

    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let w = self.weights.as_ref().ok_or_else(|| BenchError::backend(&self.id(), "model is not trained"))?;
        let saved = SavedModel {
            config: self.config.clone(),
            classes: w.classes,
            nonzero: w.values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect(),
        };
        let json = serde_json::to_vec(&saved).map_err(|e| BenchError::backend(&self.id(), e.to_string()))?;
        std::fs::write(path, json).map_err(|e| BenchError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let bytes = std::fs::read(path).map_err(|e| BenchError::io(path, e))?;
        let saved: SavedModel =
            serde_json::from_slice(&bytes).map_err(|e| BenchError::backend("native", format!("{}: {e}", path.display())))?;
        if saved.classes != C::ALL.len() {
            return Err(BenchError::backend("native", "saved model has a different class set"));
        }
        let len = (saved.config.dim + 1) * saved.classes;
        let mut values = vec![0.0; len];
        for (i, v) in saved.nonzero {
            *values
                .get_mut(i)
                .ok_or_else(|| BenchError::backend("native", "parameter index out of range"))? = v;
        }
        Ok(NativeClassifier {
            weights: Some(Weights {
                dim: saved.config.dim,
                classes: saved.classes,
                values,
            }),
            config: saved.config,
            _class: PhantomData,
        })
    }
}

impl<C: ClassSet> FineTuneAdapter<C> for NativeClassifier<C> {
    fn id(&self) -> String {
        format!("native-ngram-b{}-e{}", self.config.batch_size, self.config.epochs)
    }

    fn train(&mut self, train: &[LabeledText<C>], seed: u64) -> Result<(), BenchError> {
        let cfg = &self.config;
        if cfg.dim == 0 || cfg.batch_size == 0 {
            return Err(BenchError::backend(&self.id(), "dim and batch size must be positive"));
        }
        let k = C::ALL.len();
        let dim = cfg.dim;
        let bias = k * dim;
        let mut w = Weights {
            dim,
            classes: k,
            values: vec![0.0; (dim + 1) * k],
        };
        let mut m = vec![0.0; w.values.len()];
        let mut v = vec![0.0; w.values.len()];
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let feats: Vec<Vec<(usize, f64)>> = train.iter().map(|t| features(&t.text, dim)).collect();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut step = 0i32;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                // sparse gradient; only touched parameters get an Adam update
                let mut grad: BTreeMap<usize, f64> = BTreeMap::new();
                for &i in batch {
                    let p = w.probs(&feats[i]);
                    let gold = train[i].label.index();
                    for (c, pc) in p.iter().enumerate() {
                        let g = (pc - if c == gold { 1.0 } else { 0.0 }) / batch.len() as f64;
                        *grad.entry(bias + c).or_default() += g;
                        for (f, x) in &feats[i] {
                            *grad.entry(c * dim + f).or_default() += g * x;
                        }
                    }
                }
                step += 1;
                let lr_t = cfg.learning_rate * (1.0 - b2.powi(step)).sqrt() / (1.0 - b1.powi(step));
                for (j, g) in grad {
                    m[j] = b1 * m[j] + (1.0 - b1) * g;
                    v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                    w.values[j] -= lr_t * m[j] / (v[j].sqrt() + eps);
                }
            }
        }
        self.weights = Some(w);
        Ok(())
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<C>, BenchError> {
        let w = self.weights.as_ref().ok_or_else(|| BenchError::backend(&self.id(), "predict called before train"))?;
        Ok(texts
            .iter()
            .map(|t| {
                let p = w.probs(&features(t, w.dim));
                let best = p
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, x)| if *x > p[b] { i } else { b });
                C::from_index(best).expect("class index in range")
            })
            .collect())
    }
}

//! Benchmark harness: chronological and k-fold splits, fine-tune and
//! prompting adapters, prompt construction, output parsing and the binary
//! toxicity view.

mod adapters;
mod native;
mod prompt;
mod split;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::label::{BinaryLabel, ClassSet, Label};

pub use adapters::{
    predict_generative, ChatCompletionsAdapter, ChatConfig, GenerativeAdapter, HttpBinaryClassifier,
    LexiconAdapter, ProcessAdapter, RetryPolicy,
};
pub use native::{NativeClassifier, NativeConfig};
pub use prompt::{
    build_prompt, parse_label, prompt_sweep, ChatMessage, Decoding, Exemplar, ParsedLabel, PromptSpec,
    SweepResult, DEFAULT_FEWSHOT, DEFAULT_ZEROSHOT,
};
pub use split::{chronological_split, kfold_split, split_by_train_size, validation_split, Cut, DatasetSplit};

/// Seeds used for repeated fine-tuning runs.
pub const DEFAULT_SEEDS: [u64; 3] = [42, 62, 82];

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("split: {0}")]
    Split(String),
    #[error("prompt: {0}")]
    Prompt(String),
    #[error("adapter `{adapter}`: {message}")]
    Backend { adapter: String, message: String },
    /// A failure worth retrying (rate limit, server error, timeout).
    #[error("adapter `{adapter}` (retryable): {message}")]
    Transient { adapter: String, message: String },
    #[error("predictions line {line}: {message}")]
    BadPrediction { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn backend(adapter: &str, message: impl Into<String>) -> Self {
        BenchError::Backend {
            adapter: adapter.to_string(),
            message: message.into(),
        }
    }
}

/// A training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText<C> {
    pub id: String,
    pub text: String,
    pub label: C,
}

/// A classifier that is trained on labeled texts and then predicts.
pub trait FineTuneAdapter<C: ClassSet> {
    fn id(&self) -> String;

    fn train(&mut self, train: &[LabeledText<C>], seed: u64) -> Result<(), BenchError>;

    fn predict(&self, texts: &[&str]) -> Result<Vec<C>, BenchError>;
}

/// Predictions of one seed over a fixed test set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPredictions<C> {
    pub seed: u64,
    pub predictions: Vec<C>,
}

/// Train a fresh adapter per seed and predict the test texts with each.
pub fn train_and_predict<C: ClassSet, A: FineTuneAdapter<C>>(
    make_adapter: &mut dyn FnMut() -> A,
    train: &[LabeledText<C>],
    test_texts: &[&str],
    seeds: &[u64],
) -> Result<Vec<SeedPredictions<C>>, BenchError> {
    if train.is_empty() {
        return Err(BenchError::Split("training set is empty".into()));
    }
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut adapter = make_adapter();
        log::info!("training {} with seed {seed} on {} examples", adapter.id(), train.len());
        adapter.train(train, seed)?;
        let predictions = adapter.predict(test_texts)?;
        if predictions.len() != test_texts.len() {
            return Err(BenchError::backend(
                &adapter.id(),
                format!("returned {} predictions for {} texts", predictions.len(), test_texts.len()),
            ));
        }
        out.push(SeedPredictions { seed, predictions });
    }
    Ok(out)
}

/// Remove `@user` mentions and URLs, and squeeze whitespace.
pub fn strip_mentions_and_urls(text: &str) -> String {
    text.split_whitespace()
        .filter(|tok| {
            let lower = tok.to_ascii_lowercase();
            !(tok.starts_with('@') && tok.len() > 1)
                && !lower.starts_with("http://")
                && !lower.starts_with("https://")
                && !lower.starts_with("www.")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn collapse_binary(labels: &[Label]) -> Vec<BinaryLabel> {
    labels.iter().map(|l| BinaryLabel::from(*l)).collect()
}

/// One row of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub gold: String,
    pub pred: String,
    pub seed: u64,
    pub parse_flag: bool,
}

pub fn write_predictions<W: Write>(out: W, rows: &[PredictionRow]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_predictions<R: Read>(input: R) -> Result<Vec<PredictionRow>, BenchError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        rows.push(rec.map_err(|e| BenchError::BadPrediction {
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub fn save_predictions(path: &Path, rows: &[PredictionRow]) -> Result<(), BenchError> {
    let f = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    write_predictions(std::io::BufWriter::new(f), rows)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRow>, BenchError> {
    let f = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    read_predictions(f)
}

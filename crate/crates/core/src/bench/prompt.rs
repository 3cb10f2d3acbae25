use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adapters::{predict_generative, GenerativeAdapter, RetryPolicy};
use super::BenchError;
use crate::eval::weighted_metrics;
use crate::label::{ClassSet, Label};

/// Shipped few-shot prompt, the default for generative adapters.
pub const DEFAULT_FEWSHOT: &str = include_str!("../../data/prompts/fewshot_best.toml");
pub const DEFAULT_ZEROSHOT: &str = include_str!("../../data/prompts/zeroshot.toml");

const TWEET_SLOT: &str = "{tweet}";
const EXEMPLAR_SLOT: &str = "{exemplars}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decoding {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_choices")]
    pub n_choices: u32,
}

fn default_temperature() -> f64 {
    0.7
}

fn default_max_tokens() -> u32 {
    10
}

fn default_choices() -> u32 {
    1
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: default_temperature(),
            max_output_tokens: default_max_tokens(),
            n_choices: default_choices(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exemplar {
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub name: String,
    pub system_text: String,
    /// Must contain `{tweet}` exactly once, and `{exemplars}` exactly once
    /// when exemplars are given (never otherwise).
    pub user_template: String,
    /// Line format for each exemplar, with `{text}` and `{label}` slots.
    #[serde(default = "default_exemplar_format")]
    pub exemplar_format: String,
    #[serde(default)]
    pub exemplars: Vec<Exemplar>,
    #[serde(default)]
    pub decoding: Decoding,
}

fn default_exemplar_format() -> String {
    "\"{text}\" , {label}".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl PromptSpec {
    pub fn parse(text: &str) -> Result<PromptSpec, BenchError> {
        let spec: PromptSpec = toml::from_str(text).map_err(|e| BenchError::Prompt(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<PromptSpec, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        PromptSpec::parse(&text).map_err(|e| BenchError::Prompt(format!("{}: {e}", path.display())))
    }

    pub fn default_fewshot() -> PromptSpec {
        PromptSpec::parse(DEFAULT_FEWSHOT).expect("shipped prompt is valid")
    }

    pub fn default_zeroshot() -> PromptSpec {
        PromptSpec::parse(DEFAULT_ZEROSHOT).expect("shipped prompt is valid")
    }

    pub fn is_few_shot(&self) -> bool {
        !self.exemplars.is_empty()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let err = |m: String| Err(BenchError::Prompt(format!("{}: {m}", self.name)));
        match self.user_template.matches(TWEET_SLOT).count() {
            1 => {}
            0 => return err("user template has no {tweet} slot".into()),
            n => return err(format!("user template has {n} {{tweet}} slots")),
        }
        let ex_slots = self.user_template.matches(EXEMPLAR_SLOT).count();
        if self.exemplars.is_empty() {
            if ex_slots != 0 {
                return err("zero-shot template has an {exemplars} slot".into());
            }
        } else {
            if ex_slots != 1 {
                return err(format!("few-shot template needs one {{exemplars}} slot, has {ex_slots}"));
            }
            if self.exemplars.len() != 9 {
                return err(format!("few-shot prompts take 9 exemplars, got {}", self.exemplars.len()));
            }
            for class in Label::ALL {
                let n = self.exemplars.iter().filter(|e| e.label == *class).count();
                if n != 3 {
                    return err(format!("{n} exemplars for {class}, need 3"));
                }
            }
            if !self.exemplar_format.contains("{text}") {
                return err("exemplar format has no {text} slot".into());
            }
        }
        if self.decoding.n_choices == 0 || self.decoding.max_output_tokens == 0 {
            return err("decoding needs at least one choice and one token".into());
        }
        Ok(())
    }

    fn exemplar_block(&self) -> String {
        self.exemplars
            .iter()
            .map(|e| substitute(&self.exemplar_format, &[("{text}", &e.text), ("{label}", e.label.name())]))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Replace slots in a single left-to-right pass, so text inserted for one
/// slot is never scanned for another.
fn substitute(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while !rest.is_empty() {
        for (slot, value) in slots {
            if let Some(after) = rest.strip_prefix(slot) {
                out.push_str(value);
                rest = after;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

/// System and user messages for one tweet. The tweet is inserted verbatim.
pub fn build_prompt(spec: &PromptSpec, tweet: &str) -> Result<Vec<ChatMessage>, BenchError> {
    spec.validate()?;
    let block = spec.exemplar_block();
    let user = substitute(&spec.user_template, &[(TWEET_SLOT, tweet), (EXEMPLAR_SLOT, &block)]);
    Ok(vec![
        ChatMessage {
            role: "system".into(),
            content: spec.system_text.clone(),
        },
        ChatMessage {
            role: "user".into(),
            content: user,
        },
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no single class label in `{0}`")]
pub struct ParseFailure(pub String);

fn normalize(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Map raw model output to a label: an exact class name after trimming,
/// case folding and removing punctuation, or else the only class name that
/// occurs as a token.
pub fn parse_label(raw: &str) -> Result<Label, ParseFailure> {
    let norm = normalize(raw);
    let name_of = |tok: &str| Label::ALL.iter().copied().find(|c| c.name().eq_ignore_ascii_case(tok));
    if let Some(l) = name_of(&norm) {
        return Ok(l);
    }
    let mut found: Vec<Label> = norm.split(' ').filter_map(name_of).collect();
    found.sort();
    found.dedup();
    match found.as_slice() {
        [one] => Ok(*one),
        _ => Err(ParseFailure(raw.to_string())),
    }
}

/// A scored generative prediction. Unparseable output counts as `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLabel {
    pub label: Label,
    pub parse_failure: bool,
}

impl ParsedLabel {
    pub fn from_raw(raw: &str) -> ParsedLabel {
        match parse_label(raw) {
            Ok(label) => ParsedLabel {
                label,
                parse_failure: false,
            },
            Err(_) => ParsedLabel {
                label: Label::None,
                parse_failure: true,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// (prompt name, weighted F1, parse failures), in input order.
    pub scores: Vec<(String, f64, usize)>,
    pub best: String,
}

/// Score each prompt on a validation set and pick the best by weighted F1;
/// ties go to the earlier prompt.
pub fn prompt_sweep(
    adapter: &(dyn GenerativeAdapter + Sync),
    specs: &[PromptSpec],
    texts: &[&str],
    gold: &[Label],
    concurrency: usize,
    retry: &RetryPolicy,
) -> Result<SweepResult, BenchError> {
    if specs.is_empty() {
        return Err(BenchError::Prompt("no prompts to compare".into()));
    }
    let mut scores = Vec::new();
    for spec in specs {
        let parsed = predict_generative(adapter, spec, texts, concurrency, retry)?;
        let pred: Vec<Label> = parsed.iter().map(|p| p.label).collect();
        let m = weighted_metrics(gold, &pred).map_err(|e| BenchError::Prompt(e.to_string()))?;
        let failures = parsed.iter().filter(|p| p.parse_failure).count();
        log::info!("prompt {}: weighted F1 {:.4}, {failures} parse failures", spec.name, m.f1);
        scores.push((spec.name.clone(), m.f1, failures));
    }
    let best = scores
        .iter()
        .fold(None::<&(String, f64, usize)>, |acc, s| match acc {
            Some(a) if a.1 >= s.1 => Some(a),
            _ => Some(s),
        })
        .expect("non-empty")
        .0
        .clone();
    Ok(SweepResult { scores, best })
}

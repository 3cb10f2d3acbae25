//! Generative and external-process adapters.

use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, ChatMessage, Decoding, ParsedLabel, PromptSpec};
use super::{BenchError, FineTuneAdapter, LabeledText};
use crate::label::{BinaryLabel, ClassSet, Label};

/// A model that answers chat prompts with one or more text completions.
pub trait GenerativeAdapter {
    fn id(&self) -> String;

    fn complete(&self, messages: &[ChatMessage], decoding: &Decoding) -> Result<Vec<String>, BenchError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_delay")]
    pub base_delay_ms: u64,
}

fn default_attempts() -> u32 {
    4
}

fn default_delay() -> u64 {
    500
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: default_attempts(),
            base_delay_ms: default_delay(),
        }
    }
}

impl RetryPolicy {
    /// Run `f`, retrying transient failures with doubling delays.
    pub fn run<T>(&self, mut f: impl FnMut() -> Result<T, BenchError>) -> Result<T, BenchError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match f() {
                Err(BenchError::Transient { adapter, message }) if attempt < self.max_attempts.max(1) => {
                    let delay = self.base_delay_ms.saturating_mul(1 << (attempt - 1).min(16));
                    log::warn!("{adapter}: {message}; retry {attempt} in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                }
                other => return other,
            }
        }
    }
}

/// Prompt the adapter once per text with at most `concurrency` requests in
/// flight. Results keep input order; the first choice is scored.
pub fn predict_generative(
    adapter: &(dyn GenerativeAdapter + Sync),
    spec: &PromptSpec,
    texts: &[&str],
    concurrency: usize,
    retry: &RetryPolicy,
) -> Result<Vec<ParsedLabel>, BenchError> {
    let prompts = texts
        .iter()
        .map(|t| build_prompt(spec, t))
        .collect::<Result<Vec<_>, _>>()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ParsedLabel, BenchError>>>> =
        Mutex::new((0..texts.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..concurrency.clamp(1, texts.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= prompts.len() {
                    break;
                }
                let r = retry.run(|| adapter.complete(&prompts[i], &spec.decoding)).and_then(|choices| {
                    choices
                        .first()
                        .map(|c| ParsedLabel::from_raw(c))
                        .ok_or_else(|| BenchError::backend(&adapter.id(), "response had no choices"))
                });
                let failed = r.is_err();
                results.lock().expect("results lock")[i] = Some(r);
                if failed {
                    // stop handing out work; already running requests finish
                    next.store(prompts.len(), Ordering::SeqCst);
                }
            });
        }
    });
    let mut out = Vec::with_capacity(texts.len());
    let mut first_err = None;
    for r in results.into_inner().expect("results lock") {
        match r {
            Some(Ok(p)) => out.push(p),
            Some(Err(e)) => {
                first_err.get_or_insert(e);
            }
            None => {}
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn read_credential(adapter: &str, env: &Option<String>) -> Result<Option<String>, BenchError> {
    match env {
        None => Ok(None),
        Some(name) => std::env::var(name)
            .map(Some)
            .map_err(|_| BenchError::backend(adapter, format!("credential variable `{name}` is not set"))),
    }
}

fn http_client(adapter: &str, timeout_secs: u64) -> Result<reqwest::blocking::Client, BenchError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| BenchError::backend(adapter, e.to_string()))
}

fn post_json(
    adapter: &str,
    client: &reqwest::blocking::Client,
    url: &str,
    key: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value, BenchError> {
    let mut req = client.post(url).json(body);
    if let Some(k) = key {
        req = req.bearer_auth(k);
    }
    let resp = req.send().map_err(|e| {
        if e.is_timeout() || e.is_connect() {
            BenchError::Transient {
                adapter: adapter.into(),
                message: e.to_string(),
            }
        } else {
            BenchError::backend(adapter, e.to_string())
        }
    })?;
    let status = resp.status();
    let text = resp.text().unwrap_or_default();
    if status.as_u16() == 429 || status.is_server_error() {
        return Err(BenchError::Transient {
            adapter: adapter.into(),
            message: format!("HTTP {status}: {text}"),
        });
    }
    if !status.is_success() {
        return Err(BenchError::backend(adapter, format!("HTTP {status}: {text}")));
    }
    serde_json::from_str(&text).map_err(|e| BenchError::backend(adapter, format!("bad JSON response: {e}")))
}

/// Endpoint settings for an OpenAI-compatible chat completions API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

pub struct ChatCompletionsAdapter {
    config: ChatConfig,
    key: Option<String>,
    client: reqwest::blocking::Client,
}

impl ChatCompletionsAdapter {
    pub fn new(config: ChatConfig) -> Result<Self, BenchError> {
        let id = format!("chat:{}", config.model);
        let key = read_credential(&id, &config.credential_env)?;
        let client = http_client(&id, config.timeout_secs)?;
        Ok(ChatCompletionsAdapter { config, key, client })
    }
}

impl GenerativeAdapter for ChatCompletionsAdapter {
    fn id(&self) -> String {
        format!("chat:{}", self.config.model)
    }

    fn complete(&self, messages: &[ChatMessage], decoding: &Decoding) -> Result<Vec<String>, BenchError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_output_tokens,
            "n": decoding.n_choices,
        });
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let resp = post_json(&self.id(), &self.client, &url, self.key.as_deref(), &body)?;
        let choices = resp["choices"]
            .as_array()
            .ok_or_else(|| BenchError::backend(&self.id(), "response has no `choices` array"))?;
        Ok(choices
            .iter()
            .map(|c| c["message"]["content"].as_str().unwrap_or_default().to_string())
            .collect())
    }
}

/// Offline stand-in for a generative model: answers with the class whose
/// cue words occur most often in the tweet, `None` when nothing matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconAdapter {
    pub direct_cues: Vec<String>,
    pub reporting_cues: Vec<String>,
}

impl Default for LexiconAdapter {
    fn default() -> Self {
        let words = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
        LexiconAdapter {
            direct_cues: words(&["lazy", "junkies", "scum", "parasites", "disgusting", "filthy", "leeches", "get rid"]),
            reporting_cues: words(&["criminalize", "criminalise", "stigma", "blame", "unfair", "discrimination", "hate", "harass"]),
        }
    }
}

impl LexiconAdapter {
    pub fn classify(&self, tweet: &str) -> Label {
        let lower = tweet.to_lowercase();
        let count = |cues: &[String]| cues.iter().filter(|c| lower.contains(c.as_str())).count();
        let (d, r) = (count(&self.direct_cues), count(&self.reporting_cues));
        if d == 0 && r == 0 {
            Label::None
        } else if d >= r {
            Label::Direct
        } else {
            Label::Reporting
        }
    }
}

impl GenerativeAdapter for LexiconAdapter {
    fn id(&self) -> String {
        "lexicon".into()
    }

    fn complete(&self, messages: &[ChatMessage], decoding: &Decoding) -> Result<Vec<String>, BenchError> {
        let user = messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.as_str()).unwrap_or("");
        // the tweet follows the last `Tweet: "` marker when the prompt has one
        let tweet = user.rsplit_once("Tweet: \"").map(|(_, t)| t).unwrap_or(user);
        let label = self.classify(tweet);
        Ok(vec![label.name().to_string(); decoding.n_choices as usize])
    }
}

/// A hosted text-classification model returning binary toxicity, e.g. an
/// inference endpoint serving a toxicity checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBinaryClassifier {
    pub name: String,
    pub endpoint: String,
    #[serde(default)]
    pub credential_env: Option<String>,
    /// Labels returned by the endpoint that count as toxic.
    pub toxic_labels: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl HttpBinaryClassifier {
    /// Expects `[{label, score}, ...]` or `[[{label, score}, ...]]` per
    /// request; the highest-scoring label decides.
    pub fn classify(&self, texts: &[&str], retry: &RetryPolicy) -> Result<Vec<BinaryLabel>, BenchError> {
        let key = read_credential(&self.name, &self.credential_env)?;
        let client = http_client(&self.name, self.timeout_secs)?;
        texts
            .iter()
            .map(|t| {
                let body = serde_json::json!({ "inputs": t });
                let resp = retry.run(|| post_json(&self.name, &client, &self.endpoint, key.as_deref(), &body))?;
                let list = match resp.as_array().and_then(|a| a.first()) {
                    Some(first) if first.is_array() => first.clone(),
                    _ => resp.clone(),
                };
                let top = list
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|e| Some((e["label"].as_str()?, e["score"].as_f64()?)))
                    .fold(None::<(&str, f64)>, |best, cur| match best {
                        Some(b) if b.1 >= cur.1 => Some(b),
                        _ => Some(cur),
                    })
                    .ok_or_else(|| BenchError::backend(&self.name, format!("no label/score pairs in {resp}")))?;
                Ok(if self.toxic_labels.iter().any(|l| l.eq_ignore_ascii_case(top.0)) {
                    BinaryLabel::Toxic
                } else {
                    BinaryLabel::NonToxic
                })
            })
            .collect()
    }
}

/// Fine-tuning delegated to an external program, such as a transformers
/// script. The program is called as
/// `program [args] --train T --predict P --out O --seed S --backbone B --batch-size N --epochs E`
/// with JSON-lines inputs, and writes a JSON array of label names to `O`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessAdapter {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub backbone: String,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Directory for exchange files and training artifacts.
    pub workdir: PathBuf,
    #[serde(skip)]
    state: Option<(Vec<(String, String)>, u64)>,
}

fn default_batch() -> usize {
    4
}

fn default_epochs() -> usize {
    4
}

impl ProcessAdapter {
    pub fn new(program: &str, backbone: &str, workdir: PathBuf) -> Self {
        ProcessAdapter {
            program: program.into(),
            args: Vec::new(),
            backbone: backbone.into(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            workdir,
            state: None,
        }
    }
}

impl<C: ClassSet + std::str::FromStr> FineTuneAdapter<C> for ProcessAdapter {
    fn id(&self) -> String {
        format!("process:{}", self.backbone)
    }

    fn train(&mut self, train: &[LabeledText<C>], seed: u64) -> Result<(), BenchError> {
        self.state = Some((train.iter().map(|t| (t.text.clone(), t.label.name().to_string())).collect(), seed));
        Ok(())
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<C>, BenchError> {
        let id = FineTuneAdapter::<C>::id(self);
        let (train, seed) = self.state.as_ref().ok_or_else(|| BenchError::backend(&id, "predict called before train"))?;
        let dir = self.workdir.join(format!("seed-{seed}"));
        std::fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
        let write_jsonl = |name: &str, lines: Vec<serde_json::Value>| -> Result<PathBuf, BenchError> {
            let path = dir.join(name);
            let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
            std::fs::write(&path, body).map_err(|e| BenchError::io(&path, e))?;
            Ok(path)
        };
        let train_path = write_jsonl(
            "train.jsonl",
            train.iter().map(|(t, l)| serde_json::json!({"text": t, "label": l})).collect(),
        )?;
        let predict_path = write_jsonl("predict.jsonl", texts.iter().map(|t| serde_json::json!({"text": t})).collect())?;
        let out_path = dir.join("predictions.json");
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg("--train")
            .arg(&train_path)
            .arg("--predict")
            .arg(&predict_path)
            .arg("--out")
            .arg(&out_path)
            .args(["--seed", &seed.to_string(), "--backbone", &self.backbone])
            .args(["--batch-size", &self.batch_size.to_string(), "--epochs", &self.epochs.to_string()])
            .status()
            .map_err(|e| BenchError::backend(&id, format!("cannot run `{}`: {e}", self.program)))?;
        if !status.success() {
            return Err(BenchError::backend(&id, format!("`{}` exited with {status}", self.program)));
        }
        let raw = std::fs::read_to_string(&out_path).map_err(|e| BenchError::io(&out_path, e))?;
        let names: Vec<String> =
            serde_json::from_str(&raw).map_err(|e| BenchError::backend(&id, format!("bad predictions file: {e}")))?;
        names
            .iter()
            .map(|n| n.parse::<C>().map_err(|_| BenchError::backend(&id, format!("unknown label `{n}`"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read as _, Write as _};
    use std::net::TcpListener;

    /// Serve one canned HTTP response per entry, in order, and record the
    /// request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 1,
        }
    }

    #[test]
    fn chat_adapter_retries_then_parses() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":" Reporting."}}]}"#;
        let (url, handle) = serve(vec![(503, "{}".into()), (200, ok.into())]);
        let adapter = ChatCompletionsAdapter::new(ChatConfig {
            endpoint: url,
            model: "m".into(),
            credential_env: None,
            timeout_secs: 5,
        })
        .unwrap();
        let spec = PromptSpec::default_fewshot();
        let out = predict_generative(&adapter, &spec, &["some tweet"], 1, &fast_retry()).unwrap();
        assert_eq!(out, vec![ParsedLabel { label: Label::Reporting, parse_failure: false }]);
        let bodies = handle.join().unwrap();
        let req: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
        assert_eq!(req["temperature"], 0.7);
        assert_eq!(req["max_tokens"], 10);
        assert_eq!(req["n"], 1);
        assert_eq!(req["messages"][0]["role"], "system");
    }

    #[test]
    fn chat_adapter_client_error_is_final() {
        let (url, handle) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
        let adapter = ChatCompletionsAdapter::new(ChatConfig {
            endpoint: url,
            model: "m".into(),
            credential_env: None,
            timeout_secs: 5,
        })
        .unwrap();
        let r = predict_generative(&adapter, &PromptSpec::default_zeroshot(), &["t"], 2, &fast_retry());
        assert!(matches!(r, Err(BenchError::Backend { .. })));
        handle.join().unwrap();
    }

    #[test]
    fn missing_credential_variable() {
        let r = ChatCompletionsAdapter::new(ChatConfig {
            endpoint: "http://127.0.0.1:9".into(),
            model: "m".into(),
            credential_env: Some("APORO_TEST_UNSET_KEY_VAR".into()),
            timeout_secs: 1,
        });
        assert!(r.is_err());
    }

    #[test]
    fn binary_classifier_reads_top_label() {
        let (url, handle) = serve(vec![
            (200, r#"[[{"label":"toxic","score":0.9},{"label":"non-toxic","score":0.1}]]"#.into()),
            (200, r#"[{"label":"LABEL_1","score":0.2},{"label":"LABEL_0","score":0.8}]"#.into()),
        ]);
        let clf = HttpBinaryClassifier {
            name: "tox".into(),
            endpoint: url,
            credential_env: None,
            toxic_labels: vec!["toxic".into(), "LABEL_1".into()],
            timeout_secs: 5,
        };
        let out = clf.classify(&["a", "b"], &fast_retry()).unwrap();
        assert_eq!(out, vec![BinaryLabel::Toxic, BinaryLabel::NonToxic]);
        handle.join().unwrap();
    }

    #[test]
    fn lexicon_keeps_order_under_concurrency() {
        let lex = LexiconAdapter::default();
        let texts: Vec<String> = (0..40)
            .map(|i| match i % 3 {
                0 => format!("they are lazy {i}"),
                1 => format!("stop the stigma {i}"),
                _ => format!("weather today {i}"),
            })
            .collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let out = predict_generative(&lex, &PromptSpec::default_fewshot(), &refs, 8, &RetryPolicy::default()).unwrap();
        for (i, p) in out.iter().enumerate() {
            assert_eq!(p.label, Label::ALL[i % 3]);
        }
    }

    #[test]
    fn process_adapter_roundtrip_and_missing_backend() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fake.sh");
        // answers "None" for every line of the predict file
        std::fs::write(
            &script,
            "#!/bin/sh\nwhile [ $# -gt 0 ]; do case $1 in --predict) P=$2;; --out) O=$2;; esac; shift; done\n\
             n=$(wc -l < \"$P\"); printf '[' > \"$O\"; i=0; while [ $i -lt $n ]; do [ $i -gt 0 ] && printf ',' >> \"$O\"; printf '\"None\"' >> \"$O\"; i=$((i+1)); done; printf ']' >> \"$O\"\n",
        )
        .unwrap();
        let mut a = ProcessAdapter::new("sh", "distilbert-base-uncased", dir.path().join("run"));
        a.args = vec![script.display().to_string()];
        let train = vec![LabeledText { id: "1".into(), text: "x".into(), label: Label::Direct }];
        FineTuneAdapter::<Label>::train(&mut a, &train, 42).unwrap();
        let out: Vec<Label> = a.predict(&["p", "q", "r"]).unwrap();
        assert_eq!(out, vec![Label::None; 3]);

        let mut missing = ProcessAdapter::new("/nonexistent/finetune", "x", dir.path().join("m"));
        FineTuneAdapter::<Label>::train(&mut missing, &train, 42).unwrap();
        assert!(FineTuneAdapter::<Label>::predict(&missing, &["p"]).is_err());
    }
}

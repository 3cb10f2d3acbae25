//! Pipeline configuration: one TOML file with a section per stage.
//!
//! The built-in defaults double as the schema. Keys missing from a file are
//! filled from the defaults with a warning; unknown keys and type mismatches
//! are errors reported with their dotted path.

use std::path::{Path, PathBuf};

use aporo_core::geo::Region;
use aporo_core::hashing::sha256_hex;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid TOML: {0}")]
    Toml(String),
    #[error("config has {} problem(s):\n  {}", .0.len(), .0.join("\n  "))]
    Schema(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Stage outputs go below this directory.
    pub workdir: String,
    pub ingest: IngestSection,
    pub geo: GeoSection,
    pub topics: TopicsSection,
    pub sample: SampleSection,
    pub annotate: AnnotateSection,
    pub bench: BenchSection,
    pub eval: EvalSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub input: String,
    /// `jsonl` or `csv`.
    pub format: String,
    /// `substring` or `token`.
    pub bot_match: String,
    pub max_hashtags: usize,
    pub placeholder: String,
    pub fail_fast: bool,
    /// Drop records that mention none of the query terms.
    pub require_term: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoSection {
    /// Gazetteer file; empty uses the built-in one.
    pub gazetteer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicsSection {
    pub encoder_dim: usize,
    pub batch_size: usize,
    /// 0 scales with corpus size.
    pub min_cluster_size: usize,
    /// 0 uses the minimum cluster size.
    pub min_samples: usize,
    /// 0 disables the projection.
    pub pca_components: usize,
    pub min_df: f64,
    pub top_k: usize,
    pub representatives: usize,
    /// Selection file (`id | rationale` lines) or `all`.
    pub selection: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    /// Quota file; empty means none.
    pub quotas: String,
    /// Quota for selected topics missing from the quota file; 0 skips them.
    pub default_quota: usize,
    pub window_start: String,
    pub window_end: String,
    pub n_months: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateSection {
    pub annotators: Vec<String>,
    pub per_item: usize,
    /// Ids allowed to adjudicate; empty allows every annotator.
    pub adjudicators: Vec<String>,
    pub bind: String,
    /// Static UI assets to serve; empty serves the API only.
    pub static_dir: String,
    /// CSV of `id,label` used to simulate annotators when no log exists.
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToxicityEndpoint {
    pub name: String,
    pub endpoint: String,
    pub toxic_labels: Vec<String>,
    pub credential_env: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// Labeled dataset to split; empty uses the annotation export.
    pub dataset: String,
    /// `auto`, an RFC 3339 timestamp, or `train:N` for a fixed train size.
    pub cut: String,
    pub seeds: Vec<u64>,
    /// `native` or `process`.
    pub adapter: String,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hash_dim: usize,
    pub backbone: String,
    pub program: String,
    pub program_args: Vec<String>,
    /// Prompt spec files to compare; empty uses the shipped prompts.
    pub prompts: Vec<String>,
    /// `lexicon` (offline) or `chat`.
    pub generative: String,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    pub concurrency: usize,
    pub max_attempts: u32,
    pub validation_fraction: f64,
    pub toxicity: Vec<ToxicityEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub min_support: usize,
    pub ablation_regions: Vec<Region>,
    /// Any of `markdown`, `csv`.
    pub formats: Vec<String>,
}

impl Default for Config {
    fn default() -> Self {
        let s = |v: &str| v.to_string();
        Config {
            seed: 42,
            workdir: s("work"),
            ingest: IngestSection {
                input: s("posts.jsonl"),
                format: s("jsonl"),
                bot_match: s("substring"),
                max_hashtags: 5,
                placeholder: s("[GROUP]"),
                fail_fast: false,
                require_term: true,
            },
            geo: GeoSection { gazetteer: String::new() },
            topics: TopicsSection {
                encoder_dim: 256,
                batch_size: 256,
                min_cluster_size: 0,
                min_samples: 0,
                pca_components: 5,
                min_df: 0.05,
                top_k: 10,
                representatives: 3,
                selection: s("selection.txt"),
            },
            sample: SampleSection {
                quotas: s("quotas.txt"),
                default_quota: 0,
                window_start: s("2022-08-25T00:00:00Z"),
                window_end: s("2022-11-23T23:59:59Z"),
                n_months: 3,
            },
            annotate: AnnotateSection {
                annotators: vec![s("annotator-1"), s("annotator-2")],
                per_item: 2,
                adjudicators: Vec::new(),
                bind: s("127.0.0.1:8080"),
                static_dir: String::new(),
                gold: String::new(),
            },
            bench: BenchSection {
                dataset: String::new(),
                cut: s("auto"),
                seeds: vec![42, 62, 82],
                adapter: s("native"),
                batch_size: 4,
                epochs: 4,
                learning_rate: 0.05,
                hash_dim: 1 << 16,
                backbone: s("distilbert-base-uncased"),
                program: s("python3"),
                program_args: vec![s("scripts/finetune_hf.py")],
                prompts: Vec::new(),
                generative: s("lexicon"),
                endpoint: String::new(),
                model: String::new(),
                credential_env: s("OPENAI_API_KEY"),
                concurrency: 4,
                max_attempts: 4,
                validation_fraction: 0.2,
                toxicity: Vec::new(),
            },
            eval: EvalSection {
                min_support: 20,
                ablation_regions: vec![Region::NorthAmerica, Region::Other],
                formats: vec![s("markdown"), s("csv")],
            },
            base_dir: PathBuf::from("."),
        }
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Element templates for arrays whose default is empty.
fn array_template(path: &str) -> Option<Value> {
    match path {
        "bench.toxicity" => Some(Value::Table(
            toml::Table::try_from(ToxicityEndpoint {
                name: String::new(),
                endpoint: String::new(),
                toxic_labels: vec![String::new()],
                credential_env: String::new(),
            })
            .expect("template serialises"),
        )),
        "annotate.adjudicators" | "bench.prompts" => Some(Value::String(String::new())),
        _ => None,
    }
}

struct Walk {
    errors: Vec<String>,
    warnings: Vec<String>,
}

impl Walk {
    fn value(&mut self, user: &mut Value, schema: &Value, path: &str) {
        match (schema, &mut *user) {
            (Value::Table(s), Value::Table(u)) => self.table(u, s, path, true),
            (Value::Float(_), Value::Integer(i)) => *user = Value::Float(*i as f64),
            (Value::Array(s), Value::Array(u)) => {
                let template = s.first().cloned().or_else(|| array_template(path));
                if let Some(t) = template {
                    for (i, el) in u.iter_mut().enumerate() {
                        let p = format!("{path}[{i}]");
                        if let (Value::Table(ts), Value::Table(ut)) = (&t, &mut *el) {
                            self.table(ut, ts, &p, false);
                        } else {
                            self.value(el, &t, &p);
                        }
                    }
                }
            }
            (s, u) if kind(s) != kind(u) => {
                self.errors.push(format!("`{path}`: expected {}, found {}", kind(s), kind(u)))
            }
            _ => {}
        }
    }

    /// `fill` adds missing keys from the schema; array elements must be
    /// complete instead.
    fn table(&mut self, user: &mut Table, schema: &Table, path: &str, fill: bool) {
        for key in user.keys() {
            if !schema.contains_key(key) {
                self.errors.push(format!("unknown key `{}`", join(path, key)));
            }
        }
        for (key, sv) in schema {
            let p = join(path, key);
            match user.get_mut(key) {
                Some(uv) => self.value(uv, sv, &p),
                None if fill => {
                    self.warnings.push(format!("`{p}` not set; using default {sv}"));
                    user.insert(key.clone(), sv.clone());
                }
                None => self.errors.push(format!("`{p}` is required")),
            }
        }
    }
}

fn is_env_name(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
        && !s.as_bytes()[0].is_ascii_digit()
}

impl Config {
    /// Parse and validate config text. Returns the config and warnings.
    pub fn parse(text: &str, base_dir: &Path) -> Result<(Config, Vec<String>), ConfigError> {
        let mut user: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Toml(e.to_string()))?;
        let schema = Table::try_from(Config::default()).expect("defaults serialise");
        let mut walk = Walk {
            errors: Vec::new(),
            warnings: Vec::new(),
        };
        walk.table(&mut user, &schema, "", true);
        if !walk.errors.is_empty() {
            return Err(ConfigError::Schema(walk.errors));
        }
        let mut config: Config = Value::Table(user)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Schema(vec![e.to_string()]))?;
        config.base_dir = base_dir.to_path_buf();
        let problems = config.semantic_problems();
        if !problems.is_empty() {
            return Err(ConfigError::Schema(problems));
        }
        Ok((config, walk.warnings))
    }

    pub fn load(path: &Path) -> Result<(Config, Vec<String>), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, if base.as_os_str().is_empty() { Path::new(".") } else { &base })
    }

    fn semantic_problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                p.push(msg.to_string());
            }
        };
        check(self.ingest.format.parse::<aporo_core::ingest::RecordFormat>().is_ok(), "`ingest.format` must be jsonl or csv");
        check(matches!(self.ingest.bot_match.as_str(), "substring" | "token"), "`ingest.bot_match` must be substring or token");
        check(self.sample.n_months > 0, "`sample.n_months` must be positive");
        check(
            aporo_core::ingest::parse_timestamp(&self.sample.window_start).is_some()
                && aporo_core::ingest::parse_timestamp(&self.sample.window_end).is_some(),
            "`sample.window_start` and `sample.window_end` must be timestamps",
        );
        check(self.annotate.per_item >= 1, "`annotate.per_item` must be at least 1");
        check(
            self.bench.cut == "auto"
                || self.bench.cut.strip_prefix("train:").is_some_and(|n| n.parse::<usize>().is_ok())
                || aporo_core::ingest::parse_timestamp(&self.bench.cut).is_some(),
            "`bench.cut` must be auto, train:N or a timestamp",
        );
        check(!self.bench.seeds.is_empty(), "`bench.seeds` must not be empty");
        check(matches!(self.bench.adapter.as_str(), "native" | "process"), "`bench.adapter` must be native or process");
        check(matches!(self.bench.generative.as_str(), "lexicon" | "chat"), "`bench.generative` must be lexicon or chat");
        check((0.0..1.0).contains(&self.bench.validation_fraction), "`bench.validation_fraction` must be in [0, 1)");
        check(
            is_env_name(&self.bench.credential_env),
            "`bench.credential_env` must name an environment variable (A-Z, 0-9, _), not hold a key",
        );
        for (i, t) in self.bench.toxicity.iter().enumerate() {
            if !t.credential_env.is_empty() && !is_env_name(&t.credential_env) {
                p.push(format!("`bench.toxicity[{i}].credential_env` must name an environment variable"));
            }
        }
        for f in &self.eval.formats {
            if !matches!(f.as_str(), "markdown" | "csv") {
                p.push(format!("`eval.formats`: unknown format `{f}`"));
            }
        }
        p
    }

    /// Resolve a configured path against the config file's directory.
    pub fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn workdir(&self) -> PathBuf {
        self.path(&self.workdir)
    }

    /// Digest of the resolved configuration.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serialises").as_bytes())
    }

    /// The default configuration as TOML text.
    pub fn default_toml() -> String {
        toml::to_string(&Config::default()).expect("defaults serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<(Config, Vec<String>), ConfigError> {
        Config::parse(text, Path::new("."))
    }

    #[test]
    fn defaults_roundtrip_without_warnings() {
        let (c, w) = parse(&Config::default_toml()).unwrap();
        assert!(w.is_empty(), "{w:?}");
        assert_eq!(c, Config::default());
    }

    #[test]
    fn missing_seed_filled_with_warning() {
        let text = Config::default_toml().replace("seed = 42\n", "");
        let (c, w) = parse(&text).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("`seed`"));
        let (c, w) = parse("").unwrap();
        assert_eq!(c, Config::default());
        assert!(w.len() >= 9);
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let text = format!("{}\n", Config::default_toml()).replace("[bench]\n", "[bench]\nbogus = 1\n");
        let Err(ConfigError::Schema(errs)) = parse(&text) else { panic!() };
        assert_eq!(errs, ["unknown key `bench.bogus`"]);
        let Err(ConfigError::Schema(errs)) = parse("seed = \"x\"\n[eval]\nmin_support = true\nextra = 2") else { panic!() };
        assert!(errs.contains(&"`seed`: expected integer, found string".to_string()));
        assert!(errs.contains(&"`eval.min_support`: expected integer, found boolean".to_string()));
        assert!(errs.contains(&"unknown key `eval.extra`".to_string()));
        let Err(ConfigError::Schema(errs)) = parse("[[bench.toxicity]]\nname = \"t\"\nendpoint = \"u\"\ntoxic_labels = []\ncredential_env = \"\"\nwat = 1") else {
            panic!()
        };
        assert_eq!(errs, ["unknown key `bench.toxicity[0].wat`"]);
    }

    #[test]
    fn semantic_checks() {
        assert!(parse("[bench]\ncredential_env = \"sk-live-123\"").is_err());
        assert!(parse("[bench]\ncut = \"train:1230\"").is_ok());
        assert!(parse("[bench]\ncut = \"soon\"").is_err());
        assert!(parse("[eval]\nablation_regions = [\"Mars\"]").is_err());
        assert!(parse("[bench]\nlearning_rate = 1").is_ok());
        assert!(matches!(parse("seed = "), Err(ConfigError::Toml(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        b.seed = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), Config::default().hash());
    }
}

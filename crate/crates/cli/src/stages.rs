//! The eleven pipeline stages. Each reads files under the work directory,
//! writes its outputs there, and leaves a manifest in `manifests/`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aporo_core::annotate::{
    assign_items, load_dataset, region_class_counts, class_counts, write_dataset, AnnotationStore, DatasetRow,
    Decision, Item,
};
use aporo_core::bench::{
    chronological_split, load_predictions, predict_generative, prompt_sweep, save_predictions, split_by_train_size,
    validation_split, ChatCompletionsAdapter, ChatConfig, Cut, FineTuneAdapter, GenerativeAdapter,
    HttpBinaryClassifier, LabeledText, LexiconAdapter, NativeClassifier, NativeConfig, PredictionRow, ProcessAdapter,
    PromptSpec, RetryPolicy, SeedPredictions, SweepResult,
};
use aporo_core::eval::{
    build_tables, emit_tables, evaluate, region_ablation, seed_average, AblationReport, EvalInput, EvalReport,
    Metrics, ReportInputs, TableFormat,
};
use aporo_core::geo::{region_distribution, resolve_region, Gazetteer};
use aporo_core::hashing::keyed_hash;
use aporo_core::ingest::{
    filter_records, load_records, mask_terms, match_query_terms, parse_jsonl, parse_timestamp, write_jsonl, BotMatch,
    FilterConfig, LoadOptions, PostRecord, QueryTermSet, RecordFormat,
};
use aporo_core::manifest::{FileDigest, RunManifest};
use aporo_core::sample::{load_quotas, stratified_sample, CollectionWindow, PoolItem};
use aporo_core::topics::{
    embed_documents, fit_topic_model, read_cache, select_topics, write_cache, ClusterConfig, HashingEncoder,
    Reduction, TextEncoder, TopicSelection, OUTLIER_TOPIC,
};
use aporo_core::{BinaryLabel, ClassSet, Label};
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{Config, ConfigError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage}: missing input {path}; {hint}")]
    MissingInput {
        stage: Stage,
        path: String,
        hint: String,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// Process exit code: 2 for a missing input, 3 for a config problem,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingInput { .. } => 2,
            PipelineError::Config(_) => 3,
            PipelineError::Stage { .. } => 1,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

trait StageContext<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T, E: Display> StageContext<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Geolocate,
    Topics,
    Sample,
    Annotate,
    Split,
    Train,
    PromptEval,
    Evaluate,
    Ablate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Ingest,
        Stage::Geolocate,
        Stage::Topics,
        Stage::Sample,
        Stage::Annotate,
        Stage::Split,
        Stage::Train,
        Stage::PromptEval,
        Stage::Evaluate,
        Stage::Ablate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Geolocate => "geolocate",
            Stage::Topics => "topics",
            Stage::Sample => "sample",
            Stage::Annotate => "annotate-serve",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::PromptEval => "prompt-eval",
            Stage::Evaluate => "evaluate",
            Stage::Ablate => "ablate",
            Stage::Report => "report",
        }
    }

    /// Output directory below the work directory.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Geolocate => "geo",
            Stage::Topics => "topics",
            Stage::Sample => "sample",
            Stage::Annotate => "annotate",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::PromptEval => "prompt",
            Stage::Evaluate => "eval",
            Stage::Ablate => "ablate",
            Stage::Report => "report",
        }
    }
}

impl Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s || (s == "annotate" && *st == Stage::Annotate))
            .ok_or_else(|| {
                let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
                format!("unknown stage `{s}`; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Default)]
struct StageOutput {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seeds: Vec<u64>,
    notes: Vec<String>,
}

/// Metadata about a fine-tuning or prompting run, read by later stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunInfo {
    model_id: String,
    seeds: Vec<u64>,
    train_size: usize,
    test_size: usize,
    #[serde(default)]
    prompt: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}

fn read_json<T: DeserializeOwned>(path: &Path) -> std::result::Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_records(path: &Path) -> std::result::Result<Vec<PostRecord>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_jsonl(&text, LoadOptions { fail_fast: true })
        .map(|o| o.records)
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn write_records(path: &Path, records: &[PostRecord]) -> std::io::Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_jsonl(&mut w, records)?;
    w.flush()
}

fn save_dataset(path: &Path, rows: &[DatasetRow]) -> std::result::Result<(), String> {
    let f = std::fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    write_dataset(std::io::BufWriter::new(f), rows).map_err(|e| e.to_string())
}

fn prediction_rows<C: ClassSet>(ids: &[String], gold: &[C], runs: &[SeedPredictions<C>]) -> Vec<PredictionRow> {
    runs.iter()
        .flat_map(|run| {
            ids.iter().zip(gold).zip(&run.predictions).map(move |((id, g), p)| PredictionRow {
                id: id.clone(),
                gold: g.name().to_string(),
                pred: p.name().to_string(),
                seed: run.seed,
                parse_flag: false,
            })
        })
        .collect()
}

/// Regroup prediction rows by seed, in test order. Returns
/// (seed, predictions, parse failures) per seed in first-seen order.
/// Predictions per seed, in file order.
type SeedRuns<C> = Vec<(u64, Vec<C>)>;

fn group_by_seed<C: ClassSet + FromStr>(
    rows: &[PredictionRow],
    ids: &[String],
) -> std::result::Result<Vec<(u64, Vec<C>, usize)>, String> {
    let mut order = Vec::new();
    let mut by_seed: HashMap<u64, HashMap<&str, (&str, bool)>> = HashMap::new();
    for r in rows {
        if !by_seed.contains_key(&r.seed) {
            order.push(r.seed);
        }
        by_seed.entry(r.seed).or_default().insert(&r.id, (&r.pred, r.parse_flag));
    }
    order
        .into_iter()
        .map(|seed| {
            let map = &by_seed[&seed];
            let mut preds = Vec::with_capacity(ids.len());
            let mut failures = 0;
            for id in ids {
                let (p, flag) = map.get(id.as_str()).ok_or_else(|| format!("seed {seed}: no prediction for `{id}`"))?;
                preds.push(p.parse::<C>().map_err(|_| format!("seed {seed}: unknown label `{p}`"))?);
                failures += usize::from(*flag);
            }
            Ok((seed, preds, failures))
        })
        .collect()
}

/// Drives the stages for one configuration.
pub struct Pipeline {
    pub config: Config,
    pub work: PathBuf,
}

impl Pipeline {
    pub fn new(config: Config) -> Self {
        let work = config.workdir();
        Pipeline { config, work }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.work.join(rel)
    }

    fn require(&self, stage: Stage, path: &Path, hint: &str) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(PipelineError::MissingInput {
                stage,
                path: path.display().to_string(),
                hint: hint.to_string(),
            })
        }
    }

    fn upstream(&self, stage: Stage, rel: &str, producer: Stage) -> Result<PathBuf> {
        let path = self.p(rel);
        self.require(stage, &path, &format!("run `aporo run {}` first", producer.name()))?;
        Ok(path)
    }

    pub fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.p(&format!("manifests/{}.json", stage.name()))
    }

    fn digest(&self, stage: Stage, path: &Path) -> Result<FileDigest> {
        let mut d = FileDigest::of(path).at(stage)?;
        if let Ok(rel) = path.strip_prefix(&self.work) {
            d.path = rel.to_string_lossy().replace('\\', "/");
        }
        Ok(d)
    }

    /// Run one stage and write its manifest.
    pub fn run(&self, stage: Stage) -> Result<RunManifest> {
        let started_at = Utc::now();
        std::fs::create_dir_all(self.p(stage.dir())).at(stage)?;
        std::fs::create_dir_all(self.p("manifests")).at(stage)?;
        log::info!("stage {stage}: starting");
        let out = match stage {
            Stage::Ingest => self.ingest(),
            Stage::Geolocate => self.geolocate(),
            Stage::Topics => self.topics(),
            Stage::Sample => self.sample(),
            Stage::Annotate => self.annotate(),
            Stage::Split => self.split(),
            Stage::Train => self.train(),
            Stage::PromptEval => self.prompt_eval(),
            Stage::Evaluate => self.evaluate(),
            Stage::Ablate => self.ablate(),
            Stage::Report => self.report(),
        }?;
        let digests = |paths: &[PathBuf]| paths.iter().map(|p| self.digest(stage, p)).collect::<Result<Vec<_>>>();
        let manifest = RunManifest {
            stage: stage.name().to_string(),
            config_hash: self.config.hash(),
            inputs: digests(&out.inputs)?,
            outputs: digests(&out.outputs)?,
            seeds: out.seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            finished_at: Utc::now(),
            notes: out.notes,
        };
        manifest.save(&self.manifest_path(stage)).at(stage)?;
        log::info!("stage {stage}: wrote {} output(s)", manifest.outputs.len());
        Ok(manifest)
    }

    pub fn run_all(&self) -> Result<Vec<RunManifest>> {
        Stage::ALL.iter().map(|s| self.run(*s)).collect()
    }

    fn ingest(&self) -> Result<StageOutput> {
        let st = Stage::Ingest;
        let c = &self.config.ingest;
        let input = self.config.path(&c.input);
        self.require(st, &input, "set `ingest.input` to the collected posts")?;
        let format: RecordFormat = c.format.parse().at(st)?;
        let loaded = load_records(&input, format, LoadOptions { fail_fast: c.fail_fast }).at(st)?;
        let n_loaded = loaded.records.len() + loaded.warnings.len();
        for w in &loaded.warnings {
            log::warn!("{}: line {} lacks `{}`; skipped", input.display(), w.line, w.field);
        }
        let bot_match = if c.bot_match == "token" { BotMatch::Token } else { BotMatch::Substring };
        let filtered = filter_records(
            loaded.records,
            &FilterConfig {
                bot_match,
                max_hashtags: c.max_hashtags,
            },
        );
        let terms = QueryTermSet::collection_default();
        let mut kept = Vec::with_capacity(filtered.kept.len());
        let mut no_term = 0usize;
        for r in filtered.kept {
            let matches = match_query_terms(&r.text, &terms);
            if matches.is_empty() && c.require_term {
                no_term += 1;
                continue;
            }
            kept.push(mask_terms(r, &matches, &c.placeholder).at(st)?);
        }
        let records = self.p("ingest/records.jsonl");
        let summary = self.p("ingest/rejections.json");
        write_records(&records, &kept).at(st)?;
        write_json(
            &summary,
            &serde_json::json!({
                "read": n_loaded,
                "missing_fields": loaded.warnings,
                "rejections": filtered.rejections,
                "no_query_term": no_term,
                "kept": kept.len(),
            }),
        )
        .at(st)?;
        log::info!("ingest: kept {} of {n_loaded} posts", kept.len());
        Ok(StageOutput {
            inputs: vec![input],
            outputs: vec![records, summary],
            ..Default::default()
        })
    }

    fn geolocate(&self) -> Result<StageOutput> {
        let st = Stage::Geolocate;
        let input = self.upstream(st, "ingest/records.jsonl", Stage::Ingest)?;
        let mut inputs = vec![input.clone()];
        let gaz = if self.config.geo.gazetteer.is_empty() {
            Gazetteer::builtin()
        } else {
            let path = self.config.path(&self.config.geo.gazetteer);
            self.require(st, &path, "fix `geo.gazetteer` or leave it empty for the built-in list")?;
            inputs.push(path.clone());
            Gazetteer::load(&path).at(st)?
        };
        let mut records = read_records(&input).at(st)?;
        for r in &mut records {
            r.region = Some(resolve_region(r, &gaz));
        }
        let dist = region_distribution(records.iter().filter_map(|r| r.region));
        let out = self.p("geo/records.jsonl");
        let dist_path = self.p("geo/distribution.json");
        write_records(&out, &records).at(st)?;
        write_json(&dist_path, &dist).at(st)?;
        Ok(StageOutput {
            inputs,
            outputs: vec![out, dist_path],
            ..Default::default()
        })
    }

    fn topics(&self) -> Result<StageOutput> {
        let st = Stage::Topics;
        let t = &self.config.topics;
        let input = self.upstream(st, "geo/records.jsonl", Stage::Geolocate)?;
        let mut inputs = vec![input.clone()];
        let mut records = read_records(&input).at(st)?;
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let texts: Vec<&str> = records.iter().map(|r| r.text_for_modeling()).collect();

        let encoder = HashingEncoder::new(t.encoder_dim);
        let cache = self.p("topics/embeddings.bin");
        let emb = match read_cache(&cache) {
            Ok(m) if m.doc_ids == ids && m.encoder_id == encoder.id() => {
                log::info!("topics: reusing cached embeddings");
                m
            }
            _ => {
                let m = embed_documents(&ids, &texts, &encoder, t.batch_size, false).at(st)?;
                write_cache(&cache, &m).at(st)?;
                m
            }
        };
        let cfg = ClusterConfig {
            min_cluster_size: (t.min_cluster_size > 0).then_some(t.min_cluster_size),
            min_samples: (t.min_samples > 0).then_some(t.min_samples),
            reduction: if t.pca_components == 0 {
                Reduction::None
            } else {
                Reduction::Pca {
                    components: t.pca_components,
                }
            },
            min_df: t.min_df,
            k: t.top_k,
            representatives: t.representatives,
        };
        let model = fit_topic_model(&emb, &texts, &cfg).at(st)?;
        log::info!(
            "topics: {} topics, {:.1}% outliers",
            model.topics.len(),
            model.outlier_fraction() * 100.0
        );

        let known = model.topic_ids();
        let selection = if t.selection.trim().is_empty() || t.selection == "all" {
            TopicSelection {
                rationale: vec![String::new(); known.len()],
                selected_topic_ids: known,
            }
        } else {
            let path = self.config.path(&t.selection);
            self.require(st, &path, "write a selection file (`id | rationale` per line) or set `topics.selection = \"all\"`")?;
            inputs.push(path.clone());
            select_topics(&known, &std::fs::read_to_string(&path).at(st)?).at(st)?
        };

        let assignments = model.assignments();
        for r in &mut records {
            r.topic_id = Some(assignments.get(&r.id).copied().unwrap_or(OUTLIER_TOPIC));
        }
        let model_path = self.p("topics/model.json");
        let sel_path = self.p("topics/selection.json");
        let rec_path = self.p("topics/records.jsonl");
        model.save(&model_path).at(st)?;
        write_json(&sel_path, &selection).at(st)?;
        write_records(&rec_path, &records).at(st)?;
        Ok(StageOutput {
            inputs,
            outputs: vec![cache, model_path, sel_path, rec_path],
            ..Default::default()
        })
    }

    fn window(&self) -> Result<CollectionWindow> {
        let s = &self.config.sample;
        let ts = |raw: &str| {
            parse_timestamp(raw).ok_or_else(|| ConfigError::Schema(vec![format!("bad window timestamp `{raw}`")]))
        };
        Ok(CollectionWindow {
            start: ts(&s.window_start)?,
            end: ts(&s.window_end)?,
            n_months: s.n_months,
        })
    }

    fn sample(&self) -> Result<StageOutput> {
        let st = Stage::Sample;
        let s = &self.config.sample;
        let rec_path = self.upstream(st, "topics/records.jsonl", Stage::Topics)?;
        let sel_path = self.upstream(st, "topics/selection.json", Stage::Topics)?;
        let mut inputs = vec![rec_path.clone(), sel_path.clone()];
        let records = read_records(&rec_path).at(st)?;
        let selection: TopicSelection = read_json(&sel_path).at(st)?;
        let window = self.window()?;

        let mut quotas = BTreeMap::new();
        if !s.quotas.is_empty() {
            let path = self.config.path(&s.quotas);
            self.require(st, &path, "fix `sample.quotas` or leave it empty and set `sample.default_quota`")?;
            inputs.push(path.clone());
            quotas = load_quotas(&path).at(st)?;
        }
        for t in quotas.keys().filter(|t| !selection.contains(**t)) {
            log::warn!("sample: topic {t} has a quota but is not selected; ignored");
        }
        quotas.retain(|t, _| selection.contains(*t));
        if s.default_quota > 0 {
            for t in &selection.selected_topic_ids {
                quotas.entry(*t).or_insert(s.default_quota);
            }
        }
        if quotas.is_empty() {
            return Err(PipelineError::Stage {
                stage: st,
                message: "no selected topic has a quota".into(),
            });
        }

        let mut outside = 0usize;
        let mut by_id: HashMap<&str, (&PostRecord, u32)> = HashMap::new();
        let mut pool = Vec::new();
        for r in &records {
            let Some(topic) = r.topic_id.filter(|t| selection.contains(*t)) else { continue };
            let Some(month) = window.month_index(r.created_at) else {
                outside += 1;
                continue;
            };
            let Some(region) = r.region else { continue };
            by_id.insert(&r.id, (r, month));
            pool.push(PoolItem {
                id: r.id.clone(),
                topic_id: topic,
                region,
                month,
            });
        }
        if outside > 0 {
            log::warn!("sample: {outside} posts fall outside the collection window");
        }
        let manifest = stratified_sample(&pool, &quotas, s.n_months, self.config.seed).at(st)?;
        let mut short: BTreeMap<i32, usize> = BTreeMap::new();
        for sf in &manifest.shortfalls {
            *short.entry(sf.topic_id).or_default() += sf.deficit;
        }
        for (topic, deficit) in short {
            let got = manifest.achieved_for_topic(topic);
            log::warn!("sample: topic {topic} strata short by {deficit} in total; {got} of {} drawn", quotas[&topic]);
        }
        let items: Vec<Item> = manifest
            .sampled_ids
            .iter()
            .map(|id| {
                let (r, month) = by_id[id.as_str()];
                Item {
                    id: r.id.clone(),
                    text: r.text_for_modeling().to_string(),
                    region: r.region.unwrap_or_default(),
                    topic_id: r.topic_id,
                    month: Some(month),
                    created_at: Some(r.created_at),
                }
            })
            .collect();
        let man_path = self.p("sample/manifest.json");
        let items_path = self.p("sample/items.jsonl");
        manifest.save(&man_path).at(st)?;
        let mut buf = String::new();
        for item in &items {
            buf.push_str(&serde_json::to_string(item).at(st)?);
            buf.push('\n');
        }
        std::fs::write(&items_path, buf).at(st)?;
        log::info!("sample: drew {} items from a pool of {}", items.len(), pool.len());
        Ok(StageOutput {
            inputs,
            outputs: vec![man_path, items_path],
            seeds: vec![self.config.seed],
            ..Default::default()
        })
    }

    fn items(&self, st: Stage) -> Result<(PathBuf, Vec<Item>)> {
        let path = self.upstream(st, "sample/items.jsonl", Stage::Sample)?;
        let text = std::fs::read_to_string(&path).at(st)?;
        let items = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<Item>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .at(st)?;
        Ok((path, items))
    }

    fn assignments(&self, items: &[Item]) -> Result<BTreeMap<String, Vec<String>>> {
        let a = &self.config.annotate;
        let ids: Vec<String> = items.iter().map(|i| i.id.clone()).collect();
        assign_items(&ids, &a.annotators, a.per_item, self.config.seed).at(Stage::Annotate)
    }

    /// Path of the append-only annotation log written by `aporo serve`.
    pub fn annotation_log(&self) -> PathBuf {
        self.p("annotate/log.jsonl")
    }

    /// A store over the sampled items, backed by the annotation log.
    pub fn open_store(&self) -> Result<AnnotationStore> {
        let (_, items) = self.items(Stage::Annotate)?;
        let assignments = self.assignments(&items)?;
        std::fs::create_dir_all(self.p("annotate")).at(Stage::Annotate)?;
        AnnotationStore::open(items, assignments, &self.annotation_log()).at(Stage::Annotate)
    }

    fn annotate(&self) -> Result<StageOutput> {
        let st = Stage::Annotate;
        let a = &self.config.annotate;
        let (items_path, items) = self.items(st)?;
        let mut inputs = vec![items_path];
        let assignments = self.assignments(&items)?;
        let assign_path = self.p("annotate/assignments.json");
        write_json(&assign_path, &assignments).at(st)?;

        let log = self.annotation_log();
        let (store, source) = if log.exists() {
            inputs.push(log.clone());
            (AnnotationStore::open(items, assignments, &log).at(st)?, "annotation log")
        } else if !a.gold.is_empty() {
            let gold_path = self.config.path(&a.gold);
            self.require(st, &gold_path, "fix `annotate.gold`")?;
            inputs.push(gold_path.clone());
            let gold = read_gold(&gold_path).at(st)?;
            (simulate_annotation(items, assignments, &gold, self.config.seed).at(st)?, "simulated annotators")
        } else {
            return Err(PipelineError::MissingInput {
                stage: st,
                path: log.display().to_string(),
                hint: "label the sampled items with `aporo serve`, or set `annotate.gold` to simulate annotators".into(),
            });
        };
        let rows = store.export().at(st)?;
        let dataset = self.p("annotate/dataset.csv");
        let agreement = self.p("annotate/agreement.json");
        save_dataset(&dataset, &rows).at(st)?;
        write_json(
            &agreement,
            &serde_json::json!({
                "source": source,
                "items": store.items().count(),
                "removed": store.removed_count(),
                "exported": rows.len(),
                "pairs": store.pairwise_agreement(),
            }),
        )
        .at(st)?;
        Ok(StageOutput {
            inputs,
            outputs: vec![assign_path, dataset, agreement],
            seeds: vec![self.config.seed],
            notes: vec![format!("labels from {source}")],
        })
    }

    fn split(&self) -> Result<StageOutput> {
        let st = Stage::Split;
        let b = &self.config.bench;
        let path = if b.dataset.is_empty() {
            self.upstream(st, "annotate/dataset.csv", Stage::Annotate)?
        } else {
            let p = self.config.path(&b.dataset);
            self.require(st, &p, "fix `bench.dataset` or leave it empty to use the annotation export")?;
            p
        };
        let rows = load_dataset(&path).at(st)?;
        let split = if b.cut == "auto" {
            chronological_split(&rows, Cut::Auto)
        } else if let Some(n) = b.cut.strip_prefix("train:") {
            split_by_train_size(&rows, n.parse().at(st)?)
        } else {
            let at = parse_timestamp(&b.cut).ok_or_else(|| ConfigError::Schema(vec![format!("bad cut `{}`", b.cut)]))?;
            chronological_split(&rows, Cut::At(at))
        }
        .at(st)?;
        let problems = split.check(&rows);
        if !problems.is_empty() {
            return Err(PipelineError::Stage {
                stage: st,
                message: problems.join("; "),
            });
        }
        let pick = |ids: &[String]| {
            let by_id: HashMap<&str, &DatasetRow> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
            ids.iter().map(|id| by_id[id.as_str()].clone()).collect::<Vec<_>>()
        };
        let split_path = self.p("split/split.json");
        let train_path = self.p("split/train.csv");
        let test_path = self.p("split/test.csv");
        write_json(&split_path, &split).at(st)?;
        save_dataset(&train_path, &pick(&split.train_ids)).at(st)?;
        save_dataset(&test_path, &pick(&split.test_ids)).at(st)?;
        log::info!("split: {} train, {} test", split.train_ids.len(), split.test_ids.len());
        Ok(StageOutput {
            inputs: vec![path],
            outputs: vec![split_path, train_path, test_path],
            ..Default::default()
        })
    }

    fn train_test(&self, st: Stage) -> Result<(Vec<PathBuf>, Vec<DatasetRow>, Vec<DatasetRow>)> {
        let train_path = self.upstream(st, "split/train.csv", Stage::Split)?;
        let test_path = self.upstream(st, "split/test.csv", Stage::Split)?;
        let train = load_dataset(&train_path).at(st)?;
        let test = load_dataset(&test_path).at(st)?;
        Ok((vec![train_path, test_path], train, test))
    }

    fn native_config(&self) -> NativeConfig {
        let b = &self.config.bench;
        NativeConfig {
            dim: b.hash_dim,
            batch_size: b.batch_size,
            epochs: b.epochs,
            learning_rate: b.learning_rate,
        }
    }

    fn process_adapter(&self, task: &str) -> ProcessAdapter {
        let b = &self.config.bench;
        let mut a = ProcessAdapter::new(&b.program, &b.backbone, self.p(&format!("train/process/{task}")));
        // arguments naming files next to the config resolve against it
        a.args = b
            .program_args
            .iter()
            .map(|arg| {
                let p = self.config.path(arg);
                if p.exists() { p.display().to_string() } else { arg.clone() }
            })
            .collect();
        a.batch_size = b.batch_size;
        a.epochs = b.epochs;
        a
    }

    fn model_id(&self) -> String {
        match self.config.bench.adapter.as_str() {
            "process" => self.config.bench.backbone.clone(),
            _ => FineTuneAdapter::<Label>::id(&NativeClassifier::<Label>::new(self.native_config())),
        }
    }

    /// Train one model per seed on `train` and predict `texts`. Native
    /// models are saved under `train/models/`.
    fn fine_tune<C: ClassSet + FromStr>(
        &self,
        st: Stage,
        task: &str,
        train: &[LabeledText<C>],
        texts: &[&str],
    ) -> Result<(Vec<SeedPredictions<C>>, Vec<PathBuf>)> {
        let seeds = &self.config.bench.seeds;
        if self.config.bench.adapter == "process" {
            let proto = self.process_adapter(task);
            let preds = aporo_core::bench::train_and_predict(&mut || proto.clone(), train, texts, seeds).at(st)?;
            return Ok((preds, Vec::new()));
        }
        let dir = self.p("train/models");
        std::fs::create_dir_all(&dir).at(st)?;
        let mut preds = Vec::new();
        let mut saved = Vec::new();
        for &seed in seeds {
            let mut model = NativeClassifier::<C>::new(self.native_config());
            model.train(train, seed).at(st)?;
            preds.push(SeedPredictions {
                seed,
                predictions: model.predict(texts).at(st)?,
            });
            let path = dir.join(format!("{task}-seed{seed}.json"));
            model.save(&path).at(st)?;
            saved.push(path);
        }
        Ok((preds, saved))
    }

    fn train(&self) -> Result<StageOutput> {
        let st = Stage::Train;
        let (inputs, train, test) = self.train_test(st)?;
        let texts: Vec<&str> = test.iter().map(|r| r.text.as_str()).collect();
        let ids: Vec<String> = test.iter().map(|r| r.id.clone()).collect();
        let ternary: Vec<LabeledText<Label>> = train
            .iter()
            .map(|r| LabeledText {
                id: r.id.clone(),
                text: r.text.clone(),
                label: r.label,
            })
            .collect();
        let binary: Vec<LabeledText<BinaryLabel>> = ternary
            .iter()
            .map(|t| LabeledText {
                id: t.id.clone(),
                text: t.text.clone(),
                label: BinaryLabel::from(t.label),
            })
            .collect();
        let (tern, mut models) = self.fine_tune(st, "ternary", &ternary, &texts)?;
        let (bin, bin_models) = self.fine_tune(st, "binary", &binary, &texts)?;
        models.extend(bin_models);

        let gold: Vec<Label> = test.iter().map(|r| r.label).collect();
        let gold_bin: Vec<BinaryLabel> = gold.iter().map(|l| BinaryLabel::from(*l)).collect();
        let pred_path = self.p("train/predictions.csv");
        let bin_path = self.p("train/binary_predictions.csv");
        let run_path = self.p("train/run.json");
        save_predictions(&pred_path, &prediction_rows(&ids, &gold, &tern)).at(st)?;
        save_predictions(&bin_path, &prediction_rows(&ids, &gold_bin, &bin)).at(st)?;
        let info = RunInfo {
            model_id: self.model_id(),
            seeds: self.config.bench.seeds.clone(),
            train_size: train.len(),
            test_size: test.len(),
            prompt: None,
        };
        write_json(&run_path, &info).at(st)?;
        let mut outputs = vec![pred_path, bin_path, run_path];
        outputs.extend(models);
        let mut notes = vec![format!("adapter {}", info.model_id)];
        if self.config.bench.adapter == "process" {
            notes.push(format!("external trainer `{}`; results depend on its hardware", self.config.bench.program));
        }
        Ok(StageOutput {
            inputs,
            outputs,
            seeds: self.config.bench.seeds.clone(),
            notes,
        })
    }

    fn prompt_specs(&self, st: Stage) -> Result<(Vec<PromptSpec>, Vec<PathBuf>)> {
        let b = &self.config.bench;
        if b.prompts.is_empty() {
            return Ok((vec![PromptSpec::default_fewshot(), PromptSpec::default_zeroshot()], Vec::new()));
        }
        let mut specs = Vec::new();
        let mut paths = Vec::new();
        for p in &b.prompts {
            let path = self.config.path(p);
            self.require(st, &path, "fix `bench.prompts`")?;
            specs.push(PromptSpec::load(&path).at(st)?);
            paths.push(path);
        }
        Ok((specs, paths))
    }

    fn prompt_eval(&self) -> Result<StageOutput> {
        let st = Stage::PromptEval;
        let b = &self.config.bench;
        let (mut inputs, train, test) = self.train_test(st)?;
        let (specs, spec_paths) = self.prompt_specs(st)?;
        inputs.extend(spec_paths);
        let retry = RetryPolicy {
            max_attempts: b.max_attempts,
            ..RetryPolicy::default()
        };
        let mut notes = Vec::new();
        let adapter: Box<dyn GenerativeAdapter + Sync> = if b.generative == "chat" {
            notes.push(format!("endpoint {} model {}; sampled output is not bit-reproducible", b.endpoint, b.model));
            Box::new(
                ChatCompletionsAdapter::new(ChatConfig {
                    endpoint: b.endpoint.clone(),
                    model: b.model.clone(),
                    credential_env: Some(b.credential_env.clone()),
                    timeout_secs: 60,
                })
                .at(st)?,
            )
        } else {
            Box::new(LexiconAdapter::default())
        };

        let (_, val_ids) = validation_split(&train, b.validation_fraction, self.config.seed).at(st)?;
        let val_set: HashSet<&str> = val_ids.iter().map(String::as_str).collect();
        let val: Vec<&DatasetRow> = train.iter().filter(|r| val_set.contains(r.id.as_str())).collect();
        let sweep = if val.is_empty() || specs.len() == 1 {
            SweepResult {
                scores: Vec::new(),
                best: specs[0].name.clone(),
            }
        } else {
            let texts: Vec<&str> = val.iter().map(|r| r.text.as_str()).collect();
            let gold: Vec<Label> = val.iter().map(|r| r.label).collect();
            prompt_sweep(adapter.as_ref(), &specs, &texts, &gold, b.concurrency, &retry).at(st)?
        };
        let best = specs.iter().find(|s| s.name == sweep.best).expect("sweep picks a given prompt");
        let texts: Vec<&str> = test.iter().map(|r| r.text.as_str()).collect();
        let parsed = predict_generative(adapter.as_ref(), best, &texts, b.concurrency, &retry).at(st)?;
        let rows: Vec<PredictionRow> = test
            .iter()
            .zip(&parsed)
            .map(|(r, p)| PredictionRow {
                id: r.id.clone(),
                gold: r.label.name().to_string(),
                pred: p.label.name().to_string(),
                seed: self.config.seed,
                parse_flag: p.parse_failure,
            })
            .collect();

        let sweep_path = self.p("prompt/sweep.json");
        let pred_path = self.p("prompt/predictions.csv");
        let run_path = self.p("prompt/run.json");
        write_json(&sweep_path, &sweep).at(st)?;
        save_predictions(&pred_path, &rows).at(st)?;
        write_json(
            &run_path,
            &RunInfo {
                model_id: adapter.id(),
                seeds: vec![self.config.seed],
                train_size: train.len(),
                test_size: test.len(),
                prompt: Some(best.name.clone()),
            },
        )
        .at(st)?;
        let mut outputs = vec![sweep_path, pred_path, run_path];

        for t in &b.toxicity {
            let clf = HttpBinaryClassifier {
                name: t.name.clone(),
                endpoint: t.endpoint.clone(),
                credential_env: (!t.credential_env.is_empty()).then(|| t.credential_env.clone()),
                toxic_labels: t.toxic_labels.clone(),
                timeout_secs: 60,
            };
            let labels = clf.classify(&texts, &retry).at(st)?;
            let rows: Vec<PredictionRow> = test
                .iter()
                .zip(&labels)
                .map(|(r, p)| PredictionRow {
                    id: r.id.clone(),
                    gold: BinaryLabel::from(r.label).name().to_string(),
                    pred: p.name().to_string(),
                    seed: self.config.seed,
                    parse_flag: false,
                })
                .collect();
            let path = self.p(&format!("prompt/toxicity-{}.csv", sanitize(&t.name)));
            save_predictions(&path, &rows).at(st)?;
            notes.push(format!("toxicity classifier {} at {}", t.name, t.endpoint));
            outputs.push(path);
        }
        Ok(StageOutput {
            inputs,
            outputs,
            seeds: vec![self.config.seed],
            notes,
        })
    }

    fn evaluate_file<C: ClassSet + FromStr>(
        &self,
        st: Stage,
        model_id: &str,
        path: &Path,
        test: &[DatasetRow],
        gold: &[C],
    ) -> Result<(EvalReport, SeedRuns<C>)> {
        let ids: Vec<String> = test.iter().map(|r| r.id.clone()).collect();
        let regions: Vec<Option<String>> = test.iter().map(|r| Some(r.region.display_name().to_string())).collect();
        let topics: Vec<Option<String>> = test
            .iter()
            .map(|r| Some(r.topic_id.map_or_else(|| "none".to_string(), |t| t.to_string())))
            .collect();
        let rows = load_predictions(path).at(st)?;
        let runs = group_by_seed::<C>(&rows, &ids).at(st)?;
        let mut reports = Vec::new();
        for (seed, pred, failures) in &runs {
            reports.push(
                evaluate(&EvalInput {
                    model_id,
                    seed: *seed,
                    ids: &ids,
                    gold,
                    pred,
                    regions: &regions,
                    topics: &topics,
                    parse_failures: *failures,
                    min_support: self.config.eval.min_support,
                })
                .at(st)?,
            );
        }
        let avg = seed_average(&reports).at(st)?;
        Ok((avg, runs.into_iter().map(|(s, p, _)| (s, p)).collect()))
    }

    fn evaluate(&self) -> Result<StageOutput> {
        let st = Stage::Evaluate;
        let (mut inputs, _, test) = self.train_test(st)?;
        let gold: Vec<Label> = test.iter().map(|r| r.label).collect();
        let gold_bin: Vec<BinaryLabel> = gold.iter().map(|l| BinaryLabel::from(*l)).collect();

        let mut reports = Vec::new();
        let mut binary: Vec<(String, Metrics)> = Vec::new();
        let mut miss = csv_writer();

        let pred = self.upstream(st, "train/predictions.csv", Stage::Train)?;
        let run_path = self.upstream(st, "train/run.json", Stage::Train)?;
        let info: RunInfo = read_json(&run_path).at(st)?;
        let (report, runs) = self.evaluate_file(st, &info.model_id, &pred, &test, &gold)?;
        write_misclassified(&mut miss, &info.model_id, &test, &runs).at(st)?;
        reports.push(report);
        let bin_pred = self.upstream(st, "train/binary_predictions.csv", Stage::Train)?;
        let (bin_report, _) = self.evaluate_file(st, &info.model_id, &bin_pred, &test, &gold_bin)?;
        binary.push((format!("{} fine-tuned", info.model_id), bin_report.metrics));
        inputs.extend([pred, run_path, bin_pred]);

        let prompt_pred = self.p("prompt/predictions.csv");
        let prompt_run = self.p("prompt/run.json");
        if prompt_pred.exists() && prompt_run.exists() {
            let info: RunInfo = read_json(&prompt_run).at(st)?;
            let (report, runs) = self.evaluate_file(st, &info.model_id, &prompt_pred, &test, &gold)?;
            write_misclassified(&mut miss, &info.model_id, &test, &runs).at(st)?;
            reports.push(report);
            inputs.extend([prompt_pred, prompt_run]);
        } else {
            log::warn!("evaluate: no prompt-eval predictions; generative row skipped");
        }
        for t in &self.config.bench.toxicity {
            let path = self.p(&format!("prompt/toxicity-{}.csv", sanitize(&t.name)));
            self.require(st, &path, "run `aporo run prompt-eval` first")?;
            let (report, _) = self.evaluate_file(st, &t.name, &path, &test, &gold_bin)?;
            binary.push((t.name.clone(), report.metrics));
            inputs.push(path);
        }

        let reports_path = self.p("eval/reports.json");
        let binary_path = self.p("eval/binary.json");
        let miss_path = self.p("eval/misclassified.csv");
        write_json(&reports_path, &reports).at(st)?;
        write_json(&binary_path, &binary).at(st)?;
        std::fs::write(&miss_path, miss.into_inner().map_err(|e| e.to_string()).at(st)?).at(st)?;
        for r in &reports {
            log::info!("evaluate: {} weighted F1 {:.4}", r.model_id, r.metrics.f1);
        }
        Ok(StageOutput {
            inputs,
            outputs: vec![reports_path, binary_path, miss_path],
            seeds: self.config.bench.seeds.clone(),
            ..Default::default()
        })
    }

    fn ablate(&self) -> Result<StageOutput> {
        let st = Stage::Ablate;
        let (mut inputs, train, test) = self.train_test(st)?;
        let seeds = self.config.bench.seeds.clone();
        let ids: Vec<String> = test.iter().map(|r| r.id.clone()).collect();
        let pred = self.p("train/predictions.csv");
        let baseline = if pred.exists() {
            let rows = load_predictions(&pred).at(st)?;
            let runs = group_by_seed::<Label>(&rows, &ids).at(st)?;
            if runs.iter().map(|r| r.0).eq(seeds.iter().copied()) {
                inputs.push(pred);
                Some(
                    runs.into_iter()
                        .map(|(seed, predictions, _)| SeedPredictions { seed, predictions })
                        .collect(),
                )
            } else {
                None
            }
        } else {
            None
        };
        if baseline.is_none() {
            log::info!("ablate: no reusable baseline; training on all regions too");
        }
        let regions = &self.config.eval.ablation_regions;
        let report = if self.config.bench.adapter == "process" {
            let proto = self.process_adapter("ablate");
            region_ablation(&train, &test, regions, &mut || proto.clone(), &seeds, baseline)
        } else {
            let cfg = self.native_config();
            region_ablation(&train, &test, regions, &mut || NativeClassifier::<Label>::new(cfg.clone()), &seeds, baseline)
        }
        .at(st)?;
        let all = report.all_row();
        log::info!(
            "ablate: overall F1 {:.4} with {} of {} training rows, {:.4} with all",
            all.overall_f1,
            report.train_size_ablated,
            report.train_size_full,
            all.baseline_overall_f1
        );
        let path = self.p("ablate/ablation.json");
        write_json(&path, &report).at(st)?;
        Ok(StageOutput {
            inputs,
            outputs: vec![path],
            seeds,
            ..Default::default()
        })
    }

    fn report(&self) -> Result<StageOutput> {
        let st = Stage::Report;
        let (mut inputs, train, test) = self.train_test(st)?;
        let reports_path = self.upstream(st, "eval/reports.json", Stage::Evaluate)?;
        let binary_path = self.upstream(st, "eval/binary.json", Stage::Evaluate)?;
        let ablation_path = self.p("ablate/ablation.json");
        let models: Vec<EvalReport> = read_json(&reports_path).at(st)?;
        let binary: Vec<(String, Metrics)> = read_json(&binary_path).at(st)?;
        inputs.extend([reports_path, binary_path]);
        let ablation: Option<AblationReport> = if ablation_path.exists() {
            inputs.push(ablation_path.clone());
            Some(read_json(&ablation_path).at(st)?)
        } else {
            log::warn!("report: no ablation results; its table will be empty");
            None
        };
        let all: Vec<DatasetRow> = train.iter().chain(&test).cloned().collect();
        let inputs_struct = ReportInputs {
            train_counts: class_counts(&train),
            test_counts: class_counts(&test),
            region_counts: region_class_counts(&all),
            models,
            binary,
            ablation,
        };
        let formats: Vec<TableFormat> = self
            .config
            .eval
            .formats
            .iter()
            .map(|f| if f == "csv" { TableFormat::Csv } else { TableFormat::Markdown })
            .collect();
        let dir = self.p("report");
        let mut outputs = emit_tables(&inputs_struct, &dir, &formats).at(st)?;

        let mut md = String::from("# Benchmark report\n\n");
        for table in build_tables(&inputs_struct) {
            md.push_str(&table.to_markdown());
            md.push('\n');
        }
        for m in &inputs_struct.models {
            md.push_str(&format!(
                "- {}: seeds {:?}, {} unparseable responses scored as None\n",
                m.model_id, m.seeds, m.parse_failure_count
            ));
        }
        if let Some(a) = &inputs_struct.ablation {
            md.push_str(&format!(
                "- ablation kept {} training rows of {}; ablated overall F1 {} the full-training baseline\n",
                a.train_size_ablated,
                a.train_size_full,
                if a.directional_check() { "does not exceed" } else { "exceeds" }
            ));
        }
        let md_path = dir.join("report.md");
        std::fs::write(&md_path, md).at(st)?;
        outputs.push(md_path);
        Ok(StageOutput {
            inputs,
            outputs,
            ..Default::default()
        })
    }

    /// Serve the annotation API over the sampled items until Ctrl-C.
    pub fn serve(&self, static_dir: Option<PathBuf>) -> Result<()> {
        let st = Stage::Annotate;
        let a = &self.config.annotate;
        let addr: std::net::SocketAddr = a
            .bind
            .parse()
            .map_err(|e| ConfigError::Schema(vec![format!("`annotate.bind`: {e}")]))?;
        let store = self.open_store()?;
        let static_dir = static_dir.or_else(|| (!a.static_dir.is_empty()).then(|| self.config.path(&a.static_dir)));
        let state = aporo_server::AppState::new(store, aporo_core::taxonomy::Catalog::builtin(), a.adjudicators.clone());
        let app = aporo_server::router(state, static_dir);
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().at(st)?;
        rt.block_on(aporo_server::serve(addr, app)).at(st)
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "seed", "id", "region", "gold", "pred", "text"]).expect("in-memory write");
    w
}

/// Append the first seed's errors for one model.
fn write_misclassified<C: ClassSet>(
    w: &mut csv::Writer<Vec<u8>>,
    model: &str,
    test: &[DatasetRow],
    runs: &[(u64, Vec<C>)],
) -> csv::Result<()> {
    let Some((seed, preds)) = runs.first() else { return Ok(()) };
    for (row, pred) in test.iter().zip(preds) {
        let gold = C::ALL.iter().find(|c| c.name() == row.label.name()).copied();
        if gold != Some(*pred) {
            w.write_record([
                model,
                &seed.to_string(),
                &row.id,
                row.region.display_name(),
                row.label.name(),
                pred.name(),
                &row.text,
            ])?;
        }
    }
    Ok(())
}

/// Read `id,label` rows.
fn read_gold(path: &Path) -> std::result::Result<HashMap<String, Label>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let (Some(id), Some(label)) = (rec.get(0), rec.get(1)) else {
            return Err(format!("{} line {}: expected `id,label`", path.display(), i + 2));
        };
        let label: Label = label
            .parse()
            .map_err(|_| format!("{} line {}: unknown label `{label}`", path.display(), i + 2))?;
        out.insert(id.to_string(), label);
    }
    Ok(out)
}

/// Label every item with simulated annotators who agree with `gold` most
/// of the time, then resolve disagreements to the gold label.
pub fn simulate_annotation(
    items: Vec<Item>,
    assignments: BTreeMap<String, Vec<String>>,
    gold: &HashMap<String, Label>,
    seed: u64,
) -> std::result::Result<AnnotationStore, String> {
    let mut store = AnnotationStore::new(items.clone(), assignments.clone());
    for item in &items {
        let g = *gold.get(&item.id).ok_or_else(|| format!("gold has no label for `{}`", item.id))?;
        let gi = Label::ALL.iter().position(|l| *l == g).expect("label in ALL");
        let ts = item.created_at.unwrap_or_default();
        for ann in assignments.get(&item.id).into_iter().flatten() {
            let h = keyed_hash(seed, &["simulate", &item.id, ann]);
            let label = if h % 100 < 12 {
                Label::ALL[(gi + 1 + ((h >> 8) % 2) as usize) % 3]
            } else {
                g
            };
            store
                .record_label(&item.id, ann, Some(label), false, 1, None, ts)
                .map_err(|e| e.to_string())?;
        }
    }
    for entry in store.disagreement_queue() {
        let g = gold[&entry.item_id];
        store
            .adjudicate(&entry.item_id, Decision::Label(g), "resolved to the reference label")
            .map_err(|e| e.to_string())?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_roundtrip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert_eq!("annotate".parse::<Stage>().unwrap(), Stage::Annotate);
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn grouping_restores_test_order() {
        let row = |id: &str, seed, pred: &str| PredictionRow {
            id: id.into(),
            gold: "None".into(),
            pred: pred.into(),
            seed,
            parse_flag: pred == "None",
        };
        let rows = vec![row("b", 62, "Direct"), row("a", 62, "None"), row("a", 42, "Reporting"), row("b", 42, "None")];
        let ids = vec!["a".to_string(), "b".to_string()];
        let g = group_by_seed::<Label>(&rows, &ids).unwrap();
        assert_eq!(g[0], (62, vec![Label::None, Label::Direct], 1));
        assert_eq!(g[1], (42, vec![Label::Reporting, Label::None], 1));
        assert!(group_by_seed::<Label>(&rows[..1], &ids).is_err());
    }

    #[test]
    fn simulation_resolves_everything() {
        let items: Vec<Item> = (0..40)
            .map(|i| Item {
                id: format!("i{i}"),
                text: String::new(),
                region: Default::default(),
                topic_id: None,
                month: None,
                created_at: None,
            })
            .collect();
        let ids: Vec<String> = items.iter().map(|i| i.id.clone()).collect();
        let anns = vec!["a".to_string(), "b".to_string()];
        let assignments = assign_items(&ids, &anns, 2, 1).unwrap();
        let gold: HashMap<String, Label> = ids.iter().enumerate().map(|(i, id)| (id.clone(), Label::ALL[i % 3])).collect();
        let store = simulate_annotation(items, assignments, &gold, 7).unwrap();
        let rows = store.export().unwrap();
        assert_eq!(rows.len(), 40);
        let agree = rows.iter().filter(|r| gold[&r.id] == r.label).count();
        assert!(agree >= 36, "{agree}");
    }
}

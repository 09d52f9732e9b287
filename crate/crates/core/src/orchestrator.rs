//! Experiment planning, resumable execution, scoring and agreement reports.
//!
//! A run lives in one directory:
//!
//! | file               | written by | contents                                   |
//! |--------------------|------------|--------------------------------------------|
//! | `config.json`      | plan       | the [`ExperimentConfig`]                   |
//! | `scheme.json`      | plan       | the concept scheme used                    |
//! | `sentences.jsonl`  | plan       | the sampled sentences                      |
//! | `guidelines.json`  | plan       | one [`GuidelineRecord`] per guideline      |
//! | `manifest.json`    | plan, run  | the [`RunManifest`]                        |
//! | `backend.json`     | run        | the backend configuration                  |
//! | `records.jsonl`    | run        | one [`EvalRecord`] per completed task      |
//! | `failures.jsonl`   | run        | one [`TaskFailure`] per failed task        |

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::assets;
use crate::backends::{run_concurrent, Backend, BackendConfig, BackendError, CompletionRequest};
use crate::concepts::{load_scheme, ConceptScheme, SchemeError, MODEL_GENERATED};
use crate::corpus::{balanced_sample, load_annotations, load_sentences, CorpusError, Sentence};
use crate::extraction::{extract_label, RefusalPhrases};
use crate::guidelines::{
    counterfactual, empty_definitions, factual, remap_prediction, sample_by_degree_with,
    sample_permutations, substitute_ood, Guideline, GuidelineError, GuidelineRecord,
    SamplingStrategy, Variant,
};
use crate::metrics::{
    cohen_kappa, majority_vote, score_records, weighted_kappa, EvalRecord, LabelSet, MetricError,
    ScoreReport, Vote,
};
use crate::permutation::check_degree;
use crate::prompts::{build_prompt, ModelFamily, PromptError};

pub const CONFIG_FILE: &str = "config.json";
pub const SCHEME_FILE: &str = "scheme.json";
pub const SENTENCES_FILE: &str = "sentences.jsonl";
pub const GUIDELINES_FILE: &str = "guidelines.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BACKEND_FILE: &str = "backend.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";

/// Label standing in for a refused or unparsed model answer in agreement
/// tables.
pub const NO_LABEL: &str = "<none>";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} line {line}: {source}")]
    JsonLine {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Guideline(#[from] GuidelineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{0} already has records; pass --resume to continue it")]
    AlreadyStarted(String),
    #[error("run was started with a different backend ({0}); use a new run directory")]
    BackendChanged(String),
    #[error("records file has {count} entries for task {task}")]
    DuplicateRecord { task: String, count: usize },
    #[error("record for unknown task {0}")]
    UnknownTask(String),
    #[error("no annotated item overlaps the model records")]
    NoOverlap,
}

type Result<T, E = OrchestratorError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariantSpec {
    Factual,
    FactualEmpty,
    Ood,
    OodEmpty,
    /// One seeded derangement: every definition is counterfactual.
    CounterfactualFull,
    DegreeSweep { levels: Vec<usize>, per_level: usize },
}

impl VariantSpec {
    /// The four single-guideline variants plus a full counterfactual.
    pub fn headline() -> Vec<VariantSpec> {
        vec![
            VariantSpec::Factual,
            VariantSpec::FactualEmpty,
            VariantSpec::Ood,
            VariantSpec::OodEmpty,
            VariantSpec::CounterfactualFull,
        ]
    }
}

impl FromStr for VariantSpec {
    type Err = String;

    /// `factual`, `factual_empty`, `ood`, `ood_empty`, `counterfactual_full`
    /// or `degree_sweep:<levels>:<per_level>` with levels like `2-5` or
    /// `2,4`. Hyphens and underscores are interchangeable in names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, ':');
        let name = parts.next().unwrap_or_default().replace('-', "_");
        let spec = match name.as_str() {
            "factual" => VariantSpec::Factual,
            "factual_empty" => VariantSpec::FactualEmpty,
            "ood" => VariantSpec::Ood,
            "ood_empty" => VariantSpec::OodEmpty,
            "counterfactual_full" => VariantSpec::CounterfactualFull,
            "degree_sweep" => {
                let levels = parts
                    .next()
                    .ok_or("degree_sweep needs levels, e.g. degree_sweep:2-5:10")?;
                let per_level = parts
                    .next()
                    .ok_or("degree_sweep needs a per-level count, e.g. degree_sweep:2-5:10")?
                    .parse()
                    .map_err(|e| format!("per-level count: {e}"))?;
                VariantSpec::DegreeSweep {
                    levels: parse_levels(levels)?,
                    per_level,
                }
            }
            _ => return Err(format!("unknown variant {s:?}")),
        };
        if parts.next().is_some() && !matches!(spec, VariantSpec::DegreeSweep { .. }) {
            return Err(format!("variant {s:?} takes no arguments"));
        }
        Ok(spec)
    }
}

/// `2-5` or `2,3,5`.
pub fn parse_levels(s: &str) -> Result<Vec<usize>, String> {
    let bad = |e: std::num::ParseIntError| format!("degree level in {s:?}: {e}");
    if let Some((lo, hi)) = s.split_once('-') {
        let (lo, hi): (usize, usize) = (lo.trim().parse().map_err(bad)?, hi.trim().parse().map_err(bad)?);
        if lo > hi {
            return Err(format!("empty degree range {s:?}"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(bad)).collect()
}

fn default_def_set() -> String {
    MODEL_GENERATED.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scheme: PathBuf,
    #[serde(default = "default_def_set")]
    pub def_set: String,
    pub dataset: PathBuf,
    /// Sentences per label; `None` keeps the whole dataset in file order.
    pub per_class: Option<usize>,
    pub seed: u64,
    pub variants: Vec<VariantSpec>,
    #[serde(default)]
    pub sampling: SamplingStrategy,
    /// OOD word list; the shipped list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood_words: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("config serializes"),
        ))
    }

    pub fn validate(&self, scheme: &ConceptScheme) -> Result<()> {
        if self.variants.is_empty() {
            return Err(OrchestratorError::Config("no variants selected".into()));
        }
        if self.per_class == Some(0) {
            return Err(OrchestratorError::Config("per_class must be ≥ 1".into()));
        }
        scheme.definitions(&self.def_set)?;
        for v in &self.variants {
            if let VariantSpec::DegreeSweep { levels, per_level } = v {
                if *per_level == 0 {
                    return Err(OrchestratorError::Config(
                        "degree sweep needs ≥1 guideline per level".into(),
                    ));
                }
                if levels.is_empty() {
                    return Err(OrchestratorError::Config("degree sweep has no levels".into()));
                }
                for &k in levels {
                    if k < 2 || k > scheme.len() {
                        return Err(OrchestratorError::Config(format!(
                            "degree level {k} outside 2..={} ({})",
                            scheme.len(),
                            check_degree(scheme.len(), k)
                                .err()
                                .map(|e| e.to_string())
                                .unwrap_or_else(|| "factual level is planned as a variant".into())
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mixes a tag into the experiment seed so that each random draw has its
/// own stream.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{tag}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub guideline_id: String,
    pub sentence_id: String,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// Hash of the ordered task ids; equal plans have equal hashes.
    pub plan_hash: String,
    pub created_unix: u64,
    #[serde(default)]
    pub updated_unix: Option<u64>,
    pub tasks: Vec<Task>,
}

impl RunManifest {
    pub fn count(&self, status: TaskStatus) -> usize {
        self.tasks.iter().filter(|t| t.status == status).count()
    }
}

/// A planned experiment held in memory.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub scheme: ConceptScheme,
    pub guidelines: Vec<Guideline>,
    pub sentences: Vec<Sentence>,
    pub manifest: RunManifest,
}

/// Builds the guideline list for `config` in variant order, without
/// duplicates.
pub fn plan_guidelines(
    config: &ExperimentConfig,
    scheme: &ConceptScheme,
    ood_words: &[String],
) -> Result<Vec<Guideline>> {
    config.validate(scheme)?;
    let mut out: Vec<Guideline> = Vec::new();
    let base = factual(scheme, &config.def_set)?;
    for spec in &config.variants {
        let made = match spec {
            VariantSpec::Factual => vec![base.clone()],
            VariantSpec::FactualEmpty => vec![empty_definitions(&base)?],
            VariantSpec::Ood => vec![substitute_ood(&base, ood_words)?],
            VariantSpec::OodEmpty => vec![empty_definitions(&substitute_ood(&base, ood_words)?)?],
            VariantSpec::CounterfactualFull => {
                let seed = derive_seed(config.seed, "counterfactual_full");
                let perm = sample_permutations(scheme.len(), scheme.len(), 1, seed, SamplingStrategy::Uniform)?
                    .pop()
                    .expect("one derangement");
                vec![counterfactual(scheme, &config.def_set, perm)?.with_seed(Some(seed))]
            }
            VariantSpec::DegreeSweep { levels, per_level } => {
                let mut gs = Vec::new();
                for &k in levels {
                    let seed = derive_seed(config.seed, &format!("degree/{k}"));
                    gs.extend(sample_by_degree_with(
                        scheme,
                        &config.def_set,
                        k,
                        *per_level,
                        seed,
                        config.sampling,
                    )?);
                }
                gs
            }
        };
        for g in made {
            if !out.iter().any(|o| o.id() == g.id()) {
                out.push(g);
            }
        }
    }
    Ok(out)
}

pub fn plan(config: &ExperimentConfig) -> Result<Plan> {
    let scheme = load_scheme(&config.scheme)?;
    config.validate(&scheme)?;
    let ood_words = match &config.ood_words {
        Some(p) => assets::parse_word_list(&std::fs::read_to_string(p).map_err(io_err(p))?),
        None => assets::ood_words(),
    };
    let guidelines = plan_guidelines(config, &scheme, &ood_words)?;
    let all = load_sentences(&config.dataset, &scheme)?;
    let sentences = match config.per_class {
        Some(n) => balanced_sample(&all, n, derive_seed(config.seed, "sentences"))?,
        None => all,
    };
    let tasks: Vec<Task> = guidelines
        .iter()
        .flat_map(|g| {
            sentences.iter().map(move |s| Task {
                task_id: crate::metrics::task_id(g.id(), &s.sentence_id),
                guideline_id: g.id().to_string(),
                sentence_id: s.sentence_id.clone(),
                status: TaskStatus::Pending,
            })
        })
        .collect();
    let mut hasher = Sha256::new();
    for t in &tasks {
        hasher.update(t.task_id.as_bytes());
        hasher.update(b"\n");
    }
    let manifest = RunManifest {
        config_hash: config.hash(),
        plan_hash: hex::encode(hasher.finalize()),
        created_unix: now_unix(),
        updated_unix: None,
        tasks,
    };
    info!(
        guidelines = guidelines.len(),
        sentences = sentences.len(),
        tasks = manifest.tasks.len(),
        "planned"
    );
    Ok(Plan {
        config: config.clone(),
        scheme,
        guidelines,
        sentences,
        manifest,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| OrchestratorError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut bytes = Vec::new();
    for item in items {
        serde_json::to_writer(&mut bytes, item).expect("item serializes");
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

pub fn write_guidelines(path: &Path, guidelines: &[Guideline]) -> Result<()> {
    let records: Vec<GuidelineRecord> = guidelines.iter().map(Guideline::to_record).collect();
    write_json(path, &records)
}

pub fn read_guidelines(path: &Path) -> Result<Vec<Guideline>> {
    let records: Vec<GuidelineRecord> = read_json(path)?;
    Ok(records
        .into_iter()
        .map(GuidelineRecord::into_guideline)
        .collect::<Result<_, _>>()?)
}

impl Plan {
    /// Writes the plan files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(&dir.join(CONFIG_FILE), &self.config)?;
        write_json(&dir.join(SCHEME_FILE), &self.scheme)?;
        write_jsonl(&dir.join(SENTENCES_FILE), &self.sentences)?;
        write_guidelines(&dir.join(GUIDELINES_FILE), &self.guidelines)?;
        write_json(&dir.join(MANIFEST_FILE), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Plan> {
        let config: ExperimentConfig = read_json(&dir.join(CONFIG_FILE))?;
        let scheme: ConceptScheme = read_json(&dir.join(SCHEME_FILE))?;
        let sentences = read_jsonl::<Sentence>(&dir.join(SENTENCES_FILE))?.items;
        let guidelines = read_guidelines(&dir.join(GUIDELINES_FILE))?;
        let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
        Ok(Plan {
            config,
            scheme,
            guidelines,
            sentences,
            manifest,
        })
    }
}

struct JsonlRead<T> {
    items: Vec<T>,
    /// Byte length of the well-formed prefix.
    valid_len: u64,
    /// The last line was cut off (no newline or unparsable).
    truncated: bool,
}

/// Reads a JSONL file. A malformed final line is treated as an interrupted
/// write and dropped; malformed lines elsewhere are errors.
fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<JsonlRead<T>> {
    let mut text = String::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_string(&mut text).map_err(io_err(path))?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(path)(e)),
    }
    let mut items = Vec::new();
    let mut offset = 0usize;
    let mut truncated = false;
    let segments: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        let line = seg.trim_end_matches('\n');
        if !line.trim().is_empty() {
            match serde_json::from_str(line) {
                Ok(item) if seg.ends_with('\n') || !last => items.push(item),
                Ok(_) => {
                    truncated = true;
                    break;
                }
                Err(_) if last => {
                    truncated = true;
                    break;
                }
                Err(source) => {
                    return Err(OrchestratorError::JsonLine {
                        path: path.display().to_string(),
                        line: i + 1,
                        source,
                    })
                }
            }
        }
        offset += seg.len();
    }
    Ok(JsonlRead {
        items,
        valid_len: offset as u64,
        truncated,
    })
}

/// Loads evaluation records, dropping an interrupted final line.
pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let read = read_jsonl(path)?;
    if read.truncated {
        warn!(path = %path.display(), "ignoring truncated final record");
    }
    Ok(read.items)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub guideline_id: String,
    pub sentence_id: String,
    pub error_kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue a run that already has records.
    pub resume: bool,
    /// Stop after this many tasks have been attempted in this invocation.
    pub limit: Option<usize>,
    pub refusals: RefusalPhrases,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total: usize,
    pub done: usize,
    pub failed: usize,
    pub pending: usize,
    /// Tasks attempted by this invocation.
    pub attempted: usize,
    pub failures: Vec<TaskFailure>,
}

impl RunSummary {
    pub fn complete(&self) -> bool {
        self.pending == 0 && self.failed == 0
    }
}

/// Fields that change model answers; a resumed run must keep them.
fn backend_identity(c: &BackendConfig) -> serde_json::Value {
    serde_json::json!({
        "kind": c.kind,
        "model_name": c.model_name,
        "family": c.family,
        "params": c.params,
        "mock_policy": c.mock_policy,
    })
}

/// Prompts, queries and scores one task.
pub fn evaluate_task(
    backend: &Backend,
    scheme: &ConceptScheme,
    g: &Guideline,
    s: &Sentence,
    refusals: &RefusalPhrases,
) -> Result<EvalRecord> {
    let bundle = build_prompt(g, scheme, &s.text, backend.config().family)?;
    let out = backend.complete(CompletionRequest {
        payload: &bundle.wrapped,
        guideline: g,
        factual_gold: &s.gold_label,
    })?;
    let predicted = extract_label(&out.raw_text, g, refusals);
    let predicted_factual = predicted
        .outcome
        .label()
        .map(|l| remap_prediction(g, l))
        .transpose()?;
    Ok(EvalRecord {
        sentence_id: s.sentence_id.clone(),
        guideline_id: g.id().to_string(),
        variant: g.variant(),
        degree: g.degree(),
        factual_gold: s.gold_label.clone(),
        predicted,
        predicted_factual,
        raw_text: out.raw_text,
        request_hash: out.request_hash,
        latency_ms: out.latency_ms,
        from_cache: out.from_cache,
    })
}

/// Executes the pending tasks of the plan in `dir`. Records are appended in
/// task order as they complete, so an interrupted run loses at most the
/// results still waiting on an earlier task; those are served from the
/// response cache on resume.
pub fn run(dir: &Path, backend: &Backend, opts: &RunOptions) -> Result<RunSummary> {
    let plan = Plan::load(dir)?;
    let records_path = dir.join(RECORDS_FILE);
    let existing = read_jsonl::<EvalRecord>(&records_path)?;
    if !existing.items.is_empty() && !opts.resume {
        return Err(OrchestratorError::AlreadyStarted(dir.display().to_string()));
    }

    let backend_path = dir.join(BACKEND_FILE);
    let identity = backend_identity(backend.config());
    if opts.resume && backend_path.exists() {
        let previous: BackendConfig = read_json(&backend_path)?;
        if backend_identity(&previous) != identity {
            return Err(OrchestratorError::BackendChanged(previous.model_name));
        }
    }
    write_json(&backend_path, backend.config())?;

    let task_index: HashMap<&str, usize> = plan
        .manifest
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.task_id.as_str(), i))
        .collect();
    let mut done = HashSet::new();
    for r in &existing.items {
        let id = r.task_id();
        if !task_index.contains_key(id.as_str()) {
            return Err(OrchestratorError::UnknownTask(id));
        }
        if !done.insert(id.clone()) {
            return Err(OrchestratorError::DuplicateRecord { task: id, count: 2 });
        }
    }

    let mut records_file = OpenOptions::new()
        .create(true)
        .read(true)
        .write(true)
        .truncate(false)
        .open(&records_path)
        .map_err(io_err(&records_path))?;
    if existing.truncated {
        warn!("dropping truncated final record line");
        records_file
            .set_len(existing.valid_len)
            .map_err(io_err(&records_path))?;
    }
    records_file
        .seek(SeekFrom::End(0))
        .map_err(io_err(&records_path))?;
    let mut records_out = BufWriter::new(records_file);

    let guidelines: HashMap<&str, &Guideline> =
        plan.guidelines.iter().map(|g| (g.id(), g)).collect();
    let sentences: HashMap<&str, &Sentence> = plan
        .sentences
        .iter()
        .map(|s| (s.sentence_id.as_str(), s))
        .collect();
    let mut pending: Vec<&Task> = plan
        .manifest
        .tasks
        .iter()
        .filter(|t| !done.contains(&t.task_id))
        .collect();
    if let Some(limit) = opts.limit {
        pending.truncate(limit);
    }
    info!(
        pending = pending.len(),
        done = done.len(),
        parallelism = backend.config().parallelism,
        "running"
    );

    let mut failures: Vec<TaskFailure> = Vec::new();
    let mut buffered: BTreeMap<usize, Result<EvalRecord>> = BTreeMap::new();
    let mut next_to_write = 0usize;
    let mut write_error: Option<OrchestratorError> = None;
    run_concurrent(
        &pending,
        backend.config().parallelism,
        |task| {
            let g = guidelines[task.guideline_id.as_str()];
            let s = sentences[task.sentence_id.as_str()];
            evaluate_task(backend, &plan.scheme, g, s, &opts.refusals)
        },
        |i, result| {
            buffered.insert(i, result);
            while let Some(result) = buffered.remove(&next_to_write) {
                let task = pending[next_to_write];
                next_to_write += 1;
                match result {
                    Ok(record) => {
                        let mut line = serde_json::to_vec(&record).expect("record serializes");
                        line.push(b'\n');
                        let written = records_out
                            .write_all(&line)
                            .and_then(|_| records_out.flush());
                        if let Err(e) = written {
                            write_error.get_or_insert(io_err(&records_path)(e));
                        } else {
                            done.insert(task.task_id.clone());
                        }
                    }
                    Err(e) => {
                        let error_kind = match &e {
                            OrchestratorError::Backend(b) => b.tag(),
                            OrchestratorError::Prompt(_) => "prompt",
                            _ => "other",
                        };
                        warn!(task = %task.task_id, error = %e, "task failed");
                        failures.push(TaskFailure {
                            task_id: task.task_id.clone(),
                            guideline_id: task.guideline_id.clone(),
                            sentence_id: task.sentence_id.clone(),
                            error_kind: error_kind.to_string(),
                            message: e.to_string(),
                        });
                    }
                }
            }
        },
    );
    if let Some(e) = write_error {
        return Err(e);
    }
    drop(records_out);
    write_jsonl(&dir.join(FAILURES_FILE), &failures)?;

    let failed: HashSet<&str> = failures.iter().map(|f| f.task_id.as_str()).collect();
    let mut manifest = plan.manifest.clone();
    for t in &mut manifest.tasks {
        t.status = if done.contains(&t.task_id) {
            TaskStatus::Done
        } else if failed.contains(t.task_id.as_str()) {
            TaskStatus::Failed
        } else {
            TaskStatus::Pending
        };
    }
    manifest.updated_unix = Some(now_unix());
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;

    let summary = RunSummary {
        total: manifest.tasks.len(),
        done: manifest.count(TaskStatus::Done),
        failed: manifest.count(TaskStatus::Failed),
        pending: manifest.count(TaskStatus::Pending),
        attempted: pending.len(),
        failures,
    };
    info!(
        done = summary.done,
        failed = summary.failed,
        pending = summary.pending,
        "run finished"
    );
    Ok(summary)
}

/// Scores records against their guidelines. Pure in its inputs.
pub fn score(records: &[EvalRecord], guidelines: &[Guideline]) -> Result<ScoreReport> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.task_id()).or_default() += 1;
    }
    if let Some((task, &count)) = counts.iter().filter(|(_, &c)| c > 1).min() {
        return Err(OrchestratorError::DuplicateRecord {
            task: task.clone(),
            count,
        });
    }
    let by_id: HashMap<String, Guideline> = guidelines
        .iter()
        .map(|g| (g.id().to_string(), g.clone()))
        .collect();
    Ok(score_records(records, &by_id)?)
}

pub fn curves_csv(report: &ScoreReport) -> String {
    let mut out = String::from("degree,mean,std\n");
    for p in &report.degree_curve {
        out.push_str(&format!("{},{},{}\n", p.degree, p.mean, p.std));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn adherence_csv(report: &ScoreReport) -> String {
    let m = &report.adherence;
    let mut out = String::from("row,column,value,support\n");
    for (i, row) in m.labels.iter().enumerate() {
        for (j, col) in m.labels.iter().enumerate() {
            let value = m.values[i][j].map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(row),
                csv_field(col),
                value,
                m.support[i][j]
            ));
        }
    }
    out
}

/// Scores and writes `report.json`, `curves.csv` and `adherence.csv` into
/// `out_dir`.
pub fn score_files(records: &Path, guidelines: &Path, out_dir: &Path) -> Result<ScoreReport> {
    let report = score(&read_records(records)?, &read_guidelines(guidelines)?)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_json(&out_dir.join("report.json"), &report)?;
    write_atomic(&out_dir.join("curves.csv"), curves_csv(&report).as_bytes())?;
    write_atomic(&out_dir.join("adherence.csv"), adherence_csv(&report).as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorAgreement {
    pub annotator: String,
    pub n: usize,
    /// Cohen's κ of the model label against the annotator's primary label.
    pub kappa: Option<f64>,
    /// Weighted κ of the model's one-label set against the annotator's set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub weighted_kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Items annotated by everyone with at least one label and answered by
    /// the model.
    pub items: usize,
    pub per_annotator: Vec<AnnotatorAgreement>,
    /// Mean of the defined per-annotator κ values.
    pub average_kappa: Option<f64>,
    /// κ of the model against the majority label, over items without a tie.
    pub majority_kappa: Option<f64>,
    pub majority_items: usize,
    pub majority_ties: usize,
    /// Pairwise human weighted κ over all annotated items.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub human_pairs: Vec<PairAgreement>,
}

fn model_label(r: &EvalRecord) -> String {
    r.predicted_factual.clone().unwrap_or_else(|| NO_LABEL.to_string())
}

/// Agreement of factual-guideline model answers with human annotators.
/// Items where some annotator chose no label are left out.
pub fn agree(
    records: &[EvalRecord],
    items: &[crate::corpus::AnnotationItem],
    weighted: bool,
) -> Result<AgreementReport> {
    let mut model: HashMap<&str, String> = HashMap::new();
    for r in records.iter().filter(|r| r.variant == Variant::Factual) {
        model
            .entry(r.sentence_id.as_str())
            .or_insert_with(|| model_label(r));
    }
    let annotators: BTreeSet<&str> = items
        .iter()
        .flat_map(|i| i.annotators.keys().map(String::as_str))
        .collect();
    let kept: Vec<(&crate::corpus::AnnotationItem, &String)> = items
        .iter()
        .filter(|i| {
            annotators
                .iter()
                .all(|a| i.annotators.get(*a).is_some_and(|ls| !ls.is_empty()))
        })
        .filter_map(|i| model.get(i.item_id.as_str()).map(|m| (i, m)))
        .collect();
    if kept.is_empty() {
        return Err(OrchestratorError::NoOverlap);
    }

    let mut per_annotator = Vec::new();
    for a in &annotators {
        let pairs: Vec<(&str, &str)> = kept
            .iter()
            .map(|(i, m)| (m.as_str(), i.primary_label(a).expect("filtered")))
            .collect();
        let kappa = cohen_kappa(&pairs)?;
        let weighted_kappa = if weighted {
            let sets: Vec<(LabelSet, LabelSet)> = kept
                .iter()
                .map(|(i, m)| {
                    let model_set: LabelSet = if m.as_str() == NO_LABEL {
                        LabelSet::new()
                    } else {
                        [m.to_string()].into()
                    };
                    (model_set, i.label_set(a).expect("filtered"))
                })
                .collect();
            weighted_kappa(&sets)?
        } else {
            None
        };
        per_annotator.push(AnnotatorAgreement {
            annotator: a.to_string(),
            n: pairs.len(),
            kappa,
            weighted_kappa,
        });
    }
    let defined: Vec<f64> = per_annotator.iter().filter_map(|a| a.kappa).collect();
    let average_kappa =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);

    let mut majority_pairs = Vec::new();
    let mut majority_ties = 0;
    for (i, m) in &kept {
        let sets: Vec<LabelSet> = annotators
            .iter()
            .map(|a| i.label_set(a).expect("filtered"))
            .collect();
        match majority_vote(&sets)? {
            Vote::Winner(w) => majority_pairs.push((m.to_string(), w)),
            Vote::Tie(_) | Vote::NoLabels => majority_ties += 1,
        }
    }
    let majority_kappa = if majority_pairs.len() >= 2 {
        cohen_kappa(&majority_pairs)?
    } else {
        None
    };

    let mut human_pairs = Vec::new();
    if weighted {
        let names: Vec<&str> = annotators.iter().copied().collect();
        for (x, a) in names.iter().enumerate() {
            for b in &names[x + 1..] {
                let sets: Vec<(LabelSet, LabelSet)> = items
                    .iter()
                    .filter_map(|i| Some((i.label_set(a)?, i.label_set(b)?)))
                    .collect();
                let weighted_kappa = if sets.len() >= 2 {
                    weighted_kappa(&sets)?
                } else {
                    None
                };
                human_pairs.push(PairAgreement {
                    a: a.to_string(),
                    b: b.to_string(),
                    n: sets.len(),
                    weighted_kappa,
                });
            }
        }
    }

    Ok(AgreementReport {
        items: kept.len(),
        per_annotator,
        average_kappa,
        majority_kappa,
        majority_items: majority_pairs.len(),
        majority_ties,
        human_pairs,
    })
}

pub fn agree_files(records: &Path, annotations: &Path, weighted: bool) -> Result<AgreementReport> {
    agree(&read_records(records)?, &load_annotations(annotations)?, weighted)
}

/// Writes the exact payload of every planned task to
/// `{out_dir}/{guideline_id}/{sentence_id}.txt`. Returns the file count.
pub fn dump_prompts(
    dir: &Path,
    family: ModelFamily,
    out_dir: &Path,
    limit: Option<usize>,
) -> Result<usize> {
    let plan = Plan::load(dir)?;
    let sentences: HashMap<&str, &Sentence> = plan
        .sentences
        .iter()
        .map(|s| (s.sentence_id.as_str(), s))
        .collect();
    let guidelines: HashMap<&str, &Guideline> =
        plan.guidelines.iter().map(|g| (g.id(), g)).collect();
    let mut written = 0;
    for task in plan.manifest.tasks.iter().take(limit.unwrap_or(usize::MAX)) {
        let g = guidelines[task.guideline_id.as_str()];
        let s = sentences[task.sentence_id.as_str()];
        let bundle = build_prompt(g, &plan.scheme, &s.text, family)?;
        let gdir = out_dir.join(g.id());
        std::fs::create_dir_all(&gdir).map_err(io_err(&gdir))?;
        let path = gdir.join(format!("{}.txt", s.sentence_id));
        std::fs::write(&path, bundle.wrapped.to_audit_text()).map_err(io_err(&path))?;
        written += 1;
    }
    Ok(written)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use guideline_probe::assets::{self, AssetBundle};
use guideline_probe::backends::{
    Backend, BackendConfig, GenerationParams, MockPolicy, ResponseCache, RetryPolicy,
};
use guideline_probe::concepts::{load_scheme, MODEL_GENERATED};
use guideline_probe::guidelines::{
    counterfactual, empty_definitions, enumerate_by_degree, factual, sample_by_degree_with,
    substitute_ood, substitute_ood_seeded, Guideline, SamplingStrategy, Variant,
};
use guideline_probe::orchestrator::{
    self, ExperimentConfig, RunOptions, VariantSpec, GUIDELINES_FILE, RECORDS_FILE,
};
use guideline_probe::prompts::ModelFamily;
use guideline_probe::RefusalPhrases;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "guideline-probe", version, about = "Probe how language models follow concept guidelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or enumerate guidelines.
    Guidelines(GuidelinesArgs),
    /// Plan an experiment into a run directory.
    Plan(PlanArgs),
    /// Execute the pending tasks of a planned run.
    Run(RunArgs),
    /// Score records into report.json, curves.csv and adherence.csv.
    Score(ScoreArgs),
    /// Agreement between factual-guideline answers and human annotators.
    Agree(AgreeArgs),
    /// Write the exact prompt of every planned task.
    DumpPrompts(DumpArgs),
    /// Check the shipped assets.
    VerifyAssets(VerifyArgs),
}

#[derive(Args)]
struct GuidelinesArgs {
    #[arg(long)]
    scheme: PathBuf,
    #[arg(long, default_value = MODEL_GENERATED)]
    def_set: String,
    #[arg(long, default_value = "factual")]
    variant: Variant,
    /// Degree of counterfactuality; required for `counterfactual`.
    #[arg(long)]
    degree: Option<usize>,
    /// Sample this many guidelines instead of enumerating all.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shuffle the OOD words with `--seed` before assigning them.
    #[arg(long)]
    shuffle_ood: bool,
    #[arg(long, value_enum, default_value_t = Sampling::Uniform)]
    sampling: Sampling,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    Uniform,
    ConceptBalanced,
}

impl From<Sampling> for SamplingStrategy {
    fn from(s: Sampling) -> Self {
        match s {
            Sampling::Uniform => SamplingStrategy::Uniform,
            Sampling::ConceptBalanced => SamplingStrategy::ConceptBalanced,
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    /// Experiment config JSON; replaces the individual flags.
    #[arg(long, conflicts_with_all = ["scheme", "dataset"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    scheme: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = MODEL_GENERATED)]
    def_set: String,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated: factual, factual_empty, ood, ood_empty,
    /// counterfactual_full, degree_sweep:<levels>:<per_level>.
    #[arg(long, value_delimiter = ',', default_value = "factual,factual_empty,ood,ood_empty,counterfactual_full")]
    variants: Vec<String>,
    /// Degree levels for a sweep, e.g. `2-5`.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long, default_value_t = 10)]
    per_level: usize,
    #[arg(long, value_enum, default_value_t = Sampling::Uniform)]
    sampling: Sampling,
    #[arg(long)]
    ood_words: Option<PathBuf>,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Directory written by `plan`.
    #[arg(long)]
    run_dir: PathBuf,
    /// `chat-endpoint`, `text-endpoint` or `mock:<policy>`.
    #[arg(long)]
    backend: String,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, env = "GUIDELINE_PROBE_BASE_URL")]
    base_url: Option<String>,
    /// Prompt family for text endpoints: llama2-chat or falcon-chat.
    #[arg(long)]
    family: Option<String>,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    resume: bool,
    /// Attempt at most this many tasks, leaving the rest pending.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Temperature 0 for reproducible live runs.
    #[arg(long, conflicts_with = "temperature")]
    greedy: bool,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long, default_value_t = 3)]
    max_attempts: u32,
    #[arg(long, default_value_t = 1000)]
    backoff_ms: u64,
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    /// Refusal phrase file; the shipped list when absent.
    #[arg(long)]
    refusal_phrases: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Shorthand for records and guidelines inside a run directory.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long, required_unless_present = "run_dir")]
    records: Option<PathBuf>,
    #[arg(long, required_unless_present = "run_dir")]
    guidelines: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AgreeArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Also report weighted κ over label sets, including human pairs.
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long, default_value = "chat-api")]
    family: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Rewrite the golden prompt files from the current templates.
    #[arg(long)]
    write_golden: bool,
}

enum Status {
    Ok,
    Partial,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    // clap exits with 2 on usage errors; 2 is reserved for partial runs.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<Status> {
    match command {
        Command::Guidelines(a) => guidelines(a),
        Command::Plan(a) => plan(a),
        Command::Run(a) => run(a),
        Command::Score(a) => score(a),
        Command::Agree(a) => agree(a),
        Command::DumpPrompts(a) => dump(a),
        Command::VerifyAssets(a) => verify(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn guidelines(a: GuidelinesArgs) -> Result<Status> {
    let scheme = load_scheme(&a.scheme)?;
    let base = factual(&scheme, &a.def_set)?;
    let ood = || -> Result<Guideline> {
        Ok(if a.shuffle_ood {
            substitute_ood_seeded(&base, &assets::ood_words(), a.seed)?
        } else {
            substitute_ood(&base, &assets::ood_words())?
        })
    };
    if a.degree.is_some() && a.variant != Variant::Counterfactual {
        bail!("--degree only applies to --variant counterfactual");
    }
    let out: Vec<Guideline> = match a.variant {
        Variant::Factual => vec![base.clone()],
        Variant::FactualEmpty => vec![empty_definitions(&base)?],
        Variant::Ood => vec![ood()?],
        Variant::OodEmpty => vec![empty_definitions(&ood()?)?],
        Variant::Counterfactual => {
            let k = a.degree.context("--variant counterfactual needs --degree")?;
            match a.count {
                Some(n) => sample_by_degree_with(&scheme, &a.def_set, k, n, a.seed, a.sampling.into())?,
                None => enumerate_by_degree(&scheme, k)?
                    .into_iter()
                    .map(|p| counterfactual(&scheme, &a.def_set, p))
                    .collect::<Result<_, _>>()?,
            }
        }
    };
    let records: Vec<_> = out.iter().map(Guideline::to_record).collect();
    let mut text = serde_json::to_string_pretty(&records)?;
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    eprintln!("{} guideline(s)", records.len());
    Ok(Status::Ok)
}

fn plan(a: PlanArgs) -> Result<Status> {
    let config = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let mut variants = Vec::new();
            for v in &a.variants {
                let spec = match (v.replace('-', "_").as_str(), &a.levels) {
                    ("degree_sweep", Some(levels)) => VariantSpec::DegreeSweep {
                        levels: orchestrator::parse_levels(levels).map_err(anyhow::Error::msg)?,
                        per_level: a.per_level,
                    },
                    ("degree_sweep", None) => bail!("degree_sweep needs --levels"),
                    _ => v.parse().map_err(anyhow::Error::msg)?,
                };
                variants.push(spec);
            }
            ExperimentConfig {
                scheme: a.scheme.clone().expect("required by clap"),
                def_set: a.def_set.clone(),
                dataset: a.dataset.clone().expect("required by clap"),
                per_class: a.per_class,
                seed: a.seed,
                variants,
                sampling: a.sampling.into(),
                ood_words: a.ood_words.clone(),
            }
        }
    };
    let plan = orchestrator::plan(&config)?;
    plan.write(&a.out)?;
    println!(
        "{} guidelines × {} sentences = {} tasks → {}",
        plan.guidelines.len(),
        plan.sentences.len(),
        plan.manifest.tasks.len(),
        a.out.display()
    );
    Ok(Status::Ok)
}

fn backend_config(a: &RunArgs) -> Result<BackendConfig> {
    let family = a
        .family
        .as_deref()
        .map(str::parse::<ModelFamily>)
        .transpose()?;
    let mut config = if let Some(policy) = a.backend.strip_prefix("mock:") {
        let policy: MockPolicy = policy.parse().map_err(anyhow::Error::msg)?;
        let mut c = BackendConfig::mock(policy);
        if let Some(f) = family {
            c.family = f;
        }
        c
    } else {
        let base_url = a
            .base_url
            .clone()
            .context("endpoint backends need --base-url")?;
        let model = a.model.clone().context("endpoint backends need --model")?;
        match a.backend.as_str() {
            "chat-endpoint" => BackendConfig::chat_endpoint(base_url, model),
            "text-endpoint" => BackendConfig::text_endpoint(
                base_url,
                model,
                family.context("text-endpoint needs --family llama2-chat|falcon-chat")?,
            ),
            other => bail!("unknown backend {other:?} (chat-endpoint, text-endpoint or mock:<policy>)"),
        }
    };
    if let Some(m) = &a.model {
        config.model_name = m.clone();
    }
    let defaults = if config.family == ModelFamily::ChatApi {
        GenerationParams::chat_api()
    } else {
        GenerationParams::open_model()
    };
    config.params = GenerationParams {
        temperature: a.temperature.unwrap_or(defaults.temperature),
        top_p: a.top_p.unwrap_or(defaults.top_p),
        max_new_tokens: a.max_tokens.unwrap_or(defaults.max_new_tokens),
        ..defaults
    };
    if a.greedy {
        config.params = config.params.greedy();
    }
    config.parallelism = a.parallelism;
    config.retry = RetryPolicy {
        max_attempts: a.max_attempts,
        initial_backoff_ms: a.backoff_ms,
    };
    config.timeout_ms = a.timeout_ms;
    Ok(config)
}

fn run(a: RunArgs) -> Result<Status> {
    let config = backend_config(&a)?;
    let cache = a.cache_dir.as_ref().map(ResponseCache::open).transpose()?;
    let backend = Backend::new(config, cache)?;
    let refusals = match &a.refusal_phrases {
        Some(p) => RefusalPhrases::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RefusalPhrases::default(),
    };
    let summary = orchestrator::run(
        &a.run_dir,
        &backend,
        &RunOptions {
            resume: a.resume,
            limit: a.limit,
            refusals,
        },
    )?;
    println!(
        "{} done, {} failed, {} pending of {} tasks",
        summary.done, summary.failed, summary.pending, summary.total
    );
    for f in &summary.failures {
        eprintln!("failed {} [{}]: {}", f.task_id, f.error_kind, f.message);
    }
    Ok(if summary.failed > 0 {
        Status::Partial
    } else {
        Status::Ok
    })
}

fn score(a: ScoreArgs) -> Result<Status> {
    let (records, guidelines) = match &a.run_dir {
        Some(dir) => (
            a.records.clone().unwrap_or_else(|| dir.join(RECORDS_FILE)),
            a.guidelines.clone().unwrap_or_else(|| dir.join(GUIDELINES_FILE)),
        ),
        None => (
            a.records.clone().expect("required by clap"),
            a.guidelines.clone().expect("required by clap"),
        ),
    };
    let report = orchestrator::score_files(&records, &guidelines, &a.out_dir)?;
    let fmt = |r: Option<f64>| r.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    println!(
        "accuracy {:.4} [{:.4}, {:.4}] over {} records; refusals {:.4}; unparsed {:.4}; pearson {}",
        report.accuracy.point,
        report.accuracy.lo,
        report.accuracy.hi,
        report.n_records,
        report.refusal_rate,
        report.unparsed_rate,
        fmt(report.pearson_r)
    );
    Ok(Status::Ok)
}

fn agree(a: AgreeArgs) -> Result<Status> {
    let report = orchestrator::agree_files(&a.records, &a.annotations, a.weighted)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    Ok(Status::Ok)
}

fn dump(a: DumpArgs) -> Result<Status> {
    let family: ModelFamily = a.family.parse()?;
    let n = orchestrator::dump_prompts(&a.run_dir, family, &a.out, a.limit)?;
    println!("wrote {n} prompts to {}", a.out.display());
    Ok(Status::Ok)
}

fn verify(a: VerifyArgs) -> Result<Status> {
    let dir = a.assets.clone().unwrap_or_else(assets::assets_dir);
    let bundle = AssetBundle::load(&dir)?;
    if a.write_golden {
        for path in bundle.write_golden()? {
            println!("wrote {}", path.display());
        }
        return Ok(Status::Ok);
    }
    let report = assets::verify_assets(&bundle);
    if report.is_empty() {
        println!("assets OK ({})", dir.display());
        return Ok(Status::Ok);
    }
    for v in &report {
        println!("{v}");
    }
    bail!("{} asset violation(s)", report.len())
}

//! Command-line entry points: generate items, run the MCQ or judge
//! benchmark, select the hardest pool, emit the report bundle.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error,
//! 3 invariant violation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use actubench::adapter::{
    script_adapter, AdapterBinding, ChatResponse, ModelRegistry, RateLimiter, Role,
};
use actubench::config::{ConfigError, RunConfig};
use actubench::demo::{self, DemoScripts};
use actubench::domain::{AssessmentItem, ItemId, LearningObjective, TokenUsage};
use actubench::judge::{run_judge, JudgeError, JudgeRunConfig};
use actubench::mcq::{run_mcq, McqRunConfig};
use actubench::pipeline::{Pipeline, PipelineConfig, PipelineError};
use actubench::report::write_report;
use actubench::selection::{collective_accuracy, select_hardest, SelectionManifest};
use actubench::store::StageStore;

// ---------------------------------------------------------------------------
// CLI surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "actubench", version, about = "Assessment-item generation and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the generation pipeline for a batch of items.
    Generate(GenerateArgs),
    /// Run an evaluation benchmark over stored items.
    Bench {
        #[command(subcommand)]
        mode: BenchMode,
    },
    /// Select the empirically-hardest N items from recorded answers.
    Select(SelectArgs),
    /// Emit the static report bundle from a frozen store.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML run configuration (required unless --dry-run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Items to generate.
    #[arg(long, default_value_t = 2)]
    count: u64,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file with an array of learning objectives; cycled over the batch.
    #[arg(long)]
    objectives: Option<PathBuf>,
    /// Offline mode: canned scripted adapters and wiki fixtures, no network.
    #[arg(long)]
    dry_run: bool,
    /// Store path override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent item runs.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum BenchMode {
    /// Multiple-choice benchmark.
    Mcq(BenchArgs),
    /// Free-text benchmark scored by a judge model.
    Judge(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Store holding the generated items (defaults to the config's store).
    #[arg(long)]
    store: Option<PathBuf>,
    /// Run identifier recorded in the manifest and on every answer row.
    #[arg(long)]
    run_id: Option<String>,
    /// Shuffle seed for MCQ runs.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated model keys; defaults to the config's evaluatees.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    /// Comma-separated item ids; defaults to every stored item.
    #[arg(long, value_delimiter = ',')]
    items: Vec<String>,
    /// Offline mode: scripted adapters, no network.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    store: PathBuf,
    /// Pool size to retain.
    #[arg(long)]
    n: usize,
    /// Restrict to answers from one run id.
    #[arg(long)]
    run_id: Option<String>,
    /// Manifest output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Registry CSV override; bundled registry when omitted.
    #[arg(long)]
    registry: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Error-to-exit-code mapping
// ---------------------------------------------------------------------------

enum CliError {
    Config(String),
    Runtime(String),
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Invariant(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::StateMachineViolation(_) => CliError::Invariant(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<JudgeError> for CliError {
    fn from(e: JudgeError) -> Self {
        match e {
            JudgeError::ItemOverlap(_) | JudgeError::NoModels | JudgeError::NoItems => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Bench { mode } => match mode {
            BenchMode::Mcq(args) => cmd_bench_mcq(args),
            BenchMode::Judge(args) => cmd_bench_judge(args),
        },
        Command::Select(args) => cmd_select(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

fn load_objectives(path: Option<&Path>) -> Result<Vec<LearningObjective>, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let objectives: Vec<LearningObjective> = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid objectives file: {e}")))?;
            if objectives.is_empty() {
                return Err(CliError::Config("objectives file is empty".into()));
            }
            Ok(objectives)
        }
        None => Ok(vec![demo::sample_objective()]),
    }
}

fn open_store(path: &Path) -> Result<Arc<StageStore>, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(runtime)?;
        }
    }
    Ok(Arc::new(StageStore::open(path).map_err(runtime)?))
}

fn print_run_summary(run: &actubench::pipeline::PipelineRun) {
    let stages: Vec<String> = run
        .trace
        .iter()
        .map(|s| {
            serde_json::to_value(s)
                .unwrap()
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    let flags = match (run.item.item_failure_flag, run.item.distractor_failure_flag) {
        (false, false) => "ok".to_string(),
        (i, d) => format!(
            "flagged: {}{}",
            if i { "item " } else { "" },
            if d { "distractors" } else { "" }
        ),
    };
    println!(
        "item {} [{}] {} cost {}",
        run.item.item_id,
        stages.join(" -> "),
        flags,
        run.total_cost_usd,
    );
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    if args.dry_run {
        return generate_dry_run(&args);
    }
    let config_path = args
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required without --dry-run".into()))?;
    let cfg = RunConfig::load(config_path)?;
    let registry = cfg.load_registry()?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let store = open_store(args.out.as_deref().unwrap_or(&cfg.store))?;
    let limiter = Arc::new(RateLimiter::new(cfg.limits.requests_per_minute));

    let mut bindings = std::collections::BTreeMap::new();
    for (role, key, name) in [
        (Role::AgentA, &cfg.roles.agent_a, "agent_a"),
        (Role::AgentB, &cfg.roles.agent_b, "agent_b"),
        (Role::AgentC, &cfg.roles.agent_c, "agent_c"),
        (Role::Auxiliary, &cfg.roles.auxiliary, "auxiliary"),
    ] {
        bindings.insert(role, cfg.bind_live(role, key, name, &registry, &limiter)?);
    }
    let pipeline = Arc::new(Pipeline {
        config: PipelineConfig {
            bindings,
            archetype_weights: cfg.archetype_weights_parsed()?,
            rng_seed: seed,
            wiki_per_query_limit: cfg.wiki.per_query_limit,
        },
        wiki: Arc::new(cfg.wiki_client()?),
        store: Arc::clone(&store),
    });
    let objectives = load_objectives(args.objectives.as_deref())?;
    let workers = args.workers.unwrap_or(cfg.workers).max(1);
    run_generation(pipeline, &objectives, args.count, workers)
}

fn generate_dry_run(args: &GenerateArgs) -> Result<(), CliError> {
    let seed = args.seed.unwrap_or(0);
    let store = open_store(args.out.as_deref().unwrap_or(Path::new("store.jsonl")))?;
    // One scripted run per item: cycle through the four branch shapes so a
    // dry run exercises the repair paths too.
    for i in 0..args.count {
        let scripts = match i % 4 {
            0 => DemoScripts::happy(),
            1 => DemoScripts::item_repair(true),
            2 => DemoScripts::distractor_repair(true),
            _ => DemoScripts::both_repairs(),
        };
        let pipeline = demo::build_pipeline(scripts, seed, Arc::clone(&store));
        let run = pipeline.run_item(&demo::sample_objective(), i)?;
        print_run_summary(&run);
    }
    Ok(())
}

fn run_generation(
    pipeline: Arc<Pipeline>,
    objectives: &[LearningObjective],
    count: u64,
    workers: usize,
) -> Result<(), CliError> {
    let next = AtomicU64::new(0);
    let failures = std::sync::Mutex::new(Vec::<CliError>::new());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(count as usize).max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= count {
                    break;
                }
                let objective = &objectives[(i as usize) % objectives.len()];
                match pipeline.run_item(objective, i) {
                    Ok(run) => print_run_summary(&run),
                    Err(e) => {
                        failures.lock().unwrap().push(e.into());
                        break;
                    }
                }
            });
        }
    });
    match failures.into_inner().unwrap().into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchSetup {
    store: Arc<StageStore>,
    items: Vec<AssessmentItem>,
    models: Vec<AdapterBinding>,
    cfg: Option<RunConfig>,
    registry: ModelRegistry,
}

fn parse_item_ids(raw: &[String]) -> Result<BTreeSet<ItemId>, CliError> {
    raw.iter()
        .map(|s| {
            s.parse::<uuid::Uuid>()
                .map(ItemId)
                .map_err(|e| CliError::Config(format!("invalid item id {s:?}: {e}")))
        })
        .collect()
}

fn bench_setup(args: &BenchArgs, role: Role) -> Result<BenchSetup, CliError> {
    let cfg = match &args.config {
        Some(path) => Some(RunConfig::load(path)?),
        None => None,
    };
    let registry = match &cfg {
        Some(c) => c.load_registry()?,
        None => ModelRegistry::bundled(),
    };
    let store_path = args
        .store
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.store.clone()))
        .ok_or_else(|| CliError::Config("--store or --config is required".into()))?;
    let store = open_store(&store_path)?;

    let snapshot = store.freeze().map_err(runtime)?;
    let wanted = parse_item_ids(&args.items)?;
    let mut items: Vec<AssessmentItem> = snapshot
        .items()
        .filter(|i| wanted.is_empty() || wanted.contains(&i.item_id))
        .cloned()
        .collect();
    items.sort_by_key(|i| i.item_id);
    items.dedup_by_key(|i| i.item_id);

    let model_keys: Vec<String> = if !args.models.is_empty() {
        args.models.clone()
    } else {
        cfg.as_ref()
            .map(|c| c.roles.evaluatees.clone())
            .unwrap_or_default()
    };
    if model_keys.is_empty() {
        return Err(CliError::Config(
            "no models: pass --models or configure [roles].evaluatees".into(),
        ));
    }

    let models = if args.dry_run {
        model_keys
            .iter()
            .map(|key| scripted_evaluatee(key, &registry, role, items.len()))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let c = cfg
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required without --dry-run".into()))?;
        let limiter = Arc::new(RateLimiter::new(c.limits.requests_per_minute));
        model_keys
            .iter()
            .map(|key| c.bind_live(role, key, "evaluatee", &registry, &limiter))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(BenchSetup {
        store,
        items,
        models,
        cfg,
        registry,
    })
}

/// Offline evaluatee: always answers "A" (MCQ) or a fixed sentence
/// (judge), with nominal usage so cost paths stay exercised.
fn scripted_evaluatee(
    key: &str,
    registry: &ModelRegistry,
    role: Role,
    calls: usize,
) -> Result<AdapterBinding, CliError> {
    let spec = registry
        .get(key)
        .map_err(|e| CliError::Config(e.to_string()))?
        .clone();
    let text = match role {
        Role::Evaluatee => "A",
        _ => "Final answer: see reasoning.",
    };
    Ok(script_adapter(
        role,
        spec,
        (0..calls)
            .map(|_| ChatResponse::new(text, TokenUsage::new(50, 5)))
            .collect(),
    ))
}

fn cmd_bench_mcq(args: BenchArgs) -> Result<(), CliError> {
    let setup = bench_setup(&args, Role::Evaluatee)?;
    if setup.items.is_empty() {
        return Err(CliError::Config("no items in store".into()));
    }
    let seed = args
        .seed
        .or(setup.cfg.as_ref().map(|c| c.seed))
        .unwrap_or(0);
    let run_id = args.run_id.unwrap_or_else(|| format!("mcq-{seed}"));
    let rows = run_mcq(
        &McqRunConfig::new(run_id.clone(), seed),
        &setup.models,
        &setup.items,
        &setup.store,
    )
    .map_err(runtime)?;
    println!("run {run_id}: {} answers", rows.len());
    print_bench_table(&setup.models, |key| {
        let mine: Vec<_> = rows.iter().filter(|r| r.model_key == key).cloned().collect();
        (
            actubench::mcq::accuracy(&mine),
            actubench::mcq::total_cost(&mine),
        )
    });
    Ok(())
}

fn cmd_bench_judge(args: BenchArgs) -> Result<(), CliError> {
    let setup = bench_setup(&args, Role::Evaluatee)?;
    // Items already answered under any MCQ run are off-limits: the two
    // benchmarks must stay disjoint.
    let snapshot = setup.store.freeze().map_err(runtime)?;
    let mcq_item_ids: BTreeSet<ItemId> =
        snapshot.mcq_answers().map(|a| a.item_id).collect();
    let items: Vec<AssessmentItem> = if args.items.is_empty() {
        setup
            .items
            .iter()
            .filter(|i| !mcq_item_ids.contains(&i.item_id))
            .cloned()
            .collect()
    } else {
        // An explicit item list is honored verbatim so overlap is refused,
        // not silently filtered.
        setup.items.clone()
    };
    if items.is_empty() {
        return Err(CliError::Config(
            "no judge items: every stored item is already in the MCQ set".into(),
        ));
    }

    let judge_binding = if args.dry_run {
        let key = setup
            .cfg
            .as_ref()
            .map(|c| c.roles.judge.clone())
            .unwrap_or_else(|| "openai/gpt-5-mini".to_string());
        let spec = setup
            .registry
            .get(&key)
            .map_err(|e| CliError::Config(e.to_string()))?
            .clone();
        let verdict = serde_json::json!({
            "final_answer": "see reasoning",
            "reasoning": "scripted dry-run verdict",
            "correct": "yes",
            "confidence": 100,
        })
        .to_string();
        script_adapter(
            Role::Judge,
            spec,
            (0..items.len() * setup.models.len())
                .map(|_| ChatResponse::new(verdict.as_str(), TokenUsage::new(80, 40)))
                .collect(),
        )
    } else {
        let c = setup
            .cfg
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required without --dry-run".into()))?;
        let limiter = Arc::new(RateLimiter::new(c.limits.requests_per_minute));
        c.bind_live(Role::Judge, &c.roles.judge, "judge", &setup.registry, &limiter)?
    };

    let mut run_cfg = JudgeRunConfig::new(
        args.run_id.unwrap_or_else(|| "judge-0".to_string()),
    );
    run_cfg.mcq_item_ids = mcq_item_ids;
    let outcome = run_judge(
        &run_cfg,
        &setup.models,
        &judge_binding,
        &items,
        &setup.store,
    )?;
    println!(
        "run {}: {} answers, {} judge parse failures",
        run_cfg.run_id,
        outcome.rows.len(),
        outcome.parse_failures
    );
    if !outcome.off_archetype_items.is_empty() {
        eprintln!(
            "warning: {} item(s) outside the quantitative-calculation archetype",
            outcome.off_archetype_items.len()
        );
    }
    print_bench_table(&setup.models, |key| {
        let mine: Vec<_> = outcome
            .rows
            .iter()
            .filter(|r| r.model_key == key)
            .cloned()
            .collect();
        (
            actubench::judge::accuracy(&mine),
            actubench::judge::total_cost(&mine),
        )
    });
    Ok(())
}

fn print_bench_table<F>(models: &[AdapterBinding], stats: F)
where
    F: Fn(&str) -> (f64, actubench::money::Usd),
{
    println!("{:<40} {:>10} {:>12}", "model", "accuracy", "cost USD");
    for binding in models {
        let key = binding.model.model_key();
        let (acc, cost) = stats(&key);
        println!("{key:<40} {:>9.1}% {:>12}", acc * 100.0, cost.to_fixed(4));
    }
}

// ---------------------------------------------------------------------------
// select / report
// ---------------------------------------------------------------------------

fn cmd_select(args: SelectArgs) -> Result<(), CliError> {
    let store = open_store(&args.store)?;
    let snapshot = store.freeze().map_err(runtime)?;
    let answers: Vec<_> = snapshot
        .mcq_answers()
        .filter(|a| args.run_id.as_ref().is_none_or(|r| &a.run_id == r))
        .cloned()
        .collect();
    if answers.is_empty() {
        return Err(CliError::Config("no MCQ answers to rank items by".into()));
    }
    let accuracies = collective_accuracy(&answers).map_err(runtime)?;
    let selected = select_hardest(&accuracies, args.n)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let manifest = SelectionManifest::new(snapshot.snapshot_id(), args.n, selected);
    let text = serde_json::to_string_pretty(&manifest.to_json()).unwrap();
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(runtime)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let store = open_store(&args.store)?;
    let snapshot = store.freeze().map_err(runtime)?;
    let registry = match &args.registry {
        Some(path) => ModelRegistry::from_csv_path(path)
            .map_err(|e| CliError::Config(e.to_string()))?,
        None => ModelRegistry::bundled(),
    };
    write_report(&snapshot, &args.out, &registry).map_err(runtime)?;
    println!(
        "report for snapshot {} written to {}",
        snapshot.snapshot_id(),
        args.out.display()
    );
    Ok(())
}

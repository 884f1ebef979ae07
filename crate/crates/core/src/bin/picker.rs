//! Command-line front end: instance generation, solving with any method,
//! policy training, and benchmark evaluation.
//!
//! Exit codes: 0 on success, 2 on any contract or configuration violation.
//! The `PICKER_THREADS` environment variable caps the evaluation thread
//! pool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use picker_core::eval::{evaluate, EvalConfig, Method};
use picker_core::exact::solve_optimal;
use picker_core::heuristics::{solve_heuristic, HeuristicKind};
use picker_core::policy::{decode, DecodeMode, PolicyParameters};
use picker_core::tensor::AdamConfig;
use picker_core::train::{train, TrainConfig, TrainOptions};
use picker_core::warehouse::{
    generate_instance, DistributionMode, GeometrySpec, Instance, ProblemClass,
};
use rand::SeedableRng;

#[derive(Parser)]
#[command(
    name = "picker",
    about = "Warehouse picker routing: exact DP, heuristics, and a learned attention policy"
)]
struct Cli {
    /// JSON file overriding built-in defaults (geometry, distribution,
    /// optimizer, evaluation size).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random instances for one problem class.
    Generate(GenerateArgs),
    /// Solve a stored instance with one method.
    Solve(SolveArgs),
    /// Train the attention policy with REINFORCE.
    Train(TrainArgs),
    /// Benchmark methods by optimality gap across problem classes.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Problem class as "aisles,items", e.g. "5,30".
    #[arg(long = "class")]
    class: String,
    /// Item distribution: normal or uniform.
    #[arg(long, default_value = "normal")]
    dist: String,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (multiple instances) or file (single instance).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// optimal | sshape | return | largestgap | composite | model
    #[arg(long)]
    method: String,
    #[arg(long)]
    instance: PathBuf,
    /// Trained weights; required for the model method.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Print the tour as "aisle vertical horizontal cost" lines.
    #[arg(long)]
    dump_route: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// standard | simplified | desk
    #[arg(long)]
    preset: String,
    /// JSON file with partial overrides of the preset.
    #[arg(long)]
    overrides: Option<PathBuf>,
    #[arg(long)]
    out_weights: PathBuf,
    /// Step history CSV (defaults to the weights path with .csv).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Directory receiving one checkpoint per epoch.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Comma-separated methods, e.g. "optimal,sshape,model".
    #[arg(long)]
    methods: String,
    /// Semicolon-separated classes ("5,30;10,45") or "all" for the
    /// standard 30-class grid.
    #[arg(long)]
    classes: String,
    /// Item distribution for generated instances: normal or uniform.
    #[arg(long, default_value = "normal")]
    dist: String,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instances per class.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Write the deterministic CSV report here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the markdown report (with runtimes) here.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

/// Optional defaults loaded from `--config`.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    geometry: Option<GeometrySpec>,
    sigma_ratio: Option<f64>,
    adam: Option<AdamConfig>,
    instances_per_class: Option<usize>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(ConfigFile::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
            }
        }
    }

    fn geometry(&self) -> GeometrySpec {
        self.geometry.clone().unwrap_or_default()
    }

    fn mode(&self, dist: &str) -> Result<DistributionMode> {
        match dist.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(match self.sigma_ratio {
                Some(sigma_ratio) => DistributionMode::Normal { sigma_ratio },
                None => DistributionMode::normal(),
            }),
            "uniform" => Ok(DistributionMode::Uniform),
            other => bail!("unknown distribution {other}; expected normal or uniform"),
        }
    }
}

fn parse_class(text: &str, mode: DistributionMode) -> Result<ProblemClass> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("class must be \"aisles,items\", got {text}");
    }
    let n_aisles = parts[0].parse().context("parsing aisle count")?;
    let items = parts[1].parse().context("parsing item count")?;
    Ok(ProblemClass::new(n_aisles, items, mode))
}

fn parse_classes(text: &str, mode: DistributionMode) -> Result<Vec<ProblemClass>> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(ProblemClass::standard_grid(mode));
    }
    text.split(';')
        .filter(|part| !part.trim().is_empty())
        .map(|part| parse_class(part, mode))
        .collect()
}

fn load_weights(path: &Path) -> Result<PolicyParameters> {
    PolicyParameters::load(path).map_err(|e| anyhow!("loading weights {}: {e}", path.display()))
}

fn run_generate(args: &GenerateArgs, config: &ConfigFile) -> Result<()> {
    let mode = config.mode(&args.dist)?;
    let class = parse_class(&args.class, mode)?;
    let geometry = config.geometry();
    if args.count == 1 && args.out.extension().is_some() {
        let inst = generate_instance(&class, &geometry, args.seed)?;
        inst.save(&args.out)?;
        println!("{}", args.out.display());
        return Ok(());
    }
    std::fs::create_dir_all(&args.out)?;
    for i in 0..args.count {
        let seed = args.seed.wrapping_add(i as u64);
        let inst = generate_instance(&class, &geometry, seed)?;
        let path = args.out.join(format!("{}_{seed}.json", class.label()));
        inst.save(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run_solve(args: &SolveArgs) -> Result<()> {
    let method = Method::parse(&args.method)?;
    let inst = Instance::load(&args.instance)?;
    let seq = inst.aisle_sequence();
    let rollout = match method {
        Method::Optimal => solve_optimal(&inst).1,
        Method::SShape => solve_heuristic(HeuristicKind::SShape, &seq),
        Method::Return => solve_heuristic(HeuristicKind::Return, &seq),
        Method::LargestGap => solve_heuristic(HeuristicKind::LargestGap, &seq),
        Method::Composite => solve_heuristic(HeuristicKind::Composite, &seq),
        Method::Model => {
            let path = args
                .weights
                .as_ref()
                .ok_or_else(|| anyhow!("--weights is required for the model method"))?;
            let params = load_weights(path)?;
            if params.config.slot_dim != inst.geometry.slots_per_aisle {
                bail!(
                    "weights expect {} slots per aisle, instance has {}",
                    params.config.slot_dim,
                    inst.geometry.slots_per_aisle
                );
            }
            let mut rng = rand::rngs::StdRng::seed_from_u64(0);
            decode(&params, &seq, DecodeMode::Greedy, &mut rng)
        }
    };
    if args.dump_route {
        print!("{}", rollout.dump(&seq));
    } else {
        println!("length {}", rollout.total_length);
    }
    Ok(())
}

/// Optional per-field overrides applied on top of a preset.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainOverrides {
    epochs: Option<usize>,
    steps_per_epoch: Option<usize>,
    batch_size: Option<usize>,
    significance: Option<f64>,
    eval_instances: Option<usize>,
    learning_rate: Option<f64>,
    hidden_dim: Option<usize>,
    num_heads: Option<usize>,
    num_layers: Option<usize>,
    classes: Option<Vec<[usize; 2]>>,
}

fn run_train(args: &TrainArgs, config: &ConfigFile) -> Result<()> {
    let seed = args.seed.unwrap_or(0);
    let mut cfg = match args.preset.as_str() {
        "standard" => TrainConfig::standard(seed),
        "simplified" => TrainConfig::simplified(seed),
        "desk" => TrainConfig::desk(seed),
        other => bail!("unknown preset {other}; expected standard, simplified, or desk"),
    };
    cfg.geometry = config.geometry();
    if let Some(adam) = config.adam {
        cfg.adam = adam;
    }
    if let Some(path) = &args.overrides {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading overrides {}", path.display()))?;
        let over: TrainOverrides = serde_json::from_str(&text)
            .with_context(|| format!("parsing overrides {}", path.display()))?;
        if let Some(v) = over.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = over.steps_per_epoch {
            cfg.steps_per_epoch = v;
        }
        if let Some(v) = over.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = over.significance {
            cfg.significance = v;
        }
        if let Some(v) = over.eval_instances {
            cfg.eval_instances = v;
        }
        if let Some(v) = over.learning_rate {
            cfg.adam.learning_rate = v;
        }
        if let Some(v) = over.hidden_dim {
            cfg.model.hidden_dim = v;
            cfg.model.feed_forward_dim = 4 * v;
        }
        if let Some(v) = over.num_heads {
            cfg.model.num_heads = v;
        }
        if let Some(v) = over.num_layers {
            cfg.model.num_layers = v;
        }
        if let Some(classes) = over.classes {
            let mode = picker_core::warehouse::DistributionMode::normal();
            cfg.classes = classes
                .iter()
                .map(|[a, m]| ProblemClass::new(*a, *m, mode))
                .collect();
        }
    }
    cfg.model.slot_dim = cfg.geometry.slots_per_aisle;

    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| args.out_weights.with_extension("csv"));
    let options = TrainOptions {
        history_path: Some(history_path.clone()),
        checkpoint_dir: args.checkpoint_dir.clone(),
    };
    eprintln!(
        "training preset {} for {} epochs x {} steps (batch {})",
        args.preset, cfg.epochs, cfg.steps_per_epoch, cfg.batch_size
    );
    let start = std::time::Instant::now();
    let (params, history) = train(&cfg, &options)?;
    params.save(&args.out_weights)?;
    let updates = history.epochs.last().map(|e| e.gate_updates).unwrap_or(0);
    eprintln!(
        "trained in {:.1}s, {updates} baseline updates; weights at {}, history at {}",
        start.elapsed().as_secs_f64(),
        args.out_weights.display(),
        history_path.display()
    );
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs, config: &ConfigFile) -> Result<()> {
    let mode = config.mode(&args.dist)?;
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| Method::parse(part).map_err(Into::into))
        .collect::<Result<_>>()?;
    let classes = parse_classes(&args.classes, mode)?;
    let weights = match &args.weights {
        Some(path) => Some(load_weights(path)?),
        None => None,
    };
    let cfg = EvalConfig {
        instances_per_class: config.instances_per_class.unwrap_or(args.count),
        seed: args.seed,
        geometry: config.geometry(),
    };
    let report = evaluate(&methods, &classes, &cfg, weights.as_ref())?;
    if let Some(path) = &args.csv {
        std::fs::write(path, report.to_csv())?;
        eprintln!("csv report at {}", path.display());
    }
    if let Some(path) = &args.markdown {
        std::fs::write(path, report.to_markdown())?;
        eprintln!("markdown report at {}", path.display());
    }
    if args.csv.is_none() && args.markdown.is_none() {
        print!("{}", report.to_markdown());
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("PICKER_THREADS") {
        let threads: usize = threads
            .parse()
            .context("PICKER_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let config = ConfigFile::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Generate(args) => run_generate(args, &config),
        Command::Solve(args) => run_solve(args),
        Command::Train(args) => run_train(args, &config),
        Command::Evaluate(args) => run_evaluate(args, &config),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

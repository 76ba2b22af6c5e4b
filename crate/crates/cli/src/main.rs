//! Command-line entry point for the assembly-planning experiments: task
//! validation and generation, training runs, greedy and perturbed
//! evaluation, the exact-steps oracle, and the multi-seed suite.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid task or configuration,
//! 3 runtime failure.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use stackq_core::env::EnvConfig;
use stackq_core::error::Error as CoreError;
use stackq_core::harness::{
    generate_task, optimal_steps_oracle, run_experiment_suite, run_perturbed_eval,
    write_metrics_csv, write_timings_csv, PerturbationSchedule, SuiteConfig, TaskGenSpec,
};
use stackq_core::learning::{
    evaluate, Algorithm, Checkpoint, EpisodeMetrics, TrainConfig, Trainer,
};
use stackq_core::task::AssemblyTask;

#[derive(Parser)]
#[command(
    name = "stackq",
    version,
    about = "Two-robot assembly planning: Stackelberg deep Q-learning and baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a task file and print its shape.
    Validate(ValidateArgs),
    /// Train both agents on a task and write a run directory.
    Train(TrainArgs),
    /// Evaluate a run's checkpoint greedily.
    Eval(EvalArgs),
    /// Evaluate a run's checkpoint under forced-idle perturbations.
    Perturb(PerturbArgs),
    /// Exact minimal completion steps with a witness schedule.
    Oracle(OracleArgs),
    /// Generate a random task file.
    Gen(GenArgs),
    /// Train and evaluate a grid of tasks, algorithms, and seeds.
    Suite(SuiteArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Task file.
    task: PathBuf,
}

#[derive(Args, Clone)]
struct EnvOverrides {
    /// Episode step budget.
    #[arg(long)]
    max_steps: Option<u32>,
    /// Solo success probability.
    #[arg(long)]
    p_individual: Option<f64>,
    /// Joint success probability.
    #[arg(long)]
    p_cooperative: Option<f64>,
    /// Reward for a successful joint selection.
    #[arg(long)]
    r_cop: Option<f64>,
    /// Reward for a successful solo selection.
    #[arg(long)]
    r_ind: Option<f64>,
    /// Penalty for wrong or blocked selections.
    #[arg(long)]
    r_cost: Option<f64>,
    /// Make every attempted sub-task succeed.
    #[arg(long)]
    deterministic: bool,
}

impl EnvOverrides {
    fn apply(&self, mut config: EnvConfig) -> EnvConfig {
        if let Some(v) = self.max_steps {
            config.max_steps = v;
        }
        if let Some(v) = self.p_individual {
            config.p_individual = v;
        }
        if let Some(v) = self.p_cooperative {
            config.p_cooperative = v;
        }
        if let Some(v) = self.r_cop {
            config.r_cop = v;
        }
        if let Some(v) = self.r_ind {
            config.r_ind = v;
        }
        if let Some(v) = self.r_cost {
            config.r_cost = v;
        }
        if self.deterministic {
            config.deterministic = true;
        }
        config
    }
}

#[derive(Args, Clone)]
struct TrainOverrides {
    /// Training episodes.
    #[arg(long)]
    episodes: Option<u32>,
    /// Discount factor.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon_start: Option<f64>,
    #[arg(long)]
    epsilon_end: Option<f64>,
    /// Fraction of episodes over which epsilon decays.
    #[arg(long)]
    epsilon_fraction: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Soft-update retention.
    #[arg(long)]
    tau: Option<f64>,
    /// Steps between soft target updates.
    #[arg(long)]
    target_period: Option<u32>,
    /// Hidden layer sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
}

impl TrainOverrides {
    fn apply(&self, mut config: TrainConfig) -> TrainConfig {
        if let Some(v) = self.episodes {
            config.episodes = v;
        }
        if let Some(v) = self.gamma {
            config.gamma = v;
        }
        if let Some(v) = self.epsilon_start {
            config.epsilon_start = v;
        }
        if let Some(v) = self.epsilon_end {
            config.epsilon_end = v;
        }
        if let Some(v) = self.epsilon_fraction {
            config.epsilon_fraction = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.buffer_capacity {
            config.buffer_capacity = v;
        }
        if let Some(v) = self.lr {
            config.learning_rate = v;
        }
        if let Some(v) = self.tau {
            config.tau = v;
        }
        if let Some(v) = self.target_period {
            config.target_period = v;
        }
        if let Some(v) = &self.hidden {
            config.hidden_sizes = v.clone();
        }
        config
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Task file.
    task: PathBuf,
    /// Algorithm: sg, nash, or ind.
    #[arg(long, default_value = "sg", value_parser = parse_algorithm)]
    algo: Algorithm,
    /// Training seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replay a saved run config instead of flags.
    #[arg(long, conflicts_with_all = [
        "algo", "seed", "episodes", "gamma", "epsilon_start", "epsilon_end",
        "epsilon_fraction", "batch_size", "buffer_capacity", "lr", "tau",
        "target_period", "hidden", "max_steps", "p_individual", "p_cooperative",
        "r_cop", "r_ind", "r_cost", "deterministic",
    ])]
    config: Option<PathBuf>,
    /// Run directory (default: <output root>/<task>/<algo>-seed<seed>).
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOverrides,
    #[command(flatten)]
    env: EnvOverrides,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory holding checkpoint.json.
    run_dir: PathBuf,
    /// Task file.
    task: PathBuf,
    /// Evaluation episodes.
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Evaluation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    env: EnvOverrides,
}

#[derive(Args)]
struct PerturbArgs {
    /// Run directory holding checkpoint.json.
    run_dir: PathBuf,
    /// Task file.
    task: PathBuf,
    /// Forced-idle schedule, e.g. L:1,L:4,F:6,F:8.
    #[arg(long, value_parser = parse_schedule)]
    schedule: PerturbationSchedule,
    /// Number of rollouts.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Rollout seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the environment stochastic instead of deterministic.
    #[arg(long)]
    stochastic: bool,
    #[command(flatten)]
    env: EnvOverrides,
}

#[derive(Args)]
struct OracleArgs {
    /// Task file.
    task: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Output task file.
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    columns: u8,
    #[arg(long, default_value_t = 18)]
    subtasks: usize,
    /// Relative weights for types 1..4, comma separated.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Column height cap.
    #[arg(long)]
    rows: Option<u16>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SuiteArgs {
    /// Task files.
    tasks: Vec<PathBuf>,
    /// Algorithms, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "sg,nash,ind", value_parser = parse_algorithm)]
    algos: Vec<Algorithm>,
    /// Seeds per (task, algorithm) cell.
    #[arg(long, default_value_t = 3)]
    seeds: u32,
    /// First seed; cell k uses seed_base + k.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, default_value_t = 100)]
    eval_episodes: usize,
    #[arg(long, default_value_t = 1)]
    eval_seed: u64,
    /// Output directory (default: <output root>/suite).
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOverrides,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, CoreError> {
    Algorithm::from_str(s)
}

fn parse_schedule(s: &str) -> Result<PerturbationSchedule, CoreError> {
    PerturbationSchedule::from_str(s)
}

fn out_root() -> PathBuf {
    std::env::var_os("STACKQ_OUT").map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Full reproduction record of one training run; replayed via `--config`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    algorithm: Algorithm,
    env: EnvConfig,
    train: TrainConfig,
}

#[derive(Serialize)]
struct WindowStats {
    episodes: usize,
    mean_steps: f64,
    completion_rate: f64,
    mean_avg_reward_leader: f64,
    mean_avg_reward_follower: f64,
}

impl WindowStats {
    fn over(metrics: &[EpisodeMetrics]) -> WindowStats {
        let n = metrics.len().max(1) as f64;
        WindowStats {
            episodes: metrics.len(),
            mean_steps: metrics.iter().map(|m| m.steps as f64).sum::<f64>() / n,
            completion_rate: metrics.iter().filter(|m| m.completed).count() as f64 / n,
            mean_avg_reward_leader: metrics.iter().map(|m| m.avg_reward_leader).sum::<f64>() / n,
            mean_avg_reward_follower: metrics.iter().map(|m| m.avg_reward_follower).sum::<f64>()
                / n,
        }
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    task: &'a str,
    algorithm: Algorithm,
    seed: u64,
    episodes: u32,
    final_100: WindowStats,
    nash_fallbacks_total: usize,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Validation(_) | CoreError::Config(_) | CoreError::Parse(_)) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Perturb(args) => cmd_perturb(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Suite(args) => cmd_suite(args),
    }
}

fn load_task(path: &Path) -> anyhow::Result<AssemblyTask> {
    Ok(AssemblyTask::load(path)?)
}

fn load_checkpoint(run_dir: &Path) -> anyhow::Result<Checkpoint> {
    let path = run_dir.join("checkpoint.json");
    if !path.exists() {
        return Err(CoreError::Validation(format!(
            "checkpoint not found: {}",
            path.display()
        ))
        .into());
    }
    Ok(Checkpoint::load(&path)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<()> {
    let task = load_task(&args.task)?;
    let mut counts = [0usize; 4];
    for st in task.subtasks() {
        counts[st.task_type.code() as usize - 1] += 1;
    }
    println!(
        "task {}: {} columns, {} sub-tasks, {} edges",
        task.name(),
        task.n_columns(),
        task.n_subtasks(),
        task.edges().len()
    );
    println!(
        "types: {} leader-only, {} follower-only, {} either, {} joint",
        counts[0], counts[1], counts[2], counts[3]
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let task = load_task(&args.task)?;
    let (algorithm, env_config, train_config) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CoreError::Validation(format!("{}: {e}", path.display())))?;
            let file: RunConfigFile = serde_json::from_str(&text)
                .map_err(|e| CoreError::Parse(format!("{}: {e}", path.display())))?;
            (file.algorithm, file.env, file.train)
        }
        None => {
            let env_config = args.env.apply(EnvConfig::for_task(&task));
            let train_config =
                args.train.apply(TrainConfig { seed: args.seed, ..TrainConfig::default() });
            (args.algo, env_config, train_config)
        }
    };
    env_config.validate()?;
    train_config.validate()?;

    let run_dir = args.out.clone().unwrap_or_else(|| {
        out_root()
            .join(task.name())
            .join(format!("{algorithm}-seed{}", train_config.seed))
    });
    std::fs::create_dir_all(&run_dir)?;
    let snapshot = RunConfigFile {
        algorithm,
        env: env_config.clone(),
        train: train_config.clone(),
    };
    write_json(&run_dir.join("config.json"), &snapshot)?;
    std::fs::write(run_dir.join("task.json"), task.to_json_string())?;

    let total = train_config.episodes;
    let mut trainer = Trainer::new(task.clone(), env_config, train_config.clone(), algorithm)?;
    let mut metrics: Vec<EpisodeMetrics> = Vec::with_capacity(total as usize);
    let started = Instant::now();
    while let Some(m) = trainer.run_episode()? {
        if m.episode % 500 == 0 || m.episode == total {
            let window = &metrics[metrics.len().saturating_sub(99)..];
            let mean: f64 = window.iter().map(|w| w.steps as f64).sum::<f64>() / window.len().max(1) as f64;
            eprintln!(
                "episode {}/{total}  steps {}  mean(100) {mean:.1}  epsilon {:.3}  [{:.0}s]",
                m.episode,
                m.steps,
                m.epsilon,
                started.elapsed().as_secs_f64()
            );
        }
        metrics.push(m);
    }

    write_metrics_csv(&run_dir.join("metrics.csv"), &metrics)?;
    write_timings_csv(&run_dir.join("timings.csv"), &metrics)?;
    trainer.checkpoint().save(&run_dir.join("checkpoint.json"))?;
    let tail = &metrics[metrics.len().saturating_sub(100)..];
    let summary = TrainSummary {
        task: task.name(),
        algorithm,
        seed: train_config.seed,
        episodes: total,
        final_100: WindowStats::over(tail),
        nash_fallbacks_total: metrics.iter().map(|m| m.nash_fallbacks).sum(),
    };
    write_json(&run_dir.join("summary.json"), &summary)?;
    let last = WindowStats::over(tail);
    println!("run directory: {}", run_dir.display());
    println!(
        "final 100 episodes: mean steps {:.2}, completion rate {:.2}, avg reward L {:.3} / F {:.3}",
        last.mean_steps,
        last.completion_rate,
        last.mean_avg_reward_leader,
        last.mean_avg_reward_follower
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let task = load_task(&args.task)?;
    let model = load_checkpoint(&args.run_dir)?.model()?;
    let env_config = args.env.apply(EnvConfig::for_task(&task));
    env_config.validate()?;
    let mut rng = seeded_rng(args.seed);
    let eval = evaluate(&model, &task, &env_config, args.episodes, &mut rng)?;
    write_json(&args.run_dir.join("eval.json"), &eval)?;
    println!("episodes         {}", eval.n_episodes);
    println!("completion rate  {:.3}", eval.completion_rate);
    println!("steps            {:.3}({:.3})", eval.mean_steps, eval.std_steps);
    println!(
        "leader reward    {:.3}({:.3})",
        eval.mean_avg_reward_leader, eval.std_avg_reward_leader
    );
    println!(
        "follower reward  {:.3}({:.3})",
        eval.mean_avg_reward_follower, eval.std_avg_reward_follower
    );
    Ok(())
}

fn cmd_perturb(args: PerturbArgs) -> anyhow::Result<()> {
    let task = load_task(&args.task)?;
    let model = load_checkpoint(&args.run_dir)?.model()?;
    let mut env_config = args.env.apply(EnvConfig::for_task(&task));
    if !args.stochastic {
        env_config.deterministic = true;
    }
    env_config.validate()?;
    let mut rng = seeded_rng(args.seed);
    let report =
        run_perturbed_eval(&model, &task, &env_config, &args.schedule, args.runs, &mut rng)?;
    write_json(&args.run_dir.join("perturb.json"), &report)?;
    println!("schedule         {}", args.schedule);
    println!("runs             {}", report.n_runs);
    println!("completion rate  {:.3}", report.completion_rate);
    println!("steps            {:.3}({:.3})", report.mean_steps, report.std_steps);
    for (i, run) in report.runs.iter().enumerate() {
        println!(
            "run {:>3}: steps {:>3}  completed {}  reward L {:.2} / F {:.2}",
            i + 1,
            run.steps,
            run.completed,
            run.cum_reward_leader,
            run.cum_reward_follower
        );
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<()> {
    let task = load_task(&args.task)?;
    let solution = optimal_steps_oracle(&task)?;
    println!("task {}: optimal completion steps {}", task.name(), solution.steps);
    for (i, joint) in solution.schedule.iter().enumerate() {
        println!("step {:>2}: leader={} follower={}", i + 1, joint.leader, joint.follower);
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<()> {
    let mut spec = TaskGenSpec {
        n_columns: args.columns,
        n_subtasks: args.subtasks,
        rows: args.rows,
        seed: args.seed,
        ..TaskGenSpec::default()
    };
    if let Some(weights) = &args.weights {
        if weights.len() != 4 {
            return Err(CoreError::Config(format!(
                "--weights needs exactly 4 values, got {}",
                weights.len()
            ))
            .into());
        }
        spec.type_weights = [weights[0], weights[1], weights[2], weights[3]];
    }
    let task = generate_task(&spec)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    task.save(&args.out)?;
    println!(
        "wrote {} ({} sub-tasks, {} columns)",
        args.out.display(),
        task.n_subtasks(),
        task.n_columns()
    );
    Ok(())
}

fn cmd_suite(args: SuiteArgs) -> anyhow::Result<()> {
    let mut tasks = Vec::with_capacity(args.tasks.len());
    for path in &args.tasks {
        let task = load_task(path)?;
        tasks.push((task.name().to_string(), task));
    }
    let out_dir = args.out.clone().unwrap_or_else(|| out_root().join("suite"));
    let config = SuiteConfig {
        algorithms: args.algos.clone(),
        n_seeds: args.seeds,
        seed_base: args.seed_base,
        train: args.train.apply(TrainConfig::default()),
        eval_episodes: args.eval_episodes,
        eval_seed: args.eval_seed,
        out_dir: Some(out_dir.clone()),
        ..SuiteConfig::new(tasks)
    };
    let started = Instant::now();
    let results = run_experiment_suite(&config)?;
    eprintln!(
        "{} cells trained in {:.0}s; outputs in {}",
        results.cells.len(),
        started.elapsed().as_secs_f64(),
        out_dir.display()
    );
    print!("{}", results.table);
    Ok(())
}

fn seeded_rng(seed: u64) -> impl rand::Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

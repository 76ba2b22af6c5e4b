//! Experiment plumbing around the trainer: an exact completion-steps oracle
//! with a replanning policy built on it, the forced-idle perturbation
//! protocol, a random task generator, and a multi-seed experiment suite
//! that renders aggregate tables.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{self, EnvConfig, JointAction};
use crate::error::{Error, Result};
use crate::learning::{
    evaluate, mean_std, Algorithm, EpisodeMetrics, EvalMetrics, TrainConfig, TrainedModel, Trainer,
};
use crate::task::{
    Action, AgentId, AssemblyTask, ChessboardState, SubTaskId, TaskSet, MAX_SUBTASKS,
};

/// Visited-state cap for exhaustive searches.
const ORACLE_STATE_BUDGET: usize = 1 << 22;
/// Exhaustive search is only attempted for tasks up to this size.
const ORACLE_MAX_SUBTASKS: usize = 30;
/// Generator retries before a spec is declared infeasible.
const GEN_ATTEMPTS: usize = 50;

fn oracle_env(task: &AssemblyTask) -> EnvConfig {
    EnvConfig { deterministic: true, ..EnvConfig::for_task(task) }
}

fn state_for(task: &AssemblyTask, completed: TaskSet) -> ChessboardState {
    ChessboardState { frontier: task.frontier_for(completed), completed, step_index: 0 }
}

/// Joint actions that change the completed set under deterministic
/// dynamics, each with the set it leads to, in joint-index order.
fn productive_moves(
    task: &AssemblyTask,
    config: &EnvConfig,
    completed: TaskSet,
) -> Result<Vec<(JointAction, TaskSet)>> {
    let n = task.n_columns();
    let side = n as usize + 1;
    let state = state_for(task, completed);
    // Deterministic dynamics consume no randomness.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut moves = Vec::new();
    for idx in 0..side * side {
        let joint = JointAction::from_index(idx, n);
        let outcome = env::step(&state, task, &joint, config, &mut rng)?;
        let next = outcome.next_state.completed;
        if next != completed {
            moves.push((joint, next));
        }
    }
    Ok(moves)
}

fn check_oracle_size(task: &AssemblyTask) -> Result<()> {
    if task.n_subtasks() > ORACLE_MAX_SUBTASKS {
        return Err(Error::Budget(format!(
            "exhaustive search handles at most {ORACLE_MAX_SUBTASKS} sub-tasks, task '{}' has {}",
            task.name(),
            task.n_subtasks()
        )));
    }
    Ok(())
}

/// Minimal completion schedule found by exhaustive search.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub steps: u32,
    /// Witness: replaying these joint actions from the initial state in the
    /// deterministic environment completes the task in exactly `steps`.
    pub schedule: Vec<JointAction>,
}

/// Exact minimum number of joint steps to complete `task` under
/// deterministic dynamics, via breadth-first search over completed sets.
pub fn optimal_steps_oracle(task: &AssemblyTask) -> Result<OracleSolution> {
    check_oracle_size(task)?;
    let config = oracle_env(task);
    let full = task.full_set();
    let start = TaskSet::EMPTY;
    if start == full {
        return Ok(OracleSolution { steps: 0, schedule: Vec::new() });
    }
    let mut dist: HashMap<TaskSet, u32> = HashMap::new();
    let mut parent: HashMap<TaskSet, (TaskSet, JointAction)> = HashMap::new();
    dist.insert(start, 0);
    let mut queue = VecDeque::from([start]);
    while let Some(mask) = queue.pop_front() {
        let d = dist[&mask];
        for (joint, next) in productive_moves(task, &config, mask)? {
            if dist.contains_key(&next) {
                continue;
            }
            if dist.len() >= ORACLE_STATE_BUDGET {
                return Err(Error::Budget(format!(
                    "more than {ORACLE_STATE_BUDGET} completed-set states visited"
                )));
            }
            dist.insert(next, d + 1);
            parent.insert(next, (mask, joint));
            if next == full {
                let mut schedule = Vec::new();
                let mut cur = next;
                while cur != start {
                    let (prev, joint) = parent[&cur];
                    schedule.push(joint);
                    cur = prev;
                }
                schedule.reverse();
                return Ok(OracleSolution { steps: d + 1, schedule });
            }
            queue.push_back(next);
        }
    }
    Err(Error::Infeasible(format!(
        "task '{}' cannot be completed from its initial state",
        task.name()
    )))
}

/// Replanning policy from the oracle's distance-to-completion table: at any
/// reachable state it plays the first joint action (in index order) on a
/// shortest completion path, so it recovers after perturbations instead of
/// replaying a fixed schedule.
#[derive(Clone, Debug)]
pub struct OraclePolicy {
    dist: HashMap<TaskSet, u32>,
}

impl OraclePolicy {
    pub fn for_task(task: &AssemblyTask) -> Result<OraclePolicy> {
        check_oracle_size(task)?;
        let config = oracle_env(task);
        let full = task.full_set();
        let mut moves_of: HashMap<TaskSet, Vec<(JointAction, TaskSet)>> = HashMap::new();
        let mut queue = VecDeque::from([TaskSet::EMPTY]);
        while let Some(mask) = queue.pop_front() {
            if moves_of.contains_key(&mask) {
                continue;
            }
            if moves_of.len() >= ORACLE_STATE_BUDGET {
                return Err(Error::Budget(format!(
                    "more than {ORACLE_STATE_BUDGET} completed-set states visited"
                )));
            }
            let moves = if mask == full {
                Vec::new()
            } else {
                productive_moves(task, &config, mask)?
            };
            for &(_, next) in &moves {
                if !moves_of.contains_key(&next) {
                    queue.push_back(next);
                }
            }
            moves_of.insert(mask, moves);
        }

        // Productive moves strictly grow the completed set, so distances are
        // well defined by backward induction over decreasing set size.
        let mut masks: Vec<TaskSet> = moves_of.keys().copied().collect();
        masks.sort_by_key(|m| std::cmp::Reverse(m.bits().count_ones()));
        let mut dist: HashMap<TaskSet, u32> = HashMap::new();
        for mask in masks {
            if mask == full {
                dist.insert(mask, 0);
                continue;
            }
            let best = moves_of[&mask]
                .iter()
                .filter_map(|(_, next)| dist.get(next))
                .min()
                .copied();
            match best {
                Some(d) => {
                    dist.insert(mask, d + 1);
                }
                None => {
                    return Err(Error::Infeasible(format!(
                        "task '{}' deadlocks at completed set {:?}",
                        task.name(),
                        mask
                    )))
                }
            }
        }
        Ok(OraclePolicy { dist })
    }

    /// Remaining steps to completion from a completed set, when reachable.
    pub fn distance(&self, completed: TaskSet) -> Option<u32> {
        self.dist.get(&completed).copied()
    }

    /// First joint action (in index order) that reduces the distance to
    /// completion; the idle pair once the task is complete.
    pub fn action(&self, state: &ChessboardState, task: &AssemblyTask) -> Result<JointAction> {
        let here = self.dist.get(&state.completed).copied().ok_or_else(|| {
            Error::Validation("state is not reachable from the task's initial state".into())
        })?;
        if here == 0 {
            return Ok(JointAction::new(Action::Idle, Action::Idle));
        }
        let config = oracle_env(task);
        for (joint, next) in productive_moves(task, &config, state.completed)? {
            if self.dist.get(&next).copied() == Some(here - 1) {
                return Ok(joint);
            }
        }
        Err(Error::Infeasible(
            "no distance-reducing action from a reachable state".into(),
        ))
    }
}

/// Forced-idle schedule: at each listed (agent, step) pair the agent's
/// chosen action is overridden to idle before the environment step. Step
/// indices are 1-based interaction rounds.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSchedule {
    entries: Vec<(AgentId, u32)>,
}

impl PerturbationSchedule {
    pub fn new(entries: Vec<(AgentId, u32)>) -> Result<PerturbationSchedule> {
        if entries.iter().any(|&(_, step)| step == 0) {
            return Err(Error::Validation(
                "perturbation steps are 1-based; step 0 is invalid".into(),
            ));
        }
        Ok(PerturbationSchedule { entries })
    }

    pub fn empty() -> PerturbationSchedule {
        PerturbationSchedule::default()
    }

    pub fn entries(&self) -> &[(AgentId, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn applies(&self, agent: AgentId, step: u32) -> bool {
        self.entries.iter().any(|&(a, s)| a == agent && s == step)
    }
}

impl fmt::Display for PerturbationSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (agent, step)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            let tag = match agent {
                AgentId::Leader => "L",
                AgentId::Follower => "F",
            };
            write!(f, "{tag}:{step}")?;
        }
        Ok(())
    }
}

impl FromStr for PerturbationSchedule {
    type Err = Error;

    /// Parses `L:1,L:4,F:6,F:8`; an empty string is the empty schedule.
    fn from_str(s: &str) -> Result<PerturbationSchedule> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(PerturbationSchedule::empty());
        }
        let mut entries = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            let (agent, step) = part.split_once(':').ok_or_else(|| {
                Error::Parse(format!("perturbation entry '{part}' is not AGENT:STEP"))
            })?;
            let agent = match agent.trim() {
                "L" | "l" => AgentId::Leader,
                "F" | "f" => AgentId::Follower,
                other => {
                    return Err(Error::Parse(format!("agent must be L or F, got '{other}'")))
                }
            };
            let step: u32 = step.trim().parse().map_err(|_| {
                Error::Parse(format!("perturbation step '{}' is not an integer", step.trim()))
            })?;
            entries.push((agent, step));
        }
        PerturbationSchedule::new(entries)
    }
}

/// One perturbed rollout record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbRun {
    pub steps: u32,
    pub completed: bool,
    pub cum_reward_leader: f64,
    pub cum_reward_follower: f64,
    /// Cumulative (leader, follower) rewards after each step.
    pub reward_trajectory: Vec<(f64, f64)>,
}

/// Statistics over perturbed rollouts; deviations are population standard
/// deviations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbReport {
    pub n_runs: usize,
    pub completion_rate: f64,
    pub mean_steps: f64,
    pub std_steps: f64,
    pub runs: Vec<PerturbRun>,
}

impl PerturbReport {
    fn from_runs(runs: Vec<PerturbRun>) -> PerturbReport {
        let steps: Vec<f64> = runs.iter().map(|r| r.steps as f64).collect();
        let (mean_steps, std_steps) = mean_std(&steps);
        let completed = runs.iter().filter(|r| r.completed).count();
        PerturbReport {
            n_runs: runs.len(),
            completion_rate: if runs.is_empty() {
                0.0
            } else {
                completed as f64 / runs.len() as f64
            },
            mean_steps,
            std_steps,
            runs,
        }
    }
}

/// Perturbed rollouts of a trained model's greedy policy.
pub fn run_perturbed_eval<R: Rng + ?Sized>(
    model: &TrainedModel,
    task: &AssemblyTask,
    env_config: &EnvConfig,
    schedule: &PerturbationSchedule,
    n_runs: usize,
    rng: &mut R,
) -> Result<PerturbReport> {
    run_perturbed_eval_with(|s| model.greedy_action(s, task), task, env_config, schedule, n_runs, rng)
}

/// Perturbed rollouts of an arbitrary policy.
pub fn run_perturbed_eval_with<P, R>(
    mut policy: P,
    task: &AssemblyTask,
    env_config: &EnvConfig,
    schedule: &PerturbationSchedule,
    n_runs: usize,
    rng: &mut R,
) -> Result<PerturbReport>
where
    P: FnMut(&ChessboardState) -> Result<JointAction>,
    R: Rng + ?Sized,
{
    env_config.validate()?;
    let mut runs = Vec::with_capacity(n_runs);
    for _ in 0..n_runs {
        let mut state = task.initial_state();
        let mut cum_leader = 0.0;
        let mut cum_follower = 0.0;
        let mut trajectory = Vec::new();
        loop {
            let mut joint = policy(&state)?;
            let round = state.step_index + 1;
            if schedule.applies(AgentId::Leader, round) {
                joint = JointAction::new(Action::Idle, joint.follower);
            }
            if schedule.applies(AgentId::Follower, round) {
                joint = JointAction::new(joint.leader, Action::Idle);
            }
            let outcome = env::step(&state, task, &joint, env_config, rng)?;
            cum_leader += outcome.r_leader;
            cum_follower += outcome.r_follower;
            trajectory.push((cum_leader, cum_follower));
            let done = outcome.done;
            state = outcome.next_state;
            if done {
                break;
            }
        }
        runs.push(PerturbRun {
            steps: state.step_index,
            completed: task.is_complete(&state),
            cum_reward_leader: cum_leader,
            cum_reward_follower: cum_follower,
            reward_trajectory: trajectory,
        });
    }
    Ok(PerturbReport::from_runs(runs))
}

/// Recipe for a random chessboard task.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskGenSpec {
    pub n_columns: u8,
    pub n_subtasks: usize,
    /// Relative draw weights for sub-task types 1 through 4.
    pub type_weights: [f64; 4],
    /// Column height cap; derived from the size when absent.
    pub rows: Option<u16>,
    pub seed: u64,
}

impl Default for TaskGenSpec {
    fn default() -> TaskGenSpec {
        // Weights mirror the bundled task's type counts.
        TaskGenSpec {
            n_columns: 4,
            n_subtasks: 18,
            type_weights: [4.0, 4.0, 8.0, 2.0],
            rows: None,
            seed: 0,
        }
    }
}

impl TaskGenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_columns == 0 {
            return Err(Error::Config("n_columns must be at least 1".into()));
        }
        if self.n_subtasks == 0 || self.n_subtasks > MAX_SUBTASKS {
            return Err(Error::Config(format!(
                "n_subtasks must be in 1..={MAX_SUBTASKS}, got {}",
                self.n_subtasks
            )));
        }
        if self.type_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("type_weights must be non-negative and finite".into()));
        }
        if self.type_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("type_weights must not all be zero".into()));
        }
        if let Some(rows) = self.rows {
            if rows == 0 {
                return Err(Error::Config("rows must be at least 1".into()));
            }
            if (rows as usize) * (self.n_columns as usize) < self.n_subtasks {
                return Err(Error::Config(format!(
                    "{} columns of {rows} rows cannot hold {} sub-tasks",
                    self.n_columns, self.n_subtasks
                )));
            }
        }
        Ok(())
    }

    fn row_cap(&self) -> u16 {
        match self.rows {
            Some(rows) => rows,
            None => ((2 * self.n_subtasks).div_ceil(self.n_columns as usize)).max(1) as u16,
        }
    }
}

/// Deterministic random chessboard task: columns are filled bottom-up with
/// typed sub-tasks, joint sub-tasks may merge two adjacent columns of equal
/// height, and each cell depends on the cells directly below it. The same
/// spec always produces the same task.
pub fn generate_task(spec: &TaskGenSpec) -> Result<AssemblyTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last_err = None;
    for _ in 0..GEN_ATTEMPTS {
        match try_generate(spec, &mut rng) {
            Ok(task) => return Ok(task),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Infeasible(format!(
        "no valid task after {GEN_ATTEMPTS} attempts; last failure: {}",
        last_err.expect("at least one attempt ran")
    )))
}

fn try_generate(spec: &TaskGenSpec, rng: &mut ChaCha8Rng) -> Result<AssemblyTask> {
    let n_cols = spec.n_columns as usize;
    let cap = spec.row_cap();
    let weights =
        WeightedIndex::new(spec.type_weights).map_err(|e| Error::Config(e.to_string()))?;
    let mut heights = vec![0u16; n_cols];
    let mut top: Vec<Option<SubTaskId>> = vec![None; n_cols];
    let mut subtasks = Vec::new();
    let mut placement = Vec::new();
    let mut edges: Vec<(SubTaskId, SubTaskId)> = Vec::new();
    for id in 1..=spec.n_subtasks as SubTaskId {
        let code = weights.sample(rng) as u8 + 1;
        let mut candidates: Vec<(u8, u8)> = (0..n_cols)
            .filter(|&c| heights[c] < cap)
            .map(|c| (c as u8 + 1, c as u8 + 1))
            .collect();
        if code == 4 {
            for c in 0..n_cols.saturating_sub(1) {
                if heights[c] == heights[c + 1] && heights[c] < cap {
                    candidates.push((c as u8 + 1, c as u8 + 2));
                }
            }
        }
        if candidates.is_empty() {
            return Err(Error::Infeasible(
                "board filled up before all sub-tasks were placed".into(),
            ));
        }
        let (lo, hi) = candidates[rng.gen_range(0..candidates.len())];
        let row = heights[lo as usize - 1] + 1;
        for c in lo..=hi {
            let ci = c as usize - 1;
            if let Some(below) = top[ci] {
                if !edges.contains(&(below, id)) {
                    edges.push((below, id));
                }
            }
            top[ci] = Some(id);
            heights[ci] = row;
        }
        subtasks.push(serde_json::json!({ "id": id, "type": code, "label": format!("G{id}") }));
        placement.push(serde_json::json!({ "id": id, "row": row, "columns": [lo, hi] }));
    }
    let value = serde_json::json!({
        "name": format!("gen-c{}-n{}-s{}", spec.n_columns, spec.n_subtasks, spec.seed),
        "n_columns": spec.n_columns,
        "subtasks": subtasks,
        "edges": edges,
        "placement": placement,
    });
    let task = AssemblyTask::from_json_str(&value.to_string())?;

    // Completability walk: greedily finishing any available sub-task must
    // reach the full set, otherwise the layout deadlocks.
    let mut state = task.initial_state();
    for _ in 0..task.n_subtasks() {
        if task.is_complete(&state) {
            break;
        }
        let ids = task.available_ids(&state);
        let id = *ids
            .first()
            .ok_or_else(|| Error::Infeasible("generated layout deadlocks".into()))?;
        state = task.complete_subtask(&state, id)?;
    }
    if !task.is_complete(&state) {
        return Err(Error::Infeasible("generated layout deadlocks".into()));
    }
    Ok(task)
}

/// Grid of (task, algorithm, seed) training cells.
#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub tasks: Vec<(String, AssemblyTask)>,
    pub algorithms: Vec<Algorithm>,
    pub n_seeds: u32,
    /// Cell seeds are `seed_base + seed_index`.
    pub seed_base: u64,
    /// Per-cell training parameters; the seed field is overridden per cell.
    pub train: TrainConfig,
    /// Applied to every task; when absent each task gets its defaults.
    pub env: Option<EnvConfig>,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// When present, per-cell logs and aggregate outputs are written here.
    pub out_dir: Option<PathBuf>,
}

impl SuiteConfig {
    pub fn new(tasks: Vec<(String, AssemblyTask)>) -> SuiteConfig {
        SuiteConfig {
            tasks,
            algorithms: Algorithm::ALL.to_vec(),
            n_seeds: 3,
            seed_base: 0,
            train: TrainConfig::default(),
            env: None,
            eval_episodes: 100,
            eval_seed: 1,
            out_dir: None,
        }
    }
}

/// One (task, algorithm, seed) cell's outcome.
#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    pub task: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub eval: EvalMetrics,
    pub train_episodes: u32,
    pub train_wall_s: f64,
}

/// Mean(std) across seeds for one (task, algorithm) pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub task: String,
    pub algorithm: Algorithm,
    pub n_seeds: usize,
    pub mean_steps: f64,
    pub std_steps: f64,
    pub mean_avg_reward_leader: f64,
    pub std_avg_reward_leader: f64,
    pub mean_avg_reward_follower: f64,
    pub std_avg_reward_follower: f64,
    pub completion_rate: f64,
}

/// All cell results plus the rendered aggregate table.
#[derive(Clone, Debug)]
pub struct SuiteResults {
    pub cells: Vec<CellResult>,
    pub table: String,
}

/// Mean(std) across seeds of each cell's evaluation means, grouped by
/// (task, algorithm) in first-seen order.
pub fn aggregate(cells: &[CellResult]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, Algorithm)> = Vec::new();
    let mut groups: HashMap<(String, Algorithm), Vec<&CellResult>> = HashMap::new();
    for cell in cells {
        let key = (cell.task.clone(), cell.algorithm);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(cell);
    }
    order
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let steps: Vec<f64> = group.iter().map(|c| c.eval.mean_steps).collect();
            let r_l: Vec<f64> = group.iter().map(|c| c.eval.mean_avg_reward_leader).collect();
            let r_f: Vec<f64> = group.iter().map(|c| c.eval.mean_avg_reward_follower).collect();
            let rate =
                group.iter().map(|c| c.eval.completion_rate).sum::<f64>() / group.len() as f64;
            let (mean_steps, std_steps) = mean_std(&steps);
            let (mean_avg_reward_leader, std_avg_reward_leader) = mean_std(&r_l);
            let (mean_avg_reward_follower, std_avg_reward_follower) = mean_std(&r_f);
            AggregateRow {
                task: key.0,
                algorithm: key.1,
                n_seeds: group.len(),
                mean_steps,
                std_steps,
                mean_avg_reward_leader,
                std_avg_reward_leader,
                mean_avg_reward_follower,
                std_avg_reward_follower,
                completion_rate: rate,
            }
        })
        .collect()
}

fn render_table(cells: &[CellResult]) -> String {
    let rows = aggregate(cells);
    let mut tasks: Vec<&str> = Vec::new();
    let mut algos: Vec<Algorithm> = Vec::new();
    for row in &rows {
        if !tasks.contains(&row.task.as_str()) {
            tasks.push(&row.task);
        }
        if !algos.contains(&row.algorithm) {
            algos.push(row.algorithm);
        }
    }
    let name_width = tasks.iter().map(|t| t.len()).chain([4]).max().unwrap_or(4) + 2;
    let cell_width = 18;
    let mut out = String::new();
    let sections: [(&str, fn(&AggregateRow) -> (f64, f64)); 3] = [
        ("completion steps", |r| (r.mean_steps, r.std_steps)),
        ("leader averaged reward", |r| {
            (r.mean_avg_reward_leader, r.std_avg_reward_leader)
        }),
        ("follower averaged reward", |r| {
            (r.mean_avg_reward_follower, r.std_avg_reward_follower)
        }),
    ];
    for (i, (title, pick)) in sections.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{title}, mean(std) over seeds");
        let _ = write!(out, "{:name_width$}", "task");
        for algo in &algos {
            let _ = write!(out, "{:cell_width$}", algo.to_string());
        }
        out.push('\n');
        for task in &tasks {
            let _ = write!(out, "{task:name_width$}");
            for algo in &algos {
                let text = match rows
                    .iter()
                    .find(|r| r.task == *task && r.algorithm == *algo)
                {
                    Some(row) => {
                        let (mean, std) = pick(row);
                        format!("{mean:.3}({std:.3})")
                    }
                    None => "-".to_string(),
                };
                let _ = write!(out, "{text:cell_width$}");
            }
            out.push('\n');
        }
    }
    out
}

/// Write per-episode training metrics. Floats use their shortest exact
/// decimal form, so reruns with the same seed produce identical bytes;
/// wall-clock times go to a separate timings file.
pub fn write_metrics_csv(path: &Path, metrics: &[EpisodeMetrics]) -> Result<()> {
    let mut text = String::from(
        "episode,steps,completed,cum_reward_leader,cum_reward_follower,\
         avg_reward_leader,avg_reward_follower,epsilon,nash_fallbacks\n",
    );
    for m in metrics {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            m.episode,
            m.steps,
            m.completed,
            m.cum_reward_leader,
            m.cum_reward_follower,
            m.avg_reward_leader,
            m.avg_reward_follower,
            m.epsilon,
            m.nash_fallbacks
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Per-episode wall-clock times, kept apart from the reproducible metrics.
pub fn write_timings_csv(path: &Path, metrics: &[EpisodeMetrics]) -> Result<()> {
    let mut text = String::from("episode,wall_time_ms\n");
    for m in metrics {
        let _ = writeln!(text, "{},{}", m.episode, m.wall_time_ms);
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_eval_jsonl(path: &Path, eval: &EvalMetrics) -> Result<()> {
    let mut text = String::new();
    for ep in &eval.episodes {
        let line =
            serde_json::to_string(ep).map_err(|e| Error::Parse(format!("eval encode: {e}")))?;
        text.push_str(&line);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run_cell(config: &SuiteConfig, task_index: usize, algorithm: Algorithm, seed: u64) -> Result<CellResult> {
    let (name, task) = &config.tasks[task_index];
    let env_config = config.env.clone().unwrap_or_else(|| EnvConfig::for_task(task));
    let train_config = TrainConfig { seed, ..config.train.clone() };
    let started = Instant::now();
    let mut trainer = Trainer::new(task.clone(), env_config.clone(), train_config, algorithm)?;
    let mut metrics = Vec::new();
    while let Some(m) = trainer.run_episode()? {
        metrics.push(m);
    }
    let train_wall_s = started.elapsed().as_secs_f64();
    let model = trainer.model();
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.eval_seed);
    let eval = evaluate(&model, task, &env_config, config.eval_episodes, &mut eval_rng)?;
    if let Some(dir) = &config.out_dir {
        let cell_dir = dir.join(name).join(format!("{algorithm}-seed{seed}"));
        std::fs::create_dir_all(&cell_dir)?;
        write_metrics_csv(&cell_dir.join("metrics.csv"), &metrics)?;
        write_timings_csv(&cell_dir.join("timings.csv"), &metrics)?;
        write_eval_jsonl(&cell_dir.join("eval_episodes.jsonl"), &eval)?;
        trainer.checkpoint().save(&cell_dir.join("checkpoint.json"))?;
    }
    Ok(CellResult {
        task: name.clone(),
        algorithm,
        seed,
        eval,
        train_episodes: metrics.len() as u32,
        train_wall_s,
    })
}

/// Train and evaluate every (task, algorithm, seed) cell, in parallel where
/// cores allow, then aggregate. With an output directory set, each cell
/// writes its training log, evaluation episodes, and final checkpoint, and
/// the suite writes `results.csv` plus a rendered `table.txt`.
pub fn run_experiment_suite(config: &SuiteConfig) -> Result<SuiteResults> {
    config.train.validate()?;
    if let Some(env) = &config.env {
        env.validate()?;
    }
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut jobs = Vec::new();
    for task_index in 0..config.tasks.len() {
        for &algorithm in &config.algorithms {
            for s in 0..config.n_seeds {
                jobs.push((task_index, algorithm, config.seed_base + s as u64));
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|&(task_index, algorithm, seed)| run_cell(config, task_index, algorithm, seed))
        .collect::<Result<Vec<CellResult>>>()?;
    let table = render_table(&cells);
    if let Some(dir) = &config.out_dir {
        let mut csv = String::from("task,algorithm,seed,metric,value\n");
        for cell in &cells {
            let rows = [
                ("mean_steps", cell.eval.mean_steps),
                ("std_steps", cell.eval.std_steps),
                ("completion_rate", cell.eval.completion_rate),
                ("mean_avg_reward_leader", cell.eval.mean_avg_reward_leader),
                ("mean_avg_reward_follower", cell.eval.mean_avg_reward_follower),
            ];
            for (metric, value) in rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{metric},{value}",
                    cell.task, cell.algorithm, cell.seed
                );
            }
        }
        std::fs::write(dir.join("results.csv"), csv)?;
        std::fs::write(dir.join("table.txt"), &table)?;
    }
    Ok(SuiteResults { cells, table })
}

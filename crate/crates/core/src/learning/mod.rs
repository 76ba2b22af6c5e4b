//! Training loops over the assembly environment: a Stackelberg double deep
//! Q-learner plus Nash and independent baselines, sharing one replay buffer,
//! epsilon schedule, and update rule.
//!
//! Training is centralized, execution decentralized: a single loop owns both
//! agents' networks and the shared buffer. The action exchange deployed
//! agents would perform (leader announces its committed action, follower
//! best-responds) is realized inside action selection as the equilibrium
//! computation over both Q-matrices.
//!
//! Per environment step the loop selects an epsilon-greedy equilibrium
//! action from the online networks, stores the transition, samples a
//! minibatch, and regresses each agent's selected joint-action value toward
//! `r + gamma * Q_target(s', a'_eq)`, where `a'_eq` is chosen from the
//! ONLINE networks at `s'` and valued by the TARGET networks. Targets move
//! by soft updates on a fixed step period.

pub mod replay;
pub mod tabular;

pub use replay::{ReplayBuffer, Transition};
pub use tabular::{tabular_stackelberg_update, TabularQ, TabularTransition};

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, EnvConfig, JointAction};
use crate::error::{Error, Result};
use crate::games::{
    pure_nash_equilibria, select_preferred_nash, stackelberg_equilibrium, BimatrixGame, TieBreak,
};
use crate::neural::{
    joint_side, optimizer_step, soft_update, td_gradient, NetState, OptimizerState, QApproximator,
    StateEncoding, TdBatch,
};
use crate::task::{Action, AgentId, AssemblyTask, ChessboardState};

/// Distinct stream for replay sampling, so drawing minibatch indices never
/// perturbs the action/environment stream.
const BUFFER_STREAM_TAG: u64 = 0x9e37_79b9_7f4a_7c15;

/// Equilibrium concept used for action selection and TD targets.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Leader commits, follower best-responds; both sides trained on the
    /// Stackelberg pair of the joint bimatrix.
    Stackelberg,
    /// Preferred pure Nash of the joint bimatrix; falls back to the
    /// Stackelberg pair when no pure Nash exists (counted in metrics).
    Nash,
    /// Each agent optimizes its own joint-Q, marginalizing the partner by an
    /// optimistic max over the partner's action dimension.
    Independent,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Stackelberg, Algorithm::Nash, Algorithm::Independent];
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Stackelberg => "sg",
            Algorithm::Nash => "nash",
            Algorithm::Independent => "ind",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Algorithm> {
        match s.to_ascii_lowercase().as_str() {
            "sg" | "stackelberg" => Ok(Algorithm::Stackelberg),
            "nash" => Ok(Algorithm::Nash),
            "ind" | "independent" => Ok(Algorithm::Independent),
            other => Err(Error::Parse(format!(
                "unknown algorithm '{other}' (expected sg, nash, or ind)"
            ))),
        }
    }
}

/// Hyperparameters of the training loop. The environment's own parameters
/// (probabilities, rewards, step budget) live in `EnvConfig`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: u32,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which epsilon decays linearly; flat after.
    pub epsilon_fraction: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    /// Soft-update retention: target <- tau * target + (1 - tau) * online.
    pub tau: f64,
    /// Environment steps between soft target updates.
    pub target_period: u32,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            episodes: 10_000,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.6,
            batch_size: 64,
            buffer_capacity: 100_000,
            learning_rate: 1e-4,
            tau: 0.1,
            target_period: 50,
            hidden_sizes: vec![128, 128],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {e}")));
            }
        }
        if !(self.epsilon_fraction > 0.0 && self.epsilon_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon_fraction must be in (0,1], got {}",
                self.epsilon_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::Config(format!(
                "buffer_capacity {} is smaller than batch_size {}",
                self.buffer_capacity, self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must be in [0,1], got {}", self.tau)));
        }
        if self.target_period == 0 {
            return Err(Error::Config("target_period must be at least 1".into()));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Exploration rate for a 0-based episode index: linear from
/// `epsilon_start` down to `epsilon_end` across the first
/// `epsilon_fraction` of episodes, flat at `epsilon_end` after.
pub fn epsilon_at(config: &TrainConfig, episode_index: u32) -> f64 {
    let window = ((config.episodes as f64 * config.epsilon_fraction).floor() as u64).max(1);
    let e = episode_index as u64;
    if e + 1 >= window {
        return config.epsilon_end;
    }
    let frac = e as f64 / (window - 1) as f64;
    config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac
}

/// Greedy joint pair plus the per-agent cells at which target networks are
/// read. For the equilibrium algorithms all three pairs coincide; the
/// independent baseline selects per agent from its own matrix.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PairSelection {
    /// Pair executed in the environment.
    pub joint: (usize, usize),
    /// Cell of the leader's Q-matrix backing the leader's TD target.
    pub leader_eval: (usize, usize),
    /// Cell of the follower's Q-matrix backing the follower's TD target.
    pub follower_eval: (usize, usize),
    /// True when no pure Nash existed and the Stackelberg pair was used.
    pub nash_fallback: bool,
}

fn same_pair(joint: (usize, usize), nash_fallback: bool) -> PairSelection {
    PairSelection { joint, leader_eval: joint, follower_eval: joint, nash_fallback }
}

/// Greedy pair under `algorithm` from one state's Q-matrices (rows leader
/// actions, columns follower actions).
pub fn greedy_selection(
    q_leader: &Array2<f64>,
    q_follower: &Array2<f64>,
    algorithm: Algorithm,
) -> Result<PairSelection> {
    let game = BimatrixGame::new(q_leader.clone(), q_follower.clone())?;
    Ok(match algorithm {
        Algorithm::Stackelberg => {
            same_pair(stackelberg_equilibrium(&game, TieBreak::LowestIndex), false)
        }
        Algorithm::Nash => {
            let candidates = pure_nash_equilibria(&game);
            match select_preferred_nash(&game, &candidates) {
                Some(pair) => same_pair(pair, false),
                None => same_pair(stackelberg_equilibrium(&game, TieBreak::LowestIndex), true),
            }
        }
        Algorithm::Independent => {
            let leader_eval = marginal_argmax(game.leader(), AgentId::Leader);
            let follower_eval = marginal_argmax(game.follower(), AgentId::Follower);
            PairSelection {
                joint: (leader_eval.0, follower_eval.1),
                leader_eval,
                follower_eval,
                nash_fallback: false,
            }
        }
    })
}

/// Argmax cell of one agent's matrix with its own action dimension decided
/// first: the agent's action maximizes the max over the partner's dimension,
/// then the partner's coordinate maximizes within that line. All ties break
/// to the lowest index.
fn marginal_argmax(values: &Array2<f64>, agent: AgentId) -> (usize, usize) {
    let (own_len, other_len, at): (usize, usize, fn(usize, usize) -> (usize, usize)) = match agent {
        AgentId::Leader => (values.nrows(), values.ncols(), |own, other| (own, other)),
        AgentId::Follower => (values.ncols(), values.nrows(), |own, other| (other, own)),
    };
    let line_max = |own: usize| {
        (0..other_len)
            .map(|other| values[at(own, other)])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best_own = 0;
    let mut best_val = line_max(0);
    for own in 1..own_len {
        let v = line_max(own);
        if v > best_val {
            best_val = v;
            best_own = own;
        }
    }
    let mut best_other = 0;
    for other in 1..other_len {
        if values[at(best_own, other)] > values[at(best_own, best_other)] {
            best_other = other;
        }
    }
    at(best_own, best_other)
}

/// One epsilon-greedy action decision.
#[derive(Clone, Copy, Debug)]
pub struct ActionChoice {
    pub joint: JointAction,
    /// Executed pair as (row, column) indices.
    pub pair: (usize, usize),
    pub nash_fallback: bool,
}

/// Epsilon-greedy equilibrium choice: per agent, keep the greedy action with
/// probability `1 - epsilon`, else replace it with a uniform draw from that
/// agent's other actions. The rng is consulted in a fixed order: leader
/// coin, leader replacement (when exploring), follower coin, follower
/// replacement.
pub fn choose_from_q<R: Rng + ?Sized>(
    q_leader: &Array2<f64>,
    q_follower: &Array2<f64>,
    epsilon: f64,
    rng: &mut R,
    algorithm: Algorithm,
) -> Result<ActionChoice> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon must be in [0,1], got {epsilon}")));
    }
    let selection = greedy_selection(q_leader, q_follower, algorithm)?;
    let side = q_leader.nrows();
    let mut pair = selection.joint;
    let replace = |keep: usize, rng: &mut R| {
        let draw = rng.gen_range(0..side - 1);
        if draw >= keep {
            draw + 1
        } else {
            draw
        }
    };
    if rng.gen::<f64>() < epsilon && side > 1 {
        pair.0 = replace(pair.0, rng);
    }
    if rng.gen::<f64>() < epsilon && side > 1 {
        pair.1 = replace(pair.1, rng);
    }
    Ok(ActionChoice {
        joint: JointAction::new(Action::from_index(pair.0), Action::from_index(pair.1)),
        pair,
        nash_fallback: selection.nash_fallback,
    })
}

/// Epsilon-greedy choice from both online networks at one encoded state.
pub fn select_actions<R: Rng + ?Sized>(
    net_leader: &QApproximator,
    net_follower: &QApproximator,
    encoding: &StateEncoding,
    epsilon: f64,
    rng: &mut R,
    algorithm: Algorithm,
) -> Result<ActionChoice> {
    let q_l = net_leader.forward(encoding)?;
    let q_f = net_follower.forward(encoding)?;
    choose_from_q(&q_l, &q_f, epsilon, rng, algorithm)
}

/// Per-sample regression targets for one minibatch.
#[derive(Clone, Debug)]
pub struct TdTargets {
    pub leader: Vec<f64>,
    pub follower: Vec<f64>,
    /// Samples whose next-state selection fell back to the Stackelberg pair.
    pub nash_fallbacks: usize,
}

fn square_row(row: ArrayView1<f64>) -> Result<Array2<f64>> {
    let side = joint_side(row.len())?;
    Ok(row
        .to_owned()
        .into_shape_with_order((side, side))
        .expect("side * side matches the row length"))
}

/// TD targets for a minibatch: `r` on terminal samples, else
/// `r + gamma * Q_target(s', a')` where `a'` is selected from the ONLINE
/// networks at `s'` under `algorithm` and valued by the TARGET networks.
///
/// Next states are deduplicated by frontier before the batched forward
/// passes; duplicates share both the selection and the valuation.
pub fn compute_td_targets(
    online_leader: &QApproximator,
    online_follower: &QApproximator,
    target_leader: &QApproximator,
    target_follower: &QApproximator,
    batch: &[&Transition],
    gamma: f64,
    algorithm: Algorithm,
) -> Result<TdTargets> {
    if !gamma.is_finite() {
        return Err(Error::Config(format!("gamma must be finite, got {gamma}")));
    }
    let mut unique_index: HashMap<&[u16], usize> = HashMap::new();
    let mut unique: Vec<&Transition> = Vec::new();
    let mut row_of: Vec<Option<usize>> = Vec::with_capacity(batch.len());
    for t in batch {
        if t.done {
            row_of.push(None);
        } else {
            let next = unique.len();
            let u = *unique_index
                .entry(t.next_state.frontier.as_slice())
                .or_insert_with(|| {
                    unique.push(t);
                    next
                });
            row_of.push(Some(u));
        }
    }

    let mut future_leader = Vec::with_capacity(unique.len());
    let mut future_follower = Vec::with_capacity(unique.len());
    let mut fallback_row = Vec::with_capacity(unique.len());
    if !unique.is_empty() {
        let mut inputs = Array2::zeros((unique.len(), unique[0].next_encoding.len()));
        for (i, t) in unique.iter().enumerate() {
            inputs
                .row_mut(i)
                .assign(&ArrayView1::from(t.next_encoding.as_slice()));
        }
        let sel_l = online_leader.forward_batch(&inputs)?;
        let sel_f = online_follower.forward_batch(&inputs)?;
        let val_l = target_leader.forward_batch(&inputs)?;
        let val_f = target_follower.forward_batch(&inputs)?;
        for i in 0..unique.len() {
            let selection = greedy_selection(
                &square_row(sel_l.row(i))?,
                &square_row(sel_f.row(i))?,
                algorithm,
            )?;
            future_leader.push(square_row(val_l.row(i))?[selection.leader_eval]);
            future_follower.push(square_row(val_f.row(i))?[selection.follower_eval]);
            fallback_row.push(selection.nash_fallback);
        }
    }

    let mut leader = Vec::with_capacity(batch.len());
    let mut follower = Vec::with_capacity(batch.len());
    let mut nash_fallbacks = 0;
    for (t, row) in batch.iter().zip(&row_of) {
        match row {
            None => {
                leader.push(t.r_leader);
                follower.push(t.r_follower);
            }
            Some(u) => {
                leader.push(t.r_leader + gamma * future_leader[*u]);
                follower.push(t.r_follower + gamma * future_follower[*u]);
                if fallback_row[*u] {
                    nash_fallbacks += 1;
                }
            }
        }
    }
    Ok(TdTargets { leader, follower, nash_fallbacks })
}

/// One training episode's record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// 1-based episode number.
    pub episode: u32,
    pub steps: u32,
    pub completed: bool,
    pub cum_reward_leader: f64,
    pub cum_reward_follower: f64,
    /// Cumulative reward divided by completion steps.
    pub avg_reward_leader: f64,
    pub avg_reward_follower: f64,
    pub epsilon: f64,
    /// Equilibrium selections (acting and targets) that fell back to the
    /// Stackelberg pair; always 0 outside the Nash baseline.
    pub nash_fallbacks: usize,
    pub wall_time_ms: f64,
}

/// Incremental trainer owning both agents' networks and the shared buffer.
pub struct Trainer {
    task: AssemblyTask,
    env_config: EnvConfig,
    config: TrainConfig,
    algorithm: Algorithm,
    online_leader: QApproximator,
    online_follower: QApproximator,
    target_leader: QApproximator,
    target_follower: QApproximator,
    opt_leader: OptimizerState,
    opt_follower: OptimizerState,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    episode: u32,
    global_step: u64,
}

impl Trainer {
    /// Networks are seeded from `config.seed`, leader first; the replay
    /// buffer samples from its own derived stream.
    pub fn new(
        task: AssemblyTask,
        env_config: EnvConfig,
        config: TrainConfig,
        algorithm: Algorithm,
    ) -> Result<Trainer> {
        env_config.validate()?;
        config.validate()?;
        let mut sizes = Vec::with_capacity(config.hidden_sizes.len() + 2);
        sizes.push(StateEncoding::dim(&task));
        sizes.extend_from_slice(&config.hidden_sizes);
        sizes.push(task.n_actions() * task.n_actions());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let online_leader = QApproximator::new(&sizes, &mut rng)?;
        let online_follower = QApproximator::new(&sizes, &mut rng)?;
        let target_leader = online_leader.clone();
        let target_follower = online_follower.clone();
        let opt_leader = OptimizerState::new(&online_leader, config.learning_rate);
        let opt_follower = OptimizerState::new(&online_follower, config.learning_rate);
        let buffer = ReplayBuffer::new(
            config.buffer_capacity,
            ChaCha8Rng::seed_from_u64(config.seed ^ BUFFER_STREAM_TAG),
        );
        Ok(Trainer {
            task,
            env_config,
            config,
            algorithm,
            online_leader,
            online_follower,
            target_leader,
            target_follower,
            opt_leader,
            opt_follower,
            buffer,
            rng,
            episode: 0,
            global_step: 0,
        })
    }

    pub fn task(&self) -> &AssemblyTask {
        &self.task
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Completed episodes so far.
    pub fn episode(&self) -> u32 {
        self.episode
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Run one episode, updating after every step once the buffer can fill
    /// a batch. Returns `None` once the configured episode count is done.
    pub fn run_episode(&mut self) -> Result<Option<EpisodeMetrics>> {
        if self.episode >= self.config.episodes {
            return Ok(None);
        }
        let started = Instant::now();
        let epsilon = epsilon_at(&self.config, self.episode);
        let mut state = self.task.initial_state();
        let mut encoding = StateEncoding::encode(&state, &self.task);
        let mut cum_leader = 0.0;
        let mut cum_follower = 0.0;
        let mut nash_fallbacks = 0;
        loop {
            let choice = select_actions(
                &self.online_leader,
                &self.online_follower,
                &encoding,
                epsilon,
                &mut self.rng,
                self.algorithm,
            )?;
            if choice.nash_fallback {
                nash_fallbacks += 1;
            }
            let outcome =
                env::step(&state, &self.task, &choice.joint, &self.env_config, &mut self.rng)?;
            let next_encoding = StateEncoding::encode(&outcome.next_state, &self.task);
            cum_leader += outcome.r_leader;
            cum_follower += outcome.r_follower;
            self.buffer.push(Transition {
                state,
                encoding,
                action: choice.joint,
                r_leader: outcome.r_leader,
                r_follower: outcome.r_follower,
                next_state: outcome.next_state.clone(),
                next_encoding: next_encoding.clone(),
                done: outcome.done,
            });
            self.global_step += 1;
            if self.buffer.len() >= self.config.batch_size {
                nash_fallbacks += self.update_step()?;
            }
            if self.global_step % self.config.target_period as u64 == 0 {
                soft_update(&mut self.target_leader, &self.online_leader, self.config.tau)?;
                soft_update(&mut self.target_follower, &self.online_follower, self.config.tau)?;
            }
            let done = outcome.done;
            state = outcome.next_state;
            encoding = next_encoding;
            if done {
                break;
            }
        }
        self.episode += 1;
        let steps = state.step_index;
        Ok(Some(EpisodeMetrics {
            episode: self.episode,
            steps,
            completed: self.task.is_complete(&state),
            cum_reward_leader: cum_leader,
            cum_reward_follower: cum_follower,
            avg_reward_leader: cum_leader / steps.max(1) as f64,
            avg_reward_follower: cum_follower / steps.max(1) as f64,
            epsilon,
            nash_fallbacks,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        }))
    }

    /// One minibatch update of both agents. Targets for both are computed
    /// before either network moves, so the two updates are simultaneous.
    fn update_step(&mut self) -> Result<usize> {
        let indices = self.buffer.sample_indices(self.config.batch_size);
        let batch: Vec<&Transition> = indices.iter().map(|&i| self.buffer.get(i)).collect();
        let targets = compute_td_targets(
            &self.online_leader,
            &self.online_follower,
            &self.target_leader,
            &self.target_follower,
            &batch,
            self.config.gamma,
            self.algorithm,
        )?;
        let mut inputs = Array2::zeros((batch.len(), self.online_leader.input_dim()));
        for (i, t) in batch.iter().enumerate() {
            inputs.row_mut(i).assign(&ArrayView1::from(t.encoding.as_slice()));
        }
        let action_index: Vec<usize> =
            batch.iter().map(|t| t.action.index(self.task.n_columns())).collect();
        let leader_batch = TdBatch {
            inputs: inputs.clone(),
            action_index: action_index.clone(),
            targets: targets.leader,
        };
        let follower_batch = TdBatch { inputs, action_index, targets: targets.follower };
        let (grads, _) = td_gradient(&self.online_leader, &leader_batch)?;
        optimizer_step(&mut self.online_leader, &grads, &mut self.opt_leader)?;
        let (grads, _) = td_gradient(&self.online_follower, &follower_batch)?;
        optimizer_step(&mut self.online_follower, &grads, &mut self.opt_follower)?;
        Ok(targets.nash_fallbacks)
    }

    /// Snapshot of the online networks for greedy execution.
    pub fn model(&self) -> TrainedModel {
        TrainedModel {
            algorithm: self.algorithm,
            net_leader: self.online_leader.clone(),
            net_follower: self.online_follower.clone(),
        }
    }

    /// Serializable snapshot of every mutable training component.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            algorithm: self.algorithm,
            episode: self.episode,
            global_step: self.global_step,
            online_leader: self.online_leader.to_state(),
            online_follower: self.online_follower.to_state(),
            target_leader: self.target_leader.to_state(),
            target_follower: self.target_follower.to_state(),
            opt_leader: self.opt_leader.clone(),
            opt_follower: self.opt_follower.clone(),
            rng: self.rng.clone(),
            buffer_rng: self.buffer.rng().clone(),
        }
    }
}

/// Result of a full training run.
pub struct TrainOutput {
    pub model: TrainedModel,
    pub metrics: Vec<EpisodeMetrics>,
}

/// Train to completion under the given configs.
pub fn train(
    task: &AssemblyTask,
    env_config: &EnvConfig,
    config: &TrainConfig,
    algorithm: Algorithm,
) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(task.clone(), env_config.clone(), config.clone(), algorithm)?;
    let mut metrics = Vec::with_capacity(config.episodes as usize);
    while let Some(m) = trainer.run_episode()? {
        metrics.push(m);
    }
    Ok(TrainOutput { model: trainer.model(), metrics })
}

/// Frozen policy: both agents' online networks plus the equilibrium concept
/// they were trained under.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub algorithm: Algorithm,
    pub net_leader: QApproximator,
    pub net_follower: QApproximator,
}

impl TrainedModel {
    /// Greedy joint action at a state; consults no randomness.
    pub fn greedy_action(&self, state: &ChessboardState, task: &AssemblyTask) -> Result<JointAction> {
        let encoding = StateEncoding::encode(state, task);
        let q_l = self.net_leader.forward(&encoding)?;
        let q_f = self.net_follower.forward(&encoding)?;
        let selection = greedy_selection(&q_l, &q_f, self.algorithm)?;
        Ok(JointAction::new(
            Action::from_index(selection.joint.0),
            Action::from_index(selection.joint.1),
        ))
    }
}

/// Mean and population standard deviation; (0, 0) on empty input.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One greedy evaluation episode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub steps: u32,
    pub completed: bool,
    pub cum_reward_leader: f64,
    pub cum_reward_follower: f64,
    pub avg_reward_leader: f64,
    pub avg_reward_follower: f64,
}

/// Statistics over greedy evaluation episodes. Deviations are population
/// standard deviations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n_episodes: usize,
    pub completion_rate: f64,
    pub mean_steps: f64,
    pub std_steps: f64,
    pub mean_avg_reward_leader: f64,
    pub std_avg_reward_leader: f64,
    pub mean_avg_reward_follower: f64,
    pub std_avg_reward_follower: f64,
    pub episodes: Vec<EvalEpisode>,
}

impl EvalMetrics {
    pub fn from_episodes(episodes: Vec<EvalEpisode>) -> EvalMetrics {
        let steps: Vec<f64> = episodes.iter().map(|e| e.steps as f64).collect();
        let avg_l: Vec<f64> = episodes.iter().map(|e| e.avg_reward_leader).collect();
        let avg_f: Vec<f64> = episodes.iter().map(|e| e.avg_reward_follower).collect();
        let (mean_steps, std_steps) = mean_std(&steps);
        let (mean_avg_reward_leader, std_avg_reward_leader) = mean_std(&avg_l);
        let (mean_avg_reward_follower, std_avg_reward_follower) = mean_std(&avg_f);
        let completed = episodes.iter().filter(|e| e.completed).count();
        EvalMetrics {
            n_episodes: episodes.len(),
            completion_rate: if episodes.is_empty() {
                0.0
            } else {
                completed as f64 / episodes.len() as f64
            },
            mean_steps,
            std_steps,
            mean_avg_reward_leader,
            std_avg_reward_leader,
            mean_avg_reward_follower,
            std_avg_reward_follower,
            episodes,
        }
    }
}

/// Greedy rollouts of a trained model; statistics over `n_episodes`.
pub fn evaluate<R: Rng + ?Sized>(
    model: &TrainedModel,
    task: &AssemblyTask,
    env_config: &EnvConfig,
    n_episodes: usize,
    rng: &mut R,
) -> Result<EvalMetrics> {
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let ep = env::rollout(task, |s| model.greedy_action(s, task), env_config, rng)?;
        episodes.push(EvalEpisode {
            steps: ep.completion_steps,
            completed: ep.completed,
            cum_reward_leader: ep.cum_reward_leader,
            cum_reward_follower: ep.cum_reward_follower,
            avg_reward_leader: ep.avg_reward(AgentId::Leader),
            avg_reward_follower: ep.avg_reward(AgentId::Follower),
        });
    }
    Ok(EvalMetrics::from_episodes(episodes))
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk snapshot of a training run's mutable state. Parameters and rng
/// states round-trip exactly; the replay buffer contents are not persisted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub algorithm: Algorithm,
    pub episode: u32,
    pub global_step: u64,
    pub online_leader: NetState,
    pub online_follower: NetState,
    pub target_leader: NetState,
    pub target_follower: NetState,
    pub opt_leader: OptimizerState,
    pub opt_follower: OptimizerState,
    pub rng: ChaCha8Rng,
    pub buffer_rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::Parse(format!("checkpoint encode: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("checkpoint decode: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint version {} (expected {})",
                ckpt.version, CHECKPOINT_VERSION
            )));
        }
        Ok(ckpt)
    }

    /// Rebuild the frozen policy from the online parameters.
    pub fn model(&self) -> Result<TrainedModel> {
        Ok(TrainedModel {
            algorithm: self.algorithm,
            net_leader: QApproximator::from_state(self.online_leader.clone())?,
            net_follower: QApproximator::from_state(self.online_follower.clone())?,
        })
    }
}

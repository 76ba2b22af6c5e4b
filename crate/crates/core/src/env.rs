//! Two-agent stochastic environment over a chessboard task.
//!
//! Both agents act simultaneously each step. Rewards depend only on the
//! state and joint action; randomness enters only through per-sub-task
//! completion rolls, so a failed roll costs a step but never changes the
//! reward already earned for the attempt.
//!
//! Reward rules, applied per step:
//!   (a) both agents pick the same available joint (type 4) sub-task: each
//!       earns `r_cop`; one shared roll with `p_cooperative` completes it.
//!   (b) an agent picks an available sub-task it can do alone and the other
//!       agent did not pick the same sub-task: `r_ind`; an independent roll
//!       with `p_individual` completes it.
//!   (c) an agent picks a wrong-type sub-task, a joint sub-task alone, or a
//!       column with frontier 0: `r_cost`, no completion.
//!   (d) both agents pick the same non-joint sub-task: conflict, each earns
//!       `r_cost`, no completion.
//!   (e) both agents idle: each earns `r_cost / 2`.
//!   (f) exactly one agent idles: the idle agent earns 0, the other is
//!       scored by (a) through (d).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Action, AgentId, AssemblyTask, ChessboardState, SubTaskId, TaskType};

/// Reward and transition parameters of the environment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Success probability of a solo attempt.
    pub p_individual: f64,
    /// Success probability of a joint attempt.
    pub p_cooperative: f64,
    /// Reward for each agent of a joint selection.
    pub r_cop: f64,
    /// Reward for a correct solo selection.
    pub r_ind: f64,
    /// Penalty for a wrong or blocked selection (negative).
    pub r_cost: f64,
    /// Episode step budget.
    pub max_steps: u32,
    /// Force both success probabilities to 1.
    pub deterministic: bool,
}

impl EnvConfig {
    /// Defaults with the step budget derived from the task size.
    pub fn for_task(task: &AssemblyTask) -> EnvConfig {
        EnvConfig {
            p_individual: 0.9,
            p_cooperative: 0.7,
            r_cop: 2.0,
            r_ind: 1.0,
            r_cost: -1.0,
            max_steps: default_max_steps(task.n_subtasks()),
            deterministic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_individual", self.p_individual), ("p_cooperative", self.p_cooperative)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {p}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        for (name, r) in [("r_cop", self.r_cop), ("r_ind", self.r_ind), ("r_cost", self.r_cost)] {
            if !r.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Step budget for a task of `n_subtasks`: 2.2 per sub-task, rounded up to a
/// multiple of 10 (40 for the bundled 18 sub-task layout).
pub fn default_max_steps(n_subtasks: usize) -> u32 {
    let raw = (11 * n_subtasks as u32).div_ceil(5);
    raw.div_ceil(10) * 10
}

/// Simultaneous pair of agent moves.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct JointAction {
    pub leader: Action,
    pub follower: Action,
}

impl JointAction {
    pub fn new(leader: Action, follower: Action) -> JointAction {
        JointAction { leader, follower }
    }

    pub fn of(&self, agent: AgentId) -> Action {
        match agent {
            AgentId::Leader => self.leader,
            AgentId::Follower => self.follower,
        }
    }

    /// Leader-major dense index over the (n+1) x (n+1) joint-action grid.
    pub fn index(&self, n_columns: u8) -> usize {
        self.leader.index() * (n_columns as usize + 1) + self.follower.index()
    }

    pub fn from_index(idx: usize, n_columns: u8) -> JointAction {
        let side = n_columns as usize + 1;
        JointAction { leader: Action::from_index(idx / side), follower: Action::from_index(idx % side) }
    }
}

/// What happened to one agent during a step.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Solo attempt succeeded and the sub-task completed.
    Completed,
    /// Solo attempt was valid but the completion roll failed.
    FailedRoll,
    /// Wrong-type selection, including a joint sub-task attempted alone.
    WrongType,
    /// Selected a column whose frontier is empty.
    Blocked,
    /// Chose not to act.
    Idle,
    /// Joint attempt succeeded.
    JointSuccess,
    /// Joint attempt failed its shared roll.
    JointFail,
    /// Both agents picked the same non-joint sub-task.
    Conflict,
}

/// Result of one environment step. Events are indexed leader, follower.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub r_leader: f64,
    pub r_follower: f64,
    pub next_state: ChessboardState,
    pub done: bool,
    pub events: [EventKind; 2],
    /// Sub-tasks completed this step, in application order.
    pub completed: Vec<SubTaskId>,
}

impl StepOutcome {
    pub fn reward(&self, agent: AgentId) -> f64 {
        match agent {
            AgentId::Leader => self.r_leader,
            AgentId::Follower => self.r_follower,
        }
    }
}

/// What an action resolves to on the current board.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Choice {
    Idle,
    Blocked,
    Picked(SubTaskId, TaskType),
}

fn resolve(task: &AssemblyTask, state: &ChessboardState, action: Action) -> Choice {
    match action {
        Action::Idle => Choice::Idle,
        Action::Column(c) => {
            let id = state.frontier[c as usize - 1];
            if id == 0 {
                Choice::Blocked
            } else {
                Choice::Picked(id, task.task_type(id))
            }
        }
    }
}

/// True once the board is complete or the step budget is spent.
pub fn is_terminal(state: &ChessboardState, task: &AssemblyTask, config: &EnvConfig) -> bool {
    task.is_complete(state) || state.step_index >= config.max_steps
}

fn roll<R: Rng + ?Sized>(rng: &mut R, p: f64, deterministic: bool) -> bool {
    let p = if deterministic { 1.0 } else { p };
    rng.gen::<f64>() < p
}

/// Score one agent acting alone (the partner picked something else or idled).
fn solo_score(choice: Choice, agent: AgentId, config: &EnvConfig) -> (f64, EventKind, Option<SubTaskId>) {
    match choice {
        Choice::Idle => (0.0, EventKind::Idle, None),
        Choice::Blocked => (config.r_cost, EventKind::Blocked, None),
        Choice::Picked(id, t) => {
            if t.solo_for(agent) {
                (config.r_ind, EventKind::Completed, Some(id))
            } else {
                (config.r_cost, EventKind::WrongType, None)
            }
        }
    }
}

/// Advance the environment by one joint step.
///
/// The rng is consulted only for completion rolls, in a fixed order: the
/// joint roll if any, else the leader's solo roll, then the follower's.
pub fn step<R: Rng + ?Sized>(
    state: &ChessboardState,
    task: &AssemblyTask,
    action: &JointAction,
    config: &EnvConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    if is_terminal(state, task, config) {
        return Err(Error::Terminal);
    }
    if action.leader.index() > task.n_columns() as usize
        || action.follower.index() > task.n_columns() as usize
    {
        return Err(Error::IndexOutOfRange(format!(
            "joint action ({}, {}) on a {}-column board",
            action.leader,
            action.follower,
            task.n_columns()
        )));
    }

    let cl = resolve(task, state, action.leader);
    let cf = resolve(task, state, action.follower);

    let r_l;
    let r_f;
    let events;
    let mut completions: Vec<SubTaskId> = Vec::new();

    match (cl, cf) {
        // Rule (e): joint no-op.
        (Choice::Idle, Choice::Idle) => {
            r_l = config.r_cost / 2.0;
            r_f = config.r_cost / 2.0;
            events = [EventKind::Idle, EventKind::Idle];
        }
        // Same sub-task: cooperation on joint work, conflict otherwise.
        (Choice::Picked(i, ti), Choice::Picked(j, _)) if i == j => {
            if ti == TaskType::Joint {
                // Rule (a): single shared roll.
                r_l = config.r_cop;
                r_f = config.r_cop;
                if roll(rng, config.p_cooperative, config.deterministic) {
                    events = [EventKind::JointSuccess, EventKind::JointSuccess];
                    completions.push(i);
                } else {
                    events = [EventKind::JointFail, EventKind::JointFail];
                }
            } else {
                // Rule (d).
                r_l = config.r_cost;
                r_f = config.r_cost;
                events = [EventKind::Conflict, EventKind::Conflict];
            }
        }
        // Rules (b), (c), (f): agents scored independently. Rewards are
        // fixed before any roll; a failed roll downgrades the event only.
        _ => {
            let (vl, mut el, id_l) = solo_score(cl, AgentId::Leader, config);
            let (vf, mut ef, id_f) = solo_score(cf, AgentId::Follower, config);
            if let Some(id) = id_l {
                if roll(rng, config.p_individual, config.deterministic) {
                    completions.push(id);
                } else {
                    el = EventKind::FailedRoll;
                }
            }
            if let Some(id) = id_f {
                if roll(rng, config.p_individual, config.deterministic) {
                    completions.push(id);
                } else {
                    ef = EventKind::FailedRoll;
                }
            }
            r_l = vl;
            r_f = vf;
            events = [el, ef];
        }
    }

    let mut next = state.clone();
    for &id in &completions {
        next = task.complete_subtask(&next, id)?;
    }
    next.step_index = state.step_index + 1;
    let done = task.is_complete(&next) || next.step_index >= config.max_steps;

    Ok(StepOutcome { r_leader: r_l, r_follower: r_f, next_state: next, done, events, completed: completions })
}

/// One transition of an episode log, serializable one record per line.
#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: u32,
    /// Frontier before the step.
    pub state: Vec<SubTaskId>,
    /// Action indices (0 = idle), leader then follower.
    pub action: (usize, usize),
    pub r_leader: f64,
    pub r_follower: f64,
    pub events: [EventKind; 2],
    /// Frontier after the step.
    pub next_state: Vec<SubTaskId>,
    pub done: bool,
}

/// A finished episode.
#[derive(Clone, Debug)]
pub struct Episode {
    pub steps: Vec<StepRecord>,
    /// Step count at termination (equals the budget when incomplete).
    pub completion_steps: u32,
    /// True when the board was fully assembled.
    pub completed: bool,
    pub cum_reward_leader: f64,
    pub cum_reward_follower: f64,
    pub final_state: ChessboardState,
}

impl Episode {
    /// Cumulative reward averaged over completion steps.
    pub fn avg_reward(&self, agent: AgentId) -> f64 {
        let cum = match agent {
            AgentId::Leader => self.cum_reward_leader,
            AgentId::Follower => self.cum_reward_follower,
        };
        cum / self.completion_steps.max(1) as f64
    }
}

/// Play a full episode from the initial state under `policy`.
pub fn rollout<R, P>(
    task: &AssemblyTask,
    mut policy: P,
    config: &EnvConfig,
    rng: &mut R,
) -> Result<Episode>
where
    R: Rng + ?Sized,
    P: FnMut(&ChessboardState) -> Result<JointAction>,
{
    config.validate()?;
    let mut state = task.initial_state();
    let mut steps = Vec::new();
    let mut cum_l = 0.0;
    let mut cum_f = 0.0;
    loop {
        let action = policy(&state)?;
        let outcome = step(&state, task, &action, config, rng)?;
        cum_l += outcome.r_leader;
        cum_f += outcome.r_follower;
        steps.push(StepRecord {
            step: state.step_index + 1,
            state: state.frontier.clone(),
            action: (action.leader.index(), action.follower.index()),
            r_leader: outcome.r_leader,
            r_follower: outcome.r_follower,
            events: outcome.events,
            next_state: outcome.next_state.frontier.clone(),
            done: outcome.done,
        });
        state = outcome.next_state;
        if outcome.done {
            break;
        }
    }
    Ok(Episode {
        completion_steps: state.step_index,
        completed: task.is_complete(&state),
        cum_reward_leader: cum_l,
        cum_reward_follower: cum_f,
        final_state: state,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{bundled_task1, TaskSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det_config(task: &AssemblyTask) -> EnvConfig {
        EnvConfig { deterministic: true, ..EnvConfig::for_task(task) }
    }

    fn state_with(task: &AssemblyTask, completed: &[SubTaskId]) -> ChessboardState {
        let set = completed.iter().fold(TaskSet::EMPTY, |s, &id| s.with(id));
        ChessboardState { frontier: task.frontier_for(set), completed: set, step_index: 0 }
    }

    fn joint(l: usize, f: usize) -> JointAction {
        JointAction::new(Action::from_index(l), Action::from_index(f))
    }

    #[test]
    fn default_step_budget_rounds_up() {
        assert_eq!(default_max_steps(18), 40);
        assert_eq!(default_max_steps(20), 50);
        assert_eq!(default_max_steps(26), 60);
        assert_eq!(default_max_steps(1), 10);
    }

    #[test]
    fn joint_flip_example() {
        let task = bundled_task1();
        let state = state_with(&task, &[1, 2, 3, 4, 9, 10, 11, 12]);
        assert_eq!(state.frontier, vec![17, 17, 18, 18]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step(&state, &task, &joint(1, 2), &det_config(&task), &mut rng).unwrap();
        assert_eq!((out.r_leader, out.r_follower), (2.0, 2.0));
        assert_eq!(out.completed, vec![17]);
        assert_eq!(out.events, [EventKind::JointSuccess, EventKind::JointSuccess]);
        assert_eq!(out.next_state.frontier, vec![5, 6, 18, 18]);
    }

    #[test]
    fn joint_idle_example() {
        let task = bundled_task1();
        let state = task.initial_state();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step(&state, &task, &joint(0, 0), &EnvConfig::for_task(&task), &mut rng).unwrap();
        assert_eq!((out.r_leader, out.r_follower), (-0.5, -0.5));
        assert!(out.completed.is_empty());
        assert_eq!(out.next_state.frontier, state.frontier);
        assert_eq!(out.next_state.step_index, 1);
    }

    #[test]
    fn conflict_example() {
        let task = bundled_task1();
        let state = task.initial_state();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step(&state, &task, &joint(1, 1), &det_config(&task), &mut rng).unwrap();
        assert_eq!((out.r_leader, out.r_follower), (-1.0, -1.0));
        assert!(out.completed.is_empty());
        assert_eq!(out.events, [EventKind::Conflict, EventKind::Conflict]);
    }

    /// Independent transcription of the reward rules, used as an oracle.
    /// Returns per-agent rewards, whether each solo pick may roll, and
    /// whether the pair is a joint attempt.
    fn reward_oracle(
        task: &AssemblyTask,
        state: &ChessboardState,
        a_l: Action,
        a_f: Action,
        cfg: &EnvConfig,
    ) -> (f64, f64, bool) {
        let pick = |a: Action| -> Option<SubTaskId> {
            match a {
                Action::Idle => None,
                Action::Column(c) => {
                    let id = state.frontier[c as usize - 1];
                    (id != 0).then_some(id)
                }
            }
        };
        let t = |id: SubTaskId| task.task_type(id).code();
        match (a_l, a_f) {
            (Action::Idle, Action::Idle) => (cfg.r_cost / 2.0, cfg.r_cost / 2.0, false),
            _ => {
                let pl = pick(a_l);
                let pf = pick(a_f);
                if pl.is_some() && pl == pf {
                    let id = pl.unwrap();
                    if t(id) == 4 {
                        return (cfg.r_cop, cfg.r_cop, true);
                    }
                    return (cfg.r_cost, cfg.r_cost, false);
                }
                let side = |a: Action, p: Option<SubTaskId>, ok: &[u8]| -> f64 {
                    match a {
                        Action::Idle => 0.0,
                        Action::Column(_) => match p {
                            None => cfg.r_cost,
                            Some(id) => {
                                if ok.contains(&t(id)) {
                                    cfg.r_ind
                                } else {
                                    cfg.r_cost
                                }
                            }
                        },
                    }
                };
                (side(a_l, pl, &[1, 3]), side(a_f, pf, &[2, 3]), false)
            }
        }
    }

    /// Every reachable state of the bundled task, by mask exploration.
    fn reachable_states(task: &AssemblyTask) -> Vec<ChessboardState> {
        let mut seen = std::collections::HashSet::new();
        let mut queue = vec![task.initial_state()];
        let mut out = Vec::new();
        seen.insert(task.initial_state().completed);
        while let Some(state) = queue.pop() {
            for id in task.available_ids(&state) {
                let next = task.complete_subtask(&state, id).unwrap();
                if seen.insert(next.completed) {
                    queue.push(next.clone());
                }
            }
            out.push(state);
        }
        out
    }

    #[test]
    fn reward_table_is_exhaustively_consistent() {
        let task = bundled_task1();
        let cfg = EnvConfig::for_task(&task);
        let states = reachable_states(&task);
        assert!(states.len() > 100, "expected a rich reachable set, got {}", states.len());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for state in &states {
            if task.is_complete(state) {
                continue;
            }
            for l in 0..=4usize {
                for f in 0..=4usize {
                    let a = joint(l, f);
                    let (want_l, want_f, is_joint) =
                        reward_oracle(&task, state, a.leader, a.follower, &cfg);
                    let out = step(state, &task, &a, &cfg, &mut rng).unwrap();
                    assert_eq!(
                        (out.r_leader, out.r_follower),
                        (want_l, want_f),
                        "state {:?} action ({l},{f})",
                        state.frontier
                    );
                    if is_joint {
                        assert!(matches!(
                            out.events[0],
                            EventKind::JointSuccess | EventKind::JointFail
                        ));
                        assert_eq!(out.events[0], out.events[1]);
                    }
                    // Rewards never depend on the rng.
                    let mut rng2 = ChaCha8Rng::seed_from_u64(rng.gen());
                    let out2 = step(state, &task, &a, &cfg, &mut rng2).unwrap();
                    assert_eq!((out2.r_leader, out2.r_follower), (want_l, want_f));
                }
            }
        }
    }

    #[test]
    fn completion_frequencies_match_probabilities() {
        let task = bundled_task1();
        let cfg = EnvConfig::for_task(&task);
        let initial = task.initial_state();
        let mut rng = ChaCha8Rng::seed_from_u64(11);

        // Rule (b): leader solo attempt on sub-task 1.
        let mut hits = 0;
        for _ in 0..10_000 {
            let out = step(&initial, &task, &joint(1, 0), &cfg, &mut rng).unwrap();
            if out.events[0] == EventKind::Completed {
                hits += 1;
            }
        }
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.9).abs() <= 0.02, "solo completion frequency {freq}");

        // Rule (a): joint flip attempt.
        let flip = state_with(&task, &[1, 2, 3, 4, 9, 10, 11, 12]);
        let mut hits = 0;
        for _ in 0..10_000 {
            let out = step(&flip, &task, &joint(1, 2), &cfg, &mut rng).unwrap();
            if out.events[0] == EventKind::JointSuccess {
                hits += 1;
            }
        }
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.7).abs() <= 0.02, "joint completion frequency {freq}");
    }

    #[test]
    fn deterministic_flag_removes_failures() {
        let task = bundled_task1();
        let cfg = det_config(&task);
        let initial = task.initial_state();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = step(&initial, &task, &joint(1, 2), &cfg, &mut rng).unwrap();
            assert_eq!(out.events, [EventKind::Completed, EventKind::Completed]);
            assert_eq!(out.completed, vec![1, 2]);
        }
    }

    #[test]
    fn stepping_terminal_state_errors() {
        let task = bundled_task1();
        let cfg = EnvConfig::for_task(&task);
        let mut done = state_with(&task, &(1..=18).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(step(&done, &task, &joint(0, 0), &cfg, &mut rng), Err(Error::Terminal)));

        done.completed = TaskSet::EMPTY;
        done.frontier = task.frontier_for(TaskSet::EMPTY);
        done.step_index = cfg.max_steps;
        assert!(matches!(step(&done, &task, &joint(0, 0), &cfg, &mut rng), Err(Error::Terminal)));
    }

    #[test]
    fn idle_policy_rolls_out_to_budget() {
        let task = bundled_task1();
        let cfg = EnvConfig::for_task(&task);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = rollout(&task, |_| Ok(joint(0, 0)), &cfg, &mut rng).unwrap();
        assert_eq!(ep.completion_steps, cfg.max_steps);
        assert!(!ep.completed);
        assert_eq!(ep.cum_reward_leader, cfg.max_steps as f64 * -0.5);
        assert_eq!(ep.cum_reward_follower, cfg.max_steps as f64 * -0.5);
        assert_eq!(ep.steps.len(), cfg.max_steps as usize);
    }

    #[test]
    fn single_subtask_rollout_example() {
        let text = r#"{
            "name": "single",
            "n_columns": 1,
            "subtasks": [{ "id": 1, "type": 3, "label": "only" }],
            "edges": [],
            "placement": [{ "id": 1, "row": 1, "columns": [1, 1] }]
        }"#;
        let task = AssemblyTask::from_json_str(text).unwrap();
        let cfg = det_config(&task);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = rollout(&task, |_| Ok(joint(1, 0)), &cfg, &mut rng).unwrap();
        assert_eq!(ep.completion_steps, 1);
        assert!(ep.completed);
        assert_eq!((ep.cum_reward_leader, ep.cum_reward_follower), (1.0, 0.0));
    }

    /// An 11-step hand-written schedule for the bundled task, deterministic
    /// environment: pairs of solo work bracketing the two joint flips.
    #[test]
    fn handwritten_optimal_schedule_completes_in_eleven() {
        let task = bundled_task1();
        let cfg = det_config(&task);
        let schedule: Vec<JointAction> = vec![
            joint(1, 2), // 1, 2
            joint(1, 2), // 9, 10
            joint(1, 2), // flip 17 jointly
            joint(3, 4), // 3, 4
            joint(3, 4), // 11, 12
            joint(3, 4), // flip 18 jointly
            joint(0, 1), // 5
            joint(1, 2), // 13, 6
            joint(2, 3), // 14, 7
            joint(3, 4), // 15, 8
            joint(4, 0), // 16
        ];
        let mut i = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = rollout(
            &task,
            |_| {
                let a = schedule[i];
                i += 1;
                Ok(a)
            },
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert!(ep.completed);
        assert_eq!(ep.completion_steps, 11);
    }

    #[test]
    fn rollouts_are_reproducible_and_bounded() {
        let task = bundled_task1();
        let cfg = EnvConfig::for_task(&task);
        let policy = |rng_seed: u64| {
            let mut policy_rng = ChaCha8Rng::seed_from_u64(rng_seed);
            move |_: &ChessboardState| {
                Ok(joint(policy_rng.gen_range(0..5), policy_rng.gen_range(0..5)))
            }
        };
        for seed in 0..20 {
            let mut rng_a = ChaCha8Rng::seed_from_u64(seed);
            let mut rng_b = ChaCha8Rng::seed_from_u64(seed);
            let ep_a = rollout(&task, policy(seed), &cfg, &mut rng_a).unwrap();
            let ep_b = rollout(&task, policy(seed), &cfg, &mut rng_b).unwrap();
            assert_eq!(ep_a.completion_steps, ep_b.completion_steps);
            assert_eq!(ep_a.cum_reward_leader, ep_b.cum_reward_leader);
            assert_eq!(ep_a.cum_reward_follower, ep_b.cum_reward_follower);

            let hi = cfg.max_steps as f64 * cfg.r_cop.max(cfg.r_ind);
            let lo = cfg.max_steps as f64 * cfg.r_cost;
            for cum in [ep_a.cum_reward_leader, ep_a.cum_reward_follower] {
                assert!(cum <= hi && cum >= lo);
            }
        }
    }

    #[test]
    fn episode_records_serialize_line_per_step() {
        let task = bundled_task1();
        let cfg = det_config(&task);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = rollout(&task, |_| Ok(joint(1, 2)), &cfg, &mut rng).unwrap();
        let first = serde_json::to_string(&ep.steps[0]).unwrap();
        assert!(first.contains("\"step\":1"));
        assert!(first.contains("\"events\""));
    }
}

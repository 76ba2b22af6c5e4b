//! Chessboard task model.
//!
//! An assembly task is a set of typed sub-tasks arranged on a column grid
//! (the "chessboard") together with a precedence DAG. Sub-tasks stack inside
//! columns; the bottom-most uncompleted sub-task of each column whose
//! predecessors are all completed forms the frontier, which is the part of
//! the state the agents observe and act on. Completing a sub-task lets the
//! one above it drop down into the frontier.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sub-task identifier, 1-based and dense within a task.
pub type SubTaskId = u16;

/// Hard cap on sub-tasks per task; completed sets are stored as 64-bit masks.
pub const MAX_SUBTASKS: usize = 63;

/// Which robot(s) a sub-task requires.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum TaskType {
    /// Type 1: only the leader can perform it.
    LeaderOnly,
    /// Type 2: only the follower can perform it.
    FollowerOnly,
    /// Type 3: either robot can perform it alone.
    Either,
    /// Type 4: both robots must perform it together.
    Joint,
}

impl TaskType {
    pub fn code(self) -> u8 {
        match self {
            TaskType::LeaderOnly => 1,
            TaskType::FollowerOnly => 2,
            TaskType::Either => 3,
            TaskType::Joint => 4,
        }
    }

    /// True if `agent` can complete a sub-task of this type without help.
    pub fn solo_for(self, agent: AgentId) -> bool {
        match (self, agent) {
            (TaskType::Either, _) => true,
            (TaskType::LeaderOnly, AgentId::Leader) => true,
            (TaskType::FollowerOnly, AgentId::Follower) => true,
            _ => false,
        }
    }

    /// True if selecting this type can ever pay off for `agent`: solo types
    /// plus joint sub-tasks, which need the partner to select them too.
    pub fn productive_for(self, agent: AgentId) -> bool {
        self == TaskType::Joint || self.solo_for(agent)
    }
}

impl TryFrom<u8> for TaskType {
    type Error = String;
    fn try_from(code: u8) -> std::result::Result<Self, String> {
        match code {
            1 => Ok(TaskType::LeaderOnly),
            2 => Ok(TaskType::FollowerOnly),
            3 => Ok(TaskType::Either),
            4 => Ok(TaskType::Joint),
            other => Err(format!("sub-task type must be 1..4, got {other}")),
        }
    }
}

impl From<TaskType> for u8 {
    fn from(t: TaskType) -> u8 {
        t.code()
    }
}

/// The two robots. The leader commits to its action first when equilibria
/// are computed; the follower best-responds.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum AgentId {
    Leader,
    Follower,
}

impl AgentId {
    pub fn other(self) -> AgentId {
        match self {
            AgentId::Leader => AgentId::Follower,
            AgentId::Follower => AgentId::Leader,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Leader => write!(f, "L"),
            AgentId::Follower => write!(f, "F"),
        }
    }
}

impl FromStr for AgentId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "l" | "leader" => Ok(AgentId::Leader),
            "F" | "f" | "follower" => Ok(AgentId::Follower),
            other => Err(Error::Parse(format!("unknown agent {other:?}, expected L or F"))),
        }
    }
}

/// One agent's move: stay idle or act on a board column (1-based).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Action {
    Idle,
    Column(u8),
}

impl Action {
    /// Dense index with 0 reserved for idle and c for column c.
    pub fn index(self) -> usize {
        match self {
            Action::Idle => 0,
            Action::Column(c) => c as usize,
        }
    }

    /// Inverse of [`Action::index`]; callers guarantee `idx <= n_columns`.
    pub fn from_index(idx: usize) -> Action {
        if idx == 0 {
            Action::Idle
        } else {
            Action::Column(idx as u8)
        }
    }

    /// All actions available to one agent on a board with `n_columns`
    /// columns: idle followed by each column in order.
    pub fn all(n_columns: u8) -> Vec<Action> {
        let mut v = Vec::with_capacity(n_columns as usize + 1);
        v.push(Action::Idle);
        for c in 1..=n_columns {
            v.push(Action::Column(c));
        }
        v
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Idle => write!(f, "0"),
            Action::Column(c) => write!(f, "{c}"),
        }
    }
}

/// Set of sub-task ids packed into a 64-bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Debug)]
pub struct TaskSet(u64);

impl TaskSet {
    pub const EMPTY: TaskSet = TaskSet(0);

    pub fn contains(self, id: SubTaskId) -> bool {
        debug_assert!(id >= 1);
        self.0 & (1u64 << (id - 1)) != 0
    }

    pub fn insert(&mut self, id: SubTaskId) {
        debug_assert!(id >= 1 && (id as usize) <= MAX_SUBTASKS);
        self.0 |= 1u64 << (id - 1);
    }

    pub fn with(mut self, id: SubTaskId) -> TaskSet {
        self.insert(id);
        self
    }

    pub fn union(self, other: TaskSet) -> TaskSet {
        TaskSet(self.0 | other.0)
    }

    pub fn is_superset_of(self, other: TaskSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn from_bits(bits: u64) -> TaskSet {
        TaskSet(bits)
    }

    /// Ids in ascending order.
    pub fn iter(self) -> impl Iterator<Item = SubTaskId> {
        (1..=MAX_SUBTASKS as u16).filter(move |id| self.contains(*id))
    }
}

/// One typed unit of work.
#[derive(Clone, Debug)]
pub struct SubTask {
    pub id: SubTaskId,
    pub task_type: TaskType,
    pub label: String,
}

/// Grid position of a sub-task: its row and the contiguous column range it
/// covers (both 1-based, range inclusive).
#[derive(Clone, Copy, Debug)]
pub struct Placement {
    pub row: u16,
    pub col_lo: u8,
    pub col_hi: u8,
}

impl Placement {
    pub fn covers(&self, col: u8) -> bool {
        self.col_lo <= col && col <= self.col_hi
    }
}

/// Observable state of a task in progress: the per-column frontier (0 marks
/// a column with nothing currently available), the set of completed
/// sub-tasks, and how many environment steps have elapsed.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ChessboardState {
    pub frontier: Vec<SubTaskId>,
    pub completed: TaskSet,
    pub step_index: u32,
}

/// Full action space for one agent plus a diagnostic annotation of which
/// actions are productive (frontier sub-task of a compatible type, or idle
/// when nothing else is).
#[derive(Clone, Debug)]
pub struct ActionSet {
    pub actions: Vec<Action>,
    pub productive: Vec<Action>,
}

/// A validated assembly task: sub-tasks, precedence DAG, and board layout.
#[derive(Clone, Debug)]
pub struct AssemblyTask {
    name: String,
    n_columns: u8,
    subtasks: Vec<SubTask>,
    edges: Vec<(SubTaskId, SubTaskId)>,
    placements: Vec<Placement>,
    /// Per column (0-based), ids ordered bottom-up by row.
    columns: Vec<Vec<SubTaskId>>,
    /// Direct predecessors per id.
    preds: Vec<TaskSet>,
    all_ids: TaskSet,
}

/// On-disk schema for task files.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    name: String,
    n_columns: u8,
    subtasks: Vec<SubTaskEntry>,
    edges: Vec<(SubTaskId, SubTaskId)>,
    placement: Vec<PlacementEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubTaskEntry {
    id: SubTaskId,
    #[serde(rename = "type")]
    task_type: u8,
    label: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlacementEntry {
    id: SubTaskId,
    row: u16,
    columns: (u8, u8),
}

/// Load and validate a task file. See [`AssemblyTask::load`].
pub fn load_task<P: AsRef<Path>>(path: P) -> Result<AssemblyTask> {
    AssemblyTask::load(path)
}

impl AssemblyTask {
    /// Load and validate a task from a file.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<AssemblyTask> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::Validation(format!("task file not found: {}", path.display())));
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
            .map_err(|e| match e {
                Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
                Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    /// Parse and validate a task from its file syntax.
    pub fn from_json_str(text: &str) -> Result<AssemblyTask> {
        let file: TaskFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file_schema(file)
    }

    /// Serialize back to the file syntax (stable field order, pretty).
    pub fn to_json_string(&self) -> String {
        let file = TaskFile {
            name: self.name.clone(),
            n_columns: self.n_columns,
            subtasks: self
                .subtasks
                .iter()
                .map(|s| SubTaskEntry { id: s.id, task_type: s.task_type.code(), label: s.label.clone() })
                .collect(),
            edges: self.edges.clone(),
            placement: self
                .subtasks
                .iter()
                .map(|s| {
                    let p = self.placement(s.id);
                    PlacementEntry { id: s.id, row: p.row, columns: (p.col_lo, p.col_hi) }
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("task serialization");
        text.push('\n');
        text
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    fn from_file_schema(file: TaskFile) -> Result<AssemblyTask> {
        let k = file.subtasks.len();
        if k == 0 {
            return Err(Error::Validation("task has no sub-tasks".into()));
        }
        if k > MAX_SUBTASKS {
            return Err(Error::Validation(format!(
                "task has {k} sub-tasks; at most {MAX_SUBTASKS} are supported"
            )));
        }
        if file.n_columns == 0 {
            return Err(Error::Validation("n_columns must be at least 1".into()));
        }

        // Ids must be exactly 1..K.
        let mut subtasks: Vec<Option<SubTask>> = vec![None; k];
        for entry in &file.subtasks {
            let id = entry.id;
            if id == 0 || id as usize > k {
                return Err(Error::Validation(format!(
                    "sub-task id {id} outside 1..{k} (ids must be dense)"
                )));
            }
            let slot = &mut subtasks[id as usize - 1];
            if slot.is_some() {
                return Err(Error::Validation(format!("duplicate sub-task id {id}")));
            }
            let task_type = TaskType::try_from(entry.task_type)
                .map_err(|m| Error::Validation(format!("sub-task {id}: {m}")))?;
            *slot = Some(SubTask { id, task_type, label: entry.label.clone() });
        }
        let subtasks: Vec<SubTask> = subtasks.into_iter().map(|s| s.unwrap()).collect();

        // Exactly one placement per id, inside the board.
        let mut placements: Vec<Option<Placement>> = vec![None; k];
        for entry in &file.placement {
            let id = entry.id;
            if id == 0 || id as usize > k {
                return Err(Error::Validation(format!("placement for unknown sub-task id {id}")));
            }
            let (lo, hi) = entry.columns;
            if lo == 0 || hi < lo || hi > file.n_columns {
                return Err(Error::Validation(format!(
                    "sub-task {id}: column range [{lo},{hi}] invalid for {} columns",
                    file.n_columns
                )));
            }
            if entry.row == 0 {
                return Err(Error::Validation(format!("sub-task {id}: row must be 1-based")));
            }
            let slot = &mut placements[id as usize - 1];
            if slot.is_some() {
                return Err(Error::Validation(format!("duplicate placement for sub-task {id}")));
            }
            *slot = Some(Placement { row: entry.row, col_lo: lo, col_hi: hi });
        }
        for (i, p) in placements.iter().enumerate() {
            if p.is_none() {
                return Err(Error::Validation(format!("sub-task {} has no placement", i + 1)));
            }
        }
        let placements: Vec<Placement> = placements.into_iter().map(|p| p.unwrap()).collect();

        // No two sub-tasks may share a grid cell.
        let mut cells: HashMap<(u8, u16), SubTaskId> = HashMap::new();
        for st in &subtasks {
            let p = placements[st.id as usize - 1];
            for col in p.col_lo..=p.col_hi {
                if let Some(prev) = cells.insert((col, p.row), st.id) {
                    return Err(Error::Validation(format!(
                        "sub-tasks {prev} and {} overlap at column {col}, row {}",
                        st.id, p.row
                    )));
                }
            }
        }

        // Edges reference valid ids, no self loops or duplicates.
        let mut preds: Vec<TaskSet> = vec![TaskSet::EMPTY; k];
        let mut succs: Vec<Vec<SubTaskId>> = vec![Vec::new(); k];
        for &(u, v) in &file.edges {
            if u == 0 || u as usize > k || v == 0 || v as usize > k {
                return Err(Error::Validation(format!("edge ({u},{v}) references unknown ids")));
            }
            if u == v {
                return Err(Error::Validation(format!("self edge on sub-task {u}")));
            }
            if preds[v as usize - 1].contains(u) {
                return Err(Error::Validation(format!("duplicate edge ({u},{v})")));
            }
            preds[v as usize - 1].insert(u);
            succs[u as usize - 1].push(v);
        }

        // Topological order; leftovers expose a cycle.
        let mut indeg: Vec<usize> = preds.iter().map(|p| p.len()).collect();
        let mut queue: Vec<SubTaskId> = (1..=k as u16).filter(|&id| indeg[id as usize - 1] == 0).collect();
        let mut topo: Vec<SubTaskId> = Vec::with_capacity(k);
        while let Some(id) = queue.pop() {
            topo.push(id);
            for &s in &succs[id as usize - 1] {
                indeg[s as usize - 1] -= 1;
                if indeg[s as usize - 1] == 0 {
                    queue.push(s);
                }
            }
        }
        if topo.len() != k {
            let cyclic: Vec<SubTaskId> =
                (1..=k as u16).filter(|&id| indeg[id as usize - 1] > 0).collect();
            return Err(Error::Validation(format!(
                "precedence cycle involving sub-tasks {cyclic:?}"
            )));
        }

        // Row consistency: a predecessor sharing a column must sit strictly
        // below its successor.
        for &(u, v) in &file.edges {
            let pu = placements[u as usize - 1];
            let pv = placements[v as usize - 1];
            let share = pu.col_lo <= pv.col_hi && pv.col_lo <= pu.col_hi;
            if share && pu.row >= pv.row {
                return Err(Error::Validation(format!(
                    "edge ({u},{v}) inconsistent with rows: {u} is at row {} and {v} at row {}",
                    pu.row, pv.row
                )));
            }
        }

        // Stacking: everything below a sub-task in any of its columns must be
        // among its ancestors.
        let mut ancestors: Vec<TaskSet> = vec![TaskSet::EMPTY; k];
        for &id in &topo {
            let mut anc = TaskSet::EMPTY;
            for p in preds[id as usize - 1].iter() {
                anc = anc.union(ancestors[p as usize - 1]).with(p);
            }
            ancestors[id as usize - 1] = anc;
        }
        let mut columns: Vec<Vec<SubTaskId>> = vec![Vec::new(); file.n_columns as usize];
        for st in &subtasks {
            let p = placements[st.id as usize - 1];
            for col in p.col_lo..=p.col_hi {
                columns[col as usize - 1].push(st.id);
            }
        }
        for col in columns.iter_mut() {
            col.sort_by_key(|&id| placements[id as usize - 1].row);
        }
        for (ci, col) in columns.iter().enumerate() {
            for (i, &upper) in col.iter().enumerate() {
                for &lower in &col[..i] {
                    if !ancestors[upper as usize - 1].contains(lower) {
                        return Err(Error::Validation(format!(
                            "column {}: sub-task {lower} sits below {upper} but is not its \
                             predecessor",
                            ci + 1
                        )));
                    }
                }
            }
        }

        let mut all_ids = TaskSet::EMPTY;
        for id in 1..=k as u16 {
            all_ids.insert(id);
        }

        Ok(AssemblyTask {
            name: file.name,
            n_columns: file.n_columns,
            subtasks,
            edges: file.edges,
            placements,
            columns,
            preds,
            all_ids,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_columns(&self) -> u8 {
        self.n_columns
    }

    pub fn n_subtasks(&self) -> usize {
        self.subtasks.len()
    }

    /// Number of joint actions per agent: idle plus one per column.
    pub fn n_actions(&self) -> usize {
        self.n_columns as usize + 1
    }

    pub fn subtasks(&self) -> &[SubTask] {
        &self.subtasks
    }

    pub fn edges(&self) -> &[(SubTaskId, SubTaskId)] {
        &self.edges
    }

    pub fn subtask(&self, id: SubTaskId) -> &SubTask {
        &self.subtasks[id as usize - 1]
    }

    pub fn task_type(&self, id: SubTaskId) -> TaskType {
        self.subtasks[id as usize - 1].task_type
    }

    pub fn placement(&self, id: SubTaskId) -> Placement {
        self.placements[id as usize - 1]
    }

    /// Ids stacked in a column (0-based index), ordered bottom-up.
    pub fn column(&self, col: usize) -> &[SubTaskId] {
        &self.columns[col]
    }

    pub fn predecessors(&self, id: SubTaskId) -> TaskSet {
        self.preds[id as usize - 1]
    }

    pub fn full_set(&self) -> TaskSet {
        self.all_ids
    }

    /// The frontier implied by a completed set: per column, the lowest
    /// uncompleted sub-task if all of its predecessors are completed, else 0.
    pub fn frontier_for(&self, completed: TaskSet) -> Vec<SubTaskId> {
        self.columns
            .iter()
            .map(|col| {
                for &id in col {
                    if completed.contains(id) {
                        continue;
                    }
                    if completed.is_superset_of(self.preds[id as usize - 1]) {
                        return id;
                    }
                    return 0;
                }
                0
            })
            .collect()
    }

    /// Fresh state: nothing completed, frontier of all no-predecessor
    /// sub-tasks, step counter at zero.
    pub fn initial_state(&self) -> ChessboardState {
        ChessboardState {
            frontier: self.frontier_for(TaskSet::EMPTY),
            completed: TaskSet::EMPTY,
            step_index: 0,
        }
    }

    /// Mark `id` completed and drop successors down. Pure: returns the new
    /// state, leaving the step counter to the environment.
    pub fn complete_subtask(&self, state: &ChessboardState, id: SubTaskId) -> Result<ChessboardState> {
        if !state.frontier.contains(&id) {
            return Err(Error::NotAvailable(id));
        }
        let completed = state.completed.with(id);
        Ok(ChessboardState {
            frontier: self.frontier_for(completed),
            completed,
            step_index: state.step_index,
        })
    }

    /// Distinct non-zero frontier ids, ascending.
    pub fn available_ids(&self, state: &ChessboardState) -> Vec<SubTaskId> {
        let mut ids: Vec<SubTaskId> = state.frontier.iter().copied().filter(|&id| id != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Full action space for `agent` with productivity annotations. Agents
    /// may always choose any action; `productive` only feeds diagnostics.
    pub fn available_actions(&self, state: &ChessboardState, agent: AgentId) -> ActionSet {
        let actions = Action::all(self.n_columns);
        let mut productive = Vec::new();
        for (ci, &id) in state.frontier.iter().enumerate() {
            if id != 0 && self.task_type(id).productive_for(agent) {
                productive.push(Action::Column(ci as u8 + 1));
            }
        }
        if productive.is_empty() {
            productive.push(Action::Idle);
        }
        ActionSet { actions, productive }
    }

    pub fn is_complete(&self, state: &ChessboardState) -> bool {
        state.completed == self.all_ids
    }
}

/// The bundled 18 sub-task, 4-column desk assembly demonstration task.
pub fn bundled_task1() -> AssemblyTask {
    AssemblyTask::from_json_str(include_str!("../../../tasks/task1"))
        .expect("bundled task1 must validate")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_task(task_type: u8) -> AssemblyTask {
        AssemblyTask::from_json_str(&format!(
            r#"{{
                "name": "single",
                "n_columns": 1,
                "subtasks": [{{ "id": 1, "type": {task_type}, "label": "only" }}],
                "edges": [],
                "placement": [{{ "id": 1, "row": 1, "columns": [1, 1] }}]
            }}"#
        ))
        .unwrap()
    }

    /// Two columns, column 2's sole sub-task depends on column 1's.
    fn cross_column_chain() -> AssemblyTask {
        AssemblyTask::from_json_str(
            r#"{
                "name": "chain",
                "n_columns": 2,
                "subtasks": [
                    { "id": 1, "type": 3, "label": "a" },
                    { "id": 2, "type": 3, "label": "b" }
                ],
                "edges": [[1, 2]],
                "placement": [
                    { "id": 1, "row": 1, "columns": [1, 1] },
                    { "id": 2, "row": 1, "columns": [2, 2] }
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn task1_loads_with_expected_shape() {
        let task = bundled_task1();
        assert_eq!(task.n_subtasks(), 18);
        assert_eq!(task.n_columns(), 4);
        assert_eq!(task.edges().len(), 16);
        let code = |id: SubTaskId| task.task_type(id).code();
        for id in 1..=4 {
            assert_eq!(code(id), 3);
        }
        for id in 5..=8 {
            assert_eq!(code(id), 2);
        }
        for id in 9..=12 {
            assert_eq!(code(id), 3);
        }
        for id in 13..=16 {
            assert_eq!(code(id), 1);
        }
        for id in 17..=18 {
            assert_eq!(code(id), 4);
        }
        let p17 = task.placement(17);
        assert_eq!((p17.col_lo, p17.col_hi, p17.row), (1, 2, 3));
    }

    #[test]
    fn task1_loads_from_disk_too() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../tasks/task1");
        let task = load_task(path).unwrap();
        assert_eq!(task.n_subtasks(), 18);
    }

    #[test]
    fn minimal_single_subtask_is_valid() {
        let task = single_task(3);
        assert_eq!(task.n_subtasks(), 1);
        assert_eq!(task.initial_state().frontier, vec![1]);
    }

    #[test]
    fn cycle_is_rejected_naming_ids() {
        let err = AssemblyTask::from_json_str(
            r#"{
                "name": "cycle",
                "n_columns": 2,
                "subtasks": [
                    { "id": 1, "type": 3, "label": "a" },
                    { "id": 2, "type": 3, "label": "b" }
                ],
                "edges": [[1, 2], [2, 1]],
                "placement": [
                    { "id": 1, "row": 1, "columns": [1, 1] },
                    { "id": 2, "row": 1, "columns": [2, 2] }
                ]
            }"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cycle"), "unexpected message: {msg}");
        assert!(msg.contains('1') && msg.contains('2'), "cycle should name ids: {msg}");
    }

    #[test]
    fn overlap_and_bad_rows_are_rejected() {
        let overlap = AssemblyTask::from_json_str(
            r#"{
                "name": "overlap",
                "n_columns": 1,
                "subtasks": [
                    { "id": 1, "type": 3, "label": "a" },
                    { "id": 2, "type": 3, "label": "b" }
                ],
                "edges": [],
                "placement": [
                    { "id": 1, "row": 1, "columns": [1, 1] },
                    { "id": 2, "row": 1, "columns": [1, 1] }
                ]
            }"#,
        )
        .unwrap_err();
        assert!(overlap.to_string().contains("overlap"));

        let rows = AssemblyTask::from_json_str(
            r#"{
                "name": "rows",
                "n_columns": 1,
                "subtasks": [
                    { "id": 1, "type": 3, "label": "a" },
                    { "id": 2, "type": 3, "label": "b" }
                ],
                "edges": [[2, 1]],
                "placement": [
                    { "id": 1, "row": 1, "columns": [1, 1] },
                    { "id": 2, "row": 2, "columns": [1, 1] }
                ]
            }"#,
        )
        .unwrap_err();
        assert!(rows.to_string().contains("rows"), "got: {rows}");
    }

    #[test]
    fn stacking_violation_is_rejected() {
        // 2 sits above 1 in the same column but has no path from 1.
        let err = AssemblyTask::from_json_str(
            r#"{
                "name": "stack",
                "n_columns": 1,
                "subtasks": [
                    { "id": 1, "type": 3, "label": "a" },
                    { "id": 2, "type": 3, "label": "b" }
                ],
                "edges": [],
                "placement": [
                    { "id": 1, "row": 1, "columns": [1, 1] },
                    { "id": 2, "row": 2, "columns": [1, 1] }
                ]
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("predecessor"), "got: {err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = AssemblyTask::from_json_str(
            r#"{ "name": "x", "n_columns": 1, "subtasks": [], "edges": [], "placement": [], "extra": 1 }"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn initial_state_matches_examples() {
        let task = bundled_task1();
        let s0 = task.initial_state();
        assert_eq!(s0.frontier, vec![1, 2, 3, 4]);
        assert!(s0.completed.is_empty());
        assert_eq!(s0.step_index, 0);

        let chain = cross_column_chain();
        assert_eq!(chain.initial_state().frontier, vec![1, 0]);
    }

    #[test]
    fn completion_drops_successors_down() {
        let task = bundled_task1();
        let s0 = task.initial_state();
        let s1 = task.complete_subtask(&s0, 1).unwrap();
        let s2 = task.complete_subtask(&s1, 2).unwrap();
        assert_eq!(s2.frontier, vec![9, 10, 3, 4]);

        // The flip needs both screws done first.
        let s3 = task.complete_subtask(&s2, 9).unwrap();
        assert_eq!(s3.frontier, vec![0, 10, 3, 4]);
        let s4 = task.complete_subtask(&s3, 10).unwrap();
        assert_eq!(s4.frontier, vec![17, 17, 3, 4]);
    }

    #[test]
    fn completing_everything_empties_the_frontier() {
        let task = bundled_task1();
        let mut state = task.initial_state();
        while let Some(&id) = task.available_ids(&state).first() {
            state = task.complete_subtask(&state, id).unwrap();
        }
        assert_eq!(state.frontier, vec![0, 0, 0, 0]);
        assert_eq!(state.completed, task.full_set());
    }

    #[test]
    fn unavailable_completion_is_rejected() {
        let task = bundled_task1();
        let s0 = task.initial_state();
        let err = task.complete_subtask(&s0, 17).unwrap_err();
        assert!(matches!(err, Error::NotAvailable(17)));
    }

    #[test]
    fn productive_annotations_match_type_table() {
        let task = bundled_task1();
        let s0 = task.initial_state();
        let l = task.available_actions(&s0, AgentId::Leader);
        assert_eq!(l.actions, Action::all(4));
        assert_eq!(
            l.productive,
            vec![Action::Column(1), Action::Column(2), Action::Column(3), Action::Column(4)]
        );

        // Frontier [5,6,7,8] is all follower-only work.
        let completed = (1..=4)
            .chain(9..=12)
            .chain(17..=18)
            .fold(TaskSet::EMPTY, |s, id| s.with(id));
        let state = ChessboardState { frontier: task.frontier_for(completed), completed, step_index: 0 };
        assert_eq!(state.frontier, vec![5, 6, 7, 8]);
        let l = task.available_actions(&state, AgentId::Leader);
        assert_eq!(l.productive, vec![Action::Idle]);
        assert_eq!(l.actions.len(), 5);
        let f = task.available_actions(&state, AgentId::Follower);
        assert_eq!(f.productive.len(), 4);

        // Exhausted board: idle is the only productive move.
        let full = task.full_set();
        let done = ChessboardState { frontier: task.frontier_for(full), completed: full, step_index: 0 };
        let l = task.available_actions(&done, AgentId::Leader);
        assert_eq!(l.productive, vec![Action::Idle]);
    }

    #[test]
    fn save_load_round_trip_preserves_structure() {
        let task = bundled_task1();
        let text = task.to_json_string();
        let again = AssemblyTask::from_json_str(&text).unwrap();
        assert_eq!(again.n_subtasks(), task.n_subtasks());
        assert_eq!(again.edges(), task.edges());
        assert_eq!(again.to_json_string(), text);
    }

    /// Walk random precedence-respecting completion orders and check the
    /// state invariants at every step.
    fn check_trajectory(task: &AssemblyTask, picks: &[prop::sample::Index]) {
        let mut state = task.initial_state();
        let mut seen = TaskSet::EMPTY;
        for pick in picks {
            let avail = task.available_ids(&state);
            if avail.is_empty() {
                break;
            }
            let prev_avail = avail.clone();
            let id = avail[pick.index(avail.len())];
            let next = task.complete_subtask(&state, id).unwrap();

            // completed only grows.
            assert!(next.completed.is_superset_of(state.completed));
            assert!(next.completed.contains(id));
            seen = seen.union(next.completed);

            // Frontier entries are uncompleted with all predecessors done,
            // and appear in exactly their occupied columns.
            for (ci, &fid) in next.frontier.iter().enumerate() {
                if fid == 0 {
                    continue;
                }
                assert!(!next.completed.contains(fid));
                assert!(next.completed.is_superset_of(task.predecessors(fid)));
                assert!(task.placement(fid).covers(ci as u8 + 1));
            }
            for &fid in &next.frontier {
                if fid == 0 {
                    continue;
                }
                let p = task.placement(fid);
                for col in p.col_lo..=p.col_hi {
                    assert_eq!(
                        next.frontier[col as usize - 1], fid,
                        "merged sub-task {fid} must fill all covered columns"
                    );
                }
            }

            // Previously available work never disappears.
            for &a in &prev_avail {
                if a != id {
                    assert!(
                        task.available_ids(&next).contains(&a),
                        "completing {id} hid available sub-task {a}"
                    );
                }
            }
            state = next;
        }
        if state.completed == task.full_set() {
            assert!(state.frontier.iter().all(|&f| f == 0));
        }
    }

    proptest! {
        #[test]
        fn trajectory_invariants_hold(picks in prop::collection::vec(any::<prop::sample::Index>(), 18)) {
            check_trajectory(&bundled_task1(), &picks);
        }

        #[test]
        fn trajectory_invariants_hold_on_chain(picks in prop::collection::vec(any::<prop::sample::Index>(), 2)) {
            check_trajectory(&cross_column_chain(), &picks);
        }
    }
}

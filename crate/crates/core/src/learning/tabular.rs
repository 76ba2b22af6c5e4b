//! Tabular reference learner with a Stackelberg backup.
//!
//! Exact joint-action Q-tables for tiny games, updated one transition at a
//! time. The next-state action pair is the Stackelberg equilibrium of the
//! table's own bimatrix at that state, so a converged table is a fixed point
//! of equilibrium-backup value iteration.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::games::{stackelberg_equilibrium, BimatrixGame, TieBreak};
use crate::task::AgentId;

/// Joint-action Q-tables for both agents over a small discrete state space.
#[derive(Clone, Debug)]
pub struct TabularQ {
    n_states: usize,
    n_rows: usize,
    n_cols: usize,
    q_leader: Vec<f64>,
    q_follower: Vec<f64>,
}

/// One tabular transition; `done` suppresses the future term.
#[derive(Clone, Copy, Debug)]
pub struct TabularTransition {
    pub state: usize,
    pub action: (usize, usize),
    pub r_leader: f64,
    pub r_follower: f64,
    pub next_state: usize,
    pub done: bool,
}

impl TabularQ {
    pub fn zeros(n_states: usize, n_rows: usize, n_cols: usize) -> TabularQ {
        TabularQ {
            n_states,
            n_rows,
            n_cols,
            q_leader: vec![0.0; n_states * n_rows * n_cols],
            q_follower: vec![0.0; n_states * n_rows * n_cols],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    fn idx(&self, state: usize, action: (usize, usize)) -> Result<usize> {
        let (r, c) = action;
        if state >= self.n_states || r >= self.n_rows || c >= self.n_cols {
            return Err(Error::IndexOutOfRange(format!(
                "state {state}, action ({r},{c}) in a {}x{}x{} table",
                self.n_states, self.n_rows, self.n_cols
            )));
        }
        Ok((state * self.n_rows + r) * self.n_cols + c)
    }

    pub fn q(&self, agent: AgentId, state: usize, action: (usize, usize)) -> Result<f64> {
        let i = self.idx(state, action)?;
        Ok(match agent {
            AgentId::Leader => self.q_leader[i],
            AgentId::Follower => self.q_follower[i],
        })
    }

    pub fn set_q(&mut self, agent: AgentId, state: usize, action: (usize, usize), v: f64) -> Result<()> {
        let i = self.idx(state, action)?;
        match agent {
            AgentId::Leader => self.q_leader[i] = v,
            AgentId::Follower => self.q_follower[i] = v,
        }
        Ok(())
    }

    /// The bimatrix game formed by both tables at one state.
    pub fn game_at(&self, state: usize) -> Result<BimatrixGame> {
        if state >= self.n_states {
            return Err(Error::IndexOutOfRange(format!(
                "state {state} in a {}-state table",
                self.n_states
            )));
        }
        let base = state * self.n_rows * self.n_cols;
        let slice = |q: &[f64]| {
            Array2::from_shape_vec(
                (self.n_rows, self.n_cols),
                q[base..base + self.n_rows * self.n_cols].to_vec(),
            )
            .expect("table slice shape")
        };
        BimatrixGame::new(slice(&self.q_leader), slice(&self.q_follower))
    }
}

/// In-place update of both tables from one transition:
/// `Q_i(s,a) <- (1-alpha) Q_i(s,a) + alpha (r_i + gamma Q_i(s', a'_SE))`
/// with `a'_SE` the Stackelberg pair of the tables' game at `s'`, and a zero
/// future term on terminal transitions.
pub fn tabular_stackelberg_update(
    tables: &mut TabularQ,
    transition: &TabularTransition,
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    let i = tables.idx(transition.state, transition.action)?;
    let (fut_l, fut_f) = if transition.done {
        (0.0, 0.0)
    } else {
        let game = tables.game_at(transition.next_state)?;
        let pair = stackelberg_equilibrium(&game, TieBreak::LowestIndex);
        (
            tables.q(AgentId::Leader, transition.next_state, pair)?,
            tables.q(AgentId::Follower, transition.next_state, pair)?,
        )
    };
    tables.q_leader[i] = (1.0 - alpha) * tables.q_leader[i]
        + alpha * (transition.r_leader + gamma * fut_l);
    tables.q_follower[i] = (1.0 - alpha) * tables.q_follower[i]
        + alpha * (transition.r_follower + gamma * fut_f);
    Ok(())
}

pub mod env;
pub mod error;
pub mod games;
pub mod harness;
pub mod learning;
pub mod neural;
pub mod task;

pub use env::{EnvConfig, JointAction, StepOutcome};
pub use error::{Error, Result};
pub use games::{BimatrixGame, TieBreak};
pub use learning::{Algorithm, EvalMetrics, TrainConfig, TrainedModel};
pub use task::{Action, AgentId, AssemblyTask, ChessboardState, SubTaskId};

//! Evaluation of a law on a regulated event, and application of the
//! resulting ruling to the agent's controller.

mod apply;
mod eval;
mod ruling;
mod types;

pub use apply::{apply_ruling, Effect};
pub use eval::{check_constraint, evaluate, EvalError, Evaluation};
pub use ruling::{ControlOp, Ruling};
pub use types::{keyed_name, AgentId, ControlState, Layer, MessageClass, Origin, Overlay, Payload, RegulatedEvent, StateView};

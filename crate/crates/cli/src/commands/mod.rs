mod evaluate;
mod labels;
mod matching;
mod refine;
mod simulate;

pub use evaluate::{cmd_evaluate, EvaluateArgs};
pub use labels::{cmd_labels, LabelsArgs};
pub use matching::{cmd_match, MatchArgs, MatrixFormat};
pub use refine::{cmd_refine, RefineArgs};
pub use simulate::{cmd_simulate, SimulateArgs, DEFAULT_SWEEP};

//! Design updates: the moving-asymptotes optimizer and the outer loop.

pub mod design;
pub mod mma;

pub use design::{
    format_log, run_design, BestIterate, BetaSchedule, Checkpoint, DesignObserver, DesignResult, IterationRecord,
    LoopConfig, CHECKPOINT_DENSITY, CHECKPOINT_STATE, LOG_HEADER,
};
pub use mma::{Constraints, MmaParams, MmaState};

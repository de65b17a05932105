//! Problem model shared by every other module: instances, batches,
//! fractional and integral solutions, LP/dual feasibility checkers, and the
//! exact buffer-eviction simulator.

mod batch;
mod instance;
mod schedule;
mod solution;

pub use batch::{validate_batch, Batch, BatchViolation};
pub use instance::{availability, ColorId, Instance};
pub use schedule::{
    schedule_cost, simulate_evictions, validate_schedule, BufferView, EvictionSim,
    IntegralSchedule, ScheduleError,
};
pub use solution::{
    check_lp_feasibility, dual_max_violation, DualCheck, DualSolution, FractionalSolution,
    LpReport, LpViolation, SOLUTION_FORMAT_VERSION,
};

/// Absolute tolerance for all feasibility comparisons on weights in [0, 1].
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("instance parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("batch #{index} is invalid: {violations:?}")]
    InvalidBatch {
        index: usize,
        violations: Vec<BatchViolation>,
    },
    #[error("instance too large for exhaustive dual enumeration: n = {n} exceeds cap {cap}")]
    DualEnumerationTooLarge { n: usize, cap: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(#[from] ScheduleError),
    #[error("eviction decision named color id {color} which is not in the buffer")]
    ColorNotInBuffer { color: ColorId },
}

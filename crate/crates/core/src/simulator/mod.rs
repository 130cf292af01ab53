//! Event-driven simulation of the offered waiting time `V^n` of the
//! GI/GI/1+GI queue. Between arrivals the path drains linearly, so all
//! time-weighted statistics are integrated exactly per segment.

mod engine;
mod run;
mod stats;

pub use engine::{accumulate_segment, step, SegmentStats, StepOutcome};
pub use run::{
    default_burn_in, simulate, simulate_coupled, simulate_coupled_with, CoupledOutcome, InitialState, InputStreams,
    SimConfig, DEFAULT_NUM_BATCHES, MIN_BURN_IN, PATH_DUMP_MAX_ROWS,
};
pub(crate) use stats::BatchSeries;
pub use stats::{Estimate, MomentEstimate, PathCheck, SimResult, CI_Z};

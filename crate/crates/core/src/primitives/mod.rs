//! Input laws of the model: unit-mean inter-arrival and service times,
//! heavy-traffic rate parameters, and patience-time families with their
//! limiting functions.

mod checks;
mod function;
mod patience;
mod spec;

pub use checks::{
    check_a3, check_a4, check_moment_condition, check_unbounded_interarrival, A3Report, A3Row, A4Report, MONOTONE_SLACK,
};
pub use function::{CustomFn, PiecewiseLinear, ScalarFn, QUAD_ABS_TOL, QUAD_MAX_SUBDIVISIONS};
pub use patience::{Growth, PatienceDist, PatienceFamily, PatienceKind, PatienceSpec, PatienceVariant};
pub use spec::{HeavyTrafficParams, Primitive, PrimitiveSpec};

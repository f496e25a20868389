//! Relaxed optimal control on sampled attainability sets.
//!
//! The pipeline replaces a controlled system's right-hand side by its lower
//! convex and upper concave envelopes, and the running cost by its lower
//! convex envelope, over the region the original system can reach. Both
//! relaxed systems are then optimized by direct search over piecewise-constant
//! controls and compared against the original problem.

pub mod control;
pub mod envelope;
pub mod expr;
pub mod io;
pub mod ode;
pub mod problem;
pub mod reach;
pub mod relax;

pub use control::{ControlBox, ControlSignal, SamplingStrategy};
pub use expr::{EvalEnv, EvalError, Expr, ParseError};
pub use ode::{IntegrateOptions, Trajectory};
pub use problem::{Dynamics, ProblemSpec, TimeMode};

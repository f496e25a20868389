//! Control problem definition and the dynamics interface the integrator consumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControlBox;
use crate::expr::{EvalEnv, EvalError, Expr, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("in `{field}`: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// Cost evaluated at the horizon.
    #[default]
    Fixed,
    /// Cost minimized over the stopping time as well.
    Free,
}

/// Augmented controlled system: `x' = phi(x, u, t)`, `y' = f(x, u, t)`.
///
/// Implementations must be pure; the integrator calls them from many threads.
pub trait Dynamics: Sync {
    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    fn initial_state(&self) -> &[f64];

    fn rhs(&self, x: &[f64], u: &[f64], t: f64, dx: &mut [f64]) -> Result<(), EvalError>;

    fn running_cost(&self, x: &[f64], u: &[f64], t: f64) -> Result<f64, EvalError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub n: usize,
    pub r: usize,
    pub phi: Vec<Expr>,
    pub f: Expr,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub control_box: ControlBox,
    pub time_mode: TimeMode,
}

impl ProblemSpec {
    /// Builds a problem from expression sources, validating dimensions.
    pub fn from_sources(
        phi: &[&str],
        f: &str,
        x0: Vec<f64>,
        horizon: f64,
        control_box: ControlBox,
        time_mode: TimeMode,
    ) -> Result<Self, ProblemError> {
        let n = phi.len();
        let r = control_box.dim();
        let phi = phi
            .iter()
            .enumerate()
            .map(|(i, src)| {
                Expr::parse(src, (n, r)).map_err(|source| ProblemError::Parse {
                    field: format!("phi[{}]", i + 1),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let f = Expr::parse(f, (n, r)).map_err(|source| ProblemError::Parse {
            field: "f".into(),
            source,
        })?;
        Self::new(phi, f, x0, horizon, control_box, time_mode)
    }

    pub fn new(
        phi: Vec<Expr>,
        f: Expr,
        x0: Vec<f64>,
        horizon: f64,
        control_box: ControlBox,
        time_mode: TimeMode,
    ) -> Result<Self, ProblemError> {
        let n = phi.len();
        let r = control_box.dim();
        if n == 0 {
            return Err(ProblemError::Invalid("at least one state equation".into()));
        }
        if x0.len() != n {
            return Err(ProblemError::Invalid(format!(
                "x0 has {} components, system has {n}",
                x0.len()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ProblemError::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        for e in phi.iter().chain(std::iter::once(&f)) {
            let (en, er) = e.dims();
            if en > n || er > r {
                return Err(ProblemError::Invalid(format!(
                    "expression `{e}` declared for ({en}, {er}), problem is ({n}, {r})"
                )));
            }
        }
        Ok(ProblemSpec {
            n,
            r,
            phi,
            f,
            x0,
            horizon,
            control_box,
            time_mode,
        })
    }
}

impl Dynamics for ProblemSpec {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn control_dim(&self) -> usize {
        self.r
    }

    fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    fn rhs(&self, x: &[f64], u: &[f64], t: f64, dx: &mut [f64]) -> Result<(), EvalError> {
        let env = EvalEnv::new(x, u, t);
        for (d, e) in dx.iter_mut().zip(&self.phi) {
            *d = e.eval(&env)?;
        }
        Ok(())
    }

    fn running_cost(&self, x: &[f64], u: &[f64], t: f64) -> Result<f64, EvalError> {
        self.f.eval(&EvalEnv::new(x, u, t))
    }
}

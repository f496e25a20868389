//! Lower convex and upper concave envelopes of grid-sampled functions.
//!
//! The lower convex envelope is the biconjugate `f**`, taken over the
//! masked-in nodes only. Computation depends on the number of axes:
//!
//! * one axis: exact, from the breakpoints of the piecewise-linear conjugate;
//! * two or three axes: exact, one small linear program per node;
//! * more axes: double discrete Legendre transform on the default slope grid,
//!   accurate only to the slope resolution.
//!
//! The upper concave envelope is `-lce(-f)`.

mod conjugate;
mod grid;
mod hull1d;
mod lp;
mod oracle;

use thiserror::Error;

use crate::expr::EvalError;

pub use conjugate::{conjugate, default_slope_grid, lce_with_slopes};
pub use grid::{sample_field, Axis, Grid, GridFunction, Interpolant};
pub use oracle::{lce_oracle, lce_oracle_capped, DEFAULT_ORACLE_CAP};

/// Largest dimension handled by an exact method.
pub const MAX_EXACT_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvelopeError {
    #[error("no grid node lies inside the working region")]
    EmptyMask,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid has {nodes} nodes but {values} values and {mask} mask entries")]
    LengthMismatch { nodes: usize, values: usize, mask: usize },
    #[error("value at masked node {0} is not finite")]
    NonFiniteValue(usize),
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("evaluation failed at node {node}: {source}")]
    Eval {
        node: usize,
        #[source]
        source: EvalError,
    },
    #[error("query lies outside the hull of the masked nodes")]
    Infeasible,
    #[error("{nodes} masked nodes exceed the oracle cap of {cap}")]
    CapExceeded { nodes: usize, cap: usize },
}

/// Lower convex envelope at the masked nodes of `f`.
pub fn lce(f: &GridFunction) -> Result<GridFunction, EnvelopeError> {
    let idx: Vec<usize> = f.masked_indices().collect();
    if idx.is_empty() {
        return Err(EnvelopeError::EmptyMask);
    }
    let d = f.grid().dim();
    let env = match d {
        1 => {
            let xs: Vec<f64> = idx.iter().map(|&i| f.grid().node(i)[0]).collect();
            let fs: Vec<f64> = idx.iter().map(|&i| f.values()[i]).collect();
            hull1d::biconjugate(&xs, &fs)
        }
        2..=MAX_EXACT_DIM => {
            let pts: Vec<Vec<f64>> = idx.iter().map(|&i| f.grid().node(i)).collect();
            let fs: Vec<f64> = idx.iter().map(|&i| f.values()[i]).collect();
            lp::lower_envelope(&pts, &fs)
        }
        _ => {
            log::warn!(
                "envelope over {d} axes uses the slope-grid transform; accuracy is limited by slope resolution"
            );
            return lce_with_slopes(f, &default_slope_grid(f));
        }
    };
    let mut values = vec![f64::NAN; f.grid().len()];
    for (&i, v) in idx.iter().zip(env) {
        values[i] = v;
    }
    Ok(f.with_values(values))
}

/// Upper concave envelope, `-lce(-f)`.
pub fn uce(f: &GridFunction) -> Result<GridFunction, EnvelopeError> {
    Ok(lce(&f.negated())?.negated())
}

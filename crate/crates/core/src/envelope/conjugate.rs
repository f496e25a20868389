//! Discrete Legendre transforms by separable per-axis sweeps.

use super::grid::{Axis, Grid, GridFunction};
use super::EnvelopeError;

/// `h(q) = max_z <q, z> + g(z)` for `g` on `from`, evaluated on the nodes of `to`.
///
/// `g` may hold `-inf` for excluded nodes. The maximum factorizes over axes,
/// so each sweep replaces one axis of the working array.
fn sup_transform(g: &[f64], from: &Grid, to: &Grid) -> Vec<f64> {
    let d = from.dim();
    let mut dims: Vec<usize> = from.axes().iter().map(|a| a.count).collect();
    let mut cur = g.to_vec();
    for a in 0..d {
        let src: Vec<f64> = (0..from.axes()[a].count).map(|i| from.axes()[a].coord(i)).collect();
        let dst: Vec<f64> = (0..to.axes()[a].count).map(|j| to.axes()[a].coord(j)).collect();
        let outer: usize = dims[..a].iter().product();
        let inner: usize = dims[a + 1..].iter().product();
        let mut next = vec![f64::NEG_INFINITY; outer * dst.len() * inner];
        for o in 0..outer {
            for k in 0..inner {
                for (j, &q) in dst.iter().enumerate() {
                    let mut best = f64::NEG_INFINITY;
                    for (i, &z) in src.iter().enumerate() {
                        let v = cur[(o * src.len() + i) * inner + k];
                        if v > f64::NEG_INFINITY {
                            best = best.max(q * z + v);
                        }
                    }
                    next[(o * dst.len() + j) * inner + k] = best;
                }
            }
        }
        dims[a] = dst.len();
        cur = next;
    }
    cur
}

/// `f*(p) = max over masked nodes x of <p, x> - f(x)`, on every node of `slopes`.
pub fn conjugate(f: &GridFunction, slopes: &Grid) -> Result<GridFunction, EnvelopeError> {
    if slopes.dim() != f.grid().dim() {
        return Err(EnvelopeError::DimensionMismatch {
            expected: f.grid().dim(),
            got: slopes.dim(),
        });
    }
    if f.masked_count() == 0 {
        return Err(EnvelopeError::EmptyMask);
    }
    let g: Vec<f64> = f
        .values()
        .iter()
        .zip(f.mask())
        .map(|(&v, &m)| if m { -v } else { f64::NEG_INFINITY })
        .collect();
    GridFunction::full(slopes.clone(), sup_transform(&g, f.grid(), slopes))
}

/// Per-axis slope range of one-sided differences between adjacent masked
/// nodes, with four slope nodes per grid node.
pub fn default_slope_grid(f: &GridFunction) -> Grid {
    let grid = f.grid();
    let axes = (0..grid.dim())
        .map(|a| {
            let ax = grid.axes()[a];
            let s = grid.stride(a);
            let h = ax.spacing();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in f.masked_indices() {
                if grid.multi_index(i)[a] + 1 < ax.count && f.mask()[i + s] {
                    let slope = (f.values()[i + s] - f.values()[i]) / h;
                    lo = lo.min(slope);
                    hi = hi.max(slope);
                }
            }
            if lo > hi {
                (lo, hi) = (-1.0, 1.0);
            }
            if hi - lo <= 1e-12 * lo.abs().max(1.0) {
                (lo, hi) = (lo - 1.0, hi + 1.0);
            }
            Axis {
                lo,
                hi,
                count: 4 * ax.count,
            }
        })
        .collect();
    Grid::new(axes).expect("slope axes are valid")
}

/// Double transform through `slopes`, evaluated back at the masked nodes of `f`.
pub fn lce_with_slopes(f: &GridFunction, slopes: &Grid) -> Result<GridFunction, EnvelopeError> {
    let star = conjugate(f, slopes)?;
    let back: Vec<f64> = star.values().iter().map(|v| -v).collect();
    let values = sup_transform(&back, slopes, f.grid());
    // a minorant by construction; guard the rounding at nodes where f is the support
    let values = values
        .iter()
        .zip(f.values())
        .map(|(&v, &orig)| if v > orig { orig } else { v })
        .collect();
    Ok(f.with_values(values))
}

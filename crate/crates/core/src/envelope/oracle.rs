//! Brute-force envelope values for small node sets.
//!
//! The envelope at a query point is the smallest convex combination of node
//! values whose nodes average to the query. By Caratheodory an optimal support
//! has at most `d + 1` nodes, so enumerating every such support is exact.

use super::grid::GridFunction;
use super::EnvelopeError;

pub const DEFAULT_ORACLE_CAP: usize = 40;

const FEAS_TOL: f64 = 1e-10;

/// Envelope of the masked nodes of `f` at `query`, by exhaustive enumeration.
pub fn lce_oracle(f: &GridFunction, query: &[f64]) -> Result<f64, EnvelopeError> {
    lce_oracle_capped(f, query, DEFAULT_ORACLE_CAP)
}

pub fn lce_oracle_capped(f: &GridFunction, query: &[f64], cap: usize) -> Result<f64, EnvelopeError> {
    let d = f.grid().dim();
    if query.len() != d {
        return Err(EnvelopeError::DimensionMismatch {
            expected: d,
            got: query.len(),
        });
    }
    let idx: Vec<usize> = f.masked_indices().collect();
    if idx.is_empty() {
        return Err(EnvelopeError::EmptyMask);
    }
    if idx.len() > cap {
        return Err(EnvelopeError::CapExceeded { nodes: idx.len(), cap });
    }
    let pts: Vec<Vec<f64>> = idx.iter().map(|&i| f.grid().node(i)).collect();
    let vals: Vec<f64> = idx.iter().map(|&i| f.values()[i]).collect();
    let best = if d == 1 {
        bracket_1d(&pts, &vals, query[0])
    } else {
        supports(&pts, &vals, query)
    };
    best.ok_or(EnvelopeError::Infeasible)
}

fn bracket_1d(pts: &[Vec<f64>], vals: &[f64], q: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut keep = |v: f64| best = Some(best.map_or(v, |b: f64| b.min(v)));
    for i in 0..pts.len() {
        let xi = pts[i][0];
        if xi == q {
            keep(vals[i]);
        }
        for j in 0..pts.len() {
            let xj = pts[j][0];
            if xi < q && q < xj {
                let w = (q - xi) / (xj - xi);
                keep((1.0 - w) * vals[i] + w * vals[j]);
            }
        }
    }
    best
}

fn supports(pts: &[Vec<f64>], vals: &[f64], q: &[f64]) -> Option<f64> {
    let d = q.len();
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(d + 1);
    for size in 1..=(d + 1).min(pts.len()) {
        subsets(pts.len(), size, 0, &mut chosen, &mut |s| {
            if let Some(w) = barycentric(pts, s, q) {
                let v: f64 = s.iter().zip(&w).map(|(&i, wi)| wi * vals[i]).sum();
                best = Some(best.map_or(v, |b| b.min(v)));
            }
        });
    }
    best
}

fn subsets(n: usize, size: usize, from: usize, chosen: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if chosen.len() == size {
        visit(chosen);
        return;
    }
    for i in from..n {
        if n - i < size - chosen.len() {
            break;
        }
        chosen.push(i);
        subsets(n, size, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// Nonnegative weights on `s` reproducing `q` with unit sum, if they exist.
///
/// Solves the normal equations of the `(d + 1) x |s|` system and checks the
/// residual, which rejects affinely dependent supports and points off their span.
fn barycentric(pts: &[Vec<f64>], s: &[usize], q: &[f64]) -> Option<Vec<f64>> {
    let d = q.len();
    let k = s.len();
    let row = |r: usize, c: usize| if r == 0 { 1.0 } else { pts[s[c]][r - 1] - q[r - 1] };
    let rhs = |r: usize| if r == 0 { 1.0 } else { 0.0 };
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = (0..=d).map(|r| row(r, i) * row(r, j)).sum();
        }
        a[i][k] = (0..=d).map(|r| row(r, i) * rhs(r)).sum();
    }
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        for r in 0..k {
            if r != c {
                let factor = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= factor * a[c][j];
                }
            }
        }
    }
    let w: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    if w.iter().any(|&wi| wi < -FEAS_TOL) {
        return None;
    }
    for r in 0..=d {
        let res: f64 = (0..k).map(|c| row(r, c) * w[c]).sum::<f64>() - rhs(r);
        if res.abs() > FEAS_TOL {
            return None;
        }
    }
    Some(w.into_iter().map(|wi| wi.max(0.0)).collect())
}

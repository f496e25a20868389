//! Exact envelope values in two and three dimensions.
//!
//! At a node `q` the envelope is the optimum of
//! `min sum l_i f_i  s.t.  sum l_i = 1,  sum l_i (x_i - q) = 0,  l >= 0`,
//! solved by a dense revised simplex with `d + 1` rows. The initial basis is
//! the node itself plus artificial unit columns fixed at zero.

use rayon::prelude::*;

const MAX_ROWS: usize = 4;
const DEGENERATE_BEFORE_BLAND: usize = 50;
const REFACTOR_EVERY: usize = 64;
const PIVOT_TOL: f64 = 1e-11;

struct Problem<'a> {
    /// Normalized coordinates, `d` per point.
    coords: &'a [f64],
    costs: &'a [f64],
    d: usize,
    cost_tol: f64,
}

impl Problem<'_> {
    fn column(&self, i: usize, q: &[f64], out: &mut [f64; MAX_ROWS]) {
        out[0] = 1.0;
        for a in 0..self.d {
            out[a + 1] = self.coords[i * self.d + a] - q[a];
        }
    }

    /// Minimum over convex combinations of the points averaging to point `start`.
    fn solve(&self, start: usize) -> f64 {
        let m = self.d + 1;
        let npts = self.costs.len();
        let q: Vec<f64> = self.coords[start * self.d..(start + 1) * self.d].to_vec();
        let mut basis: [Option<usize>; MAX_ROWS] = [None; MAX_ROWS];
        basis[0] = Some(start);
        let mut binv = [[0.0; MAX_ROWS]; MAX_ROWS];
        for (r, row) in binv.iter_mut().enumerate().take(m) {
            row[r] = 1.0;
        }
        let mut beta = [0.0f64; MAX_ROWS];
        beta[0] = 1.0;
        let mut in_basis = vec![false; npts];
        in_basis[start] = true;

        let mut degenerate = 0usize;
        let mut bland = false;
        let mut col = [0.0; MAX_ROWS];
        let max_iter = 50 * npts + 1000;
        for iter in 0..max_iter {
            // duals y = c_B^T B^-1
            let mut y = [0.0; MAX_ROWS];
            for (r, b) in basis.iter().enumerate().take(m) {
                if let Some(i) = *b {
                    for k in 0..m {
                        y[k] += self.costs[i] * binv[r][k];
                    }
                }
            }
            let mut entering = None;
            let mut best = -self.cost_tol;
            for i in 0..npts {
                if in_basis[i] {
                    continue;
                }
                self.column(i, &q, &mut col);
                let reduced = self.costs[i] - (0..m).map(|k| y[k] * col[k]).sum::<f64>();
                if reduced < best {
                    entering = Some(i);
                    if bland {
                        break;
                    }
                    best = reduced;
                }
            }
            let Some(e) = entering else {
                break;
            };
            self.column(e, &q, &mut col);
            let mut w = [0.0; MAX_ROWS];
            for r in 0..m {
                w[r] = (0..m).map(|k| binv[r][k] * col[k]).sum();
            }
            // ratio test; artificial rows are bounded to zero on both sides
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let ratio = match basis[r] {
                    None if w[r].abs() > PIVOT_TOL => 0.0,
                    Some(_) if w[r] > PIVOT_TOL => beta[r].max(0.0) / w[r],
                    _ => continue,
                };
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-15 {
                            true
                        } else if ratio <= lratio + 1e-15 {
                            // ties: artificials first, then the smallest index
                            match (basis[r], basis[lr]) {
                                (None, Some(_)) => true,
                                (Some(a), Some(b)) => a < b,
                                _ => false,
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            let Some((r, theta)) = leave else {
                log::warn!("envelope LP unbounded at node {start}; keeping incumbent");
                break;
            };
            for k in 0..m {
                beta[k] -= theta * w[k];
            }
            beta[r] = theta;
            let piv = w[r];
            for k in 0..m {
                binv[r][k] /= piv;
            }
            for k in 0..m {
                if k != r && w[k] != 0.0 {
                    let factor = w[k];
                    for c in 0..m {
                        binv[k][c] -= factor * binv[r][c];
                    }
                }
            }
            if let Some(old) = basis[r] {
                in_basis[old] = false;
            }
            basis[r] = Some(e);
            in_basis[e] = true;

            if theta <= 1e-15 {
                degenerate += 1;
                if degenerate > DEGENERATE_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            if (iter + 1) % REFACTOR_EVERY == 0 {
                self.refactor(&basis, &q, &mut binv, &mut beta);
            }
            if iter + 1 == max_iter {
                log::warn!("envelope LP iteration cap reached at node {start}");
            }
        }
        let value: f64 = basis
            .iter()
            .zip(&beta)
            .take(m)
            .filter_map(|(b, &v)| b.map(|i| self.costs[i] * v.max(0.0)))
            .sum();
        value.min(self.costs[start])
    }

    /// Rebuilds `B^-1` and the basic values from the basis columns.
    fn refactor(
        &self,
        basis: &[Option<usize>; MAX_ROWS],
        q: &[f64],
        binv: &mut [[f64; MAX_ROWS]; MAX_ROWS],
        beta: &mut [f64; MAX_ROWS],
    ) {
        let m = self.d + 1;
        let mut a = [[0.0; 2 * MAX_ROWS]; MAX_ROWS];
        let mut col = [0.0; MAX_ROWS];
        for (c, b) in basis.iter().enumerate().take(m) {
            match *b {
                Some(i) => self.column(i, q, &mut col),
                None => {
                    col = [0.0; MAX_ROWS];
                    col[c] = 1.0;
                }
            }
            for r in 0..m {
                a[r][c] = col[r];
            }
        }
        for (r, row) in a.iter_mut().enumerate().take(m) {
            row[m + r] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .expect("nonempty");
            if a[p][c].abs() < 1e-14 {
                return; // keep the product-form inverse
            }
            a.swap(c, p);
            let piv = a[c][c];
            for v in a[c].iter_mut().take(2 * m) {
                *v /= piv;
            }
            for r in 0..m {
                if r != c {
                    let factor = a[r][c];
                    if factor != 0.0 {
                        for k in 0..2 * m {
                            a[r][k] -= factor * a[c][k];
                        }
                    }
                }
            }
        }
        for r in 0..m {
            for c in 0..m {
                binv[r][c] = a[r][m + c];
            }
            beta[r] = binv[r][0];
        }
    }
}

/// Envelope values at every point of a `d`-dimensional point set, `d <= 3`.
pub(crate) fn lower_envelope(points: &[Vec<f64>], costs: &[f64]) -> Vec<f64> {
    let d = points.first().map_or(0, Vec::len);
    assert!(d < MAX_ROWS, "LP path handles at most three axes");
    // normalize each axis to [-1, 1]
    let mut coords = Vec::with_capacity(points.len() * d);
    let ranges: Vec<(f64, f64)> = (0..d)
        .map(|a| {
            let lo = points.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
            let half = 0.5 * (hi - lo);
            (0.5 * (hi + lo), if half > 0.0 { half } else { 1.0 })
        })
        .collect();
    for p in points {
        for (a, &(center, half)) in ranges.iter().enumerate() {
            coords.push((p[a] - center) / half);
        }
    }
    let scale = costs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let problem = Problem {
        coords: &coords,
        costs,
        d,
        cost_tol: 1e-12 * scale,
    };
    (0..points.len()).into_par_iter().map(|j| problem.solve(j)).collect()
}

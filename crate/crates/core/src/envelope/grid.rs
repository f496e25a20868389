use serde::{Deserialize, Serialize};

use super::EnvelopeError;
use crate::expr::Expr;

/// One grid axis: `count` equally spaced nodes from `lo` to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self, EnvelopeError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || count < 2 {
            return Err(EnvelopeError::InvalidGrid(format!(
                "axis needs lo < hi and count >= 2, got [{lo}, {hi}] x {count}"
            )));
        }
        Ok(Axis { lo, hi, count })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.hi
        } else {
            self.lo + self.spacing() * i as f64
        }
    }
}

/// Rectangular grid, row-major with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Axis>", into = "Vec<Axis>")]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
}

impl TryFrom<Vec<Axis>> for Grid {
    type Error = EnvelopeError;

    fn try_from(axes: Vec<Axis>) -> Result<Self, Self::Error> {
        Grid::new(axes)
    }
}

impl From<Grid> for Vec<Axis> {
    fn from(g: Grid) -> Self {
        g.axes
    }
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self, EnvelopeError> {
        if axes.is_empty() {
            return Err(EnvelopeError::InvalidGrid("grid needs at least one axis".into()));
        }
        for a in &axes {
            Axis::new(a.lo, a.hi, a.count)?;
        }
        let mut strides = vec![1; axes.len()];
        for i in (0..axes.len() - 1).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].count;
        }
        Ok(Grid { axes, strides })
    }

    pub fn line(lo: f64, hi: f64, count: usize) -> Result<Self, EnvelopeError> {
        Grid::new(vec![Axis::new(lo, hi, count)?])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.strides[0] * self.axes[0].count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let i = flat / s;
                flat %= s;
                i
            })
            .collect()
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .zip(&self.axes)
            .map(|(i, a)| a.coord(i))
            .collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }
}

/// Scalar field on a grid; `mask[i]` marks nodes inside the working region.
///
/// Values at masked-out nodes are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl GridFunction {
    pub fn new(grid: Grid, mut values: Vec<f64>, mask: Vec<bool>) -> Result<Self, EnvelopeError> {
        if values.len() != grid.len() || mask.len() != grid.len() {
            return Err(EnvelopeError::LengthMismatch {
                nodes: grid.len(),
                values: values.len(),
                mask: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(EnvelopeError::EmptyMask);
        }
        for (i, (v, &m)) in values.iter_mut().zip(&mask).enumerate() {
            if !m {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(EnvelopeError::NonFiniteValue(i));
            }
        }
        Ok(GridFunction { grid, values, mask })
    }

    /// Every node masked in.
    pub fn full(grid: Grid, values: Vec<f64>) -> Result<Self, EnvelopeError> {
        let mask = vec![true; grid.len()];
        Self::new(grid, values, mask)
    }

    pub fn from_fn(
        grid: Grid,
        f: impl Fn(&[f64]) -> f64,
        mask: impl Fn(&[f64]) -> bool,
    ) -> Result<Self, EnvelopeError> {
        let mut values = Vec::with_capacity(grid.len());
        let mut inside = Vec::with_capacity(grid.len());
        for p in grid.nodes() {
            let m = mask(&p);
            values.push(if m { f(&p) } else { f64::NAN });
            inside.push(m);
        }
        Self::new(grid, values, inside)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn value(&self, flat: usize) -> Option<f64> {
        self.mask[flat].then(|| self.values[flat])
    }

    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Same grid and mask with new values at masked nodes.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        let mut out = GridFunction {
            grid: self.grid.clone(),
            values,
            mask: self.mask.clone(),
        };
        for (v, &m) in out.values.iter_mut().zip(&out.mask) {
            if !m {
                *v = f64::NAN;
            }
        }
        out
    }

    pub fn negated(&self) -> Self {
        self.with_values(self.values.iter().map(|v| -v).collect())
    }

    /// Values with masked-out nodes filled from the nearest masked node
    /// (breadth-first over grid neighbours, ties to the lower index).
    pub fn filled_nearest(&self) -> Vec<f64> {
        let mut values = self.values.clone();
        let mut seen = self.mask.clone();
        let mut frontier: Vec<usize> = self.masked_indices().collect();
        let d = self.grid.dim();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &i in &frontier {
                let multi = self.grid.multi_index(i);
                for a in 0..d {
                    let s = self.grid.stride(a);
                    let neighbours = [
                        (multi[a] > 0).then(|| i - s),
                        (multi[a] + 1 < self.grid.axes()[a].count).then(|| i + s),
                    ];
                    for j in neighbours.into_iter().flatten() {
                        if !seen[j] {
                            seen[j] = true;
                            values[j] = values[i];
                            next.push(j);
                        }
                    }
                }
            }
            frontier = next;
        }
        values
    }

    /// Rows of `(coords..., value, mask)` with a header.
    pub fn to_csv(&self, axis_names: &[String]) -> String {
        use crate::io::fmt_f64;
        let d = self.grid.dim();
        let mut header: Vec<String> = (0..d)
            .map(|a| axis_names.get(a).cloned().unwrap_or_else(|| format!("z{}", a + 1)))
            .collect();
        header.push("value".into());
        header.push("mask".into());
        let mut out = header.join(",");
        out.push('\n');
        for i in 0..self.grid.len() {
            for c in self.grid.node(i) {
                out.push_str(&fmt_f64(c));
                out.push(',');
            }
            out.push_str(&fmt_f64(self.values[i]));
            out.push_str(if self.mask[i] { ",1\n" } else { ",0\n" });
        }
        out
    }

    /// JSON header describing the grid.
    pub fn header_json(&self) -> String {
        #[derive(Serialize)]
        struct Header<'a> {
            axes: &'a [Axis],
            nodes: usize,
            masked: usize,
        }
        crate::io::to_json(&Header {
            axes: self.grid.axes(),
            nodes: self.grid.len(),
            masked: self.masked_count(),
        })
        .expect("grid header serializes")
    }
}

/// Evaluates `e` at every masked-in node of `grid`.
///
/// Coordinates are read as `(x, u)`: the first `n` axes feed the state
/// variables of `e`, the rest its controls.
pub fn sample_field(
    e: &Expr,
    grid: &Grid,
    mask: impl Fn(&[f64]) -> bool,
) -> Result<GridFunction, EnvelopeError> {
    let (n, r) = e.dims();
    if n + r != grid.dim() {
        return Err(EnvelopeError::DimensionMismatch {
            expected: n + r,
            got: grid.dim(),
        });
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut inside = Vec::with_capacity(grid.len());
    for (i, p) in grid.nodes().enumerate() {
        if mask(&p) {
            let v = e
                .eval_joint(&p)
                .map_err(|source| EnvelopeError::Eval { node: i, source })?;
            values.push(v);
            inside.push(true);
        } else {
            values.push(f64::NAN);
            inside.push(false);
        }
    }
    GridFunction::new(grid.clone(), values, inside)
}

const MAX_INTERP_AXES: usize = 8;

/// Multilinear interpolant over a fully populated grid, clamped at the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolant {
    grid: Grid,
    values: Vec<f64>,
}

impl Interpolant {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, EnvelopeError> {
        if grid.dim() > MAX_INTERP_AXES {
            return Err(EnvelopeError::InvalidGrid(format!(
                "interpolation supports at most {MAX_INTERP_AXES} axes"
            )));
        }
        if values.len() != grid.len() {
            return Err(EnvelopeError::LengthMismatch {
                nodes: grid.len(),
                values: values.len(),
                mask: grid.len(),
            });
        }
        Ok(Interpolant { grid, values })
    }

    /// From an envelope: masked-out nodes take their nearest masked value.
    pub fn from_function(f: &GridFunction) -> Result<Self, EnvelopeError> {
        Self::new(f.grid().clone(), f.filled_nearest())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Value at `p` and whether any coordinate had to be clamped into the grid.
    pub fn eval(&self, p: &[f64]) -> (f64, bool) {
        let d = self.grid.dim();
        debug_assert_eq!(p.len(), d);
        let mut clamped = false;
        let mut base = 0usize;
        let mut cell = [(0usize, 0.0f64); MAX_INTERP_AXES];
        for (a, (ax, &c)) in self.grid.axes().iter().zip(p).enumerate() {
            let s = (c - ax.lo) / ax.spacing();
            let s = if s.is_nan() || s < 0.0 {
                clamped = true;
                0.0
            } else if s > (ax.count - 1) as f64 {
                clamped = true;
                (ax.count - 1) as f64
            } else {
                s
            };
            let i = (s.floor() as usize).min(ax.count - 2);
            base += i * self.grid.stride(a);
            cell[a] = (self.grid.stride(a), s - i as f64);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for (a, &(stride, frac)) in cell.iter().enumerate().take(d) {
                if corner >> a & 1 == 1 {
                    w *= frac;
                    idx += stride;
                } else {
                    w *= 1.0 - frac;
                }
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        (acc, clamped)
    }
}

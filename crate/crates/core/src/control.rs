//! Piecewise-constant controls on uniform switch grids.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FAMILY_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("control box bounds are invalid: {0}")]
    InvalidBox(String),
    #[error("control signal is invalid: {0}")]
    InvalidSignal(String),
    #[error("control family of {requested} signals exceeds the cap of {cap}")]
    BudgetExceeded { requested: f64, cap: usize },
    #[error("grid strategy needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("signals have different horizons ({0} vs {1})")]
    HorizonMismatch(f64, f64),
    #[error("malformed control CSV: {0}")]
    Csv(String),
}

/// Axis-aligned box of admissible control values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ControlError> {
        if lower.len() != upper.len() {
            return Err(ControlError::InvalidBox(format!(
                "{} lower bounds vs {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(ControlError::InvalidBox(format!(
                    "component {}: [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        Ok(ControlBox { lower, upper })
    }

    /// The zero-dimensional box, for systems without a control.
    pub fn empty() -> Self {
        ControlBox {
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn symmetric(r: usize, radius: f64) -> Self {
        ControlBox {
            lower: vec![-radius; r],
            upper: vec![radius; r],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn clamp(&self, c: usize, v: f64) -> f64 {
        v.clamp(self.lower[c], self.upper[c])
    }

    /// `m` equally spaced levels of component `c`, endpoints included.
    pub fn levels(&self, c: usize, m: usize) -> Vec<f64> {
        let (lo, hi) = (self.lower[c], self.upper[c]);
        if m == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..m)
            .map(|i| {
                let s = i as f64 / (m - 1) as f64;
                lo + (hi - lo) * s
            })
            .collect()
    }
}

/// Right-continuous step function on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    switch_times: Vec<f64>,
    values: Vec<Vec<f64>>,
    horizon: f64,
}

impl ControlSignal {
    pub fn new(
        switch_times: Vec<f64>,
        values: Vec<Vec<f64>>,
        horizon: f64,
    ) -> Result<Self, ControlError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ControlError::InvalidSignal(format!("horizon {horizon}")));
        }
        if switch_times.is_empty() || switch_times[0] != 0.0 {
            return Err(ControlError::InvalidSignal(
                "switch times must start at 0".into(),
            ));
        }
        if switch_times.len() != values.len() {
            return Err(ControlError::InvalidSignal(format!(
                "{} switch times vs {} values",
                switch_times.len(),
                values.len()
            )));
        }
        if switch_times.windows(2).any(|w| w[0] >= w[1]) || *switch_times.last().unwrap() >= horizon
        {
            return Err(ControlError::InvalidSignal(
                "switch times must be strictly increasing and below the horizon".into(),
            ));
        }
        let r = values[0].len();
        if values.iter().any(|v| v.len() != r || v.iter().any(|c| !c.is_finite())) {
            return Err(ControlError::InvalidSignal(
                "values must be finite vectors of equal length".into(),
            ));
        }
        Ok(ControlSignal {
            switch_times,
            values,
            horizon,
        })
    }

    pub fn constant(value: Vec<f64>, horizon: f64) -> Result<Self, ControlError> {
        Self::new(vec![0.0], vec![value], horizon)
    }

    /// Uniform switch grid, one interval per entry of `values`.
    pub fn uniform(values: Vec<Vec<f64>>, horizon: f64) -> Result<Self, ControlError> {
        let times = uniform_switches(values.len(), horizon);
        Self::new(times, values, horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// End of interval `i`.
    pub fn interval_end(&self, i: usize) -> f64 {
        self.switch_times
            .get(i + 1)
            .copied()
            .unwrap_or(self.horizon)
    }

    pub fn interval_of(&self, t: f64) -> usize {
        match self
            .switch_times
            .binary_search_by(|s| s.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.interval_of(t)]
    }

    pub fn with_value(&self, interval: usize, component: usize, v: f64) -> Self {
        let mut out = self.clone();
        out.values[interval][component] = v;
        out
    }

    pub fn within(&self, u: &ControlBox) -> bool {
        self.values.iter().all(|v| u.contains(v))
    }

    /// The signal sampled at the midpoints of a uniform grid with `k` interior switches.
    pub fn resampled(&self, k: usize) -> Result<Self, ControlError> {
        let h = self.horizon / (k + 1) as f64;
        let values = (0..=k).map(|i| self.value_at((i as f64 + 0.5) * h).to_vec()).collect();
        Self::uniform(values, self.horizon)
    }

    /// A constant value on a uniform grid with `k` interior switches.
    pub fn lifted_constant(value: &[f64], k: usize, horizon: f64) -> Result<Self, ControlError> {
        Self::uniform(vec![value.to_vec(); k + 1], horizon)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_start");
        for c in 0..self.dim() {
            out.push_str(&format!(",u{}", c + 1));
        }
        out.push('\n');
        for (t, v) in self.switch_times.iter().zip(&self.values) {
            out.push_str(&crate::io::fmt_f64(*t));
            for c in v {
                out.push(',');
                out.push_str(&crate::io::fmt_f64(*c));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, horizon: f64) -> Result<Self, ControlError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| ControlError::Csv("empty input".into()))?;
        let cols = header.split(',').count();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(ControlError::Csv(format!(
                    "row {} has {} fields, header has {cols}",
                    row + 1,
                    fields.len()
                )));
            }
            let nums = fields
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ControlError::Csv(format!("row {}: {e}", row + 1)))?;
            times.push(nums[0]);
            values.push(nums[1..].to_vec());
        }
        Self::new(times, values, horizon)
    }
}

fn uniform_switches(intervals: usize, horizon: f64) -> Vec<f64> {
    (0..intervals)
        .map(|i| horizon * (i as f64 / intervals as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SamplingStrategy {
    /// Every assignment of lattice levels to intervals.
    Grid,
    /// `samples` signals with values drawn uniformly from the box.
    Random { seed: u64, samples: usize },
}

/// Enumerates or draws a finite family of step controls.
///
/// `k` interior switches on a uniform grid, `m` levels per control component
/// for the grid strategy. Duplicates are removed, first occurrence wins.
pub fn sample_controls(
    u: &ControlBox,
    horizon: f64,
    k: usize,
    m: usize,
    strategy: SamplingStrategy,
    cap: usize,
) -> Result<Vec<ControlSignal>, ControlError> {
    let r = u.dim();
    let intervals = k + 1;
    let raw: Vec<Vec<Vec<f64>>> = match strategy {
        SamplingStrategy::Grid => {
            if m < 2 && r > 0 {
                return Err(ControlError::TooFewLevels(m));
            }
            let slots = r * intervals;
            let requested = (m as f64).powi(slots as i32);
            if requested > cap as f64 {
                return Err(ControlError::BudgetExceeded { requested, cap });
            }
            let levels: Vec<Vec<f64>> = (0..r).map(|c| u.levels(c, m)).collect();
            let total = m.pow(slots as u32);
            (0..total)
                .map(|mut code| {
                    // slot 0 is the most significant digit: lexicographic order
                    let mut digits = vec![0usize; slots];
                    for d in digits.iter_mut().rev() {
                        *d = code % m;
                        code /= m;
                    }
                    (0..intervals)
                        .map(|i| (0..r).map(|c| levels[c][digits[i * r + c]]).collect())
                        .collect()
                })
                .collect()
        }
        SamplingStrategy::Random { seed, samples } => {
            if samples > cap {
                return Err(ControlError::BudgetExceeded {
                    requested: samples as f64,
                    cap,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..samples)
                .map(|_| {
                    (0..intervals)
                        .map(|_| {
                            (0..r)
                                .map(|c| {
                                    let (lo, hi) = (u.lower()[c], u.upper()[c]);
                                    if lo == hi {
                                        lo
                                    } else {
                                        rng.random_range(lo..=hi)
                                    }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        }
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for values in raw {
        let key: Vec<u64> = values.iter().flatten().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            out.push(ControlSignal::uniform(values, horizon)?);
        }
    }
    Ok(out)
}

/// Breakpoints of both signals, merged and sorted.
fn merged_grid(a: &ControlSignal, b: &ControlSignal) -> Vec<f64> {
    let mut ts: Vec<f64> = a
        .switch_times
        .iter()
        .chain(&b.switch_times)
        .copied()
        .collect();
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ts.dedup();
    ts
}

fn check_horizon(a: &ControlSignal, b: &ControlSignal) -> Result<(), ControlError> {
    if a.horizon != b.horizon {
        return Err(ControlError::HorizonMismatch(a.horizon, b.horizon));
    }
    Ok(())
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Uniform metric: sup over time of the componentwise max-norm difference.
pub fn metric_rho(a: &ControlSignal, b: &ControlSignal) -> Result<f64, ControlError> {
    check_horizon(a, b)?;
    Ok(merged_grid(a, b)
        .iter()
        .map(|&t| sup_diff(a.value_at(t), b.value_at(t)))
        .fold(0.0, f64::max))
}

/// L1 distance, exact for step functions.
pub fn metric_rho1(a: &ControlSignal, b: &ControlSignal) -> Result<f64, ControlError> {
    check_horizon(a, b)?;
    let grid = merged_grid(a, b);
    let mut total = 0.0;
    for (i, &t) in grid.iter().enumerate() {
        let end = grid.get(i + 1).copied().unwrap_or(a.horizon);
        total += (end - t) * sup_diff(a.value_at(t), b.value_at(t));
    }
    Ok(total)
}

//! The full pipeline: sample, reach, convexify, optimize three problems, judge.

use serde::{Deserialize, Serialize};

use super::optimize::{optimize, stagnation_values, OptResult, OptStatus, OptimizeOptions};
use super::{convexify, RelaxError, RelaxOptions, Which};
use crate::control::{sample_controls, ControlError, ControlSignal, SamplingStrategy, DEFAULT_FAMILY_CAP};
use crate::expr::Expr;
use crate::ode::DEFAULT_BLOWUP;
use crate::problem::ProblemSpec;
use crate::reach::{build_reach, ReachOptions};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tolerances {
    /// Integration tolerance; `10 * step` when absent.
    pub tol_int: Option<f64>,
    /// Gap tolerance; `1e-3 * max(1, |value|)` when absent.
    pub tol_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub switches: usize,
    pub levels: usize,
    pub strategy: SamplingStrategy,
    pub family_cap: usize,
    /// Random signals used in place of the grid when it exceeds the cap.
    pub fallback_samples: usize,
    pub seed: u64,
    pub step: f64,
    pub blowup: f64,
    pub refine: usize,
    pub halvings: usize,
    pub t_stride: usize,
    pub extra_directions: usize,
    pub relax: RelaxOptions,
    pub tolerances: Tolerances,
    /// Explicit right-hand sides for the two relaxed systems.
    pub rhs_override: Option<(Vec<Expr>, Vec<Expr>)>,
    pub sufficiency_starts: usize,
    pub sufficiency_rounds: usize,
    /// Switch counts for the original-system sweep.
    pub switch_sweep: Vec<usize>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            switches: 3,
            levels: 3,
            strategy: SamplingStrategy::Grid,
            family_cap: DEFAULT_FAMILY_CAP,
            fallback_samples: 2048,
            seed: 0,
            step: 1e-2,
            blowup: DEFAULT_BLOWUP,
            refine: 4,
            halvings: 6,
            t_stride: 1,
            extra_directions: 16,
            relax: RelaxOptions::default(),
            tolerances: Tolerances::default(),
            rhs_override: None,
            sufficiency_starts: 4,
            sufficiency_rounds: 20,
            switch_sweep: Vec::new(),
        }
    }
}

impl CompareOptions {
    fn optimize_options(&self) -> OptimizeOptions {
        OptimizeOptions {
            step: self.step,
            blowup: self.blowup,
            refine: self.refine,
            halvings: self.halvings,
        }
    }

    pub fn tol_int(&self) -> f64 {
        self.tolerances.tol_int.unwrap_or(10.0 * self.step)
    }

    pub fn tol_gap(&self, value: f64) -> f64 {
        self.tolerances
            .tol_gap
            .unwrap_or_else(|| 1e-3 * if value.is_finite() { value.abs().max(1.0) } else { 1.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptSummary {
    pub value: f64,
    pub status: OptStatus,
    pub best_time: f64,
    pub switch_times: Vec<f64>,
    pub control: Vec<Vec<f64>>,
    pub history: Vec<f64>,
    pub evaluations: usize,
}

impl From<&OptResult> for OptSummary {
    fn from(r: &OptResult) -> Self {
        OptSummary {
            value: r.value,
            status: r.status,
            best_time: r.best_time,
            switch_times: r.best_control.switch_times().to_vec(),
            control: r.best_control.values().to_vec(),
            history: r.history.clone(),
            evaluations: r.evaluations,
        }
    }
}

/// Refinement from several starts must end near the global relaxed minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyCheck {
    pub global_min: f64,
    pub stagnation_values: Vec<f64>,
    pub tol_gap: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub switches: usize,
    pub family_size: usize,
    pub value: f64,
    pub status: OptStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub original_value: f64,
    pub relaxed_value_sys1: f64,
    pub relaxed_value_sys2: f64,
    pub relaxed_value: f64,
    pub relaxed_system: Which,
    /// `original - relaxed`; absent when both diverge.
    pub gap: Option<f64>,
    pub tol_int: f64,
    pub tol_gap: f64,
    pub verdict: Verdict,
    pub original: OptSummary,
    pub sys1: OptSummary,
    pub sys2: OptSummary,
    pub family_size: usize,
    pub unbounded_region: bool,
    /// Relaxed right-hand-side evaluations clamped at the grid boundary.
    pub region_exits: usize,
    pub sandwich_violation: f64,
    pub rhs_overridden: bool,
    pub sufficiency: Option<SufficiencyCheck>,
    pub switch_sweep: Vec<SweepEntry>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Grid family when it fits under the cap, otherwise seeded random signals
/// plus the constant lattice controls, plus any `extra` signals.
pub fn search_family(
    p: &ProblemSpec,
    k: usize,
    opts: &CompareOptions,
    extra: &[ControlSignal],
) -> Result<Vec<ControlSignal>, ControlError> {
    let mut family = match sample_controls(&p.control_box, p.horizon, k, opts.levels, opts.strategy, opts.family_cap) {
        Ok(f) => f,
        Err(ControlError::BudgetExceeded { .. }) if opts.strategy == SamplingStrategy::Grid => {
            let random = SamplingStrategy::Random {
                seed: opts.seed,
                samples: opts.fallback_samples,
            };
            let mut f = sample_controls(&p.control_box, p.horizon, k, opts.levels, random, opts.family_cap)?;
            for constant in sample_controls(&p.control_box, p.horizon, 0, opts.levels, SamplingStrategy::Grid, opts.family_cap)? {
                f.push(ControlSignal::lifted_constant(&constant.values()[0], k, p.horizon)?);
            }
            f
        }
        Err(e) => return Err(e),
    };
    family.extend_from_slice(extra);
    Ok(family)
}

/// Constant controls on the relaxation lattice, lifted to `k` intervals.
///
/// The lattice per axis is the odd node count of the relaxation grid, reduced
/// until the product stays under [`RELAXED_LATTICE_CAP`].
pub fn relaxed_lattice(p: &ProblemSpec, k: usize, opts: &CompareOptions) -> Result<Vec<ControlSignal>, ControlError> {
    let r = p.control_box.dim();
    if r == 0 {
        return Ok(Vec::new());
    }
    let mut m = opts.relax.control_nodes.max(1) | 1;
    while m > 3 && m.checked_pow(r as u32).is_none_or(|total| total > RELAXED_LATTICE_CAP) {
        m -= 2;
    }
    sample_controls(&p.control_box, p.horizon, 0, m, SamplingStrategy::Grid, usize::MAX)?
        .iter()
        .map(|c| ControlSignal::lifted_constant(&c.values()[0], k, p.horizon))
        .collect()
}

/// Largest constant lattice added to the relaxed search family.
pub const RELAXED_LATTICE_CAP: usize = 1024;

/// A report together with the three optimization results behind it.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub original: OptResult,
    pub sys1: OptResult,
    pub sys2: OptResult,
}

/// Runs the original problem and both relaxed systems and compares them.
pub fn compare(p: &ProblemSpec, opts: &CompareOptions) -> Result<ComparisonReport, RelaxError> {
    compare_detailed(p, opts).map(|c| c.report)
}

/// [`compare`], keeping the optimization results.
///
/// The switch sweep runs first; its incumbents, resampled to `switches`
/// intervals, seed the main search of the original problem.
pub fn compare_detailed(p: &ProblemSpec, opts: &CompareOptions) -> Result<Comparison, RelaxError> {
    let oo = opts.optimize_options();

    let mut switch_sweep = Vec::with_capacity(opts.switch_sweep.len());
    let mut incumbents: Vec<ControlSignal> = Vec::new();
    for &k in &opts.switch_sweep {
        let extra: Vec<ControlSignal> = incumbents.last().map(|u| u.resampled(k)).transpose()?.into_iter().collect();
        let fam = search_family(p, k, opts, &extra)?;
        let r = optimize(p, p.time_mode, &fam, &p.control_box, &oo)?;
        switch_sweep.push(SweepEntry {
            switches: k,
            family_size: fam.len(),
            value: r.value,
            status: r.status,
        });
        incumbents.push(r.best_control);
    }

    let warm: Vec<ControlSignal> = incumbents
        .iter()
        .map(|u| u.resampled(opts.switches))
        .collect::<Result<_, _>>()?;
    let family = search_family(p, opts.switches, opts, &warm)?;
    let reach_opts = ReachOptions {
        step: opts.step,
        t_stride: opts.t_stride,
        blowup: opts.blowup,
        extra_directions: opts.extra_directions,
        seed: opts.seed,
    };
    let cloud = build_reach(p, &family, &reach_opts)?;
    let mut relaxed = convexify(p, &cloud, &opts.relax)?;
    if let Some((lower, upper)) = &opts.rhs_override {
        relaxed = relaxed.with_rhs_override(lower.clone(), upper.clone())?;
    }
    let mut relaxed_family = family.clone();
    relaxed_family.extend(relaxed_lattice(p, opts.switches, opts)?);

    let original = optimize(p, p.time_mode, &family, &p.control_box, &oo)?;
    let sys1 = optimize(&relaxed.system(Which::Lower), p.time_mode, &relaxed_family, &p.control_box, &oo)?;
    let sys2 = optimize(&relaxed.system(Which::Upper), p.time_mode, &relaxed_family, &p.control_box, &oo)?;

    let key = |r: &OptResult| match r.status {
        OptStatus::DivergentToMinusInfinity => f64::NEG_INFINITY,
        OptStatus::Finite => r.value,
    };
    let (best, which) = if key(&sys2) < key(&sys1) { (&sys2, Which::Upper) } else { (&sys1, Which::Lower) };
    let relaxed_value = key(best);
    let original_value = key(&original);
    let tol_int = opts.tol_int();
    let tol_gap = opts.tol_gap(original_value);
    let (gap, verdict) = if original_value == f64::NEG_INFINITY && relaxed_value == f64::NEG_INFINITY {
        (None, Verdict::Pass)
    } else {
        let gap = original_value - relaxed_value;
        let ok = gap >= -tol_int && gap <= tol_gap;
        (Some(gap), if ok { Verdict::Pass } else { Verdict::Fail })
    };

    let sufficiency = if best.status == OptStatus::Finite && opts.sufficiency_starts > 0 {
        let sys = relaxed.system(which);
        let starts = top_starts(&sys, p, &relaxed_family, &oo, opts.sufficiency_starts)?;
        let values = stagnation_values(&sys, p.time_mode, &starts, &p.control_box, &oo, opts.sufficiency_rounds)?;
        let global = values.iter().copied().fold(relaxed_value, f64::min);
        let tol = opts.tol_gap(global);
        Some(SufficiencyCheck {
            global_min: global,
            holds: values.iter().all(|v| v - global <= tol),
            stagnation_values: values,
            tol_gap: tol,
        })
    } else {
        None
    };

    let report = ComparisonReport {
        original_value,
        relaxed_value_sys1: key(&sys1),
        relaxed_value_sys2: key(&sys2),
        relaxed_value,
        relaxed_system: which,
        gap,
        tol_int,
        tol_gap,
        verdict,
        original: OptSummary::from(&original),
        sys1: OptSummary::from(&sys1),
        sys2: OptSummary::from(&sys2),
        family_size: family.len(),
        unbounded_region: cloud.unbounded,
        region_exits: relaxed.region_exits(),
        sandwich_violation: relaxed.sandwich_violation(),
        rhs_overridden: relaxed.overridden,
        sufficiency,
        switch_sweep,
    };
    Ok(Comparison { report, original, sys1, sys2 })
}

/// The `count` best family members for `sys` (ties to the lower index).
fn top_starts(
    sys: &(impl crate::problem::Dynamics + ?Sized),
    p: &ProblemSpec,
    family: &[ControlSignal],
    oo: &OptimizeOptions,
    count: usize,
) -> Result<Vec<ControlSignal>, RelaxError> {
    use rayon::prelude::*;
    let iopts = crate::ode::IntegrateOptions {
        step: oo.step,
        blowup: oo.blowup,
    };
    let scores: Vec<f64> = family
        .par_iter()
        .map(|u| {
            crate::ode::integrate(sys, u, &iopts)
                .map(|tr| super::optimize::Objective::of(&tr, p.time_mode, p.horizon).value)
        })
        .collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..family.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    Ok(order.into_iter().take(count).map(|i| family[i].clone()).collect())
}

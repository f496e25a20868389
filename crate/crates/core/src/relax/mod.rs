//! Convexified substitutes for a control problem and their comparison with it.
//!
//! Each right-hand side component is replaced by its lower convex envelope
//! (first relaxed system) or upper concave envelope (second relaxed system),
//! jointly in `(x, u)`, and the running cost by its lower convex envelope.
//! Envelopes are taken over the region the original system reaches.

mod compare;
mod optimize;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{lce, sample_field, uce, Axis, EnvelopeError, Grid, GridFunction, Interpolant};
use crate::expr::{EvalEnv, EvalError, Expr};
use crate::ode::OdeError;
use crate::problem::{Dynamics, ProblemSpec};
use crate::reach::ReachCloud;

pub use compare::{
    compare, compare_detailed, relaxed_lattice, search_family, Comparison, ComparisonReport, CompareOptions, OptSummary, SufficiencyCheck, SweepEntry, Tolerances, Verdict,
};
pub use optimize::{optimize, Objective, OptResult, OptStatus, OptimizeOptions, DIVERGENCE_FLOOR};

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Control(#[from] crate::control::ControlError),
    #[error("{0}")]
    Unsupported(String),
    #[error("control family is empty")]
    EmptyFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxOptions {
    /// Inflation of the sampled hull about its centre.
    pub margin: f64,
    pub state_nodes: usize,
    /// Per control axis; rounded up to odd so the box centre is a node.
    pub control_nodes: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            margin: 1.1,
            state_nodes: 41,
            control_nodes: 21,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    /// Lower convex envelope of the right-hand side.
    Lower,
    /// Upper concave envelope of the right-hand side.
    Upper,
}

#[derive(Debug, Clone)]
enum Rhs {
    Grid(Vec<Interpolant>),
    Symbolic(Vec<Expr>),
}

/// Sampled field and its envelope on the relaxation grid.
#[derive(Debug, Clone)]
pub struct EnvelopePair {
    pub field: GridFunction,
    pub envelope: GridFunction,
}

#[derive(Debug)]
pub struct RelaxedProblem {
    pub base: ProblemSpec,
    pub grid: Grid,
    /// Per state component: lower envelopes, then upper envelopes.
    pub lower: Vec<EnvelopePair>,
    pub upper: Vec<EnvelopePair>,
    pub cost: EnvelopePair,
    lower_rhs: Rhs,
    upper_rhs: Rhs,
    cost_rhs: Interpolant,
    /// Right-hand sides were replaced by user expressions.
    pub overridden: bool,
    exits: AtomicUsize,
}

/// One of the two relaxed systems, usable wherever [`Dynamics`] is.
pub struct RelaxedSystem<'a> {
    problem: &'a RelaxedProblem,
    which: Which,
}

fn anchored_axis(lo: f64, hi: f64, anchor: f64, count: usize) -> Result<Axis, EnvelopeError> {
    let h = (hi - lo) / (count.max(2) - 1) as f64;
    let below = ((anchor - lo) / h - 1e-9).ceil().max(0.0);
    let above = ((hi - anchor) / h - 1e-9).ceil().max(0.0);
    let (below, above) = if below + above < 1.0 { (0.0, 1.0) } else { (below, above) };
    Axis::new(anchor - below * h, anchor + above * h, (below + above) as usize + 1)
}

/// Grid over the inflated state extent of `cloud` times the control box,
/// with `x0` and the control-box centre on nodes.
pub fn relaxation_grid(p: &ProblemSpec, cloud: &ReachCloud, opts: &RelaxOptions) -> Result<Grid, EnvelopeError> {
    let mut axes = Vec::with_capacity(p.n + p.r);
    for (i, (lo, hi)) in cloud.x_extent().into_iter().enumerate() {
        let center = 0.5 * (lo + hi);
        let half = (0.5 * (hi - lo) * opts.margin).max(1e-3 * center.abs().max(1.0));
        axes.push(anchored_axis(center - half, center + half, p.x0[i], opts.state_nodes)?);
    }
    let odd = opts.control_nodes.max(3) | 1;
    for c in 0..p.r {
        let (lo, hi) = (p.control_box.lower()[c], p.control_box.upper()[c]);
        if lo >= hi {
            return Err(EnvelopeError::InvalidGrid(format!("control {} has a degenerate range", c + 1)));
        }
        axes.push(Axis::new(lo, hi, odd)?);
    }
    Grid::new(axes)
}

/// Membership in the cloud's state hull inflated by `margin` about its centre.
pub fn inflated_member(cloud: &ReachCloud, margin: f64) -> impl Fn(&[f64]) -> bool + '_ {
    let extent = cloud.x_extent();
    let center: Vec<f64> = extent.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let scale = extent.iter().fold(1.0f64, |m, (lo, hi)| m.max(lo.abs()).max(hi.abs()));
    let n = cloud.state_dim;
    move |x: &[f64]| {
        let shrunk: Vec<f64> = x[..n]
            .iter()
            .zip(&center)
            .map(|(xi, ci)| ci + (xi - ci) / margin)
            .collect();
        cloud.x_contains(&shrunk, 1e-9 * scale)
    }
}

/// Builds both relaxed systems for `p` over the region sampled in `cloud`.
pub fn convexify(p: &ProblemSpec, cloud: &ReachCloud, opts: &RelaxOptions) -> Result<RelaxedProblem, RelaxError> {
    if p.phi.iter().chain(std::iter::once(&p.f)).any(Expr::uses_time) {
        return Err(RelaxError::Unsupported(
            "envelopes are taken in (x, u); time-dependent expressions are not supported".into(),
        ));
    }
    let grid = relaxation_grid(p, cloud, opts)?;
    let member = inflated_member(cloud, opts.margin);
    let joint = |e: &Expr| -> Result<Expr, RelaxError> {
        // widen declared dimensions to the full (n, r) so coordinates split correctly
        Expr::parse(&e.to_string(), (p.n, p.r)).map_err(|err| RelaxError::Unsupported(err.to_string()))
    };
    let mut lower = Vec::with_capacity(p.n);
    let mut upper = Vec::with_capacity(p.n);
    for phi in &p.phi {
        let field = sample_field(&joint(phi)?, &grid, &member)?;
        lower.push(EnvelopePair { envelope: lce(&field)?, field: field.clone() });
        upper.push(EnvelopePair { envelope: uce(&field)?, field });
    }
    let field = sample_field(&joint(&p.f)?, &grid, &member)?;
    let cost = EnvelopePair { envelope: lce(&field)?, field };
    let interp = |pairs: &[EnvelopePair]| -> Result<Vec<Interpolant>, EnvelopeError> {
        pairs.iter().map(|e| Interpolant::from_function(&e.envelope)).collect()
    };
    Ok(RelaxedProblem {
        base: p.clone(),
        lower_rhs: Rhs::Grid(interp(&lower)?),
        upper_rhs: Rhs::Grid(interp(&upper)?),
        cost_rhs: Interpolant::from_function(&cost.envelope)?,
        grid,
        lower,
        upper,
        cost,
        overridden: false,
        exits: AtomicUsize::new(0),
    })
}

impl RelaxedProblem {
    /// Replaces both right-hand sides by explicit expressions, keeping the
    /// computed cost envelope.
    pub fn with_rhs_override(mut self, lower: Vec<Expr>, upper: Vec<Expr>) -> Result<Self, RelaxError> {
        if lower.len() != self.base.n || upper.len() != self.base.n {
            return Err(RelaxError::Unsupported(format!(
                "override needs {} expressions per system",
                self.base.n
            )));
        }
        self.lower_rhs = Rhs::Symbolic(lower);
        self.upper_rhs = Rhs::Symbolic(upper);
        self.overridden = true;
        Ok(self)
    }

    pub fn system(&self, which: Which) -> RelaxedSystem<'_> {
        RelaxedSystem { problem: self, which }
    }

    /// Right-hand-side evaluations that left the grid and were clamped.
    pub fn region_exits(&self) -> usize {
        self.exits.load(Ordering::Relaxed)
    }

    pub fn reset_exits(&self) {
        self.exits.store(0, Ordering::Relaxed);
    }

    /// Largest violation of `lower <= phi <= upper` and `cost <= f` over masked nodes.
    pub fn sandwich_violation(&self) -> f64 {
        let gap = |below: &GridFunction, above: &GridFunction| {
            below
                .masked_indices()
                .map(|i| below.values()[i] - above.values()[i])
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let mut worst = gap(&self.cost.envelope, &self.cost.field);
        for (lo, up) in self.lower.iter().zip(&self.upper) {
            worst = worst.max(gap(&lo.envelope, &lo.field)).max(gap(&up.field, &up.envelope));
        }
        worst
    }
}

impl RelaxedSystem<'_> {
    fn interpolate(&self, it: &Interpolant, x: &[f64], u: &[f64]) -> f64 {
        let mut coords = [0.0; 8];
        let d = x.len() + u.len();
        coords[..x.len()].copy_from_slice(x);
        coords[x.len()..d].copy_from_slice(u);
        let (v, clamped) = it.eval(&coords[..d]);
        if clamped {
            self.problem.exits.fetch_add(1, Ordering::Relaxed);
        }
        v
    }

    pub fn which(&self) -> Which {
        self.which
    }
}

impl Dynamics for RelaxedSystem<'_> {
    fn state_dim(&self) -> usize {
        self.problem.base.n
    }

    fn control_dim(&self) -> usize {
        self.problem.base.r
    }

    fn initial_state(&self) -> &[f64] {
        &self.problem.base.x0
    }

    fn rhs(&self, x: &[f64], u: &[f64], t: f64, dx: &mut [f64]) -> Result<(), EvalError> {
        let rhs = match self.which {
            Which::Lower => &self.problem.lower_rhs,
            Which::Upper => &self.problem.upper_rhs,
        };
        match rhs {
            Rhs::Grid(parts) => {
                for (d, it) in dx.iter_mut().zip(parts) {
                    *d = self.interpolate(it, x, u);
                }
            }
            Rhs::Symbolic(exprs) => {
                let env = EvalEnv::new(x, u, t);
                for (d, e) in dx.iter_mut().zip(exprs) {
                    *d = e.eval(&env)?;
                }
            }
        }
        if dx.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn running_cost(&self, x: &[f64], u: &[f64], _t: f64) -> Result<f64, EvalError> {
        Ok(self.interpolate(&self.problem.cost_rhs, x, u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{sample_controls, ControlBox, ControlSignal, SamplingStrategy};
    use crate::problem::TimeMode;
    use crate::reach::{build_reach, ReachOptions};

    fn problem(phi: &str, f: &str) -> ProblemSpec {
        ProblemSpec::from_sources(&[phi], f, vec![0.0], 1.0, ControlBox::symmetric(1, 1.0), TimeMode::Fixed).unwrap()
    }

    fn cloud(p: &ProblemSpec) -> ReachCloud {
        let family = sample_controls(&p.control_box, 1.0, 1, 3, SamplingStrategy::Grid, 1000).unwrap();
        build_reach(p, &family, &ReachOptions::new(0.05)).unwrap()
    }

    #[test]
    fn anchored_axes() {
        let a = anchored_axis(-1.0, 2.0, 0.3, 11).unwrap();
        let h = a.spacing();
        assert!(((0.3 - a.lo) / h - ((0.3 - a.lo) / h).round()).abs() < 1e-9);
        assert!(a.lo <= -1.0 && a.hi >= 2.0 - 1e-12);
        let g = relaxation_grid(&problem("u1", "x1^2"), &cloud(&problem("u1", "x1^2")), &RelaxOptions::default()).unwrap();
        assert_eq!(g.axes()[1].count % 2, 1);
        assert!((0..g.axes()[0].count).any(|i| g.axes()[0].coord(i).abs() < 1e-12));
    }

    #[test]
    fn linear_dynamics_are_their_own_envelopes() {
        let p = problem("u1", "x1^2");
        let relaxed = convexify(&p, &cloud(&p), &RelaxOptions::default()).unwrap();
        for (lo, up) in relaxed.lower.iter().zip(&relaxed.upper) {
            for i in lo.field.masked_indices() {
                assert!((lo.envelope.values()[i] - lo.field.values()[i]).abs() <= 1e-9);
                assert!((up.envelope.values()[i] - up.field.values()[i]).abs() <= 1e-9);
            }
        }
        assert!(relaxed.sandwich_violation() <= 1e-9);
    }

    #[test]
    fn example1_field_envelope_on_full_grid() {
        let p = ProblemSpec::from_sources(
            &["if(x1 >= 0, (x1-1)^2, (x1+1)^2)"],
            "x1^2",
            vec![0.0],
            1.0,
            ControlBox::empty(),
            TimeMode::Fixed,
        )
        .unwrap();
        let pts = [-3.0, 3.0]
            .iter()
            .map(|&x| crate::reach::CloudPoint { t: 0.0, x: vec![x], y: 0.0, control_id: 0 })
            .collect();
        let cloud = ReachCloud::from_points(1, pts, false, &ReachOptions::new(0.1));
        let opts = RelaxOptions { margin: 1.0, state_nodes: 61, control_nodes: 3 };
        let relaxed = convexify(&p, &cloud, &opts).unwrap();
        let env = &relaxed.lower[0].envelope;
        for (node, v) in relaxed.grid.nodes().zip(env.values()) {
            let x = node[0];
            let closed = if x.abs() <= 1.0 { 0.0 } else { (x.abs() - 1.0).powi(2) };
            assert!((v - closed).abs() < 1e-12, "{x}: {v}");
        }
    }

    #[test]
    fn sandwich_holds_for_nonconvex_dynamics() {
        let p = problem("x1 * sin(1/x1) + u1", "abs(u1 - x1)");
        let relaxed = convexify(&p, &cloud(&p), &RelaxOptions::default()).unwrap();
        assert!(relaxed.sandwich_violation() <= 1e-9);
        // |u - x| is convex, so its envelope is itself
        let c = &relaxed.cost;
        for i in c.field.masked_indices() {
            assert!((c.envelope.values()[i] - c.field.values()[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn relaxed_system_clamps_and_counts_exits() {
        let p = problem("u1", "x1^2");
        let relaxed = convexify(&p, &cloud(&p), &RelaxOptions::default()).unwrap();
        let sys = relaxed.system(Which::Lower);
        let mut dx = [0.0];
        sys.rhs(&[0.2], &[0.5], 0.0, &mut dx).unwrap();
        assert!((dx[0] - 0.5).abs() < 1e-12);
        assert_eq!(relaxed.region_exits(), 0);
        sys.rhs(&[50.0], &[0.5], 0.0, &mut dx).unwrap();
        assert_eq!(relaxed.region_exits(), 1);
        let _ = ControlSignal::constant(vec![0.0], 1.0).unwrap();
    }

    #[test]
    fn time_dependent_expressions_are_rejected() {
        let p = problem("u1 + t", "x1^2");
        assert!(matches!(
            convexify(&p, &cloud(&p), &RelaxOptions::default()),
            Err(RelaxError::Unsupported(_))
        ));
    }
}

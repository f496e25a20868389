//! Sampled attainability sets and outer bounds on them.
//!
//! A [`ReachCloud`] holds time-stamped augmented states `(t, x, y)` from many
//! controls together with hulls of the `(x, y)` and `x` projections. Clouds
//! are inner approximations of the attainability set; the certificates in
//! [`bounds`] are outer ones.

pub mod bounds;
mod hull;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlSignal;
use crate::ode::{integrate, IntegrateOptions, OdeError, DEFAULT_BLOWUP};
use crate::problem::Dynamics;

pub use bounds::{
    lyapunov_bound, minkowski_bound, projection_bound, ratio_bound, Bound, BoundCertificate,
    BoundError, BoundKind, ProjectionOptions,
};
pub use hull::{support_of, ConvexHull, DirectionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: f64,
    pub control_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachOptions {
    pub step: f64,
    /// Record every `t_stride`-th integration point (the last one always).
    pub t_stride: usize,
    pub blowup: f64,
    /// Random directions added to `±e_i` in support tables.
    pub extra_directions: usize,
    pub seed: u64,
}

impl ReachOptions {
    pub fn new(step: f64) -> Self {
        ReachOptions {
            step,
            t_stride: 1,
            blowup: DEFAULT_BLOWUP,
            extra_directions: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachCloud {
    pub state_dim: usize,
    pub points: Vec<CloudPoint>,
    /// Hull of the `(x, y)` projections.
    pub hull: ConvexHull,
    /// Hull of the `x` projections.
    pub x_hull: ConvexHull,
    /// Some trajectory crossed the blow-up threshold.
    pub unbounded: bool,
    pub directions: DirectionSet,
}

/// Integrates every control and collects the attainability cloud.
///
/// Diverged trajectories contribute the points recorded up to and including
/// the one that crossed the threshold, and set `unbounded`.
pub fn build_reach(
    sys: &(impl Dynamics + ?Sized),
    controls: &[ControlSignal],
    opts: &ReachOptions,
) -> Result<ReachCloud, OdeError> {
    assert!(!controls.is_empty(), "build_reach needs at least one control");
    let iopts = IntegrateOptions {
        step: opts.step,
        blowup: opts.blowup,
    };
    let trajectories = controls
        .par_iter()
        .map(|u| integrate(sys, u, &iopts))
        .collect::<Result<Vec<_>, _>>()?;
    let stride = opts.t_stride.max(1);
    let mut points = Vec::new();
    let mut unbounded = false;
    for (id, tr) in trajectories.iter().enumerate() {
        unbounded |= tr.diverged();
        let last = tr.len() - 1;
        for i in (0..tr.len()).filter(|&i| i % stride == 0 || i == last) {
            points.push(CloudPoint {
                t: tr.times[i],
                x: tr.states[i].clone(),
                y: tr.costs[i],
                control_id: id,
            });
        }
    }
    Ok(ReachCloud::from_points(sys.state_dim(), points, unbounded, opts))
}

impl ReachCloud {
    pub fn from_points(state_dim: usize, points: Vec<CloudPoint>, unbounded: bool, opts: &ReachOptions) -> Self {
        assert!(!points.is_empty(), "cloud needs at least one point");
        let dirs_xy = DirectionSet::seeded(state_dim + 1, opts.extra_directions, opts.seed);
        let dirs_x = DirectionSet::seeded(state_dim, opts.extra_directions, opts.seed);
        let xy: Vec<Vec<f64>> = points
            .iter()
            .map(|p| p.x.iter().copied().chain(std::iter::once(p.y)).collect())
            .collect();
        let xs: Vec<Vec<f64>> = points.iter().map(|p| p.x.clone()).collect();
        ReachCloud {
            state_dim,
            hull: ConvexHull::build(&xy, &dirs_xy).expect("nonempty"),
            x_hull: ConvexHull::build(&xs, &dirs_x).expect("nonempty"),
            points,
            unbounded,
            directions: dirs_x,
        }
    }

    /// Exact support value of the sampled `x` points in direction `g`.
    pub fn support_x(&self, g: &[f64]) -> f64 {
        support_of(self.points.iter().map(|p| p.x.as_slice()), g)
    }

    /// Support values over the cloud's own direction set.
    pub fn support_table(&self) -> Vec<f64> {
        self.directions.directions().iter().map(|g| self.support_x(g)).collect()
    }

    pub fn x_extent(&self) -> Vec<(f64, f64)> {
        self.x_hull.extent()
    }

    pub fn x_contains(&self, x: &[f64], tol: f64) -> bool {
        self.x_hull.contains(x, tol)
    }

    /// Rows `(t, x..., y, control_id)`.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        header.push("y".into());
        header.push("control_id".into());
        let mut out = header.join(",");
        out.push('\n');
        for p in &self.points {
            out.push_str(&crate::io::fmt_f64(p.t));
            for c in &p.x {
                out.push(',');
                out.push_str(&crate::io::fmt_f64(*c));
            }
            out.push(',');
            out.push_str(&crate::io::fmt_f64(p.y));
            out.push_str(&format!(",{}\n", p.control_id));
        }
        out
    }
}

/// Whether `q = (x, y)` lies within `tol` of the cloud's `(x, y)` hull.
pub fn hull_contains(cloud: &ReachCloud, q: &[f64], tol: f64) -> bool {
    cloud.hull.contains(q, tol)
}

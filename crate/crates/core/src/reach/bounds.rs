//! Outer bounds on attainability sets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::hull::{dot, DirectionSet};
use super::ReachCloud;
use crate::control::ControlBox;
use crate::expr::EvalError;
use crate::ode::OdeError;
use crate::problem::Dynamics;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("direction must have unit length, got norm {0}")]
    NotUnit(f64),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Lyapunov,
    Minkowski,
    Ratio,
    Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Bound {
    /// `V(x) <= level`, hence `|x| <= radius`.
    Ball { level: f64, radius: f64 },
    /// `<g, x> <= value` for every tabled direction.
    Support { directions: DirectionSet, values: Vec<f64> },
    /// `<x(T), g>` in `[lo, hi]`; `<x(t), g>` in `[lo_all, hi_all]` for all `t`.
    Interval { lo: f64, hi: f64, lo_all: f64, hi_all: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CertificateParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub kind: BoundKind,
    pub params: CertificateParams,
    pub bound: Bound,
    /// The certificate rests on an unproven reduction or assumption.
    pub heuristic: bool,
    pub note: String,
}

fn positive(name: &'static str, value: f64) -> Result<f64, BoundError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(BoundError::NonPositiveParameter { name, value })
    }
}

fn nonnegative(name: &'static str, value: f64) -> Result<f64, BoundError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(BoundError::NonPositiveParameter { name, value })
    }
}

impl BoundCertificate {
    /// Whether the state `x` satisfies the bound within `tol`; `v` is `V(x)`
    /// for sublevel certificates.
    pub fn admits(&self, x: &[f64], v: Option<f64>, tol: f64) -> bool {
        match &self.bound {
            Bound::Ball { level, radius } => match v {
                Some(v) => v <= level + tol,
                None => x.iter().map(|c| c * c).sum::<f64>().sqrt() <= radius + tol,
            },
            Bound::Support { directions, values } => directions
                .directions()
                .iter()
                .zip(values)
                .all(|(g, h)| dot(g, x) <= h + tol),
            Bound::Interval { lo_all, hi_all, .. } => {
                let g = self.params.direction.as_deref().unwrap_or(&[1.0]);
                let s = dot(g, x);
                s >= lo_all - tol && s <= hi_all + tol
            }
        }
    }

    /// `[lo, hi]` along the first axis of a support bound in one dimension.
    pub fn interval(&self) -> Option<(f64, f64)> {
        match &self.bound {
            Bound::Support { directions, values } if directions.dim() == 1 => Some((-values[1], values[0])),
            Bound::Interval { lo, hi, .. } => Some((*lo, *hi)),
            _ => None,
        }
    }
}

/// Sublevel bound from `m1 |x|^2 <= V(x) <= m2 |x|^2` and `V <= c1 + c2` on the set.
pub fn lyapunov_bound(m1: f64, m2: f64, c1: f64, c2: f64) -> Result<BoundCertificate, BoundError> {
    let m1 = positive("m1", m1)?;
    let m2 = positive("m2", m2)?;
    if m2 < m1 {
        return Err(BoundError::NonPositiveParameter { name: "m2 - m1", value: m2 - m1 });
    }
    let c1 = nonnegative("c1", c1)?;
    let c2 = nonnegative("c2", c2)?;
    Ok(BoundCertificate {
        kind: BoundKind::Lyapunov,
        params: CertificateParams {
            m1: Some(m1),
            m2: Some(m2),
            c1: Some(c1),
            c2: Some(c2),
            ..Default::default()
        },
        bound: Bound::Ball {
            level: c1 + c2,
            radius: ((c1 + c2) / m1).sqrt(),
        },
        heuristic: false,
        note: "V(x) <= c1 + c2, |x| <= sqrt((c1 + c2) / m1)".into(),
    })
}

/// Support-function sum of two split-system clouds over the first cloud's directions.
pub fn minkowski_bound(first: &ReachCloud, second: &ReachCloud) -> Result<BoundCertificate, BoundError> {
    if first.state_dim != second.state_dim {
        return Err(BoundError::DimensionMismatch(first.state_dim, second.state_dim));
    }
    let directions = first.directions.clone();
    let values = directions
        .directions()
        .iter()
        .map(|g| first.support_x(g) + second.support_x(g))
        .collect();
    Ok(BoundCertificate {
        kind: BoundKind::Minkowski,
        params: CertificateParams::default(),
        bound: Bound::Support { directions, values },
        heuristic: false,
        note: "support of the sum of the split-system sets".into(),
    })
}

/// Support values of `cloud` scaled by `k2`.
///
/// Scaling about the origin only encloses the set when the cloud is
/// star-shaped about the origin; otherwise the certificate is flagged.
pub fn ratio_bound(k2: f64, cloud: &ReachCloud) -> Result<BoundCertificate, BoundError> {
    let k2 = positive("k2", k2)?;
    let origin = vec![0.0; cloud.state_dim];
    let star = cloud.x_contains(&origin, 1e-12);
    let directions = cloud.directions.clone();
    let values = directions.directions().iter().map(|g| k2 * cloud.support_x(g)).collect();
    Ok(BoundCertificate {
        kind: BoundKind::Ratio,
        params: CertificateParams {
            k2: Some(k2),
            ..Default::default()
        },
        bound: Bound::Support { directions, values },
        heuristic: !star,
        note: if star {
            "support scaled by k2; hull contains the origin".into()
        } else {
            "support scaled by k2; hull misses the origin, enclosure not guaranteed".into()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    pub step: f64,
    /// Lattice levels per control component searched for the extreme rates.
    pub levels: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions { step: 1e-3, levels: 5 }
    }
}

/// Comparison bounds for `theta = <x, g>`.
///
/// Integrates `theta' = max_u <phi(theta g, u, t), g>` and the matching
/// minimum, the extreme taken over a lattice of the control box. The state
/// is reconstructed as `theta g`, which is exact only for one state; the
/// certificate is flagged heuristic otherwise.
pub fn projection_bound(
    sys: &(impl Dynamics + ?Sized),
    g: &[f64],
    u: &ControlBox,
    horizon: f64,
    opts: &ProjectionOptions,
) -> Result<BoundCertificate, BoundError> {
    let n = sys.state_dim();
    if g.len() != n {
        return Err(BoundError::DimensionMismatch(g.len(), n));
    }
    let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(BoundError::NotUnit(norm));
    }
    positive("horizon", horizon)?;
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(OdeError::InvalidStep(opts.step).into());
    }
    let lattice = control_lattice(u, opts.levels.max(2));
    let mut dx = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut rate = |theta: f64, t: f64, upper: bool| -> Result<f64, OdeError> {
        for (xi, gi) in x.iter_mut().zip(g) {
            *xi = theta * gi;
        }
        let mut best = if upper { f64::NEG_INFINITY } else { f64::INFINITY };
        for v in &lattice {
            sys.rhs(&x, v, t, &mut dx).map_err(|source| match source {
                EvalError::NonFinite => OdeError::NonFiniteState(t),
                source => OdeError::Eval { t, source },
            })?;
            let s = dot(&dx, g);
            best = if upper { best.max(s) } else { best.min(s) };
        }
        Ok(best)
    };
    let steps = ((horizon / opts.step) - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let start = dot(sys.initial_state(), g);
    let (mut lo, mut hi) = (start, start);
    let (mut lo_all, mut hi_all) = (start, start);
    for k in 0..steps {
        let t = k as f64 * h;
        for (theta, upper) in [(&mut lo, false), (&mut hi, true)] {
            let k1 = rate(*theta, t, upper)?;
            let k2 = rate(*theta + 0.5 * h * k1, t + 0.5 * h, upper)?;
            let k3 = rate(*theta + 0.5 * h * k2, t + 0.5 * h, upper)?;
            let k4 = rate(*theta + h * k3, t + h, upper)?;
            *theta += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !theta.is_finite() {
                return Err(OdeError::NonFiniteState(t + h).into());
            }
        }
        lo_all = lo_all.min(lo);
        hi_all = hi_all.max(hi);
    }
    Ok(BoundCertificate {
        kind: BoundKind::Projection,
        params: CertificateParams {
            direction: Some(g.to_vec()),
            ..Default::default()
        },
        bound: Bound::Interval { lo, hi, lo_all, hi_all },
        heuristic: n > 1,
        note: if n > 1 {
            "scalar comparison with state reconstructed as theta * g; not a proven enclosure".into()
        } else {
            "scalar comparison bound".into()
        },
    })
}

fn control_lattice(u: &ControlBox, m: usize) -> Vec<Vec<f64>> {
    let per: Vec<Vec<f64>> = (0..u.dim()).map(|c| u.levels(c, m)).collect();
    let mut out = vec![Vec::new()];
    for levels in &per {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                levels.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

//! Direct search over a control family followed by coordinate descent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RelaxError;
use crate::control::{ControlBox, ControlSignal};
use crate::ode::{integrate, IntegrateOptions, OdeError, Trajectory, DEFAULT_BLOWUP};
use crate::problem::{Dynamics, TimeMode};

/// Running costs below this on a blown-up trajectory count as divergence to `-inf`.
pub const DIVERGENCE_FLOOR: f64 = -1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub step: f64,
    pub blowup: f64,
    /// Coordinate-descent rounds on the incumbent.
    pub refine: usize,
    /// Step halvings per coordinate in each round.
    pub halvings: usize,
}

impl OptimizeOptions {
    pub fn new(step: f64) -> Self {
        OptimizeOptions {
            step,
            blowup: DEFAULT_BLOWUP,
            refine: 0,
            halvings: 6,
        }
    }

    fn integrate_options(&self) -> IntegrateOptions {
        IntegrateOptions {
            step: self.step,
            blowup: self.blowup,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptStatus {
    Finite,
    DivergentToMinusInfinity,
}

/// Objective value of one trajectory and the time at which it is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub value: f64,
    pub time: f64,
    pub status: OptStatus,
}

impl Objective {
    /// Ordering key: divergence beats every finite value.
    fn key(&self) -> f64 {
        match self.status {
            OptStatus::DivergentToMinusInfinity => f64::NEG_INFINITY,
            OptStatus::Finite => self.value,
        }
    }

    /// Fixed mode takes `y(T)`; free mode the smallest stored `y(t)`.
    ///
    /// A trajectory that blows up with the running cost below the divergence
    /// floor is divergent; one that blows up otherwise never reaches `T` and
    /// scores `+inf` in fixed mode.
    pub fn of(tr: &Trajectory, mode: TimeMode, horizon: f64) -> Self {
        let (imin, vmin) = tr.running_min();
        if tr.diverged() && vmin < DIVERGENCE_FLOOR {
            return Objective {
                value: vmin,
                time: tr.times[imin],
                status: OptStatus::DivergentToMinusInfinity,
            };
        }
        match mode {
            TimeMode::Free => Objective {
                value: vmin,
                time: tr.times[imin],
                status: OptStatus::Finite,
            },
            TimeMode::Fixed if tr.diverged() => Objective {
                value: f64::INFINITY,
                time: horizon,
                status: OptStatus::Finite,
            },
            TimeMode::Fixed => Objective {
                value: tr.final_cost(),
                time: horizon,
                status: OptStatus::Finite,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_control: ControlSignal,
    pub best_time: f64,
    pub value: f64,
    pub status: OptStatus,
    pub trajectory: Trajectory,
    /// Incumbent value after the family search and after each refinement round.
    pub history: Vec<f64>,
    pub evaluations: usize,
    /// Index in the family of the signal refinement started from.
    pub seed_index: usize,
}

struct Evaluator<'a, D: Dynamics + ?Sized> {
    sys: &'a D,
    mode: TimeMode,
    opts: IntegrateOptions,
}

impl<D: Dynamics + ?Sized> Evaluator<'_, D> {
    fn run(&self, u: &ControlSignal) -> Result<(Objective, Trajectory), OdeError> {
        let tr = integrate(self.sys, u, &self.opts)?;
        Ok((Objective::of(&tr, self.mode, u.horizon()), tr))
    }

    /// Objectives of every signal, in order.
    fn all(&self, family: &[ControlSignal]) -> Result<Vec<Objective>, OdeError> {
        family.par_iter().map(|u| self.run(u).map(|(o, _)| o)).collect()
    }
}

/// First index of the smallest key; deterministic under ties.
fn argmin(objs: &[Objective]) -> usize {
    let mut best = 0;
    for (i, o) in objs.iter().enumerate() {
        if o.key() < objs[best].key() {
            best = i;
        }
    }
    best
}

/// Best signal of `family` for `sys`, then `opts.refine` rounds of
/// coordinate descent on its interval values.
pub fn optimize(
    sys: &(impl Dynamics + ?Sized),
    mode: TimeMode,
    family: &[ControlSignal],
    u_box: &ControlBox,
    opts: &OptimizeOptions,
) -> Result<OptResult, RelaxError> {
    if family.is_empty() {
        return Err(RelaxError::EmptyFamily);
    }
    let eval = Evaluator {
        sys,
        mode,
        opts: opts.integrate_options(),
    };
    let objs = eval.all(family)?;
    let seed_index = argmin(&objs);
    let mut evaluations = family.len();
    let (incumbent, best, history, extra) = descend(&eval, family[seed_index].clone(), objs[seed_index], u_box, opts)?;
    evaluations += extra;
    let (objective, trajectory) = eval.run(&incumbent)?;
    debug_assert_eq!(objective.key().to_bits(), best.key().to_bits());
    Ok(OptResult {
        best_control: incumbent,
        best_time: objective.time,
        value: objective.value,
        status: objective.status,
        trajectory,
        history,
        evaluations: evaluations + 1,
        seed_index,
    })
}

/// Coordinate descent from `start`; returns the incumbent, its objective,
/// the per-round history, and the number of evaluations spent.
fn descend<D: Dynamics + ?Sized>(
    eval: &Evaluator<'_, D>,
    start: ControlSignal,
    start_obj: Objective,
    u_box: &ControlBox,
    opts: &OptimizeOptions,
) -> Result<(ControlSignal, Objective, Vec<f64>, usize), RelaxError> {
    let mut incumbent = start;
    let mut best = start_obj;
    let mut history = vec![best.key()];
    let mut evaluations = 0;
    if best.status == OptStatus::DivergentToMinusInfinity {
        return Ok((incumbent, best, history, 0));
    }
    for _ in 0..opts.refine {
        let before = best.key();
        for interval in 0..incumbent.intervals() {
            for c in 0..incumbent.dim() {
                let (lo, hi) = (u_box.lower()[c], u_box.upper()[c]);
                let v = incumbent.values()[interval][c];
                let mut candidates: Vec<f64> = Vec::with_capacity(2 * opts.halvings + 2);
                let mut s = hi - lo;
                for _ in 0..=opts.halvings {
                    for cand in [u_box.clamp(c, v - s), u_box.clamp(c, v + s)] {
                        if cand != v && !candidates.contains(&cand) {
                            candidates.push(cand);
                        }
                    }
                    s *= 0.5;
                }
                if candidates.is_empty() {
                    continue;
                }
                let trials: Vec<ControlSignal> =
                    candidates.iter().map(|&cand| incumbent.with_value(interval, c, cand)).collect();
                let objs = eval.all(&trials)?;
                evaluations += trials.len();
                let k = argmin(&objs);
                if objs[k].key() < best.key() {
                    best = objs[k];
                    incumbent = trials.into_iter().nth(k).expect("index in range");
                }
            }
        }
        history.push(best.key());
        if best.key() >= before || best.status == OptStatus::DivergentToMinusInfinity {
            break;
        }
    }
    Ok((incumbent, best, history, evaluations))
}

/// Refines each of `starts` to stagnation; returns the final values.
pub(crate) fn stagnation_values(
    sys: &(impl Dynamics + ?Sized),
    mode: TimeMode,
    starts: &[ControlSignal],
    u_box: &ControlBox,
    opts: &OptimizeOptions,
    max_rounds: usize,
) -> Result<Vec<f64>, RelaxError> {
    let eval = Evaluator {
        sys,
        mode,
        opts: opts.integrate_options(),
    };
    let deep = OptimizeOptions {
        refine: max_rounds,
        ..*opts
    };
    starts
        .iter()
        .map(|u| {
            let (obj, _) = eval.run(u)?;
            let (_, best, _, _) = descend(&eval, u.clone(), obj, u_box, &deep)?;
            Ok(best.key())
        })
        .collect()
}

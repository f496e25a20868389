//! Fixed-step integration of the augmented system `(x, y)` and Picard iteration.
//!
//! Sub-steps are snapped to the switch grid of the control: every interval
//! `[t_i, t_{i+1})` is split into `ceil(len / step)` equal sub-steps, so the
//! control is constant across each classical fourth-order step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControlSignal;
use crate::expr::EvalError;
use crate::problem::Dynamics;

pub const DEFAULT_BLOWUP: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("control has {got} components, system expects {expected}")]
    ControlDimension { got: usize, expected: usize },
    #[error("evaluation failed at t = {t}: {source}")]
    Eval {
        t: f64,
        #[source]
        source: EvalError,
    },
    #[error("state became non-finite at t = {0}")]
    NonFiniteState(f64),
    #[error("Picard iteration needs at least one iterate")]
    NoIterates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub step: f64,
    pub blowup: f64,
}

impl IntegrateOptions {
    pub fn new(step: f64) -> Self {
        IntegrateOptions {
            step,
            blowup: DEFAULT_BLOWUP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Running cost `y(t)`.
    pub costs: Vec<f64>,
    /// Time at which `|x|_inf` exceeded the blow-up threshold.
    pub blowup_time: Option<f64>,
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        self.blowup_time.is_some()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial point")
    }

    pub fn final_cost(&self) -> f64 {
        *self.costs.last().expect("trajectory has at least the initial point")
    }

    /// Index and value of the smallest running cost.
    pub fn running_min(&self) -> (usize, f64) {
        self.costs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, &c)| if c < best.1 { (i, c) } else { best })
    }

    /// Linear interpolation of the state at `t` (clamped to the stored span).
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let i = match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.states[i].clone(),
            Err(i) => i,
        };
        if i == 0 {
            return self.states[0].clone();
        }
        if i >= self.times.len() {
            return self.final_state().to_vec();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        self.states[i - 1]
            .iter()
            .zip(&self.states[i])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("y".into());
        crate::io::csv_table(
            &header,
            self.times.iter().zip(&self.states).zip(&self.costs).map(|((t, x), y)| {
                let mut row = Vec::with_capacity(n + 2);
                row.push(*t);
                row.extend_from_slice(x);
                row.push(*y);
                row
            }),
        )
    }
}

/// One sub-step plan: start time, length, interval index.
fn step_plan(u: &ControlSignal, step: f64) -> Vec<(f64, f64, usize)> {
    let mut plan = Vec::new();
    for i in 0..u.intervals() {
        let (a, b) = (u.switch_times()[i], u.interval_end(i));
        let len = b - a;
        let count = ((len / step) - 1e-9).ceil().max(1.0) as usize;
        let h = len / count as f64;
        for j in 0..count {
            let start = if j == 0 { a } else { a + h * j as f64 };
            let h_j = if j + 1 == count { b - start } else { h };
            plan.push((start, h_j, i));
        }
    }
    plan
}

fn check(sys: &(impl Dynamics + ?Sized), u: &ControlSignal, step: f64) -> Result<(), OdeError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(OdeError::InvalidStep(step));
    }
    if u.dim() != sys.control_dim() {
        return Err(OdeError::ControlDimension {
            got: u.dim(),
            expected: sys.control_dim(),
        });
    }
    Ok(())
}

enum StepOutcome {
    Ok,
    BlowUp,
}

struct Rk4Buffers {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, c| m.max(c.abs()))
}

/// Advances `(x, y)` by one RK4 step of length `h` with the control held at `u`.
fn rk4_step(
    sys: &(impl Dynamics + ?Sized),
    x: &mut [f64],
    y: &mut f64,
    u: &[f64],
    t: f64,
    h: f64,
    buf: &mut Rk4Buffers,
) -> Result<StepOutcome, OdeError> {
    let n = x.len();
    let mut costs = [0.0; 4];
    let offsets = [0.0, 0.5, 0.5, 1.0];
    for s in 0..4 {
        let ts = t + offsets[s] * h;
        if s == 0 {
            buf.tmp.copy_from_slice(x);
        } else {
            let (prev, _) = buf.k.split_at(s);
            for i in 0..n {
                buf.tmp[i] = x[i] + offsets[s] * h * prev[s - 1][i];
            }
        }
        let (stage, rest) = buf.k.split_at_mut(s);
        let _ = stage;
        match sys.rhs(&buf.tmp, u, ts, &mut rest[0]) {
            Ok(()) => {}
            Err(EvalError::NonFinite) => return Ok(StepOutcome::BlowUp),
            Err(source) => return Err(OdeError::Eval { t: ts, source }),
        }
        costs[s] = match sys.running_cost(&buf.tmp, u, ts) {
            Ok(c) => c,
            Err(EvalError::NonFinite) => return Ok(StepOutcome::BlowUp),
            Err(source) => return Err(OdeError::Eval { t: ts, source }),
        };
    }
    for i in 0..n {
        x[i] += h / 6.0 * (buf.k[0][i] + 2.0 * buf.k[1][i] + 2.0 * buf.k[2][i] + buf.k[3][i]);
    }
    *y += h / 6.0 * (costs[0] + 2.0 * costs[1] + 2.0 * costs[2] + costs[3]);
    Ok(StepOutcome::Ok)
}

/// Integrates the augmented system under `u` from `t = 0` to the control horizon.
///
/// Stops early, with `blowup_time` set, once `|x|_inf` exceeds `opts.blowup`
/// or a right-hand side overflows. The point that crossed the threshold is
/// kept when it is finite.
pub fn integrate(
    sys: &(impl Dynamics + ?Sized),
    u: &ControlSignal,
    opts: &IntegrateOptions,
) -> Result<Trajectory, OdeError> {
    check(sys, u, opts.step)?;
    let plan = step_plan(u, opts.step);
    let n = sys.state_dim();
    let mut x = sys.initial_state().to_vec();
    let mut y = 0.0;
    let mut traj = Trajectory {
        times: Vec::with_capacity(plan.len() + 1),
        states: Vec::with_capacity(plan.len() + 1),
        costs: Vec::with_capacity(plan.len() + 1),
        blowup_time: None,
    };
    traj.times.push(0.0);
    traj.states.push(x.clone());
    traj.costs.push(0.0);
    let mut buf = Rk4Buffers {
        k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        tmp: vec![0.0; n],
    };
    for &(t, h, interval) in &plan {
        let value = &u.values()[interval];
        let t_end = t + h;
        let before = sup_norm(&x);
        match rk4_step(sys, &mut x, &mut y, value, t, h, &mut buf)? {
            StepOutcome::BlowUp => {
                traj.blowup_time = Some(t_end);
                return Ok(traj);
            }
            StepOutcome::Ok => {}
        }
        let finite = x.iter().all(|c| c.is_finite());
        if !finite {
            if x.iter().any(|c| c.is_nan()) && before < opts.blowup.sqrt() {
                return Err(OdeError::NonFiniteState(t_end));
            }
            traj.blowup_time = Some(t_end);
            return Ok(traj);
        }
        if !y.is_finite() {
            return Err(OdeError::NonFiniteState(t_end));
        }
        traj.times.push(t_end);
        traj.states.push(x.clone());
        traj.costs.push(y);
        if sup_norm(&x) > opts.blowup {
            traj.blowup_time = Some(t_end);
            return Ok(traj);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardResult {
    /// `iterates[0]` is the constant initial guess.
    pub iterates: Vec<Trajectory>,
    /// Sup-norm distance between iterates `k` and `k + 1`.
    pub deltas: Vec<f64>,
}

/// Successive approximations `x_{k+1}(t) = x0 + int_0^t phi(x_k, u) dtau`.
///
/// Quadrature is Simpson's rule on the integration grid, with each iterate
/// also stored at sub-step midpoints so the next iterate can be evaluated
/// there.
pub fn picard(
    sys: &(impl Dynamics + ?Sized),
    u: &ControlSignal,
    k_max: usize,
    opts: &IntegrateOptions,
) -> Result<PicardResult, OdeError> {
    if k_max == 0 {
        return Err(OdeError::NoIterates);
    }
    check(sys, u, opts.step)?;
    let plan = step_plan(u, opts.step);
    let n = sys.state_dim();
    let x0 = sys.initial_state().to_vec();
    let steps = plan.len();

    let mut nodes = vec![x0.clone(); steps + 1];
    let mut mids = vec![x0.clone(); steps];
    let mut cost_nodes = vec![0.0; steps + 1];
    let times: Vec<f64> = std::iter::once(0.0)
        .chain(plan.iter().map(|&(t, h, _)| t + h))
        .collect();

    let snapshot = |nodes: &[Vec<f64>], costs: &[f64]| -> Trajectory {
        let blowup_time = nodes
            .iter()
            .position(|x| sup_norm(x) > opts.blowup)
            .map(|i| times[i]);
        Trajectory {
            times: times.clone(),
            states: nodes.to_vec(),
            costs: costs.to_vec(),
            blowup_time,
        }
    };

    let mut iterates = vec![snapshot(&nodes, &cost_nodes)];
    let mut deltas = Vec::with_capacity(k_max);
    let mut left = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut right = vec![0.0; n];
    let eval_err = |t: f64| move |source| OdeError::Eval { t, source };

    for _ in 0..k_max {
        let mut next_nodes = Vec::with_capacity(steps + 1);
        let mut next_mids = Vec::with_capacity(steps);
        let mut next_costs = Vec::with_capacity(steps + 1);
        next_nodes.push(x0.clone());
        next_costs.push(0.0);
        for (s, &(t, h, interval)) in plan.iter().enumerate() {
            let value = &u.values()[interval];
            let tm = t + 0.5 * h;
            sys.rhs(&nodes[s], value, t, &mut left).map_err(eval_err(t))?;
            sys.rhs(&mids[s], value, tm, &mut mid).map_err(eval_err(tm))?;
            sys.rhs(&nodes[s + 1], value, t + h, &mut right)
                .map_err(eval_err(t + h))?;
            let cl = sys.running_cost(&nodes[s], value, t).map_err(eval_err(t))?;
            let cm = sys.running_cost(&mids[s], value, tm).map_err(eval_err(tm))?;
            let cr = sys
                .running_cost(&nodes[s + 1], value, t + h)
                .map_err(eval_err(t + h))?;
            let base = &next_nodes[s];
            let end: Vec<f64> = (0..n)
                .map(|i| base[i] + h / 6.0 * (left[i] + 4.0 * mid[i] + right[i]))
                .collect();
            let half: Vec<f64> = (0..n)
                .map(|i| base[i] + h / 24.0 * (5.0 * left[i] + 8.0 * mid[i] - right[i]))
                .collect();
            if end.iter().chain(&half).any(|c| !c.is_finite()) {
                return Err(OdeError::NonFiniteState(t + h));
            }
            let c0 = next_costs[s];
            next_costs.push(c0 + h / 6.0 * (cl + 4.0 * cm + cr));
            next_mids.push(half);
            next_nodes.push(end);
        }
        let delta = nodes
            .iter()
            .zip(&next_nodes)
            .chain(mids.iter().zip(&next_mids))
            .map(|(a, b)| a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())))
            .fold(0.0, f64::max);
        deltas.push(delta);
        nodes = next_nodes;
        mids = next_mids;
        cost_nodes = next_costs;
        iterates.push(snapshot(&nodes, &cost_nodes));
    }
    Ok(PicardResult { iterates, deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlBox;
    use crate::problem::{ProblemSpec, TimeMode};

    fn system(phi: &str, f: &str, x0: f64, horizon: f64, r: usize) -> ProblemSpec {
        ProblemSpec::from_sources(
            &[phi],
            f,
            vec![x0],
            horizon,
            if r == 0 { ControlBox::empty() } else { ControlBox::symmetric(r, 1.0) },
            TimeMode::Fixed,
        )
        .unwrap()
    }

    fn no_control(horizon: f64) -> ControlSignal {
        ControlSignal::constant(vec![], horizon).unwrap()
    }

    #[test]
    fn exponential_growth() {
        let p = system("x1", "0", 1.0, 1.0, 0);
        let tr = integrate(&p, &no_control(1.0), &IntegrateOptions::new(1e-3)).unwrap();
        assert!((tr.final_state()[0] - std::f64::consts::E).abs() < 1e-6);
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(tr.states[0], vec![1.0]);
        assert_eq!(tr.costs[0], 0.0);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert!(!tr.diverged());
    }

    #[test]
    fn piecewise_system_reaches_one_half() {
        let p = system("if(x1 >= 0, (x1-1)^2, (x1+1)^2)", "x1^2", 0.0, 1.0, 0);
        let tr = integrate(&p, &no_control(1.0), &IntegrateOptions::new(1e-3)).unwrap();
        assert!((tr.final_state()[0] - 0.5).abs() < 1e-6);
        for (t, x) in tr.times.iter().zip(&tr.states) {
            assert!((x[0] - (1.0 - 1.0 / (t + 1.0))).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_blows_up_at_one() {
        // the escape time sits on t = 1; a fixed-step map stays finite there
        let p = system("x1^2", "-x1^2", 1.0, 1.0, 0);
        let tr = integrate(&p, &no_control(1.0), &IntegrateOptions::new(1e-3)).unwrap();
        assert!(tr.final_state()[0] > 1e3);

        let p = system("x1^2", "-x1^2", 1.0, 1.5, 0);
        let tr = integrate(&p, &no_control(1.5), &IntegrateOptions::new(1e-3)).unwrap();
        assert!(tr.diverged());
        let t = tr.blowup_time.unwrap();
        assert!(t > 1.0 && t < 1.01, "blow-up at {t}");
        assert!(tr.running_min().1 < -1e6);
        assert!(tr.states.iter().all(|x| x[0].is_finite()));
    }

    #[test]
    fn fourth_order_convergence() {
        let p = system("x1", "0", 1.0, 1.0, 0);
        let err = |h: f64| {
            let tr = integrate(&p, &no_control(1.0), &IntegrateOptions::new(h)).unwrap();
            (tr.final_state()[0] - std::f64::consts::E).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((10.0..=26.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn unit_cost_gives_time() {
        let p = system("u1", "1", 0.0, 1.0, 1);
        let u = ControlSignal::uniform(vec![vec![1.0], vec![-0.5], vec![0.25]], 1.0).unwrap();
        let tr = integrate(&p, &u, &IntegrateOptions::new(1e-3)).unwrap();
        for (t, y) in tr.times.iter().zip(&tr.costs) {
            assert!((t - y).abs() <= 1e-10);
        }
        // steps snap onto the switch times
        for s in u.switch_times() {
            assert!(tr.times.iter().any(|t| (t - s).abs() < 1e-15));
        }
        let expected = 1.0 / 3.0 - 0.5 / 3.0 + 0.25 / 3.0;
        assert!((tr.final_state()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let p = system("x1", "0", 1.0, 1.0, 0);
        assert!(matches!(
            integrate(&p, &no_control(1.0), &IntegrateOptions::new(0.0)),
            Err(OdeError::InvalidStep(_))
        ));
        let u = ControlSignal::constant(vec![0.0], 1.0).unwrap();
        assert!(matches!(
            integrate(&p, &u, &IntegrateOptions::new(0.1)),
            Err(OdeError::ControlDimension { .. })
        ));
        let bad = system("log(x1)", "0", -1.0, 1.0, 0);
        assert!(matches!(
            integrate(&bad, &no_control(1.0), &IntegrateOptions::new(0.1)),
            Err(OdeError::Eval { .. })
        ));
    }

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    #[test]
    fn picard_matches_taylor_partial_sums() {
        let p = system("x1", "0", 1.0, 1.0, 0);
        let res = picard(&p, &no_control(1.0), 10, &IntegrateOptions::new(1e-3)).unwrap();
        assert_eq!(res.iterates.len(), 11);
        for (k, it) in res.iterates.iter().enumerate() {
            let bound = std::f64::consts::E / factorial(k + 1);
            for (t, x) in it.times.iter().zip(&it.states) {
                let taylor: f64 = (0..=k).map(|j| t.powi(j as i32) / factorial(j)).sum();
                assert!((x[0] - taylor).abs() < 1e-11, "iterate {k} at {t}");
                assert!((x[0] - t.exp()).abs() <= bound);
            }
        }
    }

    #[test]
    fn picard_fixed_points() {
        let p = system("0", "0", 3.0, 1.0, 0);
        let res = picard(&p, &no_control(1.0), 3, &IntegrateOptions::new(0.1)).unwrap();
        assert!(res.iterates.iter().all(|it| it.states.iter().all(|x| x[0] == 3.0)));
        assert!(res.deltas.iter().all(|d| *d == 0.0));

        let p = system("u1", "0", 0.0, 1.0, 1);
        let u = ControlSignal::constant(vec![1.0], 1.0).unwrap();
        let res = picard(&p, &u, 4, &IntegrateOptions::new(0.1)).unwrap();
        let first = &res.iterates[1];
        for (t, x) in first.times.iter().zip(&first.states) {
            assert!((x[0] - t).abs() < 1e-14);
        }
        assert!(res.iterates[2..].iter().all(|it| it.states == first.states));
    }

    #[test]
    fn picard_contracts() {
        let p = system("-x1 + u1", "0", 1.0, 0.5, 1);
        let u = ControlSignal::uniform(vec![vec![1.0], vec![-1.0]], 0.5).unwrap();
        let res = picard(&p, &u, 8, &IntegrateOptions::new(1e-2)).unwrap();
        for w in res.deltas[1..].windows(2) {
            assert!(w[1] < w[0]);
        }
        let direct = integrate(&p, &u, &IntegrateOptions::new(1e-2)).unwrap();
        let last = res.iterates.last().unwrap();
        assert!((last.final_state()[0] - direct.final_state()[0]).abs() < 1e-6);
    }
}

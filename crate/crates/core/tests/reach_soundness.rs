use convexo::control::{sample_controls, ControlBox, ControlSignal, SamplingStrategy};
use convexo::ode::{integrate, IntegrateOptions};
use convexo::reach::bounds::{lyapunov_bound, minkowski_bound, ratio_bound, BoundCertificate};
use convexo::reach::{build_reach, hull_contains, ReachCloud, ReachOptions};
use convexo::{ProblemSpec, TimeMode};

const STEP: f64 = 1e-2;
const SAMPLES: usize = 10_000;

fn spec(phi: &[&str], x0: Vec<f64>, horizon: f64, r: usize) -> ProblemSpec {
    ProblemSpec::from_sources(phi, "0", x0, horizon, ControlBox::symmetric(r, 1.0), TimeMode::Fixed).unwrap()
}

fn lattice_family(p: &ProblemSpec, k: usize) -> Vec<ControlSignal> {
    sample_controls(&p.control_box, p.horizon, k, 2, SamplingStrategy::Grid, 1 << 16).unwrap()
}

fn cloud(p: &ProblemSpec, k: usize) -> ReachCloud {
    build_reach(p, &lattice_family(p, k), &ReachOptions::new(STEP)).unwrap()
}

/// Random step controls, half with few switches and half with many.
fn monte_carlo(p: &ProblemSpec) -> Vec<ControlSignal> {
    let draw = |k, seed| {
        let s = SamplingStrategy::Random { seed, samples: SAMPLES / 2 };
        sample_controls(&p.control_box, p.horizon, k, 2, s, usize::MAX).unwrap()
    };
    let mut family = draw(3, 11);
    family.extend(draw(15, 12));
    assert_eq!(family.len(), SAMPLES);
    family
}

/// Number of stored trajectory states violating any certificate.
fn violations(p: &ProblemSpec, certs: &[BoundCertificate]) -> usize {
    let opts = IntegrateOptions::new(STEP);
    monte_carlo(p)
        .iter()
        .map(|u| {
            let tr = integrate(p, u, &opts).unwrap();
            tr.states
                .iter()
                .filter(|x| certs.iter().any(|c| !c.admits(x, Some(x.iter().map(|v| v * v).sum()), 1e-9)))
                .count()
        })
        .sum()
}

#[test]
fn generators_are_contained() {
    let systems = [
        spec(&["u1 + u2"], vec![0.0], 1.0, 2),
        spec(&["-x1 + u1", "-x2 + u2"], vec![0.5, 0.0], 2.0, 2),
        spec(&["(2 + sin(x1)) * u1"], vec![0.0], 1.0, 1),
    ];
    for p in &systems {
        let c = cloud(p, 3);
        for pt in &c.points {
            let mut q = pt.x.clone();
            q.push(pt.y);
            assert!(hull_contains(&c, &q, 1e-9), "{:?} escapes its own hull", pt);
        }
    }
}

#[test]
fn summed_inputs() {
    // x' = u1 + u2 splits into x' = u1 and x' = u2
    let p = spec(&["u1 + u2"], vec![0.0], 1.0, 2);
    let first = cloud(&spec(&["u1"], vec![0.0], 1.0, 2), 1);
    let second = cloud(&spec(&["u2"], vec![0.0], 1.0, 2), 1);
    // |u1 + u2| = 2 |(u1 + u2) / 2|
    let half = cloud(&spec(&["0.5 * (u1 + u2)"], vec![0.0], 1.0, 2), 1);
    let certs = [
        lyapunov_bound(1.0, 1.0, 1.0, 3.0).unwrap(),
        minkowski_bound(&first, &second).unwrap(),
        ratio_bound(2.0, &half).unwrap(),
    ];
    assert!(certs.iter().all(|c| !c.heuristic));
    assert_eq!(violations(&p, &certs), 0);
}

#[test]
fn damped_plane() {
    let p = spec(&["-x1 + u1", "-x2 + u2"], vec![0.5, 0.0], 2.0, 2);
    let first = cloud(&spec(&["-x1 + u1", "-x2"], vec![0.5, 0.0], 2.0, 2), 1);
    let second = cloud(&spec(&["0", "u2"], vec![0.0, 0.0], 2.0, 2), 1);
    let certs = [
        lyapunov_bound(1.0, 1.0, 0.25, 1.75).unwrap(),
        minkowski_bound(&first, &second).unwrap(),
    ];
    assert_eq!(violations(&p, &certs), 0);
}

#[test]
fn state_scaled_input() {
    // |(2 + sin x) u| <= 3 |u|
    let p = spec(&["(2 + sin(x1)) * u1"], vec![0.0], 1.0, 1);
    let first = cloud(&spec(&["u1"], vec![0.0], 1.0, 1), 1);
    let certs = [lyapunov_bound(1.0, 1.0, 9.0, 0.0).unwrap(), ratio_bound(3.0, &first).unwrap()];
    assert_eq!(violations(&p, &certs), 0);
}

#[test]
fn supports_settle_under_refinement() {
    let p = spec(&["-x1 + u1", "x1 * x2 + u2"], vec![0.2, 0.1], 1.0, 2);
    let tables: Vec<Vec<f64>> = [(0, 0.1), (1, 0.05), (3, 0.025)]
        .iter()
        .map(|&(k, step)| {
            build_reach(&p, &lattice_family(&p, k), &ReachOptions::new(step))
                .unwrap()
                .support_table()
        })
        .collect();
    let change = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let d1 = change(&tables[0], &tables[1]);
    let d2 = change(&tables[1], &tables[2]);
    assert!(d2 < d1, "support changes {d1} then {d2}");
}

#[test]
fn adding_controls_never_shrinks_supports() {
    let p = spec(&["x2", "-x1 + u1 - 0.5 * u2"], vec![0.0, 0.0], 1.0, 2);
    let fam = lattice_family(&p, 1);
    let opts = ReachOptions::new(STEP);
    let small = build_reach(&p, &fam[..fam.len() / 2], &opts).unwrap();
    let large = build_reach(&p, &fam, &opts).unwrap();
    for g in small.directions.directions() {
        assert!(large.support_x(g) >= small.support_x(g));
    }
}

#[test]
fn reach_is_deterministic() {
    let p = spec(&["-x1 + u1", "x1 * x2 + u2"], vec![0.2, 0.1], 1.0, 2);
    let a = cloud(&p, 2);
    let b = cloud(&p, 2);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.support_table(), b.support_table());
}

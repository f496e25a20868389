//! The subcommands, callable as library functions.

use std::path::{Path, PathBuf};

use convexo::envelope::{conjugate, default_slope_grid, lce, sample_field, uce, Axis, Grid, GridFunction};
use convexo::reach::{
    build_reach, lyapunov_bound, minkowski_bound, projection_bound, ratio_bound, BoundCertificate, ProjectionOptions,
    ReachCloud, ReachOptions,
};
use convexo::relax::{
    compare_detailed, inflated_member, optimize, relaxation_grid, search_family, Comparison, OptSummary,
};
use convexo::{ControlSignal, Expr, ProblemSpec, TimeMode, Trajectory};
use serde::Serialize;

use crate::config::{Field, Format, Overrides, RunConfig, SplitConfig};
use crate::corpus::{self, Command};
use crate::error::CliError;
use crate::output::{gnuplot_lines, gnuplot_surface, verdict_table, Writer};

fn axis_names(n: usize, r: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).chain((1..=r).map(|i| format!("u{i}"))).collect()
}

fn reach_options(cfg: &RunConfig) -> ReachOptions {
    let n = &cfg.numerics;
    ReachOptions {
        step: n.step,
        t_stride: n.t_stride,
        blowup: n.blowup,
        extra_directions: n.extra_directions,
        seed: n.seed,
    }
}

fn family(cfg: &RunConfig, p: &ProblemSpec) -> Result<Vec<ControlSignal>, CliError> {
    Ok(search_family(p, cfg.numerics.switches, &cfg.compare_options()?, &[])?)
}

#[derive(Debug)]
pub struct EnvelopeOutcome {
    pub field: Field,
    pub values: GridFunction,
    pub lce: GridFunction,
    pub uce: GridFunction,
    pub conjugate: GridFunction,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct EnvelopeSummary<'a> {
    field: String,
    expression: String,
    axes: &'a [Axis],
    nodes: usize,
    masked: usize,
    /// Largest `field - lce` and `uce - field` over masked nodes.
    max_lower_gap: f64,
    max_upper_gap: f64,
    slope_axes: &'a [Axis],
}

/// Samples a field, writes it with its envelopes and conjugate.
pub fn envelope(cfg: &RunConfig, field: Option<Field>, out: &Path) -> Result<EnvelopeOutcome, CliError> {
    let p = cfg.problem()?;
    let section = cfg.envelope.clone().unwrap_or(crate::config::EnvelopeConfig {
        field: "f".into(),
        axes: Vec::new(),
        mask: None,
    });
    let field = match field {
        Some(f) => f,
        None => section.field.parse()?,
    };
    let source = match field {
        Field::Cost => cfg.problem.f.clone(),
        Field::Phi(i) => cfg
            .problem
            .phi
            .get(i - 1)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("{field} does not exist; the system has {} equations", p.n)))?,
    };
    let dims = (p.n, p.r);
    let expr = Expr::parse(&source, dims).map_err(|e| CliError::Config(format!("{field}: {e}")))?;
    if expr.uses_time() {
        return Err(CliError::Config(format!("{field} depends on t; envelopes are taken in (x, u)")));
    }
    let mask_expr = section
        .mask
        .as_deref()
        .map(|m| Expr::parse(m, dims).map_err(|e| CliError::Config(format!("envelope.mask: {e}"))))
        .transpose()?;
    let keep = |node: &[f64]| mask_expr.as_ref().is_none_or(|m| m.eval_joint(node).is_ok_and(|v| v >= 0.0));

    let values = if section.axes.is_empty() {
        let opts = cfg.compare_options()?;
        let cloud = build_reach(&p, &family(cfg, &p)?, &reach_options(cfg))?;
        let grid = relaxation_grid(&p, &cloud, &opts.relax)?;
        let member = inflated_member(&cloud, opts.relax.margin);
        sample_field(&expr, &grid, |node: &[f64]| member(node) && keep(node))?
    } else {
        let axes = section
            .axes
            .iter()
            .map(|a| Axis::new(a.lo, a.hi, a.count))
            .collect::<Result<Vec<_>, _>>()?;
        if axes.len() != p.n + p.r {
            return Err(CliError::Config(format!(
                "envelope grid has {} axes; the (x, u) space has {}",
                axes.len(),
                p.n + p.r
            )));
        }
        sample_field(&expr, &Grid::new(axes)?, keep)?
    };
    let lower = lce(&values)?;
    let upper = uce(&values)?;
    let slopes = default_slope_grid(&values);
    let conj = conjugate(&values, &slopes)?;

    let gap = |a: &GridFunction, b: &GridFunction| {
        a.masked_indices()
            .map(|i| a.values()[i] - b.values()[i])
            .fold(0.0f64, f64::max)
    };
    let summary = EnvelopeSummary {
        field: field.to_string(),
        expression: expr.to_string(),
        axes: values.grid().axes(),
        nodes: values.grid().len(),
        masked: values.masked_count(),
        max_lower_gap: gap(&values, &lower),
        max_upper_gap: gap(&upper, &values),
        slope_axes: slopes.axes(),
    };

    let mut w = Writer::new(out, cfg.output.format)?;
    let names = axis_names(p.n, p.r);
    let slope_names: Vec<String> = (1..=names.len()).map(|i| format!("p{i}")).collect();
    let stem = field.to_string();
    w.grid_function(&stem, &values, &names)?;
    w.grid_function(&format!("{stem}_lce"), &lower, &names)?;
    w.grid_function(&format!("{stem}_uce"), &upper, &names)?;
    w.grid_function(&format!("{stem}_conjugate"), &conj, &slope_names)?;
    w.json("envelope.json", &summary)?;
    if w.format == Format::Csv {
        let d = values.grid().dim();
        let script = match d {
            1 => Some(gnuplot_lines(
                &format!("{stem} and its envelopes"),
                &[
                    (format!("{stem}.csv"), 2, stem.clone()),
                    (format!("{stem}_lce.csv"), 2, "lower convex envelope".into()),
                    (format!("{stem}_uce.csv"), 2, "upper concave envelope".into()),
                ],
            )),
            2 => Some(gnuplot_surface(
                &format!("{stem} and its lower convex envelope"),
                &[(format!("{stem}.csv"), stem.clone()), (format!("{stem}_lce.csv"), "lower convex envelope".into())],
            )),
            _ => None,
        };
        if let Some(s) = script {
            w.text("envelope.gp", &s)?;
        }
    }
    Ok(EnvelopeOutcome {
        field,
        values,
        lce: lower,
        uce: upper,
        conjugate: conj,
        files: w.files,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub certificate: BoundCertificate,
    /// Cloud points of the full system outside the bound.
    pub cloud_violations: usize,
}

#[derive(Debug)]
pub struct ReachOutcome {
    pub cloud: ReachCloud,
    pub certificates: Vec<CertificateReport>,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SupportSummary<'a> {
    state_dim: usize,
    points: usize,
    unbounded: bool,
    x_extent: Vec<[f64; 2]>,
    directions: &'a [Vec<f64>],
    support: Vec<f64>,
}

/// Split part of `cfg`'s system, `phi_part ± shift`, as its own problem.
fn split_problem(cfg: &RunConfig, p: &ProblemSpec, part: &[String], shift: &[String], sign: &str, x0: Vec<f64>) -> Result<ProblemSpec, CliError> {
    if part.len() != p.n || !(shift.is_empty() || shift.len() == p.n) {
        return Err(CliError::Config(format!("split parts and shift need {} components", p.n)));
    }
    let sources: Vec<String> = part
        .iter()
        .enumerate()
        .map(|(i, s)| match shift.get(i) {
            Some(v) => format!("({s}) {sign} ({v})"),
            None => s.clone(),
        })
        .collect();
    let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
    ProblemSpec::from_sources(&refs, "0", x0, p.horizon, cfg.control_box()?, TimeMode::Fixed)
        .map_err(|e| CliError::Config(format!("certificate system: {e}")))
}

fn minkowski_clouds(cfg: &RunConfig, p: &ProblemSpec, s: &SplitConfig) -> Result<(ReachCloud, ReachCloud), CliError> {
    let first = split_problem(cfg, p, &s.phi1, &s.shift, "+", p.x0.clone())?;
    let second = split_problem(cfg, p, &s.phi2, &s.shift, "-", vec![0.0; p.n])?;
    let fam = family(cfg, p)?;
    let ro = reach_options(cfg);
    Ok((build_reach(&first, &fam, &ro)?, build_reach(&second, &fam, &ro)?))
}

/// Samples the attainability cloud and evaluates the configured certificates.
pub fn reach(cfg: &RunConfig, out: &Path) -> Result<ReachOutcome, CliError> {
    let p = cfg.problem()?;
    let fam = family(cfg, &p)?;
    let ro = reach_options(cfg);
    let cloud = build_reach(&p, &fam, &ro)?;

    let mut certificates = Vec::new();
    if let Some(c) = &cfg.certificates {
        let count = |cert: &BoundCertificate, v: Option<&Expr>| -> Result<usize, CliError> {
            let mut bad = 0;
            for pt in &cloud.points {
                let level = match v {
                    Some(e) => Some(e.eval_joint(&pt.x).map_err(|e| CliError::Numeric(format!("V: {e}")))?),
                    None => None,
                };
                bad += usize::from(!cert.admits(&pt.x, level, 1e-9));
            }
            Ok(bad)
        };
        if let Some(l) = &c.lyapunov {
            let cert = lyapunov_bound(l.m1, l.m2, l.c1, l.c2)?;
            let v = l
                .v
                .as_deref()
                .map(|s| Expr::parse(s, (p.n, 0)).map_err(|e| CliError::Config(format!("certificates.lyapunov.v: {e}"))))
                .transpose()?;
            let cloud_violations = count(&cert, v.as_ref())?;
            certificates.push(CertificateReport { certificate: cert, cloud_violations });
        }
        if let Some(s) = &c.minkowski {
            let (first, second) = minkowski_clouds(cfg, &p, s)?;
            let cert = minkowski_bound(&first, &second)?;
            let cloud_violations = count(&cert, None)?;
            certificates.push(CertificateReport { certificate: cert, cloud_violations });
        }
        if let Some(r) = &c.ratio {
            let comparison = split_problem(cfg, &p, &r.phi1, &[], "+", p.x0.clone())?;
            let base = build_reach(&comparison, &fam, &ro)?;
            let cert = ratio_bound(r.k2, &base)?;
            let cloud_violations = count(&cert, None)?;
            certificates.push(CertificateReport { certificate: cert, cloud_violations });
        }
        if let Some(pr) = &c.projection {
            let opts = ProjectionOptions { step: cfg.numerics.step, levels: pr.levels };
            let cert = projection_bound(&p, &pr.direction, &p.control_box, p.horizon, &opts)?;
            let cloud_violations = count(&cert, None)?;
            certificates.push(CertificateReport { certificate: cert, cloud_violations });
        }
    }
    for c in &certificates {
        if c.certificate.heuristic {
            log::warn!("{:?} certificate is heuristic: {}", c.certificate.kind, c.certificate.note);
        }
        if c.cloud_violations > 0 {
            log::warn!("{:?} certificate excludes {} sampled points", c.certificate.kind, c.cloud_violations);
        }
    }

    let summary = SupportSummary {
        state_dim: cloud.state_dim,
        points: cloud.points.len(),
        unbounded: cloud.unbounded,
        x_extent: cloud.x_extent().into_iter().map(|(lo, hi)| [lo, hi]).collect(),
        directions: cloud.directions.directions(),
        support: cloud.support_table(),
    };
    let mut w = Writer::new(out, cfg.output.format)?;
    w.table("cloud", || cloud.to_csv(), &cloud.points)?;
    w.json("support.json", &summary)?;
    if !certificates.is_empty() {
        w.json("certificates.json", &certificates)?;
    }
    if w.format == Format::Csv {
        let cols: Vec<(String, usize, String)> = (1..=p.n).map(|i| ("cloud.csv".to_string(), i + 1, format!("x{i}"))).collect();
        w.text("reach.gp", &gnuplot_lines("sampled states against time", &cols).replace("with lines", "with dots"))?;
    }
    Ok(ReachOutcome { cloud, certificates, files: w.files })
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub summary: OptSummary,
    pub trajectory: Trajectory,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    family_size: usize,
    result: &'a OptSummary,
}

/// Optimizes the original problem only.
pub fn solve(cfg: &RunConfig, out: &Path) -> Result<SolveOutcome, CliError> {
    let p = cfg.problem()?;
    let fam = family(cfg, &p)?;
    let opts = cfg.compare_options()?;
    let oo = convexo::relax::OptimizeOptions {
        step: opts.step,
        blowup: opts.blowup,
        refine: opts.refine,
        halvings: opts.halvings,
    };
    let r = optimize(&p, p.time_mode, &fam, &p.control_box, &oo)?;
    let summary = OptSummary::from(&r);
    let mut w = Writer::new(out, cfg.output.format)?;
    w.json("solve.json", &SolveReport { family_size: fam.len(), result: &summary })?;
    w.table("trajectory", || r.trajectory.to_csv(), &r.trajectory)?;
    w.table("control", || r.best_control.to_csv(), &r.best_control)?;
    Ok(SolveOutcome { summary, trajectory: r.trajectory, files: w.files })
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub comparison: Comparison,
    pub table: String,
    pub files: Vec<PathBuf>,
}

/// Full pipeline: reach, convexify, optimize all three problems, report.
pub fn compare(cfg: &RunConfig, out: &Path) -> Result<CompareOutcome, CliError> {
    let p = cfg.problem()?;
    let comparison = compare_detailed(&p, &cfg.compare_options()?)?;
    let report = &comparison.report;
    if report.region_exits > 0 {
        log::warn!("relaxed trajectories left the working region {} times; values were clamped", report.region_exits);
    }
    let mut w = Writer::new(out, cfg.output.format)?;
    w.json("report.json", report)?;
    for (stem, r) in [("original", &comparison.original), ("sys1", &comparison.sys1), ("sys2", &comparison.sys2)] {
        w.table(&format!("trajectory_{stem}"), || r.trajectory.to_csv(), &r.trajectory)?;
        w.table(&format!("control_{stem}"), || r.best_control.to_csv(), &r.best_control)?;
    }
    if w.format == Format::Csv {
        let y = p.n + 2;
        let series: Vec<(String, usize, String)> = [("original", "original"), ("sys1", "lower system"), ("sys2", "upper system")]
            .iter()
            .map(|(s, t)| (format!("trajectory_{s}.csv"), y, t.to_string()))
            .collect();
        w.text("compare.gp", &gnuplot_lines("accumulated cost", &series))?;
    }
    let title = if cfg.name.is_empty() { "comparison".to_string() } else { cfg.name.clone() };
    let table = verdict_table(&title, report);
    Ok(CompareOutcome { comparison, table, files: w.files })
}

#[derive(Debug, Default)]
pub struct ExampleOutcome {
    pub envelope: Option<EnvelopeOutcome>,
    pub reach: Option<ReachOutcome>,
    pub solve: Option<SolveOutcome>,
    pub compare: Option<CompareOutcome>,
}

/// Runs a bundled example through its subcommands.
pub fn example(name: &str, overrides: &Overrides, out: Option<&Path>) -> Result<ExampleOutcome, CliError> {
    let mut cfg = corpus::load(name)?;
    cfg.apply(overrides)?;
    let dir = out_dir(&cfg, out);
    let mut outcome = ExampleOutcome::default();
    for cmd in corpus::commands(name)? {
        match cmd {
            Command::Envelope => outcome.envelope = Some(envelope(&cfg, None, &dir)?),
            Command::Reach => outcome.reach = Some(reach(&cfg, &dir)?),
            Command::Solve => outcome.solve = Some(solve(&cfg, &dir)?),
            Command::Compare => outcome.compare = Some(compare(&cfg, &dir)?),
        }
    }
    Ok(outcome)
}

/// `--out`, else the config's directory, else `out/<name>`.
pub fn out_dir(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    match (flag, &cfg.output.dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) if cfg.name.is_empty() => PathBuf::from("out"),
        (None, None) => Path::new("out").join(&cfg.name),
    }
}

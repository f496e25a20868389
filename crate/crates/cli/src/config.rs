//! Run configuration: TOML on disk, JSON accepted as a mirror.

use std::path::Path;

use convexo::control::{ControlBox, SamplingStrategy, DEFAULT_FAMILY_CAP};
use convexo::envelope::Axis;
use convexo::ode::DEFAULT_BLOWUP;
use convexo::relax::{CompareOptions, RelaxOptions, Tolerances};
use convexo::{Expr, ProblemSpec, TimeMode};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificates: Option<CertificateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxed_rhs: Option<RhsOverride>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub phi: Vec<String>,
    pub f: String,
    pub x0: Vec<f64>,
    pub horizon: f64,
    #[serde(default)]
    pub u_lower: Vec<f64>,
    #[serde(default)]
    pub u_upper: Vec<f64>,
    #[serde(default)]
    pub time_mode: TimeMode,
    /// Declared bound on control derivatives; recorded, not enforced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Grid,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub step: f64,
    pub switches: usize,
    pub levels: usize,
    pub strategy: Strategy,
    /// Signal count for the random strategy.
    pub samples: usize,
    pub family_cap: usize,
    pub fallback_samples: usize,
    pub seed: u64,
    pub blowup: f64,
    pub refine: usize,
    pub halvings: usize,
    pub t_stride: usize,
    pub extra_directions: usize,
    pub margin: f64,
    pub state_nodes: usize,
    pub control_nodes: usize,
    pub switch_sweep: Vec<usize>,
    pub sufficiency_starts: usize,
    pub sufficiency_rounds: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        let c = CompareOptions::default();
        Numerics {
            step: c.step,
            switches: c.switches,
            levels: c.levels,
            strategy: Strategy::Grid,
            samples: 1024,
            family_cap: DEFAULT_FAMILY_CAP,
            fallback_samples: c.fallback_samples,
            seed: c.seed,
            blowup: DEFAULT_BLOWUP,
            refine: c.refine,
            halvings: c.halvings,
            t_stride: c.t_stride,
            extra_directions: c.extra_directions,
            margin: c.relax.margin,
            state_nodes: c.relax.state_nodes,
            control_nodes: c.relax.control_nodes,
            switch_sweep: Vec::new(),
            sufficiency_starts: c.sufficiency_starts,
            sufficiency_rounds: c.sufficiency_rounds,
        }
    }
}

/// Which scalar field an envelope run transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Phi(usize),
    Cost,
}

impl std::str::FromStr for Field {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s == "f" {
            return Ok(Field::Cost);
        }
        s.strip_prefix("phi")
            .and_then(|i| i.parse::<usize>().ok())
            .filter(|&i| i >= 1)
            .map(Field::Phi)
            .ok_or_else(|| CliError::Config(format!("unknown field `{s}`; expected `f` or `phiN`")))
    }
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Field::Phi(i) => write!(f, "phi{i}"),
            Field::Cost => f.write_str("f"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    /// `f` or `phiN`.
    #[serde(default = "default_field")]
    pub field: String,
    /// Explicit grid; the sampled attainability region is used when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axes: Vec<Axis>,
    /// Nodes where this expression is negative are masked out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

fn default_field() -> String {
    "f".into()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minkowski: Option<SplitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<RatioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub m1: f64,
    pub m2: f64,
    pub c1: f64,
    pub c2: f64,
    /// Optional `V(x)` used to check the sampled cloud against the level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
}

/// `phi = phi1 + phi2`; the shift `v(u, t)` is added to the first part and
/// subtracted from the second. The first part starts at `x0`, the second at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub phi1: Vec<String>,
    pub phi2: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shift: Vec<String>,
}

/// `|phi| <= k2 |phi1|` for the comparison system `phi1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioConfig {
    pub k2: f64,
    pub phi1: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub direction: Vec<f64>,
    #[serde(default = "default_projection_levels")]
    pub levels: usize,
}

fn default_projection_levels() -> usize {
    5
}

/// Explicit right-hand sides for the two relaxed systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsOverride {
    pub lower: Vec<String>,
    pub upper: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub format: Format,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub switches: Option<usize>,
    pub levels: Option<usize>,
    pub refine: Option<usize>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, choosing JSON for a `.json` extension and TOML otherwise.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes to JSON")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        let n = &mut self.numerics;
        if let Some(v) = o.seed {
            n.seed = v;
        }
        if let Some(v) = o.step {
            n.step = v;
        }
        if let Some(v) = o.switches {
            n.switches = v;
        }
        if let Some(v) = o.levels {
            n.levels = v;
        }
        if let Some(v) = o.refine {
            n.refine = v;
        }
        if let Some(v) = o.format {
            self.output.format = v;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let n = &self.numerics;
        let positive = [("step", n.step), ("blowup", n.blowup), ("margin", n.margin)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("numerics.{name} must be positive, got {v}"));
            }
        }
        if n.margin < 1.0 {
            return bad(format!("numerics.margin must be at least 1, got {}", n.margin));
        }
        let counts = [
            ("family_cap", n.family_cap),
            ("fallback_samples", n.fallback_samples),
            ("samples", n.samples),
            ("t_stride", n.t_stride),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(format!("numerics.{name} must be positive"));
            }
        }
        if n.state_nodes < 2 || n.control_nodes < 2 {
            return bad("numerics.state_nodes and numerics.control_nodes must be at least 2".into());
        }
        if n.levels < 2 && !self.problem.u_lower.is_empty() {
            return bad(format!("numerics.levels must be at least 2, got {}", n.levels));
        }
        for (name, v) in [("tol_int", self.tolerances.tol_int), ("tol_gap", self.tolerances.tol_gap)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("tolerances.{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(c) = self.problem.derivative_bound {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("problem.derivative_bound must be positive, got {c}"));
            }
        }
        if let Some(e) = &self.envelope {
            e.field.parse::<Field>()?;
        }
        self.problem()?;
        Ok(())
    }

    pub fn control_box(&self) -> Result<ControlBox, CliError> {
        ControlBox::new(self.problem.u_lower.clone(), self.problem.u_upper.clone())
            .map_err(|e| CliError::Config(format!("control box: {e}")))
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let p = &self.problem;
        let phi: Vec<&str> = p.phi.iter().map(String::as_str).collect();
        ProblemSpec::from_sources(&phi, &p.f, p.x0.clone(), p.horizon, self.control_box()?, p.time_mode)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn strategy(&self) -> SamplingStrategy {
        match self.numerics.strategy {
            Strategy::Grid => SamplingStrategy::Grid,
            Strategy::Random => SamplingStrategy::Random {
                seed: self.numerics.seed,
                samples: self.numerics.samples,
            },
        }
    }

    pub fn compare_options(&self) -> Result<CompareOptions, CliError> {
        let n = &self.numerics;
        let dims = (self.problem.phi.len(), self.problem.u_lower.len());
        let rhs_override = match &self.relaxed_rhs {
            Some(o) => Some((parse_all(&o.lower, dims, "relaxed_rhs.lower")?, parse_all(&o.upper, dims, "relaxed_rhs.upper")?)),
            None => None,
        };
        Ok(CompareOptions {
            switches: n.switches,
            levels: n.levels,
            strategy: self.strategy(),
            family_cap: n.family_cap,
            fallback_samples: n.fallback_samples,
            seed: n.seed,
            step: n.step,
            blowup: n.blowup,
            refine: n.refine,
            halvings: n.halvings,
            t_stride: n.t_stride,
            extra_directions: n.extra_directions,
            relax: RelaxOptions {
                margin: n.margin,
                state_nodes: n.state_nodes,
                control_nodes: n.control_nodes,
            },
            tolerances: self.tolerances,
            rhs_override,
            sufficiency_starts: n.sufficiency_starts,
            sufficiency_rounds: n.sufficiency_rounds,
            switch_sweep: n.switch_sweep.clone(),
        })
    }
}

pub(crate) fn parse_all(sources: &[String], dims: (usize, usize), field: &str) -> Result<Vec<Expr>, CliError> {
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| Expr::parse(s, dims).map_err(|e| CliError::Config(format!("{field}[{}]: {e}", i + 1))))
        .collect()
}

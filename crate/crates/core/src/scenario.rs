//! Scenario files (TOML): frame, solution, domain, parameter grid, scheme and
//! task. Validation happens before any integration; [`Scenario::run`] returns
//! a [`RunRecord`] that serializes to JSON and CSV.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::standard_battery;
use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::frames::{Coefficient, Frame, KinkPlane, ScalarField};
use crate::fundsol::{FundamentalSolution, GaugeKind};
use crate::inequalities::{
    check, green_first_residual, green_second_residual, normalization_check, representation_residual,
    stokes_mc_interior, stokes_residual, InequalityId, InequalityReport, RPolicy, Workspace, TERM_LABELS,
};
use crate::quadrature::QuadratureScheme;
use crate::sharpness::{optimize_trial, SharpnessResult, TrialFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Green,
    Stokes,
    Hardy,
    Uncertainty,
    Rellich,
    RellichGrad,
    Representation,
    Calibrate,
    Sharpness,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::Green,
        Task::Stokes,
        Task::Hardy,
        Task::Uncertainty,
        Task::Rellich,
        Task::RellichGrad,
        Task::Representation,
        Task::Calibrate,
        Task::Sharpness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Green => "green",
            Task::Stokes => "stokes",
            Task::Hardy => "hardy",
            Task::Uncertainty => "uncertainty",
            Task::Rellich => "rellich",
            Task::RellichGrad => "rellich-grad",
            Task::Representation => "representation",
            Task::Calibrate => "calibrate",
            Task::Sharpness => "sharpness",
        }
    }

    /// Inequalities a grid task may run; the first entries are the default.
    pub fn inequalities(self) -> &'static [InequalityId] {
        match self {
            Task::Hardy => &[InequalityId::Lh2a, InequalityId::Lh2],
            Task::Uncertainty => &[
                InequalityId::Up1a,
                InequalityId::Up2a,
                InequalityId::Up1,
                InequalityId::Up2,
            ],
            Task::Rellich => &[InequalityId::Lr2a, InequalityId::Lr2],
            Task::RellichGrad => &[InequalityId::TwoLr2a, InequalityId::TwoLr2],
            _ => &[],
        }
    }

    fn needs_solution(self) -> bool {
        !matches!(self, Task::Green | Task::Stokes)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Task> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrameSpec {
    Euclidean {
        n: usize,
    },
    Heisenberg {
        m: usize,
    },
    NonsmoothR3,
    /// `X_k = ∂_k + Σ_j coefficients[k][j] ∂_{N+j}` with `N = coefficients.len()`.
    Custom {
        n: usize,
        coefficients: Vec<Vec<String>>,
        #[serde(default)]
        kinks: Vec<KinkSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinkSpec {
    /// 1-based coordinate index.
    pub axis: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConstantName {
    /// `c = 1`.
    #[default]
    Unit,
    /// `c` chosen so that the boundary flux of `Γ` over the domain is `−1`.
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstantSpec {
    Value(f64),
    Named(ConstantName),
}

impl Default for ConstantSpec {
    fn default() -> Self {
        ConstantSpec::Named(ConstantName::Unit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolutionSpec {
    /// Defaults to the origin.
    #[serde(default)]
    pub pole: Option<Vec<f64>>,
    #[serde(default)]
    pub constant: ConstantSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// Euclidean ball; the centre defaults to the pole.
    Ball {
        #[serde(default)]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    /// Gauge ball around the pole.
    GaugeBall {
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum AlphaSpec {
    List(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        step: f64,
    },
    /// Every `lower + k·step` (`k ≥ 1`) up to the upper end of the wedge
    /// (`β`), kept only where admissible.
    Wedge {
        wedge_step: f64,
    },
}

impl Default for AlphaSpec {
    fn default() -> Self {
        AlphaSpec::Wedge { wedge_step: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RName {
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RSpec {
    Value(f64),
    Named(RName),
}

impl Default for RSpec {
    fn default() -> Self {
        RSpec::Named(RName::Auto)
    }
}

impl RSpec {
    fn policy(self) -> RPolicy {
        match self {
            RSpec::Value(r) => RPolicy::Fixed(r),
            RSpec::Named(RName::Auto) => RPolicy::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Defaults to every inequality of the task.
    #[serde(default)]
    pub inequalities: Vec<InequalityId>,
    #[serde(default)]
    pub alpha: AlphaSpec,
    /// Defaults to the solution's own β.
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub r: RSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedExpression {
    pub name: String,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    /// Names from the standard battery; all twelve when absent.
    #[serde(default)]
    pub members: Option<Vec<String>>,
    /// Additional functions in the expression language.
    #[serde(default)]
    pub extra: Vec<NamedExpression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub order: Option<usize>,
    pub refinement: Option<usize>,
    pub eps0: Option<f64>,
    pub eps_levels: Option<usize>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub max_nodes: Option<usize>,
}

impl SchemeSpec {
    /// Fields set in `other` win.
    pub fn merged(&self, other: &SchemeSpec) -> SchemeSpec {
        SchemeSpec {
            order: other.order.or(self.order),
            refinement: other.refinement.or(self.refinement),
            eps0: other.eps0.or(self.eps0),
            eps_levels: other.eps_levels.or(self.eps_levels),
            mc_samples: other.mc_samples.or(self.mc_samples),
            seed: other.seed.or(self.seed),
            max_nodes: other.max_nodes.or(self.max_nodes),
        }
    }

    pub fn resolve(&self) -> Result<QuadratureScheme> {
        let d = QuadratureScheme::default();
        let s = QuadratureScheme {
            order: self.order.unwrap_or(d.order),
            refinement: self.refinement.unwrap_or(d.refinement),
            eps0: self.eps0.unwrap_or(d.eps0),
            eps_levels: self.eps_levels.unwrap_or(d.eps_levels),
            mc_samples: self.mc_samples.unwrap_or(d.mc_samples),
            seed: self.seed.unwrap_or(d.seed),
            max_nodes: self.max_nodes.unwrap_or(d.max_nodes),
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GreenSpec {
    /// `(u, v)` pairs, each a battery member name or an expression;
    /// [`DEFAULT_GREEN_PAIRS`] when empty.
    #[serde(default)]
    pub pairs: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StokesSpec {
    /// Each set lists one expression `f_k` per frame field.
    #[serde(default)]
    pub sets: Vec<Vec<String>>,
    /// Skip the Monte-Carlo cross-check.
    #[serde(default)]
    pub skip_monte_carlo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RepresentationSpec {
    /// Evaluation points; the domain centre and two offsets when empty.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    /// Second domain on which the calibrated flux is checked; the scenario
    /// domain shrunk by half toward the pole when absent.
    #[serde(default)]
    pub check_domain: Option<DomainSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessSpec {
    pub inequality: InequalityId,
    #[serde(default)]
    pub alpha: f64,
    /// Defaults to the solution's own β.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Largest acceptable `(best − constant)/constant`.
    #[serde(default)]
    pub target: Option<f64>,
}

/// Six pairs of smooth (non-compact) battery members.
pub const DEFAULT_GREEN_PAIRS: [[&str; 2]; 6] = [
    ["quadratic", "gaussian"],
    ["gaussian_shifted", "trig"],
    ["exp_linear", "gaussian_difference"],
    ["affine", "gaussian"],
    ["trig", "exp_linear"],
    ["quadratic", "gaussian_difference"],
];

fn default_budget() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for `<name>.json` / `<name>.csv`; `--out` overrides it.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub task: Task,
    pub frame: FrameSpec,
    #[serde(default)]
    pub solution: SolutionSpec,
    pub domain: DomainSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub battery: BatterySpec,
    #[serde(default)]
    pub scheme: SchemeSpec,
    /// Pass threshold of the identity tasks (see [`Task`] defaults).
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub green: GreenSpec,
    #[serde(default)]
    pub stokes: StokesSpec,
    #[serde(default)]
    pub representation: RepresentationSpec,
    #[serde(default)]
    pub calibrate: CalibrateSpec,
    #[serde(default)]
    pub sharpness: Option<SharpnessSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Frame, solution and domain built from a scenario.
#[derive(Debug, Clone)]
pub struct Setup {
    pub frame: Frame,
    pub solution: Option<FundamentalSolution>,
    pub domain: Domain,
    pub scheme: QuadratureScheme,
}

/// One `(inequality, α, β)` point of a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub id: InequalityId,
    pub alpha: f64,
    pub beta: f64,
}

fn build_frame(spec: &FrameSpec) -> Result<Frame> {
    match spec {
        FrameSpec::Euclidean { n } => {
            if *n < 1 {
                return Err(Error::Config("euclidean frame needs n >= 1".into()));
            }
            Ok(Frame::euclidean(*n))
        }
        FrameSpec::Heisenberg { m } => {
            if *m < 1 {
                return Err(Error::Config("heisenberg frame needs m >= 1".into()));
            }
            Ok(Frame::heisenberg(*m))
        }
        FrameSpec::NonsmoothR3 => Ok(Frame::nonsmooth_r3()),
        FrameSpec::Custom { n, coefficients, kinks } => {
            let fields = coefficients.len();
            let tail = coefficients
                .iter()
                .map(|row| row.iter().map(|s| Coefficient::parse(s)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let planes = kinks
                .iter()
                .map(|k| {
                    if k.axis == 0 || k.axis > *n {
                        return Err(Error::Config(format!("kink axis {} outside 1..={n}", k.axis)));
                    }
                    Ok(KinkPlane {
                        axis: k.axis - 1,
                        value: k.value,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Frame::triangular("custom", *n, fields, tail)?.with_kinks(planes))
        }
    }
}

fn build_domain(spec: &DomainSpec, pole: Option<&[f64]>, solution: Option<&FundamentalSolution>) -> Result<Domain> {
    match spec {
        DomainSpec::Ball { center, radius } => {
            let c = match (center, pole) {
                (Some(c), _) => c.clone(),
                (None, Some(p)) => p.to_vec(),
                (None, None) => return Err(Error::Config("ball needs a center".into())),
            };
            Domain::build_euclidean_ball(c, *radius)
        }
        DomainSpec::GaugeBall { radius } => match solution {
            Some(fs) if matches!(fs.kind(), GaugeKind::Heisenberg { .. }) => Domain::build_gauge_ball(fs, *radius),
            _ => Err(Error::Config("gauge_ball needs a heisenberg frame".into())),
        },
        DomainSpec::Box { lo, hi } => Domain::build_box(lo.clone(), hi.clone()),
    }
}

/// The domain shrunk by half toward `pole`.
fn shrink(spec: &DomainSpec, pole: &[f64]) -> DomainSpec {
    match spec {
        DomainSpec::Ball { center, radius } => DomainSpec::Ball {
            center: Some(match center {
                Some(c) => c.iter().zip(pole).map(|(a, p)| p + 0.5 * (a - p)).collect(),
                None => pole.to_vec(),
            }),
            radius: 0.5 * radius,
        },
        DomainSpec::GaugeBall { radius } => DomainSpec::GaugeBall { radius: 0.5 * radius },
        DomainSpec::Box { lo, hi } => DomainSpec::Box {
            lo: lo.iter().zip(pole).map(|(a, p)| p + 0.5 * (a - p)).collect(),
            hi: hi.iter().zip(pole).map(|(a, p)| p + 0.5 * (a - p)).collect(),
        },
    }
}

/// Lower and upper ends of the α-range of `id` at `beta`.
fn wedge(id: InequalityId, beta: f64) -> (f64, f64) {
    match id {
        InequalityId::Lh2a | InequalityId::Lh2 => (2.0 - beta, beta),
        InequalityId::Lr2a | InequalityId::Lr2 => (4.0 - beta, beta),
        InequalityId::TwoLr2a | InequalityId::TwoLr2 => ((8.0 - beta) / 3.0, beta),
        _ => (0.0, 0.0),
    }
}

impl Scenario {
    pub fn from_toml_str(src: &str) -> Result<Scenario> {
        Ok(toml::from_str(src)?)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let src = std::fs::read_to_string(path)?;
        Scenario::from_toml_str(&src).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn solution_without_constant(&self, frame: &Frame) -> Result<Option<FundamentalSolution>> {
        let n = frame.dim();
        let pole = self.solution.pole.clone().unwrap_or_else(|| vec![0.0; n]);
        if pole.len() != n {
            return Err(Error::Config(format!(
                "pole has {} coordinates, frame dimension is {n}",
                pole.len()
            )));
        }
        match &self.frame {
            FrameSpec::Euclidean { n } if *n >= 3 => Ok(Some(FundamentalSolution::euclidean(*n, pole)?)),
            FrameSpec::Heisenberg { m } => Ok(Some(FundamentalSolution::heisenberg(*m, pole)?)),
            _ if self.task.needs_solution() => Err(Error::Config(format!(
                "task {} needs a closed-form fundamental solution (euclidean n >= 3 or heisenberg frame)",
                self.task
            ))),
            _ => Ok(None),
        }
    }

    /// The `(α, β)` grid, checked against the admissible region of every
    /// inequality; the first violation is reported by name.
    pub fn grid_points(&self, native_beta: Option<f64>) -> Result<Vec<GridPoint>> {
        let allowed = self.task.inequalities();
        if allowed.is_empty() {
            return Ok(Vec::new());
        }
        let ids: Vec<InequalityId> = if self.grid.inequalities.is_empty() {
            allowed.to_vec()
        } else {
            self.grid.inequalities.clone()
        };
        for id in &ids {
            if !allowed.contains(id) {
                return Err(Error::Config(format!(
                    "inequality {id} does not belong to task {}",
                    self.task
                )));
            }
        }
        let betas: Vec<f64> = if self.grid.beta.is_empty() {
            vec![native_beta.ok_or_else(|| Error::Config("grid.beta is required".into()))?]
        } else {
            self.grid.beta.clone()
        };
        let mut out = Vec::new();
        for &beta in &betas {
            for &id in &ids {
                let alphas: Vec<f64> = if !id.uses_alpha() {
                    vec![0.0]
                } else {
                    match &self.grid.alpha {
                        AlphaSpec::List(v) => v.clone(),
                        AlphaSpec::Range { start, stop, step } => {
                            if !(*step > 0.0) {
                                return Err(Error::Config(format!("alpha step must be positive, got {step}")));
                            }
                            let count = ((stop - start) / step + 1e-9).floor() as i64;
                            (0..=count.max(-1)).map(|k| start + k as f64 * step).collect()
                        }
                        AlphaSpec::Wedge { wedge_step } => {
                            if !(*wedge_step > 0.0) {
                                return Err(Error::Config(format!("wedge_step must be positive, got {wedge_step}")));
                            }
                            let (lo, hi) = wedge(id, beta);
                            let count = ((hi - lo) / wedge_step + 1e-9).floor() as i64;
                            (1..=count)
                                .map(|k| lo + k as f64 * wedge_step)
                                .filter(|&a| id.validate_params(a, beta).is_ok())
                                .collect()
                        }
                    }
                };
                for alpha in alphas {
                    id.validate_params(alpha, beta)
                        .map_err(|e| Error::Config(format!("scenario {}: {id}: {e}", self.name)))?;
                    out.push(GridPoint { id, alpha, beta });
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config(format!(
                "scenario {}: the parameter grid is empty",
                self.name
            )));
        }
        Ok(out)
    }

    /// Everything that can be checked without integrating.
    pub fn validate(&self, overrides: &SchemeSpec) -> Result<()> {
        let frame = build_frame(&self.frame)?;
        let fs = self.solution_without_constant(&frame)?;
        let pole = fs.as_ref().map(|f| f.pole().to_vec());
        let domain = build_domain(&self.domain, pole.as_deref(), fs.as_ref())?;
        if domain.dim() != frame.dim() {
            return Err(Error::Config(format!(
                "domain dimension {} differs from frame dimension {}",
                domain.dim(),
                frame.dim()
            )));
        }
        self.scheme.merged(overrides).resolve()?;
        if let ConstantSpec::Value(c) = self.solution.constant {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("solution constant must be positive, got {c}")));
            }
        }
        self.grid_points(fs.as_ref().map(|f| f.beta()))?;
        self.battery_fields(&domain)?;
        match self.task {
            Task::Green => {
                self.green_pairs(&domain)?;
            }
            Task::Stokes => {
                self.stokes_sets(&frame)?;
            }
            Task::Sharpness => {
                let sp = self
                    .sharpness
                    .as_ref()
                    .ok_or_else(|| Error::Config("task sharpness needs a [sharpness] table".into()))?;
                let beta = sp.beta.unwrap_or_else(|| fs.as_ref().map_or(0.0, |f| f.beta()));
                sp.inequality
                    .validate_params(sp.alpha, beta)
                    .map_err(|e| Error::Config(format!("scenario {}: {}: {e}", self.name, sp.inequality)))?;
                if sp.budget < 20 {
                    return Err(Error::Config(format!(
                        "sharpness budget must be >= 20, got {}",
                        sp.budget
                    )));
                }
            }
            Task::Representation => {
                for p in &self.representation.points {
                    if p.len() != frame.dim() || !domain.contains(p) {
                        return Err(Error::Config(format!(
                            "representation point {p:?} is not inside the domain"
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Builds frame, solution (calibrating its constant if asked) and domain.
    pub fn setup(&self, overrides: &SchemeSpec) -> Result<Setup> {
        self.validate(overrides)?;
        let scheme = self.scheme.merged(overrides).resolve()?;
        let frame = build_frame(&self.frame)?;
        let mut fs = self.solution_without_constant(&frame)?;
        let pole = fs.as_ref().map(|f| f.pole().to_vec());
        let domain = build_domain(&self.domain, pole.as_deref(), fs.as_ref())?.with_kinks(frame.kink_planes());
        if let Some(f) = fs.take() {
            fs = Some(match self.solution.constant {
                ConstantSpec::Value(c) => f.with_constant(c)?,
                ConstantSpec::Named(ConstantName::Unit) => f,
                ConstantSpec::Named(ConstantName::Calibrated) => f.calibrate_constant(&domain, &scheme)?,
            });
        }
        Ok(Setup {
            frame,
            solution: fs,
            domain,
            scheme,
        })
    }

    fn battery_fields(&self, domain: &Domain) -> Result<Vec<ScalarField>> {
        let standard = standard_battery(domain);
        let mut out = match &self.battery.members {
            None => standard,
            Some(names) => names
                .iter()
                .map(|name| {
                    standard
                        .iter()
                        .find(|u| u.name() == name)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("unknown battery member `{name}`")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        for e in &self.battery.extra {
            out.push(expression_field(&e.name, &e.expr, domain.dim())?);
        }
        Ok(out)
    }

    fn green_pairs(&self, domain: &Domain) -> Result<Vec<(ScalarField, ScalarField)>> {
        let standard = standard_battery(domain);
        let resolve = |s: &str| -> Result<ScalarField> {
            match standard.iter().find(|u| u.name() == s) {
                Some(u) => Ok(u.clone()),
                None => expression_field(s, s, domain.dim()),
            }
        };
        let pairs: Vec<[String; 2]> = if self.green.pairs.is_empty() {
            DEFAULT_GREEN_PAIRS
                .iter()
                .map(|[a, b]| [a.to_string(), b.to_string()])
                .collect()
        } else {
            self.green.pairs.clone()
        };
        pairs.iter().map(|[u, v]| Ok((resolve(u)?, resolve(v)?))).collect()
    }

    fn stokes_sets(&self, frame: &Frame) -> Result<Vec<Vec<ScalarField>>> {
        let sets: Vec<Vec<String>> = if self.stokes.sets.is_empty() {
            default_stokes_sets(frame)
        } else {
            self.stokes.sets.clone()
        };
        sets.iter()
            .map(|set| {
                if set.len() != frame.num_fields() {
                    return Err(Error::Config(format!(
                        "stokes set needs {} expressions, got {}",
                        frame.num_fields(),
                        set.len()
                    )));
                }
                set.iter().map(|s| expression_field(s, s, frame.dim())).collect()
            })
            .collect()
    }

    /// Runs the task. `overrides` are applied on top of the `[scheme]` table.
    pub fn run(&self, overrides: &SchemeSpec) -> Result<RunRecord> {
        let setup = self.setup(overrides)?;
        let outcome = match self.task {
            Task::Hardy | Task::Uncertainty | Task::Rellich | Task::RellichGrad => {
                Outcome::Inequalities(self.run_grid(&setup)?)
            }
            Task::Green => Outcome::Green(self.run_green(&setup)?),
            Task::Stokes => Outcome::Stokes(self.run_stokes(&setup)?),
            Task::Representation => Outcome::Representation(self.run_representation(&setup)?),
            Task::Calibrate => Outcome::Calibration(self.run_calibrate(&setup)?),
            Task::Sharpness => Outcome::Sharpness(Box::new(self.run_sharpness(&setup)?)),
        };
        let all_hold = outcome.all_hold();
        Ok(RunRecord {
            scenario: self.name.clone(),
            task: self.task,
            scheme_hash: setup.scheme.hash(),
            seed: setup.scheme.seed,
            scheme: setup.scheme,
            constant: setup.solution.as_ref().map(|f| f.constant()),
            all_hold,
            outcome,
        })
    }

    fn solution<'a>(&self, setup: &'a Setup) -> Result<&'a FundamentalSolution> {
        setup
            .solution
            .as_ref()
            .ok_or_else(|| Error::Config(format!("task {} needs a fundamental solution", self.task)))
    }

    fn run_grid(&self, setup: &Setup) -> Result<Vec<InequalityReport>> {
        let fs = self.solution(setup)?;
        let points = self.grid_points(Some(fs.beta()))?;
        let second = points.iter().any(|p| p.id.is_second_order());
        let ws = Workspace::new(fs, &setup.domain, &setup.scheme)?;
        let fields = self.battery_fields(&setup.domain)?;
        let samples = fields
            .iter()
            .map(|u| ws.sample(u, second))
            .collect::<Result<Vec<_>>>()?;
        let policy = self.grid.r.policy();
        let jobs: Vec<(GridPoint, usize)> = points
            .iter()
            .flat_map(|p| (0..samples.len()).map(move |k| (*p, k)))
            .collect();
        jobs.par_iter()
            .map(|(p, k)| check(&ws, p.id, &samples[*k], p.alpha, p.beta, policy))
            .collect()
    }

    fn tolerance(&self, setup: &Setup) -> f64 {
        self.tolerance.unwrap_or(match self.task {
            Task::Green => 1e-6,
            Task::Stokes => 1e-4,
            Task::Representation => 1e-3,
            Task::Calibrate => match setup.solution.as_ref().map(|f| f.kind()) {
                Some(GaugeKind::Euclidean) => 1e-3,
                _ => 1e-2,
            },
            _ => 0.0,
        })
    }

    fn run_green(&self, setup: &Setup) -> Result<Vec<GreenRow>> {
        let tol = self.tolerance(setup);
        let mut rows = Vec::new();
        for (u, v) in self.green_pairs(&setup.domain)? {
            let first = green_first_residual(&setup.frame, &u, &v, &setup.domain, &setup.scheme)?;
            let second = green_second_residual(&setup.frame, &u, &v, &setup.domain, &setup.scheme)?;
            for (identity, r) in [("first", first), ("second", second)] {
                let relative = r.relative();
                rows.push(GreenRow {
                    identity: identity.into(),
                    u: u.name().into(),
                    v: v.name().into(),
                    interior: r.interior,
                    boundary: r.boundary,
                    residual: r.residual,
                    relative,
                    error: r.error,
                    holds: relative < tol,
                });
            }
        }
        Ok(rows)
    }

    fn run_stokes(&self, setup: &Setup) -> Result<Vec<StokesRow>> {
        let tol = self.tolerance(setup);
        let mut rows = Vec::new();
        for (s, set) in self.stokes_sets(&setup.frame)?.iter().enumerate() {
            let report = stokes_residual(&setup.frame, set, &setup.domain, &setup.scheme)?;
            let mc = if self.stokes.skip_monte_carlo {
                None
            } else {
                Some(stokes_mc_interior(
                    &setup.frame,
                    set,
                    &setup.domain,
                    setup.scheme.mc_samples,
                    setup.scheme.seed.wrapping_add(s as u64),
                )?)
            };
            let t = report.total;
            // Monte-Carlo agreement: five standard errors.
            let mc_ok = mc.is_none_or(|m| (m.value - t.boundary).abs() <= 5.0 * m.error_estimate + tol);
            rows.push(StokesRow {
                set: s,
                fields: set.iter().map(|f| f.name().to_string()).collect::<Vec<_>>().join(" ; "),
                interior: t.interior,
                boundary: t.boundary,
                residual: t.residual,
                error: t.error,
                mc_interior: mc.map(|m| m.value),
                mc_sigma: mc.map(|m| m.error_estimate),
                holds: t.residual.abs() < tol && mc_ok,
            });
        }
        Ok(rows)
    }

    fn run_representation(&self, setup: &Setup) -> Result<Vec<RepresentationRow>> {
        let fs = self.solution(setup)?;
        let tol = self.tolerance(setup);
        let points = if self.representation.points.is_empty() {
            let (c, h) = setup.domain.centre_and_half_widths();
            let mut a = c.clone();
            let mut b = c.clone();
            a[0] += 0.3 * h[0];
            let last = c.len() - 1;
            b[last] -= 0.25 * h[last];
            b[0] -= 0.2 * h[0];
            vec![c, a, b]
        } else {
            self.representation.points.clone()
        };
        let fields = self.battery_fields(&setup.domain)?;
        let mut rows = Vec::new();
        for x in &points {
            for u in &fields {
                let r = representation_residual(fs, u, x, &setup.domain, &setup.scheme)?;
                rows.push(RepresentationRow {
                    function: u.name().into(),
                    point: x.clone(),
                    value: r.value,
                    volume: r.volume,
                    double_layer: r.double_layer,
                    single_layer: r.single_layer,
                    residual: r.residual,
                    error: r.error,
                    holds: r.residual.abs() <= tol * r.value.abs().max(1.0),
                });
            }
        }
        Ok(rows)
    }

    fn run_calibrate(&self, setup: &Setup) -> Result<CalibrationRow> {
        let fs = self.solution(setup)?;
        let tol = self.tolerance(setup);
        let calibrated = fs.calibrate_constant(&setup.domain, &setup.scheme)?;
        let check_spec = match &self.calibrate.check_domain {
            Some(d) => d.clone(),
            None => shrink(&self.domain, fs.pole()),
        };
        let check_domain =
            build_domain(&check_spec, Some(fs.pole()), Some(&calibrated))?.with_kinks(setup.frame.kink_planes());
        let flux = normalization_check(&calibrated, &check_domain, &setup.scheme)?;
        Ok(CalibrationRow {
            constant: calibrated.constant(),
            check_flux: flux.value,
            deviation: (flux.value + 1.0).abs(),
            error: flux.error_estimate,
            holds: (flux.value + 1.0).abs() < tol,
        })
    }

    fn run_sharpness(&self, setup: &Setup) -> Result<SharpnessResult> {
        let fs = self.solution(setup)?;
        let sp = self
            .sharpness
            .as_ref()
            .ok_or_else(|| Error::Config("task sharpness needs a [sharpness] table".into()))?;
        let beta = sp.beta.unwrap_or(fs.beta());
        let ws = Workspace::new(fs, &setup.domain, &setup.scheme)?;
        let family = TrialFamily::extremal(&ws, sp.inequality, sp.alpha, beta)?;
        optimize_trial(&ws, sp.inequality, &family, sp.alpha, beta, sp.budget)
    }

    fn sharpness_holds(&self, r: &SharpnessResult) -> bool {
        r.lower_bound_violations == 0
            && r.restart_spread <= 0.02
            && self
                .sharpness
                .as_ref()
                .and_then(|s| s.target)
                .is_none_or(|t| r.relative_gap() <= t)
    }

    /// The overall pass flag, including the sharpness target.
    pub fn passed(&self, record: &RunRecord) -> bool {
        match &record.outcome {
            Outcome::Sharpness(r) => self.sharpness_holds(r),
            _ => record.all_hold,
        }
    }
}

fn expression_field(name: &str, src: &str, dim: usize) -> Result<ScalarField> {
    let u = ScalarField::from_expression(name, src)?;
    let arity = crate::expr::parse_expression(src)?.arity();
    if arity > dim {
        return Err(Error::Config(format!(
            "expression `{src}` uses x{arity} but the dimension is {dim}"
        )));
    }
    Ok(u)
}

/// Three polynomial/rational sets; on ℝ³ they involve the kinked directions.
fn default_stokes_sets(frame: &Frame) -> Vec<Vec<String>> {
    let n = frame.dim();
    let big_n = frame.num_fields();
    let last = format!("x{n}");
    let templates: [&dyn Fn(usize) -> String; 3] = [
        &|k| format!("x{}*{last} + x{}^2", k + 1, (k + 1) % n + 1),
        &|k| format!("abs(x{})*{last}^2 - x{}", (k + 1) % n + 1, k + 1),
        &|k| format!("(1 + x{}^2)/(2 + {last}) + {last}^3*x{}", k + 1, (k + 1) % n + 1),
    ];
    templates.iter().map(|t| (0..big_n).map(t).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenRow {
    pub identity: String,
    pub u: String,
    pub v: String,
    pub interior: f64,
    pub boundary: f64,
    pub residual: f64,
    pub relative: f64,
    pub error: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesRow {
    pub set: usize,
    pub fields: String,
    pub interior: f64,
    pub boundary: f64,
    pub residual: f64,
    pub error: f64,
    pub mc_interior: Option<f64>,
    pub mc_sigma: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRow {
    pub function: String,
    pub point: Vec<f64>,
    pub value: f64,
    pub volume: f64,
    pub double_layer: f64,
    pub single_layer: f64,
    pub residual: f64,
    pub error: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub constant: f64,
    /// Flux of the calibrated `Γ` through the check domain.
    pub check_flux: f64,
    pub deviation: f64,
    pub error: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "snake_case")]
pub enum Outcome {
    Inequalities(Vec<InequalityReport>),
    Green(Vec<GreenRow>),
    Stokes(Vec<StokesRow>),
    Representation(Vec<RepresentationRow>),
    Calibration(CalibrationRow),
    Sharpness(Box<SharpnessResult>),
}

impl Outcome {
    fn all_hold(&self) -> bool {
        match self {
            Outcome::Inequalities(r) => r.iter().all(|r| r.holds()),
            Outcome::Green(r) => r.iter().all(|r| r.holds),
            Outcome::Stokes(r) => r.iter().all(|r| r.holds),
            Outcome::Representation(r) => r.iter().all(|r| r.holds),
            Outcome::Calibration(r) => r.holds,
            Outcome::Sharpness(r) => r.lower_bound_violations == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub task: Task,
    pub scheme: QuadratureScheme,
    pub scheme_hash: String,
    pub seed: u64,
    /// Constant of `Γ` actually used.
    pub constant: Option<f64>,
    pub all_hold: bool,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Format> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::Config(format!("unknown format `{s}` (expected json or csv)"))),
        }
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Column names of the inequality CSV.
pub fn report_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["name", "function", "alpha", "beta", "R", "constant", "lhs"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(TERM_LABELS.iter().map(|s| s.to_string()));
    cols.extend(["slack", "verdict", "lhs_error"].iter().map(|s| s.to_string()));
    cols.extend(TERM_LABELS.iter().map(|s| format!("{s}_error")));
    cols.extend(["error_total", "scheme_hash", "seed"].iter().map(|s| s.to_string()));
    cols
}

fn report_row(r: &InequalityReport, hash: &str, seed: u64) -> Vec<String> {
    let mut row = vec![
        r.name.to_string(),
        r.function.clone(),
        num(r.alpha),
        num(r.beta),
        opt(r.r),
        num(r.constant),
        num(r.lhs.value),
    ];
    row.extend(TERM_LABELS.iter().map(|l| opt(r.term(l).map(|t| t.value))));
    row.extend([num(r.slack), r.verdict.to_string(), num(r.lhs.error)]);
    row.extend(TERM_LABELS.iter().map(|l| opt(r.term(l).map(|t| t.error))));
    row.extend([num(r.error_total), hash.to_string(), seed.to_string()]);
    row
}

/// Writes inequality reports as CSV or JSON.
pub fn emit_report(
    reports: &[InequalityReport],
    format: Format,
    scheme: &QuadratureScheme,
    mut out: impl Write,
) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to write".into()));
    }
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, reports)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(report_columns())?;
            let hash = scheme.hash();
            for r in reports {
                w.write_record(report_row(r, &hash, scheme.seed))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per report; the sharpness task writes its evaluation trace.
    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        match &self.outcome {
            Outcome::Inequalities(r) => emit_report(r, Format::Csv, &self.scheme, &mut buf)?,
            other => {
                let mut w = csv::Writer::from_writer(&mut buf);
                let tail = [self.scheme_hash.clone(), self.seed.to_string()];
                match other {
                    Outcome::Green(rows) => {
                        w.write_record([
                            "identity",
                            "u",
                            "v",
                            "interior",
                            "boundary",
                            "residual",
                            "relative",
                            "error",
                            "holds",
                            "scheme_hash",
                            "seed",
                        ])?;
                        for r in rows {
                            let mut rec = vec![
                                r.identity.clone(),
                                r.u.clone(),
                                r.v.clone(),
                                num(r.interior),
                                num(r.boundary),
                                num(r.residual),
                                num(r.relative),
                                num(r.error),
                                r.holds.to_string(),
                            ];
                            rec.extend(tail.iter().cloned());
                            w.write_record(rec)?;
                        }
                    }
                    Outcome::Stokes(rows) => {
                        w.write_record([
                            "set",
                            "fields",
                            "interior",
                            "boundary",
                            "residual",
                            "error",
                            "mc_interior",
                            "mc_sigma",
                            "holds",
                            "scheme_hash",
                            "seed",
                        ])?;
                        for r in rows {
                            let mut rec = vec![
                                r.set.to_string(),
                                r.fields.clone(),
                                num(r.interior),
                                num(r.boundary),
                                num(r.residual),
                                num(r.error),
                                opt(r.mc_interior),
                                opt(r.mc_sigma),
                                r.holds.to_string(),
                            ];
                            rec.extend(tail.iter().cloned());
                            w.write_record(rec)?;
                        }
                    }
                    Outcome::Representation(rows) => {
                        w.write_record([
                            "function",
                            "point",
                            "value",
                            "volume",
                            "double_layer",
                            "single_layer",
                            "residual",
                            "error",
                            "holds",
                            "scheme_hash",
                            "seed",
                        ])?;
                        for r in rows {
                            let point = r.point.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ");
                            let mut rec = vec![
                                r.function.clone(),
                                point,
                                num(r.value),
                                num(r.volume),
                                num(r.double_layer),
                                num(r.single_layer),
                                num(r.residual),
                                num(r.error),
                                r.holds.to_string(),
                            ];
                            rec.extend(tail.iter().cloned());
                            w.write_record(rec)?;
                        }
                    }
                    Outcome::Calibration(r) => {
                        w.write_record([
                            "constant",
                            "check_flux",
                            "deviation",
                            "error",
                            "holds",
                            "scheme_hash",
                            "seed",
                        ])?;
                        let mut rec = vec![
                            num(r.constant),
                            num(r.check_flux),
                            num(r.deviation),
                            num(r.error),
                            r.holds.to_string(),
                        ];
                        rec.extend(tail.iter().cloned());
                        w.write_record(rec)?;
                    }
                    Outcome::Sharpness(r) => {
                        w.write_record(["restart", "evaluation", "theta", "ratio", "best", "scheme_hash", "seed"])?;
                        for e in &r.trace {
                            let theta = e.theta.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ");
                            let mut rec = vec![
                                e.restart.to_string(),
                                e.evaluation.to_string(),
                                theta,
                                opt(e.ratio),
                                opt(e.best),
                            ];
                            rec.extend(tail.iter().cloned());
                            w.write_record(rec)?;
                        }
                    }
                    Outcome::Inequalities(_) => unreachable!(),
                }
                w.flush()?;
            }
        }
        String::from_utf8(buf).map_err(|e| Error::Config(format!("CSV is not UTF-8: {e}")))
    }

    /// Writes `<dir>/<scenario>.json` and/or `<dir>/<scenario>.csv`.
    pub fn write(&self, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for f in formats {
            let (ext, body) = match f {
                Format::Json => ("json", self.to_json()?),
                Format::Csv => ("csv", self.to_csv()?),
            };
            let path = dir.join(format!("{}.{ext}", self.scenario));
            std::fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

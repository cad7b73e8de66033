//! Variational estimates of best constants: minimize the ratio
//! `(lhs − boundary terms) / main integral` over small trial families.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::ScalarField;
use crate::fundsol::FundamentalSolution;
use crate::inequalities::{check, InequalityId, RPolicy, Workspace};

/// Inner fraction of the cutoff radius on which trial cutoffs equal 1.
pub const CUTOFF_INNER: f64 = 0.6;

/// Largest `γ/γ*` the power families may reach.
pub const GAMMA_CEILING: f64 = 1.0 - 1e-3;

type Generator = Arc<dyn Fn(&[f64]) -> ScalarField + Send + Sync>;

/// Parameters `θ` (0 to 3 reals) mapped to test functions.
#[derive(Clone)]
pub struct TrialFamily {
    pub description: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Members vanish near `∂Ω`.
    pub interior_only: bool,
    generator: Generator,
}

impl fmt::Debug for TrialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrialFamily")
            .field("description", &self.description)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("interior_only", &self.interior_only)
            .finish()
    }
}

/// `1` on `[0, CUTOFF_INNER]`, `0` from 1 on, quintic smoothstep between (C²).
fn cutoff(s: f64) -> (f64, f64, f64) {
    let w = 1.0 - CUTOFF_INNER;
    let t = (s - CUTOFF_INNER) / w;
    if t <= 0.0 {
        return (1.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let v = 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let d1 = -30.0 * t * t * (1.0 - t) * (1.0 - t) / w;
    let d2 = -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (w * w);
    (v, d1, d2)
}

/// `d^{−γ}·χ(d/ρ)` with exact derivatives; infinite at the pole.
pub fn power_cutoff_field(fs: Arc<FundamentalSolution>, radius: f64, gamma: f64) -> ScalarField {
    ScalarField::from_jet(format!("d^-{gamma:.6}·cutoff"), move |x, g, h| {
        let n = x.len();
        g.iter_mut().for_each(|v| *v = 0.0);
        h.iter_mut().for_each(|v| *v = 0.0);
        let jet = match fs.gauge_jet(x, true) {
            Ok(j) => j,
            Err(_) => return f64::INFINITY,
        };
        let s = jet.d;
        let (c, c1, c2) = cutoff(s / radius);
        if c == 0.0 {
            return 0.0;
        }
        let p = s.powf(-gamma);
        let p1 = -gamma * p / s;
        let p2 = gamma * (gamma + 1.0) * p / (s * s);
        let f = p * c;
        let f1 = p1 * c + p * c1 / radius;
        let f2 = p2 * c + 2.0 * p1 * c1 / radius + p * c2 / (radius * radius);
        for i in 0..n {
            g[i] = f1 * jet.grad[i];
            for j in 0..n {
                h[i * n + j] = f2 * jet.grad[i] * jet.grad[j] + f1 * jet.hess[i * n + j];
            }
        }
        f
    })
    .with_compact_support(true)
}

impl TrialFamily {
    pub fn new(
        description: impl Into<String>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        interior_only: bool,
        generator: impl Fn(&[f64]) -> ScalarField + Send + Sync + 'static,
    ) -> Result<TrialFamily> {
        if lower.len() != upper.len() || lower.len() > 3 {
            return Err(Error::Parameters(format!(
                "trial families take 0 to 3 parameters with matching bounds, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::Parameters("empty parameter box".into()));
        }
        Ok(TrialFamily {
            description: description.into(),
            lower,
            upper,
            interior_only,
            generator: Arc::new(generator),
        })
    }

    /// The parameter-free family `{u}`.
    pub fn fixed(u: ScalarField) -> TrialFamily {
        let interior = u.is_compact();
        TrialFamily {
            description: format!("fixed {}", u.name()),
            lower: Vec::new(),
            upper: Vec::new(),
            interior_only: interior,
            generator: Arc::new(move |_| u.clone()),
        }
    }

    /// `u_θ = d^{−θγ*} · χ(d/ρ)` with `χ` the C² cutoff that is 1 on
    /// `d ≤ 0.6ρ` and 0 on `d ≥ ρ`; `θ ∈ [0.5, 1 − 10⁻³]`.
    ///
    /// No regularization at the pole: the excision tail must stay an exact
    /// power of `ε` for the extrapolation to be valid, and a regularized
    /// profile `(d² + δ²)^{−γ/2}` breaks that below `ε ≈ δ`.
    pub fn power_cutoff(fs: &FundamentalSolution, radius: f64, gamma_star: f64) -> Result<TrialFamily> {
        if !(radius > 0.0 && gamma_star > 0.0) {
            return Err(Error::Parameters(format!(
                "power family needs radius > 0 and γ* > 0, got {radius} and {gamma_star}"
            )));
        }
        let fs = Arc::new(fs.clone());
        TrialFamily::new(
            format!("d^(−θγ*)·χ(d/ρ), ρ = {radius}, γ* = {gamma_star}"),
            vec![0.5],
            vec![GAMMA_CEILING],
            true,
            move |theta| power_cutoff_field(fs.clone(), radius, theta[0] * gamma_star),
        )
    }

    /// The power family at the formal extremal exponent for `id`, with the
    /// cutoff radius set to the smallest gauge value on `∂Ω`.
    pub fn extremal(ws: &Workspace, id: InequalityId, alpha: f64, beta: f64) -> Result<TrialFamily> {
        let gamma = extremal_exponent(ws.solution(), id, alpha, beta)?;
        let radius = ws.boundary_gauge_min();
        TrialFamily::power_cutoff(ws.solution(), radius, gamma)
    }

    pub fn num_params(&self) -> usize {
        self.lower.len()
    }

    pub fn generate(&self, theta: &[f64]) -> Result<ScalarField> {
        if theta.len() != self.num_params() {
            return Err(Error::Parameters(format!(
                "family takes {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        Ok((self.generator)(theta))
    }

    fn clamp(&self, theta: &mut [f64]) {
        for (i, v) in theta.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// The exponent `γ*` at which `d^{−γ}` stops being admissible for `id`:
/// `(eα + Q − 2)/2` for Hardy, `(eα − 2e + Q − 2)/2` for the Rellich pair,
/// where `Q` is the solution's own β and `e = (2 − Q)/(2 − β)`.
pub fn extremal_exponent(fs: &FundamentalSolution, id: InequalityId, alpha: f64, beta: f64) -> Result<f64> {
    id.validate_params(alpha, beta)?;
    let q = fs.beta();
    let e = (2.0 - q) / (2.0 - beta);
    let gamma = match id {
        InequalityId::Lh2a | InequalityId::Lh2 => (e * alpha + q - 2.0) / 2.0,
        InequalityId::Lr2a | InequalityId::Lr2 | InequalityId::TwoLr2a | InequalityId::TwoLr2 => {
            (e * alpha - 2.0 * e + q - 2.0) / 2.0
        }
        _ => {
            return Err(Error::Parameters(format!(
                "{id} has no single main integral to form a ratio with"
            )))
        }
    };
    if !(gamma > 0.0) {
        return Err(Error::Parameters(format!("extremal exponent {gamma} is not positive")));
    }
    Ok(gamma)
}

/// `(lhs − boundary terms)/main integral` for one test function.
pub fn rayleigh_ratio(ws: &Workspace, id: InequalityId, u: &ScalarField, alpha: f64, beta: f64) -> Result<f64> {
    Ok(evaluate(ws, id, u, alpha, beta)?.0)
}

/// Ratio and its error allowance `error_total / main`.
fn evaluate(ws: &Workspace, id: InequalityId, u: &ScalarField, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if matches!(
        id,
        InequalityId::Up1a | InequalityId::Up2a | InequalityId::Up1 | InequalityId::Up2
    ) {
        return Err(Error::Parameters(format!("{id} has no Rayleigh ratio")));
    }
    let samples = ws.sample(u, id.is_second_order())?;
    let report = check(ws, id, &samples, alpha, beta, RPolicy::Auto)?;
    let ratio = report.rayleigh_ratio()?;
    Ok((ratio, report.error_total / report.main_integral.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub restart: usize,
    pub evaluation: usize,
    pub theta: Vec<f64>,
    /// `None` for degenerate trials.
    pub ratio: Option<f64>,
    /// Best ratio of this restart so far.
    pub best: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessResult {
    pub inequality: InequalityId,
    pub alpha: f64,
    pub beta: f64,
    pub family: String,
    pub constant: f64,
    pub best_theta: Vec<f64>,
    pub best_ratio: f64,
    /// Best ratio per restart.
    pub restart_best: Vec<f64>,
    /// `(max − min)/min` over the restarts.
    pub restart_spread: f64,
    /// Evaluations below `constant − allowance`.
    pub lower_bound_violations: usize,
    pub trace: Vec<TraceEntry>,
}

impl SharpnessResult {
    pub fn relative_gap(&self) -> f64 {
        (self.best_ratio - self.constant) / self.constant
    }
}

pub const RESTARTS: usize = 3;

struct Objective<'a> {
    ws: &'a Workspace,
    id: InequalityId,
    family: &'a TrialFamily,
    alpha: f64,
    beta: f64,
    constant: f64,
    restart: usize,
    budget: usize,
    trace: Vec<TraceEntry>,
    best: Option<(f64, Vec<f64>)>,
    violations: usize,
}

impl Objective<'_> {
    fn exhausted(&self) -> bool {
        self.trace.len() >= self.budget
    }

    fn eval(&mut self, theta: &[f64]) -> f64 {
        let ratio = self
            .family
            .generate(theta)
            .and_then(|u| evaluate(self.ws, self.id, &u, self.alpha, self.beta));
        let ratio = match ratio {
            Ok((r, allowance)) if r.is_finite() => {
                if r < self.constant * (1.0 - 1e-12) - allowance {
                    log::warn!("ratio {r} below constant {} at θ = {theta:?}", self.constant);
                    self.violations += 1;
                }
                if self.best.as_ref().is_none_or(|(b, _)| r < *b) {
                    self.best = Some((r, theta.to_vec()));
                }
                Some(r)
            }
            Ok(_) => None,
            Err(e) => {
                log::debug!("degenerate trial at θ = {theta:?}: {e}");
                None
            }
        };
        self.trace.push(TraceEntry {
            restart: self.restart,
            evaluation: self.trace.len(),
            theta: theta.to_vec(),
            ratio,
            best: self.best.as_ref().map(|b| b.0),
        });
        ratio.unwrap_or(f64::INFINITY)
    }
}

/// Simplex descent inside the family's box (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5), proposals clamped to the box.
fn nelder_mead(obj: &mut Objective<'_>, start: Vec<f64>) {
    let fam = obj.family;
    let n = start.len();
    let mut simplex = vec![start.clone()];
    for i in 0..n {
        let mut p = start.clone();
        let step = 0.25 * (fam.upper[i] - fam.lower[i]);
        p[i] = if p[i] + step <= fam.upper[i] {
            p[i] + step
        } else {
            p[i] - step
        };
        fam.clamp(&mut p);
        simplex.push(p);
    }
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    for p in &simplex {
        if obj.exhausted() {
            return;
        }
        values.push(obj.eval(p));
    }
    let propose = |centroid: &[f64], worst: &[f64], coef: f64| -> Vec<f64> {
        let mut p: Vec<f64> = centroid.iter().zip(worst).map(|(c, w)| c + coef * (c - w)).collect();
        fam.clamp(&mut p);
        p
    };
    while !obj.exhausted() {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = (values[n] - values[0]).abs();
        if spread.is_finite() && spread <= 1e-10 * values[0].abs().max(1e-300) {
            let size: f64 = simplex
                .iter()
                .skip(1)
                .map(|p| {
                    p.iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if size < 1e-9 {
                break;
            }
        }
        let mut centroid = vec![0.0; n];
        for p in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let reflected = propose(&centroid, &simplex[n], 1.0);
        let fr = obj.eval(&reflected);
        if fr < values[0] {
            if obj.exhausted() {
                simplex[n] = reflected;
                values[n] = fr;
                break;
            }
            let expanded = propose(&centroid, &simplex[n], 2.0);
            let fe = obj.eval(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        if obj.exhausted() {
            break;
        }
        let contracted = if fr < values[n] {
            propose(&centroid, &simplex[n], 0.5)
        } else {
            propose(&centroid, &simplex[n], -0.5)
        };
        let fc = obj.eval(&contracted);
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            if obj.exhausted() {
                break;
            }
            let p: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(v, b)| b + 0.5 * (v - b))
                .collect();
            values[i] = obj.eval(&p);
            simplex[i] = p;
        }
    }
}

/// Minimizes the ratio over `family` with [`RESTARTS`] restarts from
/// ChaCha-seeded points in the box; `budget` counts evaluations over all restarts.
pub fn optimize_trial(
    ws: &Workspace,
    id: InequalityId,
    family: &TrialFamily,
    alpha: f64,
    beta: f64,
    budget: usize,
) -> Result<SharpnessResult> {
    if budget < 20 {
        return Err(Error::Parameters(format!(
            "budget must be at least 20 evaluations, got {budget}"
        )));
    }
    id.validate_params(alpha, beta)?;
    let constant = id.constant(alpha, beta);
    let seed = ws.scheme().seed;
    let per_restart = budget / RESTARTS;
    let restarts = if family.num_params() == 0 { 1 } else { RESTARTS };
    let runs: Vec<Objective<'_>> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let mut obj = Objective {
                ws,
                id,
                family,
                alpha,
                beta,
                constant,
                restart: k,
                budget: if k + 1 == restarts {
                    budget - per_restart * (restarts - 1)
                } else {
                    per_restart
                },
                trace: Vec::new(),
                best: None,
                violations: 0,
            };
            if family.num_params() == 0 {
                obj.eval(&[]);
                return obj;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let start: Vec<f64> = family
                .lower
                .iter()
                .zip(&family.upper)
                .map(|(&a, &b)| if a < b { rng.gen_range(a..=b) } else { a })
                .collect();
            nelder_mead(&mut obj, start);
            obj
        })
        .collect();

    let mut trace = Vec::new();
    let mut restart_best = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut violations = 0;
    for run in runs {
        violations += run.violations;
        if let Some((r, t)) = &run.best {
            restart_best.push(*r);
            if best.as_ref().is_none_or(|(b, _)| r < b) {
                best = Some((*r, t.clone()));
            }
        }
        trace.extend(run.trace);
    }
    let (best_ratio, best_theta) =
        best.ok_or_else(|| Error::Degenerate("every trial evaluation was degenerate".into()))?;
    let lo = restart_best.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = restart_best.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SharpnessResult {
        inequality: id,
        alpha,
        beta,
        family: family.description.clone(),
        constant,
        best_theta,
        best_ratio,
        restart_spread: (hi - lo) / lo.abs(),
        restart_best,
        lower_bound_violations: violations,
        trace,
    })
}

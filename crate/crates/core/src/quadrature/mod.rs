//! Interior and boundary quadrature, excision extrapolation and the
//! Monte-Carlo oracle.

pub mod rules;
mod sum;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domains::{gauge_chart, heisenberg_translate, latitude, BoundaryPatch, Cell, Domain, Location};
use crate::error::{Error, Result};
use crate::frames::{Frame, ScalarField};
use rules::{gauss_legendre, sphere_point, SphereRule};
pub use sum::{pairwise_sum, pairwise_sum_par};

/// Angular nodes allowed per radial node before the sphere rule is thinned.
pub const ANGULAR_BUDGET: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureScheme {
    /// Gauss points per axis per cell.
    pub order: usize,
    /// Geometric rings between the first excision radius and the boundary.
    pub refinement: usize,
    /// First excision radius as a fraction of the pole-to-boundary distance.
    pub eps0: f64,
    /// Number of halvings `J` of the excision radius.
    pub eps_levels: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub max_nodes: usize,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        QuadratureScheme {
            order: 8,
            refinement: 4,
            eps0: 0.2,
            eps_levels: 4,
            mc_samples: 100_000,
            seed: 0,
            max_nodes: 2_000_000,
        }
    }
}

impl QuadratureScheme {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::Quadrature(format!("order must be >= 2, got {}", self.order)));
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(Error::Quadrature(format!("eps0 must lie in (0, 1), got {}", self.eps0)));
        }
        if self.eps_levels < 2 {
            return Err(Error::Quadrature(format!(
                "eps_levels must be >= 2 for extrapolation, got {}",
                self.eps_levels
            )));
        }
        if self.refinement == 0 {
            return Err(Error::Quadrature("refinement must be >= 1".into()));
        }
        Ok(())
    }

    /// The coarser companion used for error estimates.
    pub fn low_order(&self) -> usize {
        self.order.saturating_sub(2).max(2)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scheme serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub nodes_used: usize,
}

/// Largest polar order `≤ q` whose sphere rule stays within [`ANGULAR_BUDGET`].
pub fn angular_order(ambient: usize, q: usize) -> usize {
    let mut a = q;
    while a > 2 && SphereRule::count(ambient, a) > ANGULAR_BUDGET {
        a -= 1;
    }
    a
}

/// Angular order at one quadrature level. The low level drops the radial
/// order by two and the angular order by at least one, so the two levels
/// differ even when the angular rule is budget-limited.
pub fn level_angular(ambient: usize, q_main: usize, low: bool) -> usize {
    let a_main = angular_order(ambient, q_main);
    if low {
        let q_low = q_main.saturating_sub(2).max(2);
        angular_order(ambient, q_low).min(a_main.saturating_sub(1).max(2))
    } else {
        a_main
    }
}

fn level_order(q_main: usize, low: bool) -> usize {
    if low {
        q_main.saturating_sub(2).max(2)
    } else {
        q_main
    }
}

fn cell_count(cell: &Cell, q_main: usize, low: bool) -> usize {
    let q = level_order(q_main, low);
    match cell {
        Cell::Box { lo, .. } => q.pow(lo.len() as u32),
        Cell::Shell { center, .. } => q * SphereRule::count(center.len(), level_angular(center.len(), q_main, low)),
        Cell::GaugeShell { m, .. } => q * q * SphereRule::count(2 * m, level_angular(2 * m, q_main, low)),
    }
}

/// Interior nodes grouped by excision layer.
#[derive(Debug, Clone)]
pub struct InteriorNodes {
    pub dim: usize,
    /// Radial (or per-axis) order actually used.
    pub order: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// `layer_starts[j]..layer_starts[j+1]` indexes layer `j`.
    pub layer_starts: Vec<usize>,
    /// Excision radius bounding each layer from inside (empty without excision).
    pub radii: Vec<f64>,
}

/// Largest main order `≤ order` whose node count fits `max_nodes`.
fn budget_order(layers: &[Vec<Cell>], order: usize, max_nodes: usize) -> Result<usize> {
    let mut q = order;
    loop {
        let count: usize = layers.iter().flatten().map(|c| cell_count(c, q, false)).sum();
        if count <= max_nodes {
            break;
        }
        if q <= 2 {
            return Err(Error::Quadrature(format!(
                "{count} interior nodes exceed the budget of {max_nodes}"
            )));
        }
        q -= 1;
    }
    if q != order {
        log::warn!("interior order reduced from {order} to {q} to respect the node budget");
    }
    Ok(q)
}

impl InteriorNodes {
    /// Nodes for the main (`low = false`) or the low level of `scheme`.
    pub fn build(domain: &Domain, scheme: &QuadratureScheme, low: bool) -> Result<InteriorNodes> {
        let layers = domain.cell_layers(scheme.refinement, scheme.eps_levels);
        InteriorNodes::from_layers(domain, layers, scheme, low)
    }

    /// Nodes for the region actually present (no extra excision layers), so an
    /// excised domain is integrated over `Ω \ B(ε)` at its own `ε`.
    pub fn build_fixed(domain: &Domain, scheme: &QuadratureScheme, low: bool) -> Result<InteriorNodes> {
        let layers = domain.cell_layers(scheme.refinement, 0);
        InteriorNodes::from_layers(domain, layers, scheme, low)
    }

    fn from_layers(
        domain: &Domain,
        layers: Vec<Vec<Cell>>,
        scheme: &QuadratureScheme,
        low: bool,
    ) -> Result<InteriorNodes> {
        let q_main = budget_order(&layers, scheme.order, scheme.max_nodes)?;
        let n = domain.dim();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut layer_starts = vec![0];
        for layer in &layers {
            for cell in layer {
                push_cell_nodes(cell, q_main, low, &mut points, &mut weights);
            }
            layer_starts.push(weights.len());
        }
        let radii = match domain.excision() {
            Some(ex) => (0..layers.len()).map(|j| ex.eps / 2f64.powi(j as i32)).collect(),
            None => Vec::new(),
        };
        Ok(InteriorNodes {
            dim: n,
            order: level_order(q_main, low),
            points,
            weights,
            layer_starts,
            radii,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_starts.len() - 1
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// `Σ w_i v_i` per layer, pairwise within each layer.
    pub fn layer_sums(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.len());
        let products: Vec<f64> = values.iter().zip(&self.weights).map(|(v, w)| v * w).collect();
        self.layer_starts
            .windows(2)
            .map(|r| pairwise_sum_par(&products[r[0]..r[1]]))
            .collect()
    }

    /// Evaluates `f` at every node in parallel, failing on non-finite values.
    pub fn evaluate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Vec<f64>> {
        let values: Vec<f64> = (0..self.len()).into_par_iter().map(|i| f(self.point(i))).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: self.point(i).to_vec(),
                value: values[i],
            });
        }
        Ok(values)
    }
}

fn push_cell_nodes(cell: &Cell, q_main: usize, low: bool, points: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let q = level_order(q_main, low);
    let gl = gauss_legendre(q);
    match cell {
        Cell::Box { lo, hi } => {
            let n = lo.len();
            let rules: Vec<_> = lo.iter().zip(hi).map(|(a, b)| gl.mapped(*a, *b)).collect();
            let total = q.pow(n as u32);
            for idx in 0..total {
                let mut c = idx;
                let mut w = 1.0;
                let mut coords = vec![0.0; n];
                for i in (0..n).rev() {
                    let j = c % q;
                    c /= q;
                    coords[i] = rules[i].nodes[j];
                    w *= rules[i].weights[j];
                }
                points.extend_from_slice(&coords);
                weights.push(w);
            }
        }
        Cell::Shell { center, r0, r1 } => {
            let n = center.len();
            let radial = gl.mapped(*r0, *r1);
            let sphere = SphereRule::new(n, level_angular(n, q_main, low));
            let mut omega = vec![0.0; n];
            for (r, rw) in radial.nodes.iter().zip(&radial.weights) {
                let jac = rw * r.powi(n as i32 - 1);
                for (a, sw) in sphere.angles.iter().zip(&sphere.weights) {
                    sphere_point(a, &mut omega, None);
                    for i in 0..n {
                        points.push(center[i] + r * omega[i]);
                    }
                    weights.push(jac * sw);
                }
            }
        }
        Cell::GaugeShell { pole, r0, r1, m } => {
            let m = *m;
            let n = 2 * m + 1;
            let radial = gl.mapped(*r0, *r1);
            let sphere = SphereRule::new(2 * m, level_angular(2 * m, q_main, low));
            let mut omega = vec![0.0; 2 * m];
            let mut w = vec![0.0; n];
            let mut x = vec![0.0; n];
            for (rho, rw) in radial.nodes.iter().zip(&radial.weights) {
                let radial_jac = rw * rho.powi(2 * m as i32 + 1);
                for (sg, sgw) in gl.nodes.iter().zip(&gl.weights) {
                    let (psi, dpsi) = latitude(*sg);
                    let lat_jac = sgw * dpsi * psi.cos().powi(m as i32 - 1);
                    for (a, sw) in sphere.angles.iter().zip(&sphere.weights) {
                        sphere_point(a, &mut omega, None);
                        gauge_chart(*rho, psi, &omega, &mut w);
                        heisenberg_translate(pole, m, &w, &mut x);
                        points.extend_from_slice(&x);
                        weights.push(radial_jac * lat_jac * sw);
                    }
                }
            }
        }
    }
}

/// Boundary nodes with the frame's boundary forms `⟨X_k, dν⟩` (weights included).
#[derive(Debug, Clone)]
pub struct BoundaryNodes {
    pub dim: usize,
    pub fields: usize,
    pub points: Vec<f64>,
    /// `N` entries per node.
    pub forms: Vec<f64>,
    /// `N × n` field vectors per node.
    pub vectors: Vec<f64>,
}

impl BoundaryNodes {
    /// Nodes on `∂Ω` at the main or low level of the main order `order`.
    pub fn build(domain: &Domain, frame: &Frame, order: usize, low: bool) -> Result<BoundaryNodes> {
        BoundaryNodes::from_patches(&domain.boundary_patches(), frame, order, low)
    }

    pub fn from_patches(patches: &[BoundaryPatch], frame: &Frame, order: usize, low: bool) -> Result<BoundaryNodes> {
        let n = frame.dim();
        let big_n = frame.num_fields();
        let mut points = Vec::new();
        let mut forms = Vec::new();
        let mut vectors = Vec::new();
        let mut x = vec![0.0; n];
        let mut t = vec![0.0; (n - 1) * n];
        let mut v = vec![0.0; big_n * n];
        for patch in patches {
            if patch.dim() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: patch.dim(),
                });
            }
            let ambient = match &patch.kind {
                crate::domains::PatchKind::GaugeSphere { m, .. } => 2 * m,
                _ => n,
            };
            let (params, pw) = patch.rule(level_order(order, low), level_angular(ambient, order, low));
            for (s, w) in params.iter().zip(&pw) {
                patch.map(s, &mut x, &mut t);
                frame.vectors_at(&x, &mut v);
                points.extend_from_slice(&x);
                vectors.extend_from_slice(&v);
                for k in 0..big_n {
                    forms.push(w * patch.density_from(&v[k * n..(k + 1) * n], &t));
                }
            }
        }
        Ok(BoundaryNodes {
            dim: n,
            fields: big_n,
            points,
            forms,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_forms(&self, i: usize) -> &[f64] {
        &self.forms[i * self.fields..(i + 1) * self.fields]
    }

    pub fn node_vectors(&self, i: usize) -> &[f64] {
        let s = self.fields * self.dim;
        &self.vectors[i * s..(i + 1) * s]
    }

    /// `Σ_k (X_k u)·form_k` at node `i`, given the Euclidean gradient of `u`.
    pub fn flux_from_gradient(&self, i: usize, grad: &[f64]) -> f64 {
        let v = self.node_vectors(i);
        let f = self.node_forms(i);
        let n = self.dim;
        (0..self.fields)
            .map(|k| f[k] * v[k * n..(k + 1) * n].iter().zip(grad).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// `Σ density(point, forms)` over the nodes.
    pub fn integrate(&self, density: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> Result<IntegralResult> {
        let values: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| density(self.point(i), self.node_forms(i)))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: self.point(i).to_vec(),
                value: values[i],
            });
        }
        Ok(IntegralResult {
            value: pairwise_sum_par(&values),
            error_estimate: 0.0,
            nodes_used: self.len(),
        })
    }

    /// `∫ weight · ⟨∇̃u, dν⟩`.
    pub fn integrate_tilde(
        &self,
        frame: &Frame,
        u: &ScalarField,
        weight: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<IntegralResult> {
        let n = frame.dim();
        let values: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let x = self.point(i);
                let mut g = vec![0.0; n];
                u.gradient(x, &mut g);
                weight(x) * self.flux_from_gradient(i, &g)
            })
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: self.point(i).to_vec(),
                value: values[i],
            });
        }
        Ok(IntegralResult {
            value: pairwise_sum_par(&values),
            error_estimate: 0.0,
            nodes_used: self.len(),
        })
    }
}

/// Result of Richardson extrapolation over a geometric excision schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    pub value: f64,
    /// Fitted (or hinted) exponent `p`; `None` when the sequence had converged
    /// or could not be fitted.
    pub order: Option<f64>,
    pub raw_last: f64,
    pub warning: Option<String>,
}

/// Richardson extrapolation of partial integrals `values[j]` taken over the
/// domain minus `B(ε_j)` with `ε_j = ε_0 2^{-j}`, assuming a tail `∝ ε^p`.
pub fn extrapolate_excision(values: &[f64], hint: Option<f64>) -> Result<Extrapolation> {
    let len = values.len();
    if len < 3 {
        return Err(Error::Quadrature(format!(
            "extrapolation needs at least 3 values, got {len}"
        )));
    }
    let last = values[len - 1];
    let d1 = values[len - 2] - values[len - 3];
    let d2 = last - values[len - 2];
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    if d2.abs() <= 1e-14 * scale {
        return Ok(Extrapolation {
            value: last,
            order: None,
            raw_last: last,
            warning: None,
        });
    }
    if let Some(p) = hint {
        return Ok(Extrapolation {
            value: last + d2 / (2f64.powf(p) - 1.0),
            order: Some(p),
            raw_last: last,
            warning: None,
        });
    }
    if d1 != 0.0 && d2 != 0.0 && d1.signum() == d2.signum() && d1.abs() > d2.abs() {
        let p = (d1 / d2).log2();
        return Ok(Extrapolation {
            value: last + d2 / (2f64.powf(p) - 1.0),
            order: Some(p),
            raw_last: last,
            warning: None,
        });
    }
    let msg = format!("non-monotone excision tail (differences {d1:e}, {d2:e}); using the raw last value");
    Ok(Extrapolation {
        value: last,
        order: None,
        raw_last: last,
        warning: Some(msg),
    })
}

/// Cumulative sums of per-layer integrals.
pub fn cumulative(layers: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    layers
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Limit and error bar from layered sums at the main and the low order.
pub fn layered_estimate(main: &[f64], low: &[f64]) -> (f64, f64, Option<String>) {
    if main.len() == 1 {
        return (main[0], (main[0] - low[0]).abs(), None);
    }
    let cm = cumulative(main);
    let cl = cumulative(low);
    let finish = |c: &[f64]| -> (f64, Option<String>) {
        if c.len() < 3 {
            return (c[c.len() - 1], None);
        }
        match extrapolate_excision(c, None) {
            Ok(e) => (e.value, e.warning),
            Err(_) => (c[c.len() - 1], None),
        }
    };
    let (vm, warn) = finish(&cm);
    if let Some(w) = &warn {
        log::warn!("{w}");
    }
    let (vl, _) = finish(&cl);
    let mut err = (vm - vl).abs();
    if cm.len() >= 4 {
        let (prev, _) = finish(&cm[..cm.len() - 1]);
        err += (vm - prev).abs();
    } else {
        err += (cm[cm.len() - 1] - cm[cm.len() - 2]).abs();
    }
    (vm, err, warn)
}

/// Two node sets (main and low order) for one domain.
#[derive(Debug, Clone)]
pub struct InteriorLevels {
    pub main: InteriorNodes,
    pub low: InteriorNodes,
}

impl InteriorLevels {
    pub fn build(domain: &Domain, scheme: &QuadratureScheme) -> Result<InteriorLevels> {
        scheme.validate()?;
        Ok(InteriorLevels {
            main: InteriorNodes::build(domain, scheme, false)?,
            low: InteriorNodes::build(domain, scheme, true)?,
        })
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<IntegralResult> {
        let vm = self.main.evaluate(&f)?;
        let vl = self.low.evaluate(&f)?;
        let (value, err, _) = layered_estimate(&self.main.layer_sums(&vm), &self.low.layer_sums(&vl));
        Ok(IntegralResult {
            value,
            error_estimate: err,
            nodes_used: self.main.len() + self.low.len(),
        })
    }
}

/// `∫_Ω f dν` with graded cells, excision extrapolation and a two-level error bar.
pub fn integrate_interior(
    f: impl Fn(&[f64]) -> f64 + Sync,
    domain: &Domain,
    scheme: &QuadratureScheme,
) -> Result<IntegralResult> {
    InteriorLevels::build(domain, scheme)?.integrate(f)
}

/// `∫_{∂Ω} density(x, (⟨X_k, dν⟩)_k)` at two orders.
pub fn integrate_boundary(
    density: impl Fn(&[f64], &[f64]) -> f64 + Sync,
    frame: &Frame,
    domain: &Domain,
    scheme: &QuadratureScheme,
) -> Result<IntegralResult> {
    scheme.validate()?;
    let main = BoundaryNodes::build(domain, frame, scheme.order, false)?.integrate(&density)?;
    let low = BoundaryNodes::build(domain, frame, scheme.order, true)?.integrate(&density)?;
    Ok(IntegralResult {
        value: main.value,
        error_estimate: (main.value - low.value).abs(),
        nodes_used: main.nodes_used + low.nodes_used,
    })
}

/// Uniform rejection sampling in the bounding box of `domain`.
pub fn monte_carlo_oracle(
    f: impl Fn(&[f64]) -> f64 + Sync,
    domain: &Domain,
    samples: usize,
    seed: u64,
) -> Result<IntegralResult> {
    if samples < 10_000 {
        return Err(Error::Quadrature(format!("need at least 10^4 samples, got {samples}")));
    }
    const CHUNK: usize = 8192;
    let (lo, hi) = domain.bounding_box();
    let n = lo.len();
    let volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut x = vec![0.0; n];
            let mut s = 0.0;
            let mut s2 = 0.0;
            let mut hits = 0;
            for _ in 0..count {
                for i in 0..n {
                    x[i] = lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>();
                }
                if domain.locate(&x) == Location::Inside {
                    let v = f(&x);
                    s += v;
                    s2 += v * v;
                    hits += 1;
                }
            }
            (s, s2, hits)
        })
        .collect();
    let hits: usize = partial.iter().map(|p| p.2).sum();
    if hits == 0 {
        return Err(Error::Quadrature("Monte-Carlo sampling accepted no points".into()));
    }
    let sum: f64 = pairwise_sum(&partial.iter().map(|p| p.0).collect::<Vec<_>>());
    let sum2: f64 = pairwise_sum(&partial.iter().map(|p| p.1).collect::<Vec<_>>());
    let nf = samples as f64;
    let mean = sum / nf;
    let var = (sum2 / nf - mean * mean).max(0.0);
    if !mean.is_finite() {
        return Err(Error::Quadrature(
            "Monte-Carlo integrand produced non-finite values".into(),
        ));
    }
    Ok(IntegralResult {
        value: volume * mean,
        error_estimate: volume * (var / nf).sqrt(),
        nodes_used: samples,
    })
}

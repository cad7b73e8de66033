//! Closed-form fundamental solutions `Γ_y = c·d^{2−β}` and their gauges.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::frames::{Frame, ScalarField};
use crate::quadrature::{BoundaryNodes, QuadratureScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeKind {
    /// `d = |x − y|`, `β = n`.
    Euclidean,
    /// `d = (|z|⁴ + t²)^{1/4}` on ℍ^m with `X_j = ∂_{x_j} + 2y_j∂_t`, `Y_j = ∂_{y_j} − 2x_j∂_t`; `β = 2m + 2`.
    Heisenberg { m: usize },
}

/// Value, Euclidean gradient and (optionally) Hessian of the gauge.
#[derive(Debug, Clone)]
pub struct GaugeJet {
    pub d: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FundamentalSolution {
    frame: Frame,
    kind: GaugeKind,
    pole: Vec<f64>,
    beta: f64,
    constant: f64,
}

impl FundamentalSolution {
    pub fn euclidean(n: usize, pole: Vec<f64>) -> Result<FundamentalSolution> {
        if n < 3 {
            return Err(Error::Parameters(format!(
                "euclidean fundamental solution needs n >= 3, got {n}"
            )));
        }
        if pole.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: pole.len(),
            });
        }
        Ok(FundamentalSolution {
            frame: Frame::euclidean(n),
            kind: GaugeKind::Euclidean,
            pole,
            beta: n as f64,
            constant: 1.0,
        })
    }

    pub fn heisenberg(m: usize, pole: Vec<f64>) -> Result<FundamentalSolution> {
        if m == 0 {
            return Err(Error::Parameters("heisenberg group needs m >= 1".into()));
        }
        if pole.len() != 2 * m + 1 {
            return Err(Error::Dimension {
                expected: 2 * m + 1,
                got: pole.len(),
            });
        }
        Ok(FundamentalSolution {
            frame: Frame::heisenberg(m),
            kind: GaugeKind::Heisenberg { m },
            pole,
            beta: (2 * m + 2) as f64,
            constant: 1.0,
        })
    }

    pub fn with_constant(mut self, c: f64) -> Result<FundamentalSolution> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Parameters(format!("constant must be positive, got {c}")));
        }
        self.constant = c;
        Ok(self)
    }

    /// Same solution with `c` replaced by `λc`.
    pub fn scaled(&self, lambda: f64) -> Result<FundamentalSolution> {
        self.clone().with_constant(self.constant * lambda)
    }

    /// The same solution with the pole moved to `pole`.
    pub fn at_pole(&self, pole: &[f64]) -> Result<FundamentalSolution> {
        self.check_point(pole)?;
        let mut out = self.clone();
        out.pole = pole.to_vec();
        Ok(out)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn kind(&self) -> GaugeKind {
        self.kind
    }

    pub fn pole(&self) -> &[f64] {
        &self.pole
    }

    pub fn dim(&self) -> usize {
        self.pole.len()
    }

    /// The exponent with `Γ ∝ d^{2−β}`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.pole.len() {
            return Err(Error::Dimension {
                expected: self.pole.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Coordinates of `y^{-1}x`.
    pub fn local_coordinates(&self, x: &[f64], out: &mut [f64]) {
        for (o, (a, b)) in out.iter_mut().zip(x.iter().zip(&self.pole)) {
            *o = a - b;
        }
        if let GaugeKind::Heisenberg { m } = self.kind {
            let p = &self.pole;
            let mut shift = 0.0;
            for j in 0..m {
                shift += p[j] * x[m + j] - p[m + j] * x[j];
            }
            out[2 * m] += 2.0 * shift;
        }
    }

    /// The raw gauge `d(x)` (no constant normalization).
    pub fn gauge(&self, x: &[f64]) -> f64 {
        let n = self.pole.len();
        let mut w = vec![0.0; n];
        self.local_coordinates(x, &mut w);
        match self.kind {
            GaugeKind::Euclidean => w.iter().map(|v| v * v).sum::<f64>().sqrt(),
            GaugeKind::Heisenberg { m } => {
                let s: f64 = w[..2 * m].iter().map(|v| v * v).sum();
                let t = w[2 * m];
                (s * s + t * t).sqrt().sqrt()
            }
        }
    }

    /// `d` with Euclidean gradient and, if requested, Hessian.
    pub fn gauge_jet(&self, x: &[f64], hessian: bool) -> Result<GaugeJet> {
        self.check_point(x)?;
        let n = self.pole.len();
        let mut w = vec![0.0; n];
        self.local_coordinates(x, &mut w);
        let mut grad = vec![0.0; n];
        let mut hess = if hessian { vec![0.0; n * n] } else { Vec::new() };
        let d;
        match self.kind {
            GaugeKind::Euclidean => {
                d = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if d == 0.0 {
                    return Err(Error::AtPole(x.to_vec()));
                }
                for i in 0..n {
                    grad[i] = w[i] / d;
                }
                if hessian {
                    for i in 0..n {
                        for j in 0..n {
                            let delta = if i == j { 1.0 } else { 0.0 };
                            hess[i * n + j] = (delta - grad[i] * grad[j]) / d;
                        }
                    }
                }
            }
            GaugeKind::Heisenberg { m } => {
                let s: f64 = w[..2 * m].iter().map(|v| v * v).sum();
                let t = w[2 * m];
                let n4 = s * s + t * t;
                if n4 == 0.0 {
                    return Err(Error::AtPole(x.to_vec()));
                }
                d = n4.sqrt().sqrt();
                // Derivatives of N = s² + T² in local coordinates.
                let mut gn = vec![0.0; n];
                for i in 0..2 * m {
                    gn[i] = 4.0 * s * w[i];
                }
                gn[2 * m] = 2.0 * t;
                let a = 0.25 * d / n4;
                let mut gw = vec![0.0; n];
                for i in 0..n {
                    gw[i] = a * gn[i];
                }
                // Chain through the affine map w(x): only T depends on several inputs.
                let p = &self.pole;
                let mut row = vec![0.0; n];
                for j in 0..m {
                    row[j] = -2.0 * p[m + j];
                    row[m + j] = 2.0 * p[j];
                }
                for i in 0..n {
                    grad[i] = gw[i] + row[i] * gw[2 * m];
                }
                if hessian {
                    let b = 3.0 / 16.0 * d / (n4 * n4);
                    let mut hw = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            let mut hn = 0.0;
                            if i < 2 * m && j < 2 * m {
                                hn = 8.0 * w[i] * w[j] + if i == j { 4.0 * s } else { 0.0 };
                            } else if i == 2 * m && j == 2 * m {
                                hn = 2.0;
                            }
                            hw[i * n + j] = a * hn - b * gn[i] * gn[j];
                        }
                    }
                    // H_x = Jᵀ H_w J with J = I + e_T rowᵀ.
                    let t_idx = 2 * m;
                    for i in 0..n {
                        for j in 0..n {
                            hess[i * n + j] = hw[i * n + j]
                                + row[i] * hw[t_idx * n + j]
                                + row[j] * hw[i * n + t_idx]
                                + row[i] * row[j] * hw[t_idx * n + t_idx];
                        }
                    }
                }
            }
        }
        Ok(GaugeJet { d, grad, hess })
    }

    /// `Γ(x) = c·d(x)^{2−β}`.
    pub fn gamma_value(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let d = self.gauge(x);
        if d == 0.0 {
            return Err(Error::AtPole(x.to_vec()));
        }
        Ok(self.constant * d.powf(2.0 - self.beta))
    }

    /// `Γ^{1/(2−β)} = c^{1/(2−β)}·d`.
    pub fn gauge_value(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.gauge_scale() * self.gauge(x))
    }

    /// `c^{1/(2−β)}`.
    pub fn gauge_scale(&self) -> f64 {
        self.constant.powf(1.0 / (2.0 - self.beta))
    }

    /// `∇_X Γ^{1/(2−β)}`, a vector of length `N`.
    pub fn gauge_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let jet = self.gauge_jet(x, false)?;
        let frame = &self.frame;
        let n = frame.dim();
        let mut v = vec![0.0; n];
        let k = self.gauge_scale();
        Ok((0..frame.num_fields())
            .map(|i| {
                frame.field_into(i, x, &mut v);
                k * v.iter().zip(&jet.grad).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }

    /// `d^q` as a field with exact derivatives (undefined at the pole).
    pub fn power_field(&self, q: f64) -> ScalarField {
        self.scaled_power_field(1.0, q, format!("d^{q}"))
    }

    /// `Γ` itself as a field.
    pub fn gamma_field(&self) -> ScalarField {
        self.scaled_power_field(self.constant, 2.0 - self.beta, "gamma".to_string())
    }

    fn scaled_power_field(&self, scale: f64, q: f64, name: String) -> ScalarField {
        let me = Arc::new(self.clone());
        let (a, b, c) = (me.clone(), me.clone(), me);
        ScalarField::exact(
            name,
            move |x| scale * a.gauge(x).powf(q),
            move |x, g| match b.gauge_jet(x, false) {
                Ok(j) => {
                    let f = scale * q * j.d.powf(q - 1.0);
                    for (o, v) in g.iter_mut().zip(&j.grad) {
                        *o = f * v;
                    }
                }
                Err(_) => g.iter_mut().for_each(|v| *v = f64::NAN),
            },
            move |x, h| match c.gauge_jet(x, true) {
                Ok(j) => {
                    let n = j.grad.len();
                    let f1 = scale * q * j.d.powf(q - 1.0);
                    let f2 = scale * q * (q - 1.0) * j.d.powf(q - 2.0);
                    for i in 0..n {
                        for k in 0..n {
                            h[i * n + k] = f1 * j.hess[i * n + k] + f2 * j.grad[i] * j.grad[k];
                        }
                    }
                }
                Err(_) => h.iter_mut().for_each(|v| *v = f64::NAN),
            },
        )
    }

    /// `∫_{∂Ω}⟨∇̃(d^{2−β}), dν⟩`, the boundary flux of the unnormalized kernel.
    pub fn boundary_flux(&self, domain: &Domain, scheme: &QuadratureScheme) -> Result<f64> {
        if domain.pole_on_boundary(self)? {
            return Err(Error::PoleOnBoundary);
        }
        let nodes = BoundaryNodes::build(&domain.refined(scheme.refinement), &self.frame, scheme.order, false)?;
        let raw = self.power_field(2.0 - self.beta);
        Ok(nodes.integrate_tilde(&self.frame, &raw, |_| 1.0)?.value)
    }

    /// Returns the solution with `c = −1/I`, `I` the boundary flux of `d^{2−β}`.
    pub fn calibrate_constant(&self, domain: &Domain, scheme: &QuadratureScheme) -> Result<FundamentalSolution> {
        if !domain.contains(&self.pole) {
            return Err(Error::Domain("calibration needs the pole inside the domain".into()));
        }
        let flux = self.boundary_flux(domain, scheme)?;
        if flux.abs() < 1e-12 {
            return Err(Error::Degenerate(format!("boundary flux {flux:e} is too small")));
        }
        self.clone().with_constant(-1.0 / flux)
    }

    /// `𝓛Γ^{(α−2)/(2−β)}` minus the right-hand side of the chain-rule identity,
    /// evaluated through the frame.
    pub fn key_identity_residual(&self, alpha: f64, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let beta = self.beta;
        let c = self.constant;
        let gamma = self.gamma_value(x)?;
        let s = (alpha - 2.0) / (2.0 - beta);
        let lhs_field = self.scaled_power_field(c.powf(s), alpha - 2.0, "key".into());
        let lhs = self.frame.sub_laplacian(&lhs_field, x)?;
        let hg: f64 = self.gauge_gradient(x)?.iter().map(|v| v * v).sum();
        let lgamma = self.frame.sub_laplacian(&self.gamma_field(), x)?;
        let rhs = (beta + alpha - 4.0) * (alpha - 2.0) * gamma.powf((alpha - 4.0) / (2.0 - beta)) * hg
            + s * gamma.powf((beta + alpha - 4.0) / (2.0 - beta)) * lgamma;
        Ok(lhs - rhs)
    }
}

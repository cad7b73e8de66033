//! Divergence formula, Green's identities, the normalization of `Γ` and the
//! representation formula, each as interior side minus boundary side.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{Domain, Shape};
use crate::error::{Error, Result};
use crate::frames::{Frame, ScalarField};
use crate::fundsol::FundamentalSolution;
use crate::quadrature::{
    monte_carlo_oracle, pairwise_sum_par, BoundaryNodes, IntegralResult, InteriorLevels, InteriorNodes,
    QuadratureScheme,
};

/// One identity: `interior − boundary` with the combined error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub interior: f64,
    pub boundary: f64,
    pub residual: f64,
    pub error: f64,
    /// Largest absolute value among the separately integrated terms.
    pub scale: f64,
}

/// Below this scale every term is zero up to rounding and
/// [`Residual::relative`] reports the absolute residual.
pub const NEGLIGIBLE_SCALE: f64 = 1e-12;

impl Residual {
    fn new(interior: (f64, f64), boundary: (f64, f64)) -> Residual {
        Residual {
            interior: interior.0,
            boundary: boundary.0,
            residual: interior.0 - boundary.0,
            error: interior.1 + boundary.1,
            scale: interior.0.abs().max(boundary.0.abs()),
        }
    }

    fn with_scale(mut self, terms: &[f64]) -> Residual {
        self.scale = terms.iter().fold(self.scale, |a, t| a.max(t.abs()));
        self
    }

    /// `|residual| / scale`, or the absolute residual when every term is
    /// negligible.
    pub fn relative(&self) -> f64 {
        if self.scale > NEGLIGIBLE_SCALE {
            self.residual.abs() / self.scale
        } else {
            self.residual.abs()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesReport {
    /// `∫_Ω X_k f_k − ∫_{∂Ω} f_k⟨X_k, dν⟩` for each `k`.
    pub per_field: Vec<Residual>,
    /// The same summed over `k`.
    pub total: Residual,
}

/// Nodes for `Ω` as given (an excised domain keeps its hole), at both levels.
struct Region {
    interior: [InteriorNodes; 2],
    boundary: [BoundaryNodes; 2],
}

impl Region {
    fn new(frame: &Frame, domain: &Domain, scheme: &QuadratureScheme) -> Result<Region> {
        if frame.dim() != domain.dim() {
            return Err(Error::Dimension {
                expected: domain.dim(),
                got: frame.dim(),
            });
        }
        scheme.validate()?;
        let domain = &domain.refined(scheme.refinement);
        let mut patches = domain.boundary_patches();
        if let Some(ex) = domain.excision() {
            patches.extend(domain.excision_patches(ex.eps)?);
        }
        Ok(Region {
            interior: [
                InteriorNodes::build_fixed(domain, scheme, false)?,
                InteriorNodes::build_fixed(domain, scheme, true)?,
            ],
            boundary: [
                BoundaryNodes::from_patches(&patches, frame, scheme.order, false)?,
                BoundaryNodes::from_patches(&patches, frame, scheme.order, true)?,
            ],
        })
    }

    /// Values of several integrands per interior node; returns `(value, error)` per integrand.
    fn interior(&self, count: usize, f: impl Fn(&[f64], &mut [f64]) + Sync) -> Result<Vec<(f64, f64)>> {
        let mut sums = vec![[0.0; 2]; count];
        for l in 0..2 {
            let nodes = &self.interior[l];
            let rows: Vec<Vec<f64>> = (0..nodes.len())
                .into_par_iter()
                .map(|i| {
                    let mut out = vec![0.0; count];
                    f(nodes.point(i), &mut out);
                    out.iter_mut().for_each(|v| *v *= nodes.weights[i]);
                    out
                })
                .collect();
            for (j, s) in sums.iter_mut().enumerate() {
                let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                finite(&col, |i| nodes.point(i))?;
                s[l] = pairwise_sum_par(&col);
            }
        }
        Ok(sums.iter().map(|s| (s[0], (s[0] - s[1]).abs())).collect())
    }

    /// Like [`Region::interior`] on the boundary; `f(node index, point, out)`.
    fn boundary(&self, count: usize, f: impl Fn(&BoundaryNodes, usize, &mut [f64]) + Sync) -> Result<Vec<(f64, f64)>> {
        let mut sums = vec![[0.0; 2]; count];
        for l in 0..2 {
            let nodes = &self.boundary[l];
            let rows: Vec<Vec<f64>> = (0..nodes.len())
                .into_par_iter()
                .map(|i| {
                    let mut out = vec![0.0; count];
                    f(nodes, i, &mut out);
                    out
                })
                .collect();
            for (j, s) in sums.iter_mut().enumerate() {
                let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                finite(&col, |i| nodes.point(i))?;
                s[l] = pairwise_sum_par(&col);
            }
        }
        Ok(sums.iter().map(|s| (s[0], (s[0] - s[1]).abs())).collect())
    }
}

fn finite<'a>(values: &[f64], point: impl Fn(usize) -> &'a [f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            point: point(i).to_vec(),
            value: values[i],
        });
    }
    Ok(())
}

fn grad(u: &ScalarField, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    u.gradient(x, &mut g);
    g
}

fn laplacian(frame: &Frame, u: &ScalarField, x: &[f64]) -> f64 {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n * n];
    u.gradient(x, &mut g);
    u.hessian(x, &mut h);
    frame.at(x).sub_laplacian(&g, &h)
}

/// Divergence formula per field and summed: `∫_Ω X_k f_k dν = ∫_{∂Ω} f_k⟨X_k, dν⟩`.
pub fn stokes_residual(
    frame: &Frame,
    fk: &[ScalarField],
    domain: &Domain,
    scheme: &QuadratureScheme,
) -> Result<StokesReport> {
    let big_n = frame.num_fields();
    if fk.len() != big_n {
        return Err(Error::Dimension {
            expected: big_n,
            got: fk.len(),
        });
    }
    let region = Region::new(frame, domain, scheme)?;
    let n = frame.dim();
    let interior = region.interior(big_n, |x, out| {
        let mut v = vec![0.0; n];
        for (k, o) in out.iter_mut().enumerate() {
            frame.field_into(k, x, &mut v);
            *o = v.iter().zip(grad(&fk[k], x)).map(|(a, b)| a * b).sum();
        }
    })?;
    let boundary = region.boundary(big_n, |nodes, i, out| {
        let x = nodes.point(i);
        let forms = nodes.node_forms(i);
        for (k, o) in out.iter_mut().enumerate() {
            *o = fk[k].value(x) * forms[k];
        }
    })?;
    let per_field: Vec<Residual> = interior
        .iter()
        .zip(&boundary)
        .map(|(a, b)| Residual::new(*a, *b))
        .collect();
    let sum = |v: &[(f64, f64)]| {
        let vals: Vec<f64> = v.iter().map(|p| p.0).collect();
        (pairwise_sum_par(&vals), v.iter().map(|p| p.1).sum::<f64>())
    };
    let scales: Vec<f64> = per_field.iter().map(|r| r.scale).collect();
    let total = Residual::new(sum(&interior), sum(&boundary)).with_scale(&scales);
    Ok(StokesReport { per_field, total })
}

/// Monte-Carlo estimate of `Σ_k ∫_Ω X_k f_k dν`, an oracle independent of the
/// cell quadrature.
pub fn stokes_mc_interior(
    frame: &Frame,
    fk: &[ScalarField],
    domain: &Domain,
    samples: usize,
    seed: u64,
) -> Result<IntegralResult> {
    if fk.len() != frame.num_fields() {
        return Err(Error::Dimension {
            expected: frame.num_fields(),
            got: fk.len(),
        });
    }
    let n = frame.dim();
    monte_carlo_oracle(
        |x| {
            let mut v = vec![0.0; n];
            let mut total = 0.0;
            for (k, f) in fk.iter().enumerate() {
                frame.field_into(k, x, &mut v);
                total += v.iter().zip(grad(f, x)).map(|(a, b)| a * b).sum::<f64>();
            }
            total
        },
        domain,
        samples,
        seed,
    )
}

/// `∫_Ω(Σ_k X_k v X_k u + v𝓛u) dν − ∫_{∂Ω} v⟨∇̃u, dν⟩`.
pub fn green_first_residual(
    frame: &Frame,
    u: &ScalarField,
    v: &ScalarField,
    domain: &Domain,
    scheme: &QuadratureScheme,
) -> Result<Residual> {
    let region = Region::new(frame, domain, scheme)?;
    let big_n = frame.num_fields();
    let interior = region.interior(2, |x, out| {
        let at = frame.at(x);
        let mut hu = vec![0.0; big_n];
        let mut hv = vec![0.0; big_n];
        at.horizontal(&grad(u, x), &mut hu);
        at.horizontal(&grad(v, x), &mut hv);
        out[0] = hu.iter().zip(&hv).map(|(a, b)| a * b).sum();
        out[1] = v.value(x) * laplacian(frame, u, x);
    })?;
    let boundary = region.boundary(1, |nodes, i, out| {
        let x = nodes.point(i);
        out[0] = v.value(x) * nodes.flux_from_gradient(i, &grad(u, x));
    })?;
    let sum = (interior[0].0 + interior[1].0, interior[0].1 + interior[1].1);
    Ok(Residual::new(sum, boundary[0]).with_scale(&[interior[0].0, interior[1].0]))
}

/// `∫_Ω(u𝓛v − v𝓛u) dν − ∫_{∂Ω}(u⟨∇̃v, dν⟩ − v⟨∇̃u, dν⟩)`. The four integrals
/// are formed separately, so swapping `u` and `v` negates the result exactly.
pub fn green_second_residual(
    frame: &Frame,
    u: &ScalarField,
    v: &ScalarField,
    domain: &Domain,
    scheme: &QuadratureScheme,
) -> Result<Residual> {
    let region = Region::new(frame, domain, scheme)?;
    let interior = region.interior(2, |x, out| {
        out[0] = u.value(x) * laplacian(frame, v, x);
        out[1] = v.value(x) * laplacian(frame, u, x);
    })?;
    let boundary = region.boundary(2, |nodes, i, out| {
        let x = nodes.point(i);
        out[0] = u.value(x) * nodes.flux_from_gradient(i, &grad(v, x));
        out[1] = v.value(x) * nodes.flux_from_gradient(i, &grad(u, x));
    })?;
    let diff = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0, a.1 + b.1);
    Ok(
        Residual::new(diff(interior[0], interior[1]), diff(boundary[0], boundary[1])).with_scale(&[
            interior[0].0,
            interior[1].0,
            boundary[0].0,
            boundary[1].0,
        ]),
    )
}

/// `∫_{∂Ω}⟨∇̃Γ, dν⟩`: `−1` for an interior pole, `0` for an exterior one.
pub fn normalization_check(
    fs: &FundamentalSolution,
    domain: &Domain,
    scheme: &QuadratureScheme,
) -> Result<IntegralResult> {
    scheme.validate()?;
    if domain.pole_on_boundary(fs)? {
        return Err(Error::PoleOnBoundary);
    }
    let gamma = fs.gamma_field();
    let domain = &domain.refined(scheme.refinement);
    let main = BoundaryNodes::build(domain, fs.frame(), scheme.order, false)?;
    let low = BoundaryNodes::build(domain, fs.frame(), scheme.order, true)?;
    let a = main.integrate_tilde(fs.frame(), &gamma, |_| 1.0)?;
    let b = low.integrate_tilde(fs.frame(), &gamma, |_| 1.0)?;
    Ok(IntegralResult {
        value: a.value,
        error_estimate: (a.value - b.value).abs(),
        nodes_used: a.nodes_used + b.nodes_used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub value: f64,
    /// `−∫_Ω Γ𝓛u dν`.
    pub volume: f64,
    /// `−∫_{∂Ω} u⟨∇̃Γ, dν⟩`.
    pub double_layer: f64,
    /// `∫_{∂Ω} Γ⟨∇̃u, dν⟩`.
    pub single_layer: f64,
    /// `value − (volume + double_layer + single_layer)`.
    pub residual: f64,
    pub error: f64,
    pub warnings: Vec<String>,
}

/// Representation formula at `x` with `Γ(x, ·)`; `fs` supplies the kind and
/// the constant, its pole is moved to `x`.
pub fn representation_residual(
    fs: &FundamentalSolution,
    u: &ScalarField,
    x: &[f64],
    domain: &Domain,
    scheme: &QuadratureScheme,
) -> Result<Representation> {
    scheme.validate()?;
    let fx = fs.at_pole(x)?;
    if domain.pole_on_boundary(&fx)? {
        return Err(Error::PoleOnBoundary);
    }
    if !domain.contains(x) {
        return Err(Error::Domain("the evaluation point must lie inside the domain".into()));
    }
    let mut warnings = Vec::new();
    let scale = domain.excision_scale(x)?;
    let (_, half) = domain.centre_and_half_widths();
    let size = half.iter().fold(0.0f64, |a, b| a.max(*b));
    if let Shape::Box { .. } = domain.shape() {
        if scale < 0.1 * size {
            let msg = format!("evaluation point is {scale:.3e} from the boundary; quadrature may be inaccurate");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let frame = fx.frame();
    let excised = domain.excise_point(x, scheme.eps0 * scale)?;
    let levels = InteriorLevels::build(&excised, scheme)?;
    let volume = levels.integrate(|y| {
        let g = fx.gamma_value(y).unwrap_or(f64::NAN);
        -g * laplacian(frame, u, y)
    })?;

    let gamma = fx.gamma_field();
    let mut layers = [(0.0, 0.0); 2];
    for (l, slot) in layers.iter_mut().enumerate() {
        let nodes = BoundaryNodes::build(domain, frame, scheme.order, l == 1)?;
        let vals: Vec<(f64, f64)> = (0..nodes.len())
            .into_par_iter()
            .map(|i| {
                let y = nodes.point(i);
                let dbl = -u.value(y) * nodes.flux_from_gradient(i, &grad(&gamma, y));
                let sgl = gamma.value(y) * nodes.flux_from_gradient(i, &grad(u, y));
                (dbl, sgl)
            })
            .collect();
        let a: Vec<f64> = vals.iter().map(|p| p.0).collect();
        let b: Vec<f64> = vals.iter().map(|p| p.1).collect();
        finite(&a, |i| nodes.point(i))?;
        finite(&b, |i| nodes.point(i))?;
        *slot = (pairwise_sum_par(&a), pairwise_sum_par(&b));
    }
    let value = u.value(x);
    let (double_layer, single_layer) = layers[0];
    let error = volume.error_estimate + (layers[0].0 - layers[1].0).abs() + (layers[0].1 - layers[1].1).abs();
    Ok(Representation {
        value,
        volume: volume.value,
        double_layer,
        single_layer,
        residual: value - (volume.value + double_layer + single_layer),
        error,
        warnings,
    })
}

//! Cached nodes, gauge data and per-function samples shared by the checks.

use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::frames::{Frame, ScalarField};
use crate::fundsol::FundamentalSolution;
use crate::quadrature::{layered_estimate, pairwise_sum_par, BoundaryNodes, InteriorNodes, QuadratureScheme};

const POWER_CACHE: usize = 8;

/// `d^p` at every node of both levels.
#[derive(Debug)]
pub(crate) struct Powers {
    pub interior: [Vec<f64>; 2],
    pub boundary: [Vec<f64>; 2],
}

/// Quadrature nodes (main and low level) plus the gauge data every check
/// needs: `ln d` and `|∇_X d|²` inside, `ln d` and `Γ^{-1}⟨∇̃Γ, dν⟩` on `∂Ω`.
#[derive(Debug)]
pub struct Workspace {
    fs: FundamentalSolution,
    domain: Domain,
    scheme: QuadratureScheme,
    pub(crate) interior: [InteriorNodes; 2],
    pub(crate) boundary: [BoundaryNodes; 2],
    pub(crate) ln_d: [Vec<f64>; 2],
    pub(crate) gd2: [Vec<f64>; 2],
    pub(crate) ln_d_bd: [Vec<f64>; 2],
    pub(crate) phi_bd: [Vec<f64>; 2],
    sup_d: f64,
    min_gd: f64,
    powers: Mutex<Vec<(u64, Arc<Powers>)>>,
}

impl Workspace {
    /// Builds the node sets. A pole inside `domain` is excised at
    /// `eps0 × (distance to the boundary)` unless `domain` is already excised.
    pub fn new(fs: &FundamentalSolution, domain: &Domain, scheme: &QuadratureScheme) -> Result<Workspace> {
        scheme.validate()?;
        if domain.pole_on_boundary(fs)? {
            return Err(Error::PoleOnBoundary);
        }
        let domain = match domain.excision() {
            Some(_) => domain.clone(),
            None if domain.contains(fs.pole()) => {
                let scale = domain.excision_scale(fs.pole())?;
                domain.excise_pole(fs, scheme.eps0 * scale)?
            }
            None => domain.clone(),
        };
        let frame = fs.frame();
        let interior = [
            InteriorNodes::build(&domain, scheme, false)?,
            InteriorNodes::build(&domain, scheme, true)?,
        ];
        let boundary = [
            BoundaryNodes::build(&domain, frame, scheme.order, false)?,
            BoundaryNodes::build(&domain, frame, scheme.order, true)?,
        ];
        let mut ln_d = [Vec::new(), Vec::new()];
        let mut gd2 = [Vec::new(), Vec::new()];
        let mut ln_d_bd = [Vec::new(), Vec::new()];
        let mut phi_bd = [Vec::new(), Vec::new()];
        let two_minus_beta = 2.0 - fs.beta();
        for l in 0..2 {
            let nodes = &interior[l];
            let data: Vec<(f64, f64)> = (0..nodes.len())
                .into_par_iter()
                .map(|i| {
                    let x = nodes.point(i);
                    let jet = fs.gauge_jet(x, false)?;
                    let at = frame.at(x);
                    let mut h = vec![0.0; frame.num_fields()];
                    at.horizontal(&jet.grad, &mut h);
                    Ok((jet.d.ln(), h.iter().map(|v| v * v).sum()))
                })
                .collect::<Result<_>>()?;
            ln_d[l] = data.iter().map(|p| p.0).collect();
            gd2[l] = data.iter().map(|p| p.1).collect();

            let nodes = &boundary[l];
            let data: Vec<(f64, f64)> = (0..nodes.len())
                .into_par_iter()
                .map(|i| {
                    let x = nodes.point(i);
                    let jet = fs.gauge_jet(x, false)?;
                    let flux = nodes.flux_from_gradient(i, &jet.grad);
                    Ok((jet.d.ln(), two_minus_beta * flux / jet.d))
                })
                .collect::<Result<_>>()?;
            ln_d_bd[l] = data.iter().map(|p| p.0).collect();
            phi_bd[l] = data.iter().map(|p| p.1).collect();
        }
        let sup_ln = ln_d[0]
            .iter()
            .chain(&ln_d_bd[0])
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let min_gd = gd2[0].iter().fold(f64::INFINITY, |a, &b| a.min(b)).sqrt();
        if ln_d.iter().chain(&ln_d_bd).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("a quadrature node coincides with the pole".into()));
        }
        Ok(Workspace {
            fs: fs.clone(),
            domain,
            scheme: scheme.clone(),
            interior,
            boundary,
            ln_d,
            gd2,
            ln_d_bd,
            phi_bd,
            sup_d: sup_ln.exp(),
            min_gd,
            powers: Mutex::new(Vec::new()),
        })
    }

    pub fn solution(&self) -> &FundamentalSolution {
        &self.fs
    }

    pub fn frame(&self) -> &Frame {
        self.fs.frame()
    }

    /// The domain actually integrated over (excised if the pole is inside).
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn scheme(&self) -> &QuadratureScheme {
        &self.scheme
    }

    /// Largest gauge value `d` over all main-level nodes.
    pub fn sup_gauge(&self) -> f64 {
        self.sup_d
    }

    /// Smallest gauge value `d` over the main-level nodes on the outer boundary.
    pub fn boundary_gauge_min(&self) -> f64 {
        self.ln_d_bd[0].iter().fold(f64::INFINITY, |a, &b| a.min(b)).exp()
    }

    /// Smallest `|∇_X d|` over main-level interior nodes.
    pub fn min_horizontal_gauge(&self) -> f64 {
        self.min_gd
    }

    pub fn interior_nodes(&self) -> usize {
        self.interior[0].len()
    }

    pub fn boundary_nodes(&self) -> usize {
        self.boundary[0].len()
    }

    /// `d^p` on every node, cached by exponent.
    pub(crate) fn powers(&self, p: f64) -> Arc<Powers> {
        let key = p.to_bits();
        {
            let cache = self.powers.lock().expect("power cache poisoned");
            if let Some((_, v)) = cache.iter().find(|(k, _)| *k == key) {
                return v.clone();
            }
        }
        let pow = |ln: &Vec<f64>| -> Vec<f64> { ln.par_iter().map(|l| (p * l).exp()).collect() };
        let value = Arc::new(Powers {
            interior: [pow(&self.ln_d[0]), pow(&self.ln_d[1])],
            boundary: [pow(&self.ln_d_bd[0]), pow(&self.ln_d_bd[1])],
        });
        let mut cache = self.powers.lock().expect("power cache poisoned");
        if cache.len() >= POWER_CACHE {
            cache.remove(0);
        }
        cache.push((key, value.clone()));
        value
    }

    /// Samples `u` on every node. The sub-Laplacian is only evaluated when
    /// `second_order` is set.
    pub fn sample(&self, u: &ScalarField, second_order: bool) -> Result<FieldSamples> {
        let frame = self.fs.frame();
        let n = frame.dim();
        let big_n = frame.num_fields();
        let mut interior: [InteriorSamples; 2] = Default::default();
        let mut boundary: [BoundarySamples; 2] = Default::default();
        for l in 0..2 {
            let nodes = &self.interior[l];
            let data: Vec<(f64, f64, f64)> = (0..nodes.len())
                .into_par_iter()
                .map(|i| {
                    let x = nodes.point(i);
                    let mut g = vec![0.0; n];
                    let mut hess = Vec::new();
                    let v = if second_order {
                        hess = vec![0.0; n * n];
                        u.evaluate_all(x, &mut g, &mut hess)
                    } else {
                        u.gradient(x, &mut g);
                        u.value(x)
                    };
                    let at = frame.at(x);
                    let mut h = vec![0.0; big_n];
                    at.horizontal(&g, &mut h);
                    let lap = if second_order { at.sub_laplacian(&g, &hess) } else { 0.0 };
                    (v * v, h.iter().map(|a| a * a).sum(), lap)
                })
                .collect();
            check_finite(&data, |i| nodes.point(i).to_vec(), u)?;
            interior[l] = InteriorSamples {
                u2: data.iter().map(|p| p.0).collect(),
                gu2: data.iter().map(|p| p.1).collect(),
                lu: if second_order {
                    data.iter().map(|p| p.2).collect()
                } else {
                    Vec::new()
                },
            };

            let nodes = &self.boundary[l];
            let data: Vec<(f64, f64, f64)> = (0..nodes.len())
                .into_par_iter()
                .map(|i| {
                    let x = nodes.point(i);
                    let v = u.value(x);
                    let mut g = vec![0.0; n];
                    u.gradient(x, &mut g);
                    (v * v, v * nodes.flux_from_gradient(i, &g), 0.0)
                })
                .collect();
            check_finite(&data, |i| nodes.point(i).to_vec(), u)?;
            boundary[l] = BoundarySamples {
                u2: data.iter().map(|p| p.0).collect(),
                psi: data.iter().map(|p| p.1).collect(),
            };
        }
        Ok(FieldSamples {
            name: u.name().to_string(),
            compact: u.is_compact(),
            second_order,
            interior,
            boundary,
        })
    }

    /// `∫_Ω f` with excision extrapolation; `f(level, node)`.
    pub(crate) fn interior_integral(&self, f: impl Fn(usize, usize) -> f64 + Sync) -> Result<Integral> {
        let mut layers: [Vec<f64>; 2] = Default::default();
        for (l, slot) in layers.iter_mut().enumerate() {
            let nodes = &self.interior[l];
            let values: Vec<f64> = (0..nodes.len())
                .into_par_iter()
                .map(|i| f(l, i) * nodes.weights[i])
                .collect();
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    point: nodes.point(i).to_vec(),
                    value: values[i],
                });
            }
            *slot = nodes
                .layer_starts
                .windows(2)
                .map(|r| pairwise_sum_par(&values[r[0]..r[1]]))
                .collect();
        }
        let (value, error, warning) = layered_estimate(&layers[0], &layers[1]);
        Ok(Integral { value, error, warning })
    }

    /// `∫_{∂Ω} f` where `f(level, node)` already includes the boundary form.
    pub(crate) fn boundary_integral(&self, f: impl Fn(usize, usize) -> f64 + Sync) -> Result<Integral> {
        let mut sums = [0.0; 2];
        for (l, slot) in sums.iter_mut().enumerate() {
            let nodes = &self.boundary[l];
            let values: Vec<f64> = (0..nodes.len()).into_par_iter().map(|i| f(l, i)).collect();
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    point: nodes.point(i).to_vec(),
                    value: values[i],
                });
            }
            *slot = pairwise_sum_par(&values);
        }
        Ok(Integral {
            value: sums[0],
            error: (sums[0] - sums[1]).abs(),
            warning: None,
        })
    }
}

fn check_finite(data: &[(f64, f64, f64)], point: impl Fn(usize) -> Vec<f64>, u: &ScalarField) -> Result<()> {
    if let Some(i) = data
        .iter()
        .position(|p| !(p.0.is_finite() && p.1.is_finite() && p.2.is_finite()))
    {
        let p = data[i];
        let value = if p.0.is_finite() {
            if p.1.is_finite() {
                p.2
            } else {
                p.1
            }
        } else {
            p.0
        };
        log::error!("test function {} is not finite at a node", u.name());
        return Err(Error::NonFinite { point: point(i), value });
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub(crate) struct InteriorSamples {
    pub u2: Vec<f64>,
    /// `|∇_X u|²`.
    pub gu2: Vec<f64>,
    /// `𝓛u`, empty unless sampled at second order.
    pub lu: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct BoundarySamples {
    pub u2: Vec<f64>,
    /// `u⟨∇̃u, dν⟩` (weighted).
    pub psi: Vec<f64>,
}

/// One test function sampled on a [`Workspace`].
#[derive(Debug, Clone)]
pub struct FieldSamples {
    name: String,
    compact: bool,
    second_order: bool,
    pub(crate) interior: [InteriorSamples; 2],
    pub(crate) boundary: [BoundarySamples; 2],
}

impl FieldSamples {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_compact(&self) -> bool {
        self.compact
    }

    pub fn has_second_order(&self) -> bool {
        self.second_order
    }
}

/// A quadrature value with its error bar.
#[derive(Debug, Clone)]
pub(crate) struct Integral {
    pub value: f64,
    pub error: f64,
    pub warning: Option<String>,
}

impl Integral {
    pub fn scaled(&self, c: f64) -> (f64, f64) {
        (c * self.value, c.abs() * self.error)
    }
}

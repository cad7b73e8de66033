//! Bounded domains: interior cell decompositions, oriented boundary patches,
//! pole excision and the boundary form `⟨X_k, dν⟩`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::frames::{Frame, KinkPlane};
use crate::fundsol::{FundamentalSolution, GaugeKind};
use crate::linalg::{det, gram_det};
use crate::quadrature::rules::{gauss_legendre, sphere_point, SphereRule};

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{d_pole < radius}` for the Korányi gauge on ℍ^m.
    GaugeBall {
        pole: Vec<f64>,
        radius: f64,
        m: usize,
    },
}

/// Where a point sits relative to a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    OnBoundary,
    Outside,
}

/// An interior cell with its own tensor-product rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Euclidean spherical shell `r0 ≤ |x − center| ≤ r1`.
    Shell {
        center: Vec<f64>,
        r0: f64,
        r1: f64,
    },
    /// Gauge shell `r0 ≤ d_pole ≤ r1` on ℍ^m.
    GaugeShell {
        pole: Vec<f64>,
        r0: f64,
        r1: f64,
        m: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatchKind {
    /// The face `x[axis] = value`; parameters are the remaining coordinates in
    /// increasing axis order, ranging over `[lo, hi]`.
    BoxFace {
        axis: usize,
        value: f64,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Round sphere in hyperspherical angles.
    Sphere { center: Vec<f64>, radius: f64 },
    /// Gauge sphere on ℍ^m; parameters `(σ, angles of S^{2m−1})`.
    GaugeSphere { pole: Vec<f64>, radius: f64, m: usize },
}

/// A parametrized piece of boundary with an orientation sign.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPatch {
    pub kind: PatchKind,
    pub orientation: f64,
}

/// Smoothed clustering map for the gauge-sphere latitude: `ψ = (π/2)·σ(3−σ²)/2`.
pub(crate) fn latitude(sigma: f64) -> (f64, f64) {
    let psi = FRAC_PI_2 * sigma * (3.0 - sigma * sigma) / 2.0;
    let dpsi = FRAC_PI_2 * 1.5 * (1.0 - sigma * sigma);
    (psi, dpsi)
}

/// Left translation by `pole` on ℍ^m applied to local coordinates `w`.
pub(crate) fn heisenberg_translate(pole: &[f64], m: usize, w: &[f64], out: &mut [f64]) {
    for i in 0..2 * m {
        out[i] = pole[i] + w[i];
    }
    let mut shift = 0.0;
    for j in 0..m {
        shift += w[j] * pole[m + j] - w[m + j] * pole[j];
    }
    out[2 * m] = pole[2 * m] + w[2 * m] + 2.0 * shift;
}

/// Differential of the left translation applied to a tangent vector.
pub(crate) fn heisenberg_push(pole: &[f64], m: usize, v: &mut [f64]) {
    let mut shift = 0.0;
    for j in 0..m {
        shift += v[j] * pole[m + j] - v[m + j] * pole[j];
    }
    v[2 * m] += 2.0 * shift;
}

/// Local gauge-chart point `(ρ√cos ψ·ω, ρ² sin ψ)`.
pub(crate) fn gauge_chart(rho: f64, psi: f64, omega: &[f64], out: &mut [f64]) {
    let m2 = omega.len();
    let r = rho * psi.cos().max(0.0).sqrt();
    for i in 0..m2 {
        out[i] = r * omega[i];
    }
    out[m2] = rho * rho * psi.sin();
}

impl BoundaryPatch {
    pub fn dim(&self) -> usize {
        match &self.kind {
            PatchKind::BoxFace { lo, .. } => lo.len() + 1,
            PatchKind::Sphere { center, .. } => center.len(),
            PatchKind::GaugeSphere { pole, .. } => pole.len(),
        }
    }

    pub fn flipped(&self) -> BoundaryPatch {
        BoundaryPatch {
            kind: self.kind.clone(),
            orientation: -self.orientation,
        }
    }

    /// Parameter nodes and weights for the bare parameter measure.
    pub fn rule(&self, order: usize, angular: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        match &self.kind {
            PatchKind::BoxFace { lo, hi, .. } => {
                let gl = gauss_legendre(order);
                let mut params = vec![Vec::new()];
                let mut weights = vec![1.0];
                for (a, b) in lo.iter().zip(hi) {
                    let r = gl.mapped(*a, *b);
                    let mut np = Vec::with_capacity(params.len() * r.len());
                    let mut nw = Vec::with_capacity(np.capacity());
                    for (p, w) in params.iter().zip(&weights) {
                        for (x, xw) in r.nodes.iter().zip(&r.weights) {
                            let mut q = p.clone();
                            q.push(*x);
                            np.push(q);
                            nw.push(w * xw);
                        }
                    }
                    params = np;
                    weights = nw;
                }
                (params, weights)
            }
            PatchKind::Sphere { center, .. } => {
                let s = SphereRule::new(center.len(), angular);
                (s.angles, s.parameter_weights)
            }
            PatchKind::GaugeSphere { m, .. } => {
                let gl = gauss_legendre(order);
                let s = SphereRule::new(2 * m, angular);
                let mut params = Vec::with_capacity(gl.len() * s.len());
                let mut weights = Vec::with_capacity(params.capacity());
                for (sg, sw) in gl.nodes.iter().zip(&gl.weights) {
                    for (a, aw) in s.angles.iter().zip(&s.parameter_weights) {
                        let mut p = Vec::with_capacity(a.len() + 1);
                        p.push(*sg);
                        p.extend_from_slice(a);
                        params.push(p);
                        weights.push(sw * aw);
                    }
                }
                (params, weights)
            }
        }
    }

    /// Point `φ(s)` and the `n − 1` tangent rows `∂φ/∂s_i`.
    pub fn map(&self, s: &[f64], point: &mut [f64], tangents: &mut [f64]) {
        let n = self.dim();
        match &self.kind {
            PatchKind::BoxFace { axis, value, .. } => {
                let mut p = 0;
                for i in 0..n {
                    if i == *axis {
                        point[i] = *value;
                    } else {
                        point[i] = s[p];
                        p += 1;
                    }
                }
                tangents.iter_mut().for_each(|v| *v = 0.0);
                let mut row = 0;
                for i in 0..n {
                    if i != *axis {
                        tangents[row * n + i] = 1.0;
                        row += 1;
                    }
                }
            }
            PatchKind::Sphere { center, radius } => {
                let mut omega = vec![0.0; n];
                sphere_point(s, &mut omega, Some(tangents));
                for i in 0..n {
                    point[i] = center[i] + radius * omega[i];
                }
                tangents.iter_mut().for_each(|v| *v *= radius);
            }
            PatchKind::GaugeSphere { pole, radius, m } => {
                let m = *m;
                let m2 = 2 * m;
                let (psi, dpsi) = latitude(s[0]);
                let mut omega = vec![0.0; m2];
                let mut om_t = vec![0.0; (m2 - 1) * m2];
                sphere_point(&s[1..], &mut omega, Some(&mut om_t));
                let mut w = vec![0.0; n];
                gauge_chart(*radius, psi, &omega, &mut w);
                heisenberg_translate(pole, m, &w, point);
                let c = psi.cos().max(f64::MIN_POSITIVE);
                let root = c.sqrt();
                // ∂/∂σ of the chart.
                let row = &mut tangents[0..n];
                for i in 0..m2 {
                    row[i] = -radius * psi.sin() / (2.0 * root) * omega[i] * dpsi;
                }
                row[m2] = radius * radius * psi.cos() * dpsi;
                heisenberg_push(pole, m, row);
                for l in 0..m2 - 1 {
                    let row = &mut tangents[(l + 1) * n..(l + 2) * n];
                    for i in 0..m2 {
                        row[i] = radius * root * om_t[l * m2 + i];
                    }
                    row[m2] = 0.0;
                    heisenberg_push(pole, m, row);
                }
            }
        }
    }

    /// A vector pointing out of the region the patch bounds (before orientation).
    fn outward_probe(&self, point: &[f64]) -> Vec<f64> {
        match &self.kind {
            PatchKind::BoxFace { axis, .. } => {
                let mut v = vec![0.0; point.len()];
                v[*axis] = 1.0;
                v
            }
            PatchKind::Sphere { center, .. } => point.iter().zip(center).map(|(a, b)| a - b).collect(),
            PatchKind::GaugeSphere { pole, m, .. } => {
                let fs = FundamentalSolution::heisenberg(*m, pole.clone()).expect("pole dimension matches");
                fs.gauge_jet(point, false)
                    .map(|j| j.grad)
                    .unwrap_or_else(|_| vec![0.0; point.len()])
            }
        }
    }

    /// Centre of the parameter rectangle (used for the orientation probe).
    fn probe_parameter(&self) -> Vec<f64> {
        match &self.kind {
            PatchKind::BoxFace { lo, hi, .. } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            PatchKind::Sphere { center, .. } => {
                let mut s = vec![FRAC_PI_2; center.len() - 1];
                s[center.len() - 2] = 0.3;
                s
            }
            PatchKind::GaugeSphere { m, .. } => {
                let mut s = vec![FRAC_PI_2; 2 * m];
                s[0] = 0.1;
                s[2 * m - 1] = 0.3;
                s
            }
        }
    }

    /// Creates a patch whose orientation agrees with `outward` (`+1` for the
    /// region's outer normal, `-1` for the inner side).
    pub fn oriented(kind: PatchKind, outward: f64) -> BoundaryPatch {
        let mut patch = BoundaryPatch { kind, orientation: 1.0 };
        let n = patch.dim();
        let s = patch.probe_parameter();
        let mut p = vec![0.0; n];
        let mut t = vec![0.0; (n - 1) * n];
        patch.map(&s, &mut p, &mut t);
        let normal = patch.outward_probe(&p);
        let mut m = normal;
        m.extend_from_slice(&t);
        let sign = det(&m, n).signum();
        patch.orientation = sign * outward;
        patch
    }

    /// `orientation · det[X_k | ∂φ/∂s_1 | … ]` at `φ(s)` for 0-based `k`, with
    /// the point and tangents supplied by the caller.
    pub(crate) fn density_from(&self, field: &[f64], tangents: &[f64]) -> f64 {
        let n = field.len();
        let mut m = Vec::with_capacity(n * n);
        m.extend_from_slice(field);
        m.extend_from_slice(tangents);
        self.orientation * det(&m, n)
    }
}

/// Pullback of `ι_{X_k} dν` to the patch at parameter `s` (1-based `k`).
pub fn boundary_form_density(frame: &Frame, k: usize, patch: &BoundaryPatch, s: &[f64]) -> Result<f64> {
    let (k0, point, tangents) = patch_frame_data(frame, k, patch, s)?;
    let n = frame.dim();
    let mut v = vec![0.0; n];
    frame.field_into(k0, &point, &mut v);
    Ok(patch.density_from(&v, &tangents))
}

/// The same pullback through the wedge of `dx_j` (`j ≤ N`, `j ≠ k`) and the
/// forms `θ_m = dx_m − Σ_l a_{l,m} dx_l` (`m > N`).
pub fn boundary_form_density_wedge(frame: &Frame, k: usize, patch: &BoundaryPatch, s: &[f64]) -> Result<f64> {
    let (k0, point, tangents) = patch_frame_data(frame, k, patch, s)?;
    let n = frame.dim();
    let big_n = frame.num_fields();
    let mut a = vec![0.0; big_n * n];
    frame.vectors_at(&point, &mut a);
    let dim = n - 1;
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        let t = &tangents[i * n..(i + 1) * n];
        let mut col = 0;
        for j in 0..big_n {
            if j != k0 {
                m[i * dim + col] = t[j];
                col += 1;
            }
        }
        for mm in big_n..n {
            let mut v = t[mm];
            for l in 0..big_n {
                v -= a[l * n + mm] * t[l];
            }
            m[i * dim + col] = v;
            col += 1;
        }
    }
    let sign = if k0 % 2 == 0 { 1.0 } else { -1.0 };
    Ok(patch.orientation * sign * det(&m, dim))
}

fn patch_frame_data(frame: &Frame, k: usize, patch: &BoundaryPatch, s: &[f64]) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let n = frame.dim();
    if patch.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            got: patch.dim(),
        });
    }
    if k == 0 || k > frame.num_fields() {
        return Err(Error::FieldIndex {
            index: k,
            count: frame.num_fields(),
        });
    }
    let mut point = vec![0.0; n];
    let mut tangents = vec![0.0; (n - 1) * n];
    patch.map(s, &mut point, &mut tangents);
    let g = gram_det(&tangents, n - 1, n);
    let scale: f64 = tangents.iter().map(|v| v * v).sum::<f64>().max(1e-300);
    if !(g > 1e-14 * scale.powi((n - 1) as i32)) {
        return Err(Error::Degenerate(format!(
            "tangent basis is rank deficient at parameter {s:?}"
        )));
    }
    Ok((k - 1, point, tangents))
}

/// A bounded domain with an optional excised neighbourhood of a pole.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    shape: Shape,
    excision: Option<Excision>,
    kinks: Vec<KinkPlane>,
}

/// A removed neighbourhood `{ρ_pole < eps}` of the pole; `ρ` is the Euclidean
/// distance for balls, the gauge for gauge balls and the max-norm for boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Excision {
    pub pole: Vec<f64>,
    pub eps: f64,
}

fn heisenberg_gauge(pole: &[f64], m: usize, x: &[f64]) -> f64 {
    FundamentalSolution::heisenberg(m, pole.to_vec())
        .expect("pole dimension matches")
        .gauge(x)
}

impl Domain {
    pub fn build_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Domain> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Domain("box corners must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Domain(format!("degenerate box {lo:?} .. {hi:?}")));
        }
        Ok(Domain::from_shape(Shape::Box { lo, hi }))
    }

    pub fn build_euclidean_ball(center: Vec<f64>, radius: f64) -> Result<Domain> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("radius must be positive, got {radius}")));
        }
        if center.len() < 2 {
            return Err(Error::Domain("balls need dimension >= 2".into()));
        }
        Ok(Domain::from_shape(Shape::Ball { center, radius }))
    }

    /// The gauge ball `{d < r}` around the pole of a Heisenberg solution.
    pub fn build_gauge_ball(fs: &FundamentalSolution, radius: f64) -> Result<Domain> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("radius must be positive, got {radius}")));
        }
        match fs.kind() {
            GaugeKind::Heisenberg { m } => Ok(Domain::from_shape(Shape::GaugeBall {
                pole: fs.pole().to_vec(),
                radius,
                m,
            })),
            GaugeKind::Euclidean => Domain::build_euclidean_ball(fs.pole().to_vec(), radius),
        }
    }

    fn from_shape(shape: Shape) -> Domain {
        Domain {
            shape,
            excision: None,
            kinks: Vec::new(),
        }
    }

    /// Hyperplanes where box cells and faces are split (frame kinks).
    pub fn with_kinks(mut self, kinks: &[KinkPlane]) -> Domain {
        self.kinks = kinks.to_vec();
        self
    }

    /// For boxes, adds `parts − 1` equally spaced splitting planes per axis so
    /// that cells and faces are subdivided; other shapes are returned as is.
    pub fn subdivided(&self, parts: usize) -> Domain {
        let mut out = self.clone();
        if let Shape::Box { lo, hi } = &self.shape {
            for axis in 0..lo.len() {
                for k in 1..parts {
                    out.kinks.push(KinkPlane {
                        axis,
                        value: lo[axis] + (hi[axis] - lo[axis]) * k as f64 / parts as f64,
                    });
                }
            }
        }
        out
    }

    /// [`Domain::subdivided`] with `refinement` parts per axis, reduced until
    /// there are at most 4096 cells.
    pub fn refined(&self, refinement: usize) -> Domain {
        let dim = self.dim() as u32;
        let mut parts = refinement.max(1);
        while parts > 1 && parts.pow(dim) > 4096 {
            parts -= 1;
        }
        self.subdivided(parts)
    }

    pub fn kinks(&self) -> &[KinkPlane] {
        &self.kinks
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn excision(&self) -> Option<&Excision> {
        self.excision.as_ref()
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Box { lo, .. } => lo.len(),
            Shape::Ball { center, .. } => center.len(),
            Shape::GaugeBall { pole, .. } => pole.len(),
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Shape::GaugeBall { pole, radius, m } => {
                let m = *m;
                let (r, t) = (*radius, radius * radius);
                let mut lo = vec![0.0; 2 * m + 1];
                let mut hi = vec![0.0; 2 * m + 1];
                for i in 0..2 * m {
                    lo[i] = pole[i] - r;
                    hi[i] = pole[i] + r;
                }
                // The translated t-extent picks up the group-law shear.
                let shear: f64 = (0..m).map(|j| 2.0 * r * (pole[m + j].abs() + pole[j].abs())).sum();
                lo[2 * m] = pole[2 * m] - t - shear;
                hi[2 * m] = pole[2 * m] + t + shear;
                (lo, hi)
            }
        }
    }

    /// Centre and per-axis half extents used to scale test functions.
    pub fn centre_and_half_widths(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::GaugeBall { pole, radius, m } => {
                let mut h = vec![*radius; 2 * m + 1];
                h[2 * m] = radius * radius;
                (pole.clone(), h)
            }
            _ => {
                let (lo, hi) = self.bounding_box();
                (
                    lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect(),
                    lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).collect(),
                )
            }
        }
    }

    fn shape_location(&self, x: &[f64]) -> Location {
        let tol = 1e-12;
        match &self.shape {
            Shape::Box { lo, hi } => {
                let mut on = false;
                for i in 0..lo.len() {
                    let w = hi[i] - lo[i];
                    if x[i] < lo[i] - tol * w || x[i] > hi[i] + tol * w {
                        return Location::Outside;
                    }
                    if (x[i] - lo[i]).abs() <= tol * w || (x[i] - hi[i]).abs() <= tol * w {
                        on = true;
                    }
                }
                if on {
                    Location::OnBoundary
                } else {
                    Location::Inside
                }
            }
            Shape::Ball { center, radius } => {
                let r: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                classify(r, *radius, tol)
            }
            Shape::GaugeBall { pole, radius, m } => classify(heisenberg_gauge(pole, *m, x), *radius, tol),
        }
    }

    fn excision_radius(&self, pole: &[f64], x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Box { .. } => x.iter().zip(pole).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            Shape::Ball { .. } => x.iter().zip(pole).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
            Shape::GaugeBall { m, .. } => heisenberg_gauge(pole, *m, x),
        }
    }

    /// Location of `x` relative to the (possibly excised) domain.
    pub fn locate(&self, x: &[f64]) -> Location {
        let loc = self.shape_location(x);
        if let (Location::Inside, Some(ex)) = (loc, &self.excision) {
            let r = self.excision_radius(&ex.pole, x);
            if r < ex.eps {
                return Location::Outside;
            }
        }
        loc
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.shape_location(x) == Location::Inside
    }

    /// `true` if the solution's pole lies on `∂Ω`.
    pub fn pole_on_boundary(&self, fs: &FundamentalSolution) -> Result<bool> {
        if fs.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: fs.dim(),
            });
        }
        Ok(self.shape_location(fs.pole()) == Location::OnBoundary)
    }

    /// Largest excision radius around `pole` that stays inside the domain.
    pub fn excision_scale(&self, pole: &[f64]) -> Result<f64> {
        match &self.shape {
            Shape::Box { lo, hi } => Ok(lo
                .iter()
                .zip(hi)
                .zip(pole)
                .map(|((a, b), p)| (p - a).min(b - p))
                .fold(f64::INFINITY, f64::min)),
            Shape::Ball { center, radius } => {
                if center.iter().zip(pole).any(|(a, b)| (a - b).abs() > 1e-12 * radius) {
                    return Err(Error::Domain(
                        "a pole inside a ball must sit at its centre; use a box for off-centre poles".into(),
                    ));
                }
                Ok(*radius)
            }
            Shape::GaugeBall { pole: p, radius, .. } => {
                if p.iter().zip(pole).any(|(a, b)| (a - b).abs() > 1e-12 * radius.max(1.0)) {
                    return Err(Error::Domain("a pole inside a gauge ball must be its centre".into()));
                }
                Ok(*radius)
            }
        }
    }

    /// Removes `{ρ_pole < eps}`; see [`Excision`].
    pub fn excise_pole(&self, fs: &FundamentalSolution, eps: f64) -> Result<Domain> {
        self.excise_point(fs.pole(), eps)
    }

    pub fn excise_point(&self, pole: &[f64], eps: f64) -> Result<Domain> {
        if pole.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: pole.len(),
            });
        }
        match self.shape_location(pole) {
            Location::Outside => return Err(Error::Domain("pole lies outside the domain".into())),
            Location::OnBoundary => return Err(Error::PoleOnBoundary),
            Location::Inside => {}
        }
        let scale = self.excision_scale(pole)?;
        if !(eps > 0.0 && eps < scale) {
            return Err(Error::Domain(format!("excision radius {eps} must lie in (0, {scale})")));
        }
        let mut d = self.clone();
        d.excision = Some(Excision {
            pole: pole.to_vec(),
            eps,
        });
        Ok(d)
    }

    /// The outer boundary `∂Ω`, outward oriented.
    pub fn boundary_patches(&self) -> Vec<BoundaryPatch> {
        match &self.shape {
            Shape::Box { lo, hi } => {
                let n = lo.len();
                let mut out = Vec::new();
                for axis in 0..n {
                    for (value, sign) in [(lo[axis], -1.0), (hi[axis], 1.0)] {
                        let plo: Vec<f64> = (0..n).filter(|&i| i != axis).map(|i| lo[i]).collect();
                        let phi: Vec<f64> = (0..n).filter(|&i| i != axis).map(|i| hi[i]).collect();
                        let axes: Vec<usize> = (0..n).filter(|&i| i != axis).collect();
                        for (a, b) in split_box(&plo, &phi, &self.kinks, &axes) {
                            out.push(BoundaryPatch::oriented(
                                PatchKind::BoxFace {
                                    axis,
                                    value,
                                    lo: a,
                                    hi: b,
                                },
                                sign,
                            ));
                        }
                    }
                }
                out
            }
            Shape::Ball { center, radius } => vec![BoundaryPatch::oriented(
                PatchKind::Sphere {
                    center: center.clone(),
                    radius: *radius,
                },
                1.0,
            )],
            Shape::GaugeBall { pole, radius, m } => vec![BoundaryPatch::oriented(
                PatchKind::GaugeSphere {
                    pole: pole.clone(),
                    radius: *radius,
                    m: *m,
                },
                1.0,
            )],
        }
    }

    /// Boundary of the excised neighbourhood at radius `eps`, oriented as part
    /// of `∂(Ω \ B_eps)` (normals point toward the pole).
    pub fn excision_patches(&self, eps: f64) -> Result<Vec<BoundaryPatch>> {
        let ex = self
            .excision
            .as_ref()
            .ok_or_else(|| Error::Domain("domain has no excised pole".into()))?;
        let pole = &ex.pole;
        Ok(match &self.shape {
            Shape::Box { .. } => {
                let lo: Vec<f64> = pole.iter().map(|p| p - eps).collect();
                let hi: Vec<f64> = pole.iter().map(|p| p + eps).collect();
                let inner = Domain::build_box(lo, hi)?.with_kinks(&self.kinks);
                inner.boundary_patches().iter().map(|p| p.flipped()).collect()
            }
            Shape::Ball { .. } => vec![BoundaryPatch::oriented(
                PatchKind::Sphere {
                    center: pole.clone(),
                    radius: eps,
                },
                -1.0,
            )],
            Shape::GaugeBall { m, .. } => vec![BoundaryPatch::oriented(
                PatchKind::GaugeSphere {
                    pole: pole.clone(),
                    radius: eps,
                    m: *m,
                },
                -1.0,
            )],
        })
    }

    /// Interior cells grouped in layers: layer 0 is the domain minus the
    /// `eps` neighbourhood, layer `j ≥ 1` the ring between `eps·2^{-j}` and
    /// `eps·2^{-(j-1)}`. Layer 0 is graded into `refinement` geometric rings.
    /// Without an excision there is a single layer.
    pub fn cell_layers(&self, refinement: usize, extra_levels: usize) -> Vec<Vec<Cell>> {
        let Some(ex) = &self.excision else {
            return vec![self.bulk_cells_without_pole()];
        };
        let levels = refinement.max(1);
        let mut layers = Vec::with_capacity(extra_levels + 1);
        layers.push(self.ring_cells(&ex.pole, ex.eps, None, levels));
        let mut outer = ex.eps;
        for _ in 0..extra_levels {
            let inner = outer / 2.0;
            layers.push(self.ring_cells(&ex.pole, inner, Some(outer), 1));
            outer = inner;
        }
        layers
    }

    fn bulk_cells_without_pole(&self) -> Vec<Cell> {
        match &self.shape {
            Shape::Box { lo, hi } => {
                let axes: Vec<usize> = (0..lo.len()).collect();
                split_box(lo, hi, &self.kinks, &axes)
                    .into_iter()
                    .map(|(lo, hi)| Cell::Box { lo, hi })
                    .collect()
            }
            Shape::Ball { center, radius } => vec![
                Cell::Shell {
                    center: center.clone(),
                    r0: 0.0,
                    r1: radius / 2.0,
                },
                Cell::Shell {
                    center: center.clone(),
                    r0: radius / 2.0,
                    r1: *radius,
                },
            ],
            Shape::GaugeBall { pole, radius, m } => vec![
                Cell::GaugeShell {
                    pole: pole.clone(),
                    r0: 0.0,
                    r1: radius / 2.0,
                    m: *m,
                },
                Cell::GaugeShell {
                    pole: pole.clone(),
                    r0: radius / 2.0,
                    r1: *radius,
                    m: *m,
                },
            ],
        }
    }

    /// Cells covering `{inner ≤ ρ ≤ outer}` (outer = domain boundary when
    /// `None`), graded geometrically into `levels` rings.
    fn ring_cells(&self, pole: &[f64], inner: f64, outer: Option<f64>, levels: usize) -> Vec<Cell> {
        match &self.shape {
            Shape::Box { lo, hi } => {
                let far = outer.unwrap_or_else(|| {
                    lo.iter()
                        .zip(hi)
                        .zip(pole)
                        .map(|((a, b), p)| (p - a).max(b - p))
                        .fold(0.0, f64::max)
                });
                let radii = geometric(inner, far, levels);
                let mut cells = Vec::new();
                for w in radii.windows(2) {
                    for (a, b) in cube_ring(pole, w[0], w[1], lo, hi) {
                        let axes: Vec<usize> = (0..a.len()).collect();
                        for (c, d) in split_box(&a, &b, &self.kinks, &axes) {
                            cells.push(Cell::Box { lo: c, hi: d });
                        }
                    }
                }
                cells
            }
            Shape::Ball { radius, .. } => geometric(inner, outer.unwrap_or(*radius), levels)
                .windows(2)
                .map(|w| Cell::Shell {
                    center: pole.to_vec(),
                    r0: w[0],
                    r1: w[1],
                })
                .collect(),
            Shape::GaugeBall { radius, m, .. } => geometric(inner, outer.unwrap_or(*radius), levels)
                .windows(2)
                .map(|w| Cell::GaugeShell {
                    pole: pole.to_vec(),
                    r0: w[0],
                    r1: w[1],
                    m: *m,
                })
                .collect(),
        }
    }
}

fn classify(r: f64, radius: f64, tol: f64) -> Location {
    if (r - radius).abs() <= tol * radius {
        Location::OnBoundary
    } else if r < radius {
        Location::Inside
    } else {
        Location::Outside
    }
}

fn geometric(a: f64, b: f64, levels: usize) -> Vec<f64> {
    let ratio = (b / a).powf(1.0 / levels as f64);
    let mut v: Vec<f64> = (0..=levels).map(|i| a * ratio.powi(i as i32)).collect();
    v[0] = a;
    v[levels] = b;
    v
}

/// Boxes tiling `{s0 ≤ |x − p|_∞ ≤ s1} ∩ [lo, hi]`.
fn cube_ring(p: &[f64], s0: f64, s1: f64, lo: &[f64], hi: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = p.len();
    let mut out = Vec::new();
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut all_middle = true;
        let mut empty = false;
        for i in 0..n {
            let digit = c % 3;
            c /= 3;
            let (x0, x1) = match digit {
                0 => (p[i] - s1, p[i] - s0),
                1 => (p[i] - s0, p[i] + s0),
                _ => (p[i] + s0, p[i] + s1),
            };
            if digit != 1 {
                all_middle = false;
            }
            a[i] = x0.max(lo[i]);
            b[i] = x1.min(hi[i]);
            if b[i] - a[i] <= 1e-14 * (hi[i] - lo[i]) {
                empty = true;
            }
        }
        if !all_middle && !empty {
            out.push((a, b));
        }
    }
    out
}

/// Splits a box (whose coordinates correspond to `axes`) at kink planes.
fn split_box(lo: &[f64], hi: &[f64], kinks: &[KinkPlane], axes: &[usize]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut boxes = vec![(lo.to_vec(), hi.to_vec())];
    for k in kinks {
        let Some(pos) = axes.iter().position(|&a| a == k.axis) else {
            continue;
        };
        let mut next = Vec::with_capacity(boxes.len() * 2);
        for (a, b) in boxes {
            if a[pos] < k.value && k.value < b[pos] {
                let mut b1 = b.clone();
                b1[pos] = k.value;
                let mut a2 = a.clone();
                a2[pos] = k.value;
                next.push((a, b1));
                next.push((a2, b));
            } else {
                next.push((a, b));
            }
        }
        boxes = next;
    }
    boxes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_patch_is_outward() {
        let d = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
        let p = &d.boundary_patches()[0];
        let f = Frame::euclidean(3);
        // At θ=π/2, φ≈0 the point is near (0, 1, 0)... use the density sign.
        let s = [1.2, 0.4];
        let mut x = [0.0; 3];
        let mut t = [0.0; 6];
        p.map(&s, &mut x, &mut t);
        let mut total = 0.0;
        for k in 1..=3 {
            total += x[k - 1] * boundary_form_density(&f, k, p, &s).unwrap();
        }
        assert!(total > 0.0);
    }

    #[test]
    fn cube_ring_tiles_volume() {
        let lo = vec![0.0; 3];
        let hi = vec![1.0; 3];
        let p = vec![0.4, 0.5, 0.6];
        let ring = cube_ring(&p, 0.1, 0.7, &lo, &hi);
        let vol: f64 = ring
            .iter()
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| y - x).product::<f64>())
            .sum();
        assert!((vol - (1.0 - 0.008)).abs() < 1e-12);
    }

    #[test]
    fn excision_validation() {
        let fs = FundamentalSolution::euclidean(3, vec![0.0; 3]).unwrap();
        let d = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
        assert!(d.excise_pole(&fs, 2.0).is_err());
        assert!(d.excise_pole(&fs, 0.1).is_ok());
        let out = FundamentalSolution::euclidean(3, vec![3.0, 0.0, 0.0]).unwrap();
        assert!(d.excise_pole(&out, 0.1).is_err());
        let on = FundamentalSolution::euclidean(3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!(d.pole_on_boundary(&on).unwrap());
        assert!(Domain::build_box(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Domain::build_euclidean_ball(vec![0.0; 3], 0.0).is_err());
    }

    #[test]
    fn kink_split_faces() {
        let d = Domain::build_box(vec![-1.0; 3], vec![1.0; 3])
            .unwrap()
            .with_kinks(Frame::nonsmooth_r3().kink_planes());
        // Faces normal to x3 are cut in four, the others in two.
        assert_eq!(d.boundary_patches().len(), 2 * 4 + 4 * 2);
    }
}

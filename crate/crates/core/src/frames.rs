//! Triangular vector-field frames `X_k = ∂_k + Σ_{m>N} a_{k,m}(x) ∂_m` and the
//! operators built from them.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};

/// A component function of a vector field.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Const(f64),
    /// `constant + Σ c_i x_i`.
    Affine {
        constant: f64,
        terms: Vec<(usize, f64)>,
    },
    Expr(Expr),
}

impl Coefficient {
    pub fn zero() -> Coefficient {
        Coefficient::Const(0.0)
    }

    pub fn parse(src: &str) -> Result<Coefficient> {
        Ok(Coefficient::Expr(parse_expression(src)?))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::Affine { constant, terms } => terms.iter().fold(*constant, |acc, (i, c)| acc + c * x[*i]),
            Coefficient::Expr(e) => e.value(x),
        }
    }

    /// Writes `∇a(x)` into `out`; returns `true` if a kink forced a perturbation.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        match self {
            Coefficient::Const(_) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                false
            }
            Coefficient::Affine { terms, .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for (i, c) in terms {
                    out[*i] += c;
                }
                false
            }
            Coefficient::Expr(e) => e.gradient(x, out),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Const(_))
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Coefficient::Const(_) => None,
            Coefficient::Affine { terms, .. } => terms.iter().map(|t| t.0).max(),
            Coefficient::Expr(e) => e.arity().checked_sub(1),
        }
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Const(c) => write!(f, "{c}"),
            Coefficient::Affine { constant, terms } => {
                write!(f, "{constant}")?;
                for (i, c) in terms {
                    write!(f, " + {c}*x{}", i + 1)?;
                }
                Ok(())
            }
            Coefficient::Expr(e) => write!(f, "{}", e.source()),
        }
    }
}

/// A hyperplane `x[axis] = value` across which frame coefficients are not smooth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinkPlane {
    pub axis: usize,
    pub value: f64,
}

/// An immutable family of `N` vector fields on `ℝⁿ`.
#[derive(Debug, Clone)]
pub struct Frame {
    name: String,
    n: usize,
    fields: usize,
    /// Row-major `N × n` components.
    comps: Vec<Coefficient>,
    kinks: Vec<KinkPlane>,
}

/// Frame data frozen at a point: the field vectors and their self-derivatives.
#[derive(Debug, Clone)]
pub struct FrameAt {
    pub n: usize,
    pub fields: usize,
    /// `N × n`, row `k` holds the components of `X_k(x)`.
    pub vectors: Vec<f64>,
    /// `N × n`, row `k` holds `X_k` applied to the components of `X_k`.
    pub drift: Vec<f64>,
    pub kink: bool,
}

impl FrameAt {
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// `(X_1 u, …, X_N u)` from the Euclidean gradient of `u`.
    pub fn horizontal(&self, grad: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.fields) {
            *o = dot(self.vector(k), grad);
        }
    }

    /// `Σ_k X_k X_k u` from the Euclidean gradient and row-major Hessian.
    pub fn sub_laplacian(&self, grad: &[f64], hess: &[f64]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for k in 0..self.fields {
            let v = self.vector(k);
            let mut quad = 0.0;
            for i in 0..n {
                if v[i] == 0.0 {
                    continue;
                }
                let row = &hess[i * n..(i + 1) * n];
                quad += v[i] * dot(row, v);
            }
            total += quad + dot(&self.drift[k * n..(k + 1) * n], grad);
        }
        total
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of [`Frame::validate_triangular_form`].
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularReport {
    pub passed: bool,
    pub max_violation: f64,
    pub samples: usize,
}

impl Frame {
    /// Builds `X_k = ∂_k + Σ_{m>N} a_{k,m} ∂_m` from `tail[k][m - N]`.
    pub fn triangular(name: impl Into<String>, n: usize, fields: usize, tail: Vec<Vec<Coefficient>>) -> Result<Frame> {
        if fields == 0 || fields > n {
            return Err(Error::Parameters(format!(
                "frame needs 1 <= N <= n, got N = {fields}, n = {n}"
            )));
        }
        if tail.len() != fields {
            return Err(Error::Dimension {
                expected: fields,
                got: tail.len(),
            });
        }
        let mut comps = Vec::with_capacity(fields * n);
        for (k, row) in tail.into_iter().enumerate() {
            if row.len() != n - fields {
                return Err(Error::Dimension {
                    expected: n - fields,
                    got: row.len(),
                });
            }
            for j in 0..fields {
                comps.push(Coefficient::Const(if j == k { 1.0 } else { 0.0 }));
            }
            for c in row {
                if let Some(i) = c.max_index() {
                    if i >= n {
                        return Err(Error::Parameters(format!(
                            "coefficient '{c}' references x{} but n = {n}",
                            i + 1
                        )));
                    }
                }
                comps.push(c);
            }
        }
        Ok(Frame {
            name: name.into(),
            n,
            fields,
            comps,
            kinks: Vec::new(),
        })
    }

    /// Builds a frame from arbitrary `N × n` components without checking the
    /// triangular shape. Meant for negative controls.
    pub fn from_components_unchecked(
        name: impl Into<String>,
        n: usize,
        fields: usize,
        comps: Vec<Coefficient>,
    ) -> Frame {
        assert_eq!(comps.len(), n * fields);
        Frame {
            name: name.into(),
            n,
            fields,
            comps,
            kinks: Vec::new(),
        }
    }

    pub fn euclidean(n: usize) -> Frame {
        Frame::triangular(format!("euclidean{n}"), n, n, vec![Vec::new(); n]).expect("euclidean frame is well formed")
    }

    /// ℍ^m in coordinates `(x_1..x_m, y_1..y_m, t)` with `X_j = ∂_{x_j} + 2y_j ∂_t`
    /// and `Y_j = ∂_{y_j} − 2x_j ∂_t`.
    pub fn heisenberg(m: usize) -> Frame {
        assert!(m >= 1);
        let mut tail = Vec::with_capacity(2 * m);
        for j in 0..m {
            tail.push(vec![Coefficient::Affine {
                constant: 0.0,
                terms: vec![(m + j, 2.0)],
            }]);
        }
        for j in 0..m {
            tail.push(vec![Coefficient::Affine {
                constant: 0.0,
                terms: vec![(j, -2.0)],
            }]);
        }
        Frame::triangular(format!("heisenberg{m}"), 2 * m + 1, 2 * m, tail).expect("heisenberg frame is well formed")
    }

    /// The ℝ³ frame `X_1 = ∂_1 + x_2(1+|x_2|)∂_3`, `X_2 = ∂_2 − x_1(1+|x_1|)∂_3`.
    pub fn nonsmooth_r3() -> Frame {
        let a = Coefficient::parse("x2*(1+abs(x2))").expect("valid expression");
        let b = Coefficient::parse("-x1*(1+abs(x1))").expect("valid expression");
        Frame::triangular("nonsmooth_r3", 3, 2, vec![vec![a], vec![b]])
            .expect("frame is well formed")
            .with_kinks(vec![
                KinkPlane { axis: 0, value: 0.0 },
                KinkPlane { axis: 1, value: 0.0 },
            ])
    }

    pub fn with_kinks(mut self, kinks: Vec<KinkPlane>) -> Frame {
        self.kinks = kinks;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_fields(&self) -> usize {
        self.fields
    }

    pub fn kink_planes(&self) -> &[KinkPlane] {
        &self.kinks
    }

    /// Component `j` (0-based) of field `k` (0-based).
    pub fn coefficient(&self, k: usize, j: usize) -> &Coefficient {
        &self.comps[k * self.n + j]
    }

    pub fn is_euclidean(&self) -> bool {
        self.fields == self.n
            && (0..self.fields).all(|k| {
                (0..self.n).all(
                    |j| matches!(self.coefficient(k, j), Coefficient::Const(c) if *c == if j == k { 1.0 } else { 0.0 }),
                )
            })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.fields {
            return Err(Error::FieldIndex {
                index: k,
                count: self.fields,
            });
        }
        Ok(k - 1)
    }

    /// Writes the components of field `k` (0-based) at `x` into `out`.
    pub fn field_into(&self, k: usize, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.comps[k * self.n + j].value(x);
        }
    }

    /// Field vectors only, no derivative information.
    pub fn vectors_at(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..self.fields {
            self.field_into(k, x, &mut out[k * self.n..(k + 1) * self.n]);
        }
    }

    /// Field vectors plus `X_k` applied to the components of `X_k`.
    pub fn at(&self, x: &[f64]) -> FrameAt {
        let n = self.n;
        let mut vectors = vec![0.0; self.fields * n];
        self.vectors_at(x, &mut vectors);
        let mut drift = vec![0.0; self.fields * n];
        let mut grad = vec![0.0; n];
        let mut kink = false;
        for k in 0..self.fields {
            let v = &vectors[k * n..(k + 1) * n];
            for j in 0..n {
                let c = &self.comps[k * n + j];
                if c.is_constant() {
                    continue;
                }
                kink |= c.gradient(x, &mut grad);
                drift[k * n + j] = dot(v, &grad);
            }
        }
        FrameAt {
            n,
            fields: self.fields,
            vectors,
            drift,
            kink,
        }
    }

    /// `X_k u(x)` for 1-based `k`.
    pub fn directional_derivative(&self, k: usize, u: &ScalarField, x: &[f64]) -> Result<f64> {
        let k0 = self.check_index(k)?;
        self.check_point(x)?;
        let mut grad = vec![0.0; self.n];
        u.gradient(x, &mut grad);
        let mut v = vec![0.0; self.n];
        self.field_into(k0, x, &mut v);
        Ok(dot(&v, &grad))
    }

    /// `∇_X u(x) = (X_1 u, …, X_N u)`.
    pub fn horizontal_gradient(&self, u: &ScalarField, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut grad = vec![0.0; self.n];
        u.gradient(x, &mut grad);
        let mut vectors = vec![0.0; self.fields * self.n];
        self.vectors_at(x, &mut vectors);
        Ok((0..self.fields)
            .map(|k| dot(&vectors[k * self.n..(k + 1) * self.n], &grad))
            .collect())
    }

    /// `𝓛u(x) = Σ_k X_k(X_k u)(x)`.
    pub fn sub_laplacian(&self, u: &ScalarField, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let n = self.n;
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        u.gradient(x, &mut grad);
        u.hessian(x, &mut hess);
        Ok(self.at(x).sub_laplacian(&grad, &hess))
    }

    /// `Σ_k (X_k u)(X_k v)(x)`.
    pub fn tilde_pairing(&self, u: &ScalarField, v: &ScalarField, x: &[f64]) -> Result<f64> {
        let gu = self.horizontal_gradient(u, x)?;
        let gv = self.horizontal_gradient(v, x)?;
        Ok(dot(&gu, &gv))
    }

    /// Coefficients of `[X_i, X_j]` at `x` for 1-based `i`, `j`.
    pub fn commutator(&self, i: usize, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        let i0 = self.check_index(i)?;
        let j0 = self.check_index(j)?;
        self.check_point(x)?;
        let n = self.n;
        let mut vi = vec![0.0; n];
        let mut vj = vec![0.0; n];
        self.field_into(i0, x, &mut vi);
        self.field_into(j0, x, &mut vj);
        let mut grad = vec![0.0; n];
        let mut out = vec![0.0; n];
        for (l, o) in out.iter_mut().enumerate() {
            // X_i of the l-th component of X_j, minus the reverse.
            let cj = &self.comps[j0 * n + l];
            let ci = &self.comps[i0 * n + l];
            let mut value = 0.0;
            if !cj.is_constant() {
                cj.gradient(x, &mut grad);
                value += dot(&vi, &grad);
            }
            if !ci.is_constant() {
                ci.gradient(x, &mut grad);
                value -= dot(&vj, &grad);
            }
            *o = value;
        }
        Ok(out)
    }

    /// Checks that the first `N` components of `X_k` equal `δ_{k·}` at every sample.
    pub fn validate_triangular_form(&self, samples: &[Vec<f64>]) -> Result<TriangularReport> {
        if samples.is_empty() {
            return Err(Error::Parameters("no sample points given".into()));
        }
        let mut worst: f64 = 0.0;
        let mut v = vec![0.0; self.n];
        for x in samples {
            self.check_point(x)?;
            for k in 0..self.fields {
                self.field_into(k, x, &mut v);
                for (j, c) in v.iter().enumerate().take(self.fields) {
                    let target = if j == k { 1.0 } else { 0.0 };
                    worst = worst.max((c - target).abs());
                }
            }
        }
        Ok(TriangularReport {
            passed: worst == 0.0,
            max_violation: worst,
            samples: samples.len(),
        })
    }
}

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Writes a gradient (length `n`) or a row-major Hessian (`n * n`) into the buffer.
pub type DerivFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Value, gradient and Hessian in one pass.
pub type JetFn = Arc<dyn Fn(&[f64], &mut [f64], &mut [f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DerivativeMode {
    Exact {
        gradient: DerivFn,
        hessian: Option<DerivFn>,
    },
    /// Central differences; `step` overrides the default relative step.
    Numeric { step: Option<f64> },
}

impl fmt::Debug for DerivativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DerivativeMode::Exact { hessian, .. } => {
                f.debug_struct("Exact").field("hessian", &hessian.is_some()).finish()
            }
            DerivativeMode::Numeric { step } => f.debug_struct("Numeric").field("step", step).finish(),
        }
    }
}

/// A test function with value and derivatives.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    value: ValueFn,
    mode: DerivativeMode,
    jet: Option<JetFn>,
    compact: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("mode", &self.mode)
            .field("compact", &self.compact)
            .finish()
    }
}

fn first_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

fn second_step(x: f64) -> f64 {
    f64::EPSILON.powf(0.25) * x.abs().max(1.0)
}

impl ScalarField {
    pub fn exact(
        name: impl Into<String>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> ScalarField {
        ScalarField {
            name: name.into(),
            value: Arc::new(value),
            mode: DerivativeMode::Exact {
                gradient: Arc::new(gradient),
                hessian: Some(Arc::new(hessian)),
            },
            jet: None,
            compact: false,
        }
    }

    pub fn exact_first_order(
        name: impl Into<String>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> ScalarField {
        ScalarField {
            name: name.into(),
            value: Arc::new(value),
            mode: DerivativeMode::Exact {
                gradient: Arc::new(gradient),
                hessian: None,
            },
            jet: None,
            compact: false,
        }
    }

    pub fn numeric(name: impl Into<String>, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> ScalarField {
        ScalarField {
            name: name.into(),
            value: Arc::new(value),
            mode: DerivativeMode::Numeric { step: None },
            jet: None,
            compact: false,
        }
    }

    /// A field from the coefficient expression language, with symbolic derivatives.
    pub fn from_expression(name: impl Into<String>, src: &str) -> Result<ScalarField> {
        let e = parse_expression(src)?;
        let (e1, e2, e3) = (e.clone(), e.clone(), e);
        Ok(ScalarField::exact(
            name,
            move |x| e1.value(x),
            move |x, g| {
                e2.gradient(x, g);
            },
            move |x, h| {
                e3.hessian(x, h);
            },
        ))
    }

    /// The same function with derivatives replaced by central differences.
    pub fn to_numeric(&self, step: Option<f64>) -> ScalarField {
        ScalarField {
            name: format!("{}~fd", self.name),
            value: self.value.clone(),
            mode: DerivativeMode::Numeric { step },
            jet: None,
            compact: self.compact,
        }
    }

    /// A field defined by a single jet function.
    pub fn from_jet(
        name: impl Into<String>,
        jet: impl Fn(&[f64], &mut [f64], &mut [f64]) -> f64 + Send + Sync + 'static,
    ) -> ScalarField {
        let jet: JetFn = Arc::new(jet);
        let (j1, j2, j3) = (jet.clone(), jet.clone(), jet.clone());
        ScalarField {
            name: name.into(),
            value: Arc::new(move |x| {
                let n = x.len();
                j1(x, &mut vec![0.0; n], &mut vec![0.0; n * n])
            }),
            mode: DerivativeMode::Exact {
                gradient: Arc::new(move |x, g| {
                    let n = x.len();
                    j2(x, g, &mut vec![0.0; n * n]);
                }),
                hessian: Some(Arc::new(move |x, h| {
                    let n = x.len();
                    j3(x, &mut vec![0.0; n], h);
                })),
            },
            jet: Some(jet),
            compact: false,
        }
    }

    /// Value, gradient and Hessian together.
    pub fn evaluate_all(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        if let Some(j) = &self.jet {
            return j(x, grad, hess);
        }
        self.gradient(x, grad);
        self.hessian(x, hess);
        self.value(x)
    }

    /// Marks the field as vanishing in a neighbourhood of the domain boundary.
    pub fn with_compact_support(mut self, compact: bool) -> ScalarField {
        self.compact = compact;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> ScalarField {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_compact(&self) -> bool {
        self.compact
    }

    pub fn mode(&self) -> &DerivativeMode {
        &self.mode
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.mode {
            DerivativeMode::Exact { gradient, .. } => gradient(x, out),
            DerivativeMode::Numeric { step } => self.numeric_gradient(x, *step, out),
        }
    }

    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        match &self.mode {
            DerivativeMode::Exact { hessian: Some(h), .. } => h(x, out),
            DerivativeMode::Exact {
                gradient,
                hessian: None,
            } => {
                let n = x.len();
                let mut p = x.to_vec();
                let mut gp = vec![0.0; n];
                let mut gm = vec![0.0; n];
                for j in 0..n {
                    let h = first_step(x[j]);
                    p[j] = x[j] + h;
                    gradient(&p, &mut gp);
                    p[j] = x[j] - h;
                    gradient(&p, &mut gm);
                    p[j] = x[j];
                    for i in 0..n {
                        out[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
                    }
                }
                symmetrize(out, n);
            }
            DerivativeMode::Numeric { step } => self.numeric_hessian(x, *step, out),
        }
    }

    /// Central-difference gradient regardless of the derivative mode.
    pub fn numeric_gradient(&self, x: &[f64], step: Option<f64>, out: &mut [f64]) {
        let mut p = x.to_vec();
        for j in 0..x.len() {
            let h = step.unwrap_or_else(|| first_step(x[j]));
            p[j] = x[j] + h;
            let fp = self.value(&p);
            p[j] = x[j] - h;
            let fm = self.value(&p);
            p[j] = x[j];
            out[j] = (fp - fm) / (2.0 * h);
        }
    }

    /// Central-difference Hessian regardless of the derivative mode.
    pub fn numeric_hessian(&self, x: &[f64], step: Option<f64>, out: &mut [f64]) {
        let n = x.len();
        let f0 = self.value(x);
        let mut p = x.to_vec();
        let hs: Vec<f64> = x.iter().map(|v| step.unwrap_or_else(|| second_step(*v))).collect();
        for i in 0..n {
            let hi = hs[i];
            p[i] = x[i] + hi;
            let fp = self.value(&p);
            p[i] = x[i] - hi;
            let fm = self.value(&p);
            p[i] = x[i];
            out[i * n + i] = (fp - 2.0 * f0 + fm) / (hi * hi);
            for j in i + 1..n {
                let hj = hs[j];
                let mut corner = |si: f64, sj: f64| {
                    p[i] = x[i] + si * hi;
                    p[j] = x[j] + sj * hj;
                    let v = self.value(&p);
                    p[i] = x[i];
                    p[j] = x[j];
                    v
                };
                let v =
                    (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * hi * hj);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
    }
}

fn symmetrize(h: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (h[i * n + j] + h[j * n + i]);
            h[i * n + j] = v;
            h[j * n + i] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coord(j: usize) -> ScalarField {
        ScalarField::exact(
            format!("x{}", j + 1),
            move |x| x[j],
            move |x, g| {
                g.iter_mut().for_each(|v| *v = 0.0);
                let _ = x;
                g[j] = 1.0;
            },
            |_, h| h.iter_mut().for_each(|v| *v = 0.0),
        )
    }

    #[test]
    fn directional_derivatives_on_builtins() {
        let e = Frame::euclidean(3);
        assert_eq!(e.directional_derivative(1, &coord(0), &[0.3, -2.0, 5.0]).unwrap(), 1.0);
        let s = Frame::nonsmooth_r3();
        assert_eq!(s.directional_derivative(1, &coord(2), &[1.0, 2.0, 0.0]).unwrap(), 6.0);
        let h = Frame::heisenberg(1);
        assert_eq!(h.directional_derivative(1, &coord(2), &[0.5, 0.25, 0.0]).unwrap(), 0.5);
        assert!(matches!(
            h.directional_derivative(3, &coord(2), &[0.0; 3]),
            Err(Error::FieldIndex { .. })
        ));
        assert!(matches!(
            h.directional_derivative(1, &coord(2), &[0.0; 2]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn commutators() {
        let s = Frame::nonsmooth_r3();
        assert_eq!(s.commutator(1, 2, &[1.0, 1.0, 0.0]).unwrap(), vec![0.0, 0.0, -6.0]);
        let h = Frame::heisenberg(1);
        assert_eq!(h.commutator(1, 2, &[0.3, 0.1, 2.0]).unwrap(), vec![0.0, 0.0, -4.0]);
        let e = Frame::euclidean(3);
        assert_eq!(e.commutator(1, 3, &[0.3, 0.1, 2.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn euclidean_sub_laplacian_of_square_norm() {
        for n in 2..6 {
            let f = Frame::euclidean(n);
            let u =
                ScalarField::from_expression("r2", &(1..=n).map(|i| format!("x{i}^2")).collect::<Vec<_>>().join("+"))
                    .unwrap();
            let x: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.2).collect();
            assert!((f.sub_laplacian(&u, &x).unwrap() - 2.0 * n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn corrupted_frame_fails_validation() {
        let comps = vec![
            Coefficient::Const(1.5),
            Coefficient::Const(0.0),
            Coefficient::Const(0.0),
            Coefficient::Const(0.0),
            Coefficient::Const(1.0),
            Coefficient::Const(0.0),
        ];
        let bad = Frame::from_components_unchecked("bad", 3, 2, comps);
        let report = bad.validate_triangular_form(&[vec![0.0; 3]]).unwrap();
        assert!(!report.passed);
        assert_eq!(report.max_violation, 0.5);
        let ok = Frame::euclidean(3).validate_triangular_form(&[vec![0.1; 3]]).unwrap();
        assert!(ok.passed);
        assert_eq!(ok.max_violation, 0.0);
    }

    #[test]
    fn out_of_range_coefficient_rejected() {
        let c = Coefficient::parse("x4").unwrap();
        assert!(Frame::triangular("f", 3, 2, vec![vec![c.clone()], vec![c]]).is_err());
    }
}

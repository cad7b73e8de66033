//! One-dimensional Gauss rules and the product rule on spheres.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

/// A one-dimensional rule: nodes with matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Affinely maps a rule on [-1, 1] to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> Rule1d {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule1d {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }
}

/// Gauss–Legendre rule with `n` points on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> Rule1d {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule1d { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Rule for `∫_0^π f(θ) sin^k θ dθ` with `n` nodes, exact when `f` is a
/// polynomial of degree `< 2n` in `cos θ`. Nodes are ascending in θ.
pub fn gauss_sine_power(n: usize, k: u32) -> Rule1d {
    assert!(n >= 1 && k >= 1);
    // x = cos θ turns the weight into (1 - x²)^λ with λ = (k - 1)/2.
    let lambda = (k as f64 - 1.0) / 2.0;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for j in 1..n {
        let jf = j as f64;
        let b = jf * (jf + 2.0 * lambda) / ((2.0 * jf + 2.0 * lambda + 1.0) * (2.0 * jf + 2.0 * lambda - 1.0));
        let s = b.sqrt();
        jac[(j, j - 1)] = s;
        jac[(j - 1, j)] = s;
    }
    let mu0 = sine_power_moment(k);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i].clamp(-1.0, 1.0);
            let v0 = eig.eigenvectors[(0, i)];
            (x.acos(), mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule1d {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// `∫_0^π sin^k θ dθ`.
pub fn sine_power_moment(k: u32) -> f64 {
    // I(0) = π, I(1) = 2, I(k) = I(k-2)·(k-1)/k.
    let even = k.is_multiple_of(2);
    let mut value = if even { PI } else { 2.0 };
    let mut j = if even { 2 } else { 3 };
    while j <= k {
        value *= (j as f64 - 1.0) / j as f64;
        j += 2;
    }
    value
}

/// Equal-weight rule on the circle, offset by half a step from φ = 0.
pub fn periodic_trapezoid(n: usize) -> Rule1d {
    let h = 2.0 * PI / n as f64;
    Rule1d {
        nodes: (0..n).map(|j| (j as f64 + 0.5) * h).collect(),
        weights: vec![h; n],
    }
}

/// Product rule on the unit sphere `S^{k-1} ⊂ ℝ^k` in hyperspherical angles
/// `(θ_1, …, θ_{k-2}, φ)`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub ambient: usize,
    /// Angles per node, `ambient - 1` each.
    pub angles: Vec<Vec<f64>>,
    /// Surface weights (integrate `dS` when summed against values).
    pub weights: Vec<f64>,
    /// Weights for the bare parameter measure `dθ_1…dφ`.
    pub parameter_weights: Vec<f64>,
}

impl SphereRule {
    /// `q` polar nodes per θ angle and `2q` azimuthal nodes.
    pub fn new(ambient: usize, q: usize) -> SphereRule {
        assert!(ambient >= 2 && q >= 1);
        let polar: Vec<Rule1d> = (0..ambient - 2)
            .map(|i| gauss_sine_power(q, (ambient - 2 - i) as u32))
            .collect();
        let azim = periodic_trapezoid(2 * q);
        let mut angles = vec![Vec::with_capacity(ambient - 1)];
        let mut weights = vec![1.0];
        let mut parameter_weights = vec![1.0];
        for (i, rule) in polar.iter().enumerate() {
            let power = (ambient - 2 - i) as i32;
            let mut na = Vec::with_capacity(angles.len() * rule.len());
            let mut nw = Vec::with_capacity(na.capacity());
            let mut np = Vec::with_capacity(na.capacity());
            for (a, (w, pw)) in angles.iter().zip(weights.iter().zip(&parameter_weights)) {
                for (t, tw) in rule.nodes.iter().zip(&rule.weights) {
                    let mut v = a.clone();
                    v.push(*t);
                    na.push(v);
                    nw.push(w * tw);
                    np.push(pw * tw / t.sin().powi(power));
                }
            }
            angles = na;
            weights = nw;
            parameter_weights = np;
        }
        let mut na = Vec::with_capacity(angles.len() * azim.len());
        let mut nw = Vec::with_capacity(na.capacity());
        let mut np = Vec::with_capacity(na.capacity());
        for (a, (w, pw)) in angles.iter().zip(weights.iter().zip(&parameter_weights)) {
            for (p, pwt) in azim.nodes.iter().zip(&azim.weights) {
                let mut v = a.clone();
                v.push(*p);
                na.push(v);
                nw.push(w * pwt);
                np.push(pw * pwt);
            }
        }
        SphereRule {
            ambient,
            angles: na,
            weights: nw,
            parameter_weights: np,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Node count without building the rule.
    pub fn count(ambient: usize, q: usize) -> usize {
        q.pow((ambient - 2) as u32) * 2 * q
    }
}

/// Unit vector for hyperspherical angles and its partial derivatives.
/// `tangents` receives `(k-1)` rows of length `k`.
pub fn sphere_point(angles: &[f64], out: &mut [f64], tangents: Option<&mut [f64]>) {
    let k = angles.len() + 1;
    debug_assert_eq!(out.len(), k);
    let mut prefix = 1.0;
    for (j, a) in angles.iter().enumerate().take(k - 2) {
        out[j] = prefix * a.cos();
        prefix *= a.sin();
    }
    let phi = angles[k - 2];
    out[k - 2] = prefix * phi.cos();
    out[k - 1] = prefix * phi.sin();
    let Some(t) = tangents else { return };
    t.iter_mut().for_each(|v| *v = 0.0);
    for l in 0..k - 1 {
        let row = &mut t[l * k..(l + 1) * k];
        if l < k - 2 {
            let (s, c) = angles[l].sin_cos();
            // Components before l do not depend on θ_l.
            let mut pre = 1.0;
            for a in angles.iter().take(l) {
                pre *= a.sin();
            }
            row[l] = -pre * s;
            // Later components carry sin θ_l as a factor.
            for (j, r) in row.iter_mut().enumerate().skip(l + 1) {
                *r = if s != 0.0 { out[j] * c / s } else { 0.0 };
            }
            if s == 0.0 {
                let mut p = pre * c;
                for j in l + 1..k - 2 {
                    row[j] = p * angles[j].cos();
                    p *= angles[j].sin();
                }
                row[k - 2] = p * phi.cos();
                row[k - 1] = p * phi.sin();
            }
        } else {
            row[k - 2] = -out[k - 1];
            row[k - 1] = out[k - 2];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_is_exact_to_degree_2n_minus_1() {
        for n in 1..=12 {
            let r = gauss_legendre(n);
            for p in 0..2 * n {
                let s: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((s - exact).abs() < 1e-13, "n={n} p={p} {s} {exact}");
            }
        }
    }

    #[test]
    fn sine_power_rule_reproduces_moments() {
        for k in 1..=7 {
            let r = gauss_sine_power(5, k);
            let s: f64 = r.weights.iter().sum();
            assert!((s - sine_power_moment(k)).abs() < 1e-13);
            // ∫ cos²θ sin^k θ = I(k) - I(k+2)
            let c2: f64 = r.nodes.iter().zip(&r.weights).map(|(t, w)| w * t.cos().powi(2)).sum();
            let exact = sine_power_moment(k) - sine_power_moment(k + 2);
            assert!((c2 - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn sphere_areas() {
        let r = SphereRule::new(3, 6);
        let a: f64 = r.weights.iter().sum();
        assert!((a - 4.0 * PI).abs() < 1e-12);
        let r = SphereRule::new(5, 4);
        let a: f64 = r.weights.iter().sum();
        assert!((a - 8.0 * PI * PI / 3.0).abs() < 1e-11);
        assert_eq!(r.len(), SphereRule::count(5, 4));
    }

    #[test]
    fn sphere_tangents_match_differences() {
        let angles = [0.7, 1.9, 2.3, 0.4];
        let k = 5;
        let mut p = vec![0.0; k];
        let mut t = vec![0.0; (k - 1) * k];
        sphere_point(&angles, &mut p, Some(&mut t));
        assert!((p.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-14);
        let h = 1e-6;
        for l in 0..k - 1 {
            let mut a = angles;
            a[l] += h;
            let mut pp = vec![0.0; k];
            sphere_point(&a, &mut pp, None);
            a[l] -= 2.0 * h;
            let mut pm = vec![0.0; k];
            sphere_point(&a, &mut pm, None);
            for j in 0..k {
                let fd = (pp[j] - pm[j]) / (2.0 * h);
                assert!((fd - t[l * k + j]).abs() < 1e-8);
            }
        }
    }
}

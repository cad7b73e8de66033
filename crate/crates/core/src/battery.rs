//! The standard test-function battery, scaled to a domain.

use std::sync::Arc;

use crate::domains::{Domain, Shape};
use crate::frames::ScalarField;

/// `y = M(x − c)`, row-major `M`.
#[derive(Debug, Clone)]
struct AffineChart {
    centre: Vec<f64>,
    m: Vec<f64>,
    diagonal: bool,
}

impl AffineChart {
    fn for_domain(domain: &Domain) -> AffineChart {
        let (centre, half) = domain.centre_and_half_widths();
        let n = centre.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0 / half[i];
        }
        let mut diagonal = true;
        // Gauge balls are left translates: undo the shear before scaling.
        if let Shape::GaugeBall { pole, m: mm, .. } = domain.shape() {
            let mm = *mm;
            let t = 2 * mm;
            for j in 0..mm {
                m[t * n + j] = -2.0 * pole[mm + j] / half[t];
                m[t * n + mm + j] = 2.0 * pole[j] / half[t];
            }
            diagonal = pole[..t].iter().all(|p| *p == 0.0);
        }
        AffineChart { centre, m, diagonal }
    }

    fn dim(&self) -> usize {
        self.centre.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        if self.diagonal {
            for i in 0..n {
                y[i] = self.m[i * n + i] * (x[i] - self.centre[i]);
            }
            return;
        }
        for i in 0..n {
            y[i] = (0..n).map(|j| self.m[i * n + j] * (x[j] - self.centre[j])).sum();
        }
    }

    /// `Mᵀ g`.
    fn pull_gradient(&self, gy: &[f64], gx: &mut [f64]) {
        let n = self.dim();
        if self.diagonal {
            for j in 0..n {
                gx[j] = self.m[j * n + j] * gy[j];
            }
            return;
        }
        for j in 0..n {
            gx[j] = (0..n).map(|i| self.m[i * n + j] * gy[i]).sum();
        }
    }

    /// `Mᵀ H M`.
    fn pull_hessian(&self, hy: &[f64], hx: &mut [f64]) {
        let n = self.dim();
        if self.diagonal {
            for i in 0..n {
                for j in 0..n {
                    hx[i * n + j] = self.m[i * n + i] * hy[i * n + j] * self.m[j * n + j];
                }
            }
            return;
        }
        let mut tmp = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                tmp[i * n + j] = (0..n).map(|k| hy[i * n + k] * self.m[k * n + j]).sum();
            }
        }
        for i in 0..n {
            for j in 0..n {
                hx[i * n + j] = (0..n).map(|k| self.m[k * n + i] * tmp[k * n + j]).sum();
            }
        }
    }
}

/// Value, gradient and Hessian of a function of `y`.
type Jet = dyn Fn(&[f64], &mut [f64], &mut [f64]) -> f64 + Send + Sync;

fn field(name: &str, chart: &AffineChart, jet: Arc<Jet>, compact: bool) -> ScalarField {
    let n = chart.dim();
    let c = chart.clone();
    ScalarField::from_jet(name, move |x, g, h| {
        let mut y = vec![0.0; n];
        c.apply(x, &mut y);
        let mut gy = vec![0.0; n];
        let mut hy = vec![0.0; n * n];
        let v = jet(&y, &mut gy, &mut hy);
        c.pull_gradient(&gy, g);
        c.pull_hessian(&hy, h);
        v
    })
    .with_compact_support(compact)
}

fn alternating(n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|i| if i % 2 == 0 { amp } else { -amp }).collect()
}

/// `exp(−a|y − s|²)`.
fn gaussian_jet(s: Vec<f64>, a: f64) -> impl Fn(&[f64], &mut [f64], &mut [f64]) -> f64 {
    move |y, g, h| {
        let n = y.len();
        let r2: f64 = y.iter().zip(&s).map(|(p, q)| (p - q) * (p - q)).sum();
        let v = (-a * r2).exp();
        for i in 0..n {
            let di = y[i] - s[i];
            g[i] = -2.0 * a * di * v;
            for j in 0..n {
                let dj = y[j] - s[j];
                let delta = if i == j { 1.0 } else { 0.0 };
                h[i * n + j] = v * (4.0 * a * a * di * dj - 2.0 * a * delta);
            }
        }
        v
    }
}

/// `(1 − |y − s|²/ρ²)_+^4`.
fn bump_jet(s: Vec<f64>, rho: f64) -> impl Fn(&[f64], &mut [f64], &mut [f64]) -> f64 {
    move |y, g, h| {
        let n = y.len();
        let r2: f64 = y.iter().zip(&s).map(|(p, q)| (p - q) * (p - q)).sum();
        let b = 1.0 - r2 / (rho * rho);
        g.iter_mut().for_each(|v| *v = 0.0);
        h.iter_mut().for_each(|v| *v = 0.0);
        if b <= 0.0 {
            return 0.0;
        }
        let k = 2.0 / (rho * rho);
        for i in 0..n {
            let di = y[i] - s[i];
            g[i] = -4.0 * b.powi(3) * k * di;
            for j in 0..n {
                let dj = y[j] - s[j];
                let delta = if i == j { 1.0 } else { 0.0 };
                h[i * n + j] = 12.0 * b * b * k * k * di * dj - 4.0 * b.powi(3) * k * delta;
            }
        }
        b.powi(4)
    }
}

/// `Π_i (1 − y_i²/a²)_+^4`.
fn bump_product_jet(a: f64) -> impl Fn(&[f64], &mut [f64], &mut [f64]) -> f64 {
    move |y, g, h| {
        let n = y.len();
        g.iter_mut().for_each(|v| *v = 0.0);
        h.iter_mut().for_each(|v| *v = 0.0);
        let mut f = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        let mut f2 = vec![0.0; n];
        for i in 0..n {
            let b = 1.0 - y[i] * y[i] / (a * a);
            if b <= 0.0 {
                return 0.0;
            }
            f[i] = b.powi(4);
            f1[i] = -8.0 * b.powi(3) * y[i] / (a * a);
            f2[i] = 48.0 * b * b * y[i] * y[i] / a.powi(4) - 8.0 * b.powi(3) / (a * a);
        }
        let prod_except = |skip: &[usize]| -> f64 { (0..n).filter(|k| !skip.contains(k)).map(|k| f[k]).product() };
        for i in 0..n {
            g[i] = f1[i] * prod_except(&[i]);
            for j in 0..n {
                h[i * n + j] = if i == j {
                    f2[i] * prod_except(&[i])
                } else {
                    f1[i] * f1[j] * prod_except(&[i, j])
                };
            }
        }
        f.iter().product()
    }
}

/// Twelve functions with exact derivatives in coordinates scaled to `domain`.
/// The `bump*` and `poly_bump` members vanish near the boundary.
pub fn standard_battery(domain: &Domain) -> Vec<ScalarField> {
    let chart = AffineChart::for_domain(domain);
    let n = chart.dim();
    let mut out = Vec::with_capacity(12);

    out.push(field(
        "const",
        &chart,
        Arc::new(|_: &[f64], g: &mut [f64], h: &mut [f64]| {
            g.iter_mut().for_each(|v| *v = 0.0);
            h.iter_mut().for_each(|v| *v = 0.0);
            1.0
        }),
        false,
    ));

    let a: Vec<f64> = (0..n)
        .map(|i| 0.5 * if i % 2 == 0 { 1.0 } else { -1.0 } / (i + 1) as f64)
        .collect();
    out.push(field(
        "affine",
        &chart,
        Arc::new(move |y: &[f64], g: &mut [f64], h: &mut [f64]| {
            g.copy_from_slice(&a);
            h.iter_mut().for_each(|v| *v = 0.0);
            1.0 + y.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>()
        }),
        false,
    ));

    // 1 − |y|²/2 + y_1 y_n / 4
    out.push(field(
        "quadratic",
        &chart,
        Arc::new(move |y: &[f64], g: &mut [f64], h: &mut [f64]| {
            let l = n - 1;
            h.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                g[i] = -y[i];
                h[i * n + i] = -1.0;
            }
            g[0] += 0.25 * y[l];
            g[l] += 0.25 * y[0];
            h[l] += 0.25;
            h[l * n] += 0.25;
            1.0 - 0.5 * y.iter().map(|v| v * v).sum::<f64>() + 0.25 * y[0] * y[l]
        }),
        false,
    ));

    out.push(field(
        "gaussian",
        &chart,
        Arc::new(gaussian_jet(vec![0.0; n], 1.0)),
        false,
    ));
    out.push(field(
        "gaussian_shifted",
        &chart,
        Arc::new(gaussian_jet(alternating(n, 0.3), 1.0)),
        false,
    ));
    out.push(field("bump", &chart, Arc::new(bump_jet(vec![0.0; n], 0.8)), true));
    out.push(field(
        "bump_shifted",
        &chart,
        Arc::new(bump_jet(alternating(n, 0.25 / (n as f64).sqrt()), 0.5)),
        true,
    ));
    out.push(field(
        "bump_product",
        &chart,
        Arc::new(bump_product_jet(0.8 / (n as f64).sqrt())),
        true,
    ));

    // (1 + y_1/2 + y_n²)·bump
    let bump = bump_jet(vec![0.0; n], 0.8);
    out.push(field(
        "poly_bump",
        &chart,
        Arc::new(move |y: &[f64], g: &mut [f64], h: &mut [f64]| {
            let l = n - 1;
            let mut gb = vec![0.0; n];
            let mut hb = vec![0.0; n * n];
            let b = bump(y, &mut gb, &mut hb);
            let p = 1.0 + 0.5 * y[0] + y[l] * y[l];
            let mut gp = vec![0.0; n];
            gp[0] += 0.5;
            gp[l] += 2.0 * y[l];
            for i in 0..n {
                g[i] = gp[i] * b + p * gb[i];
                for j in 0..n {
                    let hp = if i == l && j == l { 2.0 } else { 0.0 };
                    h[i * n + j] = hp * b + gp[i] * gb[j] + gp[j] * gb[i] + p * hb[i * n + j];
                }
            }
            p * b
        }),
        true,
    ));

    // cos(1.3 y_1) + sin(0.7 y_2 + 0.4 y_n)
    out.push(field(
        "trig",
        &chart,
        Arc::new(move |y: &[f64], g: &mut [f64], h: &mut [f64]| {
            let l = n - 1;
            let y1 = if n > 1 { y[1] } else { 0.0 };
            let arg = 0.7 * y1 + 0.4 * y[l];
            let mut c = vec![0.0; n];
            if n > 1 {
                c[1] += 0.7;
            }
            c[l] += 0.4;
            g.iter_mut().for_each(|v| *v = 0.0);
            h.iter_mut().for_each(|v| *v = 0.0);
            g[0] = -1.3 * (1.3 * y[0]).sin();
            h[0] = -1.69 * (1.3 * y[0]).cos();
            for i in 0..n {
                g[i] += c[i] * arg.cos();
                for j in 0..n {
                    h[i * n + j] -= c[i] * c[j] * arg.sin();
                }
            }
            (1.3 * y[0]).cos() + arg.sin()
        }),
        false,
    ));

    let c = alternating(n, 0.4);
    out.push(field(
        "exp_linear",
        &chart,
        Arc::new(move |y: &[f64], g: &mut [f64], h: &mut [f64]| {
            let v = y.iter().zip(&c).map(|(p, q)| p * q).sum::<f64>().exp();
            for i in 0..n {
                g[i] = c[i] * v;
                for j in 0..n {
                    h[i * n + j] = c[i] * c[j] * v;
                }
            }
            v
        }),
        false,
    ));

    let g1 = gaussian_jet(vec![0.0; n], 1.0);
    let g2 = gaussian_jet(alternating(n, 0.3), 2.0);
    out.push(field(
        "gaussian_difference",
        &chart,
        Arc::new(move |y: &[f64], g: &mut [f64], h: &mut [f64]| {
            let mut ga = vec![0.0; n];
            let mut ha = vec![0.0; n * n];
            let a = g1(y, &mut ga, &mut ha);
            let b = g2(y, g, h);
            for i in 0..n {
                g[i] = ga[i] - 0.5 * g[i];
            }
            for i in 0..n * n {
                h[i] = ha[i] - 0.5 * h[i];
            }
            a - 0.5 * b
        }),
        false,
    ));

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundsol::FundamentalSolution;

    fn check_derivatives(u: &ScalarField, x: &[f64]) {
        let n = x.len();
        let mut g = vec![0.0; n];
        let mut gn = vec![0.0; n];
        u.gradient(x, &mut g);
        u.numeric_gradient(x, None, &mut gn);
        for i in 0..n {
            assert!(
                (g[i] - gn[i]).abs() < 1e-6 * (1.0 + g[i].abs()),
                "{} grad {i}",
                u.name()
            );
        }
        let mut h = vec![0.0; n * n];
        let mut hn = vec![0.0; n * n];
        u.hessian(x, &mut h);
        u.numeric_hessian(x, None, &mut hn);
        for i in 0..n * n {
            assert!(
                (h[i] - hn[i]).abs() < 1e-4 * (1.0 + h[i].abs()),
                "{} hess {i}",
                u.name()
            );
        }
    }

    #[test]
    fn battery_derivatives_match_differences() {
        let ball = Domain::build_euclidean_ball(vec![0.1, -0.2, 0.3], 1.5).unwrap();
        for u in standard_battery(&ball) {
            check_derivatives(&u, &[0.3, 0.1, 0.2]);
        }
        let fs = FundamentalSolution::heisenberg(1, vec![0.2, -0.1, 0.05]).unwrap();
        let gb = Domain::build_gauge_ball(&fs, 1.0).unwrap();
        let b = standard_battery(&gb);
        assert_eq!(b.len(), 12);
        for u in &b {
            check_derivatives(u, &[0.3, 0.1, 0.12]);
        }
    }

    #[test]
    fn compact_members_vanish_on_boundary() {
        let fs = FundamentalSolution::heisenberg(1, vec![0.3, -0.2, 0.1]).unwrap();
        let gb = Domain::build_gauge_ball(&fs, 1.0).unwrap();
        let nodes = crate::quadrature::BoundaryNodes::build(&gb, fs.frame(), 6, false).unwrap();
        for u in standard_battery(&gb).iter().filter(|u| u.is_compact()) {
            for i in 0..nodes.len() {
                assert_eq!(u.value(nodes.point(i)), 0.0, "{}", u.name());
            }
        }
    }
}

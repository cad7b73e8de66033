use std::f64::consts::E;

use super::workspace::{FieldSamples, Integral, Workspace};
use super::{verdict, InequalityId, InequalityReport, RPolicy, Term};
use crate::error::{Error, Result};

/// `e` with `Γ^{1/(2−β)} = κ·d^e`.
fn gauge_exponent(ws: &Workspace, beta: f64) -> f64 {
    (2.0 - ws.solution().beta()) / (2.0 - beta)
}

/// `(R, ln R − ln κ)`, so that `ln(R/Γ^{1/(2−β)}) = offset − e·ln d`.
fn log_offset(ws: &Workspace, beta: f64, policy: RPolicy) -> Result<(f64, f64)> {
    let e = gauge_exponent(ws, beta);
    let kappa = ws.solution().constant().powf(1.0 / (2.0 - beta));
    let sup_g = kappa * ws.sup_gauge().powf(e);
    match policy {
        RPolicy::Auto => {
            let r = 1.05 * E * sup_g;
            Ok((r, (1.05 * E).ln() + e * ws.sup_gauge().ln()))
        }
        RPolicy::Fixed(r) => {
            if !(r >= E * sup_g) {
                return Err(Error::Parameters(format!(
                    "R ≥ e·sup Γ^(1/(2−β)) violated (R = {r}, bound {:.6e})",
                    E * sup_g
                )));
            }
            Ok((r, r.ln() - kappa.ln()))
        }
    }
}

struct Builder {
    id: InequalityId,
    function: String,
    alpha: f64,
    beta: f64,
    r: Option<f64>,
    lhs: Term,
    rhs: Vec<Term>,
    main_integral: f64,
    min_gd: f64,
    warnings: Vec<String>,
}

impl Builder {
    fn new(id: InequalityId, ws: &Workspace, u: &FieldSamples, alpha: f64, beta: f64) -> Builder {
        Builder {
            id,
            function: u.name().to_string(),
            alpha,
            beta,
            r: None,
            lhs: Term::new("lhs", 0.0, 0.0),
            rhs: Vec::new(),
            main_integral: 0.0,
            min_gd: ws.min_horizontal_gauge(),
            warnings: Vec::new(),
        }
    }

    fn note(&mut self, i: &Integral) {
        if let Some(w) = &i.warning {
            if !self.warnings.contains(w) {
                self.warnings.push(w.clone());
            }
        }
    }

    fn push(&mut self, label: &str, coefficient: f64, i: &Integral) {
        self.note(i);
        let (v, e) = i.scaled(coefficient);
        self.rhs.push(Term::new(label, v, e));
    }

    fn push_raw(&mut self, label: &str, value: f64, error: f64) {
        self.rhs.push(Term::new(label, value, error));
    }

    fn finish(self) -> InequalityReport {
        let mut report = InequalityReport {
            name: self.id,
            function: self.function,
            alpha: self.alpha,
            beta: self.beta,
            r: self.r,
            constant: self.id.constant(self.alpha, self.beta),
            lhs: self.lhs,
            rhs_terms: self.rhs,
            main_integral: self.main_integral,
            slack: 0.0,
            error_total: 0.0,
            verdict: super::Verdict::Holds,
            homogeneity: self.id.homogeneity(self.alpha),
            min_horizontal_gauge: self.min_gd,
            warnings: self.warnings,
        };
        report.slack = report.recompute_slack();
        report.error_total = report.recompute_error();
        report.verdict = verdict(report.slack, report.error_total);
        report
    }
}

/// `err(PQ) = |P|·err Q + |Q|·err P`.
fn product(p: &Integral, q: &Integral, coefficient: f64) -> (f64, f64) {
    (
        coefficient * p.value * q.value,
        coefficient.abs() * (p.value.abs() * q.error + q.value.abs() * p.error),
    )
}

fn needs_second_order(u: &FieldSamples) -> Result<()> {
    if !u.has_second_order() {
        return Err(Error::Parameters(format!(
            "test function {} was sampled without second derivatives",
            u.name()
        )));
    }
    Ok(())
}

/// Dispatches on `id`; `alpha` is ignored by the uncertainty principles.
pub fn check(
    ws: &Workspace,
    id: InequalityId,
    u: &FieldSamples,
    alpha: f64,
    beta: f64,
    r: RPolicy,
) -> Result<InequalityReport> {
    match id {
        InequalityId::Lh2a => hardy_check(ws, u, alpha, beta),
        InequalityId::Lh2 => hardy_refined_check(ws, u, alpha, beta, r),
        InequalityId::Up1a | InequalityId::Up2a | InequalityId::Up1 | InequalityId::Up2 => {
            uncertainty_check(ws, u, beta, r, id)
        }
        InequalityId::Lr2a | InequalityId::Lr2 => rellich_check(ws, u, alpha, beta, r, id),
        InequalityId::TwoLr2a | InequalityId::TwoLr2 => rellich_gradient_check(ws, u, alpha, beta, r, id),
    }
}

/// The weighted Hardy inequality without the logarithmic term.
pub fn hardy_check(ws: &Workspace, u: &FieldSamples, alpha: f64, beta: f64) -> Result<InequalityReport> {
    hardy(ws, u, alpha, beta, None)
}

/// The weighted Hardy inequality with the logarithmic refinement.
pub fn hardy_refined_check(
    ws: &Workspace,
    u: &FieldSamples,
    alpha: f64,
    beta: f64,
    r: RPolicy,
) -> Result<InequalityReport> {
    hardy(ws, u, alpha, beta, Some(r))
}

fn hardy(ws: &Workspace, u: &FieldSamples, alpha: f64, beta: f64, r: Option<RPolicy>) -> Result<InequalityReport> {
    let id = if r.is_some() {
        InequalityId::Lh2
    } else {
        InequalityId::Lh2a
    };
    id.validate_params(alpha, beta)?;
    let e = gauge_exponent(ws, beta);
    let p = ws.powers(e * alpha);
    let q = ws.powers(e * alpha - 2.0);
    let (si, sb) = (&u.interior, &u.boundary);

    let mut b = Builder::new(id, ws, u, alpha, beta);
    let lhs = ws.interior_integral(|l, i| p.interior[l][i] * si[l].gu2[i])?;
    b.note(&lhs);
    b.lhs = Term::new("lhs", lhs.value, lhs.error);
    let main = ws.interior_integral(|l, i| e * e * q.interior[l][i] * ws.gd2[l][i] * si[l].u2[i])?;
    b.main_integral = main.value;
    b.push("main", id.constant(alpha, beta), &main);
    if let Some(policy) = r {
        let (rv, offset) = log_offset(ws, beta, policy)?;
        b.r = Some(rv);
        let li = ws.interior_integral(|l, i| {
            let lg = offset - e * ws.ln_d[l][i];
            e * e * q.interior[l][i] * ws.gd2[l][i] * si[l].u2[i] / (lg * lg)
        })?;
        b.push("log_interior", 0.25, &li);
        let lb = ws.boundary_integral(|l, i| {
            let lg = offset - e * ws.ln_d_bd[l][i];
            p.boundary[l][i] * sb[l].u2[i] * ws.phi_bd[l][i] / lg
        })?;
        b.push("log_boundary", 1.0 / (2.0 * (beta - 2.0)), &lb);
    }
    let bd = ws.boundary_integral(|l, i| p.boundary[l][i] * sb[l].u2[i] * ws.phi_bd[l][i])?;
    b.push("boundary", (beta + alpha - 2.0) / (2.0 * (beta - 2.0)), &bd);
    Ok(b.finish())
}

/// The uncertainty principles `UP1a`, `UP2a`, `UP1`, `UP2`.
pub fn uncertainty_check(
    ws: &Workspace,
    u: &FieldSamples,
    beta: f64,
    r: RPolicy,
    variant: InequalityId,
) -> Result<InequalityReport> {
    let first_kind = match variant {
        InequalityId::Up1a | InequalityId::Up1 => true,
        InequalityId::Up2a | InequalityId::Up2 => false,
        other => {
            return Err(Error::Parameters(format!("{other} is not an uncertainty principle")));
        }
    };
    variant.validate_params(0.0, beta)?;
    let e = gauge_exponent(ws, beta);
    let (si, sb) = (&u.interior, &u.boundary);
    let mut b = Builder::new(variant, ws, u, 0.0, beta);

    // First factor of the left-hand side and the quantity squared in the main term.
    let (factor, squared) = if first_kind {
        let p4 = ws.powers(4.0 * e - 2.0);
        let p2 = ws.powers(2.0 * e - 2.0);
        (
            ws.interior_integral(|l, i| e * e * p4.interior[l][i] * ws.gd2[l][i] * si[l].u2[i])?,
            ws.interior_integral(|l, i| e * e * p2.interior[l][i] * ws.gd2[l][i] * si[l].u2[i])?,
        )
    } else {
        let p = ws.powers(2.0);
        (
            ws.interior_integral(|l, i| p.interior[l][i] / (e * e * ws.gd2[l][i]) * si[l].u2[i])?,
            ws.interior_integral(|l, i| si[l].u2[i])?,
        )
    };
    b.note(&factor);
    b.note(&squared);
    let dirichlet = ws.interior_integral(|l, i| si[l].gu2[i])?;
    b.note(&dirichlet);
    let (lv, le) = product(&factor, &dirichlet, 1.0);
    b.lhs = Term::new("lhs", lv, le);
    b.main_integral = squared.value * squared.value;
    let c = variant.constant(0.0, beta);
    let (mv, me) = product(&squared, &squared, c);
    b.push_raw("main", mv, me);

    if variant.is_refined() {
        let (rv, offset) = log_offset(ws, beta, r)?;
        b.r = Some(rv);
        let m2 = ws.powers(-2.0);
        let li = ws.interior_integral(|l, i| {
            let lg = offset - e * ws.ln_d[l][i];
            e * e * m2.interior[l][i] * ws.gd2[l][i] * si[l].u2[i] / (lg * lg)
        })?;
        b.note(&li);
        let (v, er) = product(&li, &factor, 0.25);
        b.push_raw("log_interior", v, er);
        let lb = ws.boundary_integral(|l, i| {
            let lg = offset - e * ws.ln_d_bd[l][i];
            sb[l].u2[i] * ws.phi_bd[l][i] / lg
        })?;
        let (v, er) = product(&lb, &factor, 1.0 / (2.0 * (beta - 2.0)));
        b.push_raw("log_boundary", v, er);
    }
    let bd = ws.boundary_integral(|l, i| sb[l].u2[i] * ws.phi_bd[l][i])?;
    let (v, er) = product(&bd, &factor, 0.5);
    b.push_raw("boundary", v, er);
    Ok(b.finish())
}

/// `𝓒(u)` divided by `c^{(α−2)/(2−β)}`, with its error bar.
fn c_term(ws: &Workspace, u: &FieldSamples, alpha: f64, beta: f64) -> Result<Integral> {
    let e = gauge_exponent(ws, beta);
    let p = ws.powers(e * (alpha - 2.0));
    let sb = &u.boundary;
    let k = (alpha - 2.0) / (2.0 - beta);
    ws.boundary_integral(|l, i| p.boundary[l][i] * (k * sb[l].u2[i] * ws.phi_bd[l][i] - 2.0 * sb[l].psi[i]))
}

/// `𝓒(u) = ((α−2)/(2−β))∫_{∂Ω}u²Γ^{(α−2)/(2−β)−1}⟨∇̃Γ,dν⟩ − 2∫_{∂Ω}Γ^{(α−2)/(2−β)}u⟨∇̃u,dν⟩`
/// at the workspace's constant `c` (not normalized).
pub fn c_functional(ws: &Workspace, u: &FieldSamples, alpha: f64, beta: f64) -> Result<crate::IntegralResult> {
    if beta <= 2.0 {
        return Err(Error::Parameters(format!("β > 2 violated (β = {beta})")));
    }
    let i = c_term(ws, u, alpha, beta)?;
    let scale = ws.solution().constant().powf((alpha - 2.0) / (2.0 - beta));
    Ok(crate::IntegralResult {
        value: scale * i.value,
        error_estimate: scale * i.error,
        nodes_used: ws.boundary_nodes(),
    })
}

/// Shared pieces of the two Rellich families.
struct RellichParts {
    e: f64,
    lhs: Integral,
    boundary: Integral,
    c: Integral,
    log: Option<(f64, Integral, Integral)>,
}

fn rellich_parts(ws: &Workspace, u: &FieldSamples, alpha: f64, beta: f64, r: Option<RPolicy>) -> Result<RellichParts> {
    needs_second_order(u)?;
    let e = gauge_exponent(ws, beta);
    let (si, sb) = (&u.interior, &u.boundary);
    let pl = ws.powers(e * alpha - 2.0 * e + 2.0);
    let lhs = ws.interior_integral(|l, i| pl.interior[l][i] / (e * e * ws.gd2[l][i]) * si[l].lu[i] * si[l].lu[i])?;
    let pb = ws.powers(e * (alpha - 2.0));
    let boundary = ws.boundary_integral(|l, i| pb.boundary[l][i] * sb[l].u2[i] * ws.phi_bd[l][i])?;
    let c = c_term(ws, u, alpha, beta)?;
    let log = match r {
        None => None,
        Some(policy) => {
            let (rv, offset) = log_offset(ws, beta, policy)?;
            let pm = ws.powers(e * alpha - 2.0 * e - 2.0);
            let li = ws.interior_integral(|l, i| {
                let lg = offset - e * ws.ln_d[l][i];
                e * e * pm.interior[l][i] * ws.gd2[l][i] * si[l].u2[i] / (lg * lg)
            })?;
            let lb = ws.boundary_integral(|l, i| {
                let lg = offset - e * ws.ln_d_bd[l][i];
                pb.boundary[l][i] * sb[l].u2[i] * ws.phi_bd[l][i] / lg
            })?;
            Some((rv, li, lb))
        }
    };
    Ok(RellichParts {
        e,
        lhs,
        boundary,
        c,
        log,
    })
}

/// `LR2a` or `LR2`.
pub fn rellich_check(
    ws: &Workspace,
    u: &FieldSamples,
    alpha: f64,
    beta: f64,
    r: RPolicy,
    variant: InequalityId,
) -> Result<InequalityReport> {
    let refined = match variant {
        InequalityId::Lr2a => false,
        InequalityId::Lr2 => true,
        other => return Err(Error::Parameters(format!("{other} is not a Rellich inequality"))),
    };
    variant.validate_params(alpha, beta)?;
    let parts = rellich_parts(ws, u, alpha, beta, refined.then_some(r))?;
    let e = parts.e;
    let si = &u.interior;
    let pm = ws.powers(e * alpha - 2.0 * e - 2.0);
    let main = ws.interior_integral(|l, i| e * e * pm.interior[l][i] * ws.gd2[l][i] * si[l].u2[i])?;

    let s = beta + alpha - 4.0;
    let t = beta - alpha;
    let mut b = Builder::new(variant, ws, u, alpha, beta);
    b.note(&parts.lhs);
    b.lhs = Term::new("lhs", parts.lhs.value, parts.lhs.error);
    b.main_integral = main.value;
    b.push("main", variant.constant(alpha, beta), &main);
    if let Some((rv, li, lb)) = &parts.log {
        b.r = Some(*rv);
        b.push("log_interior", s * t / 8.0, li);
        b.push("log_boundary", s * t / (4.0 * (beta - 2.0)), lb);
    }
    b.push("boundary", s * s * t / (4.0 * (beta - 2.0)), &parts.boundary);
    b.push("c_functional", s * t / 4.0, &parts.c);
    Ok(b.finish())
}

/// `2LR2a` or `2LR2`.
pub fn rellich_gradient_check(
    ws: &Workspace,
    u: &FieldSamples,
    alpha: f64,
    beta: f64,
    r: RPolicy,
    variant: InequalityId,
) -> Result<InequalityReport> {
    let refined = match variant {
        InequalityId::TwoLr2a => false,
        InequalityId::TwoLr2 => true,
        other => {
            return Err(Error::Parameters(format!(
                "{other} is not a gradient Rellich inequality"
            )));
        }
    };
    variant.validate_params(alpha, beta)?;
    let parts = rellich_parts(ws, u, alpha, beta, refined.then_some(r))?;
    let e = parts.e;
    let si = &u.interior;
    let pg = ws.powers(e * (alpha - 2.0));
    let main = ws.interior_integral(|l, i| pg.interior[l][i] * si[l].gu2[i])?;

    let s = beta + alpha - 4.0;
    let t = beta - alpha;
    let w = beta + 3.0 * alpha - 8.0;
    let mut b = Builder::new(variant, ws, u, alpha, beta);
    b.note(&parts.lhs);
    b.lhs = Term::new("lhs", parts.lhs.value, parts.lhs.error);
    b.main_integral = main.value;
    b.push("main", variant.constant(alpha, beta), &main);
    if let Some((rv, li, lb)) = &parts.log {
        b.r = Some(*rv);
        b.push("log_interior", w * t / 16.0, li);
        b.push("log_boundary", w * t / (8.0 * (beta - 2.0)), lb);
    }
    b.push("boundary", w * s * t / (8.0 * (beta - 2.0)), &parts.boundary);
    b.push("c_functional", s * t / 4.0, &parts.c);
    Ok(b.finish())
}

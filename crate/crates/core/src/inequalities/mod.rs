//! Term-by-term evaluation of the Hardy, uncertainty and Rellich type
//! inequalities, plus the Green, Stokes and representation identities.
//!
//! Every stored term is divided by `c^{h/(2−β)}`, where `c` is the constant of
//! `Γ = c·d^{2−β₀}` and `h` is the inequality's homogeneity in `Γ^{1/(2−β)}`
//! (recorded in the report). All terms of one inequality share `h`, so the
//! verdict is unchanged and the stored numbers do not depend on `c`.

mod checks;
pub mod green;
mod workspace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checks::{
    c_functional, check, hardy_check, hardy_refined_check, rellich_check, rellich_gradient_check, uncertainty_check,
};
pub use green::{
    green_first_residual, green_second_residual, normalization_check, representation_residual, stokes_mc_interior,
    stokes_residual, Representation, Residual, StokesReport,
};
pub use workspace::{FieldSamples, Workspace};

/// Term labels in the order they appear in CSV output.
pub const TERM_LABELS: [&str; 5] = ["main", "log_interior", "log_boundary", "boundary", "c_functional"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InequalityId {
    #[serde(rename = "LH2a")]
    Lh2a,
    #[serde(rename = "LH2")]
    Lh2,
    #[serde(rename = "UP1a")]
    Up1a,
    #[serde(rename = "UP2a")]
    Up2a,
    #[serde(rename = "UP1")]
    Up1,
    #[serde(rename = "UP2")]
    Up2,
    #[serde(rename = "LR2a")]
    Lr2a,
    #[serde(rename = "LR2")]
    Lr2,
    #[serde(rename = "2LR2a")]
    TwoLr2a,
    #[serde(rename = "2LR2")]
    TwoLr2,
}

impl InequalityId {
    pub const ALL: [InequalityId; 10] = [
        InequalityId::Lh2a,
        InequalityId::Lh2,
        InequalityId::Up1a,
        InequalityId::Up2a,
        InequalityId::Up1,
        InequalityId::Up2,
        InequalityId::Lr2a,
        InequalityId::Lr2,
        InequalityId::TwoLr2a,
        InequalityId::TwoLr2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InequalityId::Lh2a => "LH2a",
            InequalityId::Lh2 => "LH2",
            InequalityId::Up1a => "UP1a",
            InequalityId::Up2a => "UP2a",
            InequalityId::Up1 => "UP1",
            InequalityId::Up2 => "UP2",
            InequalityId::Lr2a => "LR2a",
            InequalityId::Lr2 => "LR2",
            InequalityId::TwoLr2a => "2LR2a",
            InequalityId::TwoLr2 => "2LR2",
        }
    }

    /// Whether the inequality carries the logarithmic refinement and needs `R`.
    pub fn is_refined(self) -> bool {
        matches!(
            self,
            InequalityId::Lh2 | InequalityId::Up1 | InequalityId::Up2 | InequalityId::Lr2 | InequalityId::TwoLr2
        )
    }

    /// Whether the left-hand side involves `𝓛u`.
    pub fn is_second_order(self) -> bool {
        matches!(
            self,
            InequalityId::Lr2a | InequalityId::Lr2 | InequalityId::TwoLr2a | InequalityId::TwoLr2
        )
    }

    /// Whether `α` is a parameter (the uncertainty principles have none).
    pub fn uses_alpha(self) -> bool {
        !matches!(
            self,
            InequalityId::Up1a | InequalityId::Up2a | InequalityId::Up1 | InequalityId::Up2
        )
    }

    /// Checks `(α, β)` against the admissible region, naming the violated bound.
    pub fn validate_params(self, alpha: f64, beta: f64) -> Result<()> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Parameters(format!(
                "non-finite parameters (α = {alpha}, β = {beta})"
            )));
        }
        if beta <= 2.0 {
            return Err(Error::Parameters(format!("β > 2 violated (β = {beta})")));
        }
        let fail = |what: &str| Err(Error::Parameters(format!("{what} violated (α = {alpha}, β = {beta})")));
        match self {
            InequalityId::Lh2a | InequalityId::Lh2 => {
                if alpha <= 2.0 - beta {
                    return fail("α > 2 − β");
                }
            }
            InequalityId::Up1a | InequalityId::Up2a | InequalityId::Up1 | InequalityId::Up2 => {}
            InequalityId::Lr2a | InequalityId::Lr2 => {
                if alpha >= beta {
                    return fail("β > α");
                }
                if alpha <= 4.0 - beta {
                    return fail("α > 4 − β");
                }
            }
            InequalityId::TwoLr2a | InequalityId::TwoLr2 => {
                if alpha >= beta {
                    return fail("β > α");
                }
                if alpha <= (8.0 - beta) / 3.0 {
                    return fail("α > (8 − β)/3");
                }
            }
        }
        Ok(())
    }

    /// The constant in front of the main term.
    pub fn constant(self, alpha: f64, beta: f64) -> f64 {
        match self {
            InequalityId::Lh2a | InequalityId::Lh2 => ((beta + alpha - 2.0) / 2.0).powi(2),
            InequalityId::Up1a | InequalityId::Up2a | InequalityId::Up1 | InequalityId::Up2 => {
                ((beta - 2.0) / 2.0).powi(2)
            }
            InequalityId::Lr2a | InequalityId::Lr2 => (beta + alpha - 4.0).powi(2) * (beta - alpha).powi(2) / 16.0,
            InequalityId::TwoLr2a | InequalityId::TwoLr2 => (beta - alpha).powi(2) / 4.0,
        }
    }

    /// Exponent `h` with every term scaling like `c^{h/(2−β)}`.
    pub fn homogeneity(self, alpha: f64) -> f64 {
        match self {
            InequalityId::Lh2a | InequalityId::Lh2 => alpha,
            InequalityId::Up1a | InequalityId::Up1 => 4.0,
            InequalityId::Up2a | InequalityId::Up2 => 0.0,
            _ => alpha - 2.0,
        }
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InequalityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<InequalityId> {
        InequalityId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown inequality `{s}`")))
    }
}

/// How `R` in the logarithmic refinements is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RPolicy {
    /// `R = 1.05·e·sup Γ^{1/(2−β)}`, the sup taken over all nodes.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    ViolatedWithinError,
    Violated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::ViolatedWithinError => "violated-within-error",
            Verdict::Violated => "violated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub label: String,
    pub value: f64,
    pub error: f64,
}

impl Term {
    pub fn new(label: &str, value: f64, error: f64) -> Term {
        // Floating-point allowance on top of the quadrature error.
        let error = error + 1e-13 * value.abs();
        Term {
            label: label.to_string(),
            value,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: InequalityId,
    pub function: String,
    pub alpha: f64,
    pub beta: f64,
    /// `R` for the refined variants.
    pub r: Option<f64>,
    /// Coefficient of the main term.
    pub constant: f64,
    pub lhs: Term,
    pub rhs_terms: Vec<Term>,
    /// The main term without its coefficient.
    pub main_integral: f64,
    pub slack: f64,
    pub error_total: f64,
    pub verdict: Verdict,
    /// Terms are stored divided by `c^{h/(2−β)}` with this `h`.
    pub homogeneity: f64,
    /// Smallest `|∇_X d|` over the interior nodes.
    pub min_horizontal_gauge: f64,
    pub warnings: Vec<String>,
}

impl InequalityReport {
    /// `lhs − Σ rhs_terms`.
    pub fn recompute_slack(&self) -> f64 {
        self.lhs.value - self.rhs_terms.iter().map(|t| t.value).sum::<f64>()
    }

    /// Sum of all per-term error bars.
    pub fn recompute_error(&self) -> f64 {
        self.lhs.error + self.rhs_terms.iter().map(|t| t.error).sum::<f64>()
    }

    pub fn term(&self, label: &str) -> Option<&Term> {
        self.rhs_terms.iter().find(|t| t.label == label)
    }

    /// Label ↔ value pairs, `lhs` first.
    pub fn breakdown(&self) -> Vec<(String, f64)> {
        std::iter::once(("lhs".to_string(), self.lhs.value))
            .chain(self.rhs_terms.iter().map(|t| (t.label.clone(), t.value)))
            .collect()
    }

    /// `(lhs − boundary terms) / main_integral`.
    pub fn rayleigh_ratio(&self) -> Result<f64> {
        if self.main_integral.abs() < 1e-14 {
            return Err(Error::Degenerate(format!(
                "main integral {:e} is too small for a ratio",
                self.main_integral
            )));
        }
        let boundary: f64 = self
            .rhs_terms
            .iter()
            .filter(|t| t.label == "boundary" || t.label == "c_functional" || t.label == "log_boundary")
            .map(|t| t.value)
            .sum();
        Ok((self.lhs.value - boundary) / self.main_integral)
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

pub(crate) fn verdict(slack: f64, error: f64) -> Verdict {
    if slack >= -error {
        Verdict::Holds
    } else if slack >= -10.0 * error {
        Verdict::ViolatedWithinError
    } else {
        Verdict::Violated
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wedges_name_the_violated_bound() {
        let e = InequalityId::Lr2a.validate_params(0.0, 4.0).unwrap_err().to_string();
        assert!(e.contains("α > 4 − β"), "{e}");
        let e = InequalityId::TwoLr2a.validate_params(0.0, 5.0).unwrap_err().to_string();
        assert!(e.contains("(8 − β)/3"), "{e}");
        assert!(InequalityId::TwoLr2a.validate_params(0.0, 9.0).is_ok());
        assert!(InequalityId::Lr2a.validate_params(1.0, 4.0).is_ok());
        let e = InequalityId::Lh2a.validate_params(0.0, 2.0).unwrap_err().to_string();
        assert!(e.contains("β > 2"), "{e}");
    }

    #[test]
    fn constants() {
        assert_eq!(InequalityId::Lh2a.constant(0.0, 3.0), 0.25);
        assert_eq!(InequalityId::Lr2a.constant(0.0, 5.0), 25.0 / 16.0);
        assert_eq!(InequalityId::TwoLr2a.constant(1.0, 5.0), 4.0);
    }

    #[test]
    fn ids_round_trip() {
        for id in InequalityId::ALL {
            assert_eq!(id.as_str().parse::<InequalityId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.as_str()));
        }
    }

    #[test]
    fn verdict_thresholds() {
        assert_eq!(verdict(-0.5, 1.0), Verdict::Holds);
        assert_eq!(verdict(-5.0, 1.0), Verdict::ViolatedWithinError);
        assert_eq!(verdict(-11.0, 1.0), Verdict::Violated);
    }
}

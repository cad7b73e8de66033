//! Numerical verification of Hardy, Rellich, uncertainty, Green and Stokes
//! identities for sums of squares of triangular vector fields.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod domains;
pub mod error;
pub mod expr;
pub mod frames;
pub mod fundsol;
pub mod inequalities;
mod linalg;
pub mod quadrature;
pub mod scenario;
pub mod sharpness;

pub use battery::standard_battery;
pub use domains::{boundary_form_density, boundary_form_density_wedge, BoundaryPatch, Domain};
pub use error::{Error, Result};
pub use expr::{parse_expression, Expr, ParseError};
pub use frames::{Coefficient, Frame, ScalarField};
pub use fundsol::{FundamentalSolution, GaugeKind};
pub use inequalities::{FieldSamples, InequalityId, InequalityReport, RPolicy, Verdict, Workspace};
pub use quadrature::{IntegralResult, QuadratureScheme};
pub use scenario::{RunRecord, Scenario, SchemeSpec, Task};
pub use sharpness::{optimize_trial, rayleigh_ratio, SharpnessResult, TrialFamily};

//! Robust weighted M-estimation for scalar-on-function logistic regression.
//!
//! Binary responses are linked to functional covariates through
//! `P(y = 1 | X) = F(α + ⟨X, β⟩)`. The slope is restricted to a
//! finite-dimensional basis span (B-splines or a cosine system), the curves
//! are projected onto the basis by quadrature, and the coefficients are
//! estimated by minimizing a bounded-loss objective with covariate weights
//! that discard leverage points. The basis dimension is chosen by a robust
//! BIC-type criterion.
//!
//! Modules:
//! - [`funcbasis`]: grids, curves, basis systems, quadrature projection
//! - [`loss`]: logistic link, deviance, bounded loss families, derivatives
//! - [`weights`]: projection-outlyingness and functional-boxplot weights
//! - [`fit`]: the weighted M-estimator and basis-dimension selection
//! - [`diagnostics`]: predicted probabilities, deviance residuals, QQ data
//! - [`simlab`]: synthetic data generators, contamination schemes, studies
//! - [`cli`]: command-line front end (`fit`, `simulate`, `diagnose`)

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod funcbasis;
pub mod loss;
pub mod simlab;
pub mod weights;

pub use error::{Error, Result};
pub use fit::{FitConfig, FitResult};
pub use funcbasis::{BasisFamily, BasisMatrix, CurveSet, Grid, LabeledSample};
pub use loss::LossSpec;
pub use weights::WeightSpec;

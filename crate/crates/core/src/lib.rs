//! Parametric g-formula estimation for longitudinal data with time-varying
//! confounding.
//!
//! The pipeline fits one model per time-varying covariate plus outcome (and
//! competing-event) models, simulates covariate histories under treatment
//! interventions by Monte Carlo, and averages the predicted hazards or
//! means. Nonparametric natural-course benchmarks, subject-level percentile
//! bootstrap, and an exact enumeration mode for small discrete systems are
//! included.
//!
//! Numerical building blocks (linear algebra, GLM fitting) are generic over
//! [`scalar::Scalar`]; the pipeline works in `f64`, and the aliases below
//! name the concrete types.

pub mod analysis;
pub mod config;
pub mod covariate;
pub mod engine;
pub mod error;
pub mod fitting;
pub mod formula;
pub mod history;
pub mod inference;
pub mod intervention;
pub mod linalg;
pub mod nonparametric;
pub mod panel;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod table;

pub use analysis::{run_analysis, Analysis, AnalysisResult};
pub use config::AnalysisConfig;
pub use engine::{enumerate_gformula, fit_all, prepare, risk_curve, simulate, FittedSuite, ModelSpec, Plugins, RunConfig, SimResult};
pub use error::{Error, Result};
pub use panel::{load_panel, OutcomeKind, PanelDataset, Schema};

pub type Matrix = linalg::Matrix<f64>;
pub type DesignMatrix = formula::DesignMatrix<f64>;
pub type FittedModel = fitting::FittedModel<f64>;
pub type ModelDiagnostics = fitting::ModelDiagnostics<f64>;
pub type Truncation = fitting::Truncation<f64>;

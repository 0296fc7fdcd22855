//! Model statement language: `response ~ term + term ...`.
//!
//! Terms are a bare variable, `pow(x, p)`, `factor(x)` or
//! `rcs(x, k1, k2, k3, ...)`. `y ~ 1` is the intercept-only model; every
//! design carries an intercept.

mod design;
mod parse;
mod spline;

use std::fmt;

pub use design::{build_design, BoundDesign, DesignMatrix, DesignSpec};
pub use parse::parse_formula;
pub use spline::{rcs_basis, rcs_fill};

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(String),
    Power(String, u32),
    Factor(String),
    Spline(String, Vec<f64>),
}

impl Term {
    pub fn variable(&self) -> &str {
        match self {
            Term::Var(v) | Term::Power(v, _) | Term::Factor(v) | Term::Spline(v, _) => v,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Power(v, p) => write!(f, "pow({v}, {p})"),
            Term::Factor(v) => write!(f, "factor({v})"),
            Term::Spline(v, knots) => {
                write!(f, "rcs({v}")?;
                for k in knots {
                    write!(f, ", {k}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFormula {
    pub response: String,
    /// Explicit terms; empty for the intercept-only model.
    pub terms: Vec<Term>,
}

impl ModelFormula {
    /// Distinct right-hand-side variables in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.terms {
            if !out.contains(&t.variable()) {
                out.push(t.variable());
            }
        }
        out
    }
}

impl fmt::Display for ModelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ ", self.response)?;
        if self.terms.is_empty() {
            return write!(f, "1");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ModelFormula {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

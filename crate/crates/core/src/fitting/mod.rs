//! Maximum-likelihood fitting of the conditional models.

mod glm;
mod multinomial;
pub mod normal;
mod truncnorm;

use serde::{Deserialize, Serialize};

pub use glm::{fit_binomial, fit_gaussian};
pub use multinomial::fit_multinomial;
pub use truncnorm::{fit_truncated_normal, truncated_normal_draw, truncated_normal_loglik};

use crate::error::{Error, Result};
use crate::formula::DesignMatrix;
use crate::linalg::{dot, Matrix, Qr};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Binomial,
    Gaussian,
    Multinomial,
    TruncatedNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    Probit,
    Identity,
    Log,
}

impl Link {
    pub fn inverse<T: Scalar>(self, eta: T) -> T {
        match self {
            Link::Logit => {
                if eta >= T::zero() {
                    T::one() / (T::one() + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (T::one() + e)
                }
            }
            Link::Probit => normal::cdf(eta),
            Link::Identity => eta,
            Link::Log => eta.exp(),
        }
    }

    pub fn parse(name: &str) -> Option<Link> {
        match name {
            "logit" => Some(Link::Logit),
            "probit" => Some(Link::Probit),
            "identity" => Some(Link::Identity),
            "log" => Some(Link::Log),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Support is `(point, ∞)`.
    Left,
    /// Support is `(-∞, point)`.
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation<T> {
    pub point: T,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDiagnostics<T> {
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: T,
    /// Root mean squared raw residual over the fitting records.
    pub rmse: T,
    /// Fitted probabilities numerically 0 or 1 occurred.
    pub separation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<T> {
    pub family: Family,
    pub link: Link,
    pub column_names: Vec<String>,
    /// One row per linear predictor: a single row, or one row per
    /// non-reference level for multinomial models.
    pub coefficients: Matrix<T>,
    /// Standard errors laid out like `coefficients`.
    pub stderrs: Matrix<T>,
    /// `RSS / (n - p)` for gaussian and truncated-normal models.
    pub residual_mse: Option<T>,
    /// Maximum-likelihood scale of a truncated-normal model.
    pub sigma: Option<T>,
    pub truncation: Option<Truncation<T>>,
    /// Response levels of a multinomial model, reference first.
    pub levels: Vec<T>,
    pub observed_range: (T, T),
    pub n_obs: usize,
    pub diagnostics: ModelDiagnostics<T>,
}

impl<T: Scalar> FittedModel<T> {
    pub fn width(&self) -> usize {
        self.coefficients.cols()
    }

    fn check(&self, row: &[T]) -> Result<()> {
        if row.len() != self.width() {
            return Err(Error::Shape {
                expected: self.width(),
                found: row.len(),
            });
        }
        Ok(())
    }

    pub fn linear_predictor(&self, row: &[T]) -> Result<T> {
        self.check(row)?;
        Ok(dot(self.coefficients.row(0), row))
    }

    /// Mean (or event probability) for a single-predictor model.
    pub fn predict_mean(&self, row: &[T]) -> Result<T> {
        if self.family == Family::Multinomial {
            return Err(Error::Argument(
                "multinomial models predict a probability vector".into(),
            ));
        }
        Ok(self.link.inverse(self.linear_predictor(row)?))
    }

    /// Class probabilities over `levels` (reference first).
    pub fn predict_probs(&self, row: &[T]) -> Result<Vec<T>> {
        self.check(row)?;
        Ok(softmax_probs(&self.coefficients, row))
    }

    /// Mean as a one-element vector, or the multinomial probability vector.
    pub fn predict(&self, row: &[T]) -> Result<Vec<T>> {
        match self.family {
            Family::Multinomial => self.predict_probs(row),
            _ => Ok(vec![self.predict_mean(row)?]),
        }
    }
}

pub(crate) fn softmax_probs<T: Scalar>(coef: &Matrix<T>, row: &[T]) -> Vec<T> {
    let etas: Vec<T> = (0..coef.rows()).map(|c| dot(coef.row(c), row)).collect();
    let mx = etas.iter().fold(T::zero(), |m, &e| m.max(e));
    let mut p = Vec::with_capacity(etas.len() + 1);
    p.push((-mx).exp());
    p.extend(etas.iter().map(|&e| (e - mx).exp()));
    let s: T = p.iter().copied().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

pub(crate) fn rank_check<T: Scalar>(design: &DesignMatrix<T>) -> Result<()> {
    if design.nrows() == 0 {
        return Err(Error::Fit("no fitting records".into()));
    }
    let qr = Qr::new(&design.values, T::tol(1e-7));
    if !qr.aliased.is_empty() {
        return Err(Error::RankDeficient(
            qr.aliased
                .iter()
                .map(|&j| design.column_names[j].clone())
                .collect(),
        ));
    }
    Ok(())
}

pub(crate) fn response_range<T: Scalar>(y: &[T]) -> (T, T) {
    y.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

pub(crate) fn rmse<T: Scalar>(x: &Matrix<T>, y: &[T], fitted: impl Fn(&[T]) -> T) -> T {
    let n = y.len();
    let ss: T = (0..n)
        .map(|i| {
            let r = y[i] - fitted(x.row(i));
            r * r
        })
        .sum();
    (ss / T::lit(n as f64)).sqrt()
}

pub(crate) fn single_row<T: Scalar>(v: Vec<T>) -> Matrix<T> {
    let p = v.len();
    Matrix::from_vec(1, p, v)
}

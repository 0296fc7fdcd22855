use super::{
    normal, rank_check, response_range, rmse, single_row, Family, FittedModel, Link,
    ModelDiagnostics,
};
use crate::error::{Error, Result};
use crate::formula::DesignMatrix;
use crate::linalg::{dot, spd_inverse, spd_solve, weighted_gram, weighted_xty, Matrix, Qr};
use crate::scalar::Scalar;

const MAX_ITER: usize = 100;

struct IrlsOutcome<T> {
    beta: Vec<T>,
    info: Matrix<T>,
    converged: bool,
    iterations: usize,
}

/// Mean, derivative of the mean wrt eta, and variance function.
fn moments<T: Scalar>(link: Link, family: Family, eta: T) -> (T, T, T) {
    let mu = link.inverse(eta);
    let dmu = match link {
        Link::Logit => mu * (T::one() - mu),
        Link::Probit => normal::pdf(eta),
        Link::Identity => T::one(),
        Link::Log => mu,
    };
    let var = match family {
        Family::Binomial => mu * (T::one() - mu),
        _ => T::one(),
    };
    (mu, dmu, var)
}

fn deviance<T: Scalar>(family: Family, y: &[T], mu: &[T]) -> T {
    let tiny = T::min_positive_value();
    y.iter()
        .zip(mu)
        .map(|(&y, &m)| match family {
            Family::Binomial => {
                let a = if y > T::zero() { y * (y / m.max(tiny)).ln() } else { T::zero() };
                let b = if y < T::one() {
                    (T::one() - y) * ((T::one() - y) / (T::one() - m).max(tiny)).ln()
                } else {
                    T::zero()
                };
                T::lit(2.0) * (a + b)
            }
            _ => (y - m) * (y - m),
        })
        .sum()
}

fn irls<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    family: Family,
    link: Link,
    start_eta: T,
) -> Result<IrlsOutcome<T>> {
    let n = x.rows();
    let p = x.cols();
    let eps = T::epsilon();
    let mut eta = vec![start_eta; n];
    let mut beta = vec![T::zero(); p];
    let mut mu: Vec<T> = eta.iter().map(|&e| link.inverse(e)).collect();
    let mut dev = deviance(family, y, &mu);
    let mut converged = false;
    let mut iterations = 0;
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    for it in 1..=MAX_ITER {
        iterations = it;
        for i in 0..n {
            let (m, d, v) = moments(link, family, eta[i]);
            let v = v.max(eps * eps);
            let d = if d.abs() < eps * eps { eps * eps } else { d };
            w[i] = d * d / v;
            z[i] = eta[i] + (y[i] - m) / d;
        }
        let g = weighted_gram(x, &w);
        let rhs = weighted_xty(x, &w, &z);
        let Some(cand) = spd_solve(&g, &rhs) else {
            if it == 1 {
                return Err(Error::Fit("weighted normal equations are singular".into()));
            }
            break;
        };
        // Step halving keeps the deviance from increasing.
        let mut step = T::one();
        let mut new_beta = cand.clone();
        let mut new_dev = T::infinity();
        for _ in 0..30 {
            new_beta = beta
                .iter()
                .zip(&cand)
                .map(|(&b, &c)| b + step * (c - b))
                .collect();
            let ok = (0..n).all(|i| {
                let e = dot(x.row(i), &new_beta);
                eta[i] = e;
                mu[i] = link.inverse(e);
                mu[i].is_finite()
            });
            new_dev = deviance(family, y, &mu);
            if ok && new_dev.is_finite() && (it == 1 || new_dev <= dev * (T::one() + T::lit(1e-12)) + eps) {
                break;
            }
            step = step * T::lit(0.5);
        }
        if !new_dev.is_finite() {
            return Err(Error::Fit("iterations diverged (non-finite deviance)".into()));
        }
        let change = beta
            .iter()
            .zip(&new_beta)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        let rel = (dev - new_dev).abs() / (new_dev.abs() + T::lit(0.1));
        beta = new_beta;
        dev = new_dev;
        if change < T::tol(1e-8) || rel < T::tol(1e-10) {
            converged = true;
            break;
        }
    }
    for i in 0..n {
        let (_, d, v) = moments(link, family, eta[i]);
        w[i] = d * d / v.max(eps * eps);
    }
    Ok(IrlsOutcome {
        beta,
        info: weighted_gram(x, &w),
        converged,
        iterations,
    })
}

fn stderrs<T: Scalar>(info: &Matrix<T>, scale: T) -> Vec<T> {
    match spd_inverse(info) {
        Some(inv) => inv.diagonal().into_iter().map(|v| (v * scale).sqrt()).collect(),
        None => vec![T::nan(); info.rows()],
    }
}

/// Logistic or probit regression by iteratively reweighted least squares.
pub fn fit_binomial<T: Scalar>(design: &DesignMatrix<T>, link: Link) -> Result<FittedModel<T>> {
    if !matches!(link, Link::Logit | Link::Probit) {
        return Err(Error::Argument(format!("binomial models take a logit or probit link, not {link:?}")));
    }
    let y = &design.response;
    if let Some(v) = y.iter().find(|&&v| v != T::zero() && v != T::one()) {
        return Err(Error::Fit(format!("binomial response has value {v} outside {{0, 1}}")));
    }
    rank_check(design)?;
    let x = &design.values;
    let n = x.rows();
    let ybar = y.iter().copied().sum::<T>() / T::lit(n as f64);
    let start = ybar.max(T::lit(0.01)).min(T::lit(0.99));
    let start_eta = match link {
        Link::Logit => (start / (T::one() - start)).ln(),
        _ => normal::quantile(start),
    };
    let out = irls(x, y, Family::Binomial, link, start_eta)?;
    let mus: Vec<T> = (0..n).map(|i| link.inverse(dot(x.row(i), &out.beta))).collect();
    let edge = T::lit(10.0) * T::epsilon();
    let separation = mus.iter().any(|&m| m < edge || m > T::one() - edge);
    let ll: T = y
        .iter()
        .zip(&mus)
        .map(|(&y, &m)| {
            if y == T::one() {
                m.max(T::min_positive_value()).ln()
            } else {
                (T::one() - m).max(T::min_positive_value()).ln()
            }
        })
        .sum();
    let beta = out.beta.clone();
    Ok(FittedModel {
        family: Family::Binomial,
        link,
        column_names: design.column_names.clone(),
        stderrs: single_row(stderrs(&out.info, T::one())),
        coefficients: single_row(out.beta),
        residual_mse: None,
        sigma: None,
        truncation: None,
        levels: Vec::new(),
        observed_range: response_range(y),
        n_obs: n,
        diagnostics: ModelDiagnostics {
            converged: out.converged && !separation,
            iterations: out.iterations,
            log_likelihood: ll,
            rmse: rmse(x, y, |r| link.inverse(dot(r, &beta))),
            separation,
        },
    })
}

/// Linear regression (identity link, solved directly) or log-link gaussian GLM.
pub fn fit_gaussian<T: Scalar>(design: &DesignMatrix<T>, link: Link) -> Result<FittedModel<T>> {
    if !matches!(link, Link::Identity | Link::Log) {
        return Err(Error::Argument(format!("gaussian models take an identity or log link, not {link:?}")));
    }
    let x = &design.values;
    let y = &design.response;
    let (n, p) = (x.rows(), x.cols());
    if n <= p {
        return Err(Error::DegreesOfFreedom { n, p });
    }
    rank_check(design)?;
    let (beta, info, converged, iterations) = match link {
        Link::Identity => {
            let beta = Qr::new(x, T::tol(1e-7)).solve(y);
            (beta, weighted_gram(x, &vec![T::one(); n]), true, 1)
        }
        _ => {
            let ybar = y.iter().copied().sum::<T>() / T::lit(n as f64);
            if !(ybar > T::zero()) {
                return Err(Error::Fit("log link needs a positive response mean".into()));
            }
            let out = irls(x, y, Family::Gaussian, link, ybar.ln())?;
            (out.beta, out.info, out.converged, out.iterations)
        }
    };
    let fitted = |r: &[T]| link.inverse(dot(r, &beta));
    let rss: T = (0..n)
        .map(|i| {
            let r = y[i] - fitted(x.row(i));
            r * r
        })
        .sum();
    let mse = rss / T::lit((n - p) as f64);
    let nf = T::lit(n as f64);
    let two_pi = T::lit(2.0 * std::f64::consts::PI);
    let ll = if rss > T::zero() {
        -nf / T::lit(2.0) * ((two_pi * rss / nf).ln() + T::one())
    } else {
        T::infinity()
    };
    let rm = rmse(x, y, fitted);
    Ok(FittedModel {
        family: Family::Gaussian,
        link,
        column_names: design.column_names.clone(),
        stderrs: single_row(stderrs(&info, mse)),
        coefficients: single_row(beta),
        residual_mse: Some(mse),
        sigma: None,
        truncation: None,
        levels: Vec::new(),
        observed_range: response_range(y),
        n_obs: n,
        diagnostics: ModelDiagnostics {
            converged,
            iterations,
            log_likelihood: ll,
            rmse: rm,
            separation: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(rows: Vec<Vec<f64>>, y: Vec<f64>) -> DesignMatrix<f64> {
        let names = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
        DesignMatrix::new(names, Matrix::from_rows(&rows), y).unwrap()
    }

    #[test]
    fn intercept_only_logit_is_zero() {
        let y: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let m = fit_binomial(&design(vec![vec![1.0]; 100], y), Link::Logit).unwrap();
        assert!(m.coefficients[(0, 0)].abs() < 1e-12);
        assert!(m.diagnostics.converged);
        assert!((m.predict_mean(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn probit_matches_empirical_proportion() {
        let y: Vec<f64> = (0..40).map(|i| (i % 4 == 0) as u8 as f64).collect();
        let m = fit_binomial(&design(vec![vec![1.0]; 40], y), Link::Probit).unwrap();
        assert!((m.predict_mean(&[1.0]).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn separation_is_flagged_not_fatal() {
        let rows = (0..20).map(|i| vec![1.0, i as f64]).collect();
        let y = (0..20).map(|i| (i >= 10) as u8 as f64).collect();
        let m = fit_binomial(&design(rows, y), Link::Logit).unwrap();
        assert!(!m.diagnostics.converged);
    }

    #[test]
    fn gaussian_examples() {
        let m = fit_gaussian(&design(vec![vec![1.0]; 3], vec![1.0, 2.0, 3.0]), Link::Identity).unwrap();
        assert!((m.coefficients[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((m.residual_mse.unwrap() - 1.0).abs() < 1e-14);
        let rows = (0..5).map(|i| vec![1.0, i as f64]).collect();
        let y = (0..5).map(|i| 2.0 * i as f64 + 1.0).collect();
        let m = fit_gaussian(&design(rows, y), Link::Identity).unwrap();
        assert!((m.coefficients[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((m.coefficients[(0, 1)] - 2.0).abs() < 1e-12);
        assert!(m.residual_mse.unwrap() < 1e-20);
        let e = fit_gaussian(&design(vec![vec![1.0, 2.0]; 2], vec![1.0, 2.0]), Link::Identity);
        assert_eq!(e.unwrap_err(), Error::DegreesOfFreedom { n: 2, p: 2 });
    }

    #[test]
    fn log_link_recovers_exponential_mean() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![1.0, i as f64 / 10.0]).collect();
        let y = rows.iter().map(|r| (0.5 + 0.3 * r[1]).exp()).collect();
        let m = fit_gaussian(&design(rows, y), Link::Log).unwrap();
        assert!((m.coefficients[(0, 0)] - 0.5).abs() < 1e-8);
        assert!((m.coefficients[(0, 1)] - 0.3).abs() < 1e-8);
        let zero = FittedModel {
            coefficients: single_row(vec![0.0]),
            ..m.clone()
        };
        assert_eq!(zero.predict_mean(&[1.0]).unwrap(), 1.0);
        assert!(matches!(zero.predict_mean(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let rows = (0..6).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let y = (0..6).map(|i| (i % 2) as f64).collect();
        let e = fit_binomial(&design(rows, y), Link::Logit).unwrap_err();
        assert_eq!(e, Error::RankDeficient(vec!["x2".into()]));
    }
}

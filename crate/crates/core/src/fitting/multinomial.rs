use super::{rank_check, response_range, softmax_probs, Family, FittedModel, Link, ModelDiagnostics};
use crate::error::{Error, Result};
use crate::formula::DesignMatrix;
use crate::linalg::{spd_inverse, spd_solve, Matrix};
use crate::scalar::Scalar;

const MAX_ITER: usize = 100;

fn log_lik<T: Scalar>(x: &Matrix<T>, cls: &[usize], coef: &Matrix<T>) -> T {
    (0..x.rows())
        .map(|i| softmax_probs(coef, x.row(i))[cls[i]].max(T::min_positive_value()).ln())
        .sum()
}

/// Multinomial logistic regression by Newton's method on the joint
/// log-likelihood. `levels[0]` is the reference category.
pub fn fit_multinomial<T: Scalar>(design: &DesignMatrix<T>, levels: &[T]) -> Result<FittedModel<T>> {
    let m = levels.len();
    if m < 2 {
        return Err(Error::Fit(format!("multinomial model needs at least 2 levels, got {m}")));
    }
    let y = &design.response;
    let cls = y
        .iter()
        .map(|v| {
            levels
                .iter()
                .position(|l| l == v)
                .ok_or_else(|| Error::Fit(format!("response value {v} is not a declared level")))
        })
        .collect::<Result<Vec<usize>>>()?;
    for (c, l) in levels.iter().enumerate() {
        if !cls.contains(&c) {
            return Err(Error::Fit(format!("level {l} is absent from the fitting records")));
        }
    }
    rank_check(design)?;
    let x = &design.values;
    let (n, p) = (x.rows(), x.cols());
    let k = m - 1;
    let q = k * p;
    let mut coef = Matrix::zeros(k, p);
    let mut ll = log_lik(x, &cls, &coef);
    let mut converged = false;
    let mut iterations = 0;
    let mut neg_h = Matrix::zeros(q, q);
    for it in 1..=MAX_ITER {
        iterations = it;
        let mut grad = vec![T::zero(); q];
        neg_h = Matrix::zeros(q, q);
        for i in 0..n {
            let r = x.row(i);
            let pr = softmax_probs(&coef, r);
            for c in 0..k {
                let resid = if cls[i] == c + 1 { T::one() } else { T::zero() } - pr[c + 1];
                for a in 0..p {
                    grad[c * p + a] += resid * r[a];
                }
                for d in 0..=c {
                    let w = if c == d {
                        pr[c + 1] * (T::one() - pr[c + 1])
                    } else {
                        -pr[c + 1] * pr[d + 1]
                    };
                    for a in 0..p {
                        let wa = w * r[a];
                        for b in 0..p {
                            neg_h[(c * p + a, d * p + b)] += wa * r[b];
                        }
                    }
                }
            }
        }
        for u in 0..q {
            for v in 0..u {
                neg_h[(v, u)] = neg_h[(u, v)];
            }
        }
        let Some(delta) = spd_solve(&neg_h, &grad) else {
            break;
        };
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..30 {
            let mut cand = coef.clone();
            for c in 0..k {
                for a in 0..p {
                    cand[(c, a)] += step * delta[c * p + a];
                }
            }
            let cl = log_lik(x, &cls, &cand);
            if cl.is_finite() && cl >= ll - T::lit(1e-12) * ll.abs() {
                accepted = Some((cand, cl));
                break;
            }
            step = step * T::lit(0.5);
        }
        let Some((cand, cl)) = accepted else {
            break;
        };
        let change = delta.iter().fold(T::zero(), |mx, d| mx.max((*d * step).abs()));
        let rel = (cl - ll).abs() / (cl.abs() + T::lit(0.1));
        coef = cand;
        ll = cl;
        if change < T::tol(1e-8) || rel < T::tol(1e-10) {
            converged = true;
            break;
        }
    }
    let se = match spd_inverse(&neg_h) {
        Some(inv) => Matrix::from_vec(k, p, inv.diagonal().into_iter().map(|v| v.sqrt()).collect()),
        None => Matrix::from_vec(k, p, vec![T::nan(); q]),
    };
    let edge = T::lit(10.0) * T::epsilon();
    let mut separation = false;
    let mut ss = T::zero();
    for i in 0..n {
        let pr = softmax_probs(&coef, x.row(i));
        separation |= pr.iter().any(|&v| v < edge);
        // Raw residual on the level-code scale: observed code minus expected code.
        let expect: T = pr.iter().zip(levels).map(|(&a, &b)| a * b).sum();
        ss += (y[i] - expect) * (y[i] - expect);
    }
    Ok(FittedModel {
        family: Family::Multinomial,
        link: Link::Logit,
        column_names: design.column_names.clone(),
        coefficients: coef,
        stderrs: se,
        residual_mse: None,
        sigma: None,
        truncation: None,
        levels: levels.to_vec(),
        observed_range: response_range(y),
        n_obs: n,
        diagnostics: ModelDiagnostics {
            converged: converged && !separation,
            iterations,
            log_likelihood: ll,
            rmse: (ss / T::lit(n as f64)).sqrt(),
            separation,
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
    fn probabilities_sum_to_one_and_depend_only_on_row() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![1.0, (i % 7) as f64]).collect();
        let y = (0..60).map(|i| ((i * 7 + i / 5) % 3) as f64).collect();
        let m = fit_multinomial(&design(rows, y), &[0.0, 1.0, 2.0]).unwrap();
        let p = m.predict_probs(&[1.0, 3.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p, m.predict_probs(&[1.0, 3.0]).unwrap());
    }

    #[test]
    fn zero_coefficients_are_uniform() {
        let y = vec![0.0, 1.0, 2.0, 0.0];
        let mut m = fit_multinomial(&design(vec![vec![1.0]; 4], y), &[0.0, 1.0, 2.0]).unwrap();
        m.coefficients = Matrix::zeros(2, 1);
        for v in m.predict_probs(&[1.0]).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn absent_level_is_named() {
        let e = fit_multinomial(&design(vec![vec![1.0]; 3], vec![0.0, 2.0, 0.0]), &[0.0, 1.0, 2.0]).unwrap_err();
        assert_eq!(e, Error::Fit("level 1 is absent from the fitting records".into()));
    }
}

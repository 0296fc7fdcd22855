use super::{
    normal, rank_check, response_range, rmse, single_row, Direction, Family, FittedModel, Link,
    ModelDiagnostics, Truncation,
};
use crate::error::{Error, Result};
use crate::formula::DesignMatrix;
use crate::linalg::{cholesky, cholesky_solve, dot, spd_inverse, Matrix, Qr};
use crate::scalar::Scalar;

const MAX_ITER: usize = 200;

struct Problem<'a, T> {
    x: &'a Matrix<T>,
    y: &'a [T],
    point: T,
    sign: T,
}

struct Eval<T> {
    ll: T,
    grad: Vec<T>,
    neg_h: Matrix<T>,
}

impl<T: Scalar> Problem<'_, T> {
    fn ll(&self, theta: &[T]) -> T {
        let p = self.x.cols();
        let s = theta[p];
        let sigma = s.exp();
        let half_log_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
        (0..self.x.rows())
            .map(|i| {
                let eta = dot(self.x.row(i), &theta[..p]);
                let r = (self.y[i] - eta) / sigma;
                let c = self.sign * (eta - self.point) / sigma;
                -T::lit(0.5) * r * r - half_log_2pi - s - normal::log_cdf(c)
            })
            .sum()
    }

    fn eval(&self, theta: &[T]) -> Eval<T> {
        let p = self.x.cols();
        let q = p + 1;
        let s = theta[p];
        let sigma = s.exp();
        let mut grad = vec![T::zero(); q];
        let mut h = Matrix::zeros(q, q);
        for i in 0..self.x.rows() {
            let xr = self.x.row(i);
            let eta = dot(xr, &theta[..p]);
            let r = (self.y[i] - eta) / sigma;
            let c = self.sign * (eta - self.point) / sigma;
            let (lam, lp, c_lam, c2_lp) = if c.is_infinite() {
                (T::zero(), T::zero(), T::zero(), T::zero())
            } else {
                let lam: T = normal::inv_mills(c);
                let lp = -lam * (c + lam);
                (lam, lp, c * lam, c * c * lp)
            };
            let gb = (r - self.sign * lam) / sigma;
            let hbb = (T::one() + lp) / (sigma * sigma);
            let hbs = (T::lit(2.0) * r - self.sign * (lp * c + lam)) / sigma;
            for a in 0..p {
                grad[a] += gb * xr[a];
                h[(a, p)] += hbs * xr[a];
                for b in 0..=a {
                    h[(a, b)] += hbb * xr[a] * xr[b];
                }
            }
            grad[p] += r * r - T::one() + c_lam;
            h[(p, p)] += T::lit(2.0) * r * r + c_lam + c2_lp;
        }
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        for a in 0..p {
            h[(p, a)] = h[(a, p)];
        }
        Eval {
            ll: self.ll(theta),
            grad,
            neg_h: h,
        }
    }
}

/// Truncated-normal regression over `(β, log σ)` by damped Newton iterations.
/// Use `point = -∞` (left) or `+∞` (right) for an untruncated normal model.
pub fn fit_truncated_normal<T: Scalar>(
    design: &DesignMatrix<T>,
    point: T,
    direction: Direction,
) -> Result<FittedModel<T>> {
    let x = &design.values;
    let y = &design.response;
    let (n, p) = (x.rows(), x.cols());
    let sign = match direction {
        Direction::Left => T::one(),
        Direction::Right => -T::one(),
    };
    if let Some(v) = y.iter().find(|&&v| !(sign * (v - point) > T::zero())) {
        let side = if sign > T::zero() { "above" } else { "below" };
        return Err(Error::Input(format!(
            "truncated-normal response {v} is not {side} the truncation point {point}"
        )));
    }
    if n <= p + 1 {
        return Err(Error::DegreesOfFreedom { n, p: p + 1 });
    }
    rank_check(design)?;
    let ols = Qr::new(x, T::tol(1e-7)).solve(y);
    let rss0: T = (0..n).map(|i| (y[i] - dot(x.row(i), &ols)).powi(2)).sum();
    let sd0 = (rss0 / T::lit(n as f64)).sqrt().max(T::lit(1e-8));
    let mut theta = ols;
    theta.push(sd0.ln());
    let prob = Problem { x, y, point, sign };
    let mut cur = prob.eval(&theta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let gmax = cur.grad.iter().fold(T::zero(), |m, g| m.max(g.abs()));
        if gmax < T::tol(1e-10) {
            converged = true;
            break;
        }
        // Levenberg damping when the negative Hessian is not positive definite.
        let mut ridge = T::zero();
        let delta = loop {
            let mut a = cur.neg_h.clone();
            for d in 0..=p {
                a[(d, d)] += ridge;
            }
            if let Some(l) = cholesky(&a) {
                break cholesky_solve(&l, &cur.grad);
            }
            ridge = if ridge == T::zero() { T::lit(1e-6) } else { ridge * T::lit(10.0) };
        };
        let mut step = T::one();
        let mut next = None;
        for _ in 0..40 {
            let cand: Vec<T> = theta.iter().zip(&delta).map(|(&t, &d)| t + step * d).collect();
            let ll = prob.ll(&cand);
            if ll.is_finite() && ll >= cur.ll {
                next = Some(cand);
                break;
            }
            step = step * T::lit(0.5);
        }
        let Some(cand) = next else {
            converged = gmax < T::tol(1e-6);
            break;
        };
        let change = delta.iter().fold(T::zero(), |m, d| m.max((*d * step).abs()));
        theta = cand;
        cur = prob.eval(&theta);
        if change < T::tol(1e-12) {
            converged = true;
            break;
        }
    }
    let beta = theta[..p].to_vec();
    let sigma = theta[p].exp();
    let se = match spd_inverse(&cur.neg_h) {
        Some(inv) => inv.diagonal()[..p].iter().map(|v| v.sqrt()).collect(),
        None => vec![T::nan(); p],
    };
    let rss: T = (0..n).map(|i| (y[i] - dot(x.row(i), &beta)).powi(2)).sum();
    let rm = rmse(x, y, |r| dot(r, &beta));
    Ok(FittedModel {
        family: Family::TruncatedNormal,
        link: Link::Identity,
        column_names: design.column_names.clone(),
        coefficients: single_row(beta),
        stderrs: single_row(se),
        residual_mse: Some(rss / T::lit((n - p) as f64)),
        sigma: Some(sigma),
        truncation: Some(Truncation { point, direction }),
        levels: Vec::new(),
        observed_range: response_range(y),
        n_obs: n,
        diagnostics: ModelDiagnostics {
            converged,
            iterations,
            log_likelihood: cur.ll,
            rmse: rm,
            separation: false,
        },
    })
}

/// Log-likelihood of a truncated-normal model at `(β, log σ)`.
pub fn truncated_normal_loglik<T: Scalar>(
    design: &DesignMatrix<T>,
    point: T,
    direction: Direction,
    theta: &[T],
) -> T {
    let sign = match direction {
        Direction::Left => T::one(),
        Direction::Right => -T::one(),
    };
    Problem {
        x: &design.values,
        y: &design.response,
        point,
        sign,
    }
    .ll(theta)
}

/// Inverse-CDF draw from `N(mu, sigma²)` restricted to the truncation side,
/// driven by the uniform `u`.
pub fn truncated_normal_draw<T: Scalar>(mu: T, sigma: T, trunc: Option<Truncation<T>>, u: T) -> T {
    let u = u.max(T::min_positive_value()).min(T::one() - T::epsilon());
    let Some(tr) = trunc else {
        return mu + sigma * normal::quantile(u);
    };
    let (sign, point) = match tr.direction {
        Direction::Left => (T::one(), tr.point),
        Direction::Right => (-T::one(), tr.point),
    };
    // Work on the left-truncated standardised scale, mirroring right truncation.
    let alpha = sign * (point - mu) / sigma;
    let z = if alpha.is_infinite() && alpha < T::zero() {
        normal::quantile(u)
    } else if alpha < T::zero() {
        let f: T = normal::cdf(alpha);
        normal::quantile((f + u * (T::one() - f)).min(T::one() - T::epsilon()))
    } else {
        let tail: T = normal::cdf(-alpha);
        let v = ((T::one() - u) * tail).max(T::min_positive_value());
        -normal::quantile(v)
    };
    mu + sign * sigma * z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_respect_the_truncation_side() {
        let left = Some(Truncation { point: 1.0, direction: Direction::Left });
        let right = Some(Truncation { point: 1.0, direction: Direction::Right });
        for i in 1..100 {
            let u = i as f64 / 100.0;
            assert!(truncated_normal_draw(0.0, 1.0, left, u) > 1.0);
            assert!(truncated_normal_draw(3.0, 0.5, left, u) > 1.0);
            assert!(truncated_normal_draw(0.0, 1.0, right, u) < 1.0);
            assert!(truncated_normal_draw(-10.0, 1.0, right, u) < 1.0);
        }
        let median = truncated_normal_draw(0.0, 1.0, left, 0.5);
        let expect = -normal::quantile(0.5 * normal::cdf(-1.0));
        assert!((median - expect).abs() < 1e-12);
    }

    #[test]
    fn rejects_response_on_wrong_side() {
        let d = DesignMatrix::new(vec!["(Intercept)".into()], Matrix::from_vec(3, 1, vec![1.0; 3]), vec![0.5, 2.0, 3.0]).unwrap();
        assert!(matches!(fit_truncated_normal(&d, 1.0, Direction::Left), Err(Error::Input(_))));
    }

    #[test]
    fn analytic_hessian_matches_numeric() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 20.0).collect();
        let y: Vec<f64> = xs.iter().enumerate().map(|(i, x)| 1.2 + 0.6 * x + ((i * 7) % 11) as f64 / 8.0 - 0.4).collect();
        let mut vals = Vec::new();
        for x in &xs {
            vals.extend([1.0, *x]);
        }
        let x = Matrix::from_vec(40, 2, vals);
        let prob = Problem { x: &x, y: &y, point: 0.9, sign: 1.0 };
        let theta = [0.8, 0.5, (-0.3f64)];
        let e = prob.eval(&theta);
        let h = 1e-5;
        for a in 0..3 {
            let mut up = theta;
            let mut dn = theta;
            up[a] += h;
            dn[a] -= h;
            let (gu, gd) = (prob.eval(&up).grad, prob.eval(&dn).grad);
            for b in 0..3 {
                let num = -(gu[b] - gd[b]) / (2.0 * h);
                assert!((num - e.neg_h[(a, b)]).abs() < 1e-5 * (1.0 + num.abs()), "({a}, {b}): {num} vs {}", e.neg_h[(a, b)]);
            }
        }
    }
}

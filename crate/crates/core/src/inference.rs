//! Percentile bootstrap, contrasts against a reference intervention, and
//! hazard ratios between simulated interventions.

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::SimResult;
use crate::error::{Error, Result};
use crate::fitting::{fit_binomial, Link};
use crate::formula::DesignMatrix;
use crate::linalg::Matrix;
use crate::panel::PanelDataset;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

/// Outputs of the successful replicates, in replicate order.
#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap<T> {
    pub replicates: Vec<(usize, T)>,
    pub failures: Vec<ReplicateFailure>,
}

impl<T> Bootstrap<T> {
    pub fn effective(&self) -> usize {
        self.replicates.len()
    }
}

/// Subject indices drawn with replacement for replicate `b`.
pub fn resample_picks(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = stream(seed, Purpose::Bootstrap, &[b as u64]);
    (0..n).map(|_| (rng.next_u64() % n as u64) as usize).collect()
}

/// Runs `run` on `b` subject-level resamples of `data`. Replicate `i`
/// resamples from a stream keyed by `(seed, i)` and receives `i + 1` as its
/// replicate tag. Failed replicates are logged and left out.
pub fn bootstrap<T, F>(data: &PanelDataset, b: usize, seed: u64, run: F) -> Result<Bootstrap<T>>
where
    T: Send,
    F: Fn(&PanelDataset, u64) -> Result<T> + Sync,
{
    if b == 0 {
        return Err(Error::Inference("the number of bootstrap samples must be at least 1".into()));
    }
    let n = data.n_subjects();
    let outcomes: Vec<Result<T>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let sample = data.resample_subjects(&resample_picks(n, seed, i));
            run(&sample, i as u64 + 1)
        })
        .collect();
    let mut out = Bootstrap {
        replicates: Vec::new(),
        failures: Vec::new(),
    };
    let mut first = None;
    for (i, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(v) => out.replicates.push((i, v)),
            Err(e) => {
                first.get_or_insert_with(|| e.clone());
                out.failures.push(ReplicateFailure {
                    replicate: i,
                    message: e.to_string(),
                });
            }
        }
    }
    if out.replicates.is_empty() {
        let e = first.expect("at least one replicate ran");
        return Err(Error::Inference(format!("all {b} bootstrap replicates failed; first failure: {e}")));
    }
    Ok(out)
}

/// Nearest-rank percentile: the `ceil(q * n)`-th smallest value.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    /// Sample standard deviation of the replicate values.
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    /// Replicates with a defined value.
    pub n: usize,
}

/// SE and nearest-rank 95% interval of the defined replicate values.
pub fn summarize(values: &[Option<f64>]) -> Option<Interval> {
    let mut v: Vec<f64> = values.iter().flatten().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    Some(Interval {
        se,
        lower: nearest_rank(&v, 0.025),
        upper: nearest_rank(&v, 0.975),
        n,
    })
}

/// Ratio (missing when the reference is 0) and difference against a reference.
pub fn contrast(estimate: Option<f64>, reference: Option<f64>) -> (Option<f64>, Option<f64>) {
    match (estimate, reference) {
        (Some(e), Some(r)) => ((r != 0.0).then(|| e / r), Some(e - r)),
        _ => (None, None),
    }
}

/// Contrasts of every intervention against `reference`, per horizon:
/// `[intervention][horizon] -> (ratio, difference)`.
pub fn contrasts(estimates: &[Vec<Option<f64>>], reference: usize) -> Result<Vec<Vec<(Option<f64>, Option<f64>)>>> {
    let refs = estimates.get(reference).ok_or(Error::Bounds {
        index: reference,
        max: estimates.len().saturating_sub(1),
    })?;
    Ok(estimates
        .iter()
        .map(|row| row.iter().zip(refs).map(|(&e, &r)| contrast(e, r)).collect())
        .collect())
}

/// Hazard ratio of intervention `a` versus `b`. One event time is realised
/// per trajectory from its simulated hazards; both arms are pooled and
/// `event ~ group + factor(time)` is fit by logistic regression. With
/// competing events, competing failures stay in later risk sets without
/// the event (subdistribution convention). `None` when no events occur.
pub fn hazard_ratio(a: &SimResult, b: &SimResult, seed: u64, replicate: u64) -> Result<Option<f64>> {
    if a.outcome_kind.is_eof() || b.outcome_kind.is_eof() {
        return Err(Error::Inference("hazard ratios are defined for survival outcomes".into()));
    }
    let t = a.time_points;
    let mut rows: Vec<(f64, usize, f64)> = Vec::new();
    for (g, sim) in [(1.0, a), (0.0, b)] {
        for v in 0..sim.s {
            let mut rng = stream(seed, Purpose::HazardRatio, &[replicate, g as u64, v as u64]);
            let (p, q) = (sim.p(v), sim.q(v));
            let mut competed = false;
            for k in 0..t {
                let ud = crate::engine::open_uniform(&mut rng);
                let uy = crate::engine::open_uniform(&mut rng);
                if competed {
                    rows.push((g, k, 0.0));
                    continue;
                }
                if sim.has_competing && ud < q[k] {
                    competed = true;
                    rows.push((g, k, 0.0));
                    continue;
                }
                let event = uy < p[k];
                rows.push((g, k, event as u8 as f64));
                if event {
                    break;
                }
            }
        }
    }
    if !rows.iter().any(|r| r.2 == 1.0) {
        return Ok(None);
    }
    let mut times: Vec<usize> = rows.iter().map(|r| r.1).collect();
    times.sort_unstable();
    times.dedup();
    let p = 2 + times.len() - 1;
    let mut x = Matrix::zeros(rows.len(), p);
    let mut names = vec!["(Intercept)".to_string(), "group".to_string()];
    names.extend(times.iter().skip(1).map(|k| format!("time={k}")));
    for (i, &(g, k, _)) in rows.iter().enumerate() {
        let r = x.row_mut(i);
        r[0] = 1.0;
        r[1] = g;
        let pos = times.binary_search(&k).expect("time present");
        if pos > 0 {
            r[1 + pos] = 1.0;
        }
    }
    let y = rows.iter().map(|r| r.2).collect();
    let design = DesignMatrix::new(names, x, y)?;
    let fit = fit_binomial(&design, Link::Logit).map_err(|e| e.context("hazard ratio model"))?;
    Ok(Some(fit.coefficients[(0, 1)].exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_positions() {
        let v: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 0.025), 5.0);
        assert_eq!(nearest_rank(&v, 0.975), 195.0);
        assert_eq!(nearest_rank(&[3.0], 0.025), 3.0);
    }

    #[test]
    fn contrast_examples() {
        let (r, d) = contrast(Some(0.7314627), Some(0.5048278));
        assert!((r.unwrap() - 1.4489351).abs() < 5e-8);
        assert!((d.unwrap() - 0.2266349).abs() < 1e-12);
        let (r, d) = contrast(Some(0.2339747), Some(0.5048278));
        assert!((r.unwrap() - 0.4634743).abs() < 5e-8);
        assert!((d.unwrap() + 0.2708531).abs() < 1e-12);
        assert_eq!(contrast(Some(0.3), Some(0.3)), (Some(1.0), Some(0.0)));
        assert_eq!(contrast(Some(0.3), Some(0.0)), (None, Some(0.3)));
    }

    #[test]
    fn summary_uses_sample_sd() {
        let s = summarize(&[Some(1.0), Some(2.0), None, Some(3.0)]).unwrap();
        assert_eq!(s.n, 3);
        assert!((s.se - 1.0).abs() < 1e-15);
        assert_eq!((s.lower, s.upper), (1.0, 3.0));
    }
}

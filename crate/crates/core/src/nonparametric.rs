//! Unadjusted natural-course benchmarks: product-limit risk, Aalen-Johansen
//! cumulative incidence, and the observed end-of-follow-up mean.
//!
//! Records with a missing outcome leave the risk set; records coded 0 stay.

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Cumulative incidences and all-cause survival by one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incidence {
    pub event: f64,
    pub competing: f64,
    pub survival: f64,
}

/// Per-time counts: (at risk, events, competing events).
fn counts(data: &PanelDataset, horizons: usize, competing: bool) -> Vec<(usize, usize, usize)> {
    let y = data.outcome_column();
    let d = data.compevent_column().filter(|_| competing);
    let mut out = vec![(0, 0, 0); horizons];
    for s in data.subjects() {
        for (k, row) in s.rows.clone().enumerate().take(horizons) {
            let comp = d.is_some_and(|d| d[row] == 1.0);
            if comp {
                out[k].0 += 1;
                out[k].2 += 1;
            } else if !y[row].is_nan() {
                out[k].0 += 1;
                out[k].1 += (y[row] == 1.0) as usize;
            }
        }
    }
    out
}

fn incidence_curve(data: &PanelDataset, horizons: usize, competing: bool) -> Vec<Option<Incidence>> {
    let mut cur = Incidence {
        event: 0.0,
        competing: 0.0,
        survival: 1.0,
    };
    let mut stopped = false;
    counts(data, horizons, competing)
        .into_iter()
        .map(|(n, e, c)| {
            if n == 0 || stopped {
                stopped = true;
                return None;
            }
            let n = n as f64;
            cur.event += cur.survival * e as f64 / n;
            cur.competing += cur.survival * c as f64 / n;
            cur.survival *= 1.0 - (e + c) as f64 / n;
            Some(cur)
        })
        .collect()
}

/// `1 - prod_{k<=t} (1 - d_k / n_k)` for `t = 0..horizons`; competing
/// events (if any) count as censoring. Horizons from the first empty risk
/// set on are `None`.
pub fn product_limit_curve(data: &PanelDataset, horizons: usize) -> Vec<Option<f64>> {
    incidence_curve(data, horizons, false)
        .into_iter()
        .map(|c| c.map(|c| 1.0 - c.survival))
        .collect()
}

/// Cause-specific cumulative incidences and all-cause survival for
/// `t = 0..horizons`.
pub fn aalen_johansen_curve(data: &PanelDataset, horizons: usize) -> Vec<Option<Incidence>> {
    incidence_curve(data, horizons, true)
}

fn horizon_check(data: &PanelDataset, t: usize) -> Result<()> {
    if t > data.max_time() {
        return Err(Error::Bounds {
            index: t,
            max: data.max_time(),
        });
    }
    Ok(())
}

pub fn product_limit_risk(data: &PanelDataset, t: usize) -> Result<Option<f64>> {
    horizon_check(data, t)?;
    Ok(product_limit_curve(data, t + 1)[t])
}

pub fn aalen_johansen_risk(data: &PanelDataset, t: usize) -> Result<Option<f64>> {
    horizon_check(data, t)?;
    Ok(aalen_johansen_curve(data, t + 1)[t].map(|c| c.event))
}

/// Mean outcome over subjects with an observed outcome at the last time.
pub fn empirical_eof_mean(data: &PanelDataset) -> Option<f64> {
    let y = data.outcome_column();
    let k = data.max_time();
    let vals: Vec<f64> = data
        .subjects()
        .filter(|s| s.rows.len() == k + 1)
        .map(|s| y[s.rows.end - 1])
        .filter(|v| !v.is_nan())
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Observed mean of each column at each time over the records at risk
/// (all records at that time for end-of-follow-up outcomes).
pub fn observed_means(data: &PanelDataset, columns: &[&str], horizons: usize) -> Result<Vec<Vec<Option<f64>>>> {
    let eof = data.schema.outcome_kind.is_eof();
    let y = data.outcome_column();
    let d = data.compevent_column();
    let cols = columns
        .iter()
        .map(|c| data.table.column(c))
        .collect::<Result<Vec<_>>>()?;
    let mut sums = vec![vec![0.0; horizons]; cols.len()];
    let mut n = vec![0usize; horizons];
    for s in data.subjects() {
        for (k, row) in s.rows.clone().enumerate().take(horizons) {
            let at_risk = eof || !y[row].is_nan() || d.is_some_and(|d| d[row] == 1.0);
            if !at_risk {
                continue;
            }
            n[k] += 1;
            for (acc, c) in sums.iter_mut().zip(&cols) {
                acc[k] += c[row];
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|acc| {
            acc.into_iter()
                .zip(&n)
                .map(|(a, &m)| (m > 0).then(|| a / m as f64))
                .collect()
        })
        .collect())
}

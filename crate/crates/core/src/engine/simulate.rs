//! Monte Carlo simulation of trajectories under an intervention.

use rand::RngCore;
use rayon::prelude::*;

use super::stepper::Stepper;
use super::{FittedSuite, Plugins, Prepared, RunConfig};
use crate::covariate::{prob, Law};
use crate::error::{Error, Result};
use crate::intervention::{GraceTracker, InterventionSpec};
use crate::panel::OutcomeKind;
use crate::rng::{stream, Purpose};
use crate::table::Table;

/// Trajectories per work unit. Fixed so that results do not depend on the
/// number of workers.
const CHUNK: usize = 256;

/// Simulated hazards and summaries for `s` trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub outcome_kind: OutcomeKind,
    pub s: usize,
    pub time_points: usize,
    /// Outcome hazards, `s x time_points`, trajectory-major.
    pub hazards: Vec<f64>,
    /// Competing-event hazards, laid out like `hazards` (zeros when absent).
    pub competing: Vec<f64>,
    pub has_competing: bool,
    /// Predicted end-of-follow-up outcome per trajectory (eof outcomes).
    pub eof: Vec<f64>,
    pub covariate_names: Vec<String>,
    /// Mean of each covariate at each time, `[covariate][k]`; survival
    /// outcomes weight trajectories by their probability of being event-free.
    pub covariate_means: Vec<Vec<f64>>,
    /// Simulated rows, when requested.
    pub data: Option<Table>,
}

impl SimResult {
    pub fn p(&self, v: usize) -> &[f64] {
        &self.hazards[v * self.time_points..(v + 1) * self.time_points]
    }

    pub fn q(&self, v: usize) -> &[f64] {
        &self.competing[v * self.time_points..(v + 1) * self.time_points]
    }
}

/// A uniform on the open interval (0, 1).
#[inline]
pub fn open_uniform(rng: &mut dyn RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

struct Chunk {
    hazards: Vec<f64>,
    competing: Vec<f64>,
    eof: Vec<f64>,
    sums: Vec<Vec<f64>>,
    weights: Vec<f64>,
    data: Vec<Vec<f64>>,
}

fn data_columns(stepper: &Stepper<'_>, intervention: &InterventionSpec, suite: &FittedSuite, time: &str) -> Vec<String> {
    let mut names = vec!["id".to_string(), time.to_string()];
    names.extend(stepper.covs.iter().map(|c| c.bundle.spec.name.clone()));
    names.extend(intervention.rules.iter().map(|r| format!("{}.natural", r.variable)));
    if suite.outcome_kind.is_eof() {
        names.push("mu_hat".into());
    } else {
        names.push("p_hat".into());
        if suite.compevent.is_some() {
            names.push("q_hat".into());
        }
    }
    names
}

/// Step 2: simulates `s` trajectories under `intervention`. Trajectory `v`
/// draws from a stream keyed by `(seed, replicate, v)`; the baseline
/// resample (when `s != n`) is keyed by `(seed, replicate)`.
pub fn simulate(
    suite: &FittedSuite,
    prepared: &Prepared,
    intervention: &InterventionSpec,
    config: &RunConfig,
    replicate: u64,
    plugins: &Plugins,
) -> Result<SimResult> {
    let n = prepared.n_subjects();
    let s = config.nsimul.unwrap_or(n);
    if s == 0 {
        return Err(Error::Argument("nsimul must be at least 1".into()));
    }
    let baseline: Vec<usize> = if s == n {
        (0..n).collect()
    } else {
        let mut rng = stream(config.seed, Purpose::Baseline, &[replicate]);
        (0..s).map(|_| (rng.next_u64() % n as u64) as usize).collect()
    };
    let stepper = Stepper::new(suite, prepared, intervention, plugins)?;
    let t = suite.time_points;
    let ncov = stepper.covs.len();
    let eof = suite.outcome_kind.is_eof();
    let names = data_columns(&stepper, intervention, suite, &prepared.time);
    let nchunks = s.div_ceil(CHUNK);

    let run_chunk = |c: usize| -> Result<Chunk> {
        let range = c * CHUNK..((c + 1) * CHUNK).min(s);
        let len = range.len();
        let mut out = Chunk {
            hazards: vec![0.0; len * t],
            competing: vec![0.0; len * t],
            eof: if eof { vec![0.0; len] } else { Vec::new() },
            sums: vec![vec![0.0; t]; ncov],
            weights: vec![0.0; t],
            data: if config.keep_trajectories { vec![Vec::with_capacity(len * t); names.len()] } else { Vec::new() },
        };
        let mut tab = stepper.template.clone();
        let mut buf = Vec::new();
        let mut trackers = vec![GraceTracker::default(); stepper.n_rules];
        let mut naturals = vec![f64::NAN; stepper.n_rules];
        let mut nat_rows = vec![f64::NAN; stepper.n_rules * t];
        for (local, v) in range.enumerate() {
            let mut rng = stream(config.seed, Purpose::Trajectory, &[replicate, v as u64]);
            trackers.iter_mut().for_each(|g| *g = GraceTracker::default());
            naturals.iter_mut().for_each(|x| *x = f64::NAN);
            stepper.reset(&mut tab, baseline[v])?;
            stepper.start(&mut tab, &mut trackers, &mut naturals)?;
            let mut surv = 1.0;
            for k in 0..t {
                if k > 0 {
                    stepper.begin(&mut tab, k)?;
                    for i in 0..ncov {
                        let u1 = open_uniform(&mut rng);
                        let u2 = open_uniform(&mut rng);
                        let natural = match stepper.law(i, &tab, k, &mut buf)? {
                            Law::Plugin => stepper.plugin_draw(i, &tab, k, &mut rng)?,
                            law => law.realize(u1, u2),
                        };
                        stepper.set(i, &mut tab, k, natural, &mut trackers, &mut naturals)?;
                    }
                }
                nat_rows[k * stepper.n_rules..(k + 1) * stepper.n_rules].copy_from_slice(&naturals);
                let w = if eof { 1.0 } else { surv };
                for (i, cov) in stepper.covs.iter().enumerate() {
                    out.sums[i][k] += w * tab.get(k, cov.col);
                }
                out.weights[k] += w;
                let (p, q) = stepper.hazards(&tab, k, &mut buf)?;
                if eof {
                    if k + 1 == t {
                        out.eof[local] = if suite.outcome_kind == OutcomeKind::BinaryEof { prob(p, "outcome")? } else { p };
                    }
                } else {
                    let p = prob(p, "outcome")?;
                    out.hazards[local * t + k] = p;
                    out.competing[local * t + k] = q;
                    surv *= (1.0 - p) * (1.0 - q);
                }
            }
            if config.keep_trajectories {
                for k in 0..t {
                    let mut row = vec![(v + 1) as f64, k as f64];
                    row.extend(stepper.covs.iter().map(|c| tab.get(k, c.col)));
                    row.extend_from_slice(&nat_rows[k * stepper.n_rules..(k + 1) * stepper.n_rules]);
                    if eof {
                        row.push(if k + 1 == t { out.eof[local] } else { f64::NAN });
                    } else {
                        row.push(out.hazards[local * t + k]);
                        if suite.compevent.is_some() {
                            row.push(out.competing[local * t + k]);
                        }
                    }
                    for (col, x) in out.data.iter_mut().zip(row) {
                        col.push(x);
                    }
                }
            }
        }
        Ok(out)
    };
    let chunks: Vec<Chunk> = (0..nchunks).into_par_iter().map(run_chunk).collect::<Result<_>>()?;

    let mut result = SimResult {
        outcome_kind: suite.outcome_kind,
        s,
        time_points: t,
        hazards: Vec::with_capacity(s * t),
        competing: Vec::with_capacity(s * t),
        has_competing: suite.compevent.is_some(),
        eof: Vec::new(),
        covariate_names: stepper.covs.iter().map(|c| c.bundle.spec.name.clone()).collect(),
        covariate_means: vec![vec![0.0; t]; ncov],
        data: None,
    };
    let mut weights = vec![0.0; t];
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); if config.keep_trajectories { names.len() } else { 0 }];
    for c in chunks {
        result.hazards.extend(c.hazards);
        result.competing.extend(c.competing);
        result.eof.extend(c.eof);
        for (acc, part) in result.covariate_means.iter_mut().zip(&c.sums) {
            acc.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
        weights.iter_mut().zip(&c.weights).for_each(|(a, b)| *a += b);
        for (acc, part) in data.iter_mut().zip(c.data) {
            acc.extend(part);
        }
    }
    for m in &mut result.covariate_means {
        m.iter_mut().zip(&weights).for_each(|(a, w)| *a = if *w > 0.0 { *a / w } else { f64::NAN });
    }
    if config.keep_trajectories {
        let mut table = Table::new(s * t);
        for (name, col) in names.iter().zip(data) {
            table.set_column(name, col)?;
        }
        result.data = Some(table);
    }
    Ok(result)
}

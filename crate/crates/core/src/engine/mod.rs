//! Estimation pipeline: data preparation, model fitting (step 1), Monte
//! Carlo simulation (step 2), the plug-in estimators (step 3), and exact
//! enumeration for small discrete systems.

mod enumerate;
mod simulate;
mod stepper;

use std::collections::BTreeMap;
use std::ops::Range;

use crate::covariate::{
    categorical_time, fit_covariate, BoundCondition, CovType, CovariateBundle, CovariateRegistry, CovariateSpec,
    FitContext, Otherwise, Restriction,
};
use crate::error::{Error, Result};
use crate::fitting::{fit_binomial, fit_gaussian, FittedModel, Link};
use crate::formula::{DesignSpec, ModelFormula};
use crate::history::{apply_history, HistoryRegistry, HistorySpec};
use crate::intervention::InterventionRegistry;
use crate::panel::{OutcomeKind, PanelDataset};
use crate::table::{LevelMap, Table};

pub use enumerate::{enumerate_gformula, MAX_PATHS};
pub use simulate::{open_uniform, simulate, SimResult};

/// Model statements and their options.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Time-varying covariates in simulation order.
    pub covariates: Vec<CovariateSpec>,
    pub histories: Vec<HistorySpec>,
    pub ymodel: ModelFormula,
    pub compevent_model: Option<ModelFormula>,
    /// Where a condition fails the outcome hazard (or mean) is the
    /// `Otherwise::Assign` value.
    pub y_restrictions: Vec<Restriction>,
    pub compevent_restrictions: Vec<Restriction>,
    /// Treat competing events as censoring: no competing model is fit.
    pub competing_as_censoring: bool,
}

impl ModelSpec {
    pub fn new(covariates: Vec<CovariateSpec>, histories: Vec<HistorySpec>, ymodel: ModelFormula) -> Self {
        Self {
            covariates,
            histories,
            ymodel,
            compevent_model: None,
            y_restrictions: Vec::new(),
            compevent_restrictions: Vec::new(),
            competing_as_censoring: false,
        }
    }
}

/// User plugins available to a run.
#[derive(Debug, Clone, Default)]
pub struct Plugins {
    pub covariates: CovariateRegistry,
    pub histories: HistoryRegistry,
    pub interventions: InterventionRegistry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Number of time points K + 1.
    pub time_points: usize,
    /// Monte Carlo sample size `s`; `None` means the number of subjects.
    pub nsimul: Option<usize>,
    pub seed: u64,
    /// Keep the simulated trajectories.
    pub keep_trajectories: bool,
}

impl RunConfig {
    pub fn new(time_points: usize, seed: u64) -> Self {
        Self {
            time_points,
            nsimul: None,
            seed,
            keep_trajectories: false,
        }
    }
}

/// Observed data with categorical-time columns and histories materialised.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: Table,
    pub subjects: Vec<Range<usize>>,
    pub levels: LevelMap,
    pub outcome_kind: OutcomeKind,
    pub time: String,
    pub outcome: String,
    /// Competing-event column, absent when treated as censoring.
    pub compevent: Option<String>,
}

impl Prepared {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }
}

pub fn prepare(data: &PanelDataset, model: &ModelSpec, plugins: &Plugins) -> Result<Prepared> {
    let mut table = data.table.clone();
    let mut levels = data.levels.clone();
    let subjects: Vec<Range<usize>> = (0..data.n_subjects()).map(|i| data.subject_rows(i)).collect();
    let time = data.time_column().to_vec();
    for c in model.covariates.iter().filter(|c| c.covtype == CovType::CategoricalTime) {
        let values = time.iter().map(|&t| categorical_time(t as usize, &c.thresholds)).collect();
        table.set_column(&c.name, values)?;
        levels.insert(c.name.clone(), (0..=c.thresholds.len()).map(|l| l.to_string()).collect());
    }
    for spec in &model.histories {
        for k in 0..=data.max_time() {
            apply_history(&mut table, &subjects, spec, k, &data.schema.time, &plugins.histories, None)
                .map_err(|e| e.context("history"))?;
        }
    }
    Ok(Prepared {
        table,
        subjects,
        levels,
        outcome_kind: data.schema.outcome_kind,
        time: data.schema.time.clone(),
        outcome: data.schema.outcome.clone(),
        compevent: data.schema.compevent.clone().filter(|_| !model.competing_as_censoring),
    })
}

/// A fitted outcome or competing-event model with its restrictions.
#[derive(Debug, Clone)]
pub struct FittedOutcome {
    pub model: FittedModel<f64>,
    pub design: DesignSpec,
    pub restrictions: Vec<Restriction>,
}

/// Output of step 1.
#[derive(Debug, Clone)]
pub struct FittedSuite {
    pub covariates: Vec<CovariateBundle>,
    pub outcome: FittedOutcome,
    pub compevent: Option<FittedOutcome>,
    pub outcome_kind: OutcomeKind,
    pub time_points: usize,
    pub histories: Vec<HistorySpec>,
}

impl FittedSuite {
    /// (label, model) pairs of every fitted parametric model.
    pub fn models(&self) -> Vec<(String, &FittedModel<f64>)> {
        let mut out = Vec::new();
        for b in &self.covariates {
            for (suffix, m) in b.model.fitted() {
                out.push((format!("{}{suffix}", b.spec.name), m));
            }
        }
        out.push((self.outcome.design.formula.response.clone(), &self.outcome.model));
        if let Some(c) = &self.compevent {
            out.push((c.design.formula.response.clone(), &c.model));
        }
        out
    }
}

fn bind_restrictions(rs: &[Restriction], table: &Table) -> Result<Vec<(BoundCondition, f64)>> {
    rs.iter()
        .map(|r| {
            let v = match r.otherwise {
                Otherwise::Assign(v) => v,
                Otherwise::CarryForward => {
                    return Err(Error::Argument("outcome restrictions assign a value".into()))
                }
            };
            Ok((r.condition.bind(table)?, v))
        })
        .collect()
}

fn fit_outcome(
    formula: &ModelFormula,
    restrictions: &[Restriction],
    prepared: &Prepared,
    rows: Vec<usize>,
    gaussian: bool,
    what: &str,
) -> Result<FittedOutcome> {
    let t = &prepared.table;
    let bound = bind_restrictions(restrictions, t)?;
    let rows: Vec<usize> = rows
        .into_iter()
        .filter(|&r| bound.iter().all(|(c, _)| c.holds(t, r)))
        .collect();
    if rows.is_empty() {
        return Err(Error::Fit(format!("no fitting records for the {what} model")));
    }
    let named = |e: Error| e.context(format!("{what} model"));
    let design = DesignSpec::new(formula, t, &rows, &prepared.levels).map_err(named)?;
    let dm = design.design(t, &rows).map_err(named)?;
    let model = if gaussian {
        fit_gaussian(&dm, Link::Identity)
    } else {
        fit_binomial(&dm, Link::Logit)
    }
    .map_err(named)?;
    Ok(FittedOutcome {
        model,
        design,
        restrictions: restrictions.to_vec(),
    })
}

/// Step 1: fits every covariate model in order, then the outcome and
/// competing-event models.
pub fn fit_all(prepared: &Prepared, model: &ModelSpec, plugins: &Plugins, time_points: usize) -> Result<FittedSuite> {
    let t = &prepared.table;
    let ctx = FitContext {
        table: t,
        subjects: &prepared.subjects,
        levels: &prepared.levels,
        time_name: &prepared.time,
        time_points,
        plugins: &plugins.covariates,
    };
    let mut forced: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &model.covariates {
        if let Some(v) = &c.visit {
            let e = forced.entry(v.visit.as_str()).or_insert(v.max_missed);
            *e = (*e).min(v.max_missed);
        }
    }
    let covariates = model
        .covariates
        .iter()
        .enumerate()
        .map(|(i, c)| fit_covariate(c, &ctx, i, forced.get(c.name.as_str()).copied()))
        .collect::<Result<Vec<_>>>()?;

    let y = t.column(&prepared.outcome)?;
    let time = t.column(&prepared.time)?;
    let last = time_points - 1;
    let (outcome, compevent) = match prepared.outcome_kind {
        OutcomeKind::Survival => {
            let rows = (0..t.nrows())
                .filter(|&r| (time[r] as usize) < time_points && !y[r].is_nan())
                .collect();
            let outcome = fit_outcome(&model.ymodel, &model.y_restrictions, prepared, rows, false, "outcome")?;
            let compevent = match (&prepared.compevent, &model.compevent_model) {
                (Some(name), Some(f)) => {
                    let d = t.column(name)?;
                    let rows = (0..t.nrows())
                        .filter(|&r| (time[r] as usize) < time_points && !d[r].is_nan())
                        .collect();
                    Some(fit_outcome(f, &model.compevent_restrictions, prepared, rows, false, "competing event")?)
                }
                (Some(name), None) => {
                    return Err(Error::Argument(format!(
                        "competing event `{name}` is modelled but no competing-event model was given"
                    )))
                }
                _ => None,
            };
            (outcome, compevent)
        }
        kind => {
            let rows = (0..t.nrows())
                .filter(|&r| time[r] as usize == last && !y[r].is_nan())
                .collect();
            let gaussian = kind == OutcomeKind::ContinuousEof;
            (fit_outcome(&model.ymodel, &model.y_restrictions, prepared, rows, gaussian, "outcome")?, None)
        }
    };
    Ok(FittedSuite {
        covariates,
        outcome,
        compevent,
        outcome_kind: prepared.outcome_kind,
        time_points,
        histories: model.histories.clone(),
    })
}

/// Cumulative risk through each horizon of one trajectory:
/// `sum_{k<=t} p_k (1 - q_k) prod_{j<k} (1 - p_j)(1 - q_j)`.
pub fn trajectory_risk(p: &[f64], q: &[f64], out: &mut [f64]) {
    let mut surv = 1.0;
    let mut acc = 0.0;
    for k in 0..p.len() {
        acc += surv * p[k] * (1.0 - q[k]);
        surv *= (1.0 - p[k]) * (1.0 - q[k]);
        out[k] = acc;
    }
}

/// Risk by each horizon `t = 0..K`, averaged over trajectories.
pub fn risk_curve(sim: &SimResult) -> Result<Vec<f64>> {
    if sim.outcome_kind != OutcomeKind::Survival {
        return Err(Error::Argument("risks are defined for survival outcomes".into()));
    }
    let t = sim.time_points;
    let mut total = vec![0.0; t];
    let mut buf = vec![0.0; t];
    for v in 0..sim.s {
        trajectory_risk(sim.p(v), sim.q(v), &mut buf);
        total.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
    }
    total.iter_mut().for_each(|a| *a /= sim.s as f64);
    Ok(total)
}

pub fn risk_estimate(sim: &SimResult, t: usize) -> Result<f64> {
    if t >= sim.time_points {
        return Err(Error::Bounds {
            index: t,
            max: sim.time_points - 1,
        });
    }
    Ok(risk_curve(sim)?[t])
}

/// Mean of the predicted end-of-follow-up outcome over trajectories.
pub fn mean_estimate(sim: &SimResult) -> Result<f64> {
    if !sim.outcome_kind.is_eof() {
        return Err(Error::Argument("means are defined for end-of-follow-up outcomes".into()));
    }
    Ok(sim.eof.iter().sum::<f64>() / sim.s as f64)
}

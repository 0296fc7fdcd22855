//! End-to-end analysis: load, fit, simulate every intervention, benchmark
//! the natural course, bootstrap, and collect everything for reporting.

use std::path::Path;

use serde::Serialize;

use crate::config::{AnalysisConfig, Finding, Severity};
use crate::covariate::CovType;
use crate::engine::{
    fit_all, mean_estimate, prepare, risk_curve, simulate, FittedSuite, ModelSpec, Plugins, RunConfig, SimResult,
};
use crate::error::{Error, Result};
use crate::fitting::{Family, FittedModel};
use crate::inference::{bootstrap, contrasts, hazard_ratio, summarize, Interval, ReplicateFailure};
use crate::intervention::{natural_course_spec, InterventionSpec};
use crate::nonparametric::{aalen_johansen_curve, empirical_eof_mean, observed_means, product_limit_curve};
use crate::panel::{load_panel, OutcomeKind, PanelDataset};
use crate::table::Table;

/// Everything needed to run an analysis.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub data: PanelDataset,
    pub model: ModelSpec,
    /// User interventions; the natural course is prepended automatically.
    pub interventions: Vec<InterventionSpec>,
    pub run: RunConfig,
    pub reference: usize,
    pub nsamples: usize,
    pub hazard_ratio: Option<(usize, usize)>,
    pub plugins: Plugins,
    pub all_times: bool,
}

impl Analysis {
    /// Builds an analysis from a validated config, reading its data file.
    pub fn from_config(cfg: &AnalysisConfig, plugins: Plugins) -> Result<Self> {
        let errors: Vec<Finding> = cfg
            .validate(&plugins.histories)
            .into_iter()
            .filter(|f| f.severity == Severity::Error)
            .collect();
        if let Some(f) = errors.first() {
            return Err(Error::Config {
                path: f.path.clone(),
                message: f.message.clone(),
            });
        }
        let schema = cfg.schema()?;
        let file = std::fs::File::open(&cfg.data.path)
            .map_err(|e| Error::Config {
                path: "data.path".into(),
                message: format!("{}: {e}", cfg.data.path.display()),
            })?;
        let data = load_panel(std::io::BufReader::new(file), &schema).map_err(|e| e.context("panel data"))?;
        let mut run = RunConfig::new(cfg.time_points, cfg.seed);
        run.nsimul = cfg.nsimul;
        run.keep_trajectories = cfg.keep_sim_data;
        Ok(Self {
            data,
            model: cfg.model_spec()?,
            interventions: cfg.intervention_specs()?,
            run,
            reference: cfg.reference,
            nsamples: cfg.nsamples,
            hazard_ratio: cfg.hazard_ratio.map(|[a, b]| (a, b)),
            plugins,
            all_times: cfg.all_times,
        })
    }

    /// The natural course followed by the user interventions.
    pub fn all_interventions(&self) -> Vec<InterventionSpec> {
        let mut treatments: Vec<&str> = Vec::new();
        for iv in &self.interventions {
            for r in &iv.rules {
                if !treatments.contains(&r.variable.as_str()) {
                    treatments.push(&r.variable);
                }
            }
        }
        let mut out = vec![natural_course_spec(&treatments)];
        out.extend(self.interventions.iter().cloned());
        out
    }

    fn check(&self) -> Result<()> {
        let k = self.data.max_time();
        let t = self.run.time_points;
        if self.data.schema.outcome_kind.is_eof() && t != k + 1 {
            return Err(Error::Argument(format!(
                "end-of-follow-up outcomes use every time point: time_points must be {} (got {t})",
                k + 1
            )));
        }
        if t == 0 || t > k + 1 {
            return Err(Error::Argument(format!("time_points must be between 1 and {} (got {t})", k + 1)));
        }
        let n = self.interventions.len() + 1;
        if self.reference >= n {
            return Err(Error::Bounds { index: self.reference, max: n - 1 });
        }
        if let Some((a, b)) = self.hazard_ratio {
            if a >= n || b >= n {
                return Err(Error::Bounds { index: a.max(b), max: n - 1 });
            }
            if self.data.schema.outcome_kind.is_eof() {
                return Err(Error::Argument("hazard ratios apply to survival outcomes".into()));
            }
        }
        if self.run.keep_trajectories && self.nsamples > 0 {
            return Err(Error::Argument("simulated data cannot be kept when bootstrapping".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterventionInfo {
    pub index: usize,
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub k: usize,
    pub intervention: usize,
    /// Nonparametric natural-course estimate (natural course only).
    pub np: Option<f64>,
    pub estimate: f64,
    pub ratio: Option<f64>,
    pub difference: Option<f64>,
    pub estimate_ci: Option<Interval>,
    pub ratio_ci: Option<Interval>,
    pub difference_ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub name: String,
    pub family: String,
    pub link: String,
    pub n_obs: usize,
    pub coefficients: Vec<Coefficient>,
    pub rmse: f64,
    pub residual_mse: Option<f64>,
    pub sigma: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub separation: bool,
}

impl ModelSummary {
    fn new(name: &str, m: &FittedModel<f64>) -> Self {
        let mut coefficients = Vec::new();
        for r in 0..m.coefficients.rows() {
            for (c, term) in m.column_names.iter().enumerate() {
                let term = if m.family == Family::Multinomial {
                    format!("{}:{term}", m.levels[r + 1])
                } else {
                    term.clone()
                };
                coefficients.push(Coefficient {
                    term,
                    estimate: m.coefficients[(r, c)],
                    se: m.stderrs[(r, c)],
                });
            }
        }
        Self {
            name: name.to_string(),
            family: format!("{:?}", m.family).to_lowercase(),
            link: format!("{:?}", m.link).to_lowercase(),
            n_obs: m.n_obs,
            coefficients,
            rmse: m.diagnostics.rmse,
            residual_mse: m.residual_mse,
            sigma: m.sigma,
            converged: m.diagnostics.converged,
            iterations: m.diagnostics.iterations,
            log_likelihood: m.diagnostics.log_likelihood,
            separation: m.diagnostics.separation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardRatioResult {
    pub interventions: (usize, usize),
    pub estimate: Option<f64>,
    pub interval: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub k: usize,
    /// `risk`, or a covariate name for its mean.
    pub quantity: String,
    pub nonparametric: Option<f64>,
    pub parametric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub outcome_kind: OutcomeKind,
    pub n_subjects: usize,
    pub nsimul: usize,
    pub time_points: usize,
    pub seed: u64,
    pub reference: usize,
    pub nsamples: usize,
    pub effective_nsamples: usize,
    pub failed_replicates: Vec<ReplicateFailure>,
    pub competing_events: bool,
    pub conventions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisResult {
    pub metadata: Metadata,
    pub interventions: Vec<InterventionInfo>,
    pub results: Vec<ResultRow>,
    pub hazard_ratio: Option<HazardRatioResult>,
    pub models: Vec<ModelSummary>,
    pub natural_course: Vec<PlotRow>,
    pub warnings: Vec<String>,
    /// Report every horizon in the text table.
    #[serde(skip)]
    pub all_times: bool,
    /// Simulated trajectories per intervention, when kept.
    #[serde(skip)]
    pub sim_data: Vec<(String, Table)>,
}

/// Per-intervention estimates by horizon, from one fitted suite.
struct Estimates {
    values: Vec<Vec<Option<f64>>>,
    sims: Vec<SimResult>,
}

fn estimates(sims: Vec<SimResult>, kind: OutcomeKind) -> Result<Estimates> {
    let values = sims
        .iter()
        .map(|s| {
            Ok(if kind.is_eof() {
                vec![Some(mean_estimate(s)?)]
            } else {
                risk_curve(s)?.into_iter().map(Some).collect()
            })
        })
        .collect::<Result<_>>()?;
    Ok(Estimates { values, sims })
}

fn run_once(
    a: &Analysis,
    data: &PanelDataset,
    interventions: &[InterventionSpec],
    replicate: u64,
    keep: bool,
) -> Result<(FittedSuite, Estimates)> {
    let prepared = prepare(data, &a.model, &a.plugins)?;
    let suite = fit_all(&prepared, &a.model, &a.plugins, a.run.time_points)?;
    let mut run = a.run.clone();
    run.keep_trajectories = keep;
    let sims = interventions
        .iter()
        .map(|iv| simulate(&suite, &prepared, iv, &run, replicate, &a.plugins).map_err(|e| e.context(format!("intervention `{}`", iv.label))))
        .collect::<Result<Vec<_>>>()?;
    let est = estimates(sims, prepared.outcome_kind)?;
    Ok((suite, est))
}

fn conventions(kind: OutcomeKind) -> Vec<String> {
    let mut c = vec![
        "bootstrap intervals: nearest-rank percentiles (ceil(0.025 B), ceil(0.975 B)) of the replicate values; SE is the sample standard deviation".to_string(),
        "ratios and differences are computed within each replicate before summarising".to_string(),
        "Monte Carlo streams are keyed by (seed, replicate, trajectory); baseline resampling by (seed, replicate)".to_string(),
    ];
    if kind == OutcomeKind::Survival {
        c.push("risk by t: mean over trajectories of sum_{k<=t} p_k (1 - q_k) prod_{j<k} (1 - p_j)(1 - q_j)".into());
        c.push("hazard ratio: pooled logistic event ~ group + factor(time) on one event-time realisation per trajectory".into());
        c.push("simulated covariate means are weighted by the probability of being event-free".into());
    }
    c
}

/// Runs the analysis on a rayon pool with `workers` threads. Results do
/// not depend on `workers`.
pub fn run_analysis(a: &Analysis, workers: usize) -> Result<AnalysisResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_inner(a))
}

fn run_inner(a: &Analysis) -> Result<AnalysisResult> {
    a.check()?;
    let kind = a.data.schema.outcome_kind;
    let t = a.run.time_points;
    let interventions = a.all_interventions();
    let mut warnings = Vec::new();
    let nsimul = a.run.nsimul.unwrap_or(a.data.n_subjects());
    if nsimul < crate::config::RECOMMENDED_NSIMUL {
        warnings.push(format!(
            "Monte Carlo sample size {nsimul} is below the recommended {}",
            crate::config::RECOMMENDED_NSIMUL
        ));
    }

    let (suite, est) = run_once(a, &a.data, &interventions, 0, a.run.keep_trajectories)?;
    let hr_point = a
        .hazard_ratio
        .map(|(i, j)| hazard_ratio(&est.sims[i], &est.sims[j], a.run.seed, 0))
        .transpose()?
        .flatten();
    let point_contrasts = contrasts(&est.values, a.reference)?;

    let boot = if a.nsamples > 0 {
        let b = bootstrap(&a.data, a.nsamples, a.run.seed, |sample, tag| {
            let (_, e) = run_once(a, sample, &interventions, tag, false)?;
            let hr = a
                .hazard_ratio
                .map(|(i, j)| hazard_ratio(&e.sims[i], &e.sims[j], a.run.seed, tag))
                .transpose()?
                .flatten();
            Ok((e.values, hr))
        })?;
        for f in &b.failures {
            warnings.push(format!("bootstrap replicate {} failed: {}", f.replicate, f.message));
        }
        Some(b)
    } else {
        None
    };

    // Nonparametric natural course.
    let np: Vec<Option<f64>> = if kind.is_eof() {
        vec![empirical_eof_mean(&a.data)]
    } else if suite.compevent.is_some() {
        aalen_johansen_curve(&a.data, t).into_iter().map(|c| c.map(|c| c.event)).collect()
    } else {
        product_limit_curve(&a.data, t)
    };
    let horizons: Vec<usize> = if kind.is_eof() { vec![t - 1] } else { (0..t).collect() };

    let mut results = Vec::new();
    for (h, &k) in horizons.iter().enumerate() {
        for i in 0..interventions.len() {
            let (ratio, difference) = point_contrasts[i][h];
            let mut row = ResultRow {
                k,
                intervention: i,
                np: if i == 0 { np[h] } else { None },
                estimate: est.values[i][h].expect("point estimate"),
                ratio,
                difference,
                estimate_ci: None,
                ratio_ci: None,
                difference_ci: None,
            };
            if let Some(b) = &boot {
                let mut e = Vec::new();
                let mut r = Vec::new();
                let mut d = Vec::new();
                for (_, (vals, _)) in &b.replicates {
                    let (rr, dd) = crate::inference::contrast(vals[i][h], vals[a.reference][h]);
                    e.push(vals[i][h]);
                    r.push(rr);
                    d.push(dd);
                }
                row.estimate_ci = summarize(&e);
                row.ratio_ci = summarize(&r);
                row.difference_ci = summarize(&d);
            }
            results.push(row);
        }
    }

    let hazard = a.hazard_ratio.map(|pair| HazardRatioResult {
        interventions: pair,
        estimate: hr_point,
        interval: boot.as_ref().and_then(|b| {
            let v: Vec<Option<f64>> = b.replicates.iter().map(|(_, (_, hr))| *hr).collect();
            summarize(&v)
        }),
    });
    if hazard.as_ref().is_some_and(|h| h.estimate.is_none()) {
        warnings.push("no simulated events in either arm: hazard ratio is missing".into());
    }

    let models: Vec<ModelSummary> = suite.models().into_iter().map(|(n, m)| ModelSummary::new(&n, m)).collect();
    for b in &suite.covariates {
        if let crate::covariate::CovariateModel::Constant(v) = b.model {
            warnings.push(format!("covariate `{}` is constant ({v}) on its fitting records; no model was fit", b.spec.name));
        }
    }
    for m in &models {
        if !m.converged {
            warnings.push(format!("model `{}` did not converge", m.name));
        }
    }

    // Natural-course plot data.
    let nc = &est.sims[0];
    let mut natural_course = Vec::new();
    if !kind.is_eof() {
        let par = &est.values[0];
        for k in 0..t {
            natural_course.push(PlotRow {
                k,
                quantity: "risk".into(),
                nonparametric: np[k],
                parametric: par[k],
            });
        }
    }
    let plotted: Vec<(usize, &str)> = suite
        .covariates
        .iter()
        .enumerate()
        .filter(|(_, b)| b.spec.covtype != CovType::CategoricalTime)
        .map(|(i, b)| (i, b.spec.name.as_str()))
        .collect();
    let names: Vec<&str> = plotted.iter().map(|p| p.1).collect();
    let observed = observed_means(&a.data, &names, t)?;
    for (j, &(i, name)) in plotted.iter().enumerate() {
        for k in 0..t {
            natural_course.push(PlotRow {
                k,
                quantity: name.to_string(),
                nonparametric: observed[j][k],
                parametric: Some(nc.covariate_means[i][k]),
            });
        }
    }

    let sim_data = if a.run.keep_trajectories {
        interventions
            .iter()
            .zip(&est.sims)
            .filter_map(|(iv, s)| s.data.clone().map(|d| (iv.label.clone(), d)))
            .collect()
    } else {
        Vec::new()
    };

    Ok(AnalysisResult {
        metadata: Metadata {
            outcome_kind: kind,
            n_subjects: a.data.n_subjects(),
            nsimul,
            time_points: t,
            seed: a.run.seed,
            reference: a.reference,
            nsamples: a.nsamples,
            effective_nsamples: boot.as_ref().map_or(0, |b| b.effective()),
            failed_replicates: boot.map(|b| b.failures).unwrap_or_default(),
            competing_events: suite.compevent.is_some(),
            conventions: conventions(kind),
        },
        interventions: interventions
            .iter()
            .enumerate()
            .map(|(index, iv)| InterventionInfo {
                index,
                label: iv.label.clone(),
                description: iv.describe(),
            })
            .collect(),
        results,
        hazard_ratio: hazard,
        models,
        natural_course,
        warnings,
        all_times: a.all_times,
        sim_data,
    })
}

/// Loads `config`, runs it, and writes the result files into `out_dir`.
pub fn run_config_file(config: &Path, out_dir: &Path, workers: usize, plugins: Plugins, opts: &crate::report::ReportOptions) -> Result<AnalysisResult> {
    let cfg = AnalysisConfig::load(config)?;
    run_config(&cfg, out_dir, workers, plugins, opts)
}

/// Runs a loaded config and writes the artifacts. Errors carry the stage that raised them.
pub fn run_config(cfg: &AnalysisConfig, out_dir: &Path, workers: usize, plugins: Plugins, opts: &crate::report::ReportOptions) -> Result<AnalysisResult> {
    let analysis = Analysis::from_config(cfg, plugins).map_err(|e| e.context("config"))?;
    let result = run_analysis(&analysis, workers).map_err(|e| e.context("analysis"))?;
    crate::report::write_outputs(&result, out_dir, opts).map_err(|e| e.context("report"))?;
    Ok(result)
}

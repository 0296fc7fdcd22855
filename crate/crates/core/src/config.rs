//! Analysis configuration files (TOML) and their cross-reference checks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covariate::{CmpOp, Condition, CovType, CovariateSpec, Otherwise, Restriction, VisitLink};
use crate::engine::ModelSpec;
use crate::error::{Error, Result};
use crate::fitting::{Direction, Link, Truncation};
use crate::formula::{parse_formula, ModelFormula};
use crate::history::{infer_max_lag, HistoryKind, HistoryRegistry, HistorySpec};
use crate::intervention::{InterventionSpec, Rule, RuleSpec};
use crate::panel::{ColumnType, OutcomeKind, Schema};

/// Monte Carlo sizes below this draw a warning.
pub const RECOMMENDED_NSIMUL: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default = "default_missing")]
    pub missing: String,
    pub id: String,
    pub time: String,
    pub outcome: String,
    pub outcome_type: OutcomeKind,
    pub compevent: Option<String>,
    #[serde(default)]
    pub competing_as_censoring: bool,
    #[serde(default)]
    pub baseline: Vec<BaselineConfig>,
}

fn default_delimiter() -> String {
    ",".into()
}

fn default_missing() -> String {
    "NA".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaselineConfig {
    Name(String),
    Typed {
        name: String,
        #[serde(rename = "type")]
        kind: ColumnType,
    },
}

impl BaselineConfig {
    fn column(&self) -> (&str, ColumnType) {
        match self {
            BaselineConfig::Name(n) => (n, ColumnType::Continuous),
            BaselineConfig::Typed { name, kind } => (name, *kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub point: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OtherwiseConfig {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestrictionConfig {
    /// `variable op number`, e.g. `"L1 == 0"`.
    pub condition: String,
    /// A value, or `"carry_forward"` (covariates only).
    #[serde(default = "zero_otherwise")]
    pub otherwise: OtherwiseConfig,
}

fn zero_otherwise() -> OtherwiseConfig {
    OtherwiseConfig::Value(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisitConfig {
    pub indicator: String,
    pub max_missed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateConfig {
    pub name: String,
    #[serde(rename = "type")]
    pub covtype: String,
    pub formula: Option<String>,
    pub link: Option<String>,
    pub truncation: Option<TruncationConfig>,
    pub restriction: Option<RestrictionConfig>,
    pub visit: Option<VisitConfig>,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Plugin id for `type = "custom"`.
    pub plugin: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryConfig {
    /// `lagged`, `cumavg`, `lag_cumavg` or `custom`.
    pub kind: String,
    pub variables: Vec<String>,
    /// Number of lags; inferred from the model statements when absent.
    pub lags: Option<usize>,
    pub plugin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub variable: String,
    /// `static`, `threshold`, `natural_course`, `grace_period` or `custom`.
    pub rule: String,
    pub value: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub condition: Option<String>,
    pub grace: Option<usize>,
    pub plugin: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub times: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionConfig {
    pub label: String,
    pub rules: Vec<RuleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub data: DataConfig,
    pub time_points: usize,
    pub ymodel: String,
    pub compevent_model: Option<String>,
    #[serde(default)]
    pub covariates: Vec<CovariateConfig>,
    #[serde(default)]
    pub histories: Vec<HistoryConfig>,
    #[serde(default)]
    pub y_restrictions: Vec<RestrictionConfig>,
    #[serde(default)]
    pub compevent_restrictions: Vec<RestrictionConfig>,
    #[serde(default)]
    pub interventions: Vec<InterventionConfig>,
    /// Index of the reference intervention; 0 is the natural course.
    #[serde(default)]
    pub reference: usize,
    pub nsimul: Option<usize>,
    #[serde(default)]
    pub nsamples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub workers: Option<usize>,
    #[serde(default)]
    pub keep_sim_data: bool,
    pub hazard_ratio: Option<[usize; 2]>,
    /// Report every horizon in the text table, not just the last.
    #[serde(default)]
    pub all_times: bool,
    #[serde(default = "yes")]
    pub plot_data: bool,
}

fn default_seed() -> u64 {
    1234
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    /// Field path, e.g. `covariates[1].formula`.
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{s}: {}: {}", self.path, self.message)
    }
}

/// Parses `variable op number`.
pub fn parse_condition(text: &str) -> Result<Condition> {
    let ops = ["==", "!=", "<=", ">=", "<", ">"];
    let (at, op) = ops
        .iter()
        .filter_map(|o| text.find(o).map(|i| (i, *o)))
        .min_by_key(|(i, o)| (*i, std::cmp::Reverse(o.len())))
        .ok_or_else(|| Error::Parse {
            position: 0,
            message: format!("no comparison operator in condition `{text}`"),
        })?;
    let variable = text[..at].trim();
    let rest = text[at + op.len()..].trim();
    if variable.is_empty() {
        return Err(Error::Parse {
            position: at,
            message: format!("condition `{text}` has no variable"),
        });
    }
    let value = match rest {
        "inf" | "Inf" => f64::INFINITY,
        "-inf" | "-Inf" => f64::NEG_INFINITY,
        _ => rest.parse::<f64>().map_err(|_| Error::Parse {
            position: at + op.len(),
            message: format!("`{rest}` in condition `{text}` is not a number"),
        })?,
    };
    Ok(Condition::new(variable, CmpOp::parse(op).expect("listed operator"), value))
}

fn cfg_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn covtype(c: &CovariateConfig, path: &str) -> Result<CovType> {
    Ok(match c.covtype.as_str() {
        "binary" => CovType::Binary,
        "normal" => CovType::Normal,
        "categorical" => CovType::Categorical,
        "bounded_normal" => CovType::BoundedNormal,
        "zero_inflated_normal" => CovType::ZeroInflatedNormal,
        "truncated_normal" => CovType::TruncatedNormal,
        "absorbing" => CovType::Absorbing,
        "categorical_time" => CovType::CategoricalTime,
        "custom" => CovType::Custom(
            c.plugin
                .clone()
                .ok_or_else(|| cfg_err(format!("{path}.plugin"), "custom covariates name a plugin"))?,
        ),
        other => return Err(cfg_err(format!("{path}.type"), format!("unknown covariate type `{other}`"))),
    })
}

fn restriction(r: &RestrictionConfig, path: &str, allow_carry: bool) -> Result<Restriction> {
    let condition = parse_condition(&r.condition).map_err(|e| cfg_err(format!("{path}.condition"), e.to_string()))?;
    let otherwise = match &r.otherwise {
        OtherwiseConfig::Value(v) => Otherwise::Assign(*v),
        OtherwiseConfig::Keyword(k) if k == "carry_forward" && allow_carry => Otherwise::CarryForward,
        OtherwiseConfig::Keyword(k) => {
            return Err(cfg_err(format!("{path}.otherwise"), format!("`{k}` is not a value or `carry_forward`")))
        }
    };
    Ok(Restriction { condition, otherwise })
}

fn formula(text: &str, path: &str) -> Result<ModelFormula> {
    parse_formula(text).map_err(|e| cfg_err(path, e.to_string()))
}

impl AnalysisConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err("<config>", e.to_string()))
    }

    /// Reads a config file; a relative data path is taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }

    pub fn delimiter(&self) -> Result<u8> {
        match self.data.delimiter.as_str() {
            "tab" | "\t" => Ok(b'\t'),
            d if d.len() == 1 => Ok(d.as_bytes()[0]),
            d => Err(cfg_err("data.delimiter", format!("`{d}` is not a single-byte delimiter"))),
        }
    }

    pub fn schema(&self) -> Result<Schema> {
        let d = &self.data;
        let mut s = Schema::new(&d.id, &d.time, &d.outcome, d.outcome_type);
        if let Some(c) = &d.compevent {
            s = s.with_compevent(c);
        }
        for (i, c) in self.covariates.iter().enumerate() {
            let kind = match covtype(c, &format!("covariates[{i}]"))? {
                CovType::CategoricalTime => continue,
                CovType::Binary | CovType::Absorbing => ColumnType::Binary,
                CovType::Categorical => ColumnType::Categorical,
                _ => ColumnType::Continuous,
            };
            s = s.covariate(&c.name, kind);
        }
        for b in &d.baseline {
            let (name, kind) = b.column();
            s = s.baseline(name, kind);
        }
        s.delimiter = self.delimiter()?;
        s.missing = d.missing.clone();
        Ok(s)
    }

    fn all_formulas(&self) -> Vec<ModelFormula> {
        let mut out: Vec<ModelFormula> = self
            .covariates
            .iter()
            .filter_map(|c| c.formula.as_deref().and_then(|f| parse_formula(f).ok()))
            .collect();
        out.extend(parse_formula(&self.ymodel).ok());
        out.extend(self.compevent_model.as_deref().and_then(|f| parse_formula(f).ok()));
        out
    }

    pub fn histories(&self) -> Result<Vec<HistorySpec>> {
        let formulas = self.all_formulas();
        let names: Vec<&str> = formulas.iter().flat_map(|f| f.variables()).collect();
        self.histories
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let path = format!("histories[{i}]");
                let kind = match h.kind.as_str() {
                    "lagged" => HistoryKind::Lagged,
                    "cumavg" => HistoryKind::CumAvg,
                    "lag_cumavg" => HistoryKind::LagAvg,
                    "custom" => HistoryKind::Custom(
                        h.plugin
                            .clone()
                            .ok_or_else(|| cfg_err(format!("{path}.plugin"), "custom histories name a plugin"))?,
                    ),
                    other => return Err(cfg_err(format!("{path}.kind"), format!("unknown history kind `{other}`"))),
                };
                let lags = h.lags.unwrap_or_else(|| {
                    h.variables
                        .iter()
                        .map(|v| infer_max_lag(&kind, v, names.iter().copied()))
                        .max()
                        .unwrap_or(0)
                        .max(1)
                });
                let vars: Vec<&str> = h.variables.iter().map(String::as_str).collect();
                Ok(HistorySpec::new(kind, &vars, lags))
            })
            .collect()
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let mut covariates = Vec::with_capacity(self.covariates.len());
        for (i, c) in self.covariates.iter().enumerate() {
            let path = format!("covariates[{i}]");
            let ct = covtype(c, &path)?;
            let f = c.formula.as_deref().map(|f| formula(f, &format!("{path}.formula"))).transpose()?;
            let mut spec = CovariateSpec::new(&c.name, ct, f);
            spec.link = c
                .link
                .as_deref()
                .map(|l| Link::parse(l).ok_or_else(|| cfg_err(format!("{path}.link"), format!("unknown link `{l}`"))))
                .transpose()?;
            spec.truncation = c.truncation.as_ref().map(|t| Truncation {
                point: t.point,
                direction: t.direction,
            });
            spec.restriction = c
                .restriction
                .as_ref()
                .map(|r| restriction(r, &format!("{path}.restriction"), true))
                .transpose()?;
            spec.visit = c.visit.as_ref().map(|v| VisitLink {
                visit: v.indicator.clone(),
                max_missed: v.max_missed,
            });
            spec.thresholds = c.thresholds.clone();
            spec.params = c.params.clone();
            covariates.push(spec);
        }
        let mut m = ModelSpec::new(covariates, self.histories()?, formula(&self.ymodel, "ymodel")?);
        m.compevent_model = self
            .compevent_model
            .as_deref()
            .map(|f| formula(f, "compevent_model"))
            .transpose()?;
        m.y_restrictions = self
            .y_restrictions
            .iter()
            .enumerate()
            .map(|(i, r)| restriction(r, &format!("y_restrictions[{i}]"), false))
            .collect::<Result<_>>()?;
        m.compevent_restrictions = self
            .compevent_restrictions
            .iter()
            .enumerate()
            .map(|(i, r)| restriction(r, &format!("compevent_restrictions[{i}]"), false))
            .collect::<Result<_>>()?;
        m.competing_as_censoring = self.data.competing_as_censoring || self.compevent_model.is_none();
        Ok(m)
    }

    pub fn intervention_specs(&self) -> Result<Vec<InterventionSpec>> {
        self.interventions
            .iter()
            .enumerate()
            .map(|(i, iv)| {
                let rules = iv
                    .rules
                    .iter()
                    .enumerate()
                    .map(|(j, r)| self.rule(r, &format!("interventions[{i}].rules[{j}]")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(InterventionSpec::new(&iv.label, rules))
            })
            .collect()
    }

    fn rule(&self, r: &RuleConfig, path: &str) -> Result<RuleSpec> {
        let need = |what: &str| cfg_err(format!("{path}.{what}"), format!("`{}` rules need `{what}`", r.rule));
        let rule = match r.rule.as_str() {
            "static" => match (&r.values, r.value) {
                (Some(v), _) => Rule::Static(v.clone()),
                (None, Some(v)) => Rule::Static(vec![v; self.time_points]),
                (None, None) => return Err(need("value")),
            },
            "threshold" => Rule::Threshold {
                min: r.min.unwrap_or(f64::NEG_INFINITY),
                max: r.max.unwrap_or(f64::INFINITY),
            },
            "natural_course" => Rule::NaturalCourse,
            "grace_period" => Rule::GracePeriod {
                condition: parse_condition(r.condition.as_deref().ok_or_else(|| need("condition"))?)
                    .map_err(|e| cfg_err(format!("{path}.condition"), e.to_string()))?,
                m: r.grace.ok_or_else(|| need("grace"))?,
                treat: r.value.unwrap_or(1.0),
            },
            "custom" => Rule::Custom {
                plugin: r.plugin.clone().ok_or_else(|| need("plugin"))?,
                params: r.params.clone(),
            },
            other => return Err(cfg_err(format!("{path}.rule"), format!("unknown rule `{other}`"))),
        };
        rule.validate(self.time_points).map_err(|e| cfg_err(path, e.to_string()))?;
        Ok(RuleSpec {
            variable: r.variable.clone(),
            rule,
            times: r.times.as_ref().map(|t| t.iter().copied().collect::<BTreeSet<_>>()),
        })
    }

    /// Cross-reference checks. Errors make the config unusable; warnings do not.
    pub fn validate(&self, histories: &HistoryRegistry) -> Vec<Finding> {
        let mut out = Vec::new();
        let mut err = |path: String, message: String| {
            out.push(Finding {
                severity: Severity::Error,
                path,
                message,
            })
        };
        if self.time_points == 0 {
            err("time_points".into(), "must be at least 1".into());
        }
        if let Err(e) = self.delimiter() {
            err("data.delimiter".into(), e.to_string());
        }
        let d = &self.data;
        let mut raw: BTreeSet<String> = [d.time.clone()].into();
        raw.extend(d.baseline.iter().map(|b| b.column().0.to_string()));
        raw.extend(self.covariates.iter().map(|c| c.name.clone()));
        let cov_index: BTreeMap<&str, usize> =
            self.covariates.iter().enumerate().map(|(i, c)| (c.name.as_str(), i)).collect();
        let mut derived: BTreeMap<String, String> = BTreeMap::new();
        match self.histories() {
            Ok(hs) => {
                for (i, h) in hs.iter().enumerate() {
                    for v in &h.variables {
                        if !raw.contains(v) {
                            err(format!("histories[{i}].variables"), format!("`{v}` is not a covariate or column"));
                        }
                        for c in h.columns_for(v, histories) {
                            derived.insert(c, v.clone());
                        }
                    }
                    if let HistoryKind::Custom(id) = &h.kind {
                        if histories.get(id).is_none() {
                            err(format!("histories[{i}].plugin"), format!("unknown history plugin `{id}`"));
                        }
                    }
                }
            }
            Err(e) => err("histories".into(), e.to_string()),
        }
        // A reference at the current time to `source`: fine when `source`
        // is simulated before position `pos`.
        let lookahead = |name: &str, pos: usize| -> Option<String> {
            let source = if let Some(src) = derived.get(name) {
                let current = name.starts_with("cumavg_") || !name.starts_with("lag");
                if !current {
                    return None;
                }
                src.as_str()
            } else {
                name
            };
            cov_index
                .get(source)
                .filter(|&&j| j >= pos)
                .map(|_| format!("`{name}` depends on `{source}`, which is simulated at or after this covariate"))
        };
        let check = |path: String, f: &ModelFormula, pos: Option<usize>, out: &mut Vec<(String, String)>| {
            for v in f.variables() {
                if !raw.contains(v) && !derived.contains_key(v) {
                    out.push((path.clone(), format!("`{v}` is not a column, a declared history, or the time variable")));
                } else if let Some(msg) = pos.and_then(|p| lookahead(v, p)) {
                    out.push((path.clone(), msg));
                }
            }
        };
        let mut problems = Vec::new();
        for (i, c) in self.covariates.iter().enumerate() {
            let path = format!("covariates[{i}]");
            let ct = match covtype(c, &path) {
                Ok(t) => t,
                Err(e) => {
                    problems.push((format!("{path}.type"), e.to_string()));
                    continue;
                }
            };
            match (&c.formula, &ct) {
                (Some(f), _) => match parse_formula(f) {
                    Ok(f) => {
                        if f.response != c.name {
                            problems.push((format!("{path}.formula"), format!("response `{}` is not `{}`", f.response, c.name)));
                        }
                        check(format!("{path}.formula"), &f, Some(i), &mut problems);
                    }
                    Err(e) => problems.push((format!("{path}.formula"), e.to_string())),
                },
                (None, CovType::CategoricalTime | CovType::Custom(_)) => {}
                (None, _) => problems.push((format!("{path}.formula"), "a model statement is required".into())),
            }
            if ct == CovType::CategoricalTime && c.thresholds.is_empty() {
                problems.push((format!("{path}.thresholds"), "categorical time needs at least one threshold".into()));
            }
            if ct == CovType::TruncatedNormal && c.truncation.is_none() {
                problems.push((format!("{path}.truncation"), "truncated normal covariates need a truncation".into()));
            }
            if let Some(r) = &c.restriction {
                match restriction(r, &format!("{path}.restriction"), true) {
                    Ok(r) if !raw.contains(&r.condition.variable) && !derived.contains_key(&r.condition.variable) => {
                        problems.push((format!("{path}.restriction.condition"), format!("unknown variable `{}`", r.condition.variable)))
                    }
                    Ok(_) => {}
                    Err(e) => problems.push((format!("{path}.restriction"), e.to_string())),
                }
            }
            if let Some(v) = &c.visit {
                match cov_index.get(v.indicator.as_str()) {
                    None => problems.push((format!("{path}.visit.indicator"), format!("`{}` is not a covariate", v.indicator))),
                    Some(&j) if j >= i => problems.push((
                        format!("{path}.visit.indicator"),
                        format!("visit indicator `{}` must precede `{}` in the covariate order", v.indicator, c.name),
                    )),
                    Some(&j) if !matches!(self.covariates[j].covtype.as_str(), "binary") => problems.push((
                        format!("{path}.visit.indicator"),
                        format!("visit indicator `{}` must be binary", v.indicator),
                    )),
                    _ => {}
                }
            }
        }
        match parse_formula(&self.ymodel) {
            Ok(f) => {
                if f.response != d.outcome {
                    problems.push(("ymodel".into(), format!("response `{}` is not the outcome `{}`", f.response, d.outcome)));
                }
                check("ymodel".into(), &f, None, &mut problems);
            }
            Err(e) => problems.push(("ymodel".into(), e.to_string())),
        }
        match (&self.compevent_model, &d.compevent) {
            (Some(f), Some(c)) => match parse_formula(f) {
                Ok(f) => {
                    if &f.response != c {
                        problems.push(("compevent_model".into(), format!("response `{}` is not `{c}`", f.response)));
                    }
                    check("compevent_model".into(), &f, None, &mut problems);
                }
                Err(e) => problems.push(("compevent_model".into(), e.to_string())),
            },
            (Some(_), None) => problems.push(("compevent_model".into(), "no competing-event column in data.compevent".into())),
            _ => {}
        }
        if self.compevent_model.is_some() && d.outcome_type.is_eof() {
            problems.push(("compevent_model".into(), "competing events apply to survival outcomes".into()));
        }
        for (which, list) in [("y_restrictions", &self.y_restrictions), ("compevent_restrictions", &self.compevent_restrictions)] {
            for (i, r) in list.iter().enumerate() {
                match restriction(r, &format!("{which}[{i}]"), false) {
                    Ok(r) if !raw.contains(&r.condition.variable) && !derived.contains_key(&r.condition.variable) => {
                        problems.push((format!("{which}[{i}].condition"), format!("unknown variable `{}`", r.condition.variable)))
                    }
                    Ok(_) => {}
                    Err(e) => problems.push((format!("{which}[{i}]"), e.to_string())),
                }
            }
        }
        for (i, iv) in self.interventions.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for (j, r) in iv.rules.iter().enumerate() {
                let path = format!("interventions[{i}].rules[{j}]");
                if !cov_index.contains_key(r.variable.as_str()) {
                    problems.push((format!("{path}.variable"), format!("`{}` is not a time-varying covariate", r.variable)));
                }
                if !seen.insert(&r.variable) {
                    problems.push((format!("{path}.variable"), format!("`{}` has more than one rule", r.variable)));
                }
                match self.rule(r, &path) {
                    Ok(RuleSpec { rule: Rule::GracePeriod { condition, .. }, .. })
                        if !raw.contains(&condition.variable) && !derived.contains_key(&condition.variable) =>
                    {
                        problems.push((format!("{path}.condition"), format!("unknown variable `{}`", condition.variable)))
                    }
                    Ok(_) => {}
                    Err(Error::Config { path, message }) => problems.push((path, message)),
                    Err(e) => problems.push((path, e.to_string())),
                }
            }
        }
        let n_interventions = self.interventions.len() + 1;
        if self.reference >= n_interventions {
            problems.push(("reference".into(), format!("no intervention {} (there are {n_interventions})", self.reference)));
        }
        if let Some([a, b]) = self.hazard_ratio {
            if a >= n_interventions || b >= n_interventions || a == b {
                problems.push(("hazard_ratio".into(), format!("invalid intervention pair ({a}, {b})")));
            }
            if d.outcome_type.is_eof() {
                problems.push(("hazard_ratio".into(), "hazard ratios apply to survival outcomes".into()));
            }
        }
        if self.keep_sim_data && self.nsamples > 0 {
            problems.push(("keep_sim_data".into(), "simulated data cannot be kept when bootstrapping".into()));
        }
        if self.nsimul == Some(0) {
            problems.push(("nsimul".into(), "must be at least 1".into()));
        }
        for (path, message) in problems {
            err(path, message);
        }
        if let Some(s) = self.nsimul.filter(|&s| s > 0 && s < RECOMMENDED_NSIMUL) {
            out.push(Finding {
                severity: Severity::Warning,
                path: "nsimul".into(),
                message: format!("Monte Carlo sample size {s} is below the recommended {RECOMMENDED_NSIMUL}"),
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
time_points = 3
ymodel = "Y ~ L + A + lag1_A"
nsimul = 20000

[data]
path = "d.csv"
id = "id"
time = "t"
outcome = "Y"
outcome_type = "survival"

[[covariates]]
name = "L"
type = "binary"
formula = "L ~ lag1_L + lag1_A"

[[covariates]]
name = "A"
type = "binary"
formula = "A ~ L + lag1_A"

[[histories]]
kind = "lagged"
variables = ["L", "A"]

[[interventions]]
label = "Always treat"
rules = [{ variable = "A", rule = "static", value = 1 }]
"#;

    fn findings(extra: &str, edit: impl Fn(&mut AnalysisConfig)) -> Vec<Finding> {
        let mut cfg = AnalysisConfig::from_toml(&format!("{BASE}{extra}")).unwrap();
        edit(&mut cfg);
        cfg.validate(&HistoryRegistry::default())
    }

    #[test]
    fn clean_config_has_no_findings() {
        assert!(findings("", |_| {}).is_empty());
    }

    #[test]
    fn conditions_parse() {
        let c = parse_condition("cd4 <= 5.5").unwrap();
        assert_eq!((c.variable.as_str(), c.op, c.value), ("cd4", CmpOp::Le, 5.5));
        assert_eq!(parse_condition("x!=0").unwrap().op, CmpOp::Ne);
        assert!(parse_condition("x 0").is_err());
    }

    #[test]
    fn unresolved_history_reference() {
        let f = findings("", |c| c.ymodel = "Y ~ L + lag1_Z".into());
        assert!(f.iter().any(|f| f.severity == Severity::Error && f.path == "ymodel" && f.message.contains("lag1_Z")));
    }

    #[test]
    fn sim_data_with_bootstrap_is_an_error() {
        let f = findings("", |c| {
            c.keep_sim_data = true;
            c.nsamples = 20;
        });
        assert!(f.iter().any(|f| f.severity == Severity::Error && f.path == "keep_sim_data"));
    }

    #[test]
    fn small_nsimul_warns() {
        let f = findings("", |c| c.nsimul = Some(500));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].severity, Severity::Warning);
    }

    #[test]
    fn lookahead_and_visit_order() {
        let f = findings("", |c| c.covariates[0].formula = Some("L ~ A".into()));
        assert!(f.iter().any(|f| f.path == "covariates[0].formula"));
        let f = findings("", |c| {
            c.covariates[0].visit = Some(VisitConfig { indicator: "A".into(), max_missed: 2 })
        });
        assert!(f.iter().any(|f| f.path == "covariates[0].visit.indicator"));
    }

    #[test]
    fn lags_are_inferred() {
        let mut cfg = AnalysisConfig::from_toml(BASE).unwrap();
        cfg.ymodel = "Y ~ L + lag2_A".into();
        assert_eq!(cfg.histories().unwrap()[0].max_lag, 2);
        let m = cfg.model_spec().unwrap();
        assert!(m.competing_as_censoring);
        assert_eq!(cfg.intervention_specs().unwrap()[0].rules[0].rule, Rule::Static(vec![1.0; 3]));
    }
}

//! Covariate types: fitting (step 1) and conditional draws (step 2), plus
//! restrictions, visit processes and user-supplied covariate models.

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{
    fit_binomial, fit_gaussian, fit_multinomial, fit_truncated_normal, normal, truncated_normal_draw,
    FittedModel, Link, Truncation,
};
use crate::formula::{BoundDesign, DesignSpec, ModelFormula};
use crate::table::{LevelMap, Table};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovType {
    Binary,
    Normal,
    Categorical,
    BoundedNormal,
    ZeroInflatedNormal,
    TruncatedNormal,
    Absorbing,
    CategoricalTime,
    /// A registered covariate plugin, by id.
    Custom(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn parse(s: &str) -> Option<CmpOp> {
        Some(match s {
            "==" => CmpOp::Eq,
            "!=" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn eval(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// `variable op value` evaluated on a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub variable: String,
    pub op: CmpOp,
    pub value: f64,
}

impl Condition {
    pub fn new(variable: &str, op: CmpOp, value: f64) -> Self {
        Self {
            variable: variable.to_string(),
            op,
            value,
        }
    }

    pub fn bind(&self, table: &Table) -> Result<BoundCondition> {
        Ok(BoundCondition {
            col: table.index_of(&self.variable)?,
            op: self.op,
            value: self.value,
        })
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.variable, self.op.symbol(), self.value)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundCondition {
    col: usize,
    op: CmpOp,
    value: f64,
}

impl BoundCondition {
    #[inline]
    pub fn holds(&self, table: &Table, row: usize) -> bool {
        self.op.eval(table.get(row, self.col), self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Otherwise {
    Assign(f64),
    CarryForward,
}

/// The model applies only where `condition` holds; elsewhere the value is
/// set by `otherwise`.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub condition: Condition,
    pub otherwise: Otherwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisitLink {
    /// Binary visit indicator, earlier in the covariate order.
    pub visit: String,
    /// Largest allowed run of consecutive missed visits.
    pub max_missed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSpec {
    pub name: String,
    pub covtype: CovType,
    pub formula: Option<ModelFormula>,
    pub link: Option<Link>,
    pub truncation: Option<Truncation<f64>>,
    pub restriction: Option<Restriction>,
    pub visit: Option<VisitLink>,
    /// Cut points of a categorical-time covariate.
    pub thresholds: Vec<f64>,
    /// Extra parameters handed to covariate plugins.
    pub params: BTreeMap<String, f64>,
}

impl CovariateSpec {
    pub fn new(name: &str, covtype: CovType, formula: Option<ModelFormula>) -> Self {
        Self {
            name: name.to_string(),
            covtype,
            formula,
            link: None,
            truncation: None,
            restriction: None,
            visit: None,
            thresholds: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self.covtype,
            CovType::Binary | CovType::Categorical | CovType::Absorbing | CovType::CategoricalTime
        )
    }
}

/// Category of time index `k`: the number of thresholds strictly below `k`.
pub fn categorical_time(k: usize, thresholds: &[f64]) -> f64 {
    thresholds.iter().filter(|&&t| t < k as f64).count() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservedRanges {
    pub min: f64,
    pub max: f64,
    /// Range over the non-zero values (zero-inflated covariates).
    pub nonzero: Option<(f64, f64)>,
}

pub type PluginFit = Arc<dyn Any + Send + Sync>;

/// Arguments passed to a covariate plugin's prediction function.
pub struct PredictContext<'a> {
    pub observed: &'a Table,
    /// The trajectory table being simulated.
    pub simulated: &'a Table,
    /// Rows of `simulated` at time `k` to produce values for.
    pub rows: &'a [usize],
    pub time_name: &'a str,
    pub k: usize,
    pub restriction: Option<&'a Restriction>,
    pub covariate: &'a str,
    pub params: &'a BTreeMap<String, f64>,
}

/// A user-supplied covariate model. `predict` returns one value per row;
/// returned values are used as they are (not clamped).
pub trait CovariatePlugin: Send + Sync {
    fn fit(
        &self,
        params: &BTreeMap<String, f64>,
        covariate: &str,
        observed: &Table,
        rows: &[usize],
        order_index: usize,
    ) -> Result<PluginFit>;

    fn predict(
        &self,
        ctx: &PredictContext<'_>,
        fitted: &PluginFit,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>>;
}

#[derive(Clone, Default)]
pub struct CovariateRegistry {
    plugins: BTreeMap<String, Arc<dyn CovariatePlugin>>,
}

impl fmt::Debug for CovariateRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.plugins.keys()).finish()
    }
}

impl CovariateRegistry {
    pub fn register(&mut self, id: &str, plugin: Arc<dyn CovariatePlugin>) -> Result<String> {
        if self.plugins.contains_key(id) {
            return Err(Error::Plugin(format!("covariate plugin `{id}` already registered")));
        }
        self.plugins.insert(id.to_string(), plugin);
        Ok(id.to_string())
    }

    pub fn get(&self, id: &str) -> Result<&Arc<dyn CovariatePlugin>> {
        self.plugins
            .get(id)
            .ok_or_else(|| Error::Plugin(format!("unknown covariate plugin `{id}`")))
    }
}

#[derive(Clone)]
pub enum CovariateModel {
    /// Observed values were constant on the fitting rows.
    Constant(f64),
    /// Binary and absorbing covariates.
    Binary(FittedModel<f64>),
    Normal(FittedModel<f64>),
    /// Fit on the `(x - min) / (max - min)` scale.
    Bounded(FittedModel<f64>),
    ZeroInflated {
        nonzero: FittedModel<f64>,
        mean: FittedModel<f64>,
    },
    Categorical(FittedModel<f64>),
    Truncated(FittedModel<f64>),
    CategoricalTime,
    Custom(PluginFit),
}

impl fmt::Debug for CovariateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovariateModel::Constant(v) => write!(f, "Constant({v})"),
            CovariateModel::Binary(_) => write!(f, "Binary"),
            CovariateModel::Normal(_) => write!(f, "Normal"),
            CovariateModel::Bounded(_) => write!(f, "Bounded"),
            CovariateModel::ZeroInflated { .. } => write!(f, "ZeroInflated"),
            CovariateModel::Categorical(_) => write!(f, "Categorical"),
            CovariateModel::Truncated(_) => write!(f, "Truncated"),
            CovariateModel::CategoricalTime => write!(f, "CategoricalTime"),
            CovariateModel::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl CovariateModel {
    /// Fitted GLM-type models with a label suffix, for reporting.
    pub fn fitted(&self) -> Vec<(&'static str, &FittedModel<f64>)> {
        match self {
            CovariateModel::Binary(m)
            | CovariateModel::Normal(m)
            | CovariateModel::Bounded(m)
            | CovariateModel::Categorical(m)
            | CovariateModel::Truncated(m) => vec![("", m)],
            CovariateModel::ZeroInflated { nonzero, mean } => {
                vec![(".nonzero", nonzero), (".mean", mean)]
            }
            _ => Vec::new(),
        }
    }
}

/// Output of fitting one covariate.
#[derive(Debug, Clone)]
pub struct CovariateBundle {
    pub spec: CovariateSpec,
    pub order_index: usize,
    pub model: CovariateModel,
    pub design: Option<DesignSpec>,
    pub ranges: ObservedRanges,
    /// Set when this covariate is the visit indicator of some visit link.
    pub forced_visit_after: Option<usize>,
    pub n_fit_rows: usize,
}

/// Observed data prepared for fitting.
pub struct FitContext<'a> {
    pub table: &'a Table,
    pub subjects: &'a [Range<usize>],
    pub levels: &'a LevelMap,
    pub time_name: &'a str,
    /// Only times `k < time_points` are used.
    pub time_points: usize,
    pub plugins: &'a CovariateRegistry,
}

/// Consecutive visit-indicator zeros at times `k-1, k-2, ...`, stopping at the first 1.
pub fn consecutive_missed(table: &Table, visit: &str, subject: &Range<usize>, k: usize) -> Result<usize> {
    let col = table.index_of(visit)?;
    Ok(missed_run(table, col, subject.start, k))
}

fn missed_run(table: &Table, col: usize, start: usize, k: usize) -> usize {
    (0..k).rev().take_while(|&t| table.get(start + t, col) == 0.0).count()
}

fn observed_ranges(values: &[f64]) -> ObservedRanges {
    let mut r = ObservedRanges {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        nonzero: None,
    };
    let mut nz = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values.iter().filter(|v| !v.is_nan()) {
        r.min = r.min.min(v);
        r.max = r.max.max(v);
        if v != 0.0 {
            nz = (nz.0.min(v), nz.1.max(v));
        }
    }
    if nz.0 <= nz.1 {
        r.nonzero = Some(nz);
    }
    r
}

/// Fits one covariate model on the rows at `0 < k < time_points` that pass
/// the restriction, visit and absorbing filters.
pub fn fit_covariate(
    spec: &CovariateSpec,
    ctx: &FitContext<'_>,
    order_index: usize,
    forced_visit_after: Option<usize>,
) -> Result<CovariateBundle> {
    let t = ctx.table;
    let x = t.index_of(&spec.name)?;
    let ranges = observed_ranges(t.col(x));
    let mut bundle = CovariateBundle {
        spec: spec.clone(),
        order_index,
        model: CovariateModel::CategoricalTime,
        design: None,
        ranges,
        forced_visit_after,
        n_fit_rows: 0,
    };
    if spec.covtype == CovType::CategoricalTime {
        return Ok(bundle);
    }
    let restriction = spec.restriction.as_ref().map(|r| r.condition.bind(t)).transpose()?;
    let visit = spec.visit.as_ref().map(|v| t.index_of(&v.visit)).transpose()?;
    let mut rows = Vec::new();
    for s in ctx.subjects {
        for k in 1..s.len().min(ctx.time_points) {
            let row = s.start + k;
            if restriction.is_some_and(|c| !c.holds(t, row)) {
                continue;
            }
            if visit.is_some_and(|v| t.get(row, v) != 1.0) {
                continue;
            }
            if spec.covtype == CovType::Absorbing && t.get(row - 1, x) != 0.0 {
                continue;
            }
            if forced_visit_after.is_some_and(|m| missed_run(t, x, s.start, k) >= m) {
                continue;
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::Fit(format!(
            "no fitting records for covariate `{}` after applying its restrictions",
            spec.name
        )));
    }
    bundle.n_fit_rows = rows.len();
    if let CovType::Custom(id) = &spec.covtype {
        let plugin = ctx.plugins.get(id)?;
        bundle.model = CovariateModel::Custom(plugin.fit(&spec.params, &spec.name, t, &rows, order_index)?);
        return Ok(bundle);
    }
    let formula = spec
        .formula
        .as_ref()
        .ok_or_else(|| Error::Fit(format!("covariate `{}` has no model statement", spec.name)))?;
    let first = t.get(rows[0], x);
    if rows.iter().all(|&r| t.get(r, x) == first) {
        bundle.model = CovariateModel::Constant(first);
        return Ok(bundle);
    }
    let dspec = DesignSpec::new(formula, t, &rows, ctx.levels)?;
    let mut design = dspec.design(t, &rows)?;
    let link = spec.link;
    let named = |e: Error| e.context(format!("covariate `{}`", spec.name));
    bundle.model = match &spec.covtype {
        CovType::Binary | CovType::Absorbing => {
            CovariateModel::Binary(fit_binomial(&design, link.unwrap_or(Link::Logit)).map_err(named)?)
        }
        CovType::Normal => {
            CovariateModel::Normal(fit_gaussian(&design, link.unwrap_or(Link::Identity)).map_err(named)?)
        }
        CovType::BoundedNormal => {
            let span = ranges.max - ranges.min;
            design.response.iter_mut().for_each(|v| *v = (*v - ranges.min) / span);
            CovariateModel::Bounded(fit_gaussian(&design, link.unwrap_or(Link::Identity)).map_err(named)?)
        }
        CovType::ZeroInflatedNormal => {
            let mut ind = design.clone();
            ind.response.iter_mut().for_each(|v| *v = (*v != 0.0) as u8 as f64);
            let nonzero = fit_binomial(&ind, Link::Logit).map_err(named)?;
            let pos: Vec<usize> = rows.iter().copied().filter(|&r| t.get(r, x) > 0.0).collect();
            let pos_design = dspec.design(t, &pos)?;
            let mean = fit_gaussian(&pos_design, link.unwrap_or(Link::Identity)).map_err(named)?;
            CovariateModel::ZeroInflated { nonzero, mean }
        }
        CovType::Categorical => {
            let n = ctx
                .levels
                .get(&spec.name)
                .map(Vec::len)
                .ok_or_else(|| Error::Type(format!("categorical covariate `{}` is not a categorical column", spec.name)))?;
            let levels: Vec<f64> = (0..n).map(|l| l as f64).collect();
            CovariateModel::Categorical(fit_multinomial(&design, &levels).map_err(named)?)
        }
        CovType::TruncatedNormal => {
            let tr = spec
                .truncation
                .ok_or_else(|| Error::Fit(format!("truncated-normal covariate `{}` needs a truncation point", spec.name)))?;
            CovariateModel::Truncated(fit_truncated_normal(&design, tr.point, tr.direction).map_err(named)?)
        }
        CovType::CategoricalTime | CovType::Custom(_) => unreachable!("handled above"),
    };
    bundle.design = Some(dspec);
    Ok(bundle)
}

/// Conditional law of a covariate given the current row.
#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Fixed(f64),
    Bernoulli(f64),
    Categorical { levels: Vec<f64>, probs: Vec<f64> },
    Normal { mean: f64, sd: f64, lo: f64, hi: f64 },
    /// Draw on the standardised scale, clamp to [0, 1], map back.
    Bounded { mean: f64, sd: f64, min: f64, max: f64 },
    ZeroInflated { p_nonzero: f64, mean: f64, sd: f64, lo: f64, hi: f64 },
    Truncated { mean: f64, sigma: f64, trunc: Truncation<f64>, lo: f64, hi: f64 },
    /// Value comes from a covariate plugin.
    Plugin,
}

impl Law {
    /// Realises the law from two independent open-interval uniforms.
    pub fn realize(&self, u1: f64, u2: f64) -> f64 {
        match self {
            Law::Fixed(v) => *v,
            Law::Bernoulli(p) => (u1 < *p) as u8 as f64,
            Law::Categorical { levels, probs } => {
                let mut acc = 0.0;
                for (l, p) in levels.iter().zip(probs) {
                    acc += p;
                    if u1 < acc {
                        return *l;
                    }
                }
                *levels.last().expect("non-empty level set")
            }
            Law::Normal { mean, sd, lo, hi } => (mean + sd * normal::quantile(u1)).clamp(*lo, *hi),
            Law::Bounded { mean, sd, min, max } => {
                let z = (mean + sd * normal::quantile(u1)).clamp(0.0, 1.0);
                min + z * (max - min)
            }
            Law::ZeroInflated { p_nonzero, mean, sd, lo, hi } => {
                let nz = (u1 < *p_nonzero) as u8 as f64;
                nz * (mean + sd * normal::quantile(u2)).clamp(*lo, *hi)
            }
            Law::Truncated { mean, sigma, trunc, lo, hi } => {
                truncated_normal_draw(*mean, *sigma, Some(*trunc), u1).clamp(*lo, *hi)
            }
            Law::Plugin => f64::NAN,
        }
    }

    /// Support points with probabilities, for discrete laws.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Law::Fixed(v) => Some(vec![(*v, 1.0)]),
            Law::Bernoulli(p) => Some(vec![(0.0, 1.0 - p), (1.0, *p)]),
            Law::Categorical { levels, probs } => {
                Some(levels.iter().copied().zip(probs.iter().copied()).collect())
            }
            _ => None,
        }
    }
}

/// A bundle with its columns resolved against a trajectory table layout.
pub struct BoundCovariate<'a> {
    pub bundle: &'a CovariateBundle,
    pub col: usize,
    design: Option<BoundDesign>,
    restriction: Option<BoundCondition>,
    visit: Option<usize>,
}

impl<'a> BoundCovariate<'a> {
    pub fn bind(bundle: &'a CovariateBundle, table: &Table) -> Result<Self> {
        Ok(Self {
            bundle,
            col: table.index_of(&bundle.spec.name)?,
            design: bundle.design.as_ref().map(|d| d.bind(table)).transpose()?,
            restriction: bundle
                .spec
                .restriction
                .as_ref()
                .map(|r| r.condition.bind(table))
                .transpose()?,
            visit: bundle
                .spec
                .visit
                .as_ref()
                .map(|v| table.index_of(&v.visit))
                .transpose()?,
        })
    }

    /// Law of the value at time `k >= 1` of the trajectory starting at `start`.
    /// `buf` is scratch space of at least the design width.
    pub fn law(&self, table: &Table, start: usize, k: usize, buf: &mut Vec<f64>) -> Result<Law> {
        let b = self.bundle;
        let row = start + k;
        let prev = table.get(row - 1, self.col);
        if let Some(v) = self.visit {
            if table.get(row, v) == 0.0 {
                return Ok(Law::Fixed(prev));
            }
        }
        if let (Some(c), Some(r)) = (&self.restriction, &b.spec.restriction) {
            if !c.holds(table, row) {
                return Ok(Law::Fixed(match r.otherwise {
                    Otherwise::Assign(v) => v,
                    Otherwise::CarryForward => prev,
                }));
            }
        }
        if b.spec.covtype == CovType::Absorbing && prev == 1.0 {
            return Ok(Law::Fixed(1.0));
        }
        if let Some(m) = b.forced_visit_after {
            if missed_run(table, self.col, start, k) >= m {
                return Ok(Law::Fixed(1.0));
            }
        }
        if let Some(d) = &self.design {
            buf.resize(d.width(), 0.0);
            d.fill_row(table, row, buf)?;
        }
        let buf = &buf[..];
        let lin = |m: &FittedModel<f64>| m.predict_mean(buf);
        let r = &b.ranges;
        let law = match &b.model {
            CovariateModel::Constant(v) => Law::Fixed(*v),
            CovariateModel::CategoricalTime => Law::Fixed(categorical_time(k, &b.spec.thresholds)),
            CovariateModel::Custom(_) => Law::Plugin,
            CovariateModel::Binary(m) => Law::Bernoulli(prob(lin(m)?, &b.spec.name)?),
            CovariateModel::Normal(m) => Law::Normal {
                mean: finite(lin(m)?, &b.spec.name)?,
                sd: m.residual_mse.unwrap_or(0.0).sqrt(),
                lo: r.min,
                hi: r.max,
            },
            CovariateModel::Bounded(m) => Law::Bounded {
                mean: finite(lin(m)?, &b.spec.name)?,
                sd: m.residual_mse.unwrap_or(0.0).sqrt(),
                min: r.min,
                max: r.max,
            },
            CovariateModel::ZeroInflated { nonzero, mean } => {
                let (lo, hi) = r.nonzero.unwrap_or((r.min, r.max));
                Law::ZeroInflated {
                    p_nonzero: prob(lin(nonzero)?, &b.spec.name)?,
                    mean: finite(lin(mean)?, &b.spec.name)?,
                    sd: mean.residual_mse.unwrap_or(0.0).sqrt(),
                    lo,
                    hi,
                }
            }
            CovariateModel::Categorical(m) => {
                let probs = m.predict_probs(buf)?;
                for &p in &probs {
                    prob(p, &b.spec.name)?;
                }
                Law::Categorical {
                    levels: m.levels.clone(),
                    probs,
                }
            }
            CovariateModel::Truncated(m) => Law::Truncated {
                mean: finite(lin(m)?, &b.spec.name)?,
                sigma: m.sigma.unwrap_or(0.0),
                trunc: m.truncation.expect("truncation on truncated model"),
                lo: r.min,
                hi: r.max,
            },
        };
        Ok(law)
    }
}

fn finite(v: f64, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Simulation(format!("non-finite predicted mean {v} for `{name}`")))
    }
}

/// Numeric guard for a predicted probability.
pub fn prob(p: f64, name: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::Simulation(format!("predicted probability {p} for `{name}` is outside [0, 1]")))
    }
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    #[test]
    fn consecutive_missed_counts_trailing_zeros() {
        let mut t = Table::new(4);
        t.set_column("V", vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(consecutive_missed(&t, "V", &(0..4), 3).unwrap(), 2);
        t.set_column("V", vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(consecutive_missed(&t, "V", &(0..4), 3).unwrap(), 0);
        t.set_column("V", vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(consecutive_missed(&t, "V", &(0..4), 3).unwrap(), 1);
    }

    #[test]
    fn categorical_time_cuts() {
        let th = [1.0, 3.0, 5.0];
        let cats: Vec<f64> = (0..8).map(|k| categorical_time(k, &th)).collect();
        assert_eq!(cats, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn law_realisations() {
        let n = Law::Normal { mean: 12.0, sd: 1.0, lo: -1.0, hi: 10.0 };
        assert_eq!(n.realize(0.7, 0.5), 10.0);
        let b = Law::Bounded { mean: 0.5, sd: 0.0, min: 2.0, max: 10.0 };
        assert_eq!(b.realize(0.3, 0.5), 6.0);
        let z = Law::ZeroInflated { p_nonzero: 0.5, mean: 3.0, sd: 0.0, lo: 1.0, hi: 5.0 };
        assert_eq!(z.realize(0.9, 0.5), 0.0);
        assert_eq!(z.realize(0.1, 0.5), 3.0);
        let c = Law::Categorical { levels: vec![0.0, 1.0, 2.0], probs: vec![0.2, 0.3, 0.5] };
        assert_eq!(c.realize(0.1, 0.0), 0.0);
        assert_eq!(c.realize(0.3, 0.0), 1.0);
        assert_eq!(c.realize(0.99, 0.0), 2.0);
    }

    fn panel_table() -> (Table, Vec<Range<usize>>) {
        // Two subjects, three times each.
        let mut t = Table::new(6);
        t.set_column("t", vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0]).unwrap();
        t.set_column("X", vec![2.0, 6.0, 10.0, 3.0, 0.0, 5.0]).unwrap();
        t.set_column("D", vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        (t, vec![0..3, 3..6])
    }

    #[test]
    fn absorbing_fit_uses_rows_with_previous_zero() {
        let (t, s) = panel_table();
        let reg = CovariateRegistry::default();
        let ctx = FitContext { table: &t, subjects: &s, levels: &LevelMap::new(), time_name: "t", time_points: 3, plugins: &reg };
        let spec = CovariateSpec::new("D", CovType::Absorbing, Some(parse_formula("D ~ 1").unwrap()));
        let b = fit_covariate(&spec, &ctx, 0, None).unwrap();
        // rows (s0,k=1), (s0,k=2), (s1,k=1); (s1,k=2) has previous value 1.
        assert_eq!(b.n_fit_rows, 3);
        let bound = BoundCovariate::bind(&b, &t).unwrap();
        assert_eq!(bound.law(&t, 3, 2, &mut Vec::new()).unwrap(), Law::Fixed(1.0));
    }

    #[test]
    fn bounded_normal_standardises_response() {
        let (t, s) = panel_table();
        let reg = CovariateRegistry::default();
        let ctx = FitContext { table: &t, subjects: &s, levels: &LevelMap::new(), time_name: "t", time_points: 3, plugins: &reg };
        let mut t2 = t.clone();
        t2.set_column("X", vec![2.0, 6.0, 10.0, 3.0, 6.0, 6.0]).unwrap();
        let ctx2 = FitContext { table: &t2, ..ctx };
        let spec = CovariateSpec::new("X", CovType::BoundedNormal, Some(parse_formula("X ~ 1").unwrap()));
        let b = fit_covariate(&spec, &ctx2, 0, None).unwrap();
        let CovariateModel::Bounded(m) = &b.model else { panic!("bounded model") };
        // responses 6, 10, 6, 6 on the (x - 2) / 8 scale.
        assert!((m.coefficients[(0, 0)] - (0.5 + 1.0 + 0.5 + 0.5) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_inflated_component_sizes() {
        let mut t = Table::new(5);
        t.set_column("t", vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        t.set_column("X", vec![1.0, 0.0, 0.0, 3.0, 5.0]).unwrap();
        let reg = CovariateRegistry::default();
        let s = vec![0..5];
        let ctx = FitContext { table: &t, subjects: &s, levels: &LevelMap::new(), time_name: "t", time_points: 5, plugins: &reg };
        let spec = CovariateSpec::new("X", CovType::ZeroInflatedNormal, Some(parse_formula("X ~ 1").unwrap()));
        let b = fit_covariate(&spec, &ctx, 0, None).unwrap();
        let CovariateModel::ZeroInflated { nonzero, mean } = &b.model else { panic!("zero-inflated") };
        assert_eq!(nonzero.n_obs, 4);
        assert_eq!(mean.n_obs, 2);
        assert_eq!(b.ranges.nonzero, Some((1.0, 5.0)));
    }
}

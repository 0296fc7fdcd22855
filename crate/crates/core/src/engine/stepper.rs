//! One trajectory's time step, shared by Monte Carlo and enumeration.

use rand::RngCore;

use super::{bind_restrictions, FittedOutcome, FittedSuite, Plugins, Prepared};
use crate::covariate::{BoundCondition, BoundCovariate, CovType, CovariateModel, Law, PredictContext};
use crate::error::{Error, Result};
use crate::fitting::{Direction, FittedModel};
use crate::formula::BoundDesign;
use crate::history::BoundHistory;
use crate::intervention::{
    apply_rule, grace_condition, GraceTracker, InterventionContext, InterventionSpec, Rule, RuleSpec, Support,
};
use crate::table::Table;

struct BoundRule<'a> {
    spec: &'a RuleSpec,
    /// Index into the tracker and natural-value arrays.
    slot: usize,
    condition: Option<BoundCondition>,
    support: Support,
}

struct BoundOutcome<'a> {
    model: &'a FittedModel<f64>,
    design: BoundDesign,
    restrictions: Vec<(BoundCondition, f64)>,
}

impl<'a> BoundOutcome<'a> {
    fn bind(o: &'a FittedOutcome, table: &Table) -> Result<Self> {
        Ok(Self {
            model: &o.model,
            design: o.design.bind(table)?,
            restrictions: bind_restrictions(&o.restrictions, table)?,
        })
    }

    fn predict(&self, table: &Table, row: usize, buf: &mut Vec<f64>, what: &str) -> Result<f64> {
        if let Some((_, v)) = self.restrictions.iter().find(|(c, _)| !c.holds(table, row)) {
            return Ok(*v);
        }
        buf.resize(self.design.width(), 0.0);
        self.design.fill_row(table, row, buf)?;
        let m = self.model.predict_mean(buf)?;
        if !m.is_finite() {
            return Err(Error::Simulation(format!("non-finite prediction from the {what} model")));
        }
        Ok(m)
    }
}

fn support_of(cov: &BoundCovariate<'_>) -> Support {
    let b = cov.bundle;
    match &b.spec.covtype {
        CovType::Binary | CovType::Absorbing => Support::Binary,
        CovType::Categorical => match &b.model {
            CovariateModel::Categorical(m) => Support::Levels(m.levels.len()),
            _ => Support::Interval(b.ranges.min, b.ranges.max),
        },
        CovType::CategoricalTime => Support::Levels(b.spec.thresholds.len() + 1),
        CovType::BoundedNormal => Support::Interval(b.ranges.min, b.ranges.max),
        CovType::ZeroInflatedNormal => Support::Interval(0.0, f64::INFINITY),
        CovType::TruncatedNormal => match b.spec.truncation {
            Some(t) if t.direction == Direction::Left => Support::Interval(t.point, f64::INFINITY),
            Some(t) => Support::Interval(f64::NEG_INFINITY, t.point),
            None => Support::Interval(f64::NEG_INFINITY, f64::INFINITY),
        },
        CovType::Normal | CovType::Custom(_) => Support::Interval(f64::NEG_INFINITY, f64::INFINITY),
    }
}

pub(crate) struct Stepper<'a> {
    prepared: &'a Prepared,
    plugins: &'a Plugins,
    pub template: Table,
    pub time_points: usize,
    pub covs: Vec<BoundCovariate<'a>>,
    rules: Vec<Option<BoundRule<'a>>>,
    pub n_rules: usize,
    histories: Vec<BoundHistory>,
    outcome: BoundOutcome<'a>,
    compevent: Option<BoundOutcome<'a>>,
    span: std::ops::Range<usize>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        suite: &'a FittedSuite,
        prepared: &'a Prepared,
        intervention: &'a InterventionSpec,
        plugins: &'a Plugins,
    ) -> Result<Self> {
        let t = suite.time_points;
        let mut template = Table::new(t);
        for name in prepared.table.names() {
            template.set_column(name, vec![0.0; t])?;
        }
        let covs = suite
            .covariates
            .iter()
            .map(|b| BoundCovariate::bind(b, &template))
            .collect::<Result<Vec<_>>>()?;
        let mut rules: Vec<Option<BoundRule>> = covs.iter().map(|_| None).collect();
        for (slot, r) in intervention.rules.iter().enumerate() {
            let i = covs
                .iter()
                .position(|c| c.bundle.spec.name == r.variable)
                .ok_or_else(|| {
                    Error::Intervention(format!(
                        "`{}` in intervention `{}` is not a time-varying covariate",
                        r.variable, intervention.label
                    ))
                })?;
            if rules[i].is_some() {
                return Err(Error::Intervention(format!(
                    "intervention `{}` has more than one rule for `{}`",
                    intervention.label, r.variable
                )));
            }
            r.rule.validate(t)?;
            if let Rule::Custom { plugin, .. } = &r.rule {
                plugins.interventions.get(plugin)?;
            }
            rules[i] = Some(BoundRule {
                spec: r,
                slot,
                condition: grace_condition(&r.rule).map(|c| c.bind(&template)).transpose()?,
                support: support_of(&covs[i]),
            });
        }
        let histories = suite
            .histories
            .iter()
            .map(|h| BoundHistory::bind(h, &template, &plugins.histories))
            .collect::<Result<Vec<_>>>()?;
        let outcome = BoundOutcome::bind(&suite.outcome, &template)?;
        let compevent = suite
            .compevent
            .as_ref()
            .map(|c| BoundOutcome::bind(c, &template))
            .transpose()?;
        Ok(Self {
            prepared,
            plugins,
            template,
            time_points: t,
            covs,
            rules,
            n_rules: intervention.rules.len(),
            histories,
            outcome,
            compevent,
            span: 0..t,
        })
    }

    /// Fills every row with the subject's baseline record and sets the time column.
    pub fn reset(&self, tab: &mut Table, subject: usize) -> Result<()> {
        let src = self.prepared.subjects[subject].start;
        for j in 0..tab.names().len() {
            let v = self.prepared.table.get(src, j);
            tab.col_mut(j).iter_mut().for_each(|x| *x = v);
        }
        let tc = tab.index_of(&self.prepared.time)?;
        for (k, x) in tab.col_mut(tc).iter_mut().enumerate() {
            *x = k as f64;
        }
        Ok(())
    }

    /// Time 0: histories, then rules on the observed treatments.
    pub fn start(&self, tab: &mut Table, trackers: &mut [GraceTracker], naturals: &mut [f64]) -> Result<()> {
        self.begin(tab, 0)?;
        for i in 0..self.covs.len() {
            if self.rules[i].is_some() {
                let natural = tab.get(0, self.covs[i].col);
                self.set(i, tab, 0, natural, trackers, naturals)?;
            }
        }
        Ok(())
    }

    /// Recomputes every history column at `k`.
    pub fn begin(&self, tab: &mut Table, k: usize) -> Result<()> {
        for h in &self.histories {
            h.apply(tab, &self.span, k, &self.prepared.time, None)?;
        }
        Ok(())
    }

    pub fn law(&self, i: usize, tab: &Table, k: usize, buf: &mut Vec<f64>) -> Result<Law> {
        self.covs[i].law(tab, 0, k, buf)
    }

    pub fn plugin_draw(&self, i: usize, tab: &Table, k: usize, rng: &mut dyn RngCore) -> Result<f64> {
        let b = self.covs[i].bundle;
        let (CovType::Custom(id), CovariateModel::Custom(fit)) = (&b.spec.covtype, &b.model) else {
            unreachable!("plugin law on a built-in covariate")
        };
        let ctx = PredictContext {
            observed: &self.prepared.table,
            simulated: tab,
            rows: &[k],
            time_name: &self.prepared.time,
            k,
            restriction: b.spec.restriction.as_ref(),
            covariate: &b.spec.name,
            params: &b.spec.params,
        };
        let out = self.plugins.covariates.get(id)?.predict(&ctx, fit, rng)?;
        if out.len() != 1 {
            return Err(Error::Plugin(format!(
                "covariate plugin `{id}` returned {} values for 1 row",
                out.len()
            )));
        }
        Ok(out[0])
    }

    /// Writes the natural value of covariate `i` at `k`, applies its rule,
    /// and refreshes the histories that read it.
    pub fn set(
        &self,
        i: usize,
        tab: &mut Table,
        k: usize,
        natural: f64,
        trackers: &mut [GraceTracker],
        naturals: &mut [f64],
    ) -> Result<()> {
        let col = self.covs[i].col;
        tab.set(k, col, natural);
        if let Some(r) = &self.rules[i] {
            naturals[r.slot] = natural;
            if r.spec.applies_at(k) {
                let assigned = match &r.spec.rule {
                    Rule::Custom { plugin, params } => {
                        let ctx = InterventionContext {
                            rows: &[k],
                            variable: &r.spec.variable,
                            params,
                            time_name: &self.prepared.time,
                            k,
                        };
                        self.plugins.interventions.get(plugin)?.apply(&ctx, tab)?;
                        let v = tab.get(k, col);
                        if !r.support.contains(v) {
                            return Err(Error::Intervention(format!(
                                "intervention plugin `{plugin}` assigned {v} to `{}`, outside its support",
                                r.spec.variable
                            )));
                        }
                        v
                    }
                    rule => {
                        let cond = r.condition.is_some_and(|c| c.holds(tab, k));
                        apply_rule(rule, natural, &mut trackers[r.slot], cond, k)
                    }
                };
                tab.set(k, col, assigned);
            }
        }
        for h in self.histories.iter().filter(|h| h.reads(col)) {
            h.apply(tab, &self.span, k, &self.prepared.time, Some(col))?;
        }
        Ok(())
    }

    /// Outcome hazard (or mean) and competing-event hazard at `k`.
    pub fn hazards(&self, tab: &Table, k: usize, buf: &mut Vec<f64>) -> Result<(f64, f64)> {
        let p = self.outcome.predict(tab, k, buf, "outcome")?;
        let q = match &self.compevent {
            Some(c) => crate::covariate::prob(c.predict(tab, k, buf, "competing event")?, "competing event")?,
            None => 0.0,
        };
        Ok((p, q))
    }
}

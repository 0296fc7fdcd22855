//! Treatment rules applied to the natural (drawn) value of treatment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::covariate::{CmpOp, Condition};
use crate::error::{Error, Result};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    /// `values[k]` at time `k`.
    Static(Vec<f64>),
    /// Clamp the natural value into `[min, max]`.
    Threshold { min: f64, max: f64 },
    NaturalCourse,
    /// 0 until `condition` first holds; the natural value during the next
    /// `m` intervals; `treat` from then on. Absorbing once `treat` is assigned.
    GracePeriod { condition: Condition, m: usize, treat: f64 },
    /// A registered intervention plugin, by id.
    Custom { plugin: String, params: BTreeMap<String, f64> },
}

impl Rule {
    pub fn validate(&self, time_points: usize) -> Result<()> {
        match self {
            Rule::Static(v) if v.len() != time_points => Err(Error::Intervention(format!(
                "static rule has {} values but there are {time_points} time points",
                v.len()
            ))),
            Rule::Threshold { min, max } if min > max || min.is_nan() || max.is_nan() => {
                Err(Error::Intervention(format!("threshold rule needs min <= max, got [{min}, {max}]")))
            }
            Rule::GracePeriod { m: 0, .. } => Err(Error::Intervention("grace period length must be at least 1".into())),
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Rule::Static(v) => {
                let first = v.first().copied().unwrap_or(f64::NAN);
                if v.iter().all(|&x| x == first) {
                    format!("set to {first} at all times")
                } else {
                    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                    format!("set to ({})", parts.join(", "))
                }
            }
            Rule::Threshold { min, max } => format!("keep within [{min}, {max}]"),
            Rule::NaturalCourse => "natural course".to_string(),
            Rule::GracePeriod { condition, m, treat } => {
                format!("set to {treat} within {m} intervals after {condition} first holds")
            }
            Rule::Custom { plugin, .. } => format!("custom rule `{plugin}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSpec {
    pub variable: String,
    pub rule: Rule,
    /// Times at which the rule applies; `None` means all times.
    pub times: Option<BTreeSet<usize>>,
}

impl RuleSpec {
    pub fn new(variable: &str, rule: Rule) -> Self {
        Self {
            variable: variable.to_string(),
            rule,
            times: None,
        }
    }

    pub fn applies_at(&self, k: usize) -> bool {
        self.times.as_ref().is_none_or(|t| t.contains(&k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionSpec {
    pub label: String,
    pub rules: Vec<RuleSpec>,
}

impl InterventionSpec {
    pub fn new(label: &str, rules: Vec<RuleSpec>) -> Self {
        Self {
            label: label.to_string(),
            rules,
        }
    }

    pub fn describe(&self) -> String {
        if self.rules.is_empty() {
            return "Natural course".to_string();
        }
        let parts: Vec<String> = self
            .rules
            .iter()
            .map(|r| format!("{}: {}", r.variable, r.rule.describe()))
            .collect();
        parts.join("; ")
    }
}

/// The natural course: every treatment keeps its natural value.
pub fn natural_course_spec(treatments: &[&str]) -> InterventionSpec {
    InterventionSpec::new(
        "Natural course",
        treatments.iter().map(|t| RuleSpec::new(t, Rule::NaturalCourse)).collect(),
    )
}

/// Per-trajectory grace-period state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraceTracker {
    pub condition_met_ever: bool,
    pub first_met_time: Option<usize>,
    pub initiated: bool,
}

impl GraceTracker {
    pub fn update(&mut self, condition: bool, k: usize) {
        if condition && !self.condition_met_ever {
            self.condition_met_ever = true;
            self.first_met_time = Some(k);
        }
    }
}

/// Assigned value for a non-plugin rule. `condition` is the grace-period
/// condition evaluated at `k` (ignored by other rules).
pub fn apply_rule(rule: &Rule, natural: f64, tracker: &mut GraceTracker, condition: bool, k: usize) -> f64 {
    match rule {
        Rule::Static(v) => v[k],
        Rule::Threshold { min, max } => natural.clamp(*min, *max),
        Rule::NaturalCourse | Rule::Custom { .. } => natural,
        Rule::GracePeriod { m, treat, .. } => {
            tracker.update(condition, k);
            let value = if tracker.initiated {
                *treat
            } else if !tracker.condition_met_ever {
                0.0
            } else if k >= tracker.first_met_time.expect("set with condition_met_ever") + m {
                *treat
            } else {
                natural
            };
            if value == *treat {
                tracker.initiated = true;
            }
            value
        }
    }
}

/// Arguments passed to an intervention plugin.
pub struct InterventionContext<'a> {
    /// Rows at time `k`; rows of earlier times in the same table hold the
    /// simulated history.
    pub rows: &'a [usize],
    pub variable: &'a str,
    pub params: &'a BTreeMap<String, f64>,
    pub time_name: &'a str,
    pub k: usize,
}

/// A user-defined intervention. It overwrites `variable` at `rows` where the
/// intervention applies and leaves the natural value elsewhere.
pub trait InterventionPlugin: Send + Sync {
    fn apply(&self, ctx: &InterventionContext<'_>, table: &mut Table) -> Result<()>;
}

#[derive(Clone, Default)]
pub struct InterventionRegistry {
    plugins: BTreeMap<String, Arc<dyn InterventionPlugin>>,
}

impl fmt::Debug for InterventionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.plugins.keys()).finish()
    }
}

impl InterventionRegistry {
    pub fn register(&mut self, id: &str, plugin: Arc<dyn InterventionPlugin>) -> Result<String> {
        if self.plugins.contains_key(id) {
            return Err(Error::Plugin(format!("intervention plugin `{id}` already registered")));
        }
        self.plugins.insert(id.to_string(), plugin);
        Ok(id.to_string())
    }

    pub fn get(&self, id: &str) -> Result<&Arc<dyn InterventionPlugin>> {
        self.plugins
            .get(id)
            .ok_or_else(|| Error::Plugin(format!("unknown intervention plugin `{id}`")))
    }
}

/// Support of a treatment covariate, for checking plugin output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Binary,
    Levels(usize),
    Interval(f64, f64),
}

impl Support {
    pub fn contains(self, v: f64) -> bool {
        match self {
            Support::Binary => v == 0.0 || v == 1.0,
            Support::Levels(n) => v >= 0.0 && v.fract() == 0.0 && (v as usize) < n,
            Support::Interval(lo, hi) => v >= lo && v <= hi,
        }
    }
}

pub fn grace_condition(rule: &Rule) -> Option<&Condition> {
    match rule {
        Rule::GracePeriod { condition, .. } => Some(condition),
        _ => None,
    }
}

pub fn threshold_from(op: CmpOp, value: f64) -> Option<Rule> {
    match op {
        CmpOp::Ge | CmpOp::Gt => Some(Rule::Threshold { min: value, max: f64::INFINITY }),
        CmpOp::Le | CmpOp::Lt => Some(Rule::Threshold { min: f64::NEG_INFINITY, max: value }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grace(m: usize) -> Rule {
        Rule::GracePeriod {
            condition: Condition::new("cd4", CmpOp::Lt, 350f64.ln()),
            m,
            treat: 1.0,
        }
    }

    fn trace(rule: &Rule, cond: &[bool], natural: &[f64]) -> Vec<f64> {
        let mut tr = GraceTracker::default();
        (0..cond.len()).map(|k| apply_rule(rule, natural[k], &mut tr, cond[k], k)).collect()
    }

    #[test]
    fn simple_rules() {
        let mut tr = GraceTracker::default();
        assert_eq!(apply_rule(&Rule::Threshold { min: 2.0, max: f64::INFINITY }, 1.5, &mut tr, false, 0), 2.0);
        assert_eq!(apply_rule(&Rule::Static(vec![0.0; 3]), 1.0, &mut tr, false, 2), 0.0);
        assert_eq!(apply_rule(&Rule::NaturalCourse, 0.7, &mut tr, false, 1), 0.7);
    }

    #[test]
    fn grace_period_natural_initiation() {
        let cond = [false, false, false, true, true, true, true, true];
        let natural = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(trace(&grace(6), &cond, &natural), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn grace_period_forced_initiation() {
        let cond = [true; 9];
        let natural = [0.0; 9];
        let out = trace(&grace(6), &cond, &natural);
        assert_eq!(out, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn grace_period_never_met() {
        assert_eq!(trace(&grace(2), &[false; 5], &[1.0; 5]), vec![0.0; 5]);
    }

    #[test]
    fn tracker_latches() {
        let mut tr = GraceTracker::default();
        tr.update(false, 0);
        tr.update(true, 2);
        tr.update(false, 3);
        tr.update(true, 4);
        assert_eq!(tr.first_met_time, Some(2));
        assert!(tr.condition_met_ever);
    }

    #[test]
    fn rule_validation() {
        assert!(Rule::Static(vec![1.0; 2]).validate(3).is_err());
        assert!(Rule::Threshold { min: 2.0, max: 1.0 }.validate(3).is_err());
        assert!(grace(0).validate(3).is_err());
        assert!(grace(1).validate(3).is_ok());
    }
}

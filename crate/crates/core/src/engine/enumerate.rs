//! Exact evaluation of the g-formula sum for discrete covariate systems.

use super::stepper::Stepper;
use super::{FittedSuite, Plugins, Prepared};
use crate::covariate::CovType;
use crate::error::{Error, Result};
use crate::intervention::{GraceTracker, InterventionSpec, Rule};
use crate::table::Table;

/// Largest number of covariate paths enumerated per baseline record.
pub const MAX_PATHS: usize = 1_000_000;

struct Walk<'s, 'a> {
    stepper: &'s Stepper<'a>,
    eof: bool,
    acc: Vec<f64>,
    leaves: usize,
    buf: Vec<f64>,
    naturals: Vec<f64>,
}

impl Walk<'_, '_> {
    fn rec(&mut self, tab: &mut Table, k: usize, i: usize, w: f64, surv: f64, trackers: &[GraceTracker]) -> Result<()> {
        let st = self.stepper;
        if i == st.covs.len() {
            let (p, q) = st.hazards(tab, k, &mut self.buf)?;
            let last = k + 1 == st.time_points;
            if self.eof {
                if last {
                    self.acc[0] += w * p;
                }
            } else {
                self.acc[k] += w * surv * p * (1.0 - q);
            }
            if last {
                self.leaves += 1;
                if self.leaves > MAX_PATHS {
                    return Err(Error::Unsupported(format!(
                        "exact enumeration needs more than {MAX_PATHS} paths per baseline record"
                    )));
                }
                return Ok(());
            }
            st.begin(tab, k + 1)?;
            return self.rec(tab, k + 1, 0, w, surv * (1.0 - p) * (1.0 - q), trackers);
        }
        let law = st.law(i, tab, k, &mut self.buf)?;
        let atoms = law.atoms().ok_or_else(|| {
            Error::Unsupported(format!(
                "exact enumeration needs discrete covariates; `{}` is continuous",
                st.covs[i].bundle.spec.name
            ))
        })?;
        for (value, pr) in atoms {
            if pr <= 0.0 {
                continue;
            }
            let mut tr = trackers.to_vec();
            st.set(i, tab, k, value, &mut tr, &mut self.naturals)?;
            self.rec(tab, k, i + 1, w * pr, surv, &tr)?;
        }
        Ok(())
    }
}

/// Exact g-formula value under `intervention`, averaging over the observed
/// baseline records: the risk by each horizon for survival outcomes, or a
/// single mean for end-of-follow-up outcomes.
pub fn enumerate_gformula(
    suite: &FittedSuite,
    prepared: &Prepared,
    intervention: &InterventionSpec,
    plugins: &Plugins,
) -> Result<Vec<f64>> {
    for b in &suite.covariates {
        if matches!(b.spec.covtype, CovType::Custom(_)) || !b.spec.is_discrete() {
            return Err(Error::Unsupported(format!(
                "exact enumeration needs binary or categorical covariates; `{}` is not",
                b.spec.name
            )));
        }
    }
    if intervention.rules.iter().any(|r| matches!(r.rule, Rule::Custom { .. })) {
        return Err(Error::Unsupported("exact enumeration does not support custom intervention rules".into()));
    }
    let stepper = Stepper::new(suite, prepared, intervention, plugins)?;
    let t = suite.time_points;
    let eof = suite.outcome_kind.is_eof();
    let mut walk = Walk {
        stepper: &stepper,
        eof,
        acc: vec![0.0; if eof { 1 } else { t }],
        leaves: 0,
        buf: Vec::new(),
        naturals: vec![0.0; stepper.n_rules],
    };
    let mut tab = stepper.template.clone();
    let n = prepared.n_subjects();
    for subject in 0..n {
        let mut trackers = vec![GraceTracker::default(); stepper.n_rules];
        stepper.reset(&mut tab, subject)?;
        let mut naturals = vec![0.0; stepper.n_rules];
        stepper.start(&mut tab, &mut trackers, &mut naturals)?;
        walk.leaves = 0;
        walk.rec(&mut tab, 0, stepper.covs.len(), 1.0, 1.0, &trackers)?;
    }
    let mut out = walk.acc;
    if !eof {
        for k in 1..t {
            out[k] += out[k - 1];
        }
    }
    out.iter_mut().for_each(|x| *x /= n as f64);
    Ok(out)
}

mod common;

use common::{main_effects, saturated, Dgp};
use gformula::engine::{enumerate_gformula, fit_all, prepare, risk_curve, simulate, RunConfig};
use gformula::intervention::{natural_course_spec, InterventionSpec, Rule, RuleSpec};
use gformula::nonparametric::product_limit_curve;

#[test]
fn saturated_mc_matches_enumeration_and_product_limit() {
    let dgp = Dgp::basic(1500, 2);
    let data = dgp.panel(11);
    let (model, plugins) = saturated(false);
    let prepared = prepare(&data, &model, &plugins).unwrap();
    let suite = fit_all(&prepared, &model, &plugins, 2).unwrap();
    let nc = natural_course_spec(&["A"]);
    let exact = enumerate_gformula(&suite, &prepared, &nc, &plugins).unwrap();
    let mut run = RunConfig::new(2, 5);
    run.nsimul = Some(20_000);
    let sim = simulate(&suite, &prepared, &nc, &run, 0, &plugins).unwrap();
    let mc = risk_curve(&sim).unwrap();
    let pl = product_limit_curve(&data, 2);
    for k in 0..2 {
        assert!((mc[k] - exact[k]).abs() < 0.01, "k={k} mc={} exact={}", mc[k], exact[k]);
        assert!((exact[k] - pl[k].unwrap()).abs() < 1e-9, "k={k} exact={} pl={:?}", exact[k], pl[k]);
    }
}

#[test]
fn static_interventions_assign_every_row() {
    let dgp = Dgp::basic(300, 3);
    let data = dgp.panel(3);
    let model = main_effects(false);
    let plugins = Default::default();
    let prepared = prepare(&data, &model, &plugins).unwrap();
    let suite = fit_all(&prepared, &model, &plugins, 3).unwrap();
    let always = InterventionSpec::new("always", vec![RuleSpec::new("A", Rule::Static(vec![1.0; 3]))]);
    let mut run = RunConfig::new(3, 9);
    run.keep_trajectories = true;
    let sim = simulate(&suite, &prepared, &always, &run, 0, &plugins).unwrap();
    let t = sim.data.as_ref().unwrap();
    assert!(t.column("A").unwrap().iter().all(|&a| a == 1.0));
    let risk = risk_curve(&sim).unwrap();
    assert!(risk.windows(2).all(|w| w[0] <= w[1]));
}

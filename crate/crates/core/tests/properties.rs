use gformula::engine::trajectory_risk;
use gformula::inference::{contrast, nearest_rank, resample_picks, summarize};
use gformula::nonparametric::{aalen_johansen_curve, product_limit_curve};
use gformula::panel::{load_panel, OutcomeKind, Schema};
use gformula::rng::{derive_seed, stream, Purpose};
use proptest::prelude::*;
use rand::Rng;

/// Panel csv from per-subject (follow-up length, terminal code):
/// 0 censored after the last row, 1 event, 2 competing event.
fn survival_csv(subjects: &[(usize, u8)]) -> String {
    let mut s = String::from("id,t,Y,D\n");
    for (i, &(len, end)) in subjects.iter().enumerate() {
        for t in 0..len {
            let last = t + 1 == len;
            let (y, d) = match (last, end) {
                (true, 1) => ("1", "0"),
                (true, 2) => ("NA", "1"),
                _ => ("0", "0"),
            };
            s.push_str(&format!("{i},{t},{y},{d}\n"));
        }
    }
    s
}

fn subjects() -> impl Strategy<Value = Vec<(usize, u8)>> {
    prop::collection::vec((1usize..6, 0u8..3), 1..40)
}

proptest! {
    #[test]
    fn risk_is_monotone_and_bounded(pq in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..12)) {
        let (p, q): (Vec<f64>, Vec<f64>) = pq.into_iter().unzip();
        let mut out = vec![0.0; p.len()];
        trajectory_risk(&p, &q, &mut out);
        let mut prev = 0.0;
        for &r in &out {
            prop_assert!(r >= prev - 1e-15 && r <= 1.0 + 1e-12);
            prev = r;
        }
        // Without competing events risk is one minus the product of survivals.
        let zeros = vec![0.0; p.len()];
        trajectory_risk(&p, &zeros, &mut out);
        let surv: f64 = p.iter().map(|x| 1.0 - x).product();
        prop_assert!((out[p.len() - 1] - (1.0 - surv)).abs() < 1e-12);
    }

    #[test]
    fn contrast_against_itself_is_neutral(x in 1e-6f64..1.0) {
        prop_assert_eq!(contrast(Some(x), Some(x)), (Some(1.0), Some(0.0)));
    }

    #[test]
    fn contrast_is_scale_equivariant(e in 0.0f64..1.0, r in 1e-3f64..1.0, c in 0.1f64..10.0) {
        let (ratio, diff) = contrast(Some(e), Some(r));
        let (ratio_c, diff_c) = contrast(Some(c * e), Some(c * r));
        prop_assert!((ratio.unwrap() - ratio_c.unwrap()).abs() < 1e-9 * (1.0 + ratio.unwrap()));
        prop_assert!((c * diff.unwrap() - diff_c.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn nearest_rank_picks_an_order_statistic(mut v in prop::collection::vec(-1e3f64..1e3, 1..200), q in 0.0f64..=1.0) {
        v.sort_by(f64::total_cmp);
        let x = nearest_rank(&v, q);
        prop_assert!(v.contains(&x));
        let below = v.iter().filter(|&&y| y < x).count();
        prop_assert!(below as f64 <= (q * v.len() as f64).ceil());
        prop_assert!(nearest_rank(&v, 0.0) == v[0] && nearest_rank(&v, 1.0) == v[v.len() - 1]);
    }

    #[test]
    fn interval_brackets_are_ordered(v in prop::collection::vec(prop::option::of(-5.0f64..5.0), 1..60)) {
        if let Some(i) = summarize(&v) {
            prop_assert!(i.lower <= i.upper);
            prop_assert_eq!(i.n, v.iter().flatten().count());
        } else {
            prop_assert!(v.iter().all(Option::is_none));
        }
    }

    #[test]
    fn product_limit_is_a_monotone_probability(subjects in subjects()) {
        let data = load_panel(survival_csv(&subjects).as_bytes(), &Schema::new("id", "t", "Y", OutcomeKind::Survival).with_compevent("D")).unwrap();
        let curve = product_limit_curve(&data, 5);
        let mut prev = 0.0;
        let mut ended = false;
        for r in curve {
            match r {
                Some(r) => {
                    prop_assert!(!ended, "curve resumed after an empty risk set");
                    prop_assert!((prev..=1.0).contains(&r));
                    prev = r;
                }
                None => ended = true,
            }
        }
    }

    #[test]
    fn aalen_johansen_decomposes(subjects in subjects()) {
        let data = load_panel(survival_csv(&subjects).as_bytes(), &Schema::new("id", "t", "Y", OutcomeKind::Survival).with_compevent("D")).unwrap();
        let mut prev = (0.0, 0.0);
        for c in aalen_johansen_curve(&data, 5).into_iter().flatten() {
            prop_assert!((c.event + c.competing + c.survival - 1.0).abs() < 1e-12);
            prop_assert!(c.event >= prev.0 - 1e-15 && c.competing >= prev.1 - 1e-15);
            prev = (c.event, c.competing);
        }
    }

    #[test]
    fn aalen_johansen_without_competing_matches_product_limit(subjects in prop::collection::vec((1usize..6, 0u8..2), 1..40)) {
        let data = load_panel(survival_csv(&subjects).as_bytes(), &Schema::new("id", "t", "Y", OutcomeKind::Survival).with_compevent("D")).unwrap();
        let pl = product_limit_curve(&data, 5);
        let aj = aalen_johansen_curve(&data, 5);
        for (a, b) in pl.iter().zip(&aj) {
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a - b.event).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn streams_depend_on_every_key(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(seed, &[a]), derive_seed(seed, &[b]));
        let x: u64 = stream(seed, Purpose::Trajectory, &[a]).random();
        let y: u64 = stream(seed, Purpose::Trajectory, &[a]).random();
        let z: u64 = stream(seed, Purpose::Baseline, &[a]).random();
        prop_assert_eq!(x, y);
        prop_assert_ne!(x, z);
    }

    #[test]
    fn resamples_stay_in_range_and_repeat(n in 1usize..500, seed in any::<u64>(), b in 0usize..50) {
        let picks = resample_picks(n, seed, b);
        prop_assert_eq!(picks.len(), n);
        prop_assert!(picks.iter().all(|&i| i < n));
        prop_assert_eq!(picks, resample_picks(n, seed, b));
    }
}

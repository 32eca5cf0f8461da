use cutin_rare::cli::to_canonical_json;
use cutin_rare::estimators::{draw_samples, GridProposal};
use cutin_rare::fit::{BandModel, FitConfig, Metric, Observation, ObservationSet};
use cutin_rare::policy::*;
use cutin_rare::rng;
use cutin_rare::scenario::*;
use proptest::prelude::*;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn deterministic_cfg() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.follower.sigma_imperfection = 0.0;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_integrates_to_one(lambda in -100.0f64..100.0) {
        let total = simpson(|u| component_density(u, lambda).unwrap(), -1.0, 1.0, 40_000);
        prop_assert!((total - 1.0).abs() < 1e-9, "lambda {lambda}: {total}");
    }

    #[test]
    fn density_monotone_in_utility(lambda in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0]) {
        let mut prev = component_density(-1.0, lambda).unwrap();
        for i in 1..=1000 {
            let d = component_density(-1.0 + 2.0 * i as f64 / 1000.0, lambda).unwrap();
            if lambda > 0.0 { prop_assert!(d > prev) } else { prop_assert!(d < prev) }
            prev = d;
        }
    }

    #[test]
    fn inverse_cdf_round_trip(lambda in -100.0f64..100.0, p in 0.0f64..=1.0) {
        let u = component_cdf_inverse(p, lambda, -1.0, 1.0).unwrap();
        let back = component_cdf(u, lambda, -1.0, 1.0).unwrap();
        prop_assert!((back - p).abs() < 1e-10, "lambda {lambda}, p {p}: {back}");
    }

    #[test]
    fn category_sampling_round_trip(idx in 0usize..8, seed in any::<u64>(), lmax in 0.1f64..350.0) {
        let cat = BehaviorCategory::ALL[idx];
        let mut r = rng::stream(seed, "prop", 0);
        let lam = sample_lambda_in_category(cat, lmax, &mut r);
        prop_assert_eq!(behavior_category_of(&lam).unwrap(), cat);
        prop_assert!(lam.lambdas().iter().all(|l| l.abs() <= lmax && *l != 0.0));
    }

    #[test]
    fn mixed_density_collapses_to_mixture(
        lp in prop::array::uniform3(0.01f64..100.0),
        lm in prop::array::uniform3(-100.0f64..-0.01),
        v_s in 0.0f64..40.0, v_lc in 0.0f64..45.0, gap in 0.0f64..60.0,
    ) {
        let spec = UtilitySpec::default();
        let s = SubjectState::new(v_s).unwrap();
        let a = CutInAction::new(v_lc, gap).unwrap();
        let plus = MixedPolicyParams::new(lp, lm, [1.0; 3]).unwrap();
        let minus = MixedPolicyParams::new(lp, lm, [0.0; 3]).unwrap();
        let mp = mixture_density(&s, &a, &RationalityVector::new(lp[0], lp[1], lp[2]).unwrap(), &spec).unwrap();
        let mm = mixture_density(&s, &a, &RationalityVector::new(lm[0], lm[1], lm[2]).unwrap(), &spec).unwrap();
        let dp = mixed_density(&s, &a, &plus, &spec).unwrap();
        let dm = mixed_density(&s, &a, &minus, &spec).unwrap();
        prop_assert!((dp - mp).abs() <= 2.0 * f64::EPSILON * mp.abs());
        prop_assert!((dm - mm).abs() <= 2.0 * f64::EPSILON * mm.abs());
    }

    #[test]
    fn rollout_kinematics(v_s in 0.0f64..40.0, v_lc in 0.0f64..40.0, gap in 0.0f64..60.0, seed in any::<u64>()) {
        let cfg = ScenarioConfig::default();
        let s = SubjectState::new(v_s).unwrap();
        let a = CutInAction::new(v_lc, gap).unwrap();
        if let Ok(t) = rollout(&s, &a, &cfg, seed) {
            for w in t.subject.windows(2).chain(t.target.windows(2)) {
                prop_assert!(w[1].pos >= w[0].pos);
            }
            for v in t.subject.iter().chain(&t.target) {
                prop_assert!(v.vel >= 0.0 && v.vel <= 1.5 * cfg.v_limit);
            }
        }
    }

    #[test]
    fn deterministic_follower_ignores_seed(v_s in 5.0f64..35.0, v_lc in 0.0f64..35.0, gap in 0.0f64..40.0, s1 in any::<u64>(), s2 in any::<u64>()) {
        let cfg = deterministic_cfg();
        let s = SubjectState::new(v_s).unwrap();
        let a = CutInAction::new(v_lc, gap).unwrap();
        match (rollout(&s, &a, &cfg, s1), rollout(&s, &a, &cfg, s2)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "feasibility depends on seed"),
        }
    }

    #[test]
    fn smaller_gap_never_raises_min_gap(v_s in 5.0f64..35.0, v_lc in 0.0f64..35.0, g1 in 0.0f64..50.0, g2 in 0.0f64..50.0) {
        let cfg = deterministic_cfg();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let s = SubjectState::new(v_s).unwrap();
        let run = |g: f64| rollout(&s, &CutInAction::new(v_lc, g).unwrap(), &cfg, 0)
            .map(|t| t.gap_series.iter().cloned().fold(f64::INFINITY, f64::min));
        if let (Ok(a), Ok(b)) = (run(lo), run(hi)) {
            prop_assert!(a <= b + 1e-9, "gap {lo} -> {a}, gap {hi} -> {b}");
        }
    }

    #[test]
    fn event_matches_masked_maximum(v_s in 0.0f64..35.0, v_lc in 0.0f64..35.0, gap in 0.0f64..30.0, thr in 0.0f64..5.0, stop in 0.0f64..2.0) {
        let cfg = deterministic_cfg();
        let spec = RareEventSpec { gap_threshold: thr, stopped_speed: stop };
        if let Ok(t) = rollout(&SubjectState::new(v_s).unwrap(), &CutInAction::new(v_lc, gap).unwrap(), &cfg, 0) {
            let eta_max = (t.crossing_index..t.len())
                .filter(|&k| t.subject[k].vel > stop)
                .map(|k| -t.gap_series[k])
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(is_rare_event(&t, &spec), eta_max >= -thr);
        }
    }

    #[test]
    fn model_cdf_monotone(alpha in prop::array::uniform3(0.0f64..=1.0), lp in 0.1f64..50.0, lm in -50.0f64..-0.1) {
        let cfg = FitConfig { grid: GridSpec { nv: 16, ng: 16, ..FitConfig::default().grid }, ..FitConfig::default() };
        let model = BandModel::new(&cfg, SpeedMarginal::uniform(15.0, 25.0, 3).unwrap()).unwrap();
        let m = model.marginals(&MixedPolicyParams::new([lp; 3], [lm; 3], alpha).unwrap()).unwrap();
        for metric in Metric::ALL {
            prop_assert_eq!(m.cdf(metric, -1e-9), 0.0);
            prop_assert!((m.cdf(metric, 1e12) - 1.0).abs() < 1e-12);
            let mut prev = 0.0;
            for i in 0..300 {
                let c = m.cdf(metric, i as f64 * 0.25);
                prop_assert!(c >= prev - 1e-15 && c <= 1.0);
                prev = c;
            }
        }
    }

    #[test]
    fn canonical_floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let text = to_canonical_json(&serde_json::json!({ "x": x })).unwrap();
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back["x"].as_f64().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn observation_csv_round_trip(rows in prop::collection::vec((0.0f64..40.0, 0.0f64..45.0, 0.0f64..60.0), 0..50)) {
        let set = ObservationSet::new(rows.iter().map(|&(v, l, g)| Observation::from_action(v, &CutInAction::new(l, g).unwrap())).collect());
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        prop_assert_eq!(ObservationSet::read_csv(&buf[..]).unwrap(), set);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn nominal_proposal_weights_are_one(alpha in prop::array::uniform3(0.0f64..=1.0), seed in any::<u64>()) {
        let mut scene = Scene::default();
        scene.grid = GridSpec { nv: 16, ng: 16, ..GridSpec::default() };
        let space = InputSpace::new(&scene).unwrap();
        let p = GridProposal::nominal(&space, &MixedPolicyParams::new([3.0; 3], [-3.0; 3], alpha).unwrap()).unwrap();
        for r in draw_samples(&p, &p, &scene, 50, seed).unwrap() {
            prop_assert_eq!(r.weight, 1.0);
        }
    }
}

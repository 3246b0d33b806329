use cmavae_core::cmavae::{Architecture, CmavaeModel, ModelConfig};
use cmavae_core::dataset::VarKind;
use cmavae_core::effects::{error_report, estimate_acde, estimate_acme, estimate_effects, AbsErrors, EffectEstimate};
use cmavae_core::dgp::TrueEffects;
use cmavae_core::rng::{normal, seeded};
use cmavae_core::stats::sample_std;
use ndarray::Array2;
use proptest::prelude::*;

fn model(y: VarKind, seed: u64) -> CmavaeModel {
    let cfg = ModelConfig {
        x_kinds: vec![VarKind::Continuous, VarKind::Continuous],
        mediator_kind: VarKind::Continuous,
        outcome_kind: y,
        arch: Architecture {
            z_dim: 2,
            hidden_layers: 1,
            layer_size: 6,
            ..Architecture::default()
        },
    };
    let mut m = CmavaeModel::new(cfg, &mut seeded(seed)).unwrap();
    let mut r = seeded(seed + 1);
    for v in m.params_mut() {
        *v += 0.3 * normal(&mut r);
    }
    m
}

fn xs(n: usize, seed: u64) -> Array2<f64> {
    let mut r = seeded(seed);
    Array2::from_shape_fn((n, 2), |_| normal(&mut r))
}

#[test]
fn doubling_draws_shrinks_spread_by_root_two() {
    let m = model(VarKind::Continuous, 3);
    let x = xs(5, 4);
    let spread = |draws: usize| {
        let est: Vec<f64> = (0..400)
            .map(|s| estimate_effects(&m, x.view(), draws, &mut seeded(1000 + s)).unwrap().ate)
            .collect();
        sample_std(&est)
    };
    let ratio = spread(10) / spread(20);
    assert!((1.2..=1.7).contains(&ratio), "std ratio {ratio}");
}

#[test]
fn joint_estimate_agrees_with_separate_estimators() {
    let m = model(VarKind::Continuous, 5);
    let x = xs(50, 6);
    let joint = estimate_effects(&m, x.view(), 400, &mut seeded(1)).unwrap();
    let acme = estimate_acme(&m, x.view(), 1.0, 400, &mut seeded(2)).unwrap();
    let acde = estimate_acde(&m, x.view(), 0.0, 400, &mut seeded(3)).unwrap();
    // independent draws, so agreement within Monte Carlo error
    let tol = |se: f64| 4.0 * se * 2f64.sqrt() + 1e-9;
    assert!((joint.acme_treated - acme).abs() < tol(joint.acme_mc_se));
    assert!((joint.acde_control - acde).abs() < tol(joint.acde_mc_se));
}

#[test]
fn error_report_from_estimates() {
    let truth = TrueEffects::new(0.5, 1.0);
    let est = |d: f64, z: f64| EffectEstimate {
        acme_treated: d,
        acde_control: z,
        ate: d + z,
        samples: 1,
        n_eval: 1,
        acme_mc_se: 0.0,
        acde_mc_se: 0.0,
    };
    let rep = error_report(&[est(0.6, 1.0), est(0.5, 0.7)], &truth).unwrap();
    assert_eq!(rep.reps, 2);
    assert!((rep.mean.acme - 0.05).abs() < 1e-12);
    assert!((rep.mean.acde - 0.15).abs() < 1e-12);
    assert!((rep.mean.ate - 0.2).abs() < 1e-12);
    // sample std of {0.1, 0.3}
    assert!((rep.std.ate - 0.02f64.sqrt()).abs() < 1e-12);
    assert_eq!(AbsErrors::of(&est(0.5, 1.0), &truth), AbsErrors::default());
    assert!(error_report(&[], &truth).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn total_is_sum_of_parts(seed in any::<u64>(), n in 1usize..30, draws in 1usize..20, binary in any::<bool>()) {
        let kind = if binary { VarKind::Binary } else { VarKind::Continuous };
        let m = model(kind, seed % 1000);
        let e = estimate_effects(&m, xs(n, seed).view(), draws, &mut seeded(seed)).unwrap();
        prop_assert!((e.ate - (e.acme_treated + e.acde_control)).abs() <= 1e-12);
        prop_assert_eq!(e.n_eval, n);
        prop_assert_eq!(e.samples, draws);
    }

    #[test]
    fn binary_effects_are_bounded(seed in any::<u64>(), n in 1usize..30) {
        let m = model(VarKind::Binary, seed % 1000);
        let e = estimate_effects(&m, xs(n, seed).view(), 8, &mut seeded(seed)).unwrap();
        for v in [e.acme_treated, e.acde_control, e.ate] {
            prop_assert!((-1.0..=1.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn estimates_are_deterministic(seed in any::<u64>()) {
        let m = model(VarKind::Continuous, seed % 1000);
        let x = xs(7, seed);
        let a = estimate_effects(&m, x.view(), 5, &mut seeded(seed)).unwrap();
        let b = estimate_effects(&m, x.view(), 5, &mut seeded(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}

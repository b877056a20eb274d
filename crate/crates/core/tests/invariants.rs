use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segar_core::env::{observe_state, Env, ObservationSpec};
use segar_core::factors::builtin::CONTROLLED_FLAG;
use segar_core::factors::flatten_state;
use segar_core::init::{builtin, sample_task, Distribution};
use segar_core::metrics::{ks_one_sample, ks_two_sample, optimal_transport, wasserstein2};
use segar_core::Error;

fn any_builtin() -> impl Strategy<Value = &'static str> {
    prop::sample::select(builtin::NAMES.to_vec())
}

fn points(max_n: usize, d: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_n).prop_flat_map(move |n| prop::collection::vec(-5.0f64..5.0, n * d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn resampling_is_bit_identical(name in any_builtin(), seed in any::<u64>()) {
        let t = builtin::template(name).unwrap();
        let a = sample_task(&t, seed).unwrap();
        let b = sample_task(&t, seed).unwrap();
        prop_assert_eq!(a.vector.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                        b.vector.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.state, b.state);
    }

    #[test]
    fn every_factor_has_one_prior(name in any_builtin()) {
        let t = builtin::template(name).unwrap();
        for slot in &t.slots {
            for &f in slot.etype.basis() {
                let p = slot.prior(f);
                prop_assert!(p.is_some(), "{}: factor {} has no prior", slot.name, f.0);
            }
        }
    }

    #[test]
    fn sampled_values_lie_in_their_priors(name in any_builtin(), seed in any::<u64>()) {
        let t = builtin::template(name).unwrap();
        let inst = sample_task(&t, seed).unwrap();
        for (e, &si) in inst.state.entities.iter().zip(&inst.slots) {
            let slot = &t.slots[si];
            for (&f, v) in e.etype().basis().iter().zip(e.values()) {
                let prior = slot.prior(f).unwrap();
                for (c, dist) in prior.components.iter().enumerate() {
                    let x = v.component(c);
                    match dist {
                        Distribution::Uniform { lo, hi } => prop_assert!(*lo <= x && x <= *hi),
                        Distribution::Gaussian { truncate: Some((lo, hi)), .. } => prop_assert!(*lo <= x && x <= *hi),
                        Distribution::Constant { value } => prop_assert_eq!(x, *value),
                        Distribution::Discrete { values, .. } => prop_assert!(values.contains(&x)),
                        _ => {}
                    }
                }
            }
        }
    }

    #[test]
    fn episodes_respect_their_contract(name in any_builtin(), seed in any::<u64>(), forces in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..40)) {
        let t = Arc::new(builtin::template(name).unwrap());
        let mut env = Env::new(Arc::clone(&t)).unwrap();
        env.reset(seed).unwrap();
        let state = env.state().unwrap();
        prop_assert_eq!(state.entities.iter().filter(|e| e.flag(CONTROLLED_FLAG)).count(), 1);
        let ids: Vec<u64> = state.entities.iter().map(|e| e.id.0).collect();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let mut k = 0;
        while !env.is_done() {
            let (x, y) = forces[k % forces.len()];
            env.step([x, y]).unwrap();
            k += 1;
            let now: Vec<u64> = env.state().unwrap().entities.iter().map(|e| e.id.0).collect();
            prop_assert_eq!(&now, &ids);
        }
        prop_assert!(env.steps() <= t.max_steps);
        prop_assert!(matches!(env.step([0.0, 0.0]), Err(Error::EpisodeDone)));
    }

    #[test]
    fn full_observation_is_the_flat_state(name in any_builtin(), seed in any::<u64>()) {
        let t = builtin::template(name).unwrap();
        let inst = sample_task(&t, seed).unwrap();
        let spec = ObservationSpec::all(&t.registry);
        let (flat, _) = flatten_state(&inst.state, &t.registry);
        prop_assert_eq!(observe_state(&inst.state, &spec), flat);
    }

    #[test]
    fn coupling_marginals_and_cost(a in points(7, 3), b in points(7, 3)) {
        let plan = optimal_transport(&a, &b, 3).unwrap();
        let (n, m) = (plan.n, plan.m);
        for i in 0..n {
            let s: f64 = (0..m).map(|j| plan.at(i, j)).sum();
            prop_assert!((s - 1.0 / n as f64).abs() <= 1e-9);
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| plan.at(i, j)).sum();
            prop_assert!((s - 1.0 / m as f64).abs() <= 1e-9);
        }
        let mut cost = 0.0;
        for i in 0..n {
            for j in 0..m {
                let d2: f64 = (0..3).map(|k| (a[i * 3 + k] - b[j * 3 + k]).powi(2)).sum();
                cost += plan.at(i, j) * d2;
            }
        }
        prop_assert!((cost - plan.cost).abs() <= 1e-9 * (1.0 + cost));
    }

    #[test]
    fn w2_is_a_pseudometric(a in points(6, 2), b in points(6, 2)) {
        let ab = wasserstein2(&a, &b, 2).unwrap();
        let ba = wasserstein2(&b, &a, 2).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!(wasserstein2(&a, &a, 2).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn ks_statistics_are_bounded(a in prop::collection::vec(-3.0f64..3.0, 1..50), b in prop::collection::vec(-3.0f64..3.0, 1..50)) {
        let d = ks_one_sample(&a, &Distribution::gaussian(0.0, 1.0)).unwrap().unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(d >= 0.5 / a.len() as f64 - 1e-12);
        let ab = ks_two_sample(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, ks_two_sample(&b, &a).unwrap());
    }

    #[test]
    fn gaussian_truncation_is_respected(mean in -1.0f64..1.0, sd in 0.05f64..2.0, seed in any::<u64>()) {
        let d = Distribution::truncated_gaussian(mean, sd, 0.0, f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..64 {
            prop_assert!(d.sample(&mut rng) >= 0.0);
        }
    }
}

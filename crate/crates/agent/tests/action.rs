use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmec_agent::action::{binarize_and_repair, random_policy, random_raw, ActionLayout, RawActionOutput, SlotView};
use vrmec_agent::train::action_layout;
use vrmec_core::environment::{AblationFlags, EnvConfig, Environment, HybridAction};
use vrmec_core::oracle::enumerate_feasible;

fn env(config: u8, ml: usize, me: usize, seed: u64) -> Environment {
    let mut env = Environment::new(EnvConfig {
        local_cache_tiles: ml,
        mec_cache_tiles: me,
        flags: AblationFlags::config(config).unwrap(),
        ..EnvConfig::default()
    })
    .unwrap();
    env.reset(seed);
    env
}

fn as_raw(a: &HybridAction, layout: ActionLayout) -> RawActionOutput {
    let mut v: Vec<f64> = a.bits().map(|b| if b { 1.0 } else { 0.0 }).collect();
    v.extend([0.5; 5]);
    RawActionOutput::new(layout, v)
}

#[test]
fn random_policy_always_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut trials = 0;
    for config in 1..=4 {
        let mut e = env(config, 3, 8, config as u64);
        let layout = action_layout(e.config()).unwrap();
        for slot in 0..25_000 {
            if slot % 100 == 0 {
                e.reset(rng.random());
            }
            let a = random_policy(&SlotView::of(&e).unwrap(), layout, &mut rng);
            e.validate(&a).unwrap();
            if config >= 3 {
                assert!(a.offload.iter().all(|&o| o == a.offload[0]));
            }
            if config % 2 == 0 {
                assert!(!a.has_replacement());
            }
            e.step(&a).unwrap();
            trials += 1;
        }
    }
    assert_eq!(trials, 100_000);
}

#[test]
fn repair_is_identity_on_feasible_patterns() {
    for config in 1..=4 {
        for seed in 0..5 {
            let e = env(config, 2, 4, seed);
            let layout = action_layout(e.config()).unwrap();
            let view = SlotView::of(&e).unwrap();
            let feasible = enumerate_feasible(&e.snapshot().unwrap()).unwrap();
            assert!(!feasible.is_empty());
            for a in feasible {
                assert_eq!(binarize_and_repair(&as_raw(&a, layout), &view), a);
            }
        }
    }
}

#[test]
fn mask_dominates_scores() {
    // All-ones scores with zero thresholds offload every tile, so nothing
    // is computed locally and no local store is admissible.
    for seed in 0..50 {
        let e = env(1, 3, 8, seed);
        let layout = action_layout(e.config()).unwrap();
        let mut v = vec![1.0; layout.score_len()];
        v.extend([0.0; 5]);
        let a = binarize_and_repair(&RawActionOutput::new(layout, v), &SlotView::of(&e).unwrap());
        assert!(a.store_local.iter().all(|&b| !b));
        assert!(a.delete_local.iter().all(|&b| !b));
        e.validate(&a).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn repaired_output_passes_validation(
        config in 1u8..=4,
        ml in 1usize..=4,
        extra in 0usize..=8,
        seed in any::<u64>(),
        values in prop::collection::vec(0.0f64..=1.0, 64),
    ) {
        let me = ml + extra;
        let e = env(config, ml, me, seed);
        let layout = action_layout(e.config()).unwrap();
        let raw = RawActionOutput::new(layout, values[..layout.len()].to_vec());
        let a = binarize_and_repair(&raw, &SlotView::of(&e).unwrap());
        prop_assert!(e.validate(&a).is_ok());
        // Decoding is a fixed point once the result is re-encoded.
        prop_assert_eq!(binarize_and_repair(&as_raw(&a, layout), &SlotView::of(&e).unwrap()), a);
    }

    #[test]
    fn random_raw_stays_in_unit_interval(seed in any::<u64>()) {
        let layout = ActionLayout { fov_tiles: 4, local_capacity: 3, mec_capacity: 8 };
        let raw = random_raw(layout, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(raw.values.len(), 28);
        prop_assert!(raw.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

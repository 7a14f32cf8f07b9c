use std::collections::HashSet;

use proptest::prelude::*;
use vrmec_core::environment::{evaluate_snapshot, AblationFlags, ChannelConfig, ComputeConfig, CostWeights, EnvConfig, Environment, HybridAction};
use vrmec_core::oracle::{best_myopic, enumerate_feasible, recompute_cost, SlotSnapshot};
use vrmec_core::tiling::GridConfig;

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Closed-form count of feasible actions.
fn expected_count(s: &SlotSnapshot) -> usize {
    let fov = s.fov().unwrap();
    let z = fov.len();
    let (ml, me) = (s.local_cache.len(), s.mec_cache.len());
    let patterns: Vec<u32> = if s.flags.segmentation_enabled {
        (0..1 << z).collect()
    } else {
        vec![0, (1 << z) - 1]
    };
    let mut total = 0;
    for p in patterns {
        let off = |i: usize| p >> i & 1 == 1;
        let r = (0..z).filter(|&i| !off(i) && !s.local_cache.contains(&fov[i])).count();
        let q = (0..z).filter(|&i| off(i) && !s.mec_cache.contains(&fov[i])).count();
        let (lc, mc) = if s.flags.caching_replacement_enabled {
            (
                (0..=r).map(|j| binom(r, j) * binom(ml, j)).sum::<usize>(),
                (0..=q).map(|j| binom(q, j) * binom(me, j)).sum::<usize>(),
            )
        } else {
            (1, 1)
        };
        total += lc * mc;
    }
    total
}

fn arb_snapshot() -> impl Strategy<Value = SlotSnapshot> {
    (1usize..=4, 1usize..=9, 1u8..=4, 0.0f64..=1.0, 1e-7f64..1e-3, any::<u64>()).prop_map(
        |(ml, me_extra, flags, omega, gain, seed)| {
            let me = (ml + me_extra - 1).min(10);
            let grid = GridConfig::default();
            let mut env = Environment::new(EnvConfig {
                local_cache_tiles: ml,
                mec_cache_tiles: me.max(ml),
                flags: AblationFlags::config(flags).unwrap(),
                weights: CostWeights {
                    omega,
                    ..CostWeights::default()
                },
                grid,
                ..EnvConfig::default()
            })
            .unwrap();
            env.reset(seed);
            let mut s = env.snapshot().unwrap();
            s.channel_gain = gain;
            s
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_closed_form(s in arb_snapshot()) {
        let all = enumerate_feasible(&s).unwrap();
        prop_assert_eq!(all.len(), expected_count(&s));
        let unique: HashSet<String> = all.iter().map(|a| a.bit_string()).collect();
        prop_assert_eq!(unique.len(), all.len());
        for a in &all {
            prop_assert!(evaluate_snapshot(&s, a).is_ok());
        }
    }

    #[test]
    fn myopic_is_a_lower_bound(s in arb_snapshot()) {
        let (best, cost) = best_myopic(&s).unwrap();
        prop_assert_eq!(recompute_cost(&s, &best).unwrap().cost, cost);
        for a in enumerate_feasible(&s).unwrap() {
            let c = recompute_cost(&s, &a).unwrap().cost;
            prop_assert!(cost <= c);
            if c == cost {
                prop_assert!(best.bit_string() <= a.bit_string());
            }
        }
    }

    #[test]
    fn weight_endpoints(s in arb_snapshot()) {
        let a = enumerate_feasible(&s).unwrap().pop().unwrap();
        let mut s1 = s.clone();
        s1.weights.omega = 1.0;
        let o = recompute_cost(&s1, &a).unwrap();
        prop_assert_eq!(o.cost, o.t_total);
        s1.weights.omega = 0.0;
        let o = recompute_cost(&s1, &a).unwrap();
        prop_assert_eq!(o.cost, o.e_total);
    }
}

fn table_snapshot(local: Vec<usize>, mec: Vec<usize>, omega: f64) -> SlotSnapshot {
    SlotSnapshot {
        grid: GridConfig::default(),
        channel: ChannelConfig {
            bandwidth_hz: 1e8,
            ..ChannelConfig::default()
        },
        compute: ComputeConfig {
            kappa_mec: 1e-28,
            kappa_local: 1e-28,
            ..ComputeConfig::default()
        },
        weights: CostWeights {
            omega,
            ..CostWeights::default()
        },
        flags: AblationFlags::default(),
        output_ratio: 3.0,
        local_cache: local,
        mec_cache: mec,
        request: 1,
        channel_gain: 1e-4,
    }
}

#[test]
fn latency_only_offloads_everything_when_mec_is_faster() {
    // FoV of viewpoint 1 is {1, 2, 8, 9}; both caches hold it.
    let s = table_snapshot(vec![1, 2, 8], vec![1, 2, 8, 9, 20, 21, 22, 23], 1.0);
    let all_mec = HybridAction::idle(vec![true; 4], 3, 8);
    let all_local = HybridAction::idle(vec![false; 4], 3, 8);
    let mec_cost = recompute_cost(&s, &all_mec).unwrap().cost;
    let local_cost = recompute_cost(&s, &all_local).unwrap().cost;
    assert!(mec_cost < local_cost);
    let (best, cost) = best_myopic(&s).unwrap();
    assert!(cost <= mec_cost);
    // With segmentation the two paths run in parallel, so a split can win.
    assert!(best.offload_count() >= 2);
    let mut whole = s.clone();
    whole.flags = AblationFlags::config(3).unwrap();
    let (best, cost) = best_myopic(&whole).unwrap();
    assert_eq!(best.offload, vec![true; 4]);
    assert_eq!(cost, mec_cost);
}

#[test]
fn full_local_hit_latency_only() {
    let s = table_snapshot(vec![1, 2, 8], vec![1, 2, 8, 9, 20, 21, 22, 23], 1.0);
    let mut s = s;
    s.grid = GridConfig {
        fov_cols: 1,
        ..GridConfig::default()
    };
    // Viewpoint 1 now covers tiles {1, 8}, both cached locally.
    let a = HybridAction::idle(vec![false; 2], 3, 8);
    let out = recompute_cost(&s, &a).unwrap();
    assert_eq!(out.cost, 15.0 * 1.5e8 * 2.0 / 3e9);
}

#[test]
fn oracle_refuses_large_instances() {
    let mut s = table_snapshot(vec![1, 2, 3, 4, 5], vec![1, 2, 3, 4, 5, 6, 7, 8], 0.5);
    assert!(enumerate_feasible(&s).is_err());
    s.local_cache.truncate(4);
    assert!(enumerate_feasible(&s).is_ok());
    s.grid = GridConfig {
        fov_rows: 3,
        fov_cols: 3,
        ..GridConfig::default()
    };
    assert!(enumerate_feasible(&s).is_err());
}

mod common;

use common::{has_bottlenecks, oracle_maxmin, OracleActivity};
use gridflow::engine::{
    consumption, solve_maxmin, ActivityKind, ActivitySpec, Demand, Engine, Resource, ResourceId, ResourceKind,
};
use proptest::prelude::*;

fn resources(caps: &[f64]) -> Vec<Resource> {
    caps.iter()
        .enumerate()
        .map(|(i, &c)| Resource { id: ResourceId(i), name: format!("r{i}"), capacity: c, kind: ResourceKind::Link })
        .collect()
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<OracleActivity>)> {
    (1usize..=6).prop_flat_map(|n_res| {
        let caps = prop::collection::vec(1.0f64..1000.0, n_res);
        let act = (
            prop::collection::btree_map(0..n_res, 0.1f64..5.0, 1..=n_res),
            0.2f64..3.0,
            prop::option::weighted(0.3, 0.5f64..500.0),
        )
            .prop_map(|(fp, scaling, bound)| OracleActivity { footprint: fp.into_iter().collect(), scaling, bound });
        (caps, prop::collection::vec(act, 1..=10))
    })
}

fn solve(caps: &[f64], acts: &[OracleActivity]) -> Vec<f64> {
    let fps: Vec<Vec<(ResourceId, f64)>> =
        acts.iter().map(|a| a.footprint.iter().map(|&(r, w)| (ResourceId(r), w)).collect()).collect();
    let demands: Vec<Demand<'_>> = acts
        .iter()
        .zip(&fps)
        .map(|(a, fp)| Demand { footprint: fp, scaling_factor: a.scaling, bound: a.bound })
        .collect();
    solve_maxmin(&resources(caps), &demands).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matches_progressive_filling_oracle((caps, acts) in instance()) {
        let got = solve(&caps, &acts);
        let want = oracle_maxmin(&caps, &acts);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * w.abs().max(1e-9), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn allocation_is_feasible_and_bottlenecked((caps, acts) in instance()) {
        let rates = solve(&caps, &acts);
        let fps: Vec<Vec<(ResourceId, f64)>> =
            acts.iter().map(|a| a.footprint.iter().map(|&(r, w)| (ResourceId(r), w)).collect()).collect();
        let demands: Vec<Demand<'_>> = acts
            .iter()
            .zip(&fps)
            .map(|(a, fp)| Demand { footprint: fp, scaling_factor: a.scaling, bound: a.bound })
            .collect();
        for (used, cap) in consumption(caps.len(), &demands, &rates).iter().zip(&caps) {
            prop_assert!(*used <= cap * (1.0 + 1e-9));
        }
        prop_assert!(has_bottlenecks(&caps, &acts, &rates, 1e-9));
    }
}

#[test]
fn shared_link_splits_evenly_in_the_engine() {
    let mut e: Engine<u32> = Engine::new();
    let link = e.add_resource("link", ResourceKind::Link, 100.0).unwrap();
    let a = e.spawn(ActivitySpec::new(ActivityKind::Transfer, vec![(link, 1.0)], 1000.0), 0).unwrap();
    e.refresh_rates().unwrap();
    assert_eq!(e.rate(a), Some(100.0));
    let b = e.spawn(ActivitySpec::new(ActivityKind::Transfer, vec![(link, 1.0)], 1000.0), 1).unwrap();
    e.refresh_rates().unwrap();
    assert_eq!(e.rate(a), Some(50.0));
    assert_eq!(e.rate(b), Some(50.0));
}

#[test]
fn engine_completes_in_order_of_remaining_work() {
    let mut e: Engine<u32> = Engine::new();
    let link = e.add_resource("link", ResourceKind::Link, 10.0).unwrap();
    e.spawn(ActivitySpec::new(ActivityKind::Transfer, vec![(link, 1.0)], 10.0), 0).unwrap();
    e.spawn(ActivitySpec::new(ActivityKind::Transfer, vec![(link, 1.0)], 30.0), 1).unwrap();
    let mut done = Vec::new();
    let end = e
        .run_until_idle(|_, step| {
            done.extend(step.completed.iter().map(|c| (c.owner, c.finished_at)));
        })
        .unwrap();
    // Both run at 5 until the first finishes at t=2, then the second gets 10.
    assert_eq!(done, vec![(0, 2.0), (1, 4.0)]);
    assert_eq!(end, 4.0);
}

mod common;

use std::collections::BTreeSet;

use common::*;
use fleetroute::colgen::Fleet;
use fleetroute::lshaped::{run_lshaped, LShapedOptions, LShapedStatus};

#[test]
fn matches_two_stage_enumeration_and_cuts_are_valid() {
    for seed in 0..12 {
        let (fx, scenarios) = lshaped_case(seed);
        let inst = fx.instance();
        let opts = LShapedOptions::default();
        let res = run_lshaped(&inst, &scenarios, &opts).unwrap();
        assert_eq!(res.status, LShapedStatus::Converged, "seed {seed}");
        let (best, table) = two_stage_oracle(&inst.graph, &fx.config, &scenarios, inst.unserved_penalty);
        assert!(
            (res.objective() - best).abs() <= opts.eps * best.abs() + 1e-6,
            "seed {seed}: {} vs {best}",
            res.objective()
        );
        assert!(res.state.lower_bound <= best + 1e-6);
        for r in &res.duality_residuals {
            assert!(*r <= 1e-6);
        }

        // Every retained cut must hold at every first-stage point when eta
        // is the true routing value.
        let mut depots = inst.depots.clone();
        depots.sort();
        for cut in &res.state.cuts {
            assert!(cut.exact);
            for (open, y, values) in &table {
                let open_set: BTreeSet<usize> = depots.iter().zip(open).filter(|(_, &o)| o).map(|(&k, _)| k).collect();
                let fleet: Fleet = depots.iter().copied().zip(y.iter().copied()).collect();
                let bound = cut.bound(&open_set, &fleet);
                assert!(
                    bound <= values[cut.scenario] + 1e-6,
                    "seed {seed}: cut {cut:?} gives {bound} > {} at {open:?} {y:?}",
                    values[cut.scenario]
                );
            }
        }

        // Bounds are monotone and sandwich the optimum.
        for w in res.trace.windows(2) {
            assert!(w[1].lower_bound >= w[0].lower_bound - 1e-9);
            assert!(w[1].upper_bound <= w[0].upper_bound + 1e-9);
        }
        for rec in &res.trace {
            assert!(rec.lower_bound <= best + 1e-6);
            assert!(rec.upper_bound >= best - 1e-6);
            if !rec.route_generation {
                assert_eq!(rec.columns_added, 0);
            }
        }
    }
}

#[test]
fn all_off_reaches_the_same_objective() {
    for seed in 20..24 {
        let (fx, scenarios) = lshaped_case(seed);
        let inst = fx.instance();
        let on = run_lshaped(&inst, &scenarios, &LShapedOptions::default()).unwrap();
        let off = run_lshaped(&inst, &scenarios, &LShapedOptions::all_off()).unwrap();
        assert_eq!(off.status, LShapedStatus::Converged);
        assert!((on.objective() - off.objective()).abs() <= 1e-4 * on.objective().abs() + 1e-6);
    }
}

#[test]
fn resume_from_checkpoint_keeps_bounds() {
    let (fx, scenarios) = lshaped_case(3);
    let inst = fx.instance();
    let first = run_lshaped(
        &inst,
        &scenarios,
        &LShapedOptions {
            max_iterations: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let cp = first.checkpoint();
    let resumed = fleetroute::lshaped::run_lshaped_from(&inst, &scenarios, &Default::default(), Some(cp)).unwrap();
    assert_eq!(resumed.status, LShapedStatus::Converged);
    assert!(resumed.state.upper_bound <= first.state.upper_bound + 1e-9);
    assert!(resumed.state.lower_bound >= first.state.lower_bound - 1e-9);
    let full = run_lshaped(&inst, &scenarios, &Default::default()).unwrap();
    assert!((full.objective() - resumed.objective()).abs() <= 1e-4 * full.objective() + 1e-6);
}

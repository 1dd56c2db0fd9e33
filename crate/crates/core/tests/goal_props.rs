//! Cross-mode guarantees on random instances: floors hold, reported
//! objectives match the allocation they describe, unconstrained single
//! objectives dominate every staged run, revenue-floor sweeps trade the
//! objectives monotonically, and everything is invariant to volume scaling
//! and sweep parallelism.


use adalloc::goal::{
    Knob, KnobConfig, RunResult, SingleObjective, SolveMode, StageOrder, SweepSpec, run,
    run_single, run_three_step, run_two_step_a, run_two_step_b, run_two_step_c, sweep,
};
use adalloc::graph::{AllocationGraph, validate_allocation};
use adalloc::feasibility::make_feasible;
use adalloc::metrics::{Axis, MetricsRow, Objectives, pareto_indices};
use testkit::random_graph;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const TOL: f64 = 1e-9;

/// Every pipeline at one representative knob setting, with the value its
/// final stage reports expressed through the recomputed objectives.
fn battery(raw: &AllocationGraph) -> Vec<(&'static str, RunResult, Option<f64>)> {
    let expect = |r: &RunResult, f: &dyn Fn(&Objectives) -> f64| Some(f(&r.objectives));
    let mut out = Vec::new();

    let r = run(raw, &KnobConfig::new(SolveMode::Baseline), TOL).unwrap();
    out.push(("baseline", r, None));

    let r = run_single(raw, SingleObjective::Ngd, None, None, TOL).unwrap();
    let e = expect(&r, &|o| o.spot_revenue);
    out.push(("single-ngd", r, e));

    let r = run_single(raw, SingleObjective::Click, None, None, TOL).unwrap();
    let e = expect(&r, &|o| o.click_value);
    out.push(("single-click", r, e));

    let r = run_single(raw, SingleObjective::NgdPlusClick, None, Some(1.0), TOL).unwrap();
    let e = expect(&r, &|o| o.click_value + o.spot_revenue);
    out.push(("single-ngd-plus-click", r, e));

    let r = run_single(raw, SingleObjective::Gd, None, None, TOL).unwrap();
    let e = expect(&r, &|o| o.representativeness);
    out.push(("single-gd", r, e));

    let r = run_single(raw, SingleObjective::Weighted, Some(1.0), Some(1.0), TOL).unwrap();
    let e = expect(&r, &|o| o.representativeness + o.click_value + o.spot_revenue);
    out.push(("single-weighted", r, e));

    let r = run_two_step_a(raw, 1.0, 0.9, TOL).unwrap();
    let e = expect(&r, &|o| o.representativeness);
    out.push(("two-step-a", r, e));

    let r = run_two_step_b(raw, 1.0, 0.9, TOL).unwrap();
    let e = expect(&r, &|o| o.representativeness + o.spot_revenue);
    out.push(("two-step-b", r, e));

    let r = run_two_step_c(raw, 1.0, 1.0, 0.9, TOL).unwrap();
    let e = expect(&r, &|o| o.representativeness + o.click_value);
    out.push(("two-step-c", r, e));

    let r = run_three_step(raw, 0.9, 0.9, StageOrder::RevenueFirst, TOL).unwrap();
    let e = expect(&r, &|o| o.representativeness);
    out.push(("three-step", r, e));

    let r = run_three_step(raw, 0.9, 0.9, StageOrder::ClickFirst, TOL).unwrap();
    let e = expect(&r, &|o| o.representativeness);
    out.push(("three-step-click-first", r, e));

    out
}

#[test]
fn floors_hold_and_objectives_reconcile_across_modes() {
    let mut rng = StdRng::seed_from_u64(0x60a1_0001);
    for case in 0..12 {
        let raw = random_graph(&mut rng, 6, 4, false);
        let trimmed = make_feasible(&raw).unwrap().graph;
        for (label, result, expected) in battery(&raw) {
            let check = validate_allocation(&trimmed, &result.allocation).unwrap();
            assert!(check.ok(1e-6), "case {case} {label}: invalid allocation {check:?}");

            if let (Some(reported), Some(expected)) = (result.solver_objective, expected) {
                assert!(
                    (reported - expected).abs() <= 1e-6 * (1.0 + expected.abs()),
                    "case {case} {label}: reports {reported}, allocation gives {expected}"
                );
            }

            for floor in &result.trace.floors {
                let slack = 1e-6 * (1.0 + floor.floor.abs());
                assert!(
                    floor.attained >= floor.floor - slack,
                    "case {case} {label}: floor {} broken, {} < {}",
                    floor.label,
                    floor.attained,
                    floor.floor
                );
                assert!(floor.multiplier >= 0.0, "case {case} {label}: negative multiplier");
                if floor.multiplier > 1e-9 {
                    assert!(
                        floor.attained <= floor.floor + slack,
                        "case {case} {label}: priced floor {} is slack, {} > {}",
                        floor.label,
                        floor.attained,
                        floor.floor
                    );
                }
                assert_eq!(floor.binding, floor.multiplier > 1e-9, "case {case} {label}");
            }
        }
    }
}

#[test]
fn single_objective_runs_dominate_every_other_mode() {
    let mut rng = StdRng::seed_from_u64(0x60a1_0002);
    for case in 0..12 {
        let raw = random_graph(&mut rng, 6, 4, false);
        let results = battery(&raw);
        let best = |pick: &dyn Fn(&Objectives) -> f64, label: &str| {
            let top = results
                .iter()
                .find(|(l, _, _)| *l == label)
                .map(|(_, r, _)| pick(&r.objectives))
                .unwrap();
            for (other, r, _) in &results {
                let v = pick(&r.objectives);
                assert!(
                    top >= v - 1e-6 * (1.0 + v.abs()),
                    "case {case}: {label} attains {top} but {other} reaches {v}"
                );
            }
        };
        best(&|o| o.spot_revenue, "single-ngd");
        best(&|o| o.click_value, "single-click");
        best(&|o| o.click_value + o.spot_revenue, "single-ngd-plus-click");
        best(&|o| o.representativeness, "single-gd");
        best(
            &|o| o.representativeness + o.click_value + o.spot_revenue,
            "single-weighted",
        );
    }
}

#[test]
fn revenue_floor_sweep_trades_monotonically() {
    let mut rng = StdRng::seed_from_u64(0x60a1_0003);
    let mut base = KnobConfig::new(SolveMode::TwoStepC);
    base.gamma = Some(1.0);
    base.xi = Some(0.0);
    let etas: Vec<f64> = (0..9).map(|k| 0.5 + 0.0625 * k as f64).collect();
    for case in 0..6 {
        let raw = random_graph(&mut rng, 6, 4, false);
        let spec = SweepSpec { base: base.clone(), axes: vec![(Knob::Eta, etas.clone())] };
        let points = sweep(&raw, &spec, TOL, false).unwrap();
        for pair in points.windows(2) {
            let (lo, hi) = (&pair[0].result.objectives, &pair[1].result.objectives);
            assert!(
                hi.representativeness <= lo.representativeness + 1e-7 * (1.0 + lo.representativeness.abs()),
                "case {case}: tighter floor improved representativeness"
            );
            assert!(
                hi.spot_revenue >= lo.spot_revenue - 1e-7 * (1.0 + lo.spot_revenue.abs()),
                "case {case}: tighter floor lost revenue"
            );
        }
    }
}

#[test]
fn parallel_sweeps_match_serial_bit_for_bit() {
    let mut rng = StdRng::seed_from_u64(0x60a1_0004);
    for _ in 0..4 {
        let raw = random_graph(&mut rng, 6, 4, false);

        let mut base = KnobConfig::new(SolveMode::TwoStepC);
        base.gamma = Some(1.0);
        base.xi = Some(1.0);
        let spec = SweepSpec {
            base,
            axes: vec![(Knob::Eta, vec![0.6, 0.75, 0.9, 0.99])],
        };
        let serial = sweep(&raw, &spec, TOL, false).unwrap();
        let parallel = sweep(&raw, &spec, TOL, true).unwrap();
        assert_eq!(serial.len(), parallel.len());
        for (s, p) in serial.iter().zip(&parallel) {
            assert_eq!(s.knobs, p.knobs);
            assert_eq!(s.result.allocation.y, p.result.allocation.y);
            assert_eq!(s.result.allocation.z, p.result.allocation.z);
            assert_eq!(s.result.solver_objective, p.result.solver_objective);
        }

        let spec = SweepSpec {
            base: KnobConfig::new(SolveMode::ThreeStep),
            axes: vec![
                (Knob::Eta, vec![0.7, 0.85, 0.95]),
                (Knob::Omega, vec![0.6, 0.8, 0.95]),
            ],
        };
        let serial = sweep(&raw, &spec, TOL, false).unwrap();
        let parallel = sweep(&raw, &spec, TOL, true).unwrap();
        assert_eq!(serial.len(), parallel.len());
        for (s, p) in serial.iter().zip(&parallel) {
            assert_eq!(s.knobs, p.knobs);
            assert_eq!(s.result.allocation.y, p.result.allocation.y);
            assert_eq!(s.result.allocation.z, p.result.allocation.z);
        }
    }
}

#[test]
fn volume_scaling_scales_the_allocation() {
    let mut rng = StdRng::seed_from_u64(0x60a1_0005);
    let raw = random_graph(&mut rng, 6, 4, false);
    let mut scaled = raw.clone();
    let supplies: Vec<_> = scaled
        .supplies
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.weight *= 10.0;
            s
        })
        .collect();
    let campaigns: Vec<_> = scaled
        .campaigns
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.demand *= 10.0;
            for tier in &mut c.penalty.tiers {
                if let Some(cap) = &mut tier.capacity {
                    *cap *= 10.0;
                }
            }
            c
        })
        .collect();
    let edges: Vec<_> = scaled
        .edges
        .iter()
        .map(|e| adalloc::graph::EdgeSpec {
            supply: raw.supplies[e.supply].id.clone(),
            campaign: raw.campaigns[e.campaign].id.clone(),
            click_prob: e.click_prob,
            conv_prob: e.conv_prob,
        })
        .collect();
    scaled = AllocationGraph::build(supplies, campaigns, Some(edges)).unwrap();

    for (label, small, _) in battery(&raw) {
        let big = battery(&scaled)
            .into_iter()
            .find(|(l, _, _)| *l == label)
            .map(|(_, r, _)| r)
            .unwrap();
        for (e, (&x, &y)) in small.allocation.y.iter().zip(&big.allocation.y).enumerate() {
            assert!(
                (y - 10.0 * x).abs() <= 1e-6 * (1.0 + 10.0 * x.abs()),
                "{label}: edge {e} scales to {y}, expected {}",
                10.0 * x
            );
        }
        for (i, (&x, &y)) in small.allocation.z.iter().zip(&big.allocation.z).enumerate() {
            assert!(
                (y - 10.0 * x).abs() <= 1e-6 * (1.0 + 10.0 * x.abs()),
                "{label}: spot {i} scales to {y}, expected {}",
                10.0 * x
            );
        }
    }
}

#[test]
fn pareto_filter_keeps_exactly_the_undominated_rows() {
    let mut rng = StdRng::seed_from_u64(0x60a1_0006);
    let axes = [Axis::Click, Axis::Gd];
    for _ in 0..20 {
        let rows: Vec<MetricsRow> = (0..40)
            .map(|_| {
                let o = Objectives {
                    representativeness: -rng.gen_range(0.0..4.0f64),
                    click_value: rng.gen_range(0.0..4.0f64).round(),
                    clicks_only: 0.0,
                    spot_revenue: rng.gen_range(0.0..4.0f64).round(),
                };
                MetricsRow::raw("", &o)
            })
            .collect();
        let kept = pareto_indices(&rows, &axes);
        let dominates = |a: &MetricsRow, b: &MetricsRow| {
            axes.iter().all(|ax| ax.value(a) >= ax.value(b))
                && axes.iter().any(|ax| ax.value(a) > ax.value(b))
        };
        for i in 0..rows.len() {
            let undominated = !rows.iter().any(|other| dominates(other, &rows[i]));
            assert_eq!(
                kept.contains(&i),
                undominated,
                "row {i}: kept {} but undominated {undominated}",
                kept.contains(&i)
            );
        }
    }
}

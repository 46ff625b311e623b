use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssdim_core::config::ClassTargets;
use ssdim_core::demand_model::ModelKind;
use ssdim_core::ingest::{ItemClass, ItemRecord};
use ssdim_core::optimizer::{
    build_problem, solve_bb, solve_exhaustive, summarize, Level, OptimizeError, Problem, ProblemItem, FEASIBILITY_TOL,
};
use ssdim_core::report::GridRow;

/// Random instance with up to `max_items` items × `max_levels` levels per class.
fn instance(seed: u64, max_items: usize, max_levels: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut targets = ClassTargets { a: None, b: None, c: None };
    for class in ItemClass::ALL {
        let n = rng.gen_range(1..=max_items);
        let integer_costs = rng.gen_bool(0.4);
        let uniform = rng.gen_bool(0.5);
        let raw_w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let wsum: f64 = raw_w.iter().sum();
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (i, raw) in raw_w.iter().enumerate() {
            let k = rng.gen_range(1..=max_levels);
            let w = if uniform { 1.0 / n as f64 } else { raw / wsum };
            let mut service = rng.gen_range(0.3..0.8);
            let mut levels = Vec::new();
            for j in 0..k {
                let cost = if integer_costs {
                    f64::from(rng.gen_range(0..6u32))
                } else {
                    (rng.gen_range(0.0..500.0f64) * 100.0).round() / 100.0 * 1.37
                };
                levels.push(Level { target_sl: j as f64 / 10.0, cost, service });
                service = (service + rng.gen_range(0.0..0.15)).min(1.0);
            }
            let smin = levels.iter().map(|l| l.service).fold(f64::INFINITY, f64::min);
            let smax = levels.iter().map(|l| l.service).fold(0.0, f64::max);
            lo += w * smin;
            hi += w * smax;
            items.push(ProblemItem { item_id: format!("{class}{i:02}"), class, weight: w, levels });
        }
        let t = match rng.gen_range(0..10) {
            0 => None,
            1 => Some(hi + 0.01),
            2 => Some(hi),
            _ => Some(rng.gen_range(lo..=hi)),
        };
        match class {
            ItemClass::A => targets.a = t,
            ItemClass::B => targets.b = t,
            ItemClass::C => targets.c = t,
        }
    }
    Problem::new(items, targets).unwrap()
}

#[test]
fn bb_matches_exhaustive_on_seeded_instances() {
    let mut solved = 0;
    let mut infeasible = 0;
    for seed in 0..300 {
        let p = instance(seed, 8, 4);
        match (solve_bb(&p), solve_exhaustive(&p)) {
            (Ok(bb), Ok(ex)) => {
                assert_eq!(bb.total_cost, ex.total_cost, "seed {seed}");
                assert_eq!(bb, ex, "seed {seed}");
                assert!(bb.is_feasible(&p));
                solved += 1;
            }
            (Err(OptimizeError::Infeasible(a)), Err(OptimizeError::Infeasible(b))) => {
                assert_eq!(a, b);
                infeasible += 1;
            }
            (a, b) => panic!("seed {seed}: {a:?} vs {b:?}"),
        }
    }
    assert!(solved >= 200, "{solved} feasible instances");
    assert!(infeasible > 0);
}

#[test]
fn scaling_costs_keeps_assignment() {
    for seed in 0..60 {
        let p = instance(seed, 6, 4);
        let Ok(plan) = solve_bb(&p) else { continue };
        let mut doubled = p.clone();
        for it in &mut doubled.items {
            for l in &mut it.levels {
                l.cost *= 2.0;
            }
        }
        let plan2 = solve_bb(&doubled).unwrap();
        assert_eq!(plan2.total_cost, 2.0 * plan.total_cost);
        let levels = |pl: &ssdim_core::Plan| pl.choices.iter().map(|c| c.level).collect::<Vec<_>>();
        assert_eq!(levels(&plan), levels(&plan2), "seed {seed}");
    }
}

#[test]
fn raising_a_target_never_lowers_cost() {
    for seed in 0..60 {
        let p = instance(seed, 6, 4);
        let Ok(base) = solve_bb(&p) else { continue };
        let Some(t) = p.targets.a else { continue };
        let mut harder = p.clone();
        harder.targets.a = Some(t + 0.02);
        let a_cost = |pl: &ssdim_core::Plan| pl.classes.iter().find(|c| c.class == ItemClass::A).unwrap().cost;
        match solve_bb(&harder) {
            Ok(h) => assert!(a_cost(&h) >= a_cost(&base)),
            Err(OptimizeError::Infeasible(v)) => assert!(v.iter().any(|c| c.class == ItemClass::A)),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn classes_solve_independently() {
    for seed in 0..60 {
        let p = instance(seed, 5, 3);
        let Ok(joint) = solve_bb(&p) else { continue };
        for class in p.classes() {
            let sub = Problem::new(
                p.items.iter().filter(|i| i.class == class).cloned().collect(),
                p.targets,
            )
            .unwrap();
            let part = solve_bb(&sub).unwrap();
            for c in &part.choices {
                assert_eq!(joint.level_of(&c.item_id), Some(c.level));
            }
        }
    }
}

#[test]
fn returned_plans_meet_constraints() {
    for seed in 1000..1100 {
        let p = instance(seed, 8, 4);
        if let Ok(plan) = solve_bb(&p) {
            for c in &plan.classes {
                if let Some(t) = c.target {
                    assert!(c.weighted_service >= t - FEASIBILITY_TOL);
                }
            }
            assert_eq!(plan.choices.len(), p.items.len());
        }
    }
}

#[test]
fn larger_instances_solve_quickly() {
    let start = std::time::Instant::now();
    for seed in 0..20 {
        let p = instance(5000 + seed, 20, 7);
        let _ = solve_bb(&p);
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

fn rows_for(items: usize, levels: &[f64]) -> (Vec<GridRow>, Vec<ItemRecord>) {
    let mut rows = Vec::new();
    let mut recs = Vec::new();
    for i in 0..items {
        let id = format!("item_{}", i + 1);
        recs.push(ItemRecord {
            item_id: id.clone(),
            class: if i < items / 2 { ItemClass::A } else { ItemClass::B },
            lead_time_weeks: 1,
            review_period_weeks: 1,
            unit_cost: 1.0,
            weight: None,
        });
        for model in ModelKind::ALL {
            for &a in levels {
                rows.push(GridRow {
                    item_id: id.clone(),
                    model,
                    target_sl: a,
                    realized_cycle_sl: (a + 0.04).min(1.0),
                    realized_period_sl: (a + 0.05).min(1.0),
                    safety_stock_units: 100.0 * a,
                    safety_stock_value: 100.0 * a * (i + 1) as f64,
                });
            }
        }
    }
    (rows, recs)
}

#[test]
fn build_problem_cardinality_and_errors() {
    let grid = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];
    let (rows, recs) = rows_for(20, &grid);
    let refs: Vec<&ItemRecord> = recs.iter().collect();
    let p = build_problem(&rows, &refs, ClassTargets::default(), ModelKind::Kde).unwrap();
    assert_eq!(p.cell_count(), 140);
    assert!(p.items.iter().all(|i| (i.weight - 0.1).abs() < 1e-15));

    let mut missing = rows.clone();
    missing.retain(|r| !(r.item_id == "item_3" && r.model == ModelKind::Kde && r.target_sl == 0.9));
    assert!(matches!(
        build_problem(&missing, &refs, ClassTargets::default(), ModelKind::Kde),
        Err(OptimizeError::MissingCell { .. })
    ));

    let mut negative = rows.clone();
    negative[0].safety_stock_value = -1.0;
    assert!(matches!(
        build_problem(&negative, &refs, ClassTargets::default(), ModelKind::Kde),
        Err(OptimizeError::Corrupt(_))
    ));
}

#[test]
fn summary_of_single_item_equals_its_cell() {
    let (rows, recs) = rows_for(1, &[0.5, 0.9]);
    let refs: Vec<&ItemRecord> = recs.iter().collect();
    let targets = ClassTargets { a: Some(0.9), b: Some(0.9), c: None };
    let kde = solve_bb(&build_problem(&rows, &refs, targets, ModelKind::Kde).unwrap()).unwrap();
    let normal = solve_bb(&build_problem(&rows, &refs, targets, ModelKind::Normal).unwrap()).unwrap();
    let s = summarize(&[(ModelKind::Kde, &kde), (ModelKind::Normal, &normal)], &rows).unwrap();
    assert_eq!(s.len(), 2);
    let cell = rows
        .iter()
        .find(|r| r.model == ModelKind::Kde && r.target_sl == 0.9)
        .unwrap();
    assert_eq!(s[0].mean_cycle_sl, cell.realized_cycle_sl);
    assert_eq!(s[0].mean_period_sl, cell.realized_period_sl);
    assert_eq!(s[0].total_value, cell.safety_stock_value);
}

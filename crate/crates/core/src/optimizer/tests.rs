use super::*;
use crate::loss::WorkloadStats;
use crate::power::slot_profit;

fn dc(delay: f64) -> DataCenterSpec {
    DataCenterSpec {
        idle_power: 0.1,
        peak_power: 0.2,
        pue: 1.2,
        max_servers: 1000,
        network_delay: delay,
        green_unit_cost: 0.0,
    }
}

fn class(th: f64) -> ServiceClass {
    ServiceClass { deadline: 1.0, income: 1e-5, penalty: 2e-5, per_server_capacity: 10.0, drop_threshold: th }
}

fn env(green: Vec<f64>, price: Vec<f64>, means: &[f64]) -> SlotEnvironment {
    SlotEnvironment {
        green_energy: green,
        brown_price: price,
        slot_length: 3600.0,
        class_stats: means.iter().map(|&m| WorkloadStats::iid(m, 0.3).unwrap()).collect(),
    }
}

#[test]
fn green_cap_examples() {
    let d = dc(0.0);
    assert_eq!(green_server_cap(&d, 2.4, 3600.0), 10);
    assert_eq!(green_server_cap(&d, 0.6, 900.0), 10);
    assert_eq!(green_server_cap(&d, 0.0, 3600.0), 0);
    assert_eq!(green_server_cap(&d, 0.23, 3600.0), 0);
}

#[test]
fn problem_sizes() {
    let opts = SolveOptions::default();
    let e = env(vec![100.0], vec![0.1], &[100.0]);
    let p = build_problem(&e, &[dc(0.0)], &[class(1.0)], &opts).unwrap();
    assert_eq!(p.n_vars(), 4);
    assert_eq!(p.equalities.len(), 1);
    assert_eq!(p.n_sla(), 2);
    assert!(p.inequalities.iter().any(|r| matches!(r.tag, ConstraintTag::GreenCap { dc: 0 })));

    let e3 = env(vec![100.0; 3], vec![0.1, 0.2, 0.3], &[100.0, 50.0]);
    let p3 = build_problem(&e3, &[dc(0.0), dc(0.01), dc(0.02)], &[class(1.0), class(1.0)], &opts).unwrap();
    assert_eq!(p3.n_vars(), 24);
    assert_eq!(p3.equalities.len(), 2);
}

#[test]
fn model_profit_matches_profit_module() {
    let opts = SolveOptions::default();
    let e = env(vec![50.0, 0.0], vec![0.1, 0.2], &[100.0, 60.0]);
    let dcs = [dc(0.0), dc(0.05)];
    let cls = [class(1.0), ServiceClass { deadline: 2.0, ..class(1.0) }];
    let p = build_problem(&e, &dcs, &cls, &opts).unwrap();
    let mut a = Allocation::zeros(2, 2);
    a.set_queue(0, 0, QueueKind::Green, 60.0, 75.0);
    a.set_queue(0, 0, QueueKind::Brown, 10.0, 14.0);
    a.set_queue(1, 0, QueueKind::Brown, 30.0, 40.0);
    a.set_queue(0, 1, QueueKind::Green, 20.0, 26.0);
    a.set_queue(0, 1, QueueKind::Brown, 5.0, 7.0);
    a.set_queue(1, 1, QueueKind::Brown, 35.0, 44.0);
    let direct = slot_profit(&a, &e, &dcs, &cls, &opts.search).unwrap().total();
    let model = p.model_profit(&a);
    assert!((direct - model).abs() <= 1e-12 * direct.abs().max(1.0), "{direct} vs {model}");
}

fn three_by_two() -> (ProblemInstance, Allocation) {
    let opts = SolveOptions::default();
    let e = env(vec![100.0, 80.0, 60.0], vec![0.1, 0.2, 0.3], &[300.0, 150.0]);
    let dcs = [dc(0.0), dc(0.05), dc(0.1)];
    let cls = [class(1.0), ServiceClass { deadline: 3.0, per_server_capacity: 5.0, ..class(1.0) }];
    let p = build_problem(&e, &dcs, &cls, &opts).unwrap();
    let mut a = Allocation::zeros(3, 2);
    let mut v = 40.0;
    for i in 0..3 {
        for j in 0..2 {
            for k in QueueKind::ALL {
                a.set_queue(i, j, k, v, v * 1.15 + 1.0);
                v += 3.0;
            }
        }
    }
    (p, a)
}

#[test]
fn gradient_matches_finite_differences() {
    let (p, a) = three_by_two();
    let g = objective_gradient(&a, &p).unwrap();
    assert_eq!(g.values.len(), 24);
    for k in 0..24 {
        let h = 1e-6 * a.as_slice()[k];
        let mut plus = a.clone();
        plus.as_mut_slice()[k] += h;
        let mut minus = a.clone();
        minus.as_mut_slice()[k] -= h;
        let fd = (p.model_profit(&plus) - p.model_profit(&minus)) / (2.0 * h);
        let tol = 1e-4 * fd.abs().max(g.values[k].abs()).max(1e-8);
        assert!((fd - g.values[k]).abs() <= tol, "var {k}: fd {fd} vs {}", g.values[k]);
    }
}

#[test]
fn base_load_gradient_is_exact() {
    let opts = SolveOptions::default();
    let e = env(vec![0.0], vec![0.1], &[100.0]);
    let p = build_problem(&e, &[dc(0.0)], &[class(1.0)], &opts).unwrap();
    let mut a = Allocation::zeros(1, 1);
    // loss underflows to exactly zero far above the arrival rate
    a.set_queue(0, 0, QueueKind::Brown, 100.0, 1000.0);
    let g = objective_gradient(&a, &p).unwrap();
    let c = 0.1 * 3600.0 / 3600.0;
    let base = 0.1 + 0.2 * 0.2;
    assert_eq!(g.values[3], -c * base / 10.0);
}

#[test]
fn profit_obeys_euler_identity() {
    let (p, a) = three_by_two();
    let g = objective_gradient(&a, &p).unwrap();
    let dot: f64 = g.values.iter().zip(a.as_slice()).map(|(g, x)| g * x).sum();
    let f = p.model_profit(&a);
    assert!((dot - f).abs() <= 1e-9 * f.abs(), "{dot} vs {f}");
}

#[test]
fn abundant_green_serves_everything_green() {
    let opts = SolveOptions::default();
    let e = env(vec![1000.0], vec![0.1], &[100.0]);
    let p = build_problem(&e, &[dc(0.0)], &[class(1.0)], &opts).unwrap();
    let r = solve(&p, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
    let (lg, mg) = r.allocation.queue(0, 0, QueueKind::Green);
    let (lb, _) = r.allocation.queue(0, 0, QueueKind::Brown);
    assert!((lg - 100.0).abs() < 1e-6 && lb == 0.0, "{lg} {lb}");
    assert!(mg > lg);
    assert!((r.objective - r.model_objective).abs() <= 1e-9 * r.objective.abs());
}

#[test]
fn cheaper_grid_takes_the_brown_load() {
    let opts = SolveOptions::default();
    let e = env(vec![0.0, 0.0], vec![10.0, 20.0], &[100.0]);
    let cls = [ServiceClass { income: 1e-2, penalty: 2e-2, ..class(1.0) }];
    let p = build_problem(&e, &[dc(0.0), dc(0.0)], &cls, &opts).unwrap();
    let r = solve(&p, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
    let (l0, _) = r.allocation.queue(0, 0, QueueKind::Brown);
    let (l1, _) = r.allocation.queue(1, 0, QueueKind::Brown);
    // the expensive DC must keep μ ≥ 1 switched on anyway, so a sliver of
    // load rides on that already-paid capacity
    assert!(l0 >= 0.99 * 100.0, "{l0} {l1}");
    assert!((l0 + l1 - 100.0).abs() <= 1e-9);
    let (_, m1) = r.allocation.queue(1, 0, QueueKind::Brown);
    assert!(m1 < 1.01, "{m1}");
}

#[test]
fn zero_demand_takes_degenerate_path() {
    let opts = SolveOptions::default();
    let e = env(vec![100.0], vec![0.1], &[100.0, 0.0]);
    let p = build_problem(&e, &[dc(0.0)], &[class(1.0), class(1.0)], &opts).unwrap();
    let r = solve(&p, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
    assert!(r.notes.iter().any(|n| n.contains("degenerate demand")));
    assert_eq!(r.allocation.class_total(1), 0.0);
    // empty queues idle at the minimum service rate
    assert!((r.allocation.queue(0, 1, QueueKind::Brown).1 - 1.0).abs() < 1e-3);
}

#[test]
fn zero_threshold_is_infeasible_by_construction() {
    let opts = SolveOptions::default();
    let e = env(vec![0.0], vec![0.1], &[100.0]);
    let p = build_problem(&e, &[dc(0.0)], &[class(0.0)], &opts).unwrap();
    assert!(p.construction_error.is_some());
    let r = solve(&p, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
}

#[test]
fn tight_capacity_is_reported_infeasible() {
    let opts = SolveOptions::default();
    let e = env(vec![0.0], vec![0.1], &[100.0]);
    // 10 servers give μ ≤ 100, the SLA needs headroom above λ = 100
    let d = DataCenterSpec { max_servers: 10, ..dc(0.0) };
    let p = build_problem(&e, &[d], &[class(0.5)], &opts).unwrap();
    let r = solve(&p, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible, "{r:?}");
    assert!(r.kkt.worst_constraint.is_some());
}

#[test]
fn unprofitable_pair_is_non_certified() {
    let opts = SolveOptions::default();
    let e = env(vec![0.0, 0.0], vec![0.1, 1e4], &[100.0]);
    let p = build_problem(&e, &[dc(0.0), dc(0.0)], &[class(1.0)], &opts).unwrap();
    let r = solve(&p, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::NonCertified, "{r:?}");
    assert_eq!(r.failing_pairs, vec![(1, 0)]);
}

#[test]
fn solve_is_deterministic() {
    let opts = SolveOptions { seed: 42, ..SolveOptions::default() };
    let e = env(vec![30.0, 10.0], vec![0.1, 0.05], &[200.0, 80.0]);
    let cls = [class(1.0), ServiceClass { deadline: 2.0, ..class(0.5) }];
    let p = build_problem(&e, &[dc(0.0), dc(0.1)], &cls, &opts).unwrap();
    let a = solve(&p, &opts).unwrap();
    let b = solve(&p, &opts).unwrap();
    assert_eq!(a, b);
    assert!(matches!(a.status, SolveStatus::Optimal), "{a:?}");
    assert!(a.kkt.max_violation <= 1e-6);
}

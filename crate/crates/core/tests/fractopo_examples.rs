use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toe_core::fractopo::{
    combine, fractional_pipeline, joint_lp_oracle, max_throughput_lp, min_nonshortest_qp, throughput_on,
};
use toe_core::solver::{Goal, Problem, Sense};
use toe_core::topology::DEGREE_SLACK;
use toe_core::{build_path_set, FractionalTopology, PathSet, PhysicalTopology, PodSpec, TrafficMatrix};

fn fabric(n: usize, r: u32, b: f64) -> PhysicalTopology {
    PhysicalTopology::uniform(vec![PodSpec::new(r, r, b); n], 1, None).unwrap()
}

fn random_tm(rng: &mut ChaCha8Rng, n: usize) -> TrafficMatrix {
    TrafficMatrix::from_fn(n, |_, _| if rng.random_bool(0.7) { rng.random_range(0.1..5.0) } else { 0.0 }).unwrap()
}

/// Checks per-pair conservation at `mu` and link capacity on `d`.
fn assert_routes(tm: &TrafficMatrix, mu: f64, flows: &[f64], d: &FractionalTopology, phys: &PhysicalTopology, paths: &PathSet) {
    let n = phys.n();
    let mut load = vec![0.0; n * n];
    for (i, j) in paths.pairs() {
        let s: f64 = flows[paths.pair_range(i, j)].iter().sum();
        assert!((s - mu * tm.get(i, j)).abs() <= 1e-6 * (1.0 + mu * tm.get(i, j)), "pair ({i},{j})");
        for p in paths.pair_range(i, j) {
            assert!(flows[p] >= 0.0);
            for (a, b) in paths.paths()[p].links() {
                load[a * n + b] += flows[p];
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            if a != b {
                assert!(load[a * n + b] <= d.get(a, b) * phys.link_gbps(a, b) * (1.0 + 1e-6) + 1e-9);
            }
        }
    }
    d.check_degrees(phys).unwrap();
}

#[test]
fn two_pods_direct_only() {
    let phys = fabric(2, 4, 1.0);
    let ps = build_path_set(2).unwrap();
    let tm = TrafficMatrix::new(2, vec![0.0, 2.0, 2.0, 0.0]).unwrap();
    let s = max_throughput_lp(&tm, &phys, &ps).unwrap();
    assert!((s.mu - 2.0).abs() < 1e-7);
    assert!((s.topology.get(0, 1) - 4.0).abs() < 1e-6);
}

#[test]
fn single_demand_is_capped_by_source_egress() {
    // Every path out of pod 0 spends one of its 10 egress links per unit, so
    // the direct and relay paths share the same budget.
    let phys = fabric(3, 10, 1.0);
    let ps = build_path_set(3).unwrap();
    let tm = TrafficMatrix::from_fn(3, |i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 }).unwrap();
    let s = max_throughput_lp(&tm, &phys, &ps).unwrap();
    assert!((s.mu - 10.0).abs() < 1e-6);
    // Same value from a plain LP over explicit link counts.
    let mut p = Problem::new(Goal::Maximize);
    let direct = p.var(1.0);
    let relay = p.var(1.0);
    p.constraint([(direct, 1.0), (relay, 1.0)], Sense::Le, 10.0);
    p.constraint([(direct, 1.0), (relay, 1.0)], Sense::Le, 10.0);
    p.constraint([(relay, 1.0)], Sense::Le, 10.0);
    assert!((p.solve().unwrap().objective - s.mu).abs() < 1e-6);
}

#[test]
fn uniform_all_to_all_matches_closed_form() {
    let (n, r, b) = (6, 10, 2.5);
    let phys = fabric(n, r, b);
    let ps = build_path_set(n).unwrap();
    let tm = TrafficMatrix::from_fn(n, |_, _| 3.0).unwrap();
    let s = max_throughput_lp(&tm, &phys, &ps).unwrap();
    let expect = r as f64 * b / (3.0 * (n - 1) as f64);
    assert!((s.mu - expect).abs() < 1e-6 * expect);
}

#[test]
fn scale_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phys = fabric(5, 8, 1.0);
    let ps = build_path_set(5).unwrap();
    for _ in 0..5 {
        let tm = random_tm(&mut rng, 5);
        let c = rng.random_range(0.2..7.0);
        let a = max_throughput_lp(&tm, &phys, &ps).unwrap().mu;
        let b = max_throughput_lp(&tm.scaled(c), &phys, &ps).unwrap().mu;
        assert!((a / c - b).abs() < 1e-6 * b);
    }
}

#[test]
fn lp_and_qp_solutions_are_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phys = fabric(6, 12, 1.0);
    let ps = build_path_set(6).unwrap();
    for _ in 0..4 {
        let tm = random_tm(&mut rng, 6);
        let lp = max_throughput_lp(&tm, &phys, &ps).unwrap();
        assert_routes(&tm, lp.mu, &lp.flows, &lp.topology, &phys, &ps);
        let qp = min_nonshortest_qp(&tm, lp.mu, &phys, &ps).unwrap();
        assert_routes(&tm, qp.mu, &qp.flows, &qp.topology, &phys, &ps);
        assert!(qp.mu >= lp.mu * (1.0 - 1e-6));
    }
}

#[test]
fn qp_zero_when_direct_suffices() {
    let phys = fabric(4, 9, 1.0);
    let ps = build_path_set(4).unwrap();
    let tm = TrafficMatrix::from_fn(4, |_, _| 1.0).unwrap();
    let qp = min_nonshortest_qp(&tm, 2.0, &phys, &ps).unwrap();
    assert!(qp.two_hop_square_sum(&ps) < 1e-8);
}

#[test]
fn qp_splits_overflow_evenly() {
    // Pod 0 has slow links, so each of pod 1's ingress links carries more
    // when the traffic arrives through a fast relay. Two units must relay.
    let pods = vec![
        PodSpec::new(3, 3, 1.0),
        PodSpec::new(2, 2, 2.0),
        PodSpec::new(2, 2, 2.0),
        PodSpec::new(2, 2, 2.0),
    ];
    let phys = PhysicalTopology::uniform(pods, 1, None).unwrap();
    let ps = build_path_set(4).unwrap();
    let tm = TrafficMatrix::from_fn(4, |i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 }).unwrap();
    let lp = max_throughput_lp(&tm, &phys, &ps).unwrap();
    assert!((lp.mu - 3.0).abs() < 1e-6);
    let qp = min_nonshortest_qp(&tm, lp.mu, &phys, &ps).unwrap();
    let r = ps.pair_range(0, 1);
    let f = &qp.flows[r];
    assert!((f[0] - 1.0).abs() < 1e-4, "{f:?}");
    assert!((f[1] - 1.0).abs() < 1e-4 && (f[2] - 1.0).abs() < 1e-4, "{f:?}");
}

#[test]
fn qp_beats_linear_penalty_in_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 8;
    let phys = fabric(n, 100, 1.0);
    let ps = build_path_set(n).unwrap();
    let tm = TrafficMatrix::from_fn(n, |_, _| if rng.random_bool(0.3) { rng.random_range(1.0..20.0) } else { 0.0 }).unwrap();
    let lp = max_throughput_lp(&tm, &phys, &ps).unwrap();
    let qp = min_nonshortest_qp(&tm, lp.mu, &phys, &ps).unwrap();
    // Linear variant: min total relayed traffic at the same throughput.
    let bref = 1.0;
    let mut p = Problem::new(Goal::Minimize);
    let mut vars = Vec::new();
    for (idx, path) in ps.paths().iter().enumerate() {
        vars.push(p.var(if path.is_direct() { 0.0 } else { 1.0 / bref }));
        let _ = idx;
    }
    for (i, j) in ps.pairs() {
        p.constraint(ps.pair_range(i, j).map(|q| (vars[q], 1.0)), Sense::Eq, lp.mu * tm.get(i, j) * (1.0 - 1e-9));
    }
    for pod in 0..n {
        let mut eg = Vec::new();
        let mut ig = Vec::new();
        for (q, path) in ps.paths().iter().enumerate() {
            for (a, b) in path.links() {
                if a == pod {
                    eg.push((vars[q], 1.0));
                }
                if b == pod {
                    ig.push((vars[q], 1.0));
                }
            }
        }
        p.constraint(eg, Sense::Le, 100.0);
        p.constraint(ig, Sense::Le, 100.0);
    }
    let lin = p.solve().unwrap();
    let lin_sq: f64 = ps.paths().iter().zip(&lin.values).filter(|(q, _)| !q.is_direct()).map(|(_, v)| v * v).sum();
    assert!(qp.two_hop_square_sum(&ps) <= lin_sq * (1.0 + 1e-5) + 1e-6);
}

/// Independent LP: max alpha with explicit d variables.
fn combine_oracle(inputs: &[FractionalTopology], phys: &PhysicalTopology) -> f64 {
    let n = phys.n();
    let mut p = Problem::new(Goal::Maximize);
    let alpha = p.var_bounded(1.0, Some(0.0), Some(1.0));
    let d: Vec<_> = (0..n * n).map(|_| p.var(0.0)).collect();
    for dt in inputs {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    p.constraint([(d[i * n + j], 1.0), (alpha, -dt.get(i, j))], Sense::Ge, 0.0);
                }
            }
        }
    }
    for i in 0..n {
        p.constraint((0..n).filter(|&j| j != i).map(|j| (d[i * n + j], 1.0)), Sense::Le, phys.egress(i) as f64);
        p.constraint((0..n).filter(|&j| j != i).map(|j| (d[j * n + i], 1.0)), Sense::Le, phys.ingress(i) as f64);
    }
    p.solve().unwrap().objective
}

#[test]
fn combine_identical_inputs() {
    let phys = fabric(3, 4, 1.0);
    let d = FractionalTopology::new(3, vec![0.0, 1.5, 2.0, 2.0, 0.0, 1.5, 1.5, 2.0, 0.0], &phys).unwrap();
    let c = combine(&[d.clone(), d.clone(), d.clone()], &phys).unwrap();
    assert!((c.alpha - 1.0).abs() < 1e-7);
    for i in 0..9 {
        assert!(c.d_star.as_slice()[i] >= d.as_slice()[i] - 1e-6);
    }
}

#[test]
fn combine_disjoint_halves() {
    let phys = fabric(3, 4, 1.0);
    let d1 = FractionalTopology::new(3, vec![0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &phys).unwrap();
    let d2 = FractionalTopology::new(3, vec![0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &phys).unwrap();
    let c = combine(&[d1.clone(), d2.clone()], &phys).unwrap();
    assert!((c.alpha - 1.0).abs() < 1e-7);
    assert!((combine_oracle(&[d1, d2], &phys) - c.alpha).abs() < 1e-6);
}

#[test]
fn combine_shared_row_halves() {
    let phys = fabric(3, 4, 1.0);
    let d1 = FractionalTopology::new(3, vec![0.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &phys).unwrap();
    let d2 = FractionalTopology::new(3, vec![0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &phys).unwrap();
    let c = combine(&[d1.clone(), d2.clone()], &phys).unwrap();
    assert!((c.alpha - 0.5).abs() < 1e-7);
    assert!((combine_oracle(&[d1, d2], &phys) - 0.5).abs() < 1e-6);
}

#[test]
fn combine_matches_oracle_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let phys = fabric(5, 6, 1.0);
    let ps = build_path_set(5).unwrap();
    for _ in 0..5 {
        let tops: Vec<_> = (0..3).map(|_| max_throughput_lp(&random_tm(&mut rng, 5), &phys, &ps).unwrap().topology).collect();
        let c = combine(&tops, &phys).unwrap();
        assert!((combine_oracle(&tops, &phys) - c.alpha).abs() < 1e-6);
        c.d_star.check_degrees(&phys).unwrap();
        for t in &tops {
            for (a, b) in c.d_star.as_slice().iter().zip(t.as_slice()) {
                assert!(*a >= c.alpha * b - 1e-7);
            }
        }
    }
}

#[test]
fn joint_oracle_agrees_for_one_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let phys = fabric(5, 7, 1.0);
    let ps = build_path_set(5).unwrap();
    let tm = random_tm(&mut rng, 5);
    let lp = max_throughput_lp(&tm, &phys, &ps).unwrap().mu;
    let (joint, d) = joint_lp_oracle(std::slice::from_ref(&tm), &phys, &ps).unwrap();
    assert!((joint - lp).abs() < 1e-8 * lp.max(1.0) * 10.0, "{joint} vs {lp}");
    d.check_degrees(&phys).unwrap();
    let (rep, _) = joint_lp_oracle(&[tm.clone(), tm.clone(), tm], &phys, &ps).unwrap();
    assert!((rep - joint).abs() < 1e-7 * joint);
}

#[test]
fn joint_oracle_bounds_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let phys = fabric(6, 10, 1.0);
    let ps = build_path_set(6).unwrap();
    for _ in 0..3 {
        let tms: Vec<_> = (0..3).map(|_| random_tm(&mut rng, 6)).collect();
        let pipe = fractional_pipeline(&tms, &phys, &ps).unwrap();
        let caps = pipe.combined.d_star.capacities(&phys);
        let achieved = tms.iter().map(|t| throughput_on(t, &caps, &ps).unwrap()).fold(f64::INFINITY, f64::min);
        let (joint, _) = joint_lp_oracle(&tms, &phys, &ps).unwrap();
        assert!(joint >= achieved * (1.0 - 1e-6));
        for (t, s) in tms.iter().zip(&pipe.per_tm) {
            assert!(throughput_on(t, &caps, &ps).unwrap() >= pipe.combined.alpha * s.mu - 1e-6);
        }
    }
}

#[test]
fn degree_slack_respected() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let phys = fabric(7, 5, 1.0);
    let ps = build_path_set(7).unwrap();
    let tm = random_tm(&mut rng, 7);
    let s = max_throughput_lp(&tm, &phys, &ps).unwrap();
    for i in 0..7 {
        let row: f64 = (0..7).map(|j| s.topology.get(i, j)).sum();
        assert!(row <= 5.0 + DEGREE_SLACK);
    }
}

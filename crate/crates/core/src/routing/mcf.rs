//! Multi-commodity flow routing: min-MLU for one matrix and shared weights
//! for several, each followed by a pass that minimizes 2-hop traffic among
//! MLU-optimal solutions.

use super::{check_caps, evaluate, fallback_pair, path_capacity, RoutingOutcome, RoutingWeights};
use crate::fractopo::throughput_on;
use crate::paths::PathSet;
use crate::solver::{Goal, Problem, Sense, Var};
use crate::traffic::{normalize, TrafficMatrix};
use crate::{Error, Result};

/// Relative slack on the optimal MLU allowed in the second pass.
const LEX_SLACK: f64 = 1e-9;

fn unroutable_pairs(demanded: impl Iterator<Item = (usize, usize)>, caps: &[f64], paths: &PathSet) -> Vec<(usize, usize)> {
    let n = paths.n();
    demanded
        .filter(|&(i, j)| paths.pair_paths(i, j).iter().all(|p| path_capacity(caps, n, p) <= 0.0))
        .collect()
}

struct Commodity {
    vars: Vec<(usize, Var)>,
}

/// Builds `sum_p load_p(tau) <= limit * cap_l` rows for every link.
/// `load[c]` lists (commodity, volume) contributions per matrix.
#[allow(clippy::too_many_arguments)]
fn build(
    caps_hat: &[f64],
    paths: &PathSet,
    commodities_of: &[(usize, usize)],
    volumes: &[Vec<f64>],
    limit: Option<f64>,
    goal_two_hop: Option<&[f64]>,
) -> (Problem, Option<Var>, Vec<Commodity>) {
    let n = paths.n();
    let mut prob = Problem::new(Goal::Minimize);
    let theta = match limit {
        None => Some(prob.var(1.0)),
        Some(_) => None,
    };
    let mut commodities = Vec::with_capacity(commodities_of.len());
    for &(i, j) in commodities_of {
        let mut vars = Vec::new();
        for p in paths.pair_range(i, j) {
            let path = &paths.paths()[p];
            if path_capacity(caps_hat, n, path) <= 0.0 {
                continue;
            }
            let cost = match (goal_two_hop, path.is_direct()) {
                (Some(weight), false) => weight[commodities.len()],
                _ => 0.0,
            };
            vars.push((p, prob.var(cost)));
        }
        prob.constraint(vars.iter().map(|&(_, v)| (v, 1.0)), Sense::Eq, 1.0);
        commodities.push(Commodity { vars });
    }
    for vol in volumes {
        let mut rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); n * n];
        for (c, com) in commodities.iter().enumerate() {
            if vol[c] <= 0.0 {
                continue;
            }
            for &(p, v) in &com.vars {
                for (a, b) in paths.paths()[p].links() {
                    rows[a * n + b].push((v, vol[c]));
                }
            }
        }
        for (l, mut row) in rows.into_iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            match (theta, limit) {
                (Some(t), _) => {
                    row.push((t, -caps_hat[l]));
                    prob.constraint(row, Sense::Le, 0.0);
                }
                (None, Some(lim)) => prob.constraint(row, Sense::Le, lim * caps_hat[l]),
                (None, None) => unreachable!(),
            }
        }
    }
    (prob, theta, commodities)
}

/// Shared weights minimizing the worst MLU over several demand sets, then
/// the weighted 2-hop volume. `volumes[m][c]` is commodity c's demand in set m.
fn lexicographic_weights(
    caps: &[f64],
    paths: &PathSet,
    pairs: &[(usize, usize)],
    volumes: &[Vec<f64>],
) -> Result<RoutingWeights> {
    let bref = caps.iter().copied().fold(0.0, f64::max);
    let caps_hat: Vec<f64> = caps.iter().map(|c| c / bref).collect();
    let mut w = vec![0.0; paths.len()];
    if !pairs.is_empty() {
        let (prob, theta, _) = build(&caps_hat, paths, pairs, volumes, None, None);
        let first = prob.solve()?;
        let theta_star = first.value(theta.expect("free theta"));
        let limit = theta_star * (1.0 + LEX_SLACK) + 1e-12;
        let two_hop_cost: Vec<f64> = (0..pairs.len()).map(|c| volumes.iter().map(|v| v[c]).sum()).collect();
        let (prob, _, commodities) = build(&caps_hat, paths, pairs, volumes, Some(limit), Some(&two_hop_cost));
        let second = match prob.solve() {
            Ok(s) => (s, commodities),
            Err(_) => {
                let (p, _, c) = build(&caps_hat, paths, pairs, volumes, None, None);
                (p.solve()?, c)
            }
        };
        let (sol, commodities) = second;
        for com in &commodities {
            let s: f64 = com.vars.iter().map(|&(_, v)| sol.value(v).max(0.0)).sum();
            for &(p, v) in &com.vars {
                w[p] = if s > 0.0 { sol.value(v).max(0.0) / s } else { 1.0 / com.vars.len() as f64 };
            }
        }
    }
    let demanded: std::collections::HashSet<_> = pairs.iter().copied().collect();
    let mut unroutable = Vec::new();
    for (i, j) in paths.pairs() {
        if !demanded.contains(&(i, j)) && !fallback_pair(caps, paths, i, j, &mut w) {
            unroutable.push((i, j));
        }
    }
    Ok(RoutingWeights { weights: w, unroutable })
}

/// Min-MLU routing of `tm`, then min 2-hop traffic among MLU-optimal routings.
pub fn min_mlu_route(tm: &TrafficMatrix, caps: &[f64], paths: &PathSet) -> Result<(RoutingWeights, RoutingOutcome)> {
    let w = te_s(tm, caps, paths)?;
    let out = evaluate(&w, tm, caps, paths)?;
    Ok((w, out))
}

/// Weights optimized for a single predicted matrix. Pairs the prediction
/// leaves at zero get a uniform split over their usable paths.
pub fn te_s(predicted: &TrafficMatrix, caps: &[f64], paths: &PathSet) -> Result<RoutingWeights> {
    check_caps(caps, paths)?;
    if predicted.n() != paths.n() {
        return Err(Error::Dimension("prediction and path set differ in pod count".into()));
    }
    let pairs: Vec<_> = paths.pairs().filter(|&(i, j)| predicted.get(i, j) > 0.0).collect();
    let bad = unroutable_pairs(pairs.iter().copied(), caps, paths);
    if !bad.is_empty() {
        return Err(Error::Unroutable { pairs: bad });
    }
    let total = predicted.total().max(f64::MIN_POSITIVE);
    let cap_sum: f64 = caps.iter().sum::<f64>() / caps.iter().copied().fold(0.0, f64::max);
    let vol: Vec<f64> = pairs.iter().map(|&(i, j)| predicted.get(i, j) / total * cap_sum).collect();
    lexicographic_weights(caps, paths, &pairs, &[vol])
}

/// Shared weights for several predicted matrices, each first scaled by its own
/// max throughput on this topology so that all of them reach MLU 1 alone.
pub fn te_m(predicted_set: &[TrafficMatrix], caps: &[f64], paths: &PathSet) -> Result<RoutingWeights> {
    check_caps(caps, paths)?;
    if predicted_set.is_empty() {
        return Err(Error::InvalidArgument("te_m needs at least one matrix".into()));
    }
    let n = paths.n();
    if predicted_set.iter().any(|t| t.n() != n || t.is_zero()) {
        return Err(Error::InvalidTraffic("te_m inputs must be nonzero and match the fabric".into()));
    }
    // Matrices that are scalar multiples of one another give the single-matrix LP.
    let first = normalize(&predicted_set[0])?;
    let mut single = true;
    for t in &predicted_set[1..] {
        single &= normalize(t)?.as_slice().iter().zip(first.as_slice()).all(|(a, b)| (a - b).abs() <= 1e-12);
    }
    if single {
        return te_s(&predicted_set[0], caps, paths);
    }
    let pairs: Vec<_> = paths.pairs().filter(|&(i, j)| predicted_set.iter().any(|t| t.get(i, j) > 0.0)).collect();
    let bad = unroutable_pairs(pairs.iter().copied(), caps, paths);
    if !bad.is_empty() {
        return Err(Error::Unroutable { pairs: bad });
    }
    let bref = caps.iter().copied().fold(0.0, f64::max);
    let mut volumes = Vec::with_capacity(predicted_set.len());
    for tm in predicted_set {
        let mu = throughput_on(tm, caps, paths)?;
        volumes.push(pairs.iter().map(|&(i, j)| mu * tm.get(i, j) / bref).collect());
    }
    lexicographic_weights(caps, paths, &pairs, &volumes)
}

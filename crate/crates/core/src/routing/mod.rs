//! Routing over a fixed topology and the metrics reported per snapshot.
//!
//! Topologies enter as an n x n capacity matrix in Gbps, so the same engines
//! serve integer topologies, fractional ones and hand-built test cases.

mod mcf;

pub use mcf::{min_mlu_route, te_m, te_s};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::fabric::PhysicalTopology;
use crate::fractopo::{optimal_fractional, combine};
use crate::ocsmap::ldm_round;
use crate::paths::PathSet;
use crate::topology::{FractionalTopology, LogicalTopology};
use crate::traffic::TrafficMatrix;
use crate::{Error, Result};

/// Percentiles reported for link utilization.
pub const LU_PERCENTILES: [u32; 4] = [5, 50, 95, 99];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingWeights {
    /// Fraction of the pair's traffic per path, indexed like `PathSet::paths()`.
    pub weights: Vec<f64>,
    /// Pairs with no positive-capacity path; their weights are all zero.
    pub unroutable: Vec<(usize, usize)>,
}

impl RoutingWeights {
    pub fn pair_sum(&self, paths: &PathSet, i: usize, j: usize) -> f64 {
        self.weights[paths.pair_range(i, j)].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingOutcome {
    pub mlu: f64,
    pub lu_percentiles: BTreeMap<u32, f64>,
    pub bandwidth_tax: f64,
    /// Gbps per directed link, n x n. Empty for the fat-tree abstraction.
    pub per_link_flow: Vec<f64>,
}

impl RoutingOutcome {
    pub fn lu(&self, percentile: u32) -> f64 {
        self.lu_percentiles.get(&percentile).copied().unwrap_or(f64::NAN)
    }
}

pub fn path_capacity(caps: &[f64], n: usize, path: &crate::paths::Path) -> f64 {
    path.links().map(|(a, b)| caps[a * n + b]).fold(f64::INFINITY, f64::min)
}

fn check_caps(caps: &[f64], paths: &PathSet) -> Result<usize> {
    let n = paths.n();
    if caps.len() != n * n {
        return Err(Error::Dimension(format!("capacity matrix has {} entries for {n} pods", caps.len())));
    }
    if caps.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidArgument("capacities must be finite and nonnegative".into()));
    }
    Ok(n)
}

/// Linear-interpolated percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn percentiles_of(mut utils: Vec<f64>) -> BTreeMap<u32, f64> {
    utils.sort_by(f64::total_cmp);
    LU_PERCENTILES.iter().map(|&q| (q, percentile(&utils, q as f64))).collect()
}

/// Uniform split over the pair's positive-capacity paths.
pub(crate) fn fallback_pair(caps: &[f64], paths: &PathSet, i: usize, j: usize, w: &mut [f64]) -> bool {
    let n = paths.n();
    let r = paths.pair_range(i, j);
    let usable: Vec<usize> = r.clone().filter(|&p| path_capacity(caps, n, &paths.paths()[p]) > 0.0).collect();
    for p in r {
        w[p] = 0.0;
    }
    for &p in &usable {
        w[p] = 1.0 / usable.len() as f64;
    }
    !usable.is_empty()
}

/// Apply fixed weights to a matrix.
pub fn evaluate(weights: &RoutingWeights, tm: &TrafficMatrix, caps: &[f64], paths: &PathSet) -> Result<RoutingOutcome> {
    let n = check_caps(caps, paths)?;
    if tm.n() != n || weights.weights.len() != paths.len() {
        return Err(Error::Dimension("weights, traffic and capacities disagree".into()));
    }
    let mut flow = vec![0.0; n * n];
    let (mut total, mut two_hop, mut lost) = (0.0, 0.0, 0.0);
    for (i, j) in paths.pairs() {
        let t = tm.get(i, j);
        if t == 0.0 {
            continue;
        }
        total += t;
        let mut routed = 0.0;
        for p in paths.pair_range(i, j) {
            let w = weights.weights[p];
            if w == 0.0 {
                continue;
            }
            let f = w * t;
            routed += w;
            let path = &paths.paths()[p];
            if !path.is_direct() {
                two_hop += f;
            }
            for (a, b) in path.links() {
                flow[a * n + b] += f;
            }
        }
        if routed <= 0.0 {
            lost += t;
        }
    }
    let mut mlu: f64 = 0.0;
    let mut utils = Vec::new();
    for l in 0..n * n {
        if l / n == l % n {
            continue;
        }
        if caps[l] > 0.0 {
            let u = flow[l] / caps[l];
            mlu = mlu.max(u);
            utils.push(u);
        } else if flow[l] > 0.0 {
            mlu = f64::INFINITY;
        }
    }
    if lost > 0.0 {
        mlu = f64::INFINITY;
    }
    Ok(RoutingOutcome {
        mlu,
        lu_percentiles: percentiles_of(utils),
        bandwidth_tax: if total > 0.0 { two_hop / total } else { 0.0 },
        per_link_flow: flow,
    })
}

/// Traffic-agnostic split proportional to path capacity.
pub fn vlb_weights(caps: &[f64], paths: &PathSet) -> Result<RoutingWeights> {
    let n = check_caps(caps, paths)?;
    let mut w = vec![0.0; paths.len()];
    let mut unroutable = Vec::new();
    for (i, j) in paths.pairs() {
        let r = paths.pair_range(i, j);
        let total: f64 = r.clone().map(|p| path_capacity(caps, n, &paths.paths()[p])).sum();
        if total <= 0.0 {
            unroutable.push((i, j));
            continue;
        }
        for p in r {
            w[p] = path_capacity(caps, n, &paths.paths()[p]) / total;
        }
    }
    Ok(RoutingWeights { weights: w, unroutable })
}

/// Per-matrix optimal fractional topology with its own hop-minimizing routing.
pub fn ideal_toe(tm: &TrafficMatrix, phys: &PhysicalTopology, paths: &PathSet) -> Result<(FractionalTopology, RoutingOutcome)> {
    let sol = optimal_fractional(tm, phys, paths)?;
    let n = phys.n();
    let mut w = vec![0.0; paths.len()];
    for (i, j) in paths.pairs() {
        let t = tm.get(i, j);
        if t > 0.0 {
            let r = paths.pair_range(i, j);
            let s: f64 = r.clone().map(|p| sol.flows[p]).sum();
            for p in r {
                w[p] = sol.flows[p] / s;
            }
        }
    }
    let caps = sol.topology.capacities(phys);
    let out = evaluate(&RoutingWeights { weights: w, unroutable: vec![] }, tm, &caps, paths)?;
    debug_assert_eq!(caps.len(), n * n);
    Ok((sol.topology, out))
}

/// Integer variant of [`ideal_toe`]: spread spare budget, round with LDM, route ideally.
pub fn ideal_toe_integer(
    tm: &TrafficMatrix,
    phys: &PhysicalTopology,
    paths: &PathSet,
    iters: usize,
) -> Result<(LogicalTopology, RoutingOutcome)> {
    let sol = optimal_fractional(tm, phys, paths)?;
    let d = combine(&[sol.topology], phys)?;
    let r = ldm_round(&d.d_star, phys, iters)?;
    let (_, out) = min_mlu_route(tm, &r.topo.capacities(phys), paths)?;
    Ok((r.topo, out))
}

/// Abstract two-tier fat tree: each pod has `r * b / oversub` Gbps of uplink
/// and downlink to a non-blocking spine; all inter-pod traffic takes 2 hops.
pub fn fat_tree_eval(tm: &TrafficMatrix, oversub: f64, phys: &PhysicalTopology) -> Result<RoutingOutcome> {
    if !(oversub.is_finite() && oversub >= 1.0) {
        return Err(Error::InvalidArgument(format!("oversubscription {oversub} must be >= 1")));
    }
    let n = phys.n();
    if tm.n() != n {
        return Err(Error::Dimension("traffic and fabric differ in pod count".into()));
    }
    let mut utils = Vec::with_capacity(2 * n);
    for i in 0..n {
        let b = phys.pods()[i].link_gbps;
        utils.push(tm.row_sum(i) / (phys.egress(i) as f64 * b / oversub));
        utils.push(tm.col_sum(i) / (phys.ingress(i) as f64 * b / oversub));
    }
    let mlu = utils.iter().copied().fold(0.0, f64::max);
    Ok(RoutingOutcome { mlu, lu_percentiles: percentiles_of(utils), bandwidth_tax: 1.0, per_link_flow: Vec::new() })
}

//! Rounding a combined fractional topology onto the OCS planes.

mod bpm;
mod greedy;
mod ldm;
mod oracle;

pub use bpm::bpm_round;
pub use greedy::greedy_round;
pub use ldm::{ldm_round, ldm_round_traced, LdmTrace, DUAL_SCALE};
pub use oracle::{ilp_oracle_round, ORACLE_MAX_OCS, ORACLE_MAX_PODS, ORACLE_MAX_PORTS};

use serde::{Deserialize, Serialize};

use crate::circulation::{solve_assignment, AssignmentProblem};
use crate::fabric::PhysicalTopology;
use crate::fractopo::throughput_on;
use crate::paths::PathSet;
use crate::topology::{FractionalTopology, LogicalTopology};
use crate::traffic::TrafficMatrix;
use crate::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 50;

/// Values this close to an integer are treated as that integer.
const SNAP: f64 = 1e-6;

pub(crate) fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= SNAP {
        r
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingMethod {
    Greedy,
    Bpm,
    Ldm,
    IlpOracle,
}

impl RoundingMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoundingMethod::Greedy => "greedy",
            RoundingMethod::Bpm => "bpm",
            RoundingMethod::Ldm => "ldm",
            RoundingMethod::IlpOracle => "ilp_oracle",
        }
    }
}

impl std::str::FromStr for RoundingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "bpm" => Ok(Self::Bpm),
            "ldm" => Ok(Self::Ldm),
            "ilp_oracle" | "oracle" => Ok(Self::IlpOracle),
            _ => Err(Error::InvalidArgument(format!("unknown rounding method {s:?}"))),
        }
    }
}

/// Floor/ceil window per pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoftConstraintSet {
    n: usize,
    floor: Vec<i64>,
    ceil: Vec<i64>,
}

impl SoftConstraintSet {
    pub fn from_fractional(d: &FractionalTopology) -> Self {
        let n = d.n();
        let mut floor = vec![0; n * n];
        let mut ceil = vec![0; n * n];
        for p in 0..n * n {
            let v = snap(d.as_slice()[p]);
            floor[p] = v.floor() as i64;
            ceil[p] = v.ceil() as i64;
        }
        Self { n, floor, ceil }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn floor(&self, i: usize, j: usize) -> i64 {
        self.floor[i * self.n + j]
    }

    pub fn ceil(&self, i: usize, j: usize) -> i64 {
        self.ceil[i * self.n + j]
    }

    pub fn satisfied(&self, i: usize, j: usize, links: i64) -> bool {
        let p = i * self.n + j;
        self.floor[p] <= links && links <= self.ceil[p]
    }

    /// Pairs (off-diagonal) whose aggregate sits inside the window.
    pub fn goodness(&self, aggregate: &[i64]) -> usize {
        let n = self.n;
        (0..n * n).filter(|&p| p / n != p % n && self.floor[p] <= aggregate[p] && aggregate[p] <= self.ceil[p]).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundingResult {
    pub topo: LogicalTopology,
    pub violations: usize,
    pub violation_ratio: f64,
    pub goodness: usize,
    pub iterations_used: usize,
    pub method: RoundingMethod,
}

impl RoundingResult {
    pub(crate) fn from_topology(
        topo: LogicalTopology,
        soft: &SoftConstraintSet,
        iterations_used: usize,
        method: RoundingMethod,
    ) -> Self {
        let n = topo.n();
        let agg: Vec<i64> = topo.aggregate_matrix().iter().map(|&v| v as i64).collect();
        let goodness = soft.goodness(&agg);
        let pairs = n * (n - 1);
        Self {
            violations: pairs - goodness,
            violation_ratio: (pairs - goodness) as f64 / pairs as f64,
            goodness,
            iterations_used,
            method,
            topo,
        }
    }
}

pub fn violation_ratio(topo: &LogicalTopology, soft: &SoftConstraintSet) -> Result<f64> {
    if topo.n() != soft.n {
        return Err(Error::Dimension("topology and soft constraints differ in size".into()));
    }
    let n = topo.n();
    let agg: Vec<i64> = topo.aggregate_matrix().iter().map(|&v| v as i64).collect();
    Ok((n * (n - 1) - soft.goodness(&agg)) as f64 / (n * (n - 1)) as f64)
}

/// Min over the set of throughputs on fixed capacities.
pub fn min_throughput(tm_set: &[TrafficMatrix], caps: &[f64], paths: &PathSet) -> Result<f64> {
    let mut best = f64::INFINITY;
    for tm in tm_set {
        best = best.min(throughput_on(tm, caps, paths)?);
    }
    if tm_set.is_empty() {
        return Err(Error::InvalidArgument("empty traffic set".into()));
    }
    Ok(best)
}

/// `1 - mu_int / mu_frac` with both throughputs taken as the minimum over the set.
pub fn optimality_loss(
    topo: &LogicalTopology,
    d_star: &FractionalTopology,
    tm_set: &[TrafficMatrix],
    phys: &PhysicalTopology,
    paths: &PathSet,
) -> Result<f64> {
    let frac = min_throughput(tm_set, &d_star.capacities(phys), paths)?;
    optimality_loss_given(topo, frac, tm_set, phys, paths)
}

/// Same as [`optimality_loss`] with the fractional throughput precomputed.
pub fn optimality_loss_given(
    topo: &LogicalTopology,
    mu_frac: f64,
    tm_set: &[TrafficMatrix],
    phys: &PhysicalTopology,
    paths: &PathSet,
) -> Result<f64> {
    if mu_frac <= 0.0 {
        return Err(Error::UndefinedLoss);
    }
    let int = min_throughput(tm_set, &topo.capacities(phys), paths)?;
    Ok(1.0 - int / mu_frac)
}

pub fn round(method: RoundingMethod, d_star: &FractionalTopology, phys: &PhysicalTopology, iters: usize) -> Result<RoundingResult> {
    match method {
        RoundingMethod::Greedy => greedy_round(d_star, phys),
        RoundingMethod::Bpm => bpm_round(d_star, phys, iters),
        RoundingMethod::Ldm => ldm_round(d_star, phys, iters),
        RoundingMethod::IlpOracle => ilp_oracle_round(d_star, phys),
    }
}

fn check_inputs(d_star: &FractionalTopology, phys: &PhysicalTopology) -> Result<()> {
    if d_star.n() != phys.n() {
        return Err(Error::Dimension(format!("D* has {} pods, fabric {}", d_star.n(), phys.n())));
    }
    Ok(())
}

/// Per-plane subproblem: minimize `cost . x` over the box under plane k's port caps.
pub(crate) fn solve_plane(
    phys: &PhysicalTopology,
    k: usize,
    cost: Vec<i64>,
    lower: Vec<i64>,
    upper: Vec<i64>,
) -> Result<Vec<i64>> {
    let n = phys.n();
    let row_cap = (0..n).map(|i| phys.h_eg(k, i) as i64).collect();
    let col_cap = (0..n).map(|j| phys.h_ig(k, j) as i64).collect();
    let prob = AssignmentProblem::new(n, n, cost, lower, upper, row_cap, col_cap)?;
    solve_assignment(&prob)
}

/// Like [`solve_plane`] with convex cells: units up to `knee` cost `below`,
/// units above it cost `above`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_plane_kneed(
    phys: &PhysicalTopology,
    k: usize,
    below: Vec<i64>,
    above: Vec<i64>,
    knee: Vec<i64>,
    lower: Vec<i64>,
    upper: Vec<i64>,
) -> Result<Vec<i64>> {
    let n = phys.n();
    let row_cap = (0..n).map(|i| phys.h_eg(k, i) as i64).collect();
    let col_cap = (0..n).map(|j| phys.h_ig(k, j) as i64).collect();
    let prob = AssignmentProblem::new(n, n, below, lower, upper, row_cap, col_cap)?.with_knee(knee, above)?;
    solve_assignment(&prob)
}

/// Mutable per-OCS state shared by the iterative methods.
pub(crate) struct PlaneState {
    n: usize,
    y: usize,
    pub x: Vec<i64>,
    pub agg: Vec<i64>,
}

impl PlaneState {
    pub fn new(n: usize, y: usize) -> Self {
        Self { n, y, x: vec![0; y * n * n], agg: vec![0; n * n] }
    }

    pub fn plane(&self, k: usize) -> &[i64] {
        &self.x[k * self.n * self.n..(k + 1) * self.n * self.n]
    }

    pub fn set_plane(&mut self, k: usize, new: &[i64]) {
        let nn = self.n * self.n;
        let plane = &mut self.x[k * nn..(k + 1) * nn];
        for ((agg, x), &v) in self.agg.iter_mut().zip(plane.iter_mut()).zip(new) {
            *agg += v - *x;
            *x = v;
        }
    }

    /// Trust region `max(x-1, 0) <= x' <= min(x+1, cap)`.
    pub fn trust_region(&self, phys: &PhysicalTopology, k: usize) -> (Vec<i64>, Vec<i64>) {
        let n = self.n;
        let cur = self.plane(k);
        let mut lo = vec![0; n * n];
        let mut hi = vec![0; n * n];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let p = i * n + j;
                let cap = phys.plane_pair_cap(k, i, j) as i64;
                lo[p] = (cur[p] - 1).max(0).min(cap);
                hi[p] = (cur[p] + 1).min(cap);
            }
        }
        (lo, hi)
    }

    pub fn to_topology(&self) -> Result<LogicalTopology> {
        LogicalTopology::new(self.n, self.y, self.x.iter().map(|&v| v as u32).collect())
    }
}

/// Best-by-goodness tracking shared by BPM and LDM.
pub(crate) struct BestTracker {
    pub best: Vec<i64>,
    pub goodness: usize,
}

impl BestTracker {
    pub fn new(state: &PlaneState, soft: &SoftConstraintSet) -> Self {
        Self { best: state.x.clone(), goodness: soft.goodness(&state.agg) }
    }

    /// Returns the goodness of the current state.
    pub fn observe(&mut self, state: &PlaneState, soft: &SoftConstraintSet) -> usize {
        let g = soft.goodness(&state.agg);
        if g > self.goodness {
            self.goodness = g;
            self.best.clone_from(&state.x);
        }
        g
    }

    pub fn into_topology(self, n: usize, y: usize) -> Result<LogicalTopology> {
        LogicalTopology::new(n, y, self.best.iter().map(|&v| v as u32).collect())
    }
}

//! Fractional and integer (per-OCS) inter-pod topologies.

use serde::{Deserialize, Serialize};

use crate::circulation::{solve_assignment_with, AssignmentProblem};
use crate::fabric::PhysicalTopology;
use crate::{Error, Result};

/// Slack allowed on the degree budgets of a fractional topology.
pub const DEGREE_SLACK: f64 = 1e-7;

/// Real-valued link counts `d_ij` within the pod degree budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalTopology {
    n: usize,
    d: Vec<f64>,
}

impl FractionalTopology {
    /// Validates against the degree budgets of `phys` (with [`DEGREE_SLACK`]
    /// scaled by the budget) and zero diagonal.
    pub fn new(n: usize, d: Vec<f64>, phys: &PhysicalTopology) -> Result<Self> {
        let t = Self::unchecked(n, d)?;
        t.check_degrees(phys)?;
        Ok(t)
    }

    pub fn unchecked(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::Dimension(format!("expected {} entries, got {}", n * n, d.len())));
        }
        for i in 0..n {
            for j in 0..n {
                let v = d[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(format!("d[{i}][{j}] = {v} is not a nonnegative real")));
                }
                if i == j && v != 0.0 {
                    return Err(Error::InvalidArgument(format!("d[{i}][{i}] must be zero")));
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, d: vec![0.0; n * n] }
    }

    pub fn check_degrees(&self, phys: &PhysicalTopology) -> Result<()> {
        let n = self.n;
        if phys.n() != n {
            return Err(Error::Dimension(format!("topology has {n} pods, fabric has {}", phys.n())));
        }
        for i in 0..n {
            let row: f64 = (0..n).map(|j| self.get(i, j)).sum();
            let col: f64 = (0..n).map(|j| self.get(j, i)).sum();
            let (re, ri) = (phys.egress(i) as f64, phys.ingress(i) as f64);
            if row > re * (1.0 + DEGREE_SLACK) + DEGREE_SLACK || col > ri * (1.0 + DEGREE_SLACK) + DEGREE_SLACK {
                return Err(Error::InvalidArgument(format!(
                    "pod {i} degree ({row}, {col}) exceeds budget ({re}, {ri})"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    /// Link capacity matrix in Gbps.
    pub fn capacities(&self, phys: &PhysicalTopology) -> Vec<f64> {
        let n = self.n;
        (0..n * n).map(|p| self.d[p] * phys.link_gbps(p / n, p % n)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{}", self.get(i, j))).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut d = Vec::new();
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            for cell in line.split(',') {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad number {cell:?} in row {rows}")))?;
                d.push(v);
            }
            rows += 1;
        }
        if rows * rows != d.len() {
            return Err(Error::Dimension(format!("{rows} rows but {} cells", d.len())));
        }
        Self::unchecked(rows, d)
    }
}

/// Per-OCS circuit counts `x[k][i][j]` plus the cached aggregate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogicalTopology {
    n: usize,
    y: usize,
    x: Vec<u32>,
    aggregate: Vec<u32>,
}

impl LogicalTopology {
    pub fn new(n: usize, y: usize, x: Vec<u32>) -> Result<Self> {
        if x.len() != y * n * n {
            return Err(Error::Dimension(format!("expected {} entries, got {}", y * n * n, x.len())));
        }
        let mut aggregate = vec![0u32; n * n];
        for plane in x.chunks(n * n) {
            for (a, &v) in aggregate.iter_mut().zip(plane) {
                *a += v;
            }
        }
        Ok(Self { n, y, x, aggregate })
    }

    pub fn zeros(n: usize, y: usize) -> Self {
        Self { n, y, x: vec![0; y * n * n], aggregate: vec![0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ocs_count(&self) -> usize {
        self.y
    }

    pub fn links(&self, k: usize, i: usize, j: usize) -> u32 {
        self.x[(k * self.n + i) * self.n + j]
    }

    pub fn plane(&self, k: usize) -> &[u32] {
        &self.x[k * self.n * self.n..(k + 1) * self.n * self.n]
    }

    pub fn aggregate(&self, i: usize, j: usize) -> u32 {
        self.aggregate[i * self.n + j]
    }

    pub fn aggregate_matrix(&self) -> &[u32] {
        &self.aggregate
    }

    pub fn capacities(&self, phys: &PhysicalTopology) -> Vec<f64> {
        let n = self.n;
        (0..n * n).map(|p| self.aggregate[p] as f64 * phys.link_gbps(p / n, p % n)).collect()
    }

    /// Per-OCS CSV rows `ocs,i,j,links` for nonzero entries.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ocs,i,j,links\n");
        for k in 0..self.y {
            for i in 0..self.n {
                for j in 0..self.n {
                    let v = self.links(k, i, j);
                    if v > 0 {
                        s.push_str(&format!("{k},{i},{j},{v}\n"));
                    }
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardViolation {
    Egress { pod: usize, ocs: usize, used: u32, limit: u32 },
    Ingress { pod: usize, ocs: usize, used: u32, limit: u32 },
    SelfLink { pod: usize, ocs: usize },
}

/// Lists every violated per-OCS port constraint. Empty means feasible.
pub fn validate_logical(topo: &LogicalTopology, phys: &PhysicalTopology) -> Result<Vec<HardViolation>> {
    let n = topo.n;
    if phys.n() != n || phys.ocs_count() != topo.y {
        return Err(Error::Dimension(format!(
            "topology is {n} pods x {} OCS, fabric is {} x {}",
            topo.y,
            phys.n(),
            phys.ocs_count()
        )));
    }
    let mut out = Vec::new();
    for k in 0..topo.y {
        for i in 0..n {
            let eg: u32 = (0..n).map(|j| topo.links(k, i, j)).sum();
            if eg > phys.h_eg(k, i) {
                out.push(HardViolation::Egress { pod: i, ocs: k, used: eg, limit: phys.h_eg(k, i) });
            }
            let ig: u32 = (0..n).map(|j| topo.links(k, j, i)).sum();
            if ig > phys.h_ig(k, i) {
                out.push(HardViolation::Ingress { pod: i, ocs: k, used: ig, limit: phys.h_ig(k, i) });
            }
            if topo.links(k, i, i) > 0 {
                out.push(HardViolation::SelfLink { pod: i, ocs: k });
            }
        }
    }
    Ok(out)
}

/// Near-equal full mesh. Each row gets the same base count; remainders go to
/// peers i+1, i+2, ... cyclically, then the aggregate is split over OCSs in
/// ascending order.
pub fn uniform_mesh(phys: &PhysicalTopology) -> Result<LogicalTopology> {
    let n = phys.n();
    let mut agg = vec![0u32; n * n];
    let mut row_left: Vec<u32> = (0..n).map(|i| phys.egress(i)).collect();
    let mut col_left: Vec<u32> = (0..n).map(|i| phys.ingress(i)).collect();
    let mut level = 0u32;
    loop {
        let mut changed = false;
        for i in 0..n {
            for t in 1..n {
                let j = (i + t) % n;
                if agg[i * n + j] == level && row_left[i] > 0 && col_left[j] > 0 {
                    agg[i * n + j] += 1;
                    row_left[i] -= 1;
                    col_left[j] -= 1;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        level += 1;
    }
    split_over_planes(&agg, phys)
}

/// Decompose an aggregate matrix into per-OCS assignments, plane by plane.
pub fn split_over_planes(agg: &[u32], phys: &PhysicalTopology) -> Result<LogicalTopology> {
    let n = phys.n();
    let y = phys.ocs_count();
    let mut remaining: Vec<i64> = agg.iter().map(|&v| v as i64).collect();
    let mut x = vec![0u32; y * n * n];
    for k in 0..y {
        let later = y - k - 1;
        let later_eg: Vec<i64> = (0..n).map(|i| (k + 1..y).map(|q| phys.h_eg(q, i) as i64).sum()).collect();
        let later_ig: Vec<i64> = (0..n).map(|i| (k + 1..y).map(|q| phys.h_ig(q, i) as i64).sum()).collect();
        let mut lower = vec![0i64; n * n];
        let mut upper = vec![0i64; n * n];
        let mut cost = vec![0i64; n * n];
        for i in 0..n {
            for j in 0..n {
                let p = i * n + j;
                if i == j || remaining[p] == 0 {
                    continue;
                }
                let later_pair: i64 = (k + 1..y).map(|q| phys.plane_pair_cap(q, i, j) as i64).sum();
                let cap = phys.plane_pair_cap(k, i, j) as i64;
                let share = remaining[p] / (later as i64 + 1);
                lower[p] = (remaining[p] - later_pair).max(0).min(cap);
                upper[p] = remaining[p].min(cap);
                // Prefer cells whose remaining count is high relative to what is left to place.
                cost[p] = -(remaining[p] - share).max(0) - remaining[p];
            }
        }
        let row_rem: Vec<i64> = (0..n).map(|i| (0..n).map(|j| remaining[i * n + j]).sum()).collect();
        let col_rem: Vec<i64> = (0..n).map(|j| (0..n).map(|i| remaining[i * n + j]).sum()).collect();
        let row_cap: Vec<i64> = (0..n).map(|i| phys.h_eg(k, i) as i64).collect();
        let col_cap: Vec<i64> = (0..n).map(|j| phys.h_ig(k, j) as i64).collect();
        let row_min: Vec<i64> = (0..n).map(|i| (row_rem[i] - later_eg[i]).clamp(0, row_cap[i])).collect();
        let col_min: Vec<i64> = (0..n).map(|j| (col_rem[j] - later_ig[j]).clamp(0, col_cap[j])).collect();
        let infeasible = || Error::Infeasible(format!("cannot stripe mesh onto OCS {k}"));
        let prob = AssignmentProblem::new(n, n, cost, lower, upper, row_cap, col_cap)
            .and_then(|p| p.with_side_minimums(row_min, col_min))
            .map_err(|_| infeasible())?;
        let a = solve_assignment_with(&prob, 0.0).map_err(|_| infeasible())?;
        for (p, &v) in a.iter().enumerate() {
            x[k * n * n + p] = v as u32;
            remaining[p] -= v;
        }
    }
    if let Some(p) = remaining.iter().position(|&r| r != 0) {
        return Err(Error::Infeasible(format!(
            "aggregate link ({}, {}) cannot be placed on any OCS",
            p / n,
            p % n
        )));
    }
    LogicalTopology::new(n, y, x)
}

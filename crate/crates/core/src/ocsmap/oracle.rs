//! Exhaustive minimum-violation rounding for tiny instances.

use super::{check_inputs, RoundingMethod, RoundingResult, SoftConstraintSet};
use crate::fabric::PhysicalTopology;
use crate::topology::{FractionalTopology, LogicalTopology};
use crate::{Error, Result};

pub const ORACLE_MAX_PODS: usize = 5;
pub const ORACLE_MAX_OCS: usize = 2;
pub const ORACLE_MAX_PORTS: u32 = 4;

struct Search<'a> {
    phys: &'a PhysicalTopology,
    soft: &'a SoftConstraintSet,
    cells: Vec<(usize, usize)>,
    eg: Vec<Vec<i64>>,
    ig: Vec<Vec<i64>>,
    x: Vec<Vec<i64>>,
    best: usize,
    best_x: Vec<Vec<i64>>,
}

impl Search<'_> {
    fn lower_bound(&self, from: usize) -> usize {
        let n = self.phys.n();
        let mut rows = vec![Vec::new(); n];
        let mut cols = vec![Vec::new(); n];
        for &(i, j) in &self.cells[from..] {
            let f = self.soft.floor(i, j);
            if f > 0 {
                rows[i].push(f);
                cols[j].push(f);
            }
        }
        let drops = |lists: &mut Vec<Vec<i64>>, caps: &dyn Fn(usize) -> i64| -> usize {
            let mut total = 0;
            for (v, list) in lists.iter_mut().enumerate() {
                list.sort_unstable_by(|a, b| b.cmp(a));
                let mut sum: i64 = list.iter().sum();
                for &f in list.iter() {
                    if sum <= caps(v) {
                        break;
                    }
                    sum -= f;
                    total += 1;
                }
            }
            total
        };
        let r = drops(&mut rows, &|i| self.eg.iter().map(|e| e[i]).sum());
        let c = drops(&mut cols, &|j| self.ig.iter().map(|g| g[j]).sum());
        r.max(c)
    }

    fn dfs(&mut self, idx: usize, violations: usize) {
        if self.best == 0 || violations + self.lower_bound(idx) >= self.best {
            return;
        }
        if idx == self.cells.len() {
            self.best = violations;
            self.best_x.clone_from(&self.x);
            return;
        }
        let (i, j) = self.cells[idx];
        let (f, c) = (self.soft.floor(i, j), self.soft.ceil(i, j));
        let y = self.eg.len();
        let caps: Vec<i64> = (0..y).map(|k| self.eg[k][i].min(self.ig[k][j])).collect();
        let mut splits = Vec::new();
        let mut cur = vec![0i64; y];
        enumerate(&caps, 0, &mut cur, &mut |v: &[i64]| {
            let s: i64 = v.iter().sum();
            if s >= f && s <= c && s > 0 {
                splits.push(v.to_vec());
            }
        });
        splits.sort_by_key(|v| std::cmp::Reverse(v.iter().sum::<i64>()));
        for split in splits {
            self.apply(i, j, &split, 1);
            self.dfs(idx + 1, violations);
            self.apply(i, j, &split, -1);
            if self.best == 0 {
                return;
            }
        }
        // Leaving the cell empty satisfies it when floor is 0, otherwise it is the
        // cheapest way to violate it.
        self.dfs(idx + 1, violations + usize::from(f > 0));
    }

    fn apply(&mut self, i: usize, j: usize, split: &[i64], sign: i64) {
        let n = self.phys.n();
        for (k, &v) in split.iter().enumerate() {
            self.eg[k][i] -= sign * v;
            self.ig[k][j] -= sign * v;
            self.x[k][i * n + j] += sign * v;
        }
    }
}

fn enumerate(caps: &[i64], k: usize, cur: &mut Vec<i64>, f: &mut impl FnMut(&[i64])) {
    if k == caps.len() {
        f(cur);
        return;
    }
    for v in 0..=caps[k] {
        cur[k] = v;
        enumerate(caps, k + 1, cur, f);
    }
    cur[k] = 0;
}

/// Minimum number of soft-constraint violations, by branch and bound.
pub fn ilp_oracle_round(d_star: &FractionalTopology, phys: &PhysicalTopology) -> Result<RoundingResult> {
    check_inputs(d_star, phys)?;
    let n = phys.n();
    let y = phys.ocs_count();
    let max_port = (0..y).flat_map(|k| (0..n).flat_map(move |i| [phys.h_eg(k, i), phys.h_ig(k, i)])).max().unwrap_or(0);
    if n > ORACLE_MAX_PODS || y > ORACLE_MAX_OCS || max_port > ORACLE_MAX_PORTS {
        return Err(Error::CapExceeded(format!(
            "oracle limited to {ORACLE_MAX_PODS} pods, {ORACLE_MAX_OCS} OCSs, {ORACLE_MAX_PORTS} ports per plane"
        )));
    }
    let soft = SoftConstraintSet::from_fractional(d_star);
    let mut cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    // Tight cells first so pruning bites early.
    cells.sort_by_key(|&(i, j)| std::cmp::Reverse(soft.floor(i, j)));
    let initial = cells.iter().filter(|&&(i, j)| soft.floor(i, j) > 0).count();
    let mut s = Search {
        phys,
        soft: &soft,
        eg: (0..y).map(|k| (0..n).map(|i| phys.h_eg(k, i) as i64).collect()).collect(),
        ig: (0..y).map(|k| (0..n).map(|i| phys.h_ig(k, i) as i64).collect()).collect(),
        x: vec![vec![0; n * n]; y],
        best: initial + 1,
        best_x: vec![vec![0; n * n]; y],
        cells,
    };
    s.dfs(0, 0);
    let flat: Vec<u32> = s.best_x.iter().flatten().map(|&v| v as u32).collect();
    let topo = LogicalTopology::new(n, y, flat)?;
    Ok(RoundingResult::from_topology(topo, &soft, 1, RoundingMethod::IlpOracle))
}

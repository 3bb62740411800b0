//! Fractional topologies: per-matrix throughput LP, hop-minimizing QP,
//! multi-matrix combination, and the joint LP used as a small-instance oracle.
//!
//! The per-matrix programs never materialize `d`. A topology supporting a
//! routing exists iff every pod's egress (ingress) load, counted in links,
//! fits its budget, and the minimal such topology is `d_ij = load_ij / b_ij`.
//! That replaces n^2 capacity rows with 2n degree rows.

use serde::Serialize;

use crate::fabric::PhysicalTopology;
use crate::paths::PathSet;
use crate::solver::{Goal, Problem, Sense, Var};
use crate::topology::FractionalTopology;
use crate::traffic::TrafficMatrix;
use crate::{Error, Result};

pub const JOINT_ORACLE_MAX_PODS: usize = 12;
pub const JOINT_ORACLE_MAX_TMS: usize = 4;
pub const PIPELINE_MAX_PODS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputSolution {
    pub mu: f64,
    pub topology: FractionalTopology,
    /// Gbps per path, indexed like `PathSet::paths()`.
    pub flows: Vec<f64>,
}

impl ThroughputSolution {
    /// Sum of squared 2-hop path flows (Gbps^2).
    pub fn two_hop_square_sum(&self, paths: &PathSet) -> f64 {
        paths.paths().iter().zip(&self.flows).filter(|(p, _)| !p.is_direct()).map(|(_, f)| f * f).sum()
    }

    pub fn two_hop_volume(&self, paths: &PathSet) -> f64 {
        paths.paths().iter().zip(&self.flows).filter(|(p, _)| !p.is_direct()).map(|(_, f)| f).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedTopology {
    pub alpha: f64,
    pub d_star: FractionalTopology,
}

fn check_dims(tm: &TrafficMatrix, phys: &PhysicalTopology, paths: &PathSet) -> Result<()> {
    if tm.n() != phys.n() || paths.n() != phys.n() {
        return Err(Error::Dimension(format!(
            "traffic {} pods, fabric {}, paths {}",
            tm.n(),
            phys.n(),
            paths.n()
        )));
    }
    if tm.is_zero() {
        return Err(Error::InvalidTraffic("throughput of an all-zero matrix is unbounded".into()));
    }
    Ok(())
}

/// Internal units: flows in multiples of the fastest link speed, demand
/// scaled so it sums to the total egress budget.
struct Units {
    bref: f64,
    scale: f64,
}

impl Units {
    fn new(tm_total: f64, budget: f64, phys: &PhysicalTopology) -> Self {
        Self { bref: phys.max_link_gbps(), scale: tm_total / budget }
    }

    /// Real throughput from scaled throughput.
    fn mu(&self, mu_hat: f64) -> f64 {
        mu_hat * self.bref / self.scale
    }

    fn mu_hat(&self, mu: f64) -> f64 {
        mu * self.scale / self.bref
    }
}

struct DegreeModel {
    problem: Problem,
    mu: Option<Var>,
    path_vars: Vec<Option<Var>>,
    tau: Vec<f64>,
    units: Units,
}

fn degree_model(
    tm: &TrafficMatrix,
    phys: &PhysicalTopology,
    paths: &PathSet,
    fixed_mu_hat: Option<f64>,
    goal: Goal,
) -> DegreeModel {
    let n = phys.n();
    let units = Units::new(tm.total(), phys.total_egress() as f64, phys);
    let tau: Vec<f64> = tm.as_slice().iter().map(|t| t / units.scale).collect();
    let mut problem = Problem::new(goal);
    let mu = match fixed_mu_hat {
        None => Some(problem.var(1.0)),
        Some(_) => None,
    };
    let mut path_vars = vec![None; paths.len()];
    let mut eg_rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); n];
    let mut ig_rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); n];
    for (i, j) in paths.pairs() {
        let t = tau[i * n + j];
        if t <= 0.0 {
            continue;
        }
        let mut eq = Vec::with_capacity(n);
        for idx in paths.pair_range(i, j) {
            let v = problem.var(0.0);
            path_vars[idx] = Some(v);
            eq.push((v, 1.0));
            for (a, b) in paths.paths()[idx].links() {
                let w = units.bref / phys.link_gbps(a, b);
                eg_rows[a].push((v, w));
                ig_rows[b].push((v, w));
            }
        }
        match (mu, fixed_mu_hat) {
            (Some(m), _) => {
                eq.push((m, -t));
                problem.constraint(eq, Sense::Eq, 0.0);
            }
            (None, Some(mh)) => problem.constraint(eq, Sense::Eq, mh * t),
            (None, None) => unreachable!(),
        }
    }
    for i in 0..n {
        problem.constraint(std::mem::take(&mut eg_rows[i]), Sense::Le, phys.egress(i) as f64);
        problem.constraint(std::mem::take(&mut ig_rows[i]), Sense::Le, phys.ingress(i) as f64);
    }
    DegreeModel { problem, mu, path_vars, tau, units }
}

/// Clean solver output: per-pair renormalization to the target volume, then a
/// uniform shrink if any degree budget is exceeded by round-off.
fn finish(
    model: &DegreeModel,
    raw: &[f64],
    mu_hat: f64,
    phys: &PhysicalTopology,
    paths: &PathSet,
) -> Result<ThroughputSolution> {
    let n = phys.n();
    let mut flows = vec![0.0; paths.len()];
    for (i, j) in paths.pairs() {
        let want = mu_hat * model.tau[i * n + j];
        if want <= 0.0 {
            continue;
        }
        let r = paths.pair_range(i, j);
        let got: f64 = r.clone().map(|p| model.path_vars[p].map_or(0.0, |v| raw[v.0].max(0.0))).sum();
        for p in r.clone() {
            let v = model.path_vars[p].map_or(0.0, |v| raw[v.0].max(0.0));
            flows[p] = if got > 0.0 { v * want / got } else { want / r.len() as f64 };
        }
    }
    let mut d = vec![0.0; n * n];
    for (p, path) in paths.paths().iter().enumerate() {
        if flows[p] == 0.0 {
            continue;
        }
        for (a, b) in path.links() {
            d[a * n + b] += flows[p] * model.units.bref / phys.link_gbps(a, b);
        }
    }
    let mut rho: f64 = 1.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| d[i * n + j]).sum();
        let col: f64 = (0..n).map(|j| d[j * n + i]).sum();
        rho = rho.max(row / phys.egress(i) as f64).max(col / phys.ingress(i) as f64);
    }
    let shrink = 1.0 / rho;
    d.iter_mut().for_each(|v| *v *= shrink);
    let gbps: Vec<f64> = flows.iter().map(|f| f * shrink * model.units.bref).collect();
    Ok(ThroughputSolution {
        mu: model.units.mu(mu_hat * shrink),
        topology: FractionalTopology::new(n, d, phys)?,
        flows: gbps,
    })
}

/// Maximum uniform scale of `tm` routable over any fractional topology.
pub fn max_throughput_lp(tm: &TrafficMatrix, phys: &PhysicalTopology, paths: &PathSet) -> Result<ThroughputSolution> {
    check_dims(tm, phys, paths)?;
    let model = degree_model(tm, phys, paths, None, Goal::Maximize);
    let sol = model.problem.solve()?;
    let mu_hat = sol.value(model.mu.expect("free mu")).max(0.0);
    finish(&model, &sol.values, mu_hat, phys, paths)
}

/// At fixed throughput `mu_star`, the topology minimizing the sum of squared
/// 2-hop flows. Retries once at a hair below `mu_star` on numerical failure.
pub fn min_nonshortest_qp(
    tm: &TrafficMatrix,
    mu_star: f64,
    phys: &PhysicalTopology,
    paths: &PathSet,
) -> Result<ThroughputSolution> {
    check_dims(tm, phys, paths)?;
    if !(mu_star.is_finite() && mu_star >= 0.0) {
        return Err(Error::InvalidArgument(format!("mu* = {mu_star}")));
    }
    let attempt = |mu: f64| -> Result<ThroughputSolution> {
        let units = Units::new(tm.total(), phys.total_egress() as f64, phys);
        let mh = units.mu_hat(mu);
        let mut model = degree_model(tm, phys, paths, Some(mh), Goal::Minimize);
        for (p, path) in paths.paths().iter().enumerate() {
            if let (Some(v), false) = (model.path_vars[p], path.is_direct()) {
                model.problem.set_quadratic(v, 2.0);
            }
        }
        let sol = model.problem.solve()?;
        finish(&model, &sol.values, mh, phys, paths)
    };
    attempt(mu_star).or_else(|_| attempt(mu_star * (1.0 - 1e-9)))
}

/// Per-matrix LP then QP.
pub fn optimal_fractional(tm: &TrafficMatrix, phys: &PhysicalTopology, paths: &PathSet) -> Result<ThroughputSolution> {
    let lp = max_throughput_lp(tm, phys, paths)?;
    min_nonshortest_qp(tm, lp.mu, phys, paths)
}

/// Maximum scale of `tm` routable on fixed link capacities (Gbps, n x n).
/// Zero when some demanded pair has no path of positive capacity.
pub fn throughput_on(tm: &TrafficMatrix, caps: &[f64], paths: &PathSet) -> Result<f64> {
    let n = tm.n();
    if caps.len() != n * n || paths.n() != n {
        return Err(Error::Dimension("capacity matrix does not match traffic".into()));
    }
    if tm.is_zero() {
        return Err(Error::InvalidTraffic("throughput of an all-zero matrix is unbounded".into()));
    }
    let bref = caps.iter().copied().fold(0.0, f64::max);
    if bref <= 0.0 {
        return Ok(0.0);
    }
    let cap_hat: Vec<f64> = caps.iter().map(|c| c / bref).collect();
    let scale = tm.total() / cap_hat.iter().sum::<f64>();
    let mut prob = Problem::new(Goal::Maximize);
    let mu = prob.var(1.0);
    let mut link_rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); n * n];
    for (i, j) in paths.pairs() {
        let t = tm.get(i, j) / scale;
        if t <= 0.0 {
            continue;
        }
        let mut eq = vec![(mu, -t)];
        for path in paths.pair_paths(i, j) {
            if path.links().any(|(a, b)| cap_hat[a * n + b] <= 0.0) {
                continue;
            }
            let v = prob.var(0.0);
            eq.push((v, 1.0));
            for (a, b) in path.links() {
                link_rows[a * n + b].push((v, 1.0));
            }
        }
        if eq.len() == 1 {
            return Ok(0.0);
        }
        prob.constraint(eq, Sense::Eq, 0.0);
    }
    for (l, row) in link_rows.into_iter().enumerate() {
        if !row.is_empty() {
            prob.constraint(row, Sense::Le, cap_hat[l]);
        }
    }
    let sol = prob.solve()?;
    Ok(sol.value(mu).max(0.0) * bref / scale)
}

/// Max alpha with `d*_ij >= alpha * d^tau_ij` for every input and D* within
/// the degree budgets.
pub fn combine(fractionals: &[FractionalTopology], phys: &PhysicalTopology) -> Result<CombinedTopology> {
    let n = phys.n();
    if fractionals.is_empty() {
        return Err(Error::InvalidArgument("combine needs at least one topology".into()));
    }
    for f in fractionals {
        if f.n() != n {
            return Err(Error::Dimension(format!("input has {} pods, fabric {n}", f.n())));
        }
        f.check_degrees(phys)?;
    }
    let mut prob = Problem::new(Goal::Maximize);
    let alpha = prob.var_bounded(1.0, Some(0.0), Some(1.0));
    let mut dv = vec![None; n * n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            dv[i * n + j] = Some(prob.var(0.0));
        }
    }
    for f in fractionals {
        for (&d, &v) in dv.iter().zip(f.as_slice()) {
            if let (Some(d), true) = (d, v > 0.0) {
                prob.constraint([(d, 1.0), (alpha, -v)], Sense::Ge, 0.0);
            }
        }
    }
    for i in 0..n {
        let row: Vec<_> = (0..n).filter_map(|j| dv[i * n + j].map(|v| (v, 1.0))).collect();
        prob.constraint(row, Sense::Le, phys.egress(i) as f64);
        let col: Vec<_> = (0..n).filter_map(|j| dv[j * n + i].map(|v| (v, 1.0))).collect();
        prob.constraint(col, Sense::Le, phys.ingress(i) as f64);
    }
    let sol = prob.solve()?;
    let mut a = sol.value(alpha).clamp(0.0, 1.0);
    let mut d: Vec<f64> = dv.iter().map(|v| v.map_or(0.0, |v| sol.value(v).max(0.0))).collect();
    for f in fractionals {
        for (x, &v) in d.iter_mut().zip(f.as_slice()) {
            *x = x.max(a * v);
        }
    }
    let mut rho: f64 = 1.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| d[i * n + j]).sum();
        let col: f64 = (0..n).map(|j| d[j * n + i]).sum();
        rho = rho.max(row / phys.egress(i) as f64).max(col / phys.ingress(i) as f64);
    }
    if rho > 1.0 {
        d.iter_mut().for_each(|x| *x /= rho);
        a /= rho;
    }
    Ok(CombinedTopology { alpha: a, d_star: FractionalTopology::new(n, d, phys)? })
}

/// Result of the full fractional stage for a representative set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalPipeline {
    pub per_tm: Vec<ThroughputSolution>,
    pub combined: CombinedTopology,
}

pub fn fractional_pipeline(
    tms: &[TrafficMatrix],
    phys: &PhysicalTopology,
    paths: &PathSet,
) -> Result<FractionalPipeline> {
    if phys.n() > PIPELINE_MAX_PODS {
        return Err(Error::CapExceeded(format!("{} pods, limit {PIPELINE_MAX_PODS}", phys.n())));
    }
    let per_tm = tms.iter().map(|tm| optimal_fractional(tm, phys, paths)).collect::<Result<Vec<_>>>()?;
    let tops: Vec<_> = per_tm.iter().map(|s| s.topology.clone()).collect();
    let combined = combine(&tops, phys)?;
    Ok(FractionalPipeline { per_tm, combined })
}

/// Max common throughput of all matrices over one shared fractional topology,
/// with explicit link-count variables.
pub fn joint_lp_oracle(
    tms: &[TrafficMatrix],
    phys: &PhysicalTopology,
    paths: &PathSet,
) -> Result<(f64, FractionalTopology)> {
    let n = phys.n();
    if n > JOINT_ORACLE_MAX_PODS || tms.len() > JOINT_ORACLE_MAX_TMS {
        return Err(Error::CapExceeded(format!(
            "joint oracle limited to {JOINT_ORACLE_MAX_PODS} pods and {JOINT_ORACLE_MAX_TMS} matrices, got {n} and {}",
            tms.len()
        )));
    }
    if tms.is_empty() {
        return Err(Error::InvalidArgument("no traffic matrices".into()));
    }
    for tm in tms {
        check_dims(tm, phys, paths)?;
    }
    let bref = phys.max_link_gbps();
    let scale = tms.iter().map(|t| t.total()).fold(0.0, f64::max) / phys.total_egress() as f64;
    let mut prob = Problem::new(Goal::Maximize);
    let mu = prob.var(1.0);
    let mut dv = vec![None; n * n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            dv[i * n + j] = Some(prob.var(0.0));
        }
    }
    for tm in tms {
        let mut link_rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); n * n];
        for (i, j) in paths.pairs() {
            let t = tm.get(i, j) / scale;
            if t <= 0.0 {
                continue;
            }
            let mut eq = vec![(mu, -t)];
            for path in paths.pair_paths(i, j) {
                let v = prob.var(0.0);
                eq.push((v, 1.0));
                for (a, b) in path.links() {
                    link_rows[a * n + b].push((v, 1.0));
                }
            }
            prob.constraint(eq, Sense::Eq, 0.0);
        }
        for (l, mut row) in link_rows.into_iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let cap_per_link = phys.link_gbps(l / n, l % n) / bref;
            row.push((dv[l].expect("off-diagonal link"), -cap_per_link));
            prob.constraint(row, Sense::Le, 0.0);
        }
    }
    for i in 0..n {
        let row: Vec<_> = (0..n).filter_map(|j| dv[i * n + j].map(|v| (v, 1.0))).collect();
        prob.constraint(row, Sense::Le, phys.egress(i) as f64);
        let col: Vec<_> = (0..n).filter_map(|j| dv[j * n + i].map(|v| (v, 1.0))).collect();
        prob.constraint(col, Sense::Le, phys.ingress(i) as f64);
    }
    let sol = prob.solve()?;
    let mut d: Vec<f64> = dv.iter().map(|v| v.map_or(0.0, |v| sol.value(v).max(0.0))).collect();
    let mut rho: f64 = 1.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| d[i * n + j]).sum();
        let col: f64 = (0..n).map(|j| d[j * n + i]).sum();
        rho = rho.max(row / phys.egress(i) as f64).max(col / phys.ingress(i) as f64);
    }
    d.iter_mut().for_each(|x| *x /= rho);
    Ok((sol.value(mu).max(0.0) * bref / scale / rho, FractionalTopology::new(n, d, phys)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::PodSpec;
    use crate::paths::build_path_set;

    fn fabric(n: usize, r: u32) -> PhysicalTopology {
        PhysicalTopology::uniform(vec![PodSpec::new(r, r, 1.0); n], 1, None).unwrap()
    }

    #[test]
    fn two_pods_direct_only() {
        let p = fabric(2, 4);
        let tm = TrafficMatrix::new(2, vec![0.0, 2.0, 2.0, 0.0]).unwrap();
        let s = max_throughput_lp(&tm, &p, &build_path_set(2).unwrap()).unwrap();
        assert!((s.mu - 2.0).abs() < 1e-7);
        assert!((s.topology.get(0, 1) - 4.0).abs() < 1e-6);
    }

    #[test]
    fn single_pair_three_pods() {
        // Pod 0's egress budget caps the total over direct and 2-hop routes.
        let p = fabric(3, 10);
        let tm = TrafficMatrix::from_fn(3, |i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 }).unwrap();
        let ps = build_path_set(3).unwrap();
        let s = max_throughput_lp(&tm, &p, &ps).unwrap();
        assert!((s.mu - 10.0).abs() < 1e-6, "{}", s.mu);
        let q = min_nonshortest_qp(&tm, s.mu, &p, &ps).unwrap();
        assert!(q.two_hop_square_sum(&ps) < 1e-9);
        assert!((q.topology.get(0, 1) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn zero_tm_rejected() {
        let p = fabric(3, 2);
        let e = max_throughput_lp(&TrafficMatrix::zeros(3), &p, &build_path_set(3).unwrap());
        assert!(matches!(e, Err(Error::InvalidTraffic(_))));
    }

    #[test]
    fn oracle_cap_enforced() {
        let p = fabric(13, 2);
        let tm = TrafficMatrix::from_fn(13, |_, _| 1.0).unwrap();
        let e = joint_lp_oracle(&[tm], &p, &build_path_set(13).unwrap());
        assert!(matches!(e, Err(Error::CapExceeded(_))));
    }

    #[test]
    fn fixed_capacity_throughput() {
        // Three pods, 1 Gbps everywhere except 0->1 which is absent.
        let mut caps = vec![1.0; 9];
        for i in 0..3 {
            caps[i * 3 + i] = 0.0;
        }
        caps[1] = 0.0;
        let tm = TrafficMatrix::from_fn(3, |i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 }).unwrap();
        let mu = throughput_on(&tm, &caps, &build_path_set(3).unwrap()).unwrap();
        assert!((mu - 1.0).abs() < 1e-7);
    }
}

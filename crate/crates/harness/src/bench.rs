//! Rounding benchmark over generated heterogeneous fabrics.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toe_core::fractopo::{combine, max_throughput_lp, throughput_on};
use toe_core::ocsmap::{optimality_loss_given, round, RoundingMethod, DEFAULT_ITERATIONS};
use toe_core::traffic::{synth_trace, GeneratorSpec};
use toe_core::{build_path_set, PhysicalTopology, PodSpec, TrafficMatrix};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub instances: usize,
    pub pods_min: usize,
    pub pods_max: usize,
    /// Per-pod port counts drawn uniformly from this list.
    pub port_choices: Vec<u32>,
    pub radix: u32,
    pub link_gbps: f64,
    pub iterations: usize,
    pub methods: Vec<RoundingMethod>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            instances: 90,
            pods_min: 12,
            pods_max: 36,
            port_choices: vec![32, 64, 128],
            radix: 128,
            link_gbps: 100.0,
            iterations: DEFAULT_ITERATIONS,
            methods: vec![RoundingMethod::Greedy, RoundingMethod::Bpm, RoundingMethod::Ldm],
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.instances == 0 || self.methods.is_empty() {
            return bad("bench needs at least one instance and one method");
        }
        if self.pods_min < 2 || self.pods_max < self.pods_min {
            return bad("pod range invalid");
        }
        if self.port_choices.is_empty() || self.port_choices.contains(&0) || self.radix == 0 {
            return bad("port choices and radix must be positive");
        }
        if self.port_choices.iter().any(|&p| p > self.radix * 64) {
            return bad("pod ports too large for the radix");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchTraffic {
    NearestNeighbor,
    Random,
}

impl BenchTraffic {
    pub fn as_str(&self) -> &'static str {
        match self {
            BenchTraffic::NearestNeighbor => "nearest_neighbor",
            BenchTraffic::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: RoundingMethod,
    pub violations: usize,
    pub violation_ratio: f64,
    pub optimality_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub fabric: usize,
    pub traffic: BenchTraffic,
    pub pods: usize,
    pub ocs: usize,
    pub mu_frac: f64,
    pub outcomes: Vec<MethodOutcome>,
}

impl BenchRecord {
    pub fn outcome(&self, m: RoundingMethod) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == m)
    }
}

fn sub_seed(seed: u64, i: usize, salt: u64) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Fabric `i`: random pod count and port mix, the fewest OCS planes that fit the radix.
pub fn bench_fabric(cfg: &BenchConfig, i: usize) -> Result<PhysicalTopology> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, i, 1));
    let n = rng.random_range(cfg.pods_min..=cfg.pods_max);
    let pods: Vec<PodSpec> = (0..n)
        .map(|_| {
            let p = *cfg.port_choices.choose(&mut rng).expect("nonempty");
            PodSpec::new(p, p, cfg.link_gbps)
        })
        .collect();
    let total: u64 = pods.iter().map(|p| p.egress as u64).sum();
    let mut y = total.div_ceil(cfg.radix as u64) as usize;
    loop {
        match PhysicalTopology::uniform(pods.clone(), y, Some(cfg.radix)) {
            Ok(p) => return Ok(p),
            Err(_) if y < 4 * n + 64 => y += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn bench_traffic(kind: BenchTraffic, n: usize, seed: u64) -> Result<TrafficMatrix> {
    let spec = match kind {
        BenchTraffic::NearestNeighbor => GeneratorSpec::NearestNeighbor {
            n,
            snapshots: 1,
            rho: ((n as f64 / 8.0).round() as usize).max(1),
            min_gbps: 0.0,
            max_gbps: 1.0,
        },
        BenchTraffic::Random => GeneratorSpec::Random { n, snapshots: 1, min_gbps: 0.0, max_gbps: 1.0 },
    };
    Ok(synth_trace(&spec, seed)?.snapshots.swap_remove(0))
}

/// One instance: throughput-optimal fractional topology, spare budget spread,
/// then every method rounds it.
pub fn run_instance(cfg: &BenchConfig, fabric: usize, traffic: BenchTraffic) -> Result<BenchRecord> {
    let phys = bench_fabric(cfg, fabric)?;
    let n = phys.n();
    let paths = build_path_set(n)?;
    let salt = match traffic {
        BenchTraffic::NearestNeighbor => 2,
        BenchTraffic::Random => 3,
    };
    let tm = bench_traffic(traffic, n, sub_seed(cfg.seed, fabric, salt))?;
    let lp = max_throughput_lp(&tm, &phys, &paths)?;
    let d_star = combine(&[lp.topology], &phys)?.d_star;
    let mu_frac = throughput_on(&tm, &d_star.capacities(&phys), &paths)?;
    let tms = [tm];
    let outcomes = cfg
        .methods
        .iter()
        .map(|&m| {
            let r = round(m, &d_star, &phys, cfg.iterations)?;
            Ok(MethodOutcome {
                method: m,
                violations: r.violations,
                violation_ratio: r.violation_ratio,
                optimality_loss: optimality_loss_given(&r.topo, mu_frac, &tms, &phys, &paths)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchRecord { fabric, traffic, pods: n, ocs: phys.ocs_count(), mu_frac, outcomes })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let jobs: Vec<(usize, BenchTraffic)> = (0..cfg.instances)
        .flat_map(|i| [(i, BenchTraffic::NearestNeighbor), (i, BenchTraffic::Random)])
        .collect();
    jobs.par_iter().map(|&(i, t)| run_instance(cfg, i, t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: RoundingMethod,
    pub median_violation_ratio: f64,
    pub median_loss: f64,
    /// Share of instances with strictly lower loss than greedy.
    pub beats_greedy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub instances: usize,
    pub methods: Vec<MethodSummary>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    toe_core::routing::percentile(&v, 50.0)
}

pub fn summarize(records: &[BenchRecord]) -> BenchSummary {
    let methods: Vec<RoundingMethod> = records.first().map(|r| r.outcomes.iter().map(|o| o.method).collect()).unwrap_or_default();
    let summaries = methods
        .iter()
        .map(|&m| {
            fn get(r: &BenchRecord, m: RoundingMethod) -> &MethodOutcome {
                r.outcome(m).expect("every record has every method")
            }
            let beats = records
                .iter()
                .filter(|r| r.outcome(RoundingMethod::Greedy).is_some_and(|g| get(r, m).optimality_loss < g.optimality_loss))
                .count();
            MethodSummary {
                method: m,
                median_violation_ratio: median(records.iter().map(|r| get(r, m).violation_ratio).collect()),
                median_loss: median(records.iter().map(|r| get(r, m).optimality_loss).collect()),
                beats_greedy: beats as f64 / records.len().max(1) as f64,
            }
        })
        .collect();
    BenchSummary { instances: records.len(), methods: summaries }
}

pub fn bench_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from("fabric,traffic,pods,ocs,mu_frac,method,violations,violation_ratio,optimality_loss\n");
    for r in records {
        for o in &r.outcomes {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.fabric,
                r.traffic.as_str(),
                r.pods,
                r.ocs,
                r.mu_frac,
                o.method.as_str(),
                o.violations,
                o.violation_ratio,
                o.optimality_loss
            )
            .unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fabrics_respect_radix_and_range() {
        let cfg = BenchConfig::default();
        for i in 0..20 {
            let p = bench_fabric(&cfg, i).unwrap();
            assert!((12..=36).contains(&p.n()));
            for k in 0..p.ocs_count() {
                assert!((0..p.n()).map(|j| p.h_eg(k, j)).sum::<u32>() <= 128);
            }
        }
    }

    #[test]
    fn nearest_neighbor_radius_scales_with_n() {
        let t = bench_traffic(BenchTraffic::NearestNeighbor, 16, 1).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let d = (i as isize - j as isize).rem_euclid(16).min((j as isize - i as isize).rem_euclid(16));
                assert_eq!(t.get(i, j) > 0.0, i != j && d <= 2, "{i} {j}");
            }
        }
    }

    #[test]
    fn small_bench_runs_and_summarizes() {
        let cfg = BenchConfig { instances: 2, pods_min: 4, pods_max: 6, port_choices: vec![8, 16], radix: 16, iterations: 5, ..Default::default() };
        let recs = run_bench(&cfg).unwrap();
        assert_eq!(recs.len(), 4);
        let s = summarize(&recs);
        assert_eq!(s.methods.len(), 3);
        assert_eq!(s.methods[0].beats_greedy, 0.0);
        assert_eq!(bench_csv(&recs).lines().count(), 1 + 12);
    }
}

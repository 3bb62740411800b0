//! Trace replay with periodic reconfiguration.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use toe_core::fractopo::fractional_pipeline;
use toe_core::ocsmap::{self, RoundingMethod};
use toe_core::routing::{self, RoutingOutcome, RoutingWeights};
use toe_core::traffic::{
    choose_k_silhouette, kmeans_centroids, pca_project, predictor_ave, predictor_last, predictor_max,
    PcaProjection, RepresentativeSet,
};
use toe_core::{build_path_set, uniform_mesh, LogicalTopology, PathSet, PhysicalTopology, TrafficMatrix, TrafficTrace};

use crate::config::{hex, ExperimentConfig, Predictor, RoundingConfig, RoutingScheme, Scheme, TopologyScheme};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundingSummary {
    pub method: RoundingMethod,
    pub violations: usize,
    pub violation_ratio: f64,
    pub goodness: usize,
    pub iterations_used: usize,
}

/// What an epoch runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum EpochNetwork {
    Logical(LogicalTopology),
    FatTree { oversub: f64 },
    /// Per-snapshot optimal fractional topology.
    IdealToe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltTopology {
    pub network: EpochNetwork,
    pub representatives: Option<RepresentativeSet>,
    pub silhouette: Option<f64>,
    pub alpha: Option<f64>,
    pub rounding: Option<RoundingSummary>,
    pub bootstrap: bool,
}

impl BuiltTopology {
    fn plain(network: EpochNetwork) -> Self {
        Self { network, representatives: None, silhouette: None, alpha: None, rounding: None, bootstrap: false }
    }

    pub fn logical(&self) -> Option<&LogicalTopology> {
        match &self.network {
            EpochNetwork::Logical(t) => Some(t),
            _ => None,
        }
    }

    pub fn k(&self) -> usize {
        self.representatives.as_ref().map_or(0, |r| r.tms.len())
    }

    pub fn representative_digest(&self) -> String {
        match &self.representatives {
            None => "-".into(),
            Some(r) => {
                let mut h = Sha256::new();
                for tm in &r.tms {
                    for v in tm.as_slice() {
                        h.update(v.to_le_bytes());
                    }
                }
                hex(&h.finalize()[..8])
            }
        }
    }

    pub fn topology_digest(&self) -> String {
        match &self.network {
            EpochNetwork::Logical(t) => {
                let mut h = Sha256::new();
                for k in 0..t.ocs_count() {
                    for v in t.plane(k) {
                        h.update(v.to_le_bytes());
                    }
                }
                hex(&h.finalize()[..8])
            }
            EpochNetwork::FatTree { oversub } => format!("fat_tree(1:{oversub})"),
            EpochNetwork::IdealToe => "per_snapshot".into(),
        }
    }
}

/// Shared inputs for building and evaluating topologies.
pub struct Fabric {
    pub phys: PhysicalTopology,
    pub paths: PathSet,
}

impl Fabric {
    pub fn new(phys: PhysicalTopology) -> Result<Self> {
        let paths = build_path_set(phys.n())?;
        Ok(Self { phys, paths })
    }
}

fn nonzero(window: &[TrafficMatrix]) -> Vec<TrafficMatrix> {
    window.iter().filter(|t| !t.is_zero()).cloned().collect()
}

/// Representatives for a multi-TM epoch. `k = None` picks k by silhouette within `k_range`.
pub fn representatives(
    window: &[TrafficMatrix],
    k: Option<usize>,
    k_range: (usize, usize),
    seed: u64,
) -> Result<(RepresentativeSet, Option<f64>)> {
    let k = match k {
        Some(k) => k.min(window.len()),
        None if window.len() > k_range.0 => {
            choose_k_silhouette(window, k_range.0, k_range.1.min(window.len() - 1), seed)?.chosen_k
        }
        None => 1,
    };
    let (set, report) = kmeans_centroids(window, k, seed)?;
    Ok((set, report.silhouette.first().and_then(|s| s.1)))
}

/// Topology for one epoch given its training window. An empty window yields
/// the flagged bootstrap mesh.
pub fn build_topology(
    scheme: &TopologyScheme,
    window: &[TrafficMatrix],
    fabric: &Fabric,
    opts: &BuildOptions,
    seed: u64,
) -> Result<BuiltTopology> {
    let window = nonzero(window);
    let (reps, silhouette) = match scheme {
        TopologyScheme::UniformMesh => return Ok(BuiltTopology::plain(EpochNetwork::Logical(uniform_mesh(&fabric.phys)?))),
        TopologyScheme::FatTree { oversub } => return Ok(BuiltTopology::plain(EpochNetwork::FatTree { oversub: *oversub })),
        TopologyScheme::IdealToe => return Ok(BuiltTopology::plain(EpochNetwork::IdealToe)),
        _ if window.is_empty() => {
            let mut b = BuiltTopology::plain(EpochNetwork::Logical(uniform_mesh(&fabric.phys)?));
            b.bootstrap = true;
            return Ok(b);
        }
        TopologyScheme::MultiTm { k } => representatives(&window, *k, opts.k_range, seed)?,
        TopologyScheme::SingleTm { predictor } => {
            let set = match predictor {
                Predictor::Ave => predictor_ave(&window)?,
                Predictor::Max => predictor_max(&window)?,
                Predictor::Last => predictor_last(&window)?,
            };
            (set, None)
        }
    };
    let pipe = fractional_pipeline(&reps.tms, &fabric.phys, &fabric.paths)?;
    let r = ocsmap::round(opts.rounding.method, &pipe.combined.d_star, &fabric.phys, opts.rounding.iterations)?;
    Ok(BuiltTopology {
        rounding: Some(RoundingSummary {
            method: r.method,
            violations: r.violations,
            violation_ratio: r.violation_ratio,
            goodness: r.goodness,
            iterations_used: r.iterations_used,
        }),
        network: EpochNetwork::Logical(r.topo),
        representatives: Some(reps),
        silhouette,
        alpha: Some(pipe.combined.alpha),
        bootstrap: false,
    })
}

/// Rounding settings plus the silhouette search range.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub rounding: RoundingConfig,
    pub k_range: (usize, usize),
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { rounding: RoundingConfig::default(), k_range: (2, 6) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotRow {
    pub snapshot: usize,
    pub mlu: f64,
    pub lu_p50: f64,
    pub lu_p99: f64,
    pub tax: f64,
}

impl SnapshotRow {
    fn from_outcome(snapshot: usize, o: &RoutingOutcome) -> Self {
        Self { snapshot, mlu: o.mlu, lu_p50: o.lu(50), lu_p99: o.lu(99), tax: o.bandwidth_tax }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub window: Range<usize>,
    pub snapshots: Range<usize>,
    pub topology: BuiltTopology,
    pub rows: Vec<SnapshotRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub scheme: Scheme,
    pub period: usize,
    pub epochs: Vec<EpochRecord>,
}

impl SchemeRun {
    pub fn label(&self) -> String {
        self.scheme.to_string()
    }

    /// Rows from non-bootstrap epochs.
    pub fn steady_rows(&self) -> impl Iterator<Item = &SnapshotRow> {
        self.epochs.iter().filter(|e| !e.topology.bootstrap).flat_map(|e| &e.rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub trace_len: usize,
    pub pods: usize,
    pub runs: Vec<SchemeRun>,
    pub pca: Option<PcaProjection>,
}

/// Epoch boundaries: an optional warmup epoch, then every `period` snapshots.
pub fn epoch_ranges(len: usize, warmup: usize, period: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let first = warmup.min(len);
    if first > 0 {
        out.push(0..first);
    }
    let mut s = first;
    while s < len {
        out.push(s..(s + period).min(len));
        s += period;
    }
    out
}

fn zero_row(t: usize) -> SnapshotRow {
    SnapshotRow { snapshot: t, mlu: 0.0, lu_p50: 0.0, lu_p99: 0.0, tax: 0.0 }
}

fn weights_at(
    routing: &RoutingScheme,
    trace: &TrafficTrace,
    t: usize,
    caps: &[f64],
    paths: &PathSet,
    seed: u64,
) -> Result<RoutingWeights> {
    let history = |h: usize| nonzero(trace.window(t.saturating_sub(h)..t));
    Ok(match routing {
        RoutingScheme::Vlb => routing::vlb_weights(caps, paths)?,
        RoutingScheme::TeS { history: h, .. } => {
            let hist = history(*h);
            if hist.is_empty() {
                routing::vlb_weights(caps, paths)?
            } else {
                routing::te_s(&predictor_ave(&hist)?.tms[0], caps, paths)?
            }
        }
        RoutingScheme::TeM { k, history: h, .. } => {
            let hist = history(*h);
            if hist.is_empty() {
                routing::vlb_weights(caps, paths)?
            } else {
                let (set, _) = kmeans_centroids(&hist, (*k).min(hist.len()), seed)?;
                routing::te_m(&set.tms, caps, paths)?
            }
        }
        RoutingScheme::Ideal => unreachable!("ideal routing has no fixed weights"),
    })
}

fn evaluate_epoch(
    routing: &RoutingScheme,
    built: &BuiltTopology,
    trace: &TrafficTrace,
    snaps: Range<usize>,
    fabric: &Fabric,
    seed: u64,
) -> Result<Vec<SnapshotRow>> {
    let eval_one = |t: usize, w: Option<&RoutingWeights>| -> Result<SnapshotRow> {
        let tm = &trace.snapshots[t];
        if tm.is_zero() {
            return Ok(zero_row(t));
        }
        let out = match (&built.network, w) {
            (EpochNetwork::FatTree { oversub }, _) => routing::fat_tree_eval(tm, *oversub, &fabric.phys)?,
            (EpochNetwork::IdealToe, _) => routing::ideal_toe(tm, &fabric.phys, &fabric.paths)?.1,
            (EpochNetwork::Logical(topo), None) => {
                routing::min_mlu_route(tm, &topo.capacities(&fabric.phys), &fabric.paths)?.1
            }
            (EpochNetwork::Logical(topo), Some(w)) => {
                routing::evaluate(w, tm, &topo.capacities(&fabric.phys), &fabric.paths)?
            }
        };
        Ok(SnapshotRow::from_outcome(t, &out))
    };
    let update_period = match routing {
        RoutingScheme::TeS { update_period, .. } | RoutingScheme::TeM { update_period, .. } => Some(*update_period),
        RoutingScheme::Vlb => Some(usize::MAX),
        RoutingScheme::Ideal => None,
    };
    let (Some(up), EpochNetwork::Logical(topo)) = (update_period, &built.network) else {
        return snaps.into_par_iter().map(|t| eval_one(t, None)).collect();
    };
    let caps = topo.capacities(&fabric.phys);
    // Weights refresh at the epoch start and every `up` snapshots after it.
    let updates: Vec<usize> = snaps.clone().step_by(up.min(snaps.len().max(1))).collect();
    let weights: Vec<RoutingWeights> = updates
        .par_iter()
        .map(|&t| weights_at(routing, trace, t, &caps, &fabric.paths, seed ^ t as u64))
        .collect::<Result<_>>()?;
    snaps
        .into_par_iter()
        .map(|t| {
            let u = updates.partition_point(|&s| s <= t) - 1;
            eval_one(t, Some(&weights[u]))
        })
        .collect()
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

/// Replay the whole trace for one scheme at one reconfiguration period.
pub fn run_scheme(
    scheme: &Scheme,
    period: usize,
    cfg: &ExperimentConfig,
    trace: &TrafficTrace,
    fabric: &Fabric,
) -> Result<SchemeRun> {
    let opts = BuildOptions { rounding: cfg.rounding.clone(), k_range: cfg.silhouette_k };
    let mut epochs = Vec::new();
    for (e, snaps) in epoch_ranges(trace.len(), cfg.warmup, period).into_iter().enumerate() {
        let window = snaps.start.saturating_sub(cfg.lookback_window)..snaps.start;
        let seed = epoch_seed(cfg.seed, e);
        let topology = build_topology(&scheme.topology, trace.window(window.clone()), fabric, &opts, seed)?;
        let rows = evaluate_epoch(&scheme.routing, &topology, trace, snaps.clone(), fabric, seed)?;
        epochs.push(EpochRecord { epoch: e, window, snapshots: snaps, topology, rows });
    }
    Ok(SchemeRun { scheme: scheme.clone(), period, epochs })
}

fn load(cfg: &ExperimentConfig) -> Result<(TrafficTrace, Fabric)> {
    let trace = cfg.load_trace()?;
    let fabric = Fabric::new(cfg.load_fabric()?)?;
    if trace.n() != Some(fabric.phys.n()) {
        return Err(crate::HarnessError::Config(format!(
            "trace has {:?} pods, fabric has {}",
            trace.n(),
            fabric.phys.n()
        )));
    }
    Ok((trace, fabric))
}

fn run_periods(cfg: &ExperimentConfig, periods: &[usize]) -> Result<RunReport> {
    cfg.validate()?;
    let (trace, fabric) = load(cfg)?;
    let mut runs = Vec::new();
    for &p in periods {
        for s in &cfg.schemes {
            runs.push(run_scheme(s, p, cfg, &trace, &fabric)?);
        }
    }
    Ok(RunReport {
        config: cfg.clone(),
        trace_len: trace.len(),
        pods: fabric.phys.n(),
        runs,
        pca: pca_project(&nonzero(&trace.snapshots)).ok(),
    })
}

/// Every configured scheme at the configured period.
pub fn run_epochal(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_periods(cfg, &[cfg.reconfig_period])
}

/// Every configured scheme at each period.
pub fn sweep_reconfig_frequency(cfg: &ExperimentConfig, periods: &[usize]) -> Result<RunReport> {
    if periods.is_empty() || periods.contains(&0) {
        return Err(crate::HarnessError::Config("sweep needs nonempty periods, all >= 1".into()));
    }
    run_periods(cfg, periods)
}

//! Traffic matrices, traces, similarity and predictors.

mod cluster;
mod pca;
mod synth;

pub use cluster::{choose_k_silhouette, kmeans_centroids, kmeans_points, silhouette_score, ClusteringReport, KMeansRun};
pub use pca::{pca_project, PcaProjection};
pub use synth::{synth_trace, ClusteredParams, ClusteredRecurrent, GeneratorSpec};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_PERIOD_SECS: f64 = 300.0;

/// Dense n x n demand in Gbps with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TrafficMatrix {
    n: usize,
    rates: Vec<f64>,
}

impl TrafficMatrix {
    pub fn new(n: usize, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != n * n {
            return Err(Error::Dimension(format!("expected {} rates, got {}", n * n, rates.len())));
        }
        for (p, &v) in rates.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidTraffic(format!("t[{}][{}] = {v}", p / n, p % n)));
            }
            if p / n == p % n && v != 0.0 {
                return Err(Error::InvalidTraffic(format!("diagonal t[{0}][{0}] must be zero", p / n)));
            }
        }
        Ok(Self { n, rates })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, rates: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let rates = (0..n * n)
            .map(|p| if p / n == p % n { 0.0 } else { f(p / n, p % n) })
            .collect();
        Self::new(n, rates)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rates
    }

    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.rates.iter().all(|&v| v == 0.0)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rates[i * self.n..(i + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, rates: self.rates.iter().map(|v| v * c).collect() }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Dimension(format!("{} vs {} pods", self.n, other.n)));
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for TrafficMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("traffic matrix must be square".into()));
        }
        Self::new(n, rows.into_iter().flatten().collect())
    }
}

impl From<TrafficMatrix> for Vec<Vec<f64>> {
    fn from(tm: TrafficMatrix) -> Self {
        tm.rates.chunks(tm.n.max(1)).map(|r| r.to_vec()).collect()
    }
}

/// Scale so entries sum to 1.
pub fn normalize(tm: &TrafficMatrix) -> Result<TrafficMatrix> {
    let s = tm.total();
    if s <= 0.0 {
        return Err(Error::InvalidTraffic("cannot normalize an all-zero matrix".into()));
    }
    Ok(tm.scaled(1.0 / s))
}

pub fn cosine_similarity(a: &TrafficMatrix, b: &TrafficMatrix) -> Result<f64> {
    a.check_same(b)?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.rates.iter().zip(&b.rates) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0))
}

/// Time-ordered snapshots of a single fabric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficTrace {
    pub snapshots: Vec<TrafficMatrix>,
    #[serde(default = "default_period")]
    pub period_secs: f64,
}

fn default_period() -> f64 {
    DEFAULT_PERIOD_SECS
}

impl TrafficTrace {
    pub fn new(snapshots: Vec<TrafficMatrix>) -> Result<Self> {
        if let Some(first) = snapshots.first() {
            if snapshots.iter().any(|s| s.n != first.n) {
                return Err(Error::Dimension("snapshots differ in pod count".into()));
            }
        }
        Ok(Self { snapshots, period_secs: DEFAULT_PERIOD_SECS })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn n(&self) -> Option<usize> {
        self.snapshots.first().map(|s| s.n)
    }

    pub fn window(&self, r: Range<usize>) -> &[TrafficMatrix] {
        &self.snapshots[r]
    }

    /// Sparse `t,i,j,gbps` rows for nonzero entries.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,i,j,gbps\n");
        for (t, tm) in self.snapshots.iter().enumerate() {
            for i in 0..tm.n {
                for j in 0..tm.n {
                    let v = tm.get(i, j);
                    if v != 0.0 {
                        s.push_str(&format!("{t},{i},{j},{v}\n"));
                    }
                }
            }
        }
        s
    }

    /// Parse sparse triplets. `n` fixes the pod count; snapshot count is
    /// `max t + 1` unless `len` is given.
    pub fn from_csv(text: &str, n: usize, len: Option<usize>) -> Result<Self> {
        let mut triplets = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('t') || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::InvalidTraffic(format!("line {}: {line:?}", line_no + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let t: usize = f[0].parse().map_err(|_| bad())?;
            let i: usize = f[1].parse().map_err(|_| bad())?;
            let j: usize = f[2].parse().map_err(|_| bad())?;
            let g: f64 = f[3].parse().map_err(|_| bad())?;
            if i >= n || j >= n {
                return Err(bad());
            }
            triplets.push((t, i, j, g));
        }
        let len = len.unwrap_or_else(|| triplets.iter().map(|x| x.0 + 1).max().unwrap_or(0));
        let mut rates = vec![vec![0.0; n * n]; len];
        for (t, i, j, g) in triplets {
            if t >= len {
                return Err(Error::InvalidTraffic(format!("snapshot {t} beyond trace length {len}")));
            }
            rates[t][i * n + j] += g;
        }
        let snaps = rates.into_iter().map(|r| TrafficMatrix::new(n, r)).collect::<Result<Vec<_>>>()?;
        Self::new(snaps)
    }
}

/// Fraction of snapshots whose most similar predecessor within `lookback`
/// snapshots reaches `threshold`. Only snapshots with a full window count.
pub fn recurrence_fraction(trace: &TrafficTrace, lookback: usize, threshold: f64) -> Result<f64> {
    Ok(recurrence_curve(trace, &[lookback], threshold, lookback)?[0])
}

/// Recurrence fractions for several lookbacks over one common evaluation set:
/// snapshots `start..len`. `start` must be at least the largest lookback.
/// With a shared evaluation set the curve is non-decreasing in lookback.
pub fn recurrence_curve(trace: &TrafficTrace, lookbacks: &[usize], threshold: f64, start: usize) -> Result<Vec<f64>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1]")));
    }
    let max_lb = lookbacks.iter().copied().max().unwrap_or(0);
    if lookbacks.contains(&0) || lookbacks.is_empty() {
        return Err(Error::InvalidArgument("lookback must be >= 1".into()));
    }
    if start < max_lb {
        return Err(Error::InvalidArgument(format!("start {start} below lookback {max_lb}")));
    }
    if trace.len() < start + 1 {
        return Err(Error::InsufficientData(format!(
            "trace of {} snapshots, need at least {}",
            trace.len(),
            start + 1
        )));
    }
    let normed = trace.snapshots.iter().map(normalize).collect::<Result<Vec<_>>>()?;
    // best[t][d-1]: running max similarity of snapshot t over distances 1..=d
    let mut hits = vec![0usize; lookbacks.len()];
    for t in start..normed.len() {
        let mut running = 0.0f64;
        let mut best = Vec::with_capacity(max_lb);
        for d in 1..=max_lb {
            running = running.max(cosine_similarity(&normed[t], &normed[t - d])?);
            best.push(running);
        }
        for (h, &lb) in hits.iter_mut().zip(lookbacks) {
            if best[lb - 1] >= threshold {
                *h += 1;
            }
        }
    }
    let total = (normed.len() - start) as f64;
    Ok(hits.into_iter().map(|h| h as f64 / total).collect())
}

/// Which single-matrix estimator a representative set holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentativeKind {
    Centroids,
    Ave,
    Max,
    Last,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSet {
    pub tms: Vec<TrafficMatrix>,
    pub kind: RepresentativeKind,
    pub source_window: Range<usize>,
}

fn reduce(window: &[TrafficMatrix], f: impl Fn(&[f64]) -> f64) -> Result<TrafficMatrix> {
    let first = window.first().ok_or_else(|| Error::InsufficientData("empty window".into()))?;
    let n = first.n;
    if window.iter().any(|w| w.n != n) {
        return Err(Error::Dimension("window snapshots differ in pod count".into()));
    }
    let mut col = vec![0.0; window.len()];
    let rates = (0..n * n)
        .map(|p| {
            for (c, w) in col.iter_mut().zip(window) {
                *c = w.rates[p];
            }
            f(&col)
        })
        .collect();
    TrafficMatrix::new(n, rates)
}

pub fn predictor_ave(window: &[TrafficMatrix]) -> Result<RepresentativeSet> {
    let tm = reduce(window, |v| v.iter().sum::<f64>() / v.len() as f64)?;
    Ok(RepresentativeSet { tms: vec![tm], kind: RepresentativeKind::Ave, source_window: 0..window.len() })
}

pub fn predictor_max(window: &[TrafficMatrix]) -> Result<RepresentativeSet> {
    let tm = reduce(window, |v| v.iter().copied().fold(0.0, f64::max))?;
    Ok(RepresentativeSet { tms: vec![tm], kind: RepresentativeKind::Max, source_window: 0..window.len() })
}

pub fn predictor_last(window: &[TrafficMatrix]) -> Result<RepresentativeSet> {
    let tm = window.last().cloned().ok_or_else(|| Error::InsufficientData("empty window".into()))?;
    Ok(RepresentativeSet { tms: vec![tm], kind: RepresentativeKind::Last, source_window: 0..window.len() })
}

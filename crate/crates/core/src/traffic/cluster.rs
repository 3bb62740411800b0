//! k-means++ / Lloyd clustering on normalized, flattened matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{normalize, RepresentativeKind, RepresentativeSet, TrafficMatrix};
use crate::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringReport {
    pub assignments: Vec<usize>,
    /// `(k, mean silhouette)`; `None` when undefined.
    pub silhouette: Vec<(usize, Option<f64>)>,
    pub chosen_k: usize,
    pub silhouette_defined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansRun {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = points.len();
    let mut chosen = vec![rng.random_range(0..m)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            pick.expect("positive total has a positive weight")
        } else {
            // All remaining points coincide with a centre: pick an unused index.
            let unused: Vec<usize> = (0..m).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen
}

/// Lloyd iterations from a seeded k-means++ start.
pub fn kmeans_points(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansRun> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!("k = {k} with {} points", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> =
        plus_plus_init(points, k, &mut rng).into_iter().map(|i| points[i].clone()).collect();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (c, d) = nearest(p, &centroids);
            inertia += d;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed || iterations >= MAX_LLOYD_ITERATIONS {
            break;
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(KMeansRun { centroids, assignments, inertia_history: history, iterations })
}

pub(crate) fn flatten_normalized(window: &[TrafficMatrix]) -> Result<Vec<Vec<f64>>> {
    let n = window.first().map(|w| w.n()).unwrap_or(0);
    window
        .iter()
        .map(|tm| {
            if tm.n() != n {
                return Err(Error::Dimension("window snapshots differ in pod count".into()));
            }
            Ok(normalize(tm)?.as_slice().to_vec())
        })
        .collect()
}

/// k centroids of the normalized window. Centroids sum to 1.
pub fn kmeans_centroids(
    window: &[TrafficMatrix],
    k: usize,
    seed: u64,
) -> Result<(RepresentativeSet, ClusteringReport)> {
    if k == 0 || k > window.len() {
        return Err(Error::InvalidArgument(format!("k = {k} with window of {}", window.len())));
    }
    let points = flatten_normalized(window)?;
    let run = kmeans_points(&points, k, seed)?;
    let n = window[0].n();
    let tms = run
        .centroids
        .iter()
        .map(|c| {
            let mut v = c.clone();
            for i in 0..n {
                v[i * n + i] = 0.0;
            }
            TrafficMatrix::new(n, v.into_iter().map(|x: f64| x.max(0.0)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let sil = silhouette_score(&points, &run.assignments);
    let report = ClusteringReport {
        assignments: run.assignments,
        silhouette: vec![(k, sil)],
        chosen_k: k,
        silhouette_defined: sil.is_some(),
    };
    Ok((RepresentativeSet { tms, kind: RepresentativeKind::Centroids, source_window: 0..window.len() }, report))
}

/// Mean silhouette coefficient with Euclidean distance. `None` when fewer
/// than two clusters are populated.
pub fn silhouette_score(points: &[Vec<f64>], assignments: &[usize]) -> Option<f64> {
    let k = assignments.iter().copied().max()? + 1;
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return None;
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let own = assignments[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (q, &aq) in points.iter().zip(assignments) {
            sums[aq] += sq_dist(p, q).sqrt();
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Some(total / points.len() as f64)
}

/// Run k-means for every k in the range and keep the best mean silhouette.
/// Ties go to the smaller k.
pub fn choose_k_silhouette(
    window: &[TrafficMatrix],
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<ClusteringReport> {
    if k_min < 2 || k_max < k_min || k_max + 1 > window.len() {
        return Err(Error::InvalidArgument(format!(
            "k range [{k_min}, {k_max}] invalid for window of {}",
            window.len()
        )));
    }
    let points = flatten_normalized(window)?;
    let degenerate = points.iter().all(|p| p == &points[0]);
    let mut silhouette = Vec::new();
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    let mut fallback = None;
    for k in k_min..=k_max {
        let run = kmeans_points(&points, k, seed)?;
        let s = if degenerate { None } else { silhouette_score(&points, &run.assignments) };
        silhouette.push((k, s));
        if fallback.is_none() {
            fallback = Some(run.assignments.clone());
        }
        if let Some(s) = s {
            if best.as_ref().is_none_or(|b| s > b.1) {
                best = Some((k, s, run.assignments));
            }
        }
    }
    Ok(match best {
        Some((k, _, assignments)) => ClusteringReport { assignments, silhouette, chosen_k: k, silhouette_defined: true },
        None => ClusteringReport {
            assignments: fallback.unwrap_or_default(),
            silhouette,
            chosen_k: k_min,
            silhouette_defined: false,
        },
    })
}

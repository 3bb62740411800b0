//! Two-component PCA of normalized snapshots, for plotting.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::cluster::flatten_normalized;
use super::TrafficMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaProjection {
    pub coords: Vec<(f64, f64)>,
    /// Proportion of variance explained by pc1 and pc2.
    pub pve: (f64, f64),
}

pub fn pca_project(window: &[TrafficMatrix]) -> Result<PcaProjection> {
    if window.len() < 3 {
        return Err(Error::InsufficientData(format!("PCA needs 3 snapshots, got {}", window.len())));
    }
    let pts = flatten_normalized(window)?;
    let (m, dim) = (pts.len(), pts[0].len());
    let mut mean = vec![0.0; dim];
    for p in &pts {
        for (a, v) in mean.iter_mut().zip(p) {
            *a += v / m as f64;
        }
    }
    let x = DMatrix::from_fn(m, dim, |r, c| pts[r][c] - mean[c]);
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total <= 1e-24 {
        return Err(Error::InsufficientData("window has zero variance".into()));
    }
    // Eigen-decompose whichever Gram side is smaller; scores are X v or U sqrt(lambda).
    let scores: Vec<(f64, Vec<f64>)> = if dim <= m {
        let eig = SymmetricEigen::new(x.transpose() * &x);
        top_two(eig.eigenvalues.as_slice())
            .into_iter()
            .map(|c| {
                let v = eig.eigenvectors.column(c);
                (eig.eigenvalues[c], (&x * v).iter().copied().collect())
            })
            .collect()
    } else {
        let eig = SymmetricEigen::new(&x * x.transpose());
        top_two(eig.eigenvalues.as_slice())
            .into_iter()
            .map(|c| {
                let lam = eig.eigenvalues[c].max(0.0);
                (lam, eig.eigenvectors.column(c).iter().map(|u| u * lam.sqrt()).collect())
            })
            .collect()
    };
    let mut comps: Vec<(f64, Vec<f64>)> = scores
        .into_iter()
        .map(|(lam, mut s)| {
            let pivot = s.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if pivot < 0.0 {
                s.iter_mut().for_each(|v| *v = -*v);
            }
            ((lam.max(0.0) / total).min(1.0), s)
        })
        .collect();
    while comps.len() < 2 {
        comps.push((0.0, vec![0.0; m]));
    }
    let coords = (0..m).map(|r| (comps[0].1[r], comps[1].1[r])).collect();
    Ok(PcaProjection { coords, pve: (comps[0].0, comps[1].0) })
}

fn top_two(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    idx.truncate(2);
    idx
}

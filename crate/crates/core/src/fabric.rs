//! Physical plant: pods, OCS planes and the fiber striping between them.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodSpec {
    pub egress: u32,
    pub ingress: u32,
    pub link_gbps: f64,
}

impl PodSpec {
    pub fn new(egress: u32, ingress: u32, link_gbps: f64) -> Self {
        Self { egress, ingress, link_gbps }
    }
}

/// Pods plus per-OCS striping `h_eg[k][i]`, `h_ig[k][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalTopology {
    pods: Vec<PodSpec>,
    h_eg: Vec<Vec<u32>>,
    h_ig: Vec<Vec<u32>>,
    radix: Option<u32>,
}

impl PhysicalTopology {
    pub fn new(
        pods: Vec<PodSpec>,
        h_eg: Vec<Vec<u32>>,
        h_ig: Vec<Vec<u32>>,
        radix: Option<u32>,
    ) -> Result<Self> {
        let n = pods.len();
        if n < 2 {
            return Err(Error::InvalidFabric(format!("need at least 2 pods, got {n}")));
        }
        for (i, p) in pods.iter().enumerate() {
            if p.egress == 0 || p.ingress == 0 {
                return Err(Error::InvalidFabric(format!("pod {i} has no egress or ingress links")));
            }
            if !(p.link_gbps.is_finite() && p.link_gbps > 0.0) {
                return Err(Error::InvalidFabric(format!("pod {i} link speed must be positive")));
            }
        }
        if h_eg.is_empty() || h_eg.len() != h_ig.len() {
            return Err(Error::InvalidFabric("striping must list the same nonzero number of OCSs".into()));
        }
        for (k, (eg, ig)) in h_eg.iter().zip(&h_ig).enumerate() {
            if eg.len() != n || ig.len() != n {
                return Err(Error::InvalidFabric(format!("OCS {k} striping row has wrong length")));
            }
            if let Some(r) = radix {
                let (se, si) = (eg.iter().sum::<u32>(), ig.iter().sum::<u32>());
                if se > r || si > r {
                    return Err(Error::InvalidFabric(format!(
                        "OCS {k} uses {} ports, radix is {r}",
                        se.max(si)
                    )));
                }
            }
        }
        for (i, p) in pods.iter().enumerate() {
            let se: u32 = h_eg.iter().map(|row| row[i]).sum();
            let si: u32 = h_ig.iter().map(|row| row[i]).sum();
            if se != p.egress || si != p.ingress {
                return Err(Error::InvalidFabric(format!(
                    "pod {i}: striping sums ({se}, {si}) differ from link counts ({}, {})",
                    p.egress, p.ingress
                )));
            }
        }
        Ok(Self { pods, h_eg, h_ig, radix })
    }

    /// Stripe every pod evenly over `ocs_count` planes. Remainder links go to
    /// planes `i, i+1, ...` (mod y) so OCS port usage stays balanced.
    pub fn uniform(pods: Vec<PodSpec>, ocs_count: usize, radix: Option<u32>) -> Result<Self> {
        if ocs_count == 0 {
            return Err(Error::InvalidFabric("ocs count must be positive".into()));
        }
        let y = ocs_count;
        let stripe = |total: u32, i: usize| -> Vec<u32> {
            let base = total / y as u32;
            let rem = (total % y as u32) as usize;
            let mut v = vec![base; y];
            for t in 0..rem {
                v[(i + t) % y] += 1;
            }
            v
        };
        let mut h_eg = vec![vec![0; pods.len()]; y];
        let mut h_ig = vec![vec![0; pods.len()]; y];
        for (i, p) in pods.iter().enumerate() {
            for (k, (e, g)) in stripe(p.egress, i).into_iter().zip(stripe(p.ingress, i)).enumerate() {
                h_eg[k][i] = e;
                h_ig[k][i] = g;
            }
        }
        Self::new(pods, h_eg, h_ig, radix)
    }

    pub fn n(&self) -> usize {
        self.pods.len()
    }

    pub fn ocs_count(&self) -> usize {
        self.h_eg.len()
    }

    pub fn pods(&self) -> &[PodSpec] {
        &self.pods
    }

    pub fn radix(&self) -> Option<u32> {
        self.radix
    }

    pub fn egress(&self, i: usize) -> u32 {
        self.pods[i].egress
    }

    pub fn ingress(&self, i: usize) -> u32 {
        self.pods[i].ingress
    }

    pub fn h_eg(&self, k: usize, i: usize) -> u32 {
        self.h_eg[k][i]
    }

    pub fn h_ig(&self, k: usize, i: usize) -> u32 {
        self.h_ig[k][i]
    }

    pub fn h_eg_matrix(&self) -> &[Vec<u32>] {
        &self.h_eg
    }

    pub fn h_ig_matrix(&self) -> &[Vec<u32>] {
        &self.h_ig
    }

    /// Gbps of one physical link between pods i and j.
    pub fn link_gbps(&self, i: usize, j: usize) -> f64 {
        self.pods[i].link_gbps.min(self.pods[j].link_gbps)
    }

    /// Upper bound on circuits from i to j through OCS k.
    pub fn plane_pair_cap(&self, k: usize, i: usize, j: usize) -> u32 {
        self.h_eg[k][i].min(self.h_ig[k][j])
    }

    pub fn max_link_gbps(&self) -> f64 {
        self.pods.iter().map(|p| p.link_gbps).fold(0.0, f64::max)
    }

    pub fn total_egress(&self) -> u64 {
        self.pods.iter().map(|p| p.egress as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Striping {
    Named(StripingKind),
    Explicit { h_eg: Vec<Vec<u32>>, h_ig: Vec<Vec<u32>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StripingKind {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsSection {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radix: Option<u32>,
    pub per_ocs_striping: Striping,
}

/// On-disk fabric description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FabricFile {
    pub pods: Vec<PodSpec>,
    pub ocs: OcsSection,
}

impl FabricFile {
    pub fn build(&self) -> Result<PhysicalTopology> {
        match &self.ocs.per_ocs_striping {
            Striping::Named(StripingKind::Uniform) => {
                PhysicalTopology::uniform(self.pods.clone(), self.ocs.count, self.ocs.radix)
            }
            Striping::Explicit { h_eg, h_ig } => {
                if h_eg.len() != self.ocs.count {
                    return Err(Error::InvalidFabric(format!(
                        "ocs.count is {} but striping lists {} planes",
                        self.ocs.count,
                        h_eg.len()
                    )));
                }
                PhysicalTopology::new(self.pods.clone(), h_eg.clone(), h_ig.clone(), self.ocs.radix)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<PhysicalTopology> {
        let f: FabricFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidFabric(e.to_string()))?;
        f.build()
    }

    pub fn from_topology(phys: &PhysicalTopology) -> Self {
        FabricFile {
            pods: phys.pods.clone(),
            ocs: OcsSection {
                count: phys.ocs_count(),
                radix: phys.radix,
                per_ocs_striping: Striping::Explicit { h_eg: phys.h_eg.clone(), h_ig: phys.h_ig.clone() },
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pods(n: usize, r: u32) -> Vec<PodSpec> {
        vec![PodSpec::new(r, r, 100.0); n]
    }

    #[test]
    fn uniform_striping_sums_to_pod_degree() {
        let p = PhysicalTopology::uniform(pods(5, 11), 4, Some(128)).unwrap();
        for i in 0..5 {
            let s: u32 = (0..4).map(|k| p.h_eg(k, i)).sum();
            assert_eq!(s, 11);
            let max = (0..4).map(|k| p.h_eg(k, i)).max().unwrap();
            let min = (0..4).map(|k| p.h_eg(k, i)).min().unwrap();
            assert!(max - min <= 1);
        }
    }

    #[test]
    fn radix_overflow_rejected() {
        let e = PhysicalTopology::uniform(pods(4, 40), 1, Some(128)).unwrap_err();
        assert!(matches!(e, Error::InvalidFabric(_)));
    }

    #[test]
    fn rejects_bad_pods() {
        assert!(PhysicalTopology::uniform(pods(1, 4), 1, None).is_err());
        assert!(PhysicalTopology::uniform(vec![PodSpec::new(0, 1, 1.0); 2], 1, None).is_err());
        assert!(PhysicalTopology::uniform(vec![PodSpec::new(1, 1, 0.0); 2], 1, None).is_err());
    }

    #[test]
    fn link_speed_is_min_of_endpoints() {
        let p = PhysicalTopology::uniform(
            vec![PodSpec::new(2, 2, 40.0), PodSpec::new(2, 2, 100.0)],
            1,
            None,
        )
        .unwrap();
        assert_eq!(p.link_gbps(0, 1), 40.0);
    }

    #[test]
    fn fabric_json_roundtrip() {
        let text = r#"{"pods":[{"egress":4,"ingress":4,"link_gbps":10.0},
                               {"egress":4,"ingress":4,"link_gbps":10.0}],
                      "ocs":{"count":2,"per_ocs_striping":"uniform"}}"#;
        let p = FabricFile::from_json(text).unwrap();
        assert_eq!(p.ocs_count(), 2);
        assert_eq!(p.h_eg(1, 0), 2);
        let back = serde_json::to_string(&FabricFile::from_topology(&p)).unwrap();
        assert_eq!(FabricFile::from_json(&back).unwrap(), p);
    }
}

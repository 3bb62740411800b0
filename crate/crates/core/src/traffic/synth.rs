//! Synthetic trace generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrafficMatrix, TrafficTrace};
use crate::{Error, Result};

fn default_min() -> f64 {
    0.0
}

fn default_max() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Every off-diagonal entry i.i.d. uniform in (min_gbps, max_gbps].
    Random {
        n: usize,
        snapshots: usize,
        #[serde(default = "default_min")]
        min_gbps: f64,
        #[serde(default = "default_max")]
        max_gbps: f64,
    },
    /// Pod i sends only to pods within circular index distance `rho`.
    NearestNeighbor {
        n: usize,
        snapshots: usize,
        rho: usize,
        #[serde(default = "default_min")]
        min_gbps: f64,
        #[serde(default = "default_max")]
        max_gbps: f64,
    },
    ClusteredRecurrent(ClusteredParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteredParams {
    pub n: usize,
    pub snapshots: usize,
    pub modes: usize,
    /// Mean number of snapshots before the active mode switches.
    pub switch_period: usize,
    /// Fraction of the way each mode has moved towards its drift target by the last snapshot.
    #[serde(default)]
    pub drift: f64,
    /// Multiplicative per-entry noise amplitude in [0, 1].
    #[serde(default)]
    pub noise: f64,
    /// Hot pairs per mode; the rest of the matrix is background.
    #[serde(default = "default_hot")]
    pub hot_pairs: usize,
    /// Share of each mode's volume on hot pairs.
    #[serde(default = "default_hot_share")]
    pub hot_share: f64,
    #[serde(default = "default_total")]
    pub total_gbps: f64,
}

fn default_hot() -> usize {
    4
}

fn default_hot_share() -> f64 {
    0.6
}

fn default_total() -> f64 {
    1000.0
}

impl GeneratorSpec {
    pub fn n(&self) -> usize {
        match self {
            GeneratorSpec::Random { n, .. } | GeneratorSpec::NearestNeighbor { n, .. } => *n,
            GeneratorSpec::ClusteredRecurrent(p) => p.n,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            GeneratorSpec::Random { n, min_gbps, max_gbps, .. }
            | GeneratorSpec::NearestNeighbor { n, min_gbps, max_gbps, .. } => {
                if *n < 2 {
                    return bad(format!("n = {n}"));
                }
                if !(*min_gbps >= 0.0 && max_gbps > min_gbps && max_gbps.is_finite()) {
                    return bad(format!("rate range ({min_gbps}, {max_gbps}]"));
                }
                if let GeneratorSpec::NearestNeighbor { rho, .. } = self {
                    if *rho == 0 {
                        return bad("rho must be >= 1".into());
                    }
                }
            }
            GeneratorSpec::ClusteredRecurrent(p) => {
                if p.n < 2 || p.modes == 0 || p.switch_period == 0 {
                    return bad("clustered generator needs n >= 2, modes >= 1, switch_period >= 1".into());
                }
                if !(0.0..=1.0).contains(&p.drift) || !(0.0..=1.0).contains(&p.noise) {
                    return bad("drift and noise must lie in [0, 1]".into());
                }
                if !(0.0..=1.0).contains(&p.hot_share) || p.total_gbps <= 0.0 {
                    return bad("hot_share in [0, 1] and positive total required".into());
                }
            }
        }
        Ok(())
    }
}

fn uniform_pos(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (1.0 - rng.random::<f64>())
}

pub fn synth_trace(spec: &GeneratorSpec, seed: u64) -> Result<TrafficTrace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        GeneratorSpec::Random { n, snapshots, min_gbps, max_gbps } => {
            let snaps = (0..*snapshots)
                .map(|_| TrafficMatrix::from_fn(*n, |_, _| uniform_pos(&mut rng, *min_gbps, *max_gbps)))
                .collect::<Result<Vec<_>>>()?;
            TrafficTrace::new(snaps)
        }
        GeneratorSpec::NearestNeighbor { n, snapshots, rho, min_gbps, max_gbps } => {
            let n = *n;
            let snaps = (0..*snapshots)
                .map(|_| {
                    TrafficMatrix::from_fn(n, |i, j| {
                        let d = (i + n - j) % n;
                        if d.min(n - d) <= *rho {
                            uniform_pos(&mut rng, *min_gbps, *max_gbps)
                        } else {
                            0.0
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            TrafficTrace::new(snaps)
        }
        GeneratorSpec::ClusteredRecurrent(p) => ClusteredRecurrent::new(p.clone(), seed)?.generate(),
    }
}

/// Latent modes plus the switching schedule of a clustered-recurrent trace.
#[derive(Debug, Clone)]
pub struct ClusteredRecurrent {
    params: ClusteredParams,
    base: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    schedule: Vec<usize>,
    seed: u64,
}

impl ClusteredRecurrent {
    pub fn new(params: ClusteredParams, seed: u64) -> Result<Self> {
        GeneratorSpec::ClusteredRecurrent(params.clone()).validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = params.n;
        let mode = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut bg = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        bg[i * n + j] = uniform_pos(rng, 0.5, 1.5);
                    }
                }
            }
            let bg_sum: f64 = bg.iter().sum();
            let mut hot = vec![0.0; n * n];
            for _ in 0..params.hot_pairs {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                hot[i * n + j] += uniform_pos(rng, 0.5, 1.5);
            }
            let hot_sum: f64 = hot.iter().sum();
            bg.iter()
                .zip(&hot)
                .map(|(b, h)| {
                    let hp = if hot_sum > 0.0 { params.hot_share * h / hot_sum } else { 0.0 };
                    let bs = if hot_sum > 0.0 { 1.0 - params.hot_share } else { 1.0 };
                    bs * b / bg_sum + hp
                })
                .collect()
        };
        let base: Vec<_> = (0..params.modes).map(|_| mode(&mut rng)).collect();
        let target: Vec<_> = (0..params.modes).map(|_| mode(&mut rng)).collect();
        let mut schedule = Vec::with_capacity(params.snapshots);
        let mut current = rng.random_range(0..params.modes);
        while schedule.len() < params.snapshots {
            let lo = (params.switch_period / 2).max(1);
            let len = rng.random_range(lo..=params.switch_period + params.switch_period / 2);
            schedule.extend(std::iter::repeat_n(current, len));
            if params.modes > 1 {
                current = (current + rng.random_range(1..params.modes)) % params.modes;
            }
        }
        schedule.truncate(params.snapshots);
        Ok(Self { params, base, target, schedule, seed })
    }

    pub fn schedule(&self) -> &[usize] {
        &self.schedule
    }

    fn drift_at(&self, t: usize) -> f64 {
        let last = self.params.snapshots.saturating_sub(1).max(1) as f64;
        self.params.drift * t as f64 / last
    }

    /// Mode `m` as it stands at snapshot `t`, scaled to the configured total.
    pub fn mode_matrix(&self, m: usize, t: usize) -> Result<TrafficMatrix> {
        let lam = self.drift_at(t);
        let v: Vec<f64> = self.base[m].iter().zip(&self.target[m]).map(|(b, g)| (1.0 - lam) * b + lam * g).collect();
        let s: f64 = v.iter().sum();
        TrafficMatrix::new(self.params.n, v.iter().map(|x| x / s * self.params.total_gbps).collect())
    }

    pub fn generate(&self) -> Result<TrafficTrace> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let n = self.params.n;
        let mut snaps = Vec::with_capacity(self.params.snapshots);
        for (t, &m) in self.schedule.iter().enumerate() {
            let mode = self.mode_matrix(m, t)?;
            if self.params.noise == 0.0 {
                snaps.push(mode);
                continue;
            }
            let noisy: Vec<f64> = mode
                .as_slice()
                .iter()
                .map(|&v| v * (1.0 + self.params.noise * (2.0 * rng.random::<f64>() - 1.0)))
                .collect();
            let s: f64 = noisy.iter().sum();
            snaps.push(TrafficMatrix::new(n, noisy.iter().map(|x| x / s * self.params.total_gbps).collect())?);
        }
        TrafficTrace::new(snaps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clustered(noise: f64) -> ClusteredParams {
        ClusteredParams {
            n: 6,
            snapshots: 60,
            modes: 3,
            switch_period: 5,
            drift: 0.3,
            noise,
            hot_pairs: 3,
            hot_share: 0.5,
            total_gbps: 100.0,
        }
    }

    #[test]
    fn nearest_neighbor_support() {
        let spec = GeneratorSpec::NearestNeighbor { n: 16, snapshots: 5, rho: 2, min_gbps: 0.0, max_gbps: 1.0 };
        for tm in synth_trace(&spec, 1).unwrap().snapshots {
            for i in 0..16usize {
                for j in 0..16usize {
                    let d = i.abs_diff(j).min(16 - i.abs_diff(j));
                    if d > 2 || d == 0 {
                        assert_eq!(tm.get(i, j), 0.0);
                    } else {
                        assert!(tm.get(i, j) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn random_is_dense() {
        let spec = GeneratorSpec::Random { n: 8, snapshots: 3, min_gbps: 0.0, max_gbps: 10.0 };
        let tr = synth_trace(&spec, 9).unwrap();
        assert!(tr.snapshots.iter().all(|tm| (0..64).all(|p| p / 8 == p % 8 || tm.as_slice()[p] > 0.0)));
    }

    #[test]
    fn noiseless_clustered_equals_modes() {
        let g = ClusteredRecurrent::new(clustered(0.0), 4).unwrap();
        let tr = g.generate().unwrap();
        for (t, tm) in tr.snapshots.iter().enumerate() {
            let m = g.schedule()[t];
            assert_eq!(tm, &g.mode_matrix(m, t).unwrap());
        }
        let mut used = g.schedule().to_vec();
        used.sort();
        used.dedup();
        assert!(used.len() > 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = GeneratorSpec::ClusteredRecurrent(clustered(0.2));
        assert_eq!(synth_trace(&spec, 5).unwrap(), synth_trace(&spec, 5).unwrap());
        assert_ne!(synth_trace(&spec, 5).unwrap(), synth_trace(&spec, 6).unwrap());
    }

    #[test]
    fn unknown_kind_is_config_error() {
        let r: std::result::Result<GeneratorSpec, _> = serde_json::from_str(r#"{"kind":"gravity","n":4}"#);
        assert!(r.is_err());
    }
}

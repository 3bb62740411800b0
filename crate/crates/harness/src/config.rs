//! Experiment configuration (JSON).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toe_core::ocsmap::{RoundingMethod, DEFAULT_ITERATIONS};
use toe_core::traffic::{synth_trace, GeneratorSpec};
use toe_core::{FabricFile, PhysicalTopology, PodSpec, TrafficTrace};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fabric: FabricSource,
    pub trace: TraceSource,
    pub schemes: Vec<Scheme>,
    /// Snapshots between topology reconfigurations.
    pub reconfig_period: usize,
    /// Snapshots of history each epoch trains on.
    pub lookback_window: usize,
    /// Snapshots before the first reconfiguration; they run on the bootstrap mesh.
    #[serde(default)]
    pub warmup: usize,
    #[serde(default)]
    pub rounding: RoundingConfig,
    /// k range searched when a multi_tm scheme leaves k unset.
    #[serde(default = "default_k_range")]
    pub silhouette_k: (usize, usize),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_periods: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_k_range() -> (usize, usize) {
    (2, 6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FabricSource {
    File(PathBuf),
    Uniform(UniformFabric),
    Inline(FabricFile),
}

/// Identical pods striped evenly over `ocs` planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformFabric {
    pub pods: usize,
    pub links: u32,
    #[serde(default = "default_gbps")]
    pub link_gbps: f64,
    pub ocs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radix: Option<u32>,
}

fn default_gbps() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceSource {
    File {
        file: PathBuf,
        n: usize,
    },
    Generated {
        generator: GeneratorSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundingConfig {
    #[serde(default = "default_method")]
    pub method: RoundingMethod,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_method() -> RoundingMethod {
    RoundingMethod::Ldm
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

impl Default for RoundingConfig {
    fn default() -> Self {
        Self { method: default_method(), iterations: default_iterations() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scheme {
    pub topology: TopologyScheme,
    #[serde(default)]
    pub routing: RoutingScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Ave,
    Max,
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyScheme {
    /// Combined topology over k cluster centroids; `k` unset picks it by silhouette.
    MultiTm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
    },
    SingleTm { predictor: Predictor },
    UniformMesh,
    FatTree {
        #[serde(default = "default_oversub")]
        oversub: f64,
    },
    IdealToe,
}

fn default_oversub() -> f64 {
    3.0
}

fn default_history() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoutingScheme {
    #[default]
    Ideal,
    /// Weights for the mean of the last `history` snapshots, refreshed every `update_period`.
    TeS {
        update_period: usize,
        #[serde(default = "default_history")]
        history: usize,
    },
    /// Weights for `k` centroids of the last `history` snapshots.
    TeM {
        k: usize,
        update_period: usize,
        #[serde(default = "default_history")]
        history: usize,
    },
    Vlb,
}

impl fmt::Display for TopologyScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyScheme::MultiTm { k: Some(k) } => write!(f, "multi_tm(k={k})"),
            TopologyScheme::MultiTm { k: None } => write!(f, "multi_tm(k=auto)"),
            TopologyScheme::SingleTm { predictor } => {
                let p = match predictor {
                    Predictor::Ave => "ave",
                    Predictor::Max => "max",
                    Predictor::Last => "last",
                };
                write!(f, "single_tm({p})")
            }
            TopologyScheme::UniformMesh => write!(f, "uniform_mesh"),
            TopologyScheme::FatTree { oversub } => write!(f, "fat_tree(1:{oversub})"),
            TopologyScheme::IdealToe => write!(f, "ideal_toe"),
        }
    }
}

impl fmt::Display for RoutingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoutingScheme::Ideal => write!(f, "ideal"),
            RoutingScheme::TeS { update_period, history } => write!(f, "te_s(p={update_period},h={history})"),
            RoutingScheme::TeM { k, update_period, history } => {
                write!(f, "te_m(k={k},p={update_period},h={history})")
            }
            RoutingScheme::Vlb => write!(f, "vlb"),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.topology, self.routing)
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarnessError::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    /// Parse and validate; relative file references resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.base_dir = base_dir;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return bad("scheme matrix is empty");
        }
        if self.reconfig_period == 0 || self.lookback_window == 0 {
            return bad("reconfig_period and lookback_window must be >= 1");
        }
        if self.sweep_periods.contains(&0) {
            return bad("sweep periods must be >= 1");
        }
        if self.rounding.iterations == 0 {
            return bad("rounding iterations must be >= 1");
        }
        let (lo, hi) = self.silhouette_k;
        if lo < 2 || hi < lo {
            return bad(format!("silhouette_k range ({lo}, {hi}) invalid"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for s in &self.schemes {
            match s.topology {
                TopologyScheme::MultiTm { k: Some(0) } => return bad("multi_tm k must be >= 1"),
                TopologyScheme::FatTree { oversub } if !(oversub.is_finite() && oversub >= 1.0) => {
                    return bad(format!("fat_tree oversubscription {oversub} must be >= 1"))
                }
                TopologyScheme::FatTree { .. } | TopologyScheme::IdealToe if s.routing != RoutingScheme::Ideal => {
                    return bad(format!("{} carries its own routing model; use ideal", s.topology))
                }
                _ => {}
            }
            match s.routing {
                RoutingScheme::TeS { update_period, history } if update_period == 0 || history == 0 => {
                    return bad("te_s update_period and history must be >= 1")
                }
                RoutingScheme::TeM { k, update_period, history } if k == 0 || update_period == 0 || history == 0 => {
                    return bad("te_m k, update_period and history must be >= 1")
                }
                _ => {}
            }
            if !labels.insert(s.to_string()) {
                return bad(format!("duplicate scheme {s}"));
            }
        }
        if let FabricSource::File(p) = &self.fabric {
            if !self.resolve(p).is_file() {
                return bad(format!("fabric file {} not found", p.display()));
            }
        }
        if let TraceSource::File { file, .. } = &self.trace {
            if !self.resolve(file).is_file() {
                return bad(format!("trace file {} not found", file.display()));
            }
        }
        Ok(())
    }

    pub fn trace_seed(&self) -> u64 {
        match &self.trace {
            TraceSource::Generated { seed: Some(s), .. } => *s,
            _ => self.seed,
        }
    }

    pub fn load_fabric(&self) -> Result<PhysicalTopology> {
        Ok(match &self.fabric {
            FabricSource::File(p) => {
                let path = self.resolve(p);
                let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
                FabricFile::from_json(&text)?
            }
            FabricSource::Uniform(u) => {
                PhysicalTopology::uniform(vec![PodSpec::new(u.links, u.links, u.link_gbps); u.pods], u.ocs, u.radix)?
            }
            FabricSource::Inline(f) => f.build()?,
        })
    }

    pub fn load_trace(&self) -> Result<TrafficTrace> {
        Ok(match &self.trace {
            TraceSource::File { file, n } => {
                let path = self.resolve(file);
                let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
                TrafficTrace::from_csv(&text, *n, None)?
            }
            TraceSource::Generated { generator, .. } => synth_trace(generator, self.trace_seed())?,
        })
    }

    /// SHA-256 of the canonical serialization, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "fabric": {"pods": 4, "links": 8, "ocs": 2},
        "trace": {"generator": {"kind": "random", "n": 4, "snapshots": 20}},
        "schemes": [{"topology": {"kind": "multi_tm", "k": 2}}],
        "reconfig_period": 5,
        "lookback_window": 10
    }"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(text, PathBuf::new())
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.rounding.method, RoundingMethod::Ldm);
        assert_eq!(c.rounding.iterations, DEFAULT_ITERATIONS);
        assert_eq!(c.schemes[0].routing, RoutingScheme::Ideal);
        assert_eq!(c.schemes[0].to_string(), "multi_tm(k=2)+ideal");
        assert_eq!(c.load_fabric().unwrap().n(), 4);
        assert_eq!(c.load_trace().unwrap().len(), 20);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            BASE.replace(r#"[{"topology": {"kind": "multi_tm", "k": 2}}]"#, "[]"),
            BASE.replace(r#""reconfig_period": 5"#, r#""reconfig_period": 0"#),
            BASE.replace(r#""k": 2"#, r#""k": 0"#),
            BASE.replace(r#""lookback_window": 10"#, r#""lookback_window": 10, "bogus": 1"#),
            BASE.replace(r#"{"kind": "multi_tm", "k": 2}"#, r#"{"kind": "ideal_toe"}, "routing": {"kind": "vlb"}"#),
            BASE.replace(r#"{"pods": 4, "links": 8, "ocs": 2}"#, r#""missing.json""#),
        ];
        for text in cases {
            assert!(matches!(parse(&text), Err(HarnessError::Config(_))), "{text}");
        }
    }

    #[test]
    fn duplicate_schemes_rejected() {
        let text = BASE.replace(
            r#"[{"topology": {"kind": "multi_tm", "k": 2}}]"#,
            r#"[{"topology": {"kind": "uniform_mesh"}}, {"topology": {"kind": "uniform_mesh"}, "routing": {"kind": "ideal"}}]"#,
        );
        assert!(parse(&text).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = parse(BASE).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.hash(), c.hash());
    }
}

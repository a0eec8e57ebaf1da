//! Scenario configuration (TOML).
//!
//! Every section is optional and falls back to its defaults; unknown keys are
//! rejected. See `docs/config.md` in the repository for the full schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::d2d::D2dConfig;
use crate::delivery::{CostUnits, ReplicationStrategy};
use crate::error::{Error, Result};
use crate::graph::GraphGenConfig;
use crate::popularity::PredictorConfig;
use crate::propagation::PropagationParams;
use crate::Slot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Simulated slots.
    pub horizon: Slot,
    pub graph: GraphSection,
    pub propagation: PropagationParams,
    pub videos: VideoSection,
    pub prediction: PredictionSection,
    pub delivery: DeliverySection,
    pub d2d: D2dConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            horizon: 240,
            graph: GraphSection::default(),
            propagation: PropagationParams::default(),
            videos: VideoSection::default(),
            prediction: PredictionSection::default(),
            delivery: DeliverySection::default(),
            d2d: D2dConfig::default(),
        }
    }
}

/// Edge list, user CSV and region CSV to load instead of generating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub users: PathBuf,
    pub regions: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub users: usize,
    pub regions: usize,
    pub homophily_scale_km: f64,
    pub generator: GraphGenConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub files: Option<GraphFiles>,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            users: 2000,
            regions: 10,
            homophily_scale_km: 10.0,
            generator: GraphGenConfig::default(),
            files: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoSection {
    /// Videos to schedule; arrivals falling past the horizon are dropped.
    pub count: usize,
    /// Poisson arrival rate per slot.
    pub arrival_rate: f64,
    pub size_units: u64,
}

impl Default for VideoSection {
    fn default() -> Self {
        Self { count: 500, arrival_rate: 3.0, size_units: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionSection {
    pub predictor: PredictorConfig,
    /// Popularity quantiles splitting the levels (levels = quantiles + 1).
    pub quantiles: Vec<f64>,
    /// Age at which the view-threshold baseline commits.
    pub baseline_commit_age: u32,
}

impl Default for PredictionSection {
    fn default() -> Self {
        Self { predictor: PredictorConfig::default(), quantiles: vec![0.30, 0.98], baseline_commit_age: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientMode {
    /// Use `c1`, `c2` as given.
    Fixed,
    /// Fit them on a calibration corpus before the run.
    Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeliverySection {
    pub replication: ReplicationStrategy,
    pub c1: f64,
    pub c2: f64,
    pub coefficients: CoefficientMode,
    /// Cascades simulated for the coefficient fit.
    pub calibration_videos: usize,
    /// Slots after initiation at which the calibration measures `s_prev`.
    pub calibration_window: Slot,
    pub costs: CostUnits,
    pub storage_slots: u64,
    pub bandwidth_units: u64,
    pub peer_assist: bool,
    pub peer_retention: Slot,
}

impl Default for DeliverySection {
    fn default() -> Self {
        Self {
            replication: ReplicationStrategy::InfluenceIndex,
            c1: 1.6,
            c2: 0.9,
            coefficients: CoefficientMode::Fixed,
            calibration_videos: 200,
            calibration_window: 6,
            costs: CostUnits::default(),
            storage_slots: 20,
            bandwidth_units: 50,
            peer_assist: false,
            peer_retention: 24,
        }
    }
}

impl DeliverySection {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::config("delivery.c1 must be > 0"));
        }
        if !(self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(Error::config("delivery.c2 must be > 0"));
        }
        if self.coefficients == CoefficientMode::Fit && self.calibration_videos < 2 {
            return Err(Error::config("delivery.calibration_videos must be >= 2 to fit c1/c2"));
        }
        if self.calibration_window < 1 {
            return Err(Error::config("delivery.calibration_window must be >= 1"));
        }
        let c = &self.costs;
        if [c.local_edge, c.peer, c.origin].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("delivery.costs must be finite and >= 0"));
        }
        Ok(())
    }
}

fn prefixed(section: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Config(msg) if !msg.starts_with(section) => Error::Config(format!("{section}.{msg}")),
        other => other,
    })
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let gs = &self.graph;
        if gs.files.is_none() {
            if gs.users == 0 {
                return Err(Error::config("graph.users must be >= 1"));
            }
            if gs.regions == 0 {
                return Err(Error::config("graph.regions must be >= 1"));
            }
            if !(gs.homophily_scale_km > 0.0) {
                return Err(Error::config("graph.homophily_scale_km must be > 0"));
            }
        }
        prefixed("graph", gs.generator.validate())?;
        self.propagation.validate()?;
        let v = &self.videos;
        if !(v.arrival_rate > 0.0 && v.arrival_rate.is_finite()) {
            return Err(Error::config("videos.arrival_rate must be > 0"));
        }
        if v.size_units < 1 {
            return Err(Error::config("videos.size_units must be >= 1"));
        }
        let p = &self.prediction;
        p.predictor.validate()?;
        if p.quantiles.is_empty() {
            return Err(Error::config("prediction.quantiles must not be empty"));
        }
        if p.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) || p.quantiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("prediction.quantiles must be ascending within [0,1]"));
        }
        if p.baseline_commit_age < 1 || p.baseline_commit_age > p.predictor.horizon {
            return Err(Error::config("prediction.baseline_commit_age must be in 1..=prediction.predictor.horizon"));
        }
        self.delivery.validate()?;
        self.d2d.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative graph file paths are
    /// resolved against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let (Some(files), Some(dir)) = (cfg.graph.files.as_mut(), path.parent()) {
            for p in [&mut files.edges, &mut files.users, &mut files.regions] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical))
    }

    /// Identifier shared by every log of one run.
    pub fn scenario_id(&self) -> String {
        format!("{}-{}", &self.hash()[..16], self.seed)
    }
}

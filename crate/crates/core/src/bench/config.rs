use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BenchError;
use crate::cloth::ClothParams;
use crate::garment::DrapeClassTable;
use crate::kinematics::MotionClass;
use crate::markerless::SurrogateProfile;
use crate::mesh::BuildLabel;
use crate::mocap_marker::DEFAULT_NOISE_RMS;

/// Benchmark sweep description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub motions: Vec<MotionConfig>,
    pub builds: Vec<BuildLabel>,
    pub drape_classes: Vec<u8>,
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub garment: GarmentChoice,
    /// RMS of the 3D marker noise in meters; 0 disables noise.
    #[serde(default = "default_noise")]
    pub noise_rms: f64,
    #[serde(default)]
    pub cloth: ClothParams,
    #[serde(default)]
    pub drape_table: DrapeClassTable,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
    /// Write per-cell BVH estimates, marker CSVs and garment OBJs.
    #[serde(default)]
    pub export_artifacts: bool,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_RMS
}

fn default_output() -> PathBuf {
    PathBuf::from("bench-out")
}

fn default_duration() -> f64 {
    10.0
}

fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    pub class: MotionClass,
    #[serde(default)]
    pub source: MotionSource,
    /// Seconds; BVH clips longer than this are truncated.
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Procedural sampling rate; BVH clips keep their own.
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Row label; defaults to the class name.
    #[serde(default)]
    pub name: Option<String>,
}

impl MotionConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.class.as_str().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionSource {
    #[default]
    Procedural,
    Bvh(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    MarkerBased,
    /// `path` may contain `{motion}`, `{build}` and `{drape_class}`, expanded per cell.
    MarkerlessIngest { path: String },
    MarkerlessSurrogate(SurrogateProfile),
}

impl MethodConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::MarkerBased => "marker_based",
            Self::MarkerlessIngest { .. } => "markerless_ingest",
            Self::MarkerlessSurrogate(_) => "markerless_surrogate",
        }
    }

    pub fn variants(&self) -> &'static [&'static str] {
        match self {
            Self::MarkerBased => &["all_markers", "cloth_markers"],
            _ => &["absolute", "pelvis_aligned"],
        }
    }
}

/// What the body wears in marker-based cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GarmentChoice {
    /// T-shirt and trousers generated at the same class.
    #[default]
    Pair,
    Tshirt,
    Trousers,
    Unicloth,
    /// Unclothed; every marker sits on the skin.
    None,
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.motions.is_empty() || self.builds.is_empty() || self.drape_classes.is_empty() || self.methods.is_empty()
        {
            return bad("motions, builds, drape_classes and methods must all be non-empty".into());
        }
        let mut names = BTreeSet::new();
        for m in &self.motions {
            if !names.insert(m.label()) {
                return bad(format!("duplicate motion name {:?}", m.label()));
            }
            if !(m.duration.is_finite() && m.duration > 0.0) || !(m.fps.is_finite() && m.fps > 0.0) {
                return bad(format!("motion {:?}: duration and fps must be positive", m.label()));
            }
            if m.label().contains('/') {
                return bad(format!("motion name {:?} must not contain '/'", m.label()));
            }
        }
        if self.drape_classes.iter().any(|c| !(1..=6).contains(c)) {
            return bad(format!("drape classes must be in 1..=6: {:?}", self.drape_classes));
        }
        if self.drape_classes.iter().collect::<BTreeSet<_>>().len() != self.drape_classes.len() {
            return bad("duplicate drape class".into());
        }
        if self.builds.iter().collect::<BTreeSet<_>>().len() != self.builds.len() {
            return bad("duplicate build".into());
        }
        if self.methods.iter().map(|m| m.kind()).collect::<BTreeSet<_>>().len() != self.methods.len() {
            return bad("each method kind may appear once".into());
        }
        for m in &self.methods {
            if let MethodConfig::MarkerlessSurrogate(p) = m {
                p.validate().map_err(|e| BenchError::Config(e.to_string()))?;
            }
        }
        if !(self.noise_rms.is_finite() && self.noise_rms >= 0.0) {
            return bad(format!("noise_rms must be non-negative, got {}", self.noise_rms));
        }
        self.cloth.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the parsed configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config is plain data");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

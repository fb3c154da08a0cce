use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::HdbscanConfig;
use crate::data::{PrepareConfig, DEFAULT_GAP_HOURS};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::reduce::TsneConfig;
use crate::synth::GeneratorConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: SourceKind,
    pub observations: Option<PathBuf>,
    pub demographics: Option<PathBuf>,
    /// Optional `series_id,phenotype` ground truth for ARI.
    pub labels: Option<PathBuf>,
    pub m_min: usize,
    pub gap_hours: f64,
    pub val_fraction: f64,
    pub male_fraction: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: SourceKind::Synthetic,
            observations: None,
            demographics: None,
            labels: None,
            m_min: 4,
            gap_hours: DEFAULT_GAP_HOURS,
            val_fraction: 0.2,
            male_fraction: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Baseline,
    Strats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descriptor {
    Min,
    Max,
    Mean,
}

impl Descriptor {
    pub fn name(self) -> &'static str {
        match self {
            Descriptor::Min => "min",
            Descriptor::Max => "max",
            Descriptor::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    None,
    Pca,
    Tsne,
}

impl Reduction {
    pub fn name(self) -> &'static str {
        match self {
            Reduction::None => "none",
            Reduction::Pca => "pca",
            Reduction::Tsne => "tsne",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kmeans,
    Sc,
    Gmm,
    Hdb,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kmeans, Method::Sc, Method::Gmm, Method::Hdb];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kmeans => "kmeans",
            Method::Sc => "sc",
            Method::Gmm => "gmm",
            Method::Hdb => "hdb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub kind: PipelineKind,
    pub descriptors: Vec<Descriptor>,
    pub reduction: Reduction,
    pub methods: Vec<Method>,
    pub k: usize,
    /// Report `set` column; derived from `m_min` when absent (4 -> A, 8 -> B).
    pub set: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kind: PipelineKind::Baseline,
            descriptors: vec![Descriptor::Min, Descriptor::Max, Descriptor::Mean],
            reduction: Reduction::Pca,
            methods: Method::ALL.to_vec(),
            k: 3,
            set: None,
        }
    }
}

/// Encoder sizes; the demographic input width comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub d_var: usize,
    pub d_stat: usize,
    pub blocks: usize,
    pub heads: usize,
    pub dropout: f64,
    pub max_rows: usize,
    pub time_scale_hours: f64,
    /// Train a fresh encoder; otherwise `params` must point at a saved one.
    pub train: bool,
    pub params: Option<PathBuf>,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let c = EncoderConfig::standard(1);
        Self {
            d_var: c.d_var,
            d_stat: c.d_stat,
            blocks: c.blocks,
            heads: c.heads,
            dropout: c.dropout,
            max_rows: c.max_rows,
            time_scale_hours: c.time_scale_hours,
            train: true,
            params: None,
        }
    }
}

impl EncoderSettings {
    pub fn to_config(&self, demo_width: usize) -> EncoderConfig {
        EncoderConfig {
            d_var: self.d_var,
            d_stat: self.d_stat,
            blocks: self.blocks,
            heads: self.heads,
            dropout: self.dropout,
            max_rows: self.max_rows,
            demo_width,
            time_scale_hours: self.time_scale_hours,
            ..EncoderConfig::standard(demo_width)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub synth: GeneratorConfig,
    pub pipeline: PipelineConfig,
    pub encoder: EncoderSettings,
    pub train: TrainConfig,
    pub tsne: TsneConfig,
    pub hdbscan: HdbscanConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `default` (or an empty path) yields the built-in configuration.
    pub fn load(path: &Path) -> Result<Self> {
        if path.as_os_str().is_empty() || path == Path::new("default") {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces every seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed;
        self.tsne.seed = seed;
        self
    }

    pub fn set_name(&self) -> String {
        match &self.pipeline.set {
            Some(s) => s.clone(),
            None => match self.data.m_min {
                4 => "A".into(),
                8 => "B".into(),
                m => format!("m{m}"),
            },
        }
    }

    pub fn prepare_config(&self) -> PrepareConfig {
        PrepareConfig {
            m_min: self.data.m_min,
            gap_hours: self.data.gap_hours,
            val_fraction: self.data.val_fraction,
            male_fraction: self.data.male_fraction,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        if self.data.source == SourceKind::Files && self.data.observations.is_none() {
            bad.push("data.observations is required when data.source = \"files\"".into());
        }
        if self.data.m_min == 0 {
            bad.push("data.m_min must be at least 1".into());
        }
        if !(self.data.gap_hours > 0.0) {
            bad.push("data.gap_hours must be positive".into());
        }
        if !(0.0..1.0).contains(&self.data.val_fraction) {
            bad.push("data.val_fraction must lie in [0, 1)".into());
        }
        if self.pipeline.kind == PipelineKind::Baseline && self.pipeline.descriptors.is_empty() {
            bad.push("pipeline.descriptors must not be empty for the baseline pipeline".into());
        }
        if self.pipeline.k == 0 {
            bad.push("pipeline.k must be at least 1".into());
        }
        if self.pipeline.methods.is_empty() {
            bad.push("pipeline.methods must not be empty".into());
        }
        if self.pipeline.kind == PipelineKind::Strats && !self.encoder.train && self.encoder.params.is_none() {
            bad.push("encoder.params is required when encoder.train = false".into());
        }
        if self.hdbscan.min_cluster_size < 2 {
            bad.push("hdbscan.min_cluster_size must be at least 2".into());
        }
        for r in [
            self.train.validate(),
            self.encoder.to_config(1).validate(),
        ] {
            if let Err(e) = r {
                bad.push(e.to_string());
            }
        }
        if self.data.source == SourceKind::Synthetic {
            if let Err(e) = self.synth.validate(3) {
                bad.push(e.to_string());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

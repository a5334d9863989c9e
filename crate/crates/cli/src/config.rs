//! The run configuration: one JSON document, every field optional.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use labelassign_core::evaluation::coco_thresholds;
use labelassign_core::{AnchorGridSpec, EvalParams, MatchingConfig, SceneSpec, TrajectoryConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyChoice {
    Static,
    L2c,
    C2l,
    Mutual,
    Fcos,
    FcosMutual,
}

impl StrategyChoice {
    pub fn name(self) -> &'static str {
        match self {
            StrategyChoice::Static => "static",
            StrategyChoice::L2c => "l2c",
            StrategyChoice::C2l => "c2l",
            StrategyChoice::Mutual => "mutual",
            StrategyChoice::Fcos => "fcos",
            StrategyChoice::FcosMutual => "fcos-mutual",
        }
    }

    pub fn uses_points(self) -> bool {
        matches!(self, StrategyChoice::Fcos | StrategyChoice::FcosMutual)
    }

    /// The label set every strategy is compared against.
    pub fn baseline(self) -> StrategyChoice {
        if self.uses_points() {
            StrategyChoice::Fcos
        } else {
            StrategyChoice::Static
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Defaults to 0.50:0.05:0.95.
    pub iou_thresholds: Option<Vec<f64>>,
    pub max_detections: Option<usize>,
    pub area_bands: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { iou_thresholds: None, max_detections: Some(100), area_bands: false }
    }
}

impl EvalSettings {
    pub fn params(&self) -> EvalParams {
        EvalParams {
            iou_thresholds: self.iou_thresholds.clone().unwrap_or_else(coco_thresholds),
            max_detections: self.max_detections,
            area_bands: self.area_bands,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: AnchorGridSpec,
    pub matching: MatchingConfig,
    pub annotations: Option<PathBuf>,
    pub synthetic: bool,
    pub scene: SceneSpec,
    /// Synthetic scenes to generate; scene `k` uses seed `scene.seed + k`.
    pub scenes: usize,
    pub trajectory: TrajectoryConfig,
    /// Training progress at which `assign` simulates predictions.
    pub progress: f64,
    /// FCOS centre-sampling radius in strides; `None` samples the whole box.
    pub center_sampling: Option<f64>,
    pub strategy: StrategyChoice,
    pub out: PathBuf,
    pub svg: bool,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: AnchorGridSpec::default(),
            matching: MatchingConfig::default(),
            annotations: None,
            synthetic: false,
            scene: SceneSpec::default(),
            scenes: 1,
            trajectory: TrajectoryConfig::default(),
            progress: 0.5,
            center_sampling: None,
            strategy: StrategyChoice::Mutual,
            out: PathBuf::from("out"),
            svg: false,
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match (&self.annotations, self.synthetic) {
            (Some(_), true) => bail!("choose either an annotation file or synthetic scenes, not both"),
            (None, false) => bail!("no input: pass --annotations <path> or --synthetic"),
            (Some(p), false) if !p.is_file() => bail!("annotation file {} does not exist", p.display()),
            _ => {}
        }
        self.grid.validate()?;
        self.matching.validate()?;
        self.trajectory.validate()?;
        if self.synthetic {
            self.scene.validate()?;
            if self.scenes == 0 {
                bail!("scenes must be at least 1");
            }
        }
        if !(0.0..=1.0).contains(&self.progress) {
            bail!("progress {} outside [0, 1]", self.progress);
        }
        if let Some(r) = self.center_sampling {
            if !(r.is_finite() && r > 0.0) {
                bail!("center_sampling radius must be positive, got {r}");
            }
        }
        Ok(())
    }
}

//! Experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use fracheat::control::Regularity;
use fracheat::fracops::MatrixFormat;
use fracheat::{
    ControlConfig, Equation, Grid, OptimizerSettings, Region, RegionPartition, RegionSpec, SmallnessConfig,
    StripConfig, TargetProfile, TimeGrid,
};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub grid: GridBlock,
    #[serde(default)]
    pub time: TimeBlock,
    pub operator: OperatorBlock,
    #[serde(default)]
    pub regions: Option<RegionsBlock>,
    #[serde(default)]
    pub target: Option<TargetBlock>,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub extension: Option<ExtensionBlock>,
    #[serde(default)]
    pub gramian: GramianBlock,
    #[serde(default)]
    pub smallness: SmallnessBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "one")]
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub steps: usize,
}

impl Default for TimeBlock {
    fn default() -> Self {
        Self { steps: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    pub s: f64,
    #[serde(default)]
    pub equation: Equation,
    #[serde(default = "implicit")]
    pub theta: f64,
    /// Dump the assembled matrix in this format (`operator` only).
    #[serde(default)]
    pub dump: Option<MatrixFormat>,
}

fn implicit() -> f64 {
    1.0
}

/// Control region: intervals in 1D, rectangles `[[x0, x1], [y0, y1]]` in 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsBlock {
    #[serde(default)]
    pub control: Vec<[f64; 2]>,
    #[serde(default)]
    pub rects: Vec<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetBlock {
    #[serde(default)]
    pub profile: Option<TargetProfile>,
    /// Field in the format of `SpaceTimeField::write_csv`, relative to the
    /// config file.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub epsilon_list: Option<Vec<f64>>,
    /// Read ε values as multiples of `‖h‖`.
    #[serde(default)]
    pub relative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtensionBlock {
    pub lateral: f64,
    pub height: f64,
    pub levels: usize,
    pub grading: Option<f64>,
    pub first_level: f64,
    /// Heights for the smallness and auxiliary-functional diagnostics.
    pub deltas: Vec<f64>,
    pub ell: f64,
    pub cs: Option<f64>,
    /// Fit `c_s` against the FFT reference instead of using the closed form.
    pub calibrate: bool,
}

impl Default for ExtensionBlock {
    fn default() -> Self {
        let s = StripConfig::default();
        Self {
            lateral: s.lateral,
            height: s.height,
            levels: s.levels,
            grading: s.grading,
            first_level: s.first_level,
            deltas: vec![0.4, 0.2, 0.1, 0.05],
            ell: 0.5,
            cs: None,
            calibrate: false,
        }
    }
}

impl ExtensionBlock {
    pub fn strip(&self) -> StripConfig {
        StripConfig {
            lateral: self.lateral,
            height: self.height,
            levels: self.levels,
            grading: self.grading,
            first_level: self.first_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GramianBlock {
    pub budget: usize,
}

impl Default for GramianBlock {
    fn default() -> Self {
        Self { budget: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmallnessBlock {
    pub draws: usize,
    pub modes: usize,
    pub prefactor_cap: f64,
}

impl Default for SmallnessBlock {
    fn default() -> Self {
        Self {
            draws: 10,
            modes: 3,
            prefactor_cap: 100.0,
        }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let config: Self =
            toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    pub fn grid(&self) -> Result<Grid, Failure> {
        let g = &self.grid;
        Grid::new(g.dim, g.half_width, g.points).map_err(|e| config_error(format!("grid: {e}")))
    }

    pub fn time_grid(&self) -> Result<TimeGrid, Failure> {
        TimeGrid::new(self.time.steps).map_err(|e| config_error(format!("time.steps: {e}")))
    }

    pub fn check_order(&self) -> Result<(), Failure> {
        let s = self.operator.s;
        if !(s > 0.0 && s < 1.0) {
            return Err(config_error(format!("operator.s must lie in (0, 1), got {s}")));
        }
        if !(self.operator.theta >= 0.5 && self.operator.theta <= 1.0) {
            return Err(config_error(format!(
                "operator.theta must lie in [1/2, 1], got {}",
                self.operator.theta
            )));
        }
        Ok(())
    }

    pub fn partition(&self, grid: &Grid) -> Result<RegionPartition, Failure> {
        let r = self
            .regions
            .as_ref()
            .ok_or_else(|| config_error("[regions] is required for this command"))?;
        let mut parts: Vec<Region> = r.control.iter().map(|c| Region::interval(c[0], c[1])).collect();
        parts.extend(r.rects.iter().map(|q| Region::rect(q[0], q[1])));
        if parts.is_empty() {
            return Err(config_error("regions: no control component given"));
        }
        RegionPartition::new(grid, &RegionSpec::new(parts)).map_err(|e| config_error(format!("regions: {e}")))
    }

    pub fn target(&self) -> Result<&TargetBlock, Failure> {
        self.target
            .as_ref()
            .ok_or_else(|| config_error("[target] is required for this command"))
    }

    /// Rejects targets whose regularity does not suit the equation before
    /// any compute.
    pub fn check_target_kind(&self) -> Result<(), Failure> {
        let t = self.target()?;
        match (t.profile, &t.csv) {
            (Some(_), Some(_)) => return Err(config_error("target: give either `profile` or `csv`, not both")),
            (None, None) => return Err(config_error("target: one of `profile` or `csv` is required")),
            _ => {}
        }
        if let Some(p) = t.profile {
            if self.operator.equation == Equation::Wave && p.regularity() == Regularity::H1 {
                return Err(config_error(
                    "target.profile: the wave equation needs a target vanishing to second order (H²₀), use `h2_bump`",
                ));
            }
        }
        Ok(())
    }

    pub fn control_config(&self, epsilon: f64) -> ControlConfig {
        ControlConfig {
            equation: self.operator.equation,
            epsilon,
            theta: self.operator.theta,
            optimizer: self.optimizer,
            seed: self.seed,
        }
    }

    pub fn extension(&self) -> ExtensionBlock {
        self.extension.clone().unwrap_or_default()
    }

    pub fn smallness_config(&self) -> SmallnessConfig {
        let e = self.extension();
        SmallnessConfig {
            strip: e.strip(),
            cs: e.cs,
            theta: self.operator.theta,
            prefactor_cap: self.smallness.prefactor_cap,
            ..SmallnessConfig::default()
        }
    }
}

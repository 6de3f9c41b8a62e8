//! Run configuration.
//!
//! The file is flat `section.key = value` text, which is also valid TOML with
//! dotted keys. Unknown keys are rejected. Relative paths are resolved
//! against the directory holding the configuration file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::akf::AkfConfig;
use crate::error::{Error, Result};
use crate::mfac::ControllerWeights;
use crate::world::{EffectorPose, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub weights: ControllerWeights,
    /// Per-component bound on the command `(dx, dy, dtheta)`.
    pub u_max: [f64; 3],
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            weights: ControllerWeights::default(),
            u_max: [0.005, 0.005, 0.01],
        }
    }
}

impl ControlConfig {
    pub fn limit(&self) -> Vector3<f64> {
        Vector3::from(self.u_max)
    }
}

/// Where the target feature comes from. At most one field may be set; with
/// neither, the default target pose is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    /// Target gripper pose, rendered through the noise-free world.
    pub pose: Option<[f64; 3]>,
    /// Explicit target feature vector.
    pub feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Pose(EffectorPose),
    Feature(DVector<f64>),
}

pub const DEFAULT_START_POSE: [f64; 3] = [0.45, 0.0, 0.0];
pub const DEFAULT_TARGET_POSE: [f64; 3] = [0.34, 0.12, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub start_pose: [f64; 3],
    pub max_steps: usize,
    /// Stop once the deformation error falls below this value.
    pub stop_tol: f64,
    /// Seeds the observation-noise generator; overrides `world.seed`.
    pub seed: u64,
    pub log_path: PathBuf,
    pub feature_model_path: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            start_pose: DEFAULT_START_POSE,
            max_steps: 200,
            stop_tol: 1e-3,
            seed: 0,
            log_path: PathBuf::from("run.csv"),
            feature_model_path: PathBuf::from("feature_model.txt"),
        }
    }
}

/// Parameter grid for `sweep`; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub weights: Vec<ControllerWeights>,
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub akf: AkfConfig,
    pub control: ControlConfig,
    pub target: TargetConfig,
    pub run: RunSection,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a configuration file and resolves its relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        for p in [&mut self.run.log_path, &mut self.run.feature_model_path] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.akf.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.run.max_steps < 1 {
            return bad("run.max_steps must be at least 1".into());
        }
        if !(self.run.stop_tol > 0.0) {
            return bad("run.stop_tol must be positive".into());
        }
        if self.control.u_max.iter().any(|u| !(*u > 0.0)) {
            return bad(format!("control.u_max must be positive, got {:?}", self.control.u_max));
        }
        if !self.world.workspace.contains(&self.start_pose()) {
            return bad("run.start_pose lies outside the workspace".into());
        }
        self.target_spec()?;
        Ok(())
    }

    pub fn start_pose(&self) -> EffectorPose {
        let [x, y, t] = self.run.start_pose;
        EffectorPose::new(x, y, t)
    }

    pub fn target_spec(&self) -> Result<TargetSpec> {
        match (&self.target.pose, &self.target.feature) {
            (pose, None) => {
                let [x, y, t] = pose.unwrap_or(DEFAULT_TARGET_POSE);
                let pose = EffectorPose::new(x, y, t);
                if !self.world.workspace.contains(&pose) {
                    return Err(Error::InvalidConfig("target.pose lies outside the workspace".into()));
                }
                Ok(TargetSpec::Pose(pose))
            }
            (None, Some(f)) => Ok(TargetSpec::Feature(DVector::from_column_slice(f))),
            (Some(_), Some(_)) => Err(Error::InvalidConfig(
                "target.pose and target.feature are mutually exclusive".into(),
            )),
        }
    }

    /// The configuration as flat `section.key = value` lines.
    pub fn to_flat_string(&self) -> String {
        let mut without_sweep = self.clone();
        without_sweep.sweep = SweepConfig::default();
        let value = toml::Value::try_from(&without_sweep).expect("config serializes");
        let mut out = String::new();
        flatten("", &value, &mut out);
        out
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        // Empty sweep lists and the like carry no information.
        toml::Value::Array(a) if a.is_empty() => {}
        other => {
            writeln!(out, "{prefix} = {other}").unwrap();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn flat_keys_parse() {
        let c = RunConfig::from_toml_str(
            "run.max_steps = 50\nakf.c0 = 1.4\ncontrol.u_max = [0.01, 0.01, 0.02]\nworld.workspace.x_min = 0.1\n",
        )
        .unwrap();
        assert_eq!(c.run.max_steps, 50);
        assert_eq!(c.akf.c0, 1.4);
        assert_eq!(c.control.u_max, [0.01, 0.01, 0.02]);
        assert_eq!(c.world.workspace.x_min, 0.1);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::from_toml_str("akf.c00 = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("c00"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml_str("run.max_steps = 0").is_err());
        assert!(RunConfig::from_toml_str("run.stop_tol = 0.0").is_err());
        assert!(RunConfig::from_toml_str("control.u_max = [0.1, 0.0, 0.1]").is_err());
        assert!(RunConfig::from_toml_str("control.weights = [0, 0, 0, 0, 0, 0, 0]").is_err());
        assert!(RunConfig::from_toml_str("target.feature = [1.0]\ntarget.pose = [0.4, 0.0, 0.0]").is_err());
        assert!(RunConfig::from_toml_str("target.pose = [2.0, 0.0, 0.0]").is_err());
    }

    #[test]
    fn target_forms() {
        let c = RunConfig::default();
        let [x, y, t] = DEFAULT_TARGET_POSE;
        assert_eq!(c.target_spec().unwrap(), TargetSpec::Pose(EffectorPose::new(x, y, t)));
        let c = RunConfig::from_toml_str("target.feature = [1.0, 2.0]").unwrap();
        assert_eq!(c.target_spec().unwrap(), TargetSpec::Feature(DVector::from_vec(vec![1.0, 2.0])));
    }

    #[test]
    fn weights_are_normalized_on_load() {
        let c = RunConfig::from_toml_str("control.weights = [6, 0, 1, 1, 0, 1, 1]").unwrap();
        assert_eq!(c.control.weights, ControllerWeights::default());
    }

    #[test]
    fn flat_echo_parses_back() {
        let mut c = RunConfig::default();
        c.akf.c1 = 6.5;
        c.run.seed = 99;
        let text = c.to_flat_string();
        assert!(text.contains("akf.c1 = 6.5"), "{text}");
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let mut c = RunConfig::default();
        c.resolve_paths(Path::new("/tmp/exp"));
        assert_eq!(c.run.log_path, PathBuf::from("/tmp/exp/run.csv"));
    }
}

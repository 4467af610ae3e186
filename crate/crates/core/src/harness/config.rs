//! Experiment configuration: one TOML file, overridable key by key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sim::RunSettings;
use super::HarnessError;
use crate::behmap::DatasetOptions;
use crate::neural::{AeConfig, TrainConfig};
use crate::worldmap::DEFAULT_CLEARANCE;

/// Default artefact directory when neither the file nor a flag names one.
pub const ARTEFACT_DIR_ENV: &str = "SHAREDWALK_ARTEFACTS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Where the pipeline verbs read and write their files.
    pub artefact_dir: PathBuf,
    /// Where `run` writes telemetry and the report.
    pub output_dir: PathBuf,
    /// Built-in map name (`cross`, `two_rooms`, `empty`) or a map `.yaml`.
    pub map: String,
    pub roadmap: RoadmapSettings,
    pub synth: SynthSettings,
    pub train: TrainSettings,
    pub run: RunSettings,
    /// Telemetry whose human inputs a `replay` run plays back.
    pub replay: Option<PathBuf>,
    pub files: FileOverrides,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            artefact_dir: std::env::var_os(ARTEFACT_DIR_ENV)
                .map_or_else(|| PathBuf::from("artefacts"), PathBuf::from),
            output_dir: PathBuf::from("runs/latest"),
            map: "cross".into(),
            roadmap: RoadmapSettings::default(),
            synth: SynthSettings::default(),
            train: TrainSettings::default(),
            run: RunSettings::default(),
            replay: None,
            files: FileOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadmapSettings {
    pub seed: u64,
    pub clearance: f64,
}

impl Default for RoadmapSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            clearance: DEFAULT_CLEARANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub paths: usize,
    pub seed: u64,
    pub dataset: DatasetOptions,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            paths: 1800,
            seed: 1,
            dataset: DatasetOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct TrainSettings {
    pub model: AeConfig,
    pub autoencoder: TrainConfig,
    pub classifier: TrainConfig,
}

/// Explicit file locations; unset ones live in the artefact directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileOverrides {
    pub roadmap: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub autoencoder: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub behmap: Option<PathBuf>,
}

/// Resolved artefact locations.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtefactPaths {
    pub roadmap: PathBuf,
    pub trajectories: PathBuf,
    pub dataset: PathBuf,
    pub autoencoder: PathBuf,
    pub classifier: PathBuf,
    pub training: PathBuf,
    pub behmap: PathBuf,
    pub behmap_csv: PathBuf,
}

impl ExperimentConfig {
    /// Reads `path` (defaults when `None`), then applies `key=value`
    /// overrides with dotted keys, e.g. `run.policy.kind=rough`. Values are
    /// parsed as TOML and fall back to plain strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut table: toml::Table = match path {
            Some(p) => toml::from_str(&fs::read_to_string(p)?)?,
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("override `{o}` is not key=value")))?;
            set_dotted(&mut table, key.trim(), parse_value(value.trim()))?;
        }
        let cfg: Self = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.run.dt > 0.0) {
            return bad(format!("run.dt must be positive, got {}", self.run.dt));
        }
        if !(self.run.duration > 0.0) {
            return bad(format!(
                "run.duration must be positive, got {}",
                self.run.duration
            ));
        }
        if self.synth.paths == 0 {
            return bad("synth.paths must be at least 1".into());
        }
        if self.synth.dataset.window != self.train.model.window {
            return bad(format!(
                "synth.dataset.window ({}) differs from train.model.window ({})",
                self.synth.dataset.window, self.train.model.window
            ));
        }
        Ok(())
    }

    pub fn paths(&self) -> ArtefactPaths {
        let d = &self.artefact_dir;
        let f = &self.files;
        let pick = |o: &Option<PathBuf>, name: &str| o.clone().unwrap_or_else(|| d.join(name));
        ArtefactPaths {
            roadmap: pick(&f.roadmap, "roadmap.json"),
            trajectories: pick(&f.trajectories, "trajectories.json"),
            dataset: pick(&f.dataset, "dataset.json"),
            autoencoder: pick(&f.autoencoder, "autoencoder.json"),
            classifier: pick(&f.classifier, "classifier.json"),
            training: d.join("training.json"),
            behmap: pick(&f.behmap, "behmap.json"),
            behmap_csv: d.join("behmap.csv"),
        }
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), HarnessError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| HarnessError::Config(format!("empty key in `{key}`")))?;
    let mut t = table;
    for p in parts {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

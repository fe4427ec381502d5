//! Flat TOML configuration. One file carries scene, pipeline, evaluation
//! and ablation keys side by side; unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! box_jitter = 2.0
//! duplicates = 2
//! alpha = 1.0
//! temporal_thresholds = [0.25, 0.5, 0.75]
//! sweep_alpha = [0.5, 1.0, 2.0]
//! ```

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::pipeline::{Mode, PipelineConfig};
use crate::scoring::FusionParams;
use crate::simulator::SceneConfig;

/// Pipeline keys. The class count comes from the data, not the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub r_null: f64,
    pub nms_iou: f64,
    pub edge_min_iou: f64,
    pub max_inactive: u32,
    pub min_output_score: f64,
    pub min_tracklet_length: usize,
    pub spawn_min_fg: Option<f64>,
    pub proposal_min_fg: Option<f64>,
}

const OPTIONAL_PIPELINE_KEYS: [&str; 2] = ["spawn_min_fg", "proposal_min_fg"];

impl Default for PipelineSettings {
    fn default() -> Self {
        let f = FusionParams::default();
        let p = PipelineConfig::default();
        Self {
            alpha: f.alpha,
            beta: f.beta,
            gamma: f.gamma,
            eta: f.eta,
            r_null: f.r_null,
            nms_iou: f.nms_iou,
            edge_min_iou: f.edge_min_iou,
            max_inactive: p.max_inactive,
            min_output_score: p.min_output_score,
            min_tracklet_length: p.min_tracklet_length,
            spawn_min_fg: None,
            proposal_min_fg: None,
        }
    }
}

impl PipelineSettings {
    pub fn fusion(&self, num_classes: usize) -> FusionParams {
        FusionParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            eta: self.eta,
            r_null: self.r_null,
            num_classes,
            nms_iou: self.nms_iou,
            edge_min_iou: self.edge_min_iou,
        }
    }

    /// Builds a validated pipeline config. The proposal filter is only
    /// carried into integrated mode.
    pub fn to_pipeline(
        &self,
        mode: Mode,
        propagate: bool,
        rescore: bool,
        num_classes: usize,
    ) -> Result<PipelineConfig> {
        let c = PipelineConfig {
            fusion: self.fusion(num_classes),
            mode,
            propagate_boxes: propagate,
            rescore_boxes: rescore,
            max_inactive: self.max_inactive,
            min_output_score: self.min_output_score,
            min_tracklet_length: self.min_tracklet_length,
            spawn_min_fg: self.spawn_min_fg,
            proposal_min_fg: match mode {
                Mode::Integrated => self.proposal_min_fg,
                Mode::Sequential => None,
            },
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSettings {
    /// Number of scenes; scene `k` uses seed `seed + k`.
    pub num_seeds: u64,
    pub sweep_alpha: Option<Vec<f64>>,
    pub sweep_beta: Option<Vec<f64>>,
    pub sweep_gamma: Option<Vec<f64>>,
    pub sweep_eta: Option<Vec<f64>>,
    pub sweep_r_null: Option<Vec<f64>>,
}

const OPTIONAL_ABLATE_KEYS: [&str; 5] = [
    "sweep_alpha",
    "sweep_beta",
    "sweep_gamma",
    "sweep_eta",
    "sweep_r_null",
];

impl Default for AblateSettings {
    fn default() -> Self {
        Self {
            num_seeds: 1,
            sweep_alpha: None,
            sweep_beta: None,
            sweep_gamma: None,
            sweep_eta: None,
            sweep_r_null: None,
        }
    }
}

impl AblateSettings {
    /// `(parameter name, values)` for every configured sweep.
    pub fn sweeps(&self) -> Vec<(&'static str, &[f64])> {
        [
            ("alpha", &self.sweep_alpha),
            ("beta", &self.sweep_beta),
            ("gamma", &self.sweep_gamma),
            ("eta", &self.sweep_eta),
            ("r_null", &self.sweep_r_null),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.as_deref().map(|v| (n, v)))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_seeds == 0 {
            return Err(Error::InvalidConfig("num_seeds must be >= 1".into()));
        }
        for (name, values) in self.sweeps() {
            if values.is_empty() {
                return Err(Error::InvalidConfig(format!("sweep_{name} is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub scene: SceneConfig,
    pub pipeline: PipelineSettings,
    pub eval: EvalConfig,
    pub ablate: AblateSettings,
}

fn keys_of<T: Serialize + Default>(extra: &[&str]) -> Vec<String> {
    let table = toml::Table::try_from(T::default()).expect("defaults serialize to a table");
    table
        .keys()
        .cloned()
        .chain(extra.iter().map(|s| s.to_string()))
        .collect()
}

fn section<T: DeserializeOwned>(all: &toml::Table, keys: &[String]) -> Result<T> {
    let sub: toml::Table = all
        .iter()
        .filter(|(k, _)| keys.contains(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    toml::Value::Table(sub)
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let all: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        let scene_keys = keys_of::<SceneConfig>(&[]);
        let pipeline_keys = keys_of::<PipelineSettings>(&OPTIONAL_PIPELINE_KEYS);
        let eval_keys = keys_of::<EvalConfig>(&[]);
        let ablate_keys = keys_of::<AblateSettings>(&OPTIONAL_ABLATE_KEYS);
        if let Some(k) = all.keys().find(|k| {
            ![&scene_keys, &pipeline_keys, &eval_keys, &ablate_keys]
                .iter()
                .any(|ks| ks.contains(k))
        }) {
            return Err(Error::InvalidConfig(format!("unknown config key `{k}`")));
        }
        let c = Self {
            scene: section(&all, &scene_keys)?,
            pipeline: section(&all, &pipeline_keys)?,
            eval: section(&all, &eval_keys)?,
            ablate: section(&all, &ablate_keys)?,
        };
        c.scene.validate()?;
        c.eval.validate()?;
        c.ablate.validate()?;
        c.pipeline
            .to_pipeline(Mode::Integrated, false, false, c.scene.num_classes)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.pipeline.gamma, 8.0);
        assert_eq!(c.pipeline.r_null, 0.3);
    }

    #[test]
    fn keys_route_to_sections() {
        let c = Config::parse(
            "seed = 4\nbox_jitter = 2\nalpha = 2.0\nproposal_min_fg = 0.1\n\
             temporal_thresholds = [0.5]\nsweep_gamma = [4, 8]\nnum_seeds = 3\n",
        )
        .unwrap();
        assert_eq!(c.scene.seed, 4);
        assert_eq!(c.scene.box_jitter, 2.0);
        assert_eq!(c.pipeline.alpha, 2.0);
        assert_eq!(c.pipeline.proposal_min_fg, Some(0.1));
        assert_eq!(c.eval.temporal_thresholds, vec![0.5]);
        assert_eq!(c.ablate.sweeps(), vec![("gamma", &[4.0, 8.0][..])]);
        assert_eq!(c.ablate.num_seeds, 3);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            Config::parse("jiter = 1"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            Config::parse("sweep_alpha = []"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            Config::parse("alpha = -1"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            Config::parse("box_jitter = \"x\""),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(Config::parse("= ="), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn proposal_filter_dropped_in_sequential() {
        let s = PipelineSettings {
            proposal_min_fg: Some(0.2),
            ..Default::default()
        };
        let p = s.to_pipeline(Mode::Sequential, true, false, 3).unwrap();
        assert_eq!(p.proposal_min_fg, None);
        assert!(s.to_pipeline(Mode::Integrated, true, false, 3).is_err());
    }
}

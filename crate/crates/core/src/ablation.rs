//! Component ablation and hyper-parameter sweeps over seeded scenes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, PipelineSettings};
use crate::error::Result;
use crate::evaluation::{evaluate, gt_tracklets, EvalConfig, EvalReport, StabilityReport};
use crate::pipeline::{run, Mode, PipelineConfig};
use crate::simulator::{generate, MotionSpeed, SceneConfig};

/// Proposal filter threshold used by the full integrated variant when the
/// config does not set one.
pub const DEFAULT_PROPOSAL_MIN_FG: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Variant {
    Baseline,
    Propagate,
    Rescore,
    IntegratedSecondStage,
    Integrated,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::Propagate,
        Variant::Rescore,
        Variant::IntegratedSecondStage,
        Variant::Integrated,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Baseline => "sequential baseline",
            Variant::Propagate => "+propagate",
            Variant::Rescore => "++rescore",
            Variant::IntegratedSecondStage => "integrated, scores only",
            Variant::Integrated => "integrated",
        }
    }

    pub fn pipeline(&self, s: &PipelineSettings, num_classes: usize) -> Result<PipelineConfig> {
        match self {
            Variant::Baseline => s.to_pipeline(Mode::Sequential, false, false, num_classes),
            Variant::Propagate => s.to_pipeline(Mode::Sequential, true, false, num_classes),
            Variant::Rescore => s.to_pipeline(Mode::Sequential, true, true, num_classes),
            Variant::IntegratedSecondStage => {
                let s = PipelineSettings {
                    proposal_min_fg: None,
                    ..s.clone()
                };
                s.to_pipeline(Mode::Integrated, false, false, num_classes)
            }
            Variant::Integrated => {
                let s = PipelineSettings {
                    proposal_min_fg: Some(s.proposal_min_fg.unwrap_or(DEFAULT_PROPOSAL_MIN_FG)),
                    ..s.clone()
                };
                s.to_pipeline(Mode::Integrated, false, false, num_classes)
            }
        }
    }
}

/// Simulates `scene`, runs `pipeline`, and evaluates against the scene's
/// ground truth.
pub fn run_scene(
    scene: &SceneConfig,
    pipeline: &PipelineConfig,
    eval: &EvalConfig,
) -> Result<EvalReport> {
    let seq = generate(scene)?;
    let out = run(&seq.frames, pipeline)?;
    let gt = gt_tracklets(&seq.frames)?;
    evaluate(&out.rows(pipeline), &gt, eval)
}

/// Metrics averaged over seeds. Split entries average only the seeds on
/// which the split is non-empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanMetrics {
    pub map_det: f64,
    pub map_track: f64,
    pub map_track_split: BTreeMap<MotionSpeed, Option<f64>>,
    pub stability: StabilityReport,
    pub stability_split: BTreeMap<MotionSpeed, Option<StabilityReport>>,
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn mean_stability<'a>(
    v: impl Iterator<Item = &'a StabilityReport> + Clone,
) -> Option<StabilityReport> {
    Some(StabilityReport {
        fragment_error: mean_of(v.clone().map(|s| s.fragment_error))?,
        center_error: mean_of(v.clone().map(|s| s.center_error))?,
        aspect_error: mean_of(v.map(|s| s.aspect_error))?,
    })
}

pub fn mean_metrics(reports: &[EvalReport]) -> MeanMetrics {
    let mut map_track_split = BTreeMap::new();
    let mut stability_split = BTreeMap::new();
    for s in MotionSpeed::ALL {
        let split = || reports.iter().filter_map(move |r| r.splits.get(&s));
        map_track_split.insert(s, mean_of(split().filter_map(|r| r.map_track)));
        let stabs: Vec<StabilityReport> = split().filter_map(|r| r.stability).collect();
        stability_split.insert(s, mean_stability(stabs.iter()));
    }
    MeanMetrics {
        map_det: mean_of(reports.iter().map(|r| r.map_det)).unwrap_or(0.0),
        map_track: mean_of(reports.iter().map(|r| r.map_track)).unwrap_or(0.0),
        map_track_split,
        stability: mean_stability(reports.iter().map(|r| &r.stability)).unwrap_or_default(),
        stability_split,
    }
}

/// Runs one pipeline over `num_seeds` scenes (seeds `scene.seed + k`) in
/// parallel. The result does not depend on the thread count.
pub fn run_seeds(
    scene: &SceneConfig,
    pipeline: &PipelineConfig,
    eval: &EvalConfig,
    num_seeds: u64,
) -> Result<Vec<EvalReport>> {
    (0..num_seeds)
        .into_par_iter()
        .map(|k| {
            let sc = SceneConfig {
                seed: scene.seed.wrapping_add(k),
                ..scene.clone()
            };
            run_scene(&sc, pipeline, eval)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub metrics: MeanMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub components: Vec<AblationRow>,
    /// Parameter name to one integrated-mode row per swept value.
    pub sweeps: Vec<(String, Vec<AblationRow>)>,
}

pub fn ablate(config: &Config) -> Result<AblationReport> {
    config.ablate.validate()?;
    let c = config.scene.num_classes;
    let n = config.ablate.num_seeds;
    let components = Variant::ALL
        .iter()
        .map(|v| {
            let p = v.pipeline(&config.pipeline, c)?;
            let reports = run_seeds(&config.scene, &p, &config.eval, n)?;
            Ok(AblationRow {
                label: v.label().to_string(),
                metrics: mean_metrics(&reports),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sweeps = Vec::new();
    for (name, values) in config.ablate.sweeps() {
        let rows = values
            .iter()
            .map(|&value| {
                let mut s = config.pipeline.clone();
                match name {
                    "alpha" => s.alpha = value,
                    "beta" => s.beta = value,
                    "gamma" => s.gamma = value,
                    "eta" => s.eta = value,
                    "r_null" => s.r_null = value,
                    _ => unreachable!("sweep names are fixed"),
                }
                let p = Variant::Integrated.pipeline(&s, c)?;
                let reports = run_seeds(&config.scene, &p, &config.eval, n)?;
                Ok(AblationRow {
                    label: format!("{name}={value}"),
                    metrics: mean_metrics(&reports),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sweeps.push((name.to_string(), rows));
    }
    Ok(AblationReport { components, sweeps })
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", 100.0 * x));
        let header = format!(
            "{:<24} {:>8} {:>10} {:>6} {:>6} {:>6} {:>9} {:>8} {:>8} {:>9}\n",
            "",
            "mAP^det",
            "mAP^track",
            "slow",
            "medium",
            "fast",
            "fragment",
            "center",
            "aspect",
            "frag.fast"
        );
        let line = |r: &AblationRow| {
            let m = &r.metrics;
            let split = |s| m.map_track_split.get(&s).copied().flatten();
            let fast_frag = m
                .stability_split
                .get(&MotionSpeed::Fast)
                .copied()
                .flatten()
                .map(|s| s.fragment_error);
            format!(
                "{:<24} {:>8} {:>10} {:>6} {:>6} {:>6} {:>9.4} {:>8.4} {:>8.4} {:>9}\n",
                r.label,
                pct(Some(m.map_det)),
                pct(Some(m.map_track)),
                pct(split(MotionSpeed::Slow)),
                pct(split(MotionSpeed::Medium)),
                pct(split(MotionSpeed::Fast)),
                m.stability.fragment_error,
                m.stability.center_error,
                m.stability.aspect_error,
                fast_frag.map_or("-".to_string(), |f| format!("{f:.4}")),
            )
        };
        let mut out = header.clone();
        for r in &self.components {
            out.push_str(&line(r));
        }
        for (name, rows) in &self.sweeps {
            out.push_str(&format!("\nsweep {name} (integrated)\n"));
            out.push_str(&header);
            for r in rows {
                out.push_str(&line(r));
            }
        }
        out
    }
}

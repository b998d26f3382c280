//! Loss-by-seed sweeps over a shared scene.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::AdamSettings;
use super::scene::SceneSpec;
use super::train::{optimize, LossSpec, TrainConfig, DEFAULT_COARSE_FACTOR, DEFAULT_LEARNING_RATE};
use crate::error::{Error, Result};
use crate::losses::BoundaryKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub loss: LossSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scene: SceneSpec,
    #[serde(default = "default_coarse_factor")]
    pub coarse_factor: usize,
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub optimizer: AdamSettings,
    pub variants: Vec<Variant>,
}

fn default_coarse_factor() -> usize {
    DEFAULT_COARSE_FACTOR
}

fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}

fn default_seeds() -> Vec<u64> {
    vec![super::train::DEFAULT_SEED]
}

impl ExperimentConfig {
    pub fn train_config(&self, variant: &Variant, seed: u64) -> TrainConfig {
        TrainConfig {
            scene: self.scene.clone(),
            coarse_factor: self.coarse_factor,
            loss: variant.loss,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub variant: String,
    pub seed: u64,
    pub dice: Option<f64>,
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
    pub final_loss: Option<f64>,
    pub error: Option<String>,
}

/// Medians over seeds; undefined distances rank above every defined one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: String,
    pub runs: usize,
    pub median_dice: Option<f64>,
    pub median_hd95: Option<f64>,
    pub median_asd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceVsRegion {
    pub surface_variant: String,
    pub baseline_variant: String,
    pub surface_median_hd95: Option<f64>,
    pub baseline_median_hd95: Option<f64>,
    /// Whether the surface-loss median HD95 is at most the baseline's.
    pub surface_hd95_le_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<Row>,
    pub summaries: Vec<Summary>,
    pub surface_vs_region: Option<SurfaceVsRegion>,
}

impl ExperimentTable {
    pub fn summary(&self, variant: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }
}

/// Median where `None` sorts last (treated as +inf).
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    let mid = if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    };
    mid.is_finite().then_some(mid)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTable> {
    if config.variants.is_empty() || config.seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "an experiment needs at least one variant and one seed".into(),
        ));
    }
    let cells: Vec<(&Variant, u64)> = config
        .variants
        .iter()
        .flat_map(|v| config.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows: Vec<Row> = cells
        .par_iter()
        .map(|&(variant, seed)| {
            let mut row = Row {
                variant: variant.name.clone(),
                seed,
                dice: None,
                hd95: None,
                asd: None,
                final_loss: None,
                error: None,
            };
            match optimize(&config.train_config(variant, seed)) {
                Ok(report) => {
                    let (dice, hd95, asd) = report.summary();
                    row.dice = Some(dice);
                    row.hd95 = hd95;
                    row.asd = asd;
                    row.final_loss = Some(report.final_loss);
                }
                Err(e) => {
                    log::warn!("{} seed {seed} failed: {e}", variant.name);
                    row.error = Some(e.to_string());
                }
            }
            row
        })
        .collect();

    let summaries: Vec<Summary> = config
        .variants
        .iter()
        .map(|v| {
            let ok: Vec<&Row> = rows
                .iter()
                .filter(|r| r.variant == v.name && r.error.is_none())
                .collect();
            let col = |f: fn(&Row) -> Option<f64>| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            Summary {
                variant: v.name.clone(),
                runs: ok.len(),
                median_dice: median(&col(|r| r.dice)),
                median_hd95: median(&col(|r| r.hd95)),
                median_asd: median(&col(|r| r.asd)),
            }
        })
        .collect();

    let surface = config
        .variants
        .iter()
        .find(|v| v.loss.boundary == Some(BoundaryKind::Gsl));
    let baseline = config.variants.iter().find(|v| v.loss.boundary.is_none());
    let surface_vs_region = match (surface, baseline) {
        (Some(s), Some(b)) => {
            let sm = summaries
                .iter()
                .find(|x| x.variant == s.name)
                .unwrap()
                .median_hd95;
            let bm = summaries
                .iter()
                .find(|x| x.variant == b.name)
                .unwrap()
                .median_hd95;
            let le = match (sm, bm) {
                (Some(a), Some(b)) => a <= b,
                (Some(_), None) => true,
                (None, _) => false,
            };
            Some(SurfaceVsRegion {
                surface_variant: s.name.clone(),
                baseline_variant: b.name.clone(),
                surface_median_hd95: sm,
                baseline_median_hd95: bm,
                surface_hd95_le_baseline: le,
            })
        }
        _ => None,
    };

    Ok(ExperimentTable {
        rows,
        summaries,
        surface_vs_region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[Some(3.0), Some(1.0), Some(2.0)]), Some(2.0));
        assert_eq!(median(&[Some(3.0), Some(1.0)]), Some(2.0));
        assert_eq!(median(&[Some(3.0), None, Some(1.0)]), Some(3.0));
        assert_eq!(median(&[None, None, Some(1.0)]), None);
        assert_eq!(median(&[]), None);
    }
}

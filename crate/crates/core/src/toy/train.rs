//! Whole-volume gradient descent on a coarse logit field.
//!
//! Each epoch is one step: upsample the coarse logits, softmax, evaluate the
//! configured loss against the scene, and push the gradient back through the
//! softmax Jacobian and the upsampling adjoint into Adam.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamSettings};
use super::scene::{make_scene, SceneSpec};
use super::upsample::Upsampler;
use crate::error::{Error, Result};
use crate::losses::{
    dataset_class_weights, loss, loss_gradient_flat, BoundaryKind, ClassWeights, DtmStack,
    LossInputs, LossKind, RegionKind,
};
use crate::metrics::{evaluate, MetricReport};
use crate::schedule::{Schedule, ScheduleKind};
use crate::volume::{one_hot, softmax_flat, LabelVolume, Normalization, ProbVolume};

pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_COARSE_FACTOR: usize = 4;
pub const INIT_STD: f64 = 0.1;

/// Which loss to optimize and how the region/boundary blend evolves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    #[serde(default)]
    pub region: RegionKind,
    /// `None` optimizes the region loss alone.
    #[serde(default)]
    pub boundary: Option<BoundaryKind>,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    /// Exponent of the dataset class weights used by the surface loss.
    #[serde(default = "default_weight_exponent")]
    pub weight_exponent: f64,
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Linear
}

fn default_weight_exponent() -> f64 {
    1.0
}

fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_coarse_factor() -> usize {
    DEFAULT_COARSE_FACTOR
}

impl LossSpec {
    pub fn region_only(region: RegionKind) -> Self {
        Self {
            region,
            boundary: None,
            schedule: ScheduleKind::Linear,
            weight_exponent: 1.0,
        }
    }

    pub fn composite(region: RegionKind, boundary: BoundaryKind, schedule: ScheduleKind) -> Self {
        Self {
            region,
            boundary: Some(boundary),
            schedule,
            weight_exponent: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scene: SceneSpec,
    #[serde(default = "default_coarse_factor")]
    pub coarse_factor: usize,
    pub loss: LossSpec,
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: AdamSettings,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        self.schedule()?;
        Upsampler::new(self.scene.grid, self.coarse_factor)?;
        Ok(())
    }

    /// The blend schedule spans epochs `0..epochs`, so the last recorded epoch
    /// sits at the schedule's end point.
    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.loss.schedule, self.epochs.saturating_sub(1).max(1))
    }
}

/// Foreground-averaged metrics of the argmax prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub alpha: f64,
    pub loss: f64,
    pub dice: f64,
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: u32,
    #[serde(flatten)]
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// Loss after the last update, at the final blend weight.
    pub final_loss: f64,
    pub final_metrics: Vec<ClassMetrics>,
    /// Not serialized, so reports of identical runs compare byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TrainReport {
    /// Final foreground-averaged `(dice, hd95, asd)`.
    pub fn summary(&self) -> (f64, Option<f64>, Option<f64>) {
        summarize(&self.final_metrics)
    }
}

fn summarize(classes: &[ClassMetrics]) -> (f64, Option<f64>, Option<f64>) {
    let n = classes.len() as f64;
    let dice = classes.iter().map(|c| c.report.dice).sum::<f64>() / n;
    let avg = |f: fn(&MetricReport) -> Option<f64>| -> Option<f64> {
        classes
            .iter()
            .map(|c| f(&c.report))
            .sum::<Option<f64>>()
            .map(|s| s / n)
    };
    (dice, avg(|r| r.hd95), avg(|r| r.asd))
}

/// The full training objective as a function of the coarse logits.
#[derive(Debug, Clone)]
pub struct Objective {
    num_classes: usize,
    upsampler: Upsampler,
    truth_labels: LabelVolume,
    truth: ProbVolume,
    dtm: Option<DtmStack>,
    weights: Option<ClassWeights>,
    loss: LossSpec,
}

impl Objective {
    pub fn new(scene: &SceneSpec, coarse_factor: usize, loss: LossSpec) -> Result<Self> {
        let labels = make_scene(scene)?;
        let truth = one_hot(&labels)?;
        let upsampler = Upsampler::new(scene.grid, coarse_factor)?;
        let dtm = loss.boundary.map(|_| DtmStack::from_truth(&truth));
        let weights = match loss.boundary {
            Some(BoundaryKind::Gsl) => Some(dataset_class_weights(
                &labels.class_counts(),
                loss.weight_exponent,
            )?),
            _ => None,
        };
        Ok(Self {
            num_classes: scene.num_classes,
            upsampler,
            truth_labels: labels,
            truth,
            dtm,
            weights,
            loss,
        })
    }

    pub fn upsampler(&self) -> &Upsampler {
        &self.upsampler
    }

    pub fn num_params(&self) -> usize {
        self.num_classes * self.upsampler.coarse_len()
    }

    pub fn truth_labels(&self) -> &LabelVolume {
        &self.truth_labels
    }

    pub fn kind(&self, alpha: f64) -> LossKind {
        match self.loss.boundary {
            None => LossKind::Region(self.loss.region),
            Some(boundary) => LossKind::Composite {
                region: self.loss.region,
                boundary,
                alpha,
            },
        }
    }

    /// Class probabilities on the fine grid for the given coarse logits.
    pub fn probabilities(&self, coarse_logits: &[f64]) -> Result<ProbVolume> {
        let nc = self.upsampler.coarse_len();
        let fine: Vec<f64> = coarse_logits
            .chunks(nc)
            .flat_map(|c| self.upsampler.apply(c))
            .collect();
        let grid = *self.upsampler.fine_grid();
        let p = softmax_flat(&fine, self.num_classes, grid.len())?;
        ProbVolume::new(grid, self.num_classes, p, Normalization::Simplex)
    }

    fn inputs<'a>(&'a self, pred: &'a ProbVolume) -> Result<LossInputs<'a>> {
        let mut inputs = LossInputs::new(pred, &self.truth)?;
        if let Some(d) = &self.dtm {
            inputs = inputs.with_dtm(d)?;
        }
        if let Some(w) = &self.weights {
            inputs = inputs.with_weights(w)?;
        }
        Ok(inputs)
    }

    pub fn value(&self, coarse_logits: &[f64], alpha: f64) -> Result<f64> {
        let p = self.probabilities(coarse_logits)?;
        Ok(loss(self.kind(alpha), &self.inputs(&p)?)?.value)
    }

    /// Loss value, gradient with respect to the coarse logits, and the
    /// probabilities they were computed from.
    pub fn value_and_gradient(
        &self,
        coarse_logits: &[f64],
        alpha: f64,
    ) -> Result<(f64, Vec<f64>, ProbVolume)> {
        let p = self.probabilities(coarse_logits)?;
        let inputs = self.inputs(&p)?;
        let kind = self.kind(alpha);
        let value = loss(kind, &inputs)?.value;
        let g_p = loss_gradient_flat(kind, &inputs)?;

        let n = p.grid().len();
        let probs = p.values();
        let mut g_z = vec![0.0; g_p.len()];
        for i in 0..n {
            let mut dot = 0.0;
            for k in 0..self.num_classes {
                dot += probs[k * n + i] * g_p[k * n + i];
            }
            for k in 0..self.num_classes {
                let j = k * n + i;
                g_z[j] = probs[j] * (g_p[j] - dot);
            }
        }
        let grad: Vec<f64> = g_z
            .chunks(n)
            .flat_map(|c| self.upsampler.adjoint(c))
            .collect();
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { epoch: None });
        }
        Ok((value, grad, p))
    }

    /// Per foreground class metrics of the argmax of `p`.
    pub fn metrics(&self, p: &ProbVolume) -> Result<Vec<ClassMetrics>> {
        let pred = p.argmax();
        (1..self.num_classes as u32)
            .map(|k| {
                Ok(ClassMetrics {
                    class: k,
                    report: evaluate(&pred.mask(k), &self.truth_labels.mask(k))?,
                })
            })
            .collect()
    }
}

/// Seeded `N(0, INIT_STD)` initial coarse logits.
pub fn initial_logits(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

pub fn optimize(config: &TrainConfig) -> Result<TrainReport> {
    let started = Instant::now();
    config.validate()?;
    let schedule = config.schedule()?;
    let objective = Objective::new(&config.scene, config.coarse_factor, config.loss)?;
    let mut logits = initial_logits(objective.num_params(), config.seed);
    let mut adam = Adam::new(logits.len(), config.learning_rate, config.optimizer);

    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let alpha = match config.loss.boundary {
            Some(_) => schedule.alpha(epoch.min(schedule.total_epochs()))?,
            None => 1.0,
        };
        let (value, grad, p) =
            objective
                .value_and_gradient(&logits, alpha)
                .map_err(|e| match e {
                    Error::NonFiniteGradient { .. } => {
                        Error::NonFiniteGradient { epoch: Some(epoch) }
                    }
                    e => e,
                })?;
        let (dice, hd95, asd) = summarize(&objective.metrics(&p)?);
        records.push(EpochRecord {
            epoch,
            alpha,
            loss: value,
            dice,
            hd95,
            asd,
        });
        adam.step(&mut logits, &grad);
    }

    let final_alpha = records.last().map_or(1.0, |r| r.alpha);
    let p = objective.probabilities(&logits)?;
    let final_loss = loss(objective.kind(final_alpha), &objective.inputs(&p)?)?.value;
    let final_metrics = objective.metrics(&p)?;
    Ok(TrainReport {
        config: config.clone(),
        epochs: records,
        final_loss,
        final_metrics,
        wall_time: started.elapsed(),
    })
}

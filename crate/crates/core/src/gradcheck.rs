//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    dataset_class_weights, loss, loss_gradient_flat, ClassWeights, DtmStack, LossInputs, LossKind,
};
use crate::volume::{one_hot, softmax_flat, Grid3, LabelVolume, Normalization, ProbVolume};

pub const FD_STEP: f64 = 1e-6;
pub const REL_TOLERANCE: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;
pub const DEFAULT_PROBES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub probes: usize,
    pub max_abs_error: f64,
    /// Largest relative error among probes whose absolute error exceeds the floor.
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `f` at `probes`
/// randomly drawn coordinates of `x`.
pub fn check_gradient<F>(
    f: F,
    x: &[f64],
    analytic: &[f64],
    probes: usize,
    h: f64,
    rng: &mut impl Rng,
) -> Result<ProbeStats>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    assert_eq!(x.len(), analytic.len());
    let mut stats = ProbeStats {
        probes,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        passed: true,
    };
    let mut probe = x.to_vec();
    for _ in 0..probes {
        let j = rng.random_range(0..x.len());
        probe[j] = x[j] + h;
        let up = f(&probe)?;
        probe[j] = x[j] - h;
        let down = f(&probe)?;
        probe[j] = x[j];
        let numeric = (up - down) / (2.0 * h);
        let abs = (numeric - analytic[j]).abs();
        stats.max_abs_error = stats.max_abs_error.max(abs);
        if abs > ABS_FLOOR {
            let rel = abs / numeric.abs().max(analytic[j].abs());
            stats.max_rel_error = stats.max_rel_error.max(rel);
            if rel > REL_TOLERANCE {
                stats.passed = false;
            }
        }
    }
    Ok(stats)
}

/// A random loss problem: soft prediction, one-hot truth with every class
/// present, its distance maps and dataset weights.
#[derive(Debug, Clone)]
pub struct LossInstance {
    pub pred: ProbVolume,
    pub truth: ProbVolume,
    pub dtm: DtmStack,
    pub weights: ClassWeights,
}

impl LossInstance {
    pub fn random(shape: [usize; 3], num_classes: usize, rng: &mut impl Rng) -> Result<Self> {
        let grid = Grid3::new(
            shape,
            [
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..3.0),
            ],
        )?;
        let n = grid.len();
        if n < num_classes {
            return Err(Error::InvalidConfig(
                "grid too small for every class".into(),
            ));
        }
        let labels = loop {
            let labels: Vec<u32> = (0..n)
                .map(|_| rng.random_range(0..num_classes as u32))
                .collect();
            let lv = LabelVolume::new(grid, labels, num_classes)?;
            if lv.class_counts().iter().all(|&c| c > 0) {
                break lv;
            }
        };
        let truth = one_hot(&labels)?;
        // Logits in [-2, 2] keep probabilities well inside the CE clamp.
        let logits: Vec<f64> = (0..n * num_classes)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let pred = ProbVolume::new(
            grid,
            num_classes,
            softmax_flat(&logits, num_classes, n)?,
            Normalization::Simplex,
        )?;
        Ok(Self {
            dtm: DtmStack::from_truth(&truth),
            weights: dataset_class_weights(&labels.class_counts(), 1.0)?,
            pred,
            truth,
        })
    }

    pub fn inputs<'a>(&'a self, pred: &'a ProbVolume) -> Result<LossInputs<'a>> {
        LossInputs::new(pred, &self.truth)?
            .with_dtm(&self.dtm)?
            .with_weights(&self.weights)
    }

    /// Loss at an arbitrary flat prediction (values need not form a simplex).
    pub fn loss_at(&self, kind: LossKind, flat: &[f64]) -> Result<f64> {
        let p = ProbVolume::new(
            *self.pred.grid(),
            self.pred.num_classes(),
            flat.to_vec(),
            Normalization::Unconstrained,
        )?;
        Ok(loss(kind, &self.inputs(&p)?)?.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub kind: String,
    pub seed: u64,
    pub shape: [usize; 3],
    pub num_classes: usize,
    pub step: f64,
    #[serde(flatten)]
    pub stats: ProbeStats,
}

pub fn describe(kind: LossKind) -> String {
    match kind {
        LossKind::Region(r) => r.to_string(),
        LossKind::Boundary(b) => b.to_string(),
        LossKind::Composite {
            region,
            boundary,
            alpha,
        } => format!("composite({region}+{boundary}, alpha={alpha})"),
    }
}

/// Checks the analytic gradient of `kind` on a random `shape`, `C`-class problem.
pub fn grad_check_loss(
    kind: LossKind,
    seed: u64,
    shape: [usize; 3],
    num_classes: usize,
    probes: usize,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = LossInstance::random(shape, num_classes, &mut rng)?;
    let analytic = loss_gradient_flat(kind, &inst.inputs(&inst.pred)?)?;
    let stats = check_gradient(
        |x| inst.loss_at(kind, x),
        inst.pred.values(),
        &analytic,
        probes,
        FD_STEP,
        &mut rng,
    )?;
    Ok(GradCheckReport {
        kind: describe(kind),
        seed,
        shape,
        num_classes,
        step: FD_STEP,
        stats,
    })
}

//! Segmentation losses and their analytic gradients with respect to the
//! predicted probabilities.
//!
//! All reductions run class-major, then voxel by voxel in storage order, so a
//! given input always produces the same bits.

mod region;
mod surface;
mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dtm::{signed_dtm, BinaryMask, SignedDtm};
use crate::error::{Error, Result};
use crate::volume::{Grid3, ProbVolume, ScalarField};

pub use region::{CE_CLAMP, DICE_SMOOTH};
pub use surface::GSL_DEN_GUARD;
pub use weights::{dataset_class_weights, ClassWeights, WEIGHT_SUM_TOLERANCE};

/// A loss value and its additive per-class decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub per_class_terms: Vec<f64>,
}

impl LossValue {
    fn new(value: f64, per_class_terms: Vec<f64>) -> Self {
        Self {
            value,
            per_class_terms,
        }
    }
}

/// Ground-truth signed distance maps, one per class, stored class-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DtmStack {
    grid: Grid3,
    num_classes: usize,
    values: Vec<f64>,
}

impl DtmStack {
    pub fn from_fields(fields: &[ScalarField]) -> Result<Self> {
        let grid = *fields
            .first()
            .ok_or_else(|| Error::Shape("empty distance map stack".into()))?
            .grid();
        let mut values = Vec::with_capacity(fields.len() * grid.len());
        for f in fields {
            grid.check_same_shape(f.grid(), "distance map stack")?;
            values.extend_from_slice(f.values());
        }
        Ok(Self {
            grid,
            num_classes: fields.len(),
            values,
        })
    }

    pub fn from_signed(dtms: &[SignedDtm]) -> Result<Self> {
        let fields: Vec<ScalarField> = dtms.iter().map(|d| d.field().clone()).collect();
        Self::from_fields(&fields)
    }

    /// Computes the signed map of every class channel of `truth`.
    pub fn from_truth(truth: &ProbVolume) -> Self {
        let grid = *truth.grid();
        let mut values = Vec::with_capacity(truth.values().len());
        for k in 0..truth.num_classes() {
            let bits = truth.class(k).iter().map(|&v| v != 0.0).collect();
            let mask = BinaryMask::new(grid, bits).expect("class channel matches grid");
            values.extend_from_slice(signed_dtm(&mask).values());
        }
        Self {
            grid,
            num_classes: truth.num_classes(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fields(&self) -> Vec<ScalarField> {
        self.values
            .chunks(self.grid.len())
            .map(|c| ScalarField::new(self.grid, c.to_vec()).expect("finite"))
            .collect()
    }
}

/// The inputs a loss may read: prediction `P`, one-hot truth `T`, the truth's
/// distance maps `D`, and class weights `w`.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pred: &'a ProbVolume,
    truth: &'a ProbVolume,
    dtm: Option<&'a DtmStack>,
    weights: Option<&'a ClassWeights>,
}

impl<'a> LossInputs<'a> {
    /// Checks that `pred` and `truth` agree in shape and class count and that
    /// `truth` holds only zeros and ones.
    pub fn new(pred: &'a ProbVolume, truth: &'a ProbVolume) -> Result<Self> {
        pred.grid()
            .check_same_shape(truth.grid(), "prediction vs truth")?;
        if pred.num_classes() != truth.num_classes() {
            return Err(Error::Shape(format!(
                "prediction has {} classes, truth has {}",
                pred.num_classes(),
                truth.num_classes()
            )));
        }
        if let Some(index) = truth.values().iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::OutOfRange {
                index,
                value: truth.values()[index],
            });
        }
        Ok(Self {
            pred,
            truth,
            dtm: None,
            weights: None,
        })
    }

    pub fn with_dtm(mut self, dtm: &'a DtmStack) -> Result<Self> {
        self.pred
            .grid()
            .check_same_shape(dtm.grid(), "prediction vs distance maps")?;
        if dtm.num_classes() != self.pred.num_classes() {
            return Err(Error::Shape(format!(
                "{} distance maps for {} classes",
                dtm.num_classes(),
                self.pred.num_classes()
            )));
        }
        self.dtm = Some(dtm);
        Ok(self)
    }

    pub fn with_weights(mut self, weights: &'a ClassWeights) -> Result<Self> {
        if weights.len() != self.pred.num_classes() {
            return Err(Error::Shape(format!(
                "{} class weights for {} classes",
                weights.len(),
                self.pred.num_classes()
            )));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn pred(&self) -> &ProbVolume {
        self.pred
    }

    pub fn truth(&self) -> &ProbVolume {
        self.truth
    }

    fn raw(&self) -> Raw<'_> {
        Raw {
            c: self.pred.num_classes(),
            n: self.pred.grid().len(),
            p: self.pred.values(),
            t: self.truth.values(),
        }
    }

    fn dtm_values(&self) -> Result<&[f64]> {
        self.dtm
            .map(|d| d.values())
            .ok_or(Error::MissingInput("distance maps"))
    }

    /// Explicit weights, or uniform `1/C` when none were attached.
    fn weight_values(&self) -> Vec<f64> {
        match self.weights {
            Some(w) => w.weights().to_vec(),
            None => ClassWeights::uniform(self.pred.num_classes())
                .weights()
                .to_vec(),
        }
    }
}

/// Flat class-major views shared by the loss kernels.
pub(crate) struct Raw<'a> {
    pub c: usize,
    pub n: usize,
    pub p: &'a [f64],
    pub t: &'a [f64],
}

impl Raw<'_> {
    fn p_class(&self, k: usize) -> &[f64] {
        &self.p[k * self.n..(k + 1) * self.n]
    }

    fn t_class(&self, k: usize) -> &[f64] {
        &self.t[k * self.n..(k + 1) * self.n]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    Dice,
    #[default]
    DiceCe,
    Gdl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Hl,
    Bl,
    Gsl,
}

/// Every loss this crate can evaluate and differentiate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Region(RegionKind),
    Boundary(BoundaryKind),
    Composite {
        region: RegionKind,
        boundary: BoundaryKind,
        alpha: f64,
    },
}

impl LossKind {
    pub fn needs_dtm(&self) -> bool {
        !matches!(self, LossKind::Region(_))
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionKind::Dice => "dice",
            RegionKind::DiceCe => "dice-ce",
            RegionKind::Gdl => "gdl",
        })
    }
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryKind::Hl => "hl",
            BoundaryKind::Bl => "bl",
            BoundaryKind::Gsl => "gsl",
        })
    }
}

impl FromStr for RegionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dice" => Ok(RegionKind::Dice),
            "dice-ce" => Ok(RegionKind::DiceCe),
            "gdl" => Ok(RegionKind::Gdl),
            _ => Err(Error::InvalidConfig(format!("unknown region loss {s:?}"))),
        }
    }
}

impl FromStr for BoundaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hl" => Ok(BoundaryKind::Hl),
            "bl" => Ok(BoundaryKind::Bl),
            "gsl" => Ok(BoundaryKind::Gsl),
            _ => Err(Error::InvalidConfig(format!("unknown boundary loss {s:?}"))),
        }
    }
}

pub fn dice_loss(inputs: &LossInputs) -> LossValue {
    let (v, t) = region::dice(&inputs.raw());
    LossValue::new(v, t)
}

pub fn dice_ce_loss(inputs: &LossInputs) -> LossValue {
    let (v, t) = region::dice_ce(&inputs.raw());
    LossValue::new(v, t)
}

pub fn generalized_dice_loss(inputs: &LossInputs) -> Result<LossValue> {
    let (v, t) = region::generalized_dice(&inputs.raw())?;
    Ok(LossValue::new(v, t))
}

/// One-sided Hausdorff loss, using only the ground-truth distance maps.
pub fn hausdorff_loss(inputs: &LossInputs) -> Result<LossValue> {
    let (v, t) = surface::hausdorff(&inputs.raw(), inputs.dtm_values()?);
    Ok(LossValue::new(v, t))
}

pub fn boundary_loss(inputs: &LossInputs) -> Result<LossValue> {
    let (v, t) = surface::boundary(&inputs.raw(), inputs.dtm_values()?);
    Ok(LossValue::new(v, t))
}

/// Generalized surface loss. Per-class terms add up to the value.
pub fn generalized_surface_loss(inputs: &LossInputs) -> Result<LossValue> {
    let w = inputs.weight_values();
    let (v, t) = surface::generalized_surface(&inputs.raw(), inputs.dtm_values()?, &w)?;
    Ok(LossValue::new(v, t))
}

pub fn region_loss(kind: RegionKind, inputs: &LossInputs) -> Result<LossValue> {
    match kind {
        RegionKind::Dice => Ok(dice_loss(inputs)),
        RegionKind::DiceCe => Ok(dice_ce_loss(inputs)),
        RegionKind::Gdl => generalized_dice_loss(inputs),
    }
}

pub fn boundary_kind_loss(kind: BoundaryKind, inputs: &LossInputs) -> Result<LossValue> {
    match kind {
        BoundaryKind::Hl => hausdorff_loss(inputs),
        BoundaryKind::Bl => boundary_loss(inputs),
        BoundaryKind::Gsl => generalized_surface_loss(inputs),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `alpha * region + (1 - alpha) * boundary`.
pub fn composite_loss(
    region: RegionKind,
    boundary: BoundaryKind,
    alpha: f64,
    inputs: &LossInputs,
) -> Result<LossValue> {
    check_alpha(alpha)?;
    let r = region_loss(region, inputs)?;
    let b = boundary_kind_loss(boundary, inputs)?;
    let beta = 1.0 - alpha;
    Ok(LossValue::new(
        alpha * r.value + beta * b.value,
        r.per_class_terms
            .iter()
            .zip(&b.per_class_terms)
            .map(|(x, y)| alpha * x + beta * y)
            .collect(),
    ))
}

pub fn loss(kind: LossKind, inputs: &LossInputs) -> Result<LossValue> {
    match kind {
        LossKind::Region(r) => region_loss(r, inputs),
        LossKind::Boundary(b) => boundary_kind_loss(b, inputs),
        LossKind::Composite {
            region,
            boundary,
            alpha,
        } => composite_loss(region, boundary, alpha, inputs),
    }
}

fn region_grad(kind: RegionKind, raw: &Raw) -> Result<Vec<f64>> {
    match kind {
        RegionKind::Dice => Ok(region::dice_grad(raw)),
        RegionKind::DiceCe => Ok(region::dice_ce_grad(raw)),
        RegionKind::Gdl => region::generalized_dice_grad(raw),
    }
}

fn boundary_grad(kind: BoundaryKind, inputs: &LossInputs, raw: &Raw) -> Result<Vec<f64>> {
    let d = inputs.dtm_values()?;
    match kind {
        BoundaryKind::Hl => Ok(surface::hausdorff_grad(raw, d)),
        BoundaryKind::Bl => Ok(surface::boundary_grad(raw, d)),
        BoundaryKind::Gsl => surface::generalized_surface_grad(raw, d, &inputs.weight_values()),
    }
}

/// Gradient with respect to every `P` entry, flat and class-major.
pub fn loss_gradient_flat(kind: LossKind, inputs: &LossInputs) -> Result<Vec<f64>> {
    let raw = inputs.raw();
    let g = match kind {
        LossKind::Region(r) => region_grad(r, &raw)?,
        LossKind::Boundary(b) => boundary_grad(b, inputs, &raw)?,
        LossKind::Composite {
            region,
            boundary,
            alpha,
        } => {
            check_alpha(alpha)?;
            let gr = region_grad(region, &raw)?;
            let gb = boundary_grad(boundary, inputs, &raw)?;
            let beta = 1.0 - alpha;
            gr.iter()
                .zip(&gb)
                .map(|(r, b)| alpha * r + beta * b)
                .collect()
        }
    };
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { epoch: None });
    }
    Ok(g)
}

/// Gradient as one field per class.
pub fn loss_gradient(kind: LossKind, inputs: &LossInputs) -> Result<Vec<ScalarField>> {
    let grid = *inputs.pred.grid();
    let flat = loss_gradient_flat(kind, inputs)?;
    flat.chunks(grid.len())
        .map(|c| ScalarField::new(grid, c.to_vec()))
        .collect()
}

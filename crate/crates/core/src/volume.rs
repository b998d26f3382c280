//! Voxel-grid data model.
//!
//! Every volume is stored in C order with `x` varying fastest. Multi-class
//! volumes keep the class as the outermost axis, so class `k` of a volume with
//! `n` voxels occupies `values[k * n..(k + 1) * n]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and physical spacing (mm per voxel) of a 3D grid, both ordered `(z, y, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec")]
pub struct Grid3 {
    shape: [usize; 3],
    spacing: [f64; 3],
}

#[derive(Deserialize)]
struct GridSpec {
    shape: [usize; 3],
    #[serde(default = "unit_spacing")]
    spacing: [f64; 3],
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

impl TryFrom<GridSpec> for Grid3 {
    type Error = Error;

    fn try_from(g: GridSpec) -> Result<Self> {
        Grid3::new(g.shape, g.spacing)
    }
}

impl Grid3 {
    pub fn new(shape: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidGrid(format!(
                "shape {shape:?} has a zero extent"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "spacing {spacing:?} must be positive and finite"
            )));
        }
        shape
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .ok_or_else(|| Error::InvalidGrid(format!("shape {shape:?} overflows usize")))?;
        Ok(Self { shape, spacing })
    }

    /// Unit spacing grid, convenient for tests and synthetic data.
    pub fn isotropic(shape: [usize; 3]) -> Result<Self> {
        Self::new(shape, [1.0; 3])
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Total voxel count.
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.shape[2];
        let rest = index / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], x]
    }

    /// Physical position (mm) of a voxel center.
    pub fn center_mm(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        [
            (c[0] as f64 + 0.5) * self.spacing[0],
            (c[1] as f64 + 0.5) * self.spacing[1],
            (c[2] as f64 + 0.5) * self.spacing[2],
        ]
    }

    pub fn with_spacing(&self, spacing: [f64; 3]) -> Result<Self> {
        Self::new(self.shape, spacing)
    }

    pub(crate) fn check_same_shape(&self, other: &Grid3, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

/// Integer class label per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    grid: Grid3,
    labels: Vec<u32>,
    num_classes: usize,
}

impl LabelVolume {
    pub fn new(grid: Grid3, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        if labels.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} labels for a grid of {} voxels",
                labels.len(),
                grid.len()
            )));
        }
        if let Some((index, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= num_classes)
        {
            return Err(Error::InvalidLabel {
                label,
                index,
                num_classes,
            });
        }
        Ok(Self {
            grid,
            labels,
            num_classes,
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Voxel count per class.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn mask(&self, class: u32) -> crate::dtm::BinaryMask {
        let bits = self.labels.iter().map(|&l| l == class).collect();
        crate::dtm::BinaryMask::new(self.grid, bits).expect("label volume length matches grid")
    }
}

/// What is known about the per-voxel class distribution of a [`ProbVolume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Values lie in `[0, 1]`, nothing else is promised.
    Unconstrained,
    /// Per-voxel class values sum to 1 within `1e-9`.
    Simplex,
    /// Values are exactly 0 or 1 with exactly one 1 per voxel.
    Binary,
}

/// Per-class, per-voxel values in `[0, 1]`, class-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVolume {
    grid: Grid3,
    num_classes: usize,
    values: Vec<f64>,
    normalization: Normalization,
}

pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

impl ProbVolume {
    pub fn new(
        grid: Grid3,
        num_classes: usize,
        values: Vec<f64>,
        normalization: Normalization,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        let n = grid.len();
        if values.len() != num_classes * n {
            return Err(Error::Shape(format!(
                "{} values for {} classes x {} voxels",
                values.len(),
                num_classes,
                n
            )));
        }
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteInput { index });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { index, value: v });
            }
        }
        let vol = Self {
            grid,
            num_classes,
            values,
            normalization,
        };
        match normalization {
            Normalization::Unconstrained => {}
            Normalization::Simplex => {
                for i in 0..n {
                    let s = vol.voxel_sum(i);
                    if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
                        return Err(Error::Shape(format!(
                            "voxel {i} sums to {s}, not a probability simplex"
                        )));
                    }
                }
            }
            Normalization::Binary => {
                if let Some(index) = vol.values.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::OutOfRange {
                        index,
                        value: vol.values[index],
                    });
                }
                for i in 0..n {
                    if vol.voxel_sum(i) != 1.0 {
                        return Err(Error::Shape(format!("voxel {i} is not one-hot encoded")));
                    }
                }
            }
        }
        Ok(vol)
    }

    fn voxel_sum(&self, i: usize) -> f64 {
        let n = self.grid.len();
        (0..self.num_classes).map(|k| self.values[k * n + i]).sum()
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

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn class(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    /// Element-wise `1 - self`, keeping binary-ness only for `C = 1`.
    pub fn complement(&self) -> ProbVolume {
        let values = self.values.iter().map(|&v| 1.0 - v).collect();
        let normalization = match (self.normalization, self.num_classes) {
            (Normalization::Binary, 1) => Normalization::Binary,
            _ => Normalization::Unconstrained,
        };
        ProbVolume::new(self.grid, self.num_classes, values, normalization)
            .expect("complement of [0, 1] values stays in [0, 1]")
    }

    /// Per-voxel argmax; ties resolve to the lowest class index.
    pub fn argmax(&self) -> LabelVolume {
        let n = self.grid.len();
        let labels = (0..n)
            .map(|i| {
                let mut best = 0;
                for k in 1..self.num_classes {
                    if self.values[k * n + i] > self.values[best * n + i] {
                        best = k;
                    }
                }
                best as u32
            })
            .collect();
        LabelVolume::new(self.grid, labels, self.num_classes).expect("argmax labels are in range")
    }
}

/// One finite real per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid3,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} voxels",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid3) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// One-hot encodes a label volume into a binary [`ProbVolume`].
pub fn one_hot(labels: &LabelVolume) -> Result<ProbVolume> {
    let n = labels.grid.len();
    let c = labels.num_classes;
    let mut values = vec![0.0; c * n];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l as usize >= c {
            return Err(Error::InvalidLabel {
                label: l,
                index: i,
                num_classes: c,
            });
        }
        values[l as usize * n + i] = 1.0;
    }
    ProbVolume::new(labels.grid, c, values, Normalization::Binary)
}

/// Per-voxel softmax over a stack of logit fields, one per class.
pub fn softmax_field(logits: &[ScalarField]) -> Result<ProbVolume> {
    let first = logits
        .first()
        .ok_or_else(|| Error::Shape("softmax needs at least one class".into()))?;
    let grid = *first.grid();
    for f in logits {
        grid.check_same_shape(f.grid(), "softmax logits")?;
    }
    let n = grid.len();
    let flat: Vec<f64> = logits
        .iter()
        .flat_map(|f| f.values.iter().copied())
        .collect();
    let values = softmax_flat(&flat, logits.len(), n)?;
    ProbVolume::new(grid, logits.len(), values, Normalization::Simplex)
}

/// Class-major softmax on a raw `C x N` buffer.
pub(crate) fn softmax_flat(logits: &[f64], c: usize, n: usize) -> Result<Vec<f64>> {
    if let Some(index) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { index });
    }
    let mut out = vec![0.0; c * n];
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for k in 0..c {
            max = max.max(logits[k * n + i]);
        }
        let mut sum = 0.0;
        for k in 0..c {
            let e = (logits[k * n + i] - max).exp();
            out[k * n + i] = e;
            sum += e;
        }
        for k in 0..c {
            out[k * n + i] /= sum;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Grid3 {
        Grid3::isotropic([1, 1, n]).unwrap()
    }

    #[test]
    fn grid_rejects_bad_geometry() {
        assert!(Grid3::new([0, 1, 1], [1.0; 3]).is_err());
        assert!(Grid3::new([1, 1, 1], [1.0, 0.0, 1.0]).is_err());
        assert!(Grid3::new([1, 1, 1], [1.0, f64::NAN, 1.0]).is_err());
        assert!(Grid3::new([usize::MAX, 2, 1], [1.0; 3]).is_err());
    }

    #[test]
    fn index_and_coords_agree() {
        let g = Grid3::isotropic([2, 3, 4]).unwrap();
        for i in 0..g.len() {
            let [z, y, x] = g.coords(i);
            assert_eq!(g.index(z, y, x), i);
        }
        assert_eq!(g.index(1, 0, 0), 12);
    }

    #[test]
    fn one_hot_examples() {
        let lv = LabelVolume::new(line(3), vec![0, 1, 0], 2).unwrap();
        let p = one_hot(&lv).unwrap();
        assert_eq!(p.class(0), &[1.0, 0.0, 1.0]);
        assert_eq!(p.class(1), &[0.0, 1.0, 0.0]);
        assert_eq!(p.normalization(), Normalization::Binary);

        let lv = LabelVolume::new(line(4), vec![0; 4], 1).unwrap();
        assert_eq!(one_hot(&lv).unwrap().class(0), &[1.0; 4]);

        let lv = LabelVolume::new(line(3), vec![2, 0, 1], 3).unwrap();
        let p = one_hot(&lv).unwrap();
        assert_eq!(p.class(0), &[0.0, 1.0, 0.0]);
        assert_eq!(p.class(1), &[0.0, 0.0, 1.0]);
        assert_eq!(p.class(2), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn label_out_of_range() {
        let err = LabelVolume::new(line(3), vec![0, 2, 0], 2).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidLabel {
                label: 2,
                index: 1,
                ..
            }
        ));
    }

    #[test]
    fn softmax_examples() {
        let g = line(1);
        let p = softmax_field(&[
            ScalarField::new(g, vec![0.0]).unwrap(),
            ScalarField::new(g, vec![0.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(p.values(), &[0.5, 0.5]);

        let p = softmax_field(&[ScalarField::new(g, vec![-17.5]).unwrap()]).unwrap();
        assert_eq!(p.values(), &[1.0]);

        let p = softmax_field(&[
            ScalarField::new(g, vec![3f64.ln()]).unwrap(),
            ScalarField::new(g, vec![0.0]).unwrap(),
        ])
        .unwrap();
        assert!((p.values()[0] - 0.75).abs() < 1e-15);
        assert!((p.values()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let err = softmax_flat(&[0.0, f64::INFINITY], 2, 1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteInput { index: 1 }));
        assert!(ScalarField::new(line(1), vec![f64::NAN]).is_err());
    }

    #[test]
    fn prob_volume_flags_are_checked() {
        let g = line(1);
        assert!(ProbVolume::new(g, 2, vec![0.5, 0.6], Normalization::Simplex).is_err());
        assert!(ProbVolume::new(g, 2, vec![0.5, 0.5], Normalization::Binary).is_err());
        assert!(ProbVolume::new(g, 1, vec![1.5], Normalization::Unconstrained).is_err());
        assert!(ProbVolume::new(g, 2, vec![0.0, 1.0], Normalization::Binary).is_ok());
    }
}

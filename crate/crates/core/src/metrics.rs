//! Overlap and surface-distance metrics between binary masks.
//!
//! Surfaces are the boundary voxels of a mask (see [`boundary_set`]) placed at
//! their physical centers. HD95 and ASD are taken over the union of both
//! directed distance multisets. When exactly one mask is empty the surface
//! metrics are undefined; when both are empty they are zero.

use serde::{Deserialize, Serialize};

use crate::dtm::{boundary_set, squared_edt, BinaryMask};
use crate::error::{Error, Result};
use crate::volume::Grid3;

pub const HD_PERCENTILE: f64 = 0.95;

/// Physical positions (mm) of boundary-voxel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePointSet {
    grid: Grid3,
    points: Vec<[f64; 3]>,
}

impl SurfacePointSet {
    pub fn new(grid: Grid3, points: Vec<[f64; 3]>) -> Self {
        Self { grid, points }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn surface_points(mask: &BinaryMask) -> SurfacePointSet {
    let grid = *mask.grid();
    let boundary = boundary_set(mask);
    let points = boundary
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| grid.center_mm(i))
        .collect();
    SurfacePointSet { grid, points }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// For every point of `a`, the distance to its nearest point in `b`.
pub fn directed_surface_distances(a: &SurfacePointSet, b: &SurfacePointSet) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(a.points
        .iter()
        .map(|p| {
            b.points
                .iter()
                .map(|q| distance(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff_distance(a: &SurfacePointSet, b: &SurfacePointSet) -> Result<f64> {
    let ab = directed_surface_distances(a, b)?;
    let ba = directed_surface_distances(b, a)?;
    Ok(max(&ab).max(max(&ba)))
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Linear-interpolation percentile of `values` (`q` in `[0, 1]`), rank `q * (m - 1)`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn dice_coefficient(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    pred.grid().check_same_shape(truth.grid(), "dice masks")?;
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        a += p as usize;
        b += t as usize;
        inter += (p && t) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (a + b) as f64)
}

/// Why a surface metric could not be computed.
pub const UNDEFINED_PRED_EMPTY: &str = "prediction is empty but ground truth is not";
pub const UNDEFINED_TRUTH_EMPTY: &str = "ground truth is empty but prediction is not";

/// Outcome of comparing two masks' surfaces.
#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceDistances {
    BothEmpty,
    Undefined(&'static str),
    /// Union of `pred -> truth` and `truth -> pred` distances, in that order.
    Defined(Vec<f64>),
}

impl SurfaceDistances {
    fn summarize(&self, f: impl Fn(&[f64]) -> f64) -> Option<f64> {
        match self {
            SurfaceDistances::BothEmpty => Some(0.0),
            SurfaceDistances::Undefined(_) => None,
            SurfaceDistances::Defined(v) => Some(f(v)),
        }
    }

    pub fn hd(&self) -> Option<f64> {
        self.summarize(max)
    }

    pub fn hd95(&self) -> Option<f64> {
        self.summarize(|v| percentile(v, HD_PERCENTILE))
    }

    pub fn asd(&self) -> Option<f64> {
        self.summarize(mean)
    }

    pub fn undefined_reason(&self) -> Option<&'static str> {
        match self {
            SurfaceDistances::Undefined(r) => Some(r),
            _ => None,
        }
    }
}

fn classify(pred: &BinaryMask, truth: &BinaryMask) -> Option<SurfaceDistances> {
    match (pred.is_empty(), truth.is_empty()) {
        (true, true) => Some(SurfaceDistances::BothEmpty),
        (true, false) => Some(SurfaceDistances::Undefined(UNDEFINED_PRED_EMPTY)),
        (false, true) => Some(SurfaceDistances::Undefined(UNDEFINED_TRUTH_EMPTY)),
        (false, false) => None,
    }
}

/// Directed distances by sampling the EDT of the opposite surface.
pub fn surface_distances(pred: &BinaryMask, truth: &BinaryMask) -> Result<SurfaceDistances> {
    pred.grid().check_same_shape(truth.grid(), "metric masks")?;
    if let Some(d) = classify(pred, truth) {
        return Ok(d);
    }
    let bp = boundary_set(pred);
    let bt = boundary_set(truth);
    let mut out = sample_edt(&bp, &bt)?;
    out.extend(sample_edt(&bt, &bp)?);
    Ok(SurfaceDistances::Defined(out))
}

fn sample_edt(from: &BinaryMask, to: &BinaryMask) -> Result<Vec<f64>> {
    let sq = squared_edt(to, [0, 1, 2])?;
    Ok(from
        .bits()
        .iter()
        .zip(&sq)
        .filter(|(&b, _)| b)
        .map(|(_, &d)| d.sqrt())
        .collect())
}

/// Same contract as [`surface_distances`] using exhaustive pairwise search.
pub fn surface_distances_brute_force(
    pred: &BinaryMask,
    truth: &BinaryMask,
) -> Result<SurfaceDistances> {
    pred.grid().check_same_shape(truth.grid(), "metric masks")?;
    if let Some(d) = classify(pred, truth) {
        return Ok(d);
    }
    let sp = surface_points(pred);
    let st = surface_points(truth);
    let mut out = directed_surface_distances(&sp, &st)?;
    out.extend(directed_surface_distances(&st, &sp)?);
    Ok(SurfaceDistances::Defined(out))
}

pub fn hd95(pred: &BinaryMask, truth: &BinaryMask) -> Result<Option<f64>> {
    Ok(surface_distances(pred, truth)?.hd95())
}

pub fn asd(pred: &BinaryMask, truth: &BinaryMask) -> Result<Option<f64>> {
    Ok(surface_distances(pred, truth)?.asd())
}

/// Metric summary for one class. `None` distances serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dice: f64,
    pub hd: Option<f64>,
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
    pub undefined_reason: Option<String>,
}

impl MetricReport {
    fn from_parts(dice: f64, d: &SurfaceDistances) -> Self {
        Self {
            dice,
            hd: d.hd(),
            hd95: d.hd95(),
            asd: d.asd(),
            undefined_reason: d.undefined_reason().map(str::to_string),
        }
    }
}

pub fn evaluate(pred: &BinaryMask, truth: &BinaryMask) -> Result<MetricReport> {
    let dice = dice_coefficient(pred, truth)?;
    Ok(MetricReport::from_parts(
        dice,
        &surface_distances(pred, truth)?,
    ))
}

pub fn evaluate_brute_force(pred: &BinaryMask, truth: &BinaryMask) -> Result<MetricReport> {
    let dice = dice_coefficient(pred, truth)?;
    Ok(MetricReport::from_parts(
        dice,
        &surface_distances_brute_force(pred, truth)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(p: &[[f64; 3]]) -> SurfacePointSet {
        SurfacePointSet::new(Grid3::isotropic([1, 1, 1]).unwrap(), p.to_vec())
    }

    fn mask(shape: [usize; 3], on: &[usize]) -> BinaryMask {
        let g = Grid3::isotropic(shape).unwrap();
        let mut bits = vec![false; g.len()];
        for &i in on {
            bits[i] = true;
        }
        BinaryMask::new(g, bits).unwrap()
    }

    #[test]
    fn surface_point_examples() {
        let m = mask([2, 2, 2], &[0]);
        assert_eq!(surface_points(&m).points(), &[[0.5, 0.5, 0.5]]);
        assert!(surface_points(&mask([2, 2, 2], &[])).is_empty());
        let bar = mask([2, 1, 1], &[0, 1]);
        assert_eq!(surface_points(&bar).len(), 2);
    }

    #[test]
    fn directed_examples() {
        let a = pts(&[[0.0, 0.0, 0.0], [0.0, 0.0, 4.0]]);
        assert_eq!(directed_surface_distances(&a, &a).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            directed_surface_distances(&pts(&[[0.0; 3]]), &pts(&[[3.0, 0.0, 0.0]])).unwrap(),
            vec![3.0]
        );
        let b = pts(&[[0.0, 0.0, 1.0]]);
        assert_eq!(directed_surface_distances(&a, &b).unwrap(), vec![1.0, 3.0]);
        assert!(matches!(
            directed_surface_distances(&a, &pts(&[])),
            Err(Error::EmptySurface)
        ));
    }

    #[test]
    fn hausdorff_examples() {
        let a = pts(&[[0.0; 3]]);
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            hausdorff_distance(&a, &pts(&[[0.0, 0.0, 5.0]])).unwrap(),
            5.0
        );
        let two = pts(&[[0.0; 3], [0.0, 0.0, 2.0]]);
        assert_eq!(hausdorff_distance(&two, &a).unwrap(), 2.0);
        assert_eq!(hausdorff_distance(&a, &two).unwrap(), 2.0);
    }

    #[test]
    fn percentile_interpolates() {
        let mut v = vec![0.0; 19];
        v.push(10.0);
        assert!((percentile(&v, 0.95) - 0.5).abs() < 1e-12);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
        assert_eq!(percentile(&[4.0, 0.0], 0.5), 2.0);
    }

    #[test]
    fn asd_mean_of_union() {
        let d = SurfaceDistances::Defined(vec![1.0, 3.0, 0.0]);
        assert!((d.asd().unwrap() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_conventions() {
        let full = mask([3, 3, 3], &[13]);
        let empty = mask([3, 3, 3], &[]);
        let r = evaluate(&empty, &full).unwrap();
        assert_eq!(r.dice, 0.0);
        assert_eq!((r.hd, r.hd95, r.asd), (None, None, None));
        assert_eq!(r.undefined_reason.as_deref(), Some(UNDEFINED_PRED_EMPTY));
        let r = evaluate(&empty, &empty).unwrap();
        assert_eq!(r.dice, 1.0);
        assert_eq!((r.hd, r.hd95, r.asd), (Some(0.0), Some(0.0), Some(0.0)));
        assert!(r.undefined_reason.is_none());
    }

    #[test]
    fn identical_and_offset_masks() {
        let a = mask([1, 1, 5], &[0]);
        let r = evaluate(&a, &a).unwrap();
        assert_eq!((r.dice, r.hd95, r.asd), (1.0, Some(0.0), Some(0.0)));
        let b = mask([1, 1, 5], &[2]);
        assert_eq!(asd(&a, &b).unwrap(), Some(2.0));
        assert_eq!(hd95(&a, &b).unwrap(), Some(2.0));
    }

    #[test]
    fn dice_examples() {
        let a = mask([1, 1, 6], &[0, 1]);
        let b = mask([1, 1, 6], &[0, 1, 2, 3]);
        assert!((dice_coefficient(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dice_coefficient(&b, &b).unwrap(), 1.0);
        let c = mask([1, 1, 6], &[5]);
        assert_eq!(dice_coefficient(&a, &c).unwrap(), 0.0);
    }
}

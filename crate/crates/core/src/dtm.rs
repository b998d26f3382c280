//! Exact Euclidean distance transforms and signed distance-transform maps.
//!
//! Distances are measured between voxel centers in physical units (mm). The
//! signed map is positive on background voxels, exactly zero on boundary voxels
//! and negative on interior foreground voxels, where a boundary voxel is a
//! foreground voxel with at least one background face-neighbor (voxels outside
//! the grid count as background).

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::volume::{Grid3, ScalarField};

/// One boolean per voxel, `true` for foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid3,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid3, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} mask bits for a grid of {} voxels",
                bits.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, bits })
    }

    pub fn empty(grid: Grid3) -> Self {
        Self {
            grid,
            bits: vec![false; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Same bits on a grid with different spacing.
    pub fn with_spacing(&self, spacing: [f64; 3]) -> Result<Self> {
        Ok(Self {
            grid: self.grid.with_spacing(spacing)?,
            bits: self.bits.clone(),
        })
    }

    /// SHA-256 over the shape and the bit pattern, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in self.grid.shape() {
            h.update((s as u64).to_le_bytes());
        }
        h.update(self.bits.iter().map(|&b| b as u8).collect::<Vec<u8>>());
        hex::encode(h.finalize())
    }

    fn is_foreground(&self, z: isize, y: isize, x: isize) -> bool {
        let [sz, sy, sx] = self.grid.shape();
        if z < 0 || y < 0 || x < 0 || z >= sz as isize || y >= sy as isize || x >= sx as isize {
            return false;
        }
        self.bits[self.grid.index(z as usize, y as usize, x as usize)]
    }
}

/// A signed distance map together with the digest of the mask it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDtm {
    field: ScalarField,
    source_mask_hash: String,
}

impl SignedDtm {
    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn source_mask_hash(&self) -> &str {
        &self.source_mask_hash
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }
}

const FACE_NEIGHBORS: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Foreground voxels with a 6-connected background neighbor.
pub fn boundary_set(mask: &BinaryMask) -> BinaryMask {
    let grid = mask.grid;
    let bits = (0..grid.len())
        .map(|i| {
            if !mask.bits[i] {
                return false;
            }
            let [z, y, x] = grid.coords(i).map(|c| c as isize);
            FACE_NEIGHBORS
                .iter()
                .any(|[dz, dy, dx]| !mask.is_foreground(z + dz, y + dy, x + dx))
        })
        .collect();
    BinaryMask { grid, bits }
}

/// Exact Euclidean distance (mm) from every voxel to the nearest source voxel.
pub fn edt(sources: &BinaryMask) -> Result<ScalarField> {
    edt_with_axis_order(sources, [0, 1, 2])
}

/// [`edt`] with an explicit sweep order over the axes; the result does not
/// depend on the order beyond rounding.
pub fn edt_with_axis_order(sources: &BinaryMask, order: [usize; 3]) -> Result<ScalarField> {
    let mut sq = squared_edt(sources, order)?;
    sq.iter_mut().for_each(|v| *v = v.sqrt());
    ScalarField::new(sources.grid, sq)
}

/// Separable squared EDT: a lower envelope of parabolas along each axis in turn.
pub(crate) fn squared_edt(sources: &BinaryMask, order: [usize; 3]) -> Result<Vec<f64>> {
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }
    let mut sorted = order;
    sorted.sort_unstable();
    assert_eq!(
        sorted,
        [0, 1, 2],
        "axis order must be a permutation of 0..3"
    );

    let grid = sources.grid;
    let shape = grid.shape();
    let spacing = grid.spacing();
    let mut f: Vec<f64> = sources
        .bits
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();

    let strides = [shape[1] * shape[2], shape[2], 1];
    let mut scratch = LineScratch::default();
    for &axis in &order {
        let len = shape[axis];
        let stride = strides[axis];
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for u in 0..shape[a] {
            for v in 0..shape[b] {
                let start = u * strides[a] + v * strides[b];
                scratch.load(&f, start, stride, len);
                scratch.transform(spacing[axis]);
                for (j, &val) in scratch.out.iter().enumerate() {
                    f[start + j * stride] = val;
                }
            }
        }
    }
    Ok(f)
}

#[derive(Default)]
struct LineScratch {
    input: Vec<f64>,
    out: Vec<f64>,
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl LineScratch {
    fn load(&mut self, f: &[f64], start: usize, stride: usize, len: usize) {
        self.input.clear();
        self.input.extend((0..len).map(|j| f[start + j * stride]));
    }

    /// `out[p] = min_q input[q] + (s * (p - q))^2` over finite `input[q]`.
    fn transform(&mut self, s: f64) {
        let n = self.input.len();
        self.out.clear();
        self.out.resize(n, f64::INFINITY);
        self.sites.clear();
        self.bounds.clear();

        let pos = |q: usize| q as f64 * s;
        for q in 0..n {
            let fq = self.input[q];
            if !fq.is_finite() {
                continue;
            }
            loop {
                let Some(&v) = self.sites.last() else {
                    self.sites.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let (xq, xv) = (pos(q), pos(v));
                let cross = ((fq + xq * xq) - (self.input[v] + xv * xv)) / (2.0 * (xq - xv));
                if cross <= *self.bounds.last().unwrap() {
                    self.sites.pop();
                    self.bounds.pop();
                } else {
                    self.sites.push(q);
                    self.bounds.push(cross);
                    break;
                }
            }
        }
        if self.sites.is_empty() {
            return;
        }
        let mut k = 0;
        for p in 0..n {
            let xp = pos(p);
            while k + 1 < self.sites.len() && self.bounds[k + 1] < xp {
                k += 1;
            }
            let q = self.sites[k];
            let d = xp - pos(q);
            self.out[p] = self.input[q] + d * d;
        }
    }
}

/// Signed distance map of `mask` using the separable exact EDT.
pub fn signed_dtm(mask: &BinaryMask) -> SignedDtm {
    let boundary = boundary_set(mask);
    if boundary.is_empty() {
        return SignedDtm {
            field: ScalarField::zeros(mask.grid),
            source_mask_hash: mask.digest(),
        };
    }
    let dist = edt(&boundary).expect("boundary is non-empty");
    apply_sign(mask, &boundary, dist.into_values())
}

/// Signed distance map by exhaustive search over boundary voxels, `O(N * |B|)`.
pub fn brute_force_dtm(mask: &BinaryMask) -> SignedDtm {
    let grid = mask.grid;
    let boundary = boundary_set(mask);
    let points: Vec<[f64; 3]> = (0..grid.len())
        .filter(|&i| boundary.bits[i])
        .map(|i| grid.center_mm(i))
        .collect();
    if points.is_empty() {
        return SignedDtm {
            field: ScalarField::zeros(grid),
            source_mask_hash: mask.digest(),
        };
    }
    let dist = (0..grid.len())
        .map(|i| {
            let c = grid.center_mm(i);
            points
                .iter()
                .map(|p| {
                    let d = [c[0] - p[0], c[1] - p[1], c[2] - p[2]];
                    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    apply_sign(mask, &boundary, dist)
}

fn apply_sign(mask: &BinaryMask, boundary: &BinaryMask, mut dist: Vec<f64>) -> SignedDtm {
    for (i, d) in dist.iter_mut().enumerate() {
        *d = if boundary.bits[i] {
            0.0
        } else if mask.bits[i] {
            -*d
        } else {
            *d
        };
    }
    SignedDtm {
        field: ScalarField::new(mask.grid, dist).expect("distances are finite"),
        source_mask_hash: mask.digest(),
    }
}

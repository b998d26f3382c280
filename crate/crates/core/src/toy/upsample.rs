//! Separable trilinear upsampling (align-corners false) and its exact adjoint.

use crate::error::{Error, Result};
use crate::volume::{Grid3, ScalarField};

/// Two-tap linear interpolation weights for one output index.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    w_lo: f64,
    w_hi: f64,
}

fn taps(coarse_len: usize, factor: usize) -> Vec<Tap> {
    let f = factor as f64;
    (0..coarse_len * factor)
        .map(|i| {
            let src = ((i as f64 + 0.5) / f - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(coarse_len - 1);
            let hi = (lo + 1).min(coarse_len - 1);
            let frac = src - lo as f64;
            Tap {
                lo,
                hi,
                w_lo: 1.0 - frac,
                w_hi: frac,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Upsampler {
    coarse: [usize; 3],
    fine: Grid3,
    factor: usize,
    taps: [Vec<Tap>; 3],
}

impl Upsampler {
    pub fn new(fine: Grid3, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Shape("coarse factor must be at least 1".into()));
        }
        let shape = fine.shape();
        if shape.iter().any(|s| s % factor != 0) {
            return Err(Error::Shape(format!(
                "coarse factor {factor} does not divide grid shape {shape:?}"
            )));
        }
        let coarse = shape.map(|s| s / factor);
        Ok(Self {
            coarse,
            fine,
            factor,
            taps: [
                taps(coarse[0], factor),
                taps(coarse[1], factor),
                taps(coarse[2], factor),
            ],
        })
    }

    pub fn coarse_shape(&self) -> [usize; 3] {
        self.coarse
    }

    pub fn coarse_len(&self) -> usize {
        self.coarse.iter().product()
    }

    pub fn coarse_grid(&self) -> Grid3 {
        let s = self.fine.spacing();
        let f = self.factor as f64;
        Grid3::new(self.coarse, [s[0] * f, s[1] * f, s[2] * f]).expect("scaled grid is valid")
    }

    pub fn fine_grid(&self) -> &Grid3 {
        &self.fine
    }

    /// Upsamples one coarse channel (`coarse_len` values) to the fine grid.
    pub fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        assert_eq!(coarse.len(), self.coarse_len());
        let mut shape = self.coarse;
        let mut buf = coarse.to_vec();
        for axis in 0..3 {
            let (next, next_shape) = forward_axis(&buf, shape, axis, &self.taps[axis]);
            buf = next;
            shape = next_shape;
        }
        buf
    }

    /// Transpose of [`Upsampler::apply`].
    pub fn adjoint(&self, fine: &[f64]) -> Vec<f64> {
        assert_eq!(fine.len(), self.fine.len());
        let mut shape = self.fine.shape();
        let mut buf = fine.to_vec();
        for axis in (0..3).rev() {
            let (next, next_shape) =
                adjoint_axis(&buf, shape, axis, &self.taps[axis], self.coarse[axis]);
            buf = next;
            shape = next_shape;
        }
        buf
    }
}

fn strides(shape: [usize; 3]) -> [usize; 3] {
    [shape[1] * shape[2], shape[2], 1]
}

fn forward_axis(
    input: &[f64],
    shape: [usize; 3],
    axis: usize,
    taps: &[Tap],
) -> (Vec<f64>, [usize; 3]) {
    let mut out_shape = shape;
    out_shape[axis] = taps.len();
    let (si, so) = (strides(shape), strides(out_shape));
    let mut out = vec![0.0; out_shape.iter().product()];
    for z in 0..out_shape[0] {
        for y in 0..out_shape[1] {
            for x in 0..out_shape[2] {
                let pos = [z, y, x];
                let tap = taps[pos[axis]];
                let mut base = 0;
                for a in 0..3 {
                    if a != axis {
                        base += pos[a] * si[a];
                    }
                }
                out[z * so[0] + y * so[1] + x] = tap.w_lo * input[base + tap.lo * si[axis]]
                    + tap.w_hi * input[base + tap.hi * si[axis]];
            }
        }
    }
    (out, out_shape)
}

fn adjoint_axis(
    input: &[f64],
    shape: [usize; 3],
    axis: usize,
    taps: &[Tap],
    coarse_len: usize,
) -> (Vec<f64>, [usize; 3]) {
    let mut out_shape = shape;
    out_shape[axis] = coarse_len;
    let (si, so) = (strides(shape), strides(out_shape));
    let mut out = vec![0.0; out_shape.iter().product()];
    for z in 0..shape[0] {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                let pos = [z, y, x];
                let tap = taps[pos[axis]];
                let mut base = 0;
                for a in 0..3 {
                    if a != axis {
                        base += pos[a] * so[a];
                    }
                }
                let g = input[z * si[0] + y * si[1] + x];
                out[base + tap.lo * so[axis]] += tap.w_lo * g;
                out[base + tap.hi * so[axis]] += tap.w_hi * g;
            }
        }
    }
    (out, out_shape)
}

/// Upsamples each coarse channel onto `fine`.
pub fn upsample_trilinear(coarse: &[ScalarField], fine: &Grid3) -> Result<Vec<ScalarField>> {
    let first = coarse
        .first()
        .ok_or_else(|| Error::Shape("no channels to upsample".into()))?;
    let factor = factor_between(first.grid(), fine)?;
    let up = Upsampler::new(*fine, factor)?;
    coarse
        .iter()
        .map(|c| {
            if c.grid().shape() != up.coarse_shape() {
                return Err(Error::Shape("coarse channels differ in shape".into()));
            }
            ScalarField::new(*fine, up.apply(c.values()))
        })
        .collect()
}

/// Pulls fine-grid gradients back onto a coarse grid.
pub fn upsample_adjoint(fine: &[ScalarField], coarse: &Grid3) -> Result<Vec<ScalarField>> {
    let first = fine
        .first()
        .ok_or_else(|| Error::Shape("no channels to pull back".into()))?;
    let factor = factor_between(coarse, first.grid())?;
    let up = Upsampler::new(*first.grid(), factor)?;
    fine.iter()
        .map(|f| {
            first.grid().check_same_shape(f.grid(), "fine channels")?;
            ScalarField::new(*coarse, up.adjoint(f.values()))
        })
        .collect()
}

fn factor_between(coarse: &Grid3, fine: &Grid3) -> Result<usize> {
    let (c, f) = (coarse.shape(), fine.shape());
    let factor = f[0] / c[0];
    if factor == 0 || (0..3).any(|a| c[a] * factor != f[a]) {
        return Err(Error::Shape(format!(
            "fine shape {f:?} is not an integer multiple of coarse shape {c:?}"
        )));
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn factor_one_is_identity() {
        let g = Grid3::isotropic([3, 4, 5]).unwrap();
        let up = Upsampler::new(g, 1).unwrap();
        let x: Vec<f64> = (0..g.len()).map(|i| (i as f64).sin()).collect();
        assert_eq!(up.apply(&x), x);
        assert_eq!(up.adjoint(&x), x);
    }

    #[test]
    fn constants_are_reproduced() {
        let g = Grid3::isotropic([4, 8, 12]).unwrap();
        let up = Upsampler::new(g, 4).unwrap();
        let out = up.apply(&vec![2.5; up.coarse_len()]);
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn one_dimensional_weights() {
        // Coarse [0, 4] upsampled x2: positions -0.25, 0.25, 0.75, 1.25 clamp to [0, 1].
        let g = Grid3::isotropic([1, 1, 4]).unwrap();
        let up = Upsampler {
            coarse: [1, 1, 2],
            fine: g,
            factor: 2,
            taps: [taps(1, 1), taps(1, 1), taps(2, 2)],
        };
        assert_eq!(up.apply(&[0.0, 4.0]), vec![0.0, 1.0, 3.0, 4.0]);
    }

    #[test]
    fn adjoint_dot_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (shape, factor) in [([4, 4, 4], 2), ([8, 4, 12], 4), ([6, 9, 3], 3)] {
            let up = Upsampler::new(Grid3::isotropic(shape).unwrap(), factor).unwrap();
            let x: Vec<f64> = (0..up.coarse_len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let y: Vec<f64> = (0..up.fine_grid().len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let lhs: f64 = up.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(up.adjoint(&y)).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn non_divisible_shape() {
        let g = Grid3::isotropic([4, 4, 6]).unwrap();
        assert!(matches!(Upsampler::new(g, 4), Err(Error::Shape(_))));
        let coarse = Grid3::isotropic([2, 2, 2]).unwrap();
        let fine = Grid3::isotropic([4, 4, 5]).unwrap();
        let c = ScalarField::zeros(coarse);
        assert!(upsample_trilinear(&[c], &fine).is_err());
    }

    #[test]
    fn field_wrappers_round_trip_shapes() {
        let coarse = Grid3::isotropic([2, 2, 2]).unwrap();
        let fine = Grid3::isotropic([4, 4, 4]).unwrap();
        let up = upsample_trilinear(&[ScalarField::zeros(coarse)], &fine).unwrap();
        assert_eq!(up[0].grid().shape(), [4, 4, 4]);
        let back = upsample_adjoint(&up, &coarse).unwrap();
        assert_eq!(back[0].grid().shape(), [2, 2, 2]);
    }
}

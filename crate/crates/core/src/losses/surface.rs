//! Distance-map weighted losses: one-sided Hausdorff, boundary, generalized surface.

use super::Raw;
use crate::error::{Error, Result};

pub const GSL_DEN_GUARD: f64 = 1e-12;

pub(crate) fn hausdorff(raw: &Raw, d: &[f64]) -> (f64, Vec<f64>) {
    let scale = 1.0 / (raw.c * raw.n) as f64;
    let terms: Vec<f64> = (0..raw.c)
        .map(|k| {
            let (p, t) = (raw.p_class(k), raw.t_class(k));
            let dk = &d[k * raw.n..(k + 1) * raw.n];
            let mut s = 0.0;
            for i in 0..raw.n {
                let r = t[i] - p[i];
                s += r * r * dk[i] * dk[i];
            }
            s * scale
        })
        .collect();
    (terms.iter().sum(), terms)
}

pub(crate) fn hausdorff_grad(raw: &Raw, d: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (raw.c * raw.n) as f64;
    (0..raw.c * raw.n)
        .map(|j| -2.0 * (raw.t[j] - raw.p[j]) * d[j] * d[j] * scale)
        .collect()
}

pub(crate) fn boundary(raw: &Raw, d: &[f64]) -> (f64, Vec<f64>) {
    let scale = 1.0 / (raw.c * raw.n) as f64;
    let terms: Vec<f64> = (0..raw.c)
        .map(|k| {
            let p = raw.p_class(k);
            let dk = &d[k * raw.n..(k + 1) * raw.n];
            let mut s = 0.0;
            for i in 0..raw.n {
                s += dk[i] * p[i];
            }
            s * scale
        })
        .collect();
    (terms.iter().sum(), terms)
}

pub(crate) fn boundary_grad(raw: &Raw, d: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (raw.c * raw.n) as f64;
    d.iter().map(|&v| v * scale).collect()
}

/// Weighted `sum D^2` per class and its guarded total.
fn gsl_denominator(raw: &Raw, d: &[f64], w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let per_class: Vec<f64> = (0..raw.c)
        .map(|k| {
            let dk = &d[k * raw.n..(k + 1) * raw.n];
            let mut s = 0.0;
            for &v in dk {
                s += v * v;
            }
            w[k] * s
        })
        .collect();
    let total: f64 = per_class.iter().sum();
    if total == 0.0 {
        return Err(Error::DegenerateGroundTruth(
            "every class has an all-zero distance map (or zero weight)".into(),
        ));
    }
    Ok((per_class, total.max(GSL_DEN_GUARD)))
}

pub(crate) fn generalized_surface(raw: &Raw, d: &[f64], w: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (den_k, den) = gsl_denominator(raw, d, w)?;
    let mut num = 0.0;
    let mut terms = Vec::with_capacity(raw.c);
    for k in 0..raw.c {
        let (p, t) = (raw.p_class(k), raw.t_class(k));
        let dk = &d[k * raw.n..(k + 1) * raw.n];
        let mut s = 0.0;
        for i in 0..raw.n {
            let r = dk[i] * (1.0 - (t[i] + p[i]));
            s += r * r;
        }
        let num_k = w[k] * s;
        num += num_k;
        terms.push((den_k[k] - num_k) / den);
    }
    Ok((1.0 - num / den, terms))
}

pub(crate) fn generalized_surface_grad(raw: &Raw, d: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let (_, den) = gsl_denominator(raw, d, w)?;
    let mut g = vec![0.0; raw.c * raw.n];
    for (k, &wk) in w.iter().enumerate().take(raw.c) {
        for j in k * raw.n..(k + 1) * raw.n {
            g[j] = 2.0 * wk * d[j] * d[j] * (1.0 - (raw.t[j] + raw.p[j])) / den;
        }
    }
    Ok(g)
}

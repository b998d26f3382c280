//! Overlap-driven losses: Dice, Dice + cross-entropy, generalized Dice.

use super::Raw;
use crate::error::{Error, Result};

pub const DICE_SMOOTH: f64 = 1e-6;
pub const CE_CLAMP: f64 = 1e-7;

/// Per-class `(2 sum TP, sum T^2 + sum P^2)`.
fn overlaps(raw: &Raw) -> Vec<(f64, f64)> {
    (0..raw.c)
        .map(|k| {
            let (p, t) = (raw.p_class(k), raw.t_class(k));
            let mut inter = 0.0;
            let mut size = 0.0;
            for i in 0..raw.n {
                inter += t[i] * p[i];
                size += t[i] * t[i] + p[i] * p[i];
            }
            (2.0 * inter, size)
        })
        .collect()
}

pub(crate) fn dice(raw: &Raw) -> (f64, Vec<f64>) {
    let c = raw.c as f64;
    let terms: Vec<f64> = overlaps(raw)
        .into_iter()
        .map(|(num, den)| (1.0 - (num + DICE_SMOOTH) / (den + DICE_SMOOTH)) / c)
        .collect();
    (terms.iter().sum(), terms)
}

pub(crate) fn dice_grad(raw: &Raw) -> Vec<f64> {
    let c = raw.c as f64;
    let mut g = vec![0.0; raw.c * raw.n];
    for (k, (num, den)) in overlaps(raw).into_iter().enumerate() {
        let (num, den) = (num + DICE_SMOOTH, den + DICE_SMOOTH);
        let (p, t) = (raw.p_class(k), raw.t_class(k));
        for i in 0..raw.n {
            g[k * raw.n + i] = -(2.0 * t[i] * den - num * 2.0 * p[i]) / (den * den * c);
        }
    }
    g
}

fn clamp(p: f64) -> f64 {
    p.clamp(CE_CLAMP, 1.0 - CE_CLAMP)
}

pub(crate) fn cross_entropy(raw: &Raw) -> (f64, Vec<f64>) {
    let scale = 1.0 / (raw.c * raw.n) as f64;
    let terms: Vec<f64> = (0..raw.c)
        .map(|k| {
            let (p, t) = (raw.p_class(k), raw.t_class(k));
            let mut s = 0.0;
            for i in 0..raw.n {
                s += t[i] * clamp(p[i]).ln();
            }
            -s * scale
        })
        .collect();
    (terms.iter().sum(), terms)
}

pub(crate) fn cross_entropy_grad(raw: &Raw) -> Vec<f64> {
    let scale = 1.0 / (raw.c * raw.n) as f64;
    let mut g = vec![0.0; raw.c * raw.n];
    for (j, gj) in g.iter_mut().enumerate() {
        let p = raw.p[j];
        // The clamp is flat outside its window.
        if p > CE_CLAMP && p < 1.0 - CE_CLAMP {
            *gj = -raw.t[j] / p * scale;
        }
    }
    g
}

pub(crate) fn dice_ce(raw: &Raw) -> (f64, Vec<f64>) {
    let (_, dice_terms) = dice(raw);
    let (_, ce_terms) = cross_entropy(raw);
    let terms: Vec<f64> = dice_terms
        .iter()
        .zip(&ce_terms)
        .map(|(a, b)| a + b)
        .collect();
    (terms.iter().sum(), terms)
}

pub(crate) fn dice_ce_grad(raw: &Raw) -> Vec<f64> {
    let mut g = dice_grad(raw);
    for (a, b) in g.iter_mut().zip(cross_entropy_grad(raw)) {
        *a += b;
    }
    g
}

/// Per-example weights `1 / (sum_i T_i^k)^2`, zero for classes absent from `T`.
fn gdl_weights(raw: &Raw) -> Result<Vec<f64>> {
    let w: Vec<f64> = (0..raw.c)
        .map(|k| {
            let area: f64 = raw.t_class(k).iter().sum();
            if area > 0.0 {
                1.0 / (area * area)
            } else {
                0.0
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateGroundTruth(
            "generalized Dice needs at least one non-empty class".into(),
        ));
    }
    Ok(w)
}

struct GdlParts {
    weights: Vec<f64>,
    inter: Vec<f64>,
    size: Vec<f64>,
    num: f64,
    den: f64,
}

fn gdl_parts(raw: &Raw) -> Result<GdlParts> {
    let weights = gdl_weights(raw)?;
    let mut inter = Vec::with_capacity(raw.c);
    let mut size = Vec::with_capacity(raw.c);
    for (num2, s) in overlaps(raw) {
        inter.push(num2 / 2.0);
        size.push(s);
    }
    let num: f64 = (0..raw.c).map(|k| weights[k] * inter[k]).sum();
    let den: f64 = (0..raw.c).map(|k| weights[k] * size[k]).sum();
    Ok(GdlParts {
        weights,
        inter,
        size,
        num,
        den,
    })
}

pub(crate) fn generalized_dice(raw: &Raw) -> Result<(f64, Vec<f64>)> {
    let g = gdl_parts(raw)?;
    let terms: Vec<f64> = (0..raw.c)
        .map(|k| g.weights[k] * (g.size[k] - 2.0 * g.inter[k]) / g.den)
        .collect();
    Ok((1.0 - 2.0 * g.num / g.den, terms))
}

pub(crate) fn generalized_dice_grad(raw: &Raw) -> Result<Vec<f64>> {
    let parts = gdl_parts(raw)?;
    let den2 = parts.den * parts.den;
    let mut g = vec![0.0; raw.c * raw.n];
    for k in 0..raw.c {
        let w = parts.weights[k];
        let (p, t) = (raw.p_class(k), raw.t_class(k));
        for i in 0..raw.n {
            g[k * raw.n + i] = -2.0 * w * (t[i] * parts.den - parts.num * 2.0 * p[i]) / den2;
        }
    }
    Ok(g)
}

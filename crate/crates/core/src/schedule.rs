//! Blend coefficient schedules between region and boundary losses.
//!
//! Epochs are 0-indexed and `t = T` is a valid final evaluation point, so every
//! schedule starts at 1 and ends at 0.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ScheduleKind {
    Linear,
    Step { step_length: usize },
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(flatten)]
    kind: ScheduleKind,
    total_epochs: usize,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, total_epochs: usize) -> Result<Self> {
        if total_epochs == 0 {
            return Err(Error::InvalidConfig(
                "total epochs must be at least 1".into(),
            ));
        }
        if let ScheduleKind::Step { step_length } = kind {
            if step_length == 0 || step_length > total_epochs {
                return Err(Error::InvalidConfig(format!(
                    "step length {step_length} must lie in [1, {total_epochs}]"
                )));
            }
        }
        Ok(Self { kind, total_epochs })
    }

    pub fn linear(total_epochs: usize) -> Result<Self> {
        Self::new(ScheduleKind::Linear, total_epochs)
    }

    pub fn step(total_epochs: usize, step_length: usize) -> Result<Self> {
        Self::new(ScheduleKind::Step { step_length }, total_epochs)
    }

    pub fn cosine(total_epochs: usize) -> Result<Self> {
        Self::new(ScheduleKind::Cosine, total_epochs)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    /// Blend weight of the region loss at epoch `t`.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        let total = self.total_epochs;
        if t > total {
            return Err(Error::InvalidEpoch { epoch: t, total });
        }
        let a = match self.kind {
            ScheduleKind::Linear => 1.0 - t as f64 / total as f64,
            ScheduleKind::Step { step_length } => {
                let steps = total / step_length;
                // Overshoots below zero near t = T when h does not divide T.
                (1.0 - (t / step_length) as f64 / steps as f64).clamp(0.0, 1.0)
            }
            ScheduleKind::Cosine => 0.5 * (1.0 + (PI * t as f64 / total as f64).cos()),
        };
        Ok(a.clamp(0.0, 1.0))
    }

    /// `(t, alpha(t))` for `t = 0..=T`.
    pub fn table(&self) -> Vec<(usize, f64)> {
        (0..=self.total_epochs)
            .map(|t| (t, self.alpha(t).expect("t within range")))
            .collect()
    }
}

//! Segmentation losses driven by signed distance maps, together with the
//! distance transforms, surface metrics, blend schedules and a small training
//! harness needed to use and check them.

pub mod dtm;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod schedule;
pub mod svf;
pub mod toy;
pub mod volume;

pub use error::{Error, Result};

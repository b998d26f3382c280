//! SVF1 volume files.
//!
//! ```text
//! bytes 0..4      magic "SVF1"
//! bytes 4..8      u32 LE header length H
//! bytes 8..8+H    UTF-8 JSON header {shape, spacing, dtype, channels, layout}
//! bytes 8+H..     channels * z * y * x little-endian values, channel-major
//! ```
//!
//! Payload dtypes are `u8`, `f32` and `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dtm::BinaryMask;
use crate::error::{Error, Result};
use crate::volume::{Grid3, LabelVolume, Normalization, ProbVolume, ScalarField};

pub const MAGIC: &[u8; 4] = b"SVF1";
pub const LAYOUT: &str = "c-order-x-fastest";
const PREAMBLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Payload {
    pub fn dtype(&self) -> Dtype {
        match self {
            Payload::U8(_) => Dtype::U8,
            Payload::F32(_) => Dtype::F32,
            Payload::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::U8(v) => v.len(),
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Payload::U8(v) => v.iter().map(|&b| b as f64).collect(),
            Payload::F32(v) => v.iter().map(|&x| x as f64).collect(),
            Payload::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    shape: [usize; 3],
    spacing: [f64; 3],
    dtype: Dtype,
    channels: usize,
    layout: String,
}

/// A decoded SVF1 file: grid geometry plus a channel-major payload.
#[derive(Debug, Clone, PartialEq)]
pub struct SvfVolume {
    grid: Grid3,
    channels: usize,
    payload: Payload,
}

impl SvfVolume {
    pub fn new(grid: Grid3, channels: usize, payload: Payload) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Shape("channels must be at least 1".into()));
        }
        if payload.len() != channels * grid.len() {
            return Err(Error::Shape(format!(
                "payload has {} values, expected {} channels x {} voxels",
                payload.len(),
                channels,
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            channels,
            payload,
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn dtype(&self) -> Dtype {
        self.payload.dtype()
    }

    pub fn from_labels(labels: &LabelVolume) -> Result<Self> {
        let bytes = labels
            .labels()
            .iter()
            .enumerate()
            .map(|(index, &l)| {
                u8::try_from(l).map_err(|_| Error::InvalidLabel {
                    label: l,
                    index,
                    num_classes: 256,
                })
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(*labels.grid(), 1, Payload::U8(bytes))
    }

    pub fn from_masks(masks: &[BinaryMask]) -> Result<Self> {
        let grid = *masks
            .first()
            .ok_or_else(|| Error::Shape("no masks to encode".into()))?
            .grid();
        let mut bytes = Vec::with_capacity(masks.len() * grid.len());
        for m in masks {
            grid.check_same_shape(m.grid(), "mask stack")?;
            bytes.extend(m.bits().iter().map(|&b| b as u8));
        }
        Self::new(grid, masks.len(), Payload::U8(bytes))
    }

    /// Encodes a field stack; `dtype` must be a float type.
    pub fn from_fields(fields: &[ScalarField], dtype: Dtype) -> Result<Self> {
        let grid = *fields
            .first()
            .ok_or_else(|| Error::Shape("no fields to encode".into()))?
            .grid();
        for f in fields {
            grid.check_same_shape(f.grid(), "field stack")?;
        }
        let flat = fields.iter().flat_map(|f| f.values().iter().copied());
        let payload = match dtype {
            Dtype::F32 => Payload::F32(flat.map(|v| v as f32).collect()),
            Dtype::F64 => Payload::F64(flat.collect()),
            Dtype::U8 => return Err(Error::Shape("fields cannot be stored as u8".into())),
        };
        Self::new(grid, fields.len(), payload)
    }

    pub fn from_prob(prob: &ProbVolume, dtype: Dtype) -> Result<Self> {
        let payload = match dtype {
            Dtype::F32 => Payload::F32(prob.values().iter().map(|&v| v as f32).collect()),
            Dtype::F64 => Payload::F64(prob.values().to_vec()),
            Dtype::U8 => Payload::U8(
                prob.values()
                    .iter()
                    .map(|&v| (v * 255.0).round() as u8)
                    .collect(),
            ),
        };
        Self::new(*prob.grid(), prob.num_classes(), payload)
    }

    /// Interprets a single-channel `u8` volume as labels.
    pub fn to_labels(&self, num_classes: usize) -> Result<LabelVolume> {
        match (&self.payload, self.channels) {
            (Payload::U8(bytes), 1) => LabelVolume::new(
                self.grid,
                bytes.iter().map(|&b| b as u32).collect(),
                num_classes,
            ),
            _ => Err(Error::Shape(format!(
                "expected a single-channel u8 label volume, found {} channel(s) of {:?}",
                self.channels,
                self.dtype()
            ))),
        }
    }

    pub fn to_fields(&self) -> Result<Vec<ScalarField>> {
        let n = self.grid.len();
        let flat = self.payload.to_f64();
        flat.chunks(n)
            .map(|c| ScalarField::new(self.grid, c.to_vec()))
            .collect()
    }

    pub fn to_prob(&self) -> Result<ProbVolume> {
        ProbVolume::new(
            self.grid,
            self.channels,
            self.payload.to_f64(),
            Normalization::Unconstrained,
        )
    }

    /// One mask per channel, foreground where the value is non-zero.
    pub fn to_masks(&self) -> Result<Vec<BinaryMask>> {
        let n = self.grid.len();
        self.payload
            .to_f64()
            .chunks(n)
            .map(|c| BinaryMask::new(self.grid, c.iter().map(|&v| v != 0.0).collect()))
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = Header {
            shape: self.grid.shape(),
            spacing: self.grid.spacing(),
            dtype: self.dtype(),
            channels: self.channels,
            layout: LAYOUT.to_string(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out =
            Vec::with_capacity(PREAMBLE + header.len() + self.payload.len() * self.dtype().width());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        match &self.payload {
            Payload::U8(v) => out.extend_from_slice(v),
            Payload::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::format(bytes.len(), "truncated magic"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::format(0, "bad magic, expected SVF1"));
        }
        if bytes.len() < PREAMBLE {
            return Err(Error::format(bytes.len(), "truncated header length"));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let payload_start = PREAMBLE
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::format(bytes.len(), "truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..payload_start])
            .map_err(|e| Error::format(PREAMBLE, format!("invalid header: {e}")))?;
        if header.layout != LAYOUT {
            return Err(Error::format(
                PREAMBLE,
                format!("unsupported layout {:?}", header.layout),
            ));
        }
        if header.channels == 0 {
            return Err(Error::format(PREAMBLE, "channels must be at least 1"));
        }
        let grid = Grid3::new(header.shape, header.spacing)
            .map_err(|e| Error::format(PREAMBLE, e.to_string()))?;
        let count = grid
            .len()
            .checked_mul(header.channels)
            .ok_or_else(|| Error::format(PREAMBLE, "payload size overflows"))?;
        let width = header.dtype.width();
        let payload = &bytes[payload_start..];
        let expected = count
            .checked_mul(width)
            .ok_or_else(|| Error::format(PREAMBLE, "payload size overflows"))?;
        if payload.len() != expected {
            let offset = payload_start + payload.len().min(expected);
            return Err(Error::format(
                offset,
                format!(
                    "payload is {} bytes but header implies {} ({} values of {:?})",
                    payload.len(),
                    expected,
                    count,
                    header.dtype
                ),
            ));
        }
        let payload = match header.dtype {
            Dtype::U8 => Payload::U8(payload.to_vec()),
            Dtype::F32 => Payload::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F64 => Payload::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Self::new(grid, header.channels, payload)
    }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<SvfVolume> {
    SvfVolume::decode(&fs::read(path)?)
}

pub fn write_volume(path: impl AsRef<Path>, volume: &SvfVolume) -> Result<()> {
    fs::write(path, volume.encode())?;
    Ok(())
}

//! RTEN: a minimal raw tensor container.
//!
//! ```text
//! "RTEN" | version u8 (=1) | dtype u8 (0 = u8, 1 = f32 LE) | rank u8 | rank x u32 LE dims | row-major payload
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Dtype, Heatmap, ImageRaster, MaskStack, PixelData, RefMap};

pub const MAGIC: [u8; 4] = *b"RTEN";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TensorError {
    #[error("bad magic {0:?}, expected \"RTEN\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("truncated header: {0} bytes")]
    TruncatedHeader(usize),
    #[error("dimensions {0:?} overflow the addressable size")]
    DimOverflow(Vec<u64>),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("expected a rank-{expected} {dtype} tensor, found rank {rank} {found}")]
    Layout {
        expected: usize,
        dtype: &'static str,
        rank: usize,
        found: &'static str,
    },
}

fn dtype_name(d: Dtype) -> &'static str {
    match d {
        Dtype::U8 => "u8",
        Dtype::F32 => "f32",
    }
}

/// A decoded tensor with its dims still attached.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub data: PixelData,
}

impl RawTensor {
    pub fn encode(&self) -> Vec<u8> {
        let (code, width) = match self.data {
            PixelData::U8(_) => (0u8, 1),
            PixelData::F32(_) => (1u8, 4),
        };
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.dims.len() + width * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&[VERSION, code, self.dims.len() as u8]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            PixelData::U8(v) => out.extend_from_slice(v),
            PixelData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, TensorError> {
        if bytes.len() < 4 {
            return Err(TensorError::TruncatedHeader(bytes.len()));
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("four bytes");
        if magic != MAGIC {
            return Err(TensorError::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(TensorError::TruncatedHeader(bytes.len()));
        }
        let (version, code, rank) = (bytes[4], bytes[5], bytes[6] as usize);
        if version != VERSION {
            return Err(TensorError::UnsupportedVersion(version));
        }
        let elem = match code {
            0 => 1usize,
            1 => 4,
            other => return Err(TensorError::UnknownDtype(other)),
        };
        let dims_end = HEADER_LEN + 4 * rank;
        if bytes.len() < dims_end {
            return Err(TensorError::TruncatedHeader(bytes.len()));
        }
        let raw_dims: Vec<u64> = bytes[HEADER_LEN..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("four bytes")) as u64)
            .collect();
        let payload_len = raw_dims
            .iter()
            .try_fold(elem as u64, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= isize::MAX as u64)
            .ok_or_else(|| TensorError::DimOverflow(raw_dims.clone()))? as usize;
        let payload = &bytes[dims_end..];
        if payload.len() < payload_len {
            return Err(TensorError::TruncatedPayload {
                expected: payload_len,
                actual: payload.len(),
            });
        }
        if payload.len() > payload_len {
            return Err(TensorError::TrailingBytes(payload.len() - payload_len));
        }
        let data = match code {
            0 => PixelData::U8(payload.to_vec()),
            _ => PixelData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                    .collect(),
            ),
        };
        Ok(RawTensor {
            dims: raw_dims.into_iter().map(|d| d as usize).collect(),
            data,
        })
    }

    fn expect(&self, rank: usize, dtype: Option<Dtype>) -> std::result::Result<(), TensorError> {
        let found = self.data.dtype();
        if self.dims.len() != rank || dtype.is_some_and(|d| d != found) {
            return Err(TensorError::Layout {
                expected: rank,
                dtype: dtype.map_or("u8/f32", dtype_name),
                rank: self.dims.len(),
                found: dtype_name(found),
            });
        }
        Ok(())
    }

    fn into_u8(self) -> Vec<u8> {
        match self.data {
            PixelData::U8(v) => v,
            PixelData::F32(_) => unreachable!("dtype checked"),
        }
    }
}

/// Conversion between a raster type and its RTEN layout.
pub trait Rten: Sized {
    fn to_raw(&self) -> RawTensor;
    fn from_raw(raw: RawTensor) -> Result<Self>;

    fn to_rten_bytes(&self) -> Vec<u8> {
        self.to_raw().encode()
    }

    fn from_rten_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let raw = RawTensor::decode(bytes).map_err(|source| Error::Tensor {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_raw(raw).map_err(|e| match e {
            Error::Tensor { source, .. } => Error::Tensor {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }
}

fn layout_err(e: TensorError) -> Error {
    Error::Tensor {
        path: Default::default(),
        source: e,
    }
}

impl Rten for ImageRaster {
    fn to_raw(&self) -> RawTensor {
        RawTensor {
            dims: vec![self.channels(), self.height(), self.width()],
            data: self.data().clone(),
        }
    }

    fn from_raw(raw: RawTensor) -> Result<Self> {
        raw.expect(3, None).map_err(layout_err)?;
        ImageRaster::new(raw.dims[0], raw.dims[1], raw.dims[2], raw.data)
    }
}

impl Rten for RefMap {
    fn to_raw(&self) -> RawTensor {
        RawTensor {
            dims: vec![self.height(), self.width()],
            data: PixelData::U8(self.data().to_vec()),
        }
    }

    fn from_raw(raw: RawTensor) -> Result<Self> {
        raw.expect(2, Some(Dtype::U8)).map_err(layout_err)?;
        let (h, w) = (raw.dims[0], raw.dims[1]);
        RefMap::new(h, w, raw.into_u8())
    }
}

impl Rten for MaskStack {
    fn to_raw(&self) -> RawTensor {
        RawTensor {
            dims: vec![self.num_classes(), self.height(), self.width()],
            data: PixelData::U8(self.data().to_vec()),
        }
    }

    fn from_raw(raw: RawTensor) -> Result<Self> {
        raw.expect(3, Some(Dtype::U8)).map_err(layout_err)?;
        let (l, h, w) = (raw.dims[0], raw.dims[1], raw.dims[2]);
        MaskStack::new(l, h, w, raw.into_u8())
    }
}

impl Rten for Heatmap {
    fn to_raw(&self) -> RawTensor {
        RawTensor {
            dims: vec![self.num_classes(), self.height(), self.width()],
            data: PixelData::F32(self.data().to_vec()),
        }
    }

    fn from_raw(raw: RawTensor) -> Result<Self> {
        raw.expect(3, Some(Dtype::F32)).map_err(layout_err)?;
        let (l, h, w) = (raw.dims[0], raw.dims[1], raw.dims[2]);
        match raw.data {
            PixelData::F32(v) => Heatmap::new(l, h, w, v),
            PixelData::U8(_) => unreachable!("dtype checked"),
        }
    }
}

pub fn read_tensor<T: Rten>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    T::from_rten_bytes(&bytes, path)
}

pub fn write_tensor<T: Rten>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, value.to_rten_bytes()).map_err(|e| Error::io(path, e))
}

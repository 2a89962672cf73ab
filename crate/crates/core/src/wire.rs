//! Little-endian helpers shared by the binary formats and the fabric.

use std::io::Read;

use crate::error::{KgeError, Result};
use crate::real::{Real, StoragePrecision};

/// Reader that tracks the byte offset of every field for error messages.
pub(crate) struct OffsetReader<R> {
    inner: R,
    pub(crate) offset: u64,
    what: &'static str,
}

impl<R: Read> OffsetReader<R> {
    pub(crate) fn new(inner: R, what: &'static str) -> Self {
        OffsetReader {
            inner,
            offset: 0,
            what,
        }
    }

    pub(crate) fn fill(&mut self, buf: &mut [u8], field: &str) -> Result<()> {
        let start = self.offset;
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(KgeError::format(
                        self.what,
                        start,
                        format!("truncated {field}"),
                    ))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let mut m = [0u8; 4];
        self.fill(&mut m, "magic")?;
        if &m != expected {
            return Err(KgeError::format(
                self.what,
                0,
                format!("bad magic {:?}", String::from_utf8_lossy(&m)),
            ));
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self, field: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b, field)?;
        Ok(b[0])
    }

    pub(crate) fn u32(&mut self, field: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b, field)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn u64(&mut self, field: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b, field)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(KgeError::format(self.what, self.offset, "trailing bytes")),
        }
    }
}


const READ_BLOCK: usize = 1 << 16;

impl<R: Read> OffsetReader<R> {
    /// Reads `count` values of `width` bytes in bounded blocks, so a forged
    /// count fails on truncation instead of allocating up front.
    pub(crate) fn values<T: Real>(&mut self, count: u64, precision: StoragePrecision, field: &str) -> Result<Vec<T>> {
        let width = precision.bytes() as u64;
        let total = count
            .checked_mul(width)
            .ok_or_else(|| KgeError::format(self.what, self.offset, format!("{field} length overflows")))?;
        let mut out = Vec::with_capacity((count as usize).min(READ_BLOCK));
        let mut left = total;
        let mut buf = vec![0u8; READ_BLOCK.min(total as usize)];
        while left > 0 {
            let take = (left as usize).min(READ_BLOCK);
            self.fill(&mut buf[..take], field)?;
            get_values(&buf[..take], precision, &mut out);
            left -= take as u64;
        }
        Ok(out)
    }

    pub(crate) fn u32s(&mut self, count: u64, field: &str) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity((count as usize).min(READ_BLOCK));
        for _ in 0..count {
            out.push(self.u32(field)?);
        }
        Ok(out)
    }

    pub(crate) fn bytes<const N: usize>(&mut self, field: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b, field)?;
        Ok(b)
    }
}

/// Appends `values` at `precision`. Values must already be representable
/// at that precision for the round trip to be exact.
pub(crate) fn put_values<T: Real>(values: &[T], precision: StoragePrecision, out: &mut Vec<u8>) {
    out.reserve(values.len() * precision.bytes());
    match precision {
        StoragePrecision::Half => {
            for v in values {
                out.extend_from_slice(&half::f16::from_f64(v.as_f64()).to_le_bytes());
            }
        }
        StoragePrecision::Single => {
            for v in values {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        StoragePrecision::Double => {
            for v in values {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
    }
}

/// Inverse of [`put_values`]; `bytes.len()` must be a multiple of the width.
pub(crate) fn get_values<T: Real>(bytes: &[u8], precision: StoragePrecision, out: &mut Vec<T>) {
    let w = precision.bytes();
    out.reserve(bytes.len() / w);
    for c in bytes.chunks_exact(w) {
        let x = match precision {
            StoragePrecision::Half => half::f16::from_le_bytes([c[0], c[1]]).to_f64(),
            StoragePrecision::Single => f32::from_le_bytes(c.try_into().unwrap()) as f64,
            StoragePrecision::Double => f64::from_le_bytes(c.try_into().unwrap()),
        };
        out.push(T::lit(x));
    }
}

/// Compute-precision width for `T`.
pub(crate) fn native<T: Real>() -> StoragePrecision {
    if T::BYTES == 8 {
        StoragePrecision::Double
    } else {
        StoragePrecision::Single
    }
}

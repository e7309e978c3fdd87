//! Segment batches on disk: `FSEG`, a u32 version, u32 N, M, C, f64 rate,
//! u8 normalized flag, u64 start per segment, u8 degenerate flag per
//! segment and channel, then the f64 values in `[n][c][m]` order.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::signal::SegmentBatch;

pub const BATCH_MAGIC: &[u8; 4] = b"FSEG";
pub const BATCH_VERSION: u32 = 1;

pub fn batch_to_bytes(b: &SegmentBatch) -> Vec<u8> {
    let (n, m, c) = b.shape();
    let mut out = Vec::with_capacity(32 + n * 9 + n * c + 8 * b.data().len());
    out.extend_from_slice(BATCH_MAGIC);
    out.write_u32::<LE>(BATCH_VERSION).unwrap();
    for d in [n, m, c] {
        out.write_u32::<LE>(d as u32).unwrap();
    }
    out.write_f64::<LE>(b.sample_rate_hz()).unwrap();
    out.write_u8(b.is_normalized() as u8).unwrap();
    for &s in b.starts() {
        out.write_u64::<LE>(s as u64).unwrap();
    }
    for &d in b.degenerate() {
        out.write_u8(d as u8).unwrap();
    }
    for &v in b.data() {
        out.write_f64::<LE>(v).unwrap();
    }
    out
}

pub fn batch_from_bytes(bytes: &[u8]) -> Result<SegmentBatch> {
    let short = |_: std::io::Error| Error::Corrupt("segment file is truncated".into());
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(short)?;
    if &magic != BATCH_MAGIC {
        return Err(Error::Corrupt("not a segment file (bad magic)".into()));
    }
    let version = r.read_u32::<LE>().map_err(short)?;
    if version != BATCH_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = r.read_u32::<LE>().map_err(short)? as usize;
    let m = r.read_u32::<LE>().map_err(short)? as usize;
    let c = r.read_u32::<LE>().map_err(short)? as usize;
    let rate = r.read_f64::<LE>().map_err(short)?;
    let normalized = r.read_u8().map_err(short)? != 0;
    let body = n * 8 + n * c + n * m * c * 8;
    let remaining = bytes.len() - r.position() as usize;
    if remaining != body {
        return Err(Error::Corrupt(format!("segment payload holds {remaining} bytes, header promises {body}")));
    }
    let starts = (0..n).map(|_| r.read_u64::<LE>().map(|v| v as usize)).collect::<std::io::Result<_>>().map_err(short)?;
    let degenerate = (0..n * c).map(|_| r.read_u8().map(|v| v != 0)).collect::<std::io::Result<_>>().map_err(short)?;
    let data = (0..n * m * c).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<_>>().map_err(short)?;
    SegmentBatch::new(data, (n, m, c), rate, normalized, starts, degenerate).map_err(|e| Error::Corrupt(e.to_string()))
}

pub fn read_batch(path: &Path) -> Result<SegmentBatch> {
    batch_from_bytes(&fs::read(path)?)
}

pub fn write_batch(path: &Path, b: &SegmentBatch) -> Result<()> {
    atomic_write(path, &batch_to_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let b = SegmentBatch::new(
            (0..24).map(|i| i as f64 / 23.0).collect(),
            (2, 4, 3),
            512.0,
            true,
            vec![0, 2],
            vec![false, true, false, false, false, true],
        )
        .unwrap();
        let bytes = batch_to_bytes(&b);
        assert_eq!(batch_from_bytes(&bytes).unwrap(), b);
        assert!(matches!(batch_from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Corrupt(_))));
        assert!(matches!(batch_from_bytes(&bytes[..10]), Err(Error::Corrupt(_))));
    }
}

//! Binary checkpoint of all four networks.
//!
//! Layout, little-endian: magic `FECG`, `u32` version, the architecture
//! (`u32` ngf, n_blocks, ndf, d_layers, abdominal channels, fetal channels,
//! then `f64` dropout), `u32` tensor count, then per tensor a `u16` name
//! length, the UTF-8 name, a `u8` rank, `u32` dims and the values as `f32`.
//! Tensors appear in [`CycleGanModel::tensors`] order, batch-norm running
//! statistics included. Optimizer moments are not stored.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::arch::ArchConfig;
use super::model::CycleGanModel;
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::nn::Float;

pub const MAGIC: &[u8; 4] = b"FECG";
pub const VERSION: u32 = 1;

pub fn to_bytes<T: Float>(model: &CycleGanModel<T>) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    let a = &model.arch;
    let put = |b: &mut Vec<u8>, v: usize| b.write_u32::<LE>(v as u32).unwrap();
    put(&mut b, VERSION as usize);
    for v in [a.ngf, a.n_blocks, a.ndf, a.d_layers, a.mecg_channels, a.fecg_channels] {
        put(&mut b, v);
    }
    b.write_f64::<LE>(a.dropout).unwrap();
    let tensors = model.tensors();
    put(&mut b, tensors.len());
    for (name, t) in &tensors {
        b.write_u16::<LE>(name.len() as u16).unwrap();
        b.extend_from_slice(name.as_bytes());
        b.write_u8(t.shape().len() as u8).unwrap();
        for &d in t.shape() {
            put(&mut b, d);
        }
        for v in t.data().iter() {
            b.write_f32::<LE>(v.as_f64() as f32).unwrap();
        }
    }
    b
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corrupt(msg.into())
}

pub fn from_bytes<T: Float>(bytes: &[u8]) -> Result<CycleGanModel<T>> {
    let mut r = Cursor::new(bytes);
    let eof = |_| corrupt("truncated checkpoint");
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != MAGIC {
        return Err(corrupt("not a checkpoint (bad magic)"));
    }
    let version = r.read_u32::<LE>().map_err(eof)?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.read_u32::<LE>().map_err(eof)? as usize;
    }
    let arch = ArchConfig {
        ngf: dims[0],
        n_blocks: dims[1],
        ndf: dims[2],
        d_layers: dims[3],
        mecg_channels: dims[4],
        fecg_channels: dims[5],
        dropout: r.read_f64::<LE>().map_err(eof)?,
    };
    arch.validate().map_err(|e| corrupt(format!("architecture: {e}")))?;
    let model = CycleGanModel::<T>::new(arch, 0)?;
    let tensors = model.tensors();
    let count = r.read_u32::<LE>().map_err(eof)? as usize;
    if count != tensors.len() {
        return Err(corrupt(format!("{count} tensors, architecture needs {}", tensors.len())));
    }
    for (name, t) in &tensors {
        let len = r.read_u16::<LE>().map_err(eof)? as usize;
        let mut raw = vec![0u8; len];
        r.read_exact(&mut raw).map_err(eof)?;
        if raw != name.as_bytes() {
            return Err(corrupt(format!("expected tensor `{name}`, found `{}`", String::from_utf8_lossy(&raw))));
        }
        let rank = r.read_u8().map_err(eof)? as usize;
        let shape = (0..rank)
            .map(|_| r.read_u32::<LE>().map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(eof)?;
        if shape != t.shape() {
            return Err(corrupt(format!("tensor `{name}` has shape {shape:?}, expected {:?}", t.shape())));
        }
        let mut vals = vec![0f32; t.numel()];
        r.read_f32_into::<LE>(&mut vals).map_err(eof)?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(format!("non-finite value in `{name}`")));
        }
        t.update(|w| w.iter_mut().zip(&vals).for_each(|(d, &v)| *d = T::of(v as f64)));
    }
    if (r.position() as usize) != bytes.len() {
        return Err(corrupt("trailing bytes after the last tensor"));
    }
    Ok(model)
}

/// Writes atomically: readers see the old file or the complete new one.
pub fn save<T: Float>(model: &CycleGanModel<T>, path: &Path) -> Result<()> {
    atomic_write(path, &to_bytes(model))
}

pub fn load<T: Float>(path: &Path) -> Result<CycleGanModel<T>> {
    from_bytes(&std::fs::read(path)?)
}

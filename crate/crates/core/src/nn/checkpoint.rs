//! Model checkpoint file.
//!
//! Layout, little-endian: magic `DLCK`, version `u32`, head code `u32`,
//! receivers `u32`, samples `u32`, config TOML length `u32` and UTF-8 text,
//! output count `u32` with `(offset, scale)` f64 pairs, parameter count
//! `u64`, parameters as f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::network::{Affine, Head, Network, NetworkConfig};

const MAGIC: &[u8; 4] = b"DLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &Network, mut w: W) -> Result<()> {
    let config = toml::to_string(net.config()).map_err(|e| Error::Config(e.to_string()))?;
    w.write_all(MAGIC)?;
    for v in [
        CHECKPOINT_VERSION,
        net.head().code(),
        net.receivers() as u32,
        net.samples() as u32,
        config.len() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(config.as_bytes())?;
    w.write_all(&(net.outputs() as u32).to_le_bytes())?;
    for a in net.normalization() {
        w.write_all(&a.offset.to_le_bytes())?;
        w.write_all(&a.scale.to_le_bytes())?;
    }
    w.write_all(&(net.param_count() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(net.param_count() * 8);
    for p in net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Network> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let head = Head::from_code(read_u32(&mut r)?).ok_or_else(|| Error::format("checkpoint", "unknown head"))?;
    let receivers = read_u32(&mut r)? as usize;
    let samples = read_u32(&mut r)? as usize;
    let len = read_u32(&mut r)? as usize;
    let mut text = vec![0u8; len];
    read_exact(&mut r, &mut text)?;
    let text = String::from_utf8(text).map_err(|_| Error::format("checkpoint", "config is not UTF-8"))?;
    let config: NetworkConfig = toml::from_str(&text).map_err(|e| Error::format("checkpoint", e.to_string()))?;
    let mut net = Network::zeroed(config, receivers, samples, head)?;
    let outputs = read_u32(&mut r)? as usize;
    if outputs != head.outputs() {
        return Err(Error::format("checkpoint", format!("{outputs} outputs for a {head:?} head")));
    }
    let mut norm = Vec::with_capacity(outputs);
    for _ in 0..outputs {
        norm.push(Affine {
            offset: read_f64(&mut r)?,
            scale: read_f64(&mut r)?,
        });
    }
    net.set_normalization(norm)?;
    let count = read_u64(&mut r)? as usize;
    if count != net.param_count() {
        return Err(Error::format(
            "checkpoint",
            format!("{count} parameters, config implies {}", net.param_count()),
        ));
    }
    let mut buf = vec![0u8; count * 8];
    read_exact(&mut r, &mut buf)?;
    let params = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    net.set_params(params)?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("checkpoint", "truncated"),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

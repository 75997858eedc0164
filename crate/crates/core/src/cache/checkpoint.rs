//! Checkpoint layout: 8-byte magic, u32 LE version, u32 LE header length,
//! JSON header (architecture, encoding, normalizer, per-network parameter
//! counts), then every network's parameters as little-endian f32.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{CacheArch, Mlp, Normalizer, RadianceCache};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GLOWRC\0\x01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: CacheArch,
    normalizer: Normalizer,
    param_counts: Vec<usize>,
}

pub fn write_checkpoint(cache: &RadianceCache<f32>) -> Vec<u8> {
    let header = Header {
        arch: *cache.arch(),
        normalizer: *cache.normalizer(),
        param_counts: cache.nets().iter().map(Mlp::param_count).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * cache.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for net in cache.nets() {
        for p in net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format(format!("checkpoint truncated in {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8], what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4, what)?.try_into().expect("4 bytes")))
}

pub fn read_checkpoint(mut bytes: &[u8]) -> Result<RadianceCache<f32>> {
    if take(&mut bytes, 8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a radiance cache checkpoint".into()));
    }
    let version = take_u32(&mut bytes, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = take_u32(&mut bytes, "header length")? as usize;
    let header: Header = serde_json::from_slice(take(&mut bytes, len, "header")?)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    if header.param_counts.len() != header.arch.kind.net_count() {
        return Err(Error::Format("checkpoint network count does not match its kind".into()));
    }
    let widths = header.arch.widths();
    let mut nets = Vec::new();
    for &n in &header.param_counts {
        let raw = take(&mut bytes, 4 * n, "parameters")?;
        let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        nets.push(Mlp::from_params(&widths, params).map_err(|e| Error::Format(e.to_string()))?);
    }
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len())));
    }
    RadianceCache::from_parts(header.arch, header.normalizer, nets)
}

pub fn save_checkpoint(path: &Path, cache: &RadianceCache<f32>) -> Result<()> {
    crate::io::atomic_write(path, &write_checkpoint(cache))
}

pub fn load_checkpoint(path: &Path) -> Result<RadianceCache<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

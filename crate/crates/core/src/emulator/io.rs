//! Model files: `FEMU`, version (u32 LE), header length (u32 LE), UTF-8
//! header text (model config, parameter total and one `[segment]` block per
//! parameter segment), then every parameter as a little-endian `f32` in
//! segment order.

use std::path::Path;

use super::ModelConfig;
use crate::kv::{parse_blocks, KeyValues};
use crate::tensor::ParamStore;
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"FEMU";
pub const MODEL_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

/// Serialises a model to bytes.
pub fn write_model(params: &ParamStore<f32>, config: &ModelConfig) -> Vec<u8> {
    let mut header = config.to_kv().to_text();
    header.push_str(&format!("total={}\n", params.total_count()));
    for s in params.segments() {
        let shape: Vec<String> = s.shape.iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("[segment]\nname={}\nshape={}\n", s.name, shape.join(",")));
    }
    let mut out = Vec::with_capacity(12 + header.len() + 4 * params.total_count());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(format_err("truncated file"));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8]) -> Result<u32> {
    let b = take(bytes, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parses bytes produced by [`write_model`].
pub fn read_model(mut bytes: &[u8]) -> Result<(ParamStore<f32>, ModelConfig)> {
    let magic = take(&mut bytes, 4)?;
    if magic != MODEL_MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = read_u32(&mut bytes)?;
    if version != MODEL_VERSION {
        return Err(format_err(format!("version mismatch: file has {version}, expected {MODEL_VERSION}")));
    }
    let header_len = read_u32(&mut bytes)? as usize;
    let header = std::str::from_utf8(take(&mut bytes, header_len)?)
        .map_err(|_| format_err("header is not UTF-8"))?;
    let (head, blocks) = parse_blocks(header, "model header", Some("segment"))?;
    let config = ModelConfig::from_kv(&head)?;
    let total: usize = head.require("total")?;

    let mut layout = Vec::with_capacity(blocks.len());
    for b in &blocks {
        layout.push(segment_entry(b)?);
    }
    let listed: usize = layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if listed != total {
        return Err(format_err(format!("segment table lists {listed} values, header says {total}")));
    }
    if listed != config.parameter_count() {
        return Err(format_err(format!(
            "segment table lists {listed} values, configuration needs {}",
            config.parameter_count()
        )));
    }
    let payload = take(&mut bytes, 4 * total)?;
    if !bytes.is_empty() {
        return Err(format_err(format!("{} trailing bytes", bytes.len())));
    }
    let mut values = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut store = ParamStore::new();
    for (name, shape) in layout {
        let n: usize = shape.iter().product();
        store.push(&name, &shape, values.by_ref().take(n).collect())?;
    }
    Ok((store, config))
}

fn segment_entry(b: &KeyValues) -> Result<(String, Vec<usize>)> {
    let name: String = b.require("name")?;
    let shape: String = b.require("shape")?;
    let dims = shape
        .split(',')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| format_err(format!("segment {name}: bad shape {shape:?}")))?;
    Ok((name, dims))
}

pub fn save_model(params: &ParamStore<f32>, config: &ModelConfig, path: &Path) -> Result<()> {
    std::fs::write(path, write_model(params, config)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(ParamStore<f32>, ModelConfig)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::build_model;

    fn model() -> (ParamStore<f32>, ModelConfig) {
        let c = ModelConfig { latent_channels: 16, base_channels: 8, ..ModelConfig::default() };
        (build_model(&c, 11).unwrap(), c)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let (p, c) = model();
        let (q, d) = read_model(&write_model(&p, &c)).unwrap();
        assert_eq!(c, d);
        assert_eq!(p.segments(), q.segments());
        let bits = |s: &ParamStore<f32>| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
    }

    #[test]
    fn truncation_and_header_errors() {
        let (p, c) = model();
        let bytes = write_model(&p, &c);
        let err = read_model(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated file"), "{err}");
        assert!(read_model(&bytes[..6]).unwrap_err().to_string().contains("truncated file"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_model(&bad).unwrap_err().to_string().contains("bad magic"));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(read_model(&bad).unwrap_err().to_string().contains("version mismatch"));
        let mut long = bytes;
        long.push(0);
        assert!(read_model(&long).is_err());
    }

    #[test]
    fn header_total_matches_payload() {
        let (p, c) = model();
        let bytes = write_model(&p, &c);
        let hl = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        let header = std::str::from_utf8(&bytes[12..12 + hl]).unwrap();
        let (head, blocks) = parse_blocks(header, "h", Some("segment")).unwrap();
        let total: usize = head.require("total").unwrap();
        assert_eq!(blocks.len(), p.segments().len());
        assert_eq!(bytes.len() - 12 - hl, 4 * total);
    }

    #[test]
    fn file_round_trip() {
        let (p, c) = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.femu");
        save_model(&p, &c, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), (p, c));
        assert!(load_model(&dir.path().join("missing")).is_err());
    }
}

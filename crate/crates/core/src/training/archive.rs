//! Model archive file format.
//!
//! ```text
//! "ELACNN01"                     8 bytes
//! header length                  u32, little-endian
//! header                         UTF-8 JSON
//! parameters                     f32, little-endian, layer order, weights then bias
//! ```
//!
//! The header is
//! `{"format_version":1,"layers":[{"kind":…,"shape":[…],"param_count":…},…],"seed":…,"created_from_config_digest":…}`
//! where `shape` is the layer's per-example output shape for a 128×128×3 input.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ArchiveError, Error, Result};
use crate::nn::{Model, PAPER_INPUT};

pub const MAGIC: &[u8; 8] = b"ELACNN01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub kind: String,
    pub shape: Vec<usize>,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveHeader {
    pub format_version: u32,
    pub layers: Vec<LayerRecord>,
    pub seed: u64,
    pub created_from_config_digest: String,
}

impl ArchiveHeader {
    pub fn describe(model: &Model) -> Self {
        let layers = layer_records(model);
        Self {
            format_version: FORMAT_VERSION,
            layers,
            seed: model.seed(),
            created_from_config_digest: model.config_digest().to_string(),
        }
    }
}

fn layer_records(model: &Model) -> Vec<LayerRecord> {
    model
        .summary(&PAPER_INPUT)
        .expect("the classifier accepts its own input shape")
        .into_iter()
        .map(|row| LayerRecord { kind: row.kind.to_string(), shape: row.output_dims, param_count: row.param_count })
        .collect()
}

/// Serialises `model` into archive bytes.
pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4096 + model.total_params() * 4);
    write_archive(model, &mut out).expect("writing to memory cannot fail");
    out
}

/// Streams the archive of `model` into `w`.
pub fn write_archive(model: &Model, w: &mut impl Write) -> std::io::Result<()> {
    let header = serde_json::to_vec(&ArchiveHeader::describe(model)).expect("header serialises");
    let header_len = u32::try_from(header.len()).expect("header is far below 4 GiB");
    w.write_all(MAGIC)?;
    w.write_all(&header_len.to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(CHUNK * 4);
    for tensor in model.parameters() {
        for chunk in tensor.data().chunks(CHUNK) {
            buf.clear();
            buf.extend(chunk.iter().flat_map(|v| v.to_le_bytes()));
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

const CHUNK: usize = 1 << 14;

/// Parses archive bytes, checking the header against the classifier layout.
pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    read_archive(&mut &bytes[..], bytes.len() as u64, Path::new("<memory>"))
}

/// Reads an archive of `len` bytes from `r`; `source` names it in I/O errors.
fn read_archive(r: &mut impl Read, len: u64, source: &Path) -> Result<Model> {
    let truncated = |needed: u64| Error::from(ArchiveError::Truncated { needed, found: len });
    let io = |e: std::io::Error| Error::from(ArchiveError::Unreadable { path: source.to_path_buf(), reason: e.to_string() });

    let mut magic = [0u8; 8];
    let available = len.min(8) as usize;
    r.read_exact(&mut magic[..available]).map_err(io)?;
    if available < MAGIC.len() {
        return Err(if MAGIC.starts_with(&magic[..available]) { truncated(8) } else { ArchiveError::BadMagic.into() });
    }
    if &magic != MAGIC {
        return Err(ArchiveError::BadMagic.into());
    }
    if len < 12 {
        return Err(truncated(12));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(io)?;
    let body = 12 + u64::from(u32::from_le_bytes(word));
    if len < body {
        return Err(truncated(body));
    }
    let mut text = vec![0u8; (body - 12) as usize];
    r.read_exact(&mut text).map_err(io)?;
    let header: ArchiveHeader = serde_json::from_slice(&text).map_err(|e| ArchiveError::Header(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ArchiveError::UnsupportedVersion(header.format_version).into());
    }

    let mut model = Model::paper_zeroed(header.seed);
    let expected = layer_records(&model);
    if header.layers.len() != expected.len() {
        return Err(ArchiveError::ArchitectureMismatch(format!(
            "{} layers recorded, the network has {}",
            header.layers.len(),
            expected.len()
        ))
        .into());
    }
    for (i, (got, want)) in header.layers.iter().zip(&expected).enumerate() {
        if got != want {
            return Err(ArchiveError::ArchitectureMismatch(format!(
                "layer {i}: recorded {} {:?} with {} parameters, expected {} {:?} with {}",
                got.kind, got.shape, got.param_count, want.kind, want.shape, want.param_count
            ))
            .into());
        }
    }

    let end = body + model.total_params() as u64 * 4;
    if len < end {
        return Err(truncated(end));
    }
    if len > end {
        return Err(ArchiveError::TrailingBytes(len - end).into());
    }
    let mut buf = vec![0u8; CHUNK * 4];
    for tensor in model.parameters_mut() {
        for chunk in tensor.data_mut().chunks_mut(CHUNK) {
            let bytes = &mut buf[..chunk.len() * 4];
            r.read_exact(bytes).map_err(io)?;
            for (slot, b) in chunk.iter_mut().zip(bytes.chunks_exact(4)) {
                *slot = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
        }
    }
    model.set_config_digest(header.created_from_config_digest);
    Ok(model)
}

/// Writes the archive to a temporary file in the same directory, then renames it.
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let tmp = path.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        write_archive(model, &mut f)?;
        f.into_inner().map_err(std::io::IntoInnerError::into_error)?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Reads and validates an archive written by [`save_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let unreadable = |e: std::io::Error| ArchiveError::Unreadable { path: path.to_path_buf(), reason: e.to_string() };
    let file = fs::File::open(path).map_err(unreadable)?;
    let len = file.metadata().map_err(unreadable)?.len();
    read_archive(&mut std::io::BufReader::new(file), len, path)
}

//! Checkpoint file format, shared by the transfer model and the plain
//! sequence-to-sequence model:
//!
//! ```text
//! PADST1\n                     magic
//! {...}\n                      one-line UTF-8 JSON header
//! <payload>                    raw little-endian f32 tensors, manifest order
//! ```
//!
//! The header carries the format version, the model config, the id-ordered
//! vocabulary, and the tensor manifest (name, shape, dtype, byte offset into
//! the payload region).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::seq2seq::Seq2Seq;
use super::transfer::TransferModel;
use crate::autodiff::{ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::text::Vocab;

pub const MAGIC: &[u8] = b"PADST1\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    model_config: ModelConfig,
    vocab: Vec<String>,
    tensors: Vec<ManifestEntry>,
}

fn save_store<T: Scalar>(
    path: &Path,
    kind: &str,
    config: &ModelConfig,
    vocab: &Vocab,
    store: &ParamStore<T>,
) -> Result<()> {
    let mut tensors = Vec::with_capacity(store.len());
    let mut offset = 0u64;
    for (_, name, t) in store.iter() {
        tensors.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            offset,
        });
        offset += (t.numel() * 4) as u64;
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: kind.into(),
        model_config: *config,
        vocab: vocab.tokens().to_vec(),
        tensors,
    };
    let file =
        File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(format!("write {}", path.display()), e);
    w.write_all(MAGIC).map_err(io_err)?;
    let header_json = serde_json::to_string(&header)
        .map_err(|e| Error::Checkpoint(format!("serialize header: {e}")))?;
    w.write_all(header_json.as_bytes()).map_err(io_err)?;
    w.write_all(b"\n").map_err(io_err)?;
    for (_, _, t) in store.iter() {
        for v in t.data() {
            w.write_all(&v.as_f32().to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn load_raw<T: Scalar>(path: &Path) -> Result<(Header, Vec<Tensor<T>>)> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::Checkpoint(format!("{}: truncated or unreadable: {e}", path.display()));

    let mut magic = [0u8; 7];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic: expected {:?}, found {:?}",
            String::from_utf8_lossy(MAGIC),
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut header_line = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte).map_err(io_err)?;
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
    }
    let header: Header = serde_json::from_slice(&header_line)
        .map_err(|e| Error::Checkpoint(format!("invalid header JSON: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version mismatch: expected {FORMAT_VERSION}, found {}",
            header.format_version
        )));
    }

    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut position = 0u64;
    for entry in &header.tensors {
        if entry.dtype != "f32" {
            return Err(Error::Checkpoint(format!(
                "tensor {}: unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        if entry.offset != position {
            return Err(Error::Checkpoint(format!(
                "tensor {}: offset {} does not match payload position {position}",
                entry.name, entry.offset
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let mut buf = vec![0u8; numel * 4];
        r.read_exact(&mut buf).map_err(io_err)?;
        let data: Vec<T> = buf
            .chunks_exact(4)
            .map(|b| T::from_f32(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        tensors.push(Tensor::from_vec(entry.shape.clone(), data)?);
        position += (numel * 4) as u64;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err)? != 0 {
        return Err(Error::Checkpoint(
            "trailing bytes after the last manifest tensor".into(),
        ));
    }
    Ok((header, tensors))
}

fn fill_store<T: Scalar>(
    store: &mut ParamStore<T>,
    header: &Header,
    tensors: Vec<Tensor<T>>,
) -> Result<()> {
    if header.tensors.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, model expects {}",
            header.tensors.len(),
            store.len()
        )));
    }
    for (entry, tensor) in header.tensors.iter().zip(tensors) {
        let id = store.id_by_name(&entry.name).ok_or_else(|| {
            Error::Checkpoint(format!("unexpected parameter {} in manifest", entry.name))
        })?;
        let dst = store.get_mut(id);
        if dst.shape() != tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {}: expected shape {:?}, found {:?}",
                entry.name,
                dst.shape(),
                tensor.shape()
            )));
        }
        *dst = tensor;
    }
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(model: &TransferModel<T>, path: &Path) -> Result<()> {
    save_store(path, "transfer", model.config(), model.vocab(), model.store())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<TransferModel<T>> {
    let (header, tensors) = load_raw(path)?;
    if header.kind != "transfer" {
        return Err(Error::Checkpoint(format!(
            "expected a transfer checkpoint, found kind {:?}",
            header.kind
        )));
    }
    let vocab = Vocab::from_token_list(header.vocab.clone())?;
    let mut model = TransferModel::new(header.model_config, vocab, 0)?;
    fill_store(model.store_mut(), &header, tensors)?;
    Ok(model)
}

pub fn save_seq2seq<T: Scalar>(model: &Seq2Seq<T>, path: &Path) -> Result<()> {
    save_store(path, "seq2seq", model.config(), model.vocab(), model.store())
}

pub fn load_seq2seq<T: Scalar>(path: &Path) -> Result<Seq2Seq<T>> {
    let (header, tensors) = load_raw(path)?;
    if header.kind != "seq2seq" {
        return Err(Error::Checkpoint(format!(
            "expected a seq2seq checkpoint, found kind {:?}",
            header.kind
        )));
    }
    let vocab = Vocab::from_token_list(header.vocab.clone())?;
    let mut model = Seq2Seq::new(header.model_config, vocab, 0)?;
    fill_store(model.store_mut(), &header, tensors)?;
    Ok(model)
}

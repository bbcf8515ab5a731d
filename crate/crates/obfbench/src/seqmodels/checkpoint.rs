//! Checkpoint persistence.
//!
//! Layout: magic `OBFB`, version u32, model kind u32, an architecture header
//! of u32 fields, then every parameter tensor as little-endian f32 values in
//! the canonical declaration order. All integers are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::seqmodels::{CausalLMModel, ModelDims, ModelError, Result, Seq2SeqModel};

const MAGIC: &[u8; 4] = b"OBFB";
const VERSION: u32 = 1;
const KIND_SEQ2SEQ: u32 = 1;
const KIND_LM: u32 = 2;

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_dims<W: Write>(w: &mut W, dims: &ModelDims) -> std::io::Result<()> {
    write_u32(w, dims.d as u32)?;
    write_u32(w, dims.layers as u32)?;
    write_u32(w, dims.heads as u32)?;
    write_u32(w, dims.ffn_dim as u32)?;
    write_u32(w, dims.max_len as u32)
}

fn read_dims<R: Read>(r: &mut R) -> std::io::Result<ModelDims> {
    Ok(ModelDims {
        d: read_u32(r)? as usize,
        layers: read_u32(r)? as usize,
        heads: read_u32(r)? as usize,
        ffn_dim: read_u32(r)? as usize,
        max_len: read_u32(r)? as usize,
    })
}

fn write_params<W: Write>(w: &mut W, params: &[&crate::gradkit::Tensor<f32>]) -> std::io::Result<()> {
    for t in params {
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_params<R: Read>(
    r: &mut R,
    params: &mut [&mut crate::gradkit::Tensor<f32>],
) -> Result<()> {
    let mut buf = [0u8; 4];
    for t in params {
        for v in t.data_mut() {
            r.read_exact(&mut buf).map_err(|_| {
                ModelError::Checkpoint("file truncated inside parameter data".into())
            })?;
            *v = f32::from_le_bytes(buf);
        }
    }
    if r.read(&mut buf).map_err(ModelError::Io)? != 0 {
        return Err(ModelError::Checkpoint(
            "trailing bytes after parameter data".into(),
        ));
    }
    Ok(())
}

fn read_preamble<R: Read>(r: &mut R, want_kind: u32) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| ModelError::Checkpoint("file too short for header".into()))?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint(format!(
            "bad magic {:?}, expected OBFB",
            magic
        )));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let kind = read_u32(r)?;
    if kind != want_kind {
        return Err(ModelError::Checkpoint(format!(
            "wrong model kind {kind}, expected {want_kind}"
        )));
    }
    Ok(())
}

pub fn save_seq2seq(path: &Path, model: &Seq2SeqModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u32(&mut w, KIND_SEQ2SEQ)?;
    write_u32(&mut w, model.src_vocab_size as u32)?;
    write_u32(&mut w, model.tgt_vocab_size as u32)?;
    write_dims(&mut w, &model.dims)?;
    write_params(&mut w, &model.param_refs())?;
    w.flush()?;
    Ok(())
}

pub fn load_seq2seq(path: &Path) -> Result<Seq2SeqModel> {
    let mut r = BufReader::new(File::open(path)?);
    read_preamble(&mut r, KIND_SEQ2SEQ)?;
    let src_vocab_size = read_u32(&mut r)? as usize;
    let tgt_vocab_size = read_u32(&mut r)? as usize;
    let dims = read_dims(&mut r)?;
    let mut model = Seq2SeqModel::init(dims, src_vocab_size, tgt_vocab_size, 0)?;
    let mut params = model.param_refs_mut();
    read_params(&mut r, &mut params)?;
    Ok(model)
}

pub fn save_lm(path: &Path, model: &CausalLMModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u32(&mut w, KIND_LM)?;
    write_u32(&mut w, model.vocab_size as u32)?;
    write_dims(&mut w, &model.dims)?;
    write_params(&mut w, &model.param_refs())?;
    w.flush()?;
    Ok(())
}

pub fn load_lm(path: &Path) -> Result<CausalLMModel> {
    let mut r = BufReader::new(File::open(path)?);
    read_preamble(&mut r, KIND_LM)?;
    let vocab_size = read_u32(&mut r)? as usize;
    let dims = read_dims(&mut r)?;
    let mut model = CausalLMModel::init(dims, vocab_size, 0)?;
    let mut params = model.param_refs_mut();
    read_params(&mut r, &mut params)?;
    Ok(model)
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Versioned little-endian binary container and atomic file writes.
//!
//! Layout: 8-byte magic, `u32` format version, a length-prefixed provenance
//! stamp, then a body of `u64`/`u32` integers, `f64` values and length-prefixed
//! UTF-8 strings, all little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Block, CellBatch, Model, ModelConfig, RankOne};
use crate::sae::SaeParams;

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_MAGIC: [u8; 8] = *b"CSMODEL\0";
pub const CELLS_MAGIC: [u8; 8] = *b"CSCELLS\0";
pub const SAE_MAGIC: [u8; 8] = *b"CSSAE\0\0\0";
pub const EDGES_MAGIC: [u8; 8] = *b"CSEDGES\0";

#[derive(Debug, Default)]
pub struct BinWriter {
    buf: Vec<u8>,
}

impl BinWriter {
    /// Starts a container; `stamp` records the run provenance.
    pub fn new(magic: [u8; 8], stamp: &str) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(&magic);
        w.u32(FORMAT_VERSION);
        w.str(stamp);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bool(&mut self, v: bool) {
        self.buf.push(u8::from(v));
    }

    pub fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    pub fn matrix(&mut self, m: &Matrix) {
        self.usize(m.rows());
        self.usize(m.cols());
        m.as_slice().iter().for_each(|&x| self.f64(x));
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct BinReader<'a> {
    data: &'a [u8],
    pos: usize,
    stamp: String,
}

impl<'a> BinReader<'a> {
    /// Checks magic and version, reads the stamp and positions the reader at the body.
    pub fn new(data: &'a [u8], magic: [u8; 8]) -> Result<Self> {
        if data.len() < 12 || data[..8] != magic {
            return Err(Error::Data(format!(
                "bad magic: expected {:?}",
                String::from_utf8_lossy(&magic).trim_end_matches('\0')
            )));
        }
        let mut r = Self { data, pos: 8, stamp: String::new() };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported format version {version}")));
        }
        r.stamp = r.str()?;
        Ok(r)
    }

    pub fn stamp(&self) -> &str {
        &self.stamp
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Data("truncated container".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Data("length overflows usize".into()))
    }

    /// A length that must fit in the remaining bytes at `unit` bytes per element.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(unit) > self.data.len() - self.pos {
            return Err(Error::Data("length exceeds container size".into()));
        }
        Ok(n)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn bool(&mut self) -> Result<bool> {
        Ok(self.take(1)?[0] != 0)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.saturating_mul(8) <= self.data.len() - self.pos)
            .ok_or_else(|| Error::Data("matrix exceeds container size".into()))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_vec(rows, cols, data))
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Data("trailing bytes in container".into()));
        }
        Ok(())
    }
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Provenance stamp of any container, checked against `magic`.
pub fn read_stamp(bytes: &[u8], magic: [u8; 8]) -> Result<String> {
    Ok(BinReader::new(bytes, magic)?.stamp)
}

pub fn encode_model(model: &Model, stamp: &str) -> Vec<u8> {
    let mut w = BinWriter::new(MODEL_MAGIC, stamp);
    let c = &model.config;
    for v in [c.n_layers, c.d_model, c.n_genes, c.seq_len, c.mlp_expansion] {
        w.usize(v);
    }
    w.f64(c.mixing_scale);
    w.bool(c.linear);
    w.u64(c.seed);
    w.matrix(&model.embedding);
    for b in &model.blocks {
        w.matrix(&b.w_in);
        w.f64s(&b.b_in);
        w.matrix(&b.w_out);
        w.usize(b.adapter.len());
        for r in &b.adapter {
            w.usize(r.target);
            w.usize(r.source);
            w.f64(r.strength);
        }
    }
    w.finish()
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = BinReader::new(bytes, MODEL_MAGIC)?;
    let config = ModelConfig {
        n_layers: r.usize()?,
        d_model: r.usize()?,
        n_genes: r.usize()?,
        seq_len: r.usize()?,
        mlp_expansion: r.usize()?,
        mixing_scale: r.f64()?,
        linear: r.bool()?,
        seed: r.u64()?,
    };
    config.validate()?;
    let embedding = r.matrix()?;
    let (d, dh) = (config.d_model, config.d_hidden());
    if embedding.rows() != config.n_genes || embedding.cols() != d {
        return Err(Error::Data("embedding shape does not match config".into()));
    }
    let mut blocks = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        let w_in = r.matrix()?;
        let b_in = r.f64s()?;
        let w_out = r.matrix()?;
        if (w_in.rows(), w_in.cols(), b_in.len(), w_out.rows(), w_out.cols()) != (dh, d, dh, d, dh) {
            return Err(Error::Data("block shape does not match config".into()));
        }
        let n = r.len(24)?;
        let mut adapter = Vec::with_capacity(n);
        for _ in 0..n {
            let term = RankOne { target: r.usize()?, source: r.usize()?, strength: r.f64()? };
            if term.target >= d || term.source >= d {
                return Err(Error::Data("adapter direction out of range".into()));
            }
            adapter.push(term);
        }
        blocks.push(Block { w_in, b_in, w_out, adapter });
    }
    r.expect_end()?;
    Ok(Model::from_parts(config, embedding, blocks))
}

pub fn encode_cells(cells: &CellBatch, stamp: &str) -> Vec<u8> {
    let mut w = BinWriter::new(CELLS_MAGIC, stamp);
    w.usize(cells.len());
    for (tokens, &t) in cells.tokens.iter().zip(&cells.pseudotime) {
        w.f64(t);
        w.usize(tokens.len());
        tokens.iter().for_each(|&g| w.u32(g));
    }
    w.finish()
}

pub fn decode_cells(bytes: &[u8]) -> Result<CellBatch> {
    let mut r = BinReader::new(bytes, CELLS_MAGIC)?;
    let n = r.len(16)?;
    let mut cells = CellBatch { tokens: Vec::with_capacity(n), pseudotime: Vec::with_capacity(n) };
    for _ in 0..n {
        cells.pseudotime.push(r.f64()?);
        let len = r.len(4)?;
        cells.tokens.push((0..len).map(|_| r.u32()).collect::<Result<_>>()?);
    }
    r.expect_end()?;
    Ok(cells)
}

pub fn encode_sae(sae: &SaeParams, stamp: &str) -> Vec<u8> {
    let mut w = BinWriter::new(SAE_MAGIC, stamp);
    w.usize(sae.layer);
    w.usize(sae.k);
    w.matrix(&sae.encoder);
    w.f64s(&sae.encoder_bias);
    w.matrix(&sae.decoder);
    w.f64s(&sae.decoder_bias);
    w.finish()
}

pub fn decode_sae(bytes: &[u8]) -> Result<SaeParams> {
    let mut r = BinReader::new(bytes, SAE_MAGIC)?;
    let sae = SaeParams {
        layer: r.usize()?,
        k: r.usize()?,
        encoder: r.matrix()?,
        encoder_bias: r.f64s()?,
        decoder: r.matrix()?,
        decoder_bias: r.f64s()?,
    };
    r.expect_end()?;
    let (ds, dm) = (sae.encoder_bias.len(), sae.decoder_bias.len());
    let shapes_ok = sae.encoder.rows() == ds
        && sae.encoder.cols() == dm
        && sae.decoder.rows() == ds
        && sae.decoder.cols() == dm
        && (1..=ds).contains(&sae.k);
    if !shapes_ok {
        return Err(Error::Data("SAE shapes are inconsistent".into()));
    }
    Ok(sae)
}

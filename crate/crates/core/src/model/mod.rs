//! The neural query encoder: a per-relation affine backbone with a
//! DeepSets intersection, plus the key-value memory over informational
//! atomics. Parameters live in one flat f64 buffer addressed through a
//! fixed layout, which keeps Adam, gradient accumulation, checkpointing,
//! and finite-difference checks trivial.

pub mod encode;
pub mod tape;

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kg::RelationType;

pub use encode::{
    encode, loss, score_all, softmax, Ablation, EncodeOptions, MemoryBank, MemoryReadout,
    QueryState,
};
pub use tape::{NodeId, Tape, TapeError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint block {name}: expected {expected} values, found {found}")]
    ShapeMismatch { name: String, expected: usize, found: usize },
    #[error("checkpoint is truncated or malformed")]
    Malformed,
    #[error(transparent)]
    Tape(#[from] TapeError),
}

/// Addressable slices of the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    VertexEmbed(u32),
    RelEmbed(u8),
    ProjW(u8),
    ProjB(u8),
    InterPreW,
    InterPreB,
    InterPostW,
    InterPostB,
    FfnW1,
    FfnB1,
    FfnW2,
    FfnB2,
}

/// Offsets of every block family in the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub d: usize,
    pub n_vertices: usize,
    pub n_relations: usize,
}

impl ParamLayout {
    pub fn new(n_vertices: usize, d: usize) -> Self {
        ParamLayout { d, n_vertices, n_relations: RelationType::COUNT }
    }

    pub fn total_len(&self) -> usize {
        let d = self.d;
        self.n_vertices * d          // vertex embeddings
            + self.n_relations * d   // relation embeddings
            + self.n_relations * d * d // projection maps
            + self.n_relations * d   // projection offsets
            + 2 * (d * d + d)        // intersection pre/post maps
            + 2 * (d * d + d)        // memory FFN maps
    }

    fn family_offset(&self, family: usize) -> usize {
        let d = self.d;
        let sizes = [
            self.n_vertices * d,
            self.n_relations * d,
            self.n_relations * d * d,
            self.n_relations * d,
            d * d,
            d,
            d * d,
            d,
            d * d,
            d,
            d * d,
            d,
        ];
        sizes[..family].iter().sum()
    }

    pub fn block_range(&self, block: ParamBlock) -> std::ops::Range<usize> {
        let d = self.d;
        let (family, index, len) = match block {
            ParamBlock::VertexEmbed(v) => (0, v as usize, d),
            ParamBlock::RelEmbed(r) => (1, r as usize, d),
            ParamBlock::ProjW(r) => (2, r as usize, d * d),
            ParamBlock::ProjB(r) => (3, r as usize, d),
            ParamBlock::InterPreW => (4, 0, d * d),
            ParamBlock::InterPreB => (5, 0, d),
            ParamBlock::InterPostW => (6, 0, d * d),
            ParamBlock::InterPostB => (7, 0, d),
            ParamBlock::FfnW1 => (8, 0, d * d),
            ParamBlock::FfnB1 => (9, 0, d),
            ParamBlock::FfnW2 => (10, 0, d * d),
            ParamBlock::FfnB2 => (11, 0, d),
        };
        let start = self.family_offset(family) + index * len;
        start..start + len
    }

    pub fn block_len(&self, block: ParamBlock) -> usize {
        self.block_range(block).len()
    }
}

/// Named layout slices in checkpoint order.
const BLOCK_FAMILIES: [(&str, usize); 12] = [
    ("vertex_embed", 0),
    ("rel_embed", 1),
    ("proj_w", 2),
    ("proj_b", 3),
    ("inter_pre_w", 4),
    ("inter_pre_b", 5),
    ("inter_post_w", 6),
    ("inter_post_b", 7),
    ("ffn_w1", 8),
    ("ffn_b1", 9),
    ("ffn_w2", 10),
    ("ffn_b2", 11),
];

/// Embedding tables, backbone operator weights, and memory FFN maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layout: ParamLayout,
    data: Vec<f64>,
}

impl ModelParams {
    /// Uniform(−1/√d, 1/√d) everywhere except the memory FFN output map,
    /// which starts at zero so the encoder begins as the plain backbone.
    pub fn init(n_vertices: usize, d: usize, seed: u64) -> Self {
        assert!(d >= 1);
        let layout = ParamLayout::new(n_vertices, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d as f64).sqrt();
        let mut data: Vec<f64> = (0..layout.total_len())
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        for block in [ParamBlock::FfnW2, ParamBlock::FfnB2] {
            data[layout.block_range(block)].fill(0.0);
        }
        ModelParams { layout, data }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.d
    }

    pub fn n_vertices(&self) -> usize {
        self.layout.n_vertices
    }

    pub fn block(&self, block: ParamBlock) -> &[f64] {
        &self.data[self.layout.block_range(block)]
    }

    pub fn block_mut(&mut self, block: ParamBlock) -> &mut [f64] {
        let range = self.layout.block_range(block);
        &mut self.data[range]
    }

    /// Flat coordinate access for optimizers and finite differences.
    pub fn flat_len(&self) -> usize {
        self.data.len()
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// dot(q, E[v]) for every vertex.
    pub fn scores(&self, q: &[f64]) -> Vec<f64> {
        let d = self.layout.d;
        let embeds = &self.data[..self.layout.n_vertices * d];
        embeds
            .chunks_exact(d)
            .map(|e| e.iter().zip(q).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Backward rule for the full-softmax NLL node: accumulates
    /// `g (p_v − δ_v) q` into every vertex-embedding gradient row and
    /// returns `g Σ_v (p_v − δ_v) E[v]`, the adjoint of `q`.
    pub(crate) fn nll_backward(
        &self,
        probs: &[f64],
        answer: usize,
        q: &[f64],
        g: f64,
        grads: &mut Gradients,
    ) -> Vec<f64> {
        let d = self.layout.d;
        let embeds = &self.data[..self.layout.n_vertices * d];
        let gembeds = &mut grads.data[..self.layout.n_vertices * d];
        let mut gq = vec![0.0; d];
        for (v, &p) in probs.iter().enumerate() {
            let coef = g * (p - if v == answer { 1.0 } else { 0.0 });
            if coef == 0.0 {
                continue;
            }
            let row = &embeds[v * d..(v + 1) * d];
            let grow = &mut gembeds[v * d..(v + 1) * d];
            for j in 0..d {
                gq[j] += coef * row[j];
                grow[j] += coef * q[j];
            }
        }
        gq
    }

    /// Write the versioned checkpoint: header, backbone tag, option
    /// flags, then the named parameter blocks as little-endian f64.
    pub fn save(
        &self,
        path: impl AsRef<Path>,
        options: &EncodeOptions,
    ) -> Result<(), ModelError> {
        let path = path.as_ref();
        let mut buf: Vec<u8> = Vec::with_capacity(64 + self.data.len() * 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(self.layout.d as u32).to_le_bytes());
        buf.extend_from_slice(&(self.layout.n_vertices as u32).to_le_bytes());
        buf.extend_from_slice(&(self.layout.n_relations as u32).to_le_bytes());
        write_str(&mut buf, "gqe");
        buf.push(3); // flag count
        write_flag(&mut buf, "ablation", options.ablation as u8);
        write_flag(&mut buf, "normalize_scores", options.normalize_scores as u8);
        write_flag(&mut buf, "memory_on_anchors", options.memory_on_anchors as u8);
        buf.extend_from_slice(&(BLOCK_FAMILIES.len() as u16).to_le_bytes());
        for (name, family) in BLOCK_FAMILIES {
            let range = self.family_range(family);
            write_str(&mut buf, name);
            let slice = &self.data[range];
            buf.extend_from_slice(&(slice.len() as u64).to_le_bytes());
            for v in slice {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, buf).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn family_range(&self, family: usize) -> std::ops::Range<usize> {
        let start = self.layout.family_offset(family);
        let end = if family + 1 < BLOCK_FAMILIES.len() {
            self.layout.family_offset(family + 1)
        } else {
            self.layout.total_len()
        };
        start..end
    }

    /// Load and shape-check a checkpoint.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, EncodeOptions), ModelError> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };

        if cur.take(MAGIC.len())? != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = cur.u32()?;
        if version != 1 {
            return Err(ModelError::BadVersion(version));
        }
        let d = cur.u32()? as usize;
        let n_vertices = cur.u32()? as usize;
        let n_relations = cur.u32()? as usize;
        if n_relations != RelationType::COUNT {
            return Err(ModelError::ShapeMismatch {
                name: "relation count".into(),
                expected: RelationType::COUNT,
                found: n_relations,
            });
        }
        let _backbone = cur.str()?;
        let n_flags = cur.u8()?;
        let mut options = EncodeOptions::default();
        for _ in 0..n_flags {
            let name = cur.str()?;
            let value = cur.u8()?;
            match name.as_str() {
                "ablation" => options.ablation = Ablation::from_tag(value),
                "normalize_scores" => options.normalize_scores = value != 0,
                "memory_on_anchors" => options.memory_on_anchors = value != 0,
                _ => {}
            }
        }

        let layout = ParamLayout::new(n_vertices, d);
        let data = vec![0.0; layout.total_len()];
        let mut params = ModelParams { layout, data };
        let n_blocks = cur.u16()? as usize;
        if n_blocks != BLOCK_FAMILIES.len() {
            return Err(ModelError::Malformed);
        }
        for (name, family) in BLOCK_FAMILIES {
            let found_name = cur.str()?;
            if found_name != name {
                return Err(ModelError::Malformed);
            }
            let len = cur.u64()? as usize;
            let range = params.family_range(family);
            if len != range.len() {
                return Err(ModelError::ShapeMismatch {
                    name: name.to_string(),
                    expected: range.len(),
                    found: len,
                });
            }
            for i in range {
                params.data[i] = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            }
        }
        Ok((params, options))
    }
}

const MAGIC: &[u8] = b"EVQENC01";

fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.push(s.len() as u8);
    buf.extend_from_slice(s.as_bytes());
}

fn write_flag(buf: &mut Vec<u8>, name: &str, value: u8) {
    write_str(buf, name);
    buf.push(value);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::Malformed);
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String, ModelError> {
        let len = self.u8()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| ModelError::Malformed)
    }
}

/// Gradient buffer aligned with a [`ModelParams`] layout. Untouched
/// parameters read zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layout: ParamLayout,
    data: Vec<f64>,
}

impl Gradients {
    pub fn zeros(layout: ParamLayout) -> Self {
        let len = layout.total_len();
        Gradients { layout, data: vec![0.0; len] }
    }

    pub fn block(&self, block: ParamBlock) -> &[f64] {
        &self.data[self.layout.block_range(block)]
    }

    pub fn block_mut(&mut self, block: ParamBlock) -> &mut [f64] {
        let range = self.layout.block_range(block);
        &mut self.data[range]
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    /// Fixed-order accumulate: `self += other`.
    pub fn accumulate(&mut self, other: &Gradients) {
        debug_assert_eq!(self.layout, other.layout);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.data {
            *g *= factor;
        }
    }
}

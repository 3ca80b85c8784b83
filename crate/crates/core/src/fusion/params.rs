//! Named parameter tensors, initialization, and the binary checkpoint.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::FusionDims;
use crate::error::{Error, Result};

use super::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"ERUNET1";

/// Decoder layers stacked after the proposal-gesture fusion.
pub const DECODER_LAYERS: usize = 2;
/// Channels of one gesture or proposal point: xyz plus normal or color.
pub const POINT_FEATURES: usize = 6;
/// Normalized box center and size.
pub const BOX_FEATURES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: FusionDims,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Xavier,
    Zero,
    Normal(f64),
}

/// Parameter names and shapes for `dims`, in a fixed order.
fn layout(d: &FusionDims) -> Vec<(String, usize, usize, Init)> {
    let (h, p) = (d.hidden, d.point_mlp);
    let mut v: Vec<(String, usize, usize, Init)> = Vec::new();
    let mut add = |name: &str, r: usize, c: usize, init: Init| v.push((name.to_string(), r, c, init));
    let linear = |add: &mut dyn FnMut(&str, usize, usize, Init), name: &str, r: usize, c: usize| {
        add(&format!("{name}.w"), r, c, Init::Xavier);
        add(&format!("{name}.b"), 1, c, Init::Zero);
    };
    linear(&mut add, "gesture.sa1", POINT_FEATURES, p);
    linear(&mut add, "gesture.sa2", p, p);
    linear(&mut add, "gesture.sa3", p + 3, h);
    linear(&mut add, "gesture.proj", h, h);

    add("lang.embed", d.vocab, d.embed, Init::Normal(0.5));
    linear(&mut add, "lang.gru_x", d.embed, 3 * h);
    linear(&mut add, "lang.gru_h", h, 3 * h);
    for m in ["q", "k", "v"] {
        add(&format!("lang.attn.{m}"), h, h, Init::Xavier);
    }

    linear(&mut add, "proposal.mlp1", POINT_FEATURES, p);
    linear(&mut add, "proposal.mlp2", p, p);
    linear(&mut add, "proposal.proj", p + BOX_FEATURES, h);

    linear(&mut add, "fuse", 2 * h, h);
    for l in 0..DECODER_LAYERS {
        for a in ["self", "cross"] {
            for m in ["q", "k", "v", "o"] {
                add(&format!("dec{l}.{a}.{m}"), h, h, Init::Xavier);
            }
        }
        linear(&mut add, &format!("dec{l}.ffn1"), h, 2 * h);
        linear(&mut add, &format!("dec{l}.ffn2"), 2 * h, h);
    }
    linear(&mut add, "head", h, 1);

    linear(&mut add, "aux.objectness", h, 2);
    linear(&mut add, "aux.semantic", h, d.classes);
    linear(&mut add, "aux.center", h, 3);
    linear(&mut add, "aux.size_cls", h, d.size_bins);
    linear(&mut add, "aux.size_reg", h, 3);
    linear(&mut add, "lang.cls", h, d.classes);
    v
}

pub fn validate_dims(d: &FusionDims) -> Result<()> {
    if d.hidden == 0 || d.heads == 0 || d.hidden % d.heads != 0 {
        return Err(Error::invalid(format!(
            "hidden size {} must be a positive multiple of the head count {}",
            d.hidden, d.heads
        )));
    }
    if d.vocab == 0 || d.embed == 0 || d.classes == 0 || d.size_bins == 0 || d.point_mlp == 0 {
        return Err(Error::invalid("fusion dimensions must be positive"));
    }
    if d.centroids == 0 || d.group_size == 0 || d.proposal_points == 0 || !(d.group_radius > 0.0) {
        return Err(Error::invalid("encoder sampling sizes must be positive"));
    }
    Ok(())
}

impl ModelParams {
    /// Xavier-uniform weights, zero biases, normal embeddings.
    pub fn init(dims: &FusionDims, seed: u64) -> Result<ModelParams> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, r, c, init) in layout(dims) {
            let data: Vec<f64> = match init {
                Init::Zero => vec![0.0; r * c],
                Init::Xavier => {
                    let a = (6.0 / (r + c) as f64).sqrt();
                    (0..r * c).map(|_| rng.random_range(-a..a)).collect()
                }
                Init::Normal(s) => {
                    let dist = rand_distr::Normal::new(0.0, s).expect("positive sigma");
                    (0..r * c).map(|_| rng.sample(dist)).collect()
                }
            };
            names.push(name);
            tensors.push(Tensor::new(r, c, data)?);
        }
        Ok(ModelParams::from_parts(dims.clone(), names, tensors))
    }

    fn from_parts(dims: FusionDims, names: Vec<String>, tensors: Vec<Tensor>) -> ModelParams {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        ModelParams {
            dims,
            names,
            tensors,
            index,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Index of a named tensor. Panics on an unknown name: names come from
    /// the fixed layout.
    pub fn id(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[self.id(name)]
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.is_finite())
    }

    /// Writes magic, the dimension record as JSON, then each tensor as
    /// (name, rows, cols, little-endian f32 values).
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let dims = serde_json::to_vec(&self.dims).expect("dims serialize");
        let mut write = || -> std::io::Result<()> {
            w.write_all(CHECKPOINT_MAGIC)?;
            w.write_all(&(dims.len() as u32).to_le_bytes())?;
            w.write_all(&dims)?;
            w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
            for (name, t) in self.names.iter().zip(&self.tensors) {
                w.write_all(&(name.len() as u16).to_le_bytes())?;
                w.write_all(name.as_bytes())?;
                w.write_all(&(t.rows() as u32).to_le_bytes())?;
                w.write_all(&(t.cols() as u32).to_le_bytes())?;
                for v in t.data() {
                    w.write_all(&(*v as f32).to_le_bytes())?;
                }
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let bad = |m: String| Error::Format {
            what: "checkpoint".into(),
            message: m,
        };
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let dims_len = read_u32(&mut r).map_err(io)? as usize;
        let mut dims_buf = vec![0u8; dims_len];
        r.read_exact(&mut dims_buf).map_err(io)?;
        let dims: FusionDims = serde_json::from_slice(&dims_buf).map_err(|e| bad(e.to_string()))?;
        validate_dims(&dims)?;
        let expected = layout(&dims);
        let n = read_u32(&mut r).map_err(io)? as usize;
        if n != expected.len() {
            return Err(bad(format!("{n} tensors, expected {}", expected.len())));
        }
        let mut names = Vec::with_capacity(n);
        let mut tensors = Vec::with_capacity(n);
        for (want, rows_want, cols_want, _) in expected {
            let mut l = [0u8; 2];
            r.read_exact(&mut l).map_err(io)?;
            let mut name = vec![0u8; u16::from_le_bytes(l) as usize];
            r.read_exact(&mut name).map_err(io)?;
            let name = String::from_utf8(name).map_err(|e| bad(e.to_string()))?;
            let rows = read_u32(&mut r).map_err(io)? as usize;
            let cols = read_u32(&mut r).map_err(io)? as usize;
            if name != want || rows != rows_want || cols != cols_want {
                return Err(bad(format!("tensor {name} {rows}x{cols}, expected {want} {rows_want}x{cols_want}")));
            }
            let mut buf = vec![0u8; rows * cols * 4];
            r.read_exact(&mut buf).map_err(io)?;
            let data: Vec<f64> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("non-finite value in {name}")));
            }
            names.push(name);
            tensors.push(Tensor::new(rows, cols, data)?);
        }
        Ok(ModelParams::from_parts(dims, names, tensors))
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

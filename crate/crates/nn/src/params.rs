//! Named trainable tensors, their Adam moments, and the on-disk format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! b"SPNN" | u32 format version | u64 header length | header JSON | f64 data...
//! ```
//!
//! The JSON header lists tensor names and shapes in storage order, the
//! initialization seed, the optimizer step count and a free-form `meta`
//! value owned by the caller.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{NnError, Tape, Tensor, Var};

const MAGIC: &[u8; 4] = b"SPNN";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform in `±1/√fan_in`.
    FanIn(usize),
    Uniform(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct Param {
    pub name: String,
    pub value: Tensor,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ParamStore {
    pub(crate) params: Vec<Param>,
    pub(crate) step: u64,
    seed: u64,
    rng: ChaCha8Rng,
}

/// Per-parameter gradients in [`ParamId`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    seed: u64,
    step: u64,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            params: Vec::new(),
            step: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Registers a parameter; initialization draws from the store's seeded
    /// stream, so registration order determines the values.
    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        let n: usize = shape.iter().product();
        let bound = match init {
            Init::Zeros => 0.0,
            Init::FanIn(f) => 1.0 / (f.max(1) as f64).sqrt(),
            Init::Uniform(b) => b,
        };
        let data = if bound == 0.0 {
            vec![0.0; n]
        } else {
            (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect()
        };
        self.params.push(Param {
            name: name.to_string(),
            value: Tensor::new(shape, data).expect("shape product"),
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        ParamId(self.params.len() - 1)
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NnError> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .map(ParamId)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Replaces all values, e.g. with perturbed copies during a gradient check.
    pub fn set_tensors(&mut self, values: &[Tensor]) -> Result<(), NnError> {
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(NnError::Shape {
                    op: "set_tensors",
                    lhs: p.value.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            p.value = v.clone();
        }
        Ok(())
    }

    /// Pushes every parameter onto `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.param(p.value.clone()))
            .collect()
    }

    /// Reads gradients for bound parameters after `tape.backward`.
    pub fn collect_grads(&self, tape: &Tape, bound: &[Var]) -> Grads {
        Grads(
            self.params
                .iter()
                .zip(bound)
                .map(|(p, &v)| {
                    tape.grad(v)
                        .map_or_else(|| vec![0.0; p.value.len()], <[f64]>::to_vec)
                })
                .collect(),
        )
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.params.iter().map(|p| vec![0.0; p.value.len()]).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: serde_json::Value) -> Result<(), NnError> {
        let header = Header {
            version: FORMAT_VERSION,
            seed: self.seed,
            step: self.step,
            tensors: self
                .params
                .iter()
                .map(|p| TensorEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                })
                .collect(),
            meta,
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(16 + json.len() + 8 * self.numel());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for p in &self.params {
            for x in p.value.data() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    /// Loads a store and its `meta` value. Optimizer moments start at zero.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, serde_json::Value), NnError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| NnError::Format("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut off = 16 + hlen;
        let mut store = Self::new(header.seed);
        store.step = header.step;
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let raw = bytes
                .get(off..off + 8 * n)
                .ok_or_else(|| NnError::Format(format!("truncated data for `{}`", e.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            off += 8 * n;
            store.params.push(Param {
                name: e.name,
                value: Tensor::new(&e.shape, data)?,
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
        }
        if off != bytes.len() {
            return Err(NnError::Format("trailing bytes".into()));
        }
        Ok((store, header.meta))
    }
}

impl Grads {
    /// Adds `other` element-wise; callers fix the summation order.
    pub fn accumulate(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.0.iter_mut().flatten().for_each(|x| *x *= c);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}

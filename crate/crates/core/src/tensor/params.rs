//! Named parameter sets, per-forward sessions, and the checkpoint container.
//!
//! Checkpoint layout: an 8-byte little-endian header length, a JSON header
//! ([`Checkpoint`]), then every tensor as little-endian `f32` values at the
//! element offsets listed in the header.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BnStats, Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "strforge-params";
pub const CHECKPOINT_VERSION: u32 = 1;

/// How a parameter is (re)drawn by [`ParamStore::init`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal(0, 2 / fan_in).
    He { fan_in: usize },
    Zeros,
    Ones,
    Const(f64),
    /// Values are set explicitly and never redrawn.
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry<T> {
    name: String,
    value: Tensor<T>,
    init: Init,
    /// Buffers (running moments) are saved but never receive gradients.
    buffer: bool,
}

/// Ordered collection of named tensors owned by a model.
#[derive(Clone, Debug)]
pub struct ParamStore<T = f32> {
    entries: Vec<Entry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn insert(&mut self, name: &str, value: Tensor<T>, init: Init, buffer: bool) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name '{name}'")));
        }
        let id = self.entries.len();
        self.index.insert(name.to_string(), id);
        self.entries.push(Entry {
            name: name.to_string(),
            value,
            init,
            buffer,
        });
        Ok(ParamId(id))
    }

    /// Registers a trainable tensor. Values are filled according to `init`
    /// (He draws start at zero until [`ParamStore::init`] runs).
    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        let value = Tensor::full(shape.to_vec(), init_constant(init));
        self.insert(name, value, init, false)
    }

    /// Registers a trainable tensor with explicit starting values that
    /// [`ParamStore::init`] leaves untouched.
    pub fn add_fixed(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        self.insert(name, value, Init::Fixed, false)
    }

    /// Registers a non-trainable tensor.
    pub fn add_buffer(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        self.insert(name, value, Init::Fixed, true)
    }

    /// Redraws every trainable tensor in registration order from one seeded
    /// stream. Identical seeds give bit-identical values.
    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for e in self.entries.iter_mut().filter(|e| !e.buffer) {
            match e.init {
                Init::He { fan_in } => {
                    let std = (2.0 / fan_in.max(1) as f64).sqrt();
                    let normal = Normal::new(0.0, std).expect("finite std");
                    e.value.data_mut().iter_mut().for_each(|v| *v = T::lit(normal.sample(&mut rng)));
                }
                Init::Fixed => {}
                other => {
                    let c = T::lit(init_constant::<f64>(other));
                    e.value.data_mut().iter_mut().for_each(|v| *v = c);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn is_buffer(&self, id: ParamId) -> bool {
        self.entries[id.0].buffer
    }

    pub fn init_kind(&self, id: ParamId) -> Init {
        self.entries[id.0].init
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|&id| !self.is_buffer(id))
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.trainable_ids().map(|id| self.get(id).numel()).sum()
    }

    /// Blends batch statistics into running moments:
    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn apply_bn_update(&mut self, update: &BnUpdate<T>, momentum: T) {
        let one = T::one();
        for (id, src) in [(update.mean, &update.stats.mean), (update.var, &update.stats.var)] {
            let dst = self.entries[id.0].value.data_mut();
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = (one - momentum) * *d + momentum * s;
            }
        }
        let count = self.entries[update.count.0].value.data_mut();
        count[0] = count[0] + one;
    }

    /// Copies values into a store of another precision.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    init: e.init,
                    buffer: e.buffer,
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Serializes every tensor (as `f32`) with a JSON header and metadata.
    pub fn to_bytes(&self, meta: serde_json::Value) -> Result<Vec<u8>> {
        let mut offset = 0;
        let tensors = self
            .entries
            .iter()
            .map(|e| {
                let h = TensorHeader {
                    name: e.name.clone(),
                    shape: e.value.shape().to_vec(),
                    offset,
                    kind: if e.buffer { "buffer" } else { "param" }.to_string(),
                };
                offset += e.value.numel();
                h
            })
            .collect();
        let header = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            tensors,
            meta,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + offset * 4);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for e in &self.entries {
            for v in e.value.data() {
                out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        let bytes = self.to_bytes(meta)?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    /// Overwrites values of an identically structured store. Names, order,
    /// shapes and kinds must match.
    pub fn load_bytes(&mut self, bytes: &[u8]) -> Result<serde_json::Value> {
        let (header, data) = parse_checkpoint(bytes)?;
        if header.tensors.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model expects {}",
                header.tensors.len(),
                self.entries.len()
            )));
        }
        for (h, e) in header.tensors.iter().zip(&mut self.entries) {
            let kind = if e.buffer { "buffer" } else { "param" };
            if h.name != e.name || h.shape != e.value.shape() || h.kind != kind {
                return Err(Error::Checkpoint(format!(
                    "tensor mismatch: checkpoint has {} {:?} ({}), model expects {} {:?} ({kind})",
                    h.name,
                    h.shape,
                    h.kind,
                    e.name,
                    e.value.shape()
                )));
            }
            let n = e.value.numel();
            let src = data.get(h.offset..h.offset + n).ok_or_else(|| {
                Error::Checkpoint(format!("tensor {} extends past end of data", h.name))
            })?;
            for (d, &s) in e.value.data_mut().iter_mut().zip(src) {
                *d = T::from_f32_exact(s);
            }
        }
        Ok(header.meta)
    }

    pub fn load(&mut self, path: &Path) -> Result<serde_json::Value> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        self.load_bytes(&bytes)
    }
}

fn init_constant<T: Real>(init: Init) -> T {
    match init {
        Init::Ones => T::one(),
        Init::Const(c) => T::lit(c),
        _ => T::zero(),
    }
}

/// Reads only the JSON header of a checkpoint file.
pub fn read_checkpoint_header(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_checkpoint(&bytes)?.0)
}

fn parse_checkpoint(bytes: &[u8]) -> Result<(Checkpoint, Vec<f32>)> {
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::Checkpoint("file shorter than the header length field".into()))?;
    let hlen = usize::try_from(u64::from_le_bytes(len_bytes))
        .map_err(|_| Error::Checkpoint("header length overflows".into()))?;
    let json = bytes
        .get(8..8usize.saturating_add(hlen))
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Checkpoint = serde_json::from_slice(json)?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported container {} v{}",
            header.format, header.version
        )));
    }
    let raw = &bytes[8 + hlen..];
    if !raw.len().is_multiple_of(4) {
        return Err(Error::Checkpoint("data section is not a whole number of f32 values".into()));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, data))
}

/// JSON header of a checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<TensorHeader>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorHeader {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in `f32` elements from the start of the data section.
    pub offset: usize,
    pub kind: String,
}

/// Batch statistics recorded during a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BnUpdate<T> {
    pub mean: ParamId,
    pub var: ParamId,
    pub count: ParamId,
    pub stats: BnStats<T>,
}

/// One forward pass over a [`ParamStore`]: owns the graph, maps each
/// parameter to a single leaf (so weights shared across time steps or
/// iterations accumulate into one gradient), and collects batch-norm
/// statistics.
pub struct Session<'s, T: Real = f32> {
    pub g: Graph<T>,
    store: &'s ParamStore<T>,
    vars: Vec<Option<Var>>,
    train: bool,
    track_grads: bool,
    bn_updates: Vec<BnUpdate<T>>,
}

impl<'s, T: Real> Session<'s, T> {
    /// `train` selects batch statistics in batch norm and makes parameters
    /// gradient-tracking.
    pub fn new(store: &'s ParamStore<T>, train: bool) -> Self {
        Session {
            g: Graph::new(),
            store,
            vars: vec![None; store.len()],
            train,
            track_grads: train,
            bn_updates: Vec::new(),
        }
    }

    /// Tracks parameter gradients regardless of mode (used by gradient checks
    /// of inference-mode graphs).
    pub fn with_grads(mut self, on: bool) -> Self {
        self.track_grads = on;
        self
    }

    pub fn train(&self) -> bool {
        self.train
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    /// Leaf for a parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let track = self.track_grads && !self.store.is_buffer(id);
        let v = self.g.leaf(self.store.get(id).clone(), track);
        self.vars[id.0] = Some(v);
        v
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var> {
        let id = self
            .store
            .id(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))?;
        Ok(self.param(id))
    }

    pub fn record_bn(&mut self, update: BnUpdate<T>) {
        self.bn_updates.push(update);
    }

    pub fn bn_updates(&self) -> &[BnUpdate<T>] {
        &self.bn_updates
    }

    pub fn take_bn_updates(&mut self) -> Vec<BnUpdate<T>> {
        std::mem::take(&mut self.bn_updates)
    }

    /// Gradients of every parameter touched in this session, in store order.
    pub fn param_grads(&self) -> Vec<(ParamId, Vec<T>)> {
        self.vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let grad = self.g.grad((*v)?)?;
                Some((ParamId(i), grad.to_vec()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add("w", &[4, 3], Init::He { fan_in: 3 }).unwrap();
        s.add("b", &[4], Init::Zeros).unwrap();
        s.add("gamma", &[4], Init::Ones).unwrap();
        s.add_buffer("rm", Tensor::zeros(vec![4])).unwrap();
        s
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = store();
        assert!(s.add("w", &[1], Init::Zeros).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let (mut a, mut b) = (store(), store());
        a.init(11);
        b.init(11);
        assert_eq!(a.get(ParamId(0)).data(), b.get(ParamId(0)).data());
        b.init(12);
        assert_ne!(a.get(ParamId(0)).data(), b.get(ParamId(0)).data());
        assert!(a.get(ParamId(1)).data().iter().all(|&v| v == 0.0));
        assert!(a.get(ParamId(2)).data().iter().all(|&v| v == 1.0));
        assert_eq!(a.num_trainable(), 12 + 4 + 4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut a = store();
        a.init(3);
        a.get_mut(ParamId(3)).data_mut()[2] = 0.125;
        let bytes = a.to_bytes(serde_json::json!({"step": 7})).unwrap();
        let mut b = store();
        let meta = b.load_bytes(&bytes).unwrap();
        assert_eq!(meta["step"], 7);
        for id in a.ids() {
            assert_eq!(a.get(id), b.get(id));
        }
        assert_eq!(bytes, b.to_bytes(serde_json::json!({"step": 7})).unwrap());
    }

    #[test]
    fn checkpoint_structure_mismatch() {
        let a = store();
        let bytes = a.to_bytes(serde_json::Value::Null).unwrap();
        let mut other = ParamStore::<f32>::new();
        other.add("w", &[4, 4], Init::Zeros).unwrap();
        assert!(other.load_bytes(&bytes).is_err());
        assert!(other.load_bytes(&bytes[..5]).is_err());
    }

    #[test]
    fn session_shares_leaves() {
        let mut s = store();
        s.init(1);
        let mut sess = Session::new(&s, true);
        let w1 = sess.param(ParamId(0));
        let w2 = sess.param(ParamId(0));
        assert_eq!(w1, w2);
        let rm = sess.param(ParamId(3));
        assert!(!sess.g.requires_grad(rm));
        let y = sess.g.add(w1, w2).unwrap();
        let l = sess.g.sum(y);
        sess.g.backward(l).unwrap();
        let grads = sess.param_grads();
        assert_eq!(grads.len(), 1);
        assert!(grads[0].1.iter().all(|&v| v == 2.0));
    }
}

//! Trainable parameters, their initialization, and the checkpoint format.
//!
//! A checkpoint is the 8-byte magic `DGIBCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header (dimensions,
//! vocabularies, tensor manifest), then every tensor as raw little-endian
//! `f64` in manifest order. Reloading is bit-exact.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{GinBlock, GinLayer, Readout};
use crate::error::{Error, Result};
use crate::gate::GateBlock;
use crate::graph::{JointGraph, Vocab, FEATURE_INIT};
use crate::io::write_atomic;
use crate::motif::NUM_MOTIFS;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DGIBCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const GATE_GAIN: f64 = 1.0;
/// Pre-softplus bias of the variance half of the readout; starts the
/// embedding variance near 0.01.
const VARIANCE_BIAS: f64 = -4.6;

/// Widths of every parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d0: usize,
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub d4: usize,
    pub gin_hidden: usize,
    pub cls_hidden: usize,
    pub k: usize,
    pub motifs_enabled: bool,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            d0: 16,
            d1: 16,
            d2: 6,
            d3: 6,
            d4: 6,
            gin_hidden: 16,
            cls_hidden: 16,
            k: 3,
            motifs_enabled: true,
        }
    }
}

impl ModelDims {
    pub fn channels(&self) -> usize {
        if self.motifs_enabled {
            NUM_MOTIFS
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("d0", self.d0),
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("d4", self.d4),
            ("gin_hidden", self.gin_hidden),
            ("cls_hidden", self.cls_hidden),
            ("K", self.k),
        ];
        match widths.iter().find(|(_, w)| *w == 0) {
            Some((name, _)) => Err(Error::Config(format!("{name} must be >= 1"))),
            None => Ok(()),
        }
    }
}

/// Two-layer perceptron from a representation to one logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier<T> {
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

/// Every parameter except the node-feature table, which is handled
/// row-sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub relation_features: T,
    pub gates: Vec<GateBlock<T>>,
    pub gin: Vec<GinBlock<T>>,
    pub readout: Readout<T>,
    pub classifier: Classifier<T>,
}

impl<T> Params<T> {
    /// Applies `f` to every tensor in canonical order.
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Params<U> {
        Params {
            relation_features: f(&self.relation_features),
            gates: self
                .gates
                .iter()
                .map(|g| GateBlock {
                    w1: f(&g.w1),
                    w2: f(&g.w2),
                })
                .collect(),
            gin: self
                .gin
                .iter()
                .map(|b| GinBlock {
                    layers: b
                        .layers
                        .iter()
                        .map(|l| GinLayer {
                            eps: f(&l.eps),
                            w1: f(&l.w1),
                            b1: f(&l.b1),
                            w2: f(&l.w2),
                            b2: f(&l.b2),
                        })
                        .collect(),
                })
                .collect(),
            readout: Readout {
                w: f(&self.readout.w),
                b: f(&self.readout.b),
            },
            classifier: Classifier {
                w1: f(&self.classifier.w1),
                b1: f(&self.classifier.b1),
                w2: f(&self.classifier.w2),
                b2: f(&self.classifier.b2),
            },
        }
    }

    /// Named tensors in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = vec![("relation_features".to_string(), &self.relation_features)];
        for (k, g) in self.gates.iter().enumerate() {
            out.push((format!("gate{k}.w1"), &g.w1));
            out.push((format!("gate{k}.w2"), &g.w2));
        }
        for (c, b) in self.gin.iter().enumerate() {
            for (i, l) in b.layers.iter().enumerate() {
                out.push((format!("gin{c}.layer{i}.eps"), &l.eps));
                out.push((format!("gin{c}.layer{i}.w1"), &l.w1));
                out.push((format!("gin{c}.layer{i}.b1"), &l.b1));
                out.push((format!("gin{c}.layer{i}.w2"), &l.w2));
                out.push((format!("gin{c}.layer{i}.b2"), &l.b2));
            }
        }
        out.push(("readout.w".into(), &self.readout.w));
        out.push(("readout.b".into(), &self.readout.b));
        out.push(("classifier.w1".into(), &self.classifier.w1));
        out.push(("classifier.b1".into(), &self.classifier.b1));
        out.push(("classifier.w2".into(), &self.classifier.w2));
        out.push(("classifier.b2".into(), &self.classifier.b2));
        out
    }

    /// Mutable tensors in the same order as [`Params::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![&mut self.relation_features];
        for g in &mut self.gates {
            out.push(&mut g.w1);
            out.push(&mut g.w2);
        }
        for b in &mut self.gin {
            for l in &mut b.layers {
                out.push(&mut l.eps);
                out.push(&mut l.w1);
                out.push(&mut l.b1);
                out.push(&mut l.w2);
                out.push(&mut l.b2);
            }
        }
        out.push(&mut self.readout.w);
        out.push(&mut self.readout.b);
        out.push(&mut self.classifier.w1);
        out.push(&mut self.classifier.b1);
        out.push(&mut self.classifier.w2);
        out.push(&mut self.classifier.b2);
        out
    }
}

impl Params<Array2<f64>> {
    pub fn zeros_like(&self) -> Self {
        self.map(&mut |a| Array2::zeros(a.raw_dim()))
    }
}

/// Coarse grouping of parameter names for reporting.
pub fn param_class(name: &str) -> &'static str {
    if name.starts_with("relation_features") {
        "relation_features"
    } else if name.starts_with("node_features") {
        "node_features"
    } else if name.starts_with("gate") {
        "gate"
    } else if name.starts_with("gin") {
        "gin"
    } else if name.starts_with("readout") {
        "readout"
    } else {
        "classifier"
    }
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..=a))
}

/// Uniform weights whose product with a freshly initialized feature row has
/// roughly `gain²` variance per output.
fn feature_scaled(rows: usize, cols: usize, fan_in: usize, gain: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let feature_var = FEATURE_INIT * FEATURE_INIT / 3.0;
    let a = gain * (3.0 / (fan_in as f64 * feature_var)).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..=a))
}

fn init_gin_layer(
    input: usize,
    hidden: usize,
    out: usize,
    reads_features: bool,
    rng: &mut ChaCha8Rng,
) -> GinLayer<Array2<f64>> {
    GinLayer {
        eps: Array2::zeros((1, 1)),
        w1: if reads_features {
            feature_scaled(input, hidden, input, 1.0, rng)
        } else {
            xavier(input, hidden, rng)
        },
        b1: Array2::zeros((1, hidden)),
        w2: xavier(hidden, out, rng),
        b2: Array2::zeros((1, out)),
    }
}

/// Parameters plus the vocabularies that give entity and relation ids meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub dims: ModelDims,
    pub entities: Vocab,
    pub relations: Vocab,
    pub node_features: Array2<f64>,
    pub params: Params<Array2<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    dims: ModelDims,
    entities: Vec<String>,
    relations: Vec<String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

impl ModelState {
    /// Fresh parameters. Feature tables are copied from the graph. Layers that
    /// read raw features are scaled to the feature range, the rest are
    /// Xavier-uniform from `seed`. Biases and GIN `eps` start at zero except
    /// the variance half of the readout, which starts the variance small.
    pub fn init(graph: &JointGraph, dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        if graph.node_features().ncols() != dims.d0 || graph.relation_features().ncols() != dims.d1 {
            return Err(Error::Shape(format!(
                "graph features are {}/{} wide, model expects d0={} d1={}",
                graph.node_features().ncols(),
                graph.relation_features().ncols(),
                dims.d0,
                dims.d1
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gates = (0..dims.k)
            .map(|_| GateBlock {
                w1: feature_scaled(dims.d2, dims.d0, dims.d0, GATE_GAIN, &mut rng),
                w2: feature_scaled(dims.d2, dims.d1, dims.d1, GATE_GAIN, &mut rng),
            })
            .collect();
        let gin = (0..dims.channels())
            .map(|_| GinBlock {
                layers: vec![
                    init_gin_layer(dims.d0, dims.gin_hidden, dims.d4, true, &mut rng),
                    init_gin_layer(dims.d4, dims.gin_hidden, dims.d4, false, &mut rng),
                ],
            })
            .collect();
        let readout = Readout {
            w: xavier(dims.channels() * dims.d4, 2 * dims.d3, &mut rng),
            b: Array2::from_shape_fn(
                (1, 2 * dims.d3),
                |(_, j)| {
                    if j < dims.d3 {
                        0.0
                    } else {
                        VARIANCE_BIAS
                    }
                },
            ),
        };
        let classifier = Classifier {
            w1: xavier(dims.d3, dims.cls_hidden, &mut rng),
            b1: Array2::zeros((1, dims.cls_hidden)),
            w2: xavier(dims.cls_hidden, 1, &mut rng),
            b2: Array2::zeros((1, 1)),
        };
        Ok(ModelState {
            dims,
            entities: graph.entities().clone(),
            relations: graph.relations().clone(),
            node_features: graph.node_features().clone(),
            params: Params {
                relation_features: graph.relation_features().clone(),
                gates,
                gin,
                readout,
                classifier,
            },
        })
    }

    /// All tensors including the node table, in checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![("node_features".to_string(), &self.node_features)];
        out.extend(self.params.named());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.node_features];
        out.extend(self.params.tensors_mut());
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: "dgib-checkpoint".into(),
            dims: self.dims,
            entities: self.entities.names().to_vec(),
            relations: self.relations.names().to_vec(),
            tensors: self
                .named_tensors()
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    rows: t.nrows(),
                    cols: t.ncols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.named_tensors() {
            for x in t.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing checkpoint magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut entities = Vocab::from_names(header.entities);
        let mut relations = Vocab::from_names(header.relations);
        entities.reindex();
        relations.reindex();
        let skeleton = skeleton(header.dims, entities.len(), relations.len());
        let mut state = ModelState {
            dims: header.dims,
            entities,
            relations,
            node_features: Array2::zeros((0, 0)),
            params: skeleton,
        };
        state.node_features = Array2::zeros((state.entities.len(), header.dims.d0));
        let names: Vec<String> = state.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != header.tensors.len() {
            return Err(bad("tensor count does not match dimensions"));
        }
        let mut offset = 20 + hlen;
        for ((entry, name), t) in header.tensors.iter().zip(&names).zip(state.tensors_mut()) {
            if &entry.name != name || entry.rows != t.nrows() || entry.cols != t.ncols() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` ({}x{}) does not match expected `{name}` {:?}",
                    entry.name,
                    entry.rows,
                    entry.cols,
                    t.dim()
                )));
            }
            let n = t.len() * 8;
            let raw = bytes
                .get(offset..offset + n)
                .ok_or_else(|| bad("truncated tensor data"))?;
            for (x, chunk) in t.iter_mut().zip(raw.chunks_exact(8)) {
                *x = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            offset += n;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after tensors"));
        }
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Zero tensors with the shapes implied by `dims`.
fn skeleton(dims: ModelDims, _entities: usize, relations: usize) -> Params<Array2<f64>> {
    let z = |r, c| Array2::zeros((r, c));
    let layer = |i, o| GinLayer {
        eps: z(1, 1),
        w1: z(i, dims.gin_hidden),
        b1: z(1, dims.gin_hidden),
        w2: z(dims.gin_hidden, o),
        b2: z(1, o),
    };
    Params {
        relation_features: z(relations, dims.d1),
        gates: (0..dims.k)
            .map(|_| GateBlock {
                w1: z(dims.d2, dims.d0),
                w2: z(dims.d2, dims.d1),
            })
            .collect(),
        gin: (0..dims.channels())
            .map(|_| GinBlock {
                layers: vec![layer(dims.d0, dims.d4), layer(dims.d4, dims.d4)],
            })
            .collect(),
        readout: Readout {
            w: z(dims.channels() * dims.d4, 2 * dims.d3),
            b: z(1, 2 * dims.d3),
        },
        classifier: Classifier {
            w1: z(dims.d3, dims.cls_hidden),
            b1: z(1, dims.cls_hidden),
            w2: z(dims.cls_hidden, 1),
            b2: z(1, 1),
        },
    }
}

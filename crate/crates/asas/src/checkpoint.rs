//! Versioned checkpoint container: a JSON manifest (group -> tensor ->
//! shape/dtype/offset) followed by raw little-endian tensor payloads,
//! with a trailing SHA-256 over everything before it. Holds the model,
//! the optimizer accumulators, and the RNG seed/stream positions.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{group_of, ModelDims, ModelParams};
use crate::numerics::{AdagradConfig, Dtype, OptimizerState, Scalar, Tensor};

const MAGIC: &[u8; 8] = b"ASASCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    shape: Vec<usize>,
    dtype: Dtype,
    offset: u64,
    bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DimsEntry {
    vocab: usize,
    emb: usize,
    hidden: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerEntry {
    learning_rate: f64,
    initial_accumulator: f64,
    epsilon: f64,
    accumulators: BTreeMap<String, TensorEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    seed: u64,
    config_hash: String,
    config: serde_json::Value,
    dims: DimsEntry,
    /// group name -> tensor name -> entry
    params: BTreeMap<String, BTreeMap<String, TensorEntry>>,
    optimizer: OptimizerEntry,
    /// stream name -> ChaCha word position (decimal string)
    rng: BTreeMap<String, String>,
}

/// Run provenance stored alongside the tensors.
#[derive(Debug, Clone, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub rng_cursors: BTreeMap<String, u128>,
}

fn tensor_bytes<S: Scalar>(t: &Tensor<S>, out: &mut Vec<u8>) {
    for &v in t.data() {
        v.write_le(out);
    }
}

fn read_tensor<S: Scalar>(entry: &TensorEntry, payload: &[u8], name: &str) -> Result<Tensor<S>> {
    let start = entry.offset as usize;
    let end = start + entry.bytes as usize;
    if end > payload.len() {
        return Err(Error::Checkpoint(format!("payload too short for tensor {name}")));
    }
    let width = entry.dtype.byte_width();
    let numel: usize = entry.shape.iter().product();
    if numel * width != entry.bytes as usize {
        return Err(Error::Checkpoint(format!("byte count mismatch for tensor {name}")));
    }
    let raw = &payload[start..end];
    let data: Vec<S> = match entry.dtype {
        Dtype::F32 => raw.chunks_exact(4).map(|c| S::c(f32::read_le(c).f64_value())).collect(),
        Dtype::F64 => raw.chunks_exact(8).map(|c| S::c(f64::read_le(c))).collect(),
    };
    Ok(Tensor::new(entry.shape.clone(), data))
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    params: &ModelParams<S>,
    optimizer: &OptimizerState<S>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let mut payload = Vec::new();
    let mut groups: BTreeMap<String, BTreeMap<String, TensorEntry>> = BTreeMap::new();
    for (name, tensor) in params.named() {
        let offset = payload.len() as u64;
        tensor_bytes(tensor.as_ref(), &mut payload);
        groups.entry(group_of(name).to_string()).or_default().insert(
            name.to_string(),
            TensorEntry {
                shape: tensor.shape().to_vec(),
                dtype: S::DTYPE,
                offset,
                bytes: payload.len() as u64 - offset,
            },
        );
    }
    let mut accumulators = BTreeMap::new();
    for (name, acc) in optimizer.accumulators() {
        let offset = payload.len() as u64;
        tensor_bytes(acc, &mut payload);
        accumulators.insert(
            name.clone(),
            TensorEntry {
                shape: acc.shape().to_vec(),
                dtype: S::DTYPE,
                offset,
                bytes: payload.len() as u64 - offset,
            },
        );
    }
    let manifest = Manifest {
        version: VERSION,
        seed: meta.seed,
        config_hash: meta.config_hash.clone(),
        config: meta.config.clone(),
        dims: DimsEntry {
            vocab: params.dims.vocab,
            emb: params.dims.emb,
            hidden: params.dims.hidden,
        },
        params: groups,
        optimizer: OptimizerEntry {
            learning_rate: optimizer.config.learning_rate,
            initial_accumulator: optimizer.config.initial_accumulator,
            epsilon: optimizer.config.epsilon,
            accumulators,
        },
        rng: meta.rng_cursors.iter().map(|(k, v)| (k.clone(), v.to_string())).collect(),
    };
    let manifest_json = serde_json::to_vec(&manifest)?;

    let mut out = Vec::with_capacity(manifest_json.len() + payload.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);

    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&out)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Load a checkpoint. When `expected_dims` is given (from the run
/// config), every tensor's shape is validated against the current
/// architecture and mismatches name the offending tensor.
pub fn load_checkpoint<S: Scalar>(
    path: &Path,
    expected_dims: Option<ModelDims>,
) -> Result<(ModelParams<S>, OptimizerState<S>, CheckpointMeta)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() + 4 + 8 + 32 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("checksum failure: payload corrupted".into()));
    }
    if &body[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "version mismatch: file has {version}, this build reads {VERSION}"
        )));
    }
    let manifest_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    if 20 + manifest_len > body.len() {
        return Err(Error::Checkpoint("manifest length out of range".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&body[20..20 + manifest_len])
        .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
    let payload = &body[20 + manifest_len..];

    let dims = ModelDims {
        vocab: manifest.dims.vocab,
        emb: manifest.dims.emb,
        hidden: manifest.dims.hidden,
    };
    // shape template for validation; contents are overwritten below
    let mut template_rng = crate::rng::stream_rng(0, crate::rng::Stream::Init);
    let mut params = ModelParams::<S>::init(dims, &mut template_rng);
    if let Some(exp) = expected_dims {
        if exp != dims {
            // surface the first tensor whose shape differs
            let exp_params = ModelParams::<S>::init(exp, &mut template_rng);
            for ((name, have), (_, want)) in params.named().iter().zip(exp_params.named().iter()) {
                if have.shape() != want.shape() {
                    return Err(Error::Shape(format!(
                        "checkpoint tensor {name} has shape {:?}, configured model wants {:?}",
                        have.shape(),
                        want.shape()
                    )));
                }
            }
            return Err(Error::Shape(format!(
                "checkpoint dims {dims:?} differ from configured {exp:?}"
            )));
        }
    }

    let mut seen = 0usize;
    for (group, tensors) in &manifest.params {
        for (name, entry) in tensors {
            if group_of(name) != group {
                return Err(Error::Checkpoint(format!("tensor {name} filed under group {group}")));
            }
            let expected_shape = params
                .tensor(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name}")))?
                .shape()
                .to_vec();
            if expected_shape != entry.shape {
                return Err(Error::Shape(format!(
                    "checkpoint tensor {name} has shape {:?}, configured model wants {:?}",
                    entry.shape, expected_shape
                )));
            }
            let tensor = read_tensor::<S>(entry, payload, name)?;
            *params.tensor_mut(name).expect("known tensor") = tensor;
            seen += 1;
        }
    }
    let expected_count = params.named().len();
    if seen != expected_count {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {seen} tensors, model needs {expected_count}"
        )));
    }

    let mut optimizer = OptimizerState::<S>::new(AdagradConfig {
        learning_rate: manifest.optimizer.learning_rate,
        initial_accumulator: manifest.optimizer.initial_accumulator,
        epsilon: manifest.optimizer.epsilon,
    });
    for (name, entry) in &manifest.optimizer.accumulators {
        if params.tensor(name).is_none() {
            return Err(Error::Checkpoint(format!("accumulator for unknown tensor {name}")));
        }
        optimizer.insert_accumulator(name.clone(), read_tensor::<S>(entry, payload, name)?);
    }

    let mut rng_cursors = BTreeMap::new();
    for (k, v) in &manifest.rng {
        let pos: u128 = v
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad RNG cursor for stream {k}")))?;
        rng_cursors.insert(k.clone(), pos);
    }
    let meta = CheckpointMeta {
        seed: manifest.seed,
        config_hash: manifest.config_hash,
        config: manifest.config,
        rng_cursors,
    };
    Ok((params, optimizer, meta))
}

//! Versioned binary container for a [`TrainState`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "COOPNET\0"
//! version   u32
//! precision u8       32 or 64
//! hlen      u64
//! header    hlen bytes of JSON (descriptors, counters, RNG, tensor table)
//! payload   tensors in table order, raw little-endian elements
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ArchDescriptor, EnergyModel, GeneratorModel, ParamSet, Registry};
use crate::tensor::{Precision, Real, Tensor};
use crate::train::{AdamState, TrainState};

pub const MAGIC: &[u8; 8] = b"COOPNET\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    /// 32-byte ChaCha key, hex encoded.
    pub seed: String,
    pub stream: u64,
    /// Word position, decimal (it is a 128-bit counter).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = || Error::Checkpoint("malformed RNG state".into());
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Everything in a checkpoint except the tensor payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub solver_arch: ArchDescriptor,
    pub reference_std: Option<f64>,
    pub initializer_arch: ArchDescriptor,
    pub residual_std: f64,
    pub epoch: usize,
    pub step: u64,
    pub solver_adam_t: u64,
    pub initializer_adam_t: u64,
    pub rng: RngState,
    pub tensors: Vec<TensorEntry>,
}

const GROUPS: [&str; 6] = [
    "solver.param",
    "solver.adam_m",
    "solver.adam_v",
    "initializer.param",
    "initializer.adam_m",
    "initializer.adam_v",
];

fn groups<S: Real>(state: &TrainState<S>) -> [&ParamSet<S>; 6] {
    [
        &state.solver.params,
        &state.solver_adam.m,
        &state.solver_adam.v,
        &state.initializer.params,
        &state.initializer_adam.m,
        &state.initializer_adam.v,
    ]
}

/// Serializes a training state.
pub fn to_bytes<S: Real>(state: &TrainState<S>) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (group, set) in GROUPS.iter().zip(groups(state)) {
        for (name, t) in set.iter() {
            tensors.push(TensorEntry {
                name: format!("{group}/{name}"),
                shape: t.shape().to_vec(),
            });
            for &v in t.data() {
                v.write_le(&mut payload);
            }
        }
    }
    let header = Header {
        solver_arch: state.solver.arch().clone(),
        reference_std: state.solver.reference_std(),
        initializer_arch: state.initializer.arch().clone(),
        residual_std: state.initializer.residual_std(),
        epoch: state.epoch,
        step: state.step,
        solver_adam_t: state.solver_adam.t,
        initializer_adam_t: state.initializer_adam.t,
        rng: RngState::capture(&state.rng),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(21 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(S::PRECISION.bits());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

fn split_header(bytes: &[u8]) -> Result<(Precision, Header, &[u8])> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 21 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let precision = Precision::from_bits(bytes[12]).ok_or_else(|| bad("unknown precision"))?;
    let hlen = u64::from_le_bytes(bytes[13..21].try_into().unwrap()) as usize;
    let rest = &bytes[21..];
    if rest.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&rest[..hlen]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    Ok((precision, header, &rest[hlen..]))
}

/// Reads only the precision and header.
pub fn peek(path: &Path) -> Result<(Precision, Header)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (p, h, _) = split_header(&bytes)?;
    Ok((p, h))
}

pub fn from_bytes<S: Real>(bytes: &[u8]) -> Result<TrainState<S>> {
    from_bytes_with(bytes, Registry::energy_builtin(), Registry::generator_builtin())
}

pub fn from_bytes_with<S: Real>(bytes: &[u8], energy: &Registry, generator: &Registry) -> Result<TrainState<S>> {
    let (precision, header, mut payload) = split_header(bytes)?;
    if precision != S::PRECISION {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {}-bit values, requested {}-bit",
            precision.bits(),
            S::PRECISION.bits()
        )));
    }
    let mut sets: BTreeMap<&str, ParamSet<S>> = GROUPS.iter().map(|g| (*g, ParamSet::new())).collect();
    for e in &header.tensors {
        let (group, name) = e
            .name
            .split_once('/')
            .ok_or_else(|| Error::Checkpoint(format!("bad tensor name `{}`", e.name)))?;
        let set = sets
            .get_mut(group)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor group `{group}`")))?;
        let n: usize = e.shape.iter().product();
        let nb = n * S::BYTES;
        if payload.len() < nb {
            return Err(Error::Checkpoint(format!("payload truncated at `{}`", e.name)));
        }
        let data = payload[..nb].chunks_exact(S::BYTES).map(S::read_le).collect();
        payload = &payload[nb..];
        set.insert(name, Tensor::from_vec(e.shape.clone(), data)?);
    }
    if !payload.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing payload bytes", payload.len())));
    }
    let mut take = |g: &str| sets.remove(g).expect("all groups present");
    let solver = EnergyModel::from_params(
        header.solver_arch.clone(),
        header.reference_std,
        take("solver.param"),
        energy,
    )?;
    let solver_adam = AdamState {
        m: take("solver.adam_m"),
        v: take("solver.adam_v"),
        t: header.solver_adam_t,
    };
    let initializer = GeneratorModel::from_params(
        header.initializer_arch.clone(),
        header.residual_std,
        take("initializer.param"),
        generator,
    )?;
    let initializer_adam = AdamState {
        m: take("initializer.adam_m"),
        v: take("initializer.adam_v"),
        t: header.initializer_adam_t,
    };
    solver.network().check_params(&solver_adam.m)?;
    solver.network().check_params(&solver_adam.v)?;
    initializer.network().check_params(&initializer_adam.m)?;
    initializer.network().check_params(&initializer_adam.v)?;
    Ok(TrainState {
        solver,
        initializer,
        solver_adam,
        initializer_adam,
        epoch: header.epoch,
        step: header.step,
        rng: header.rng.restore()?,
    })
}

/// Writes atomically: the bytes go to a sibling temporary file that is then
/// renamed over `path`.
pub fn save_state<S: Real>(path: &Path, state: &TrainState<S>) -> Result<()> {
    let bytes = to_bytes(state);
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_state<S: Real>(path: &Path) -> Result<TrainState<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

//! Binary checkpoint format.
//!
//! ```text
//! magic     8 bytes   "LTD3CKPT"
//! version   u32 LE
//! hdr_len   u64 LE
//! header    hdr_len bytes of JSON (config, env spec, run metadata, tensor names and shapes)
//! payload   f64 LE values of every tensor, in header order
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentConfig};
use crate::env::{EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::pomdp::PomdpConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"LTD3CKPT";

/// Run context stored alongside the parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub env: Option<EnvKind>,
    pub pomdp: Option<PomdpConfig>,
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub rng_states: BTreeMap<String, ChaCha8Rng>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    agent: AgentConfig,
    env_spec: EnvSpec,
    meta: CheckpointMeta,
    critic_updates: u64,
    actor_updates: u64,
    tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(agent: &Agent, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (net_name, net) in agent.named_networks() {
        for p in net.params().iter() {
            tensors.push(TensorEntry {
                name: format!("{net_name}/{}", p.name),
                shape: p.value.shape().to_vec(),
            });
            for v in p.value.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        agent: agent.config().clone(),
        env_spec: agent.spec().clone(),
        meta: meta.clone(),
        critic_updates: agent.critic_updates(),
        actor_updates: agent.actor_updates(),
        tensors,
    };
    let header =
        serde_json::to_vec(&header).map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::CheckpointCorrupt(format!(
            "truncated while reading {what}"
        )));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn decode_checkpoint(mut bytes: &[u8]) -> Result<(Agent, CheckpointMeta)> {
    if take(&mut bytes, 8, "magic")? != MAGIC {
        return Err(Error::CheckpointCorrupt("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hdr_len = u64::from_le_bytes(
        take(&mut bytes, 8, "header length")?
            .try_into()
            .expect("8 bytes"),
    );
    let hdr_len = usize::try_from(hdr_len)
        .map_err(|_| Error::CheckpointCorrupt("header length overflow".into()))?;
    let header: Header = serde_json::from_slice(take(&mut bytes, hdr_len, "header")?)
        .map_err(|e| Error::CheckpointCorrupt(format!("unreadable header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }

    let mut agent = Agent::build(header.agent.clone(), &header.env_spec, 0)?;
    let mut entries = header.tensors.iter();
    for (net_name, net) in agent.named_networks_mut() {
        for p in net.params_mut().iter_mut() {
            let name = format!("{net_name}/{}", p.name);
            let entry = entries
                .next()
                .ok_or_else(|| Error::CheckpointCorrupt(format!("missing tensor `{name}`")))?;
            if entry.name != name {
                return Err(Error::CheckpointCorrupt(format!(
                    "expected tensor `{name}`, found `{}`",
                    entry.name
                )));
            }
            if entry.shape != p.value.shape() {
                return Err(Error::CheckpointShape {
                    name,
                    expected: p.value.shape().to_vec(),
                    found: entry.shape.clone(),
                });
            }
            let raw = take(&mut bytes, 8 * p.value.numel(), "payload")?;
            for (dst, chunk) in p.value.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
    }
    if let Some(extra) = entries.next() {
        return Err(Error::CheckpointCorrupt(format!(
            "unexpected tensor `{}`",
            extra.name
        )));
    }
    if !bytes.is_empty() {
        return Err(Error::CheckpointCorrupt(format!(
            "{} trailing bytes",
            bytes.len()
        )));
    }
    agent.set_update_counts(header.critic_updates, header.actor_updates);
    Ok((agent, header.meta))
}

pub fn save_checkpoint(agent: &Agent, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(agent, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Agent, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and refuses it unless it was written for `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &EnvSpec) -> Result<(Agent, CheckpointMeta)> {
    let (agent, meta) = load_checkpoint(path)?;
    if agent.spec() != expected {
        return Err(Error::SpecMismatch {
            expected: format!("{expected:?}"),
            found: format!("{:?}", agent.spec()),
        });
    }
    Ok((agent, meta))
}

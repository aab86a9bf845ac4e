//! Versioned binary parameter checkpoints with a JSON sidecar.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "PTAC1" | head u8 | version u64
//! per network (policy, then value): layer count u32 | sizes u32… | params f64…
//! log σ f64 (Gaussian head only)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AgentError, AgentParams, HeadKind, Mlp};

pub const MAGIC: &[u8; 5] = b"PTAC1";

fn head_id(h: HeadKind) -> u8 {
    match h {
        HeadKind::Categorical => 0,
        HeadKind::SquashedGaussian => 1,
    }
}

fn err(msg: impl Into<String>) -> AgentError {
    AgentError::Checkpoint(msg.into())
}

pub fn write_checkpoint(mut out: impl Write, params: &AgentParams) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[head_id(params.head)])?;
    out.write_all(&params.version.to_le_bytes())?;
    for net in [&params.policy, &params.value] {
        out.write_all(&(net.sizes().len() as u32).to_le_bytes())?;
        for &s in net.sizes() {
            out.write_all(&(s as u32).to_le_bytes())?;
        }
        for p in net.params() {
            out.write_all(&p.to_le_bytes())?;
        }
    }
    if params.head == HeadKind::SquashedGaussian {
        out.write_all(&params.log_std.to_le_bytes())?;
    }
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], AgentError> {
        if self.0.len() < N {
            return Err(err("truncated checkpoint"));
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("split at N"))
    }

    fn u32(&mut self) -> Result<u32, AgentError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, AgentError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn net(&mut self) -> Result<Mlp, AgentError> {
        let n = self.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(err(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| self.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
        let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if count * 8 > self.0.len() {
            return Err(err("truncated checkpoint"));
        }
        let params = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
        Mlp::from_parts(sizes, params).ok_or_else(|| err("bad layer sizes"))
    }
}

pub fn read_checkpoint(mut input: impl Read) -> Result<AgentParams, AgentError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| err(e.to_string()))?;
    let mut c = Cursor(&bytes);
    if &c.take::<5>()? != MAGIC {
        return Err(err("bad magic"));
    }
    let head = match c.take::<1>()?[0] {
        0 => HeadKind::Categorical,
        1 => HeadKind::SquashedGaussian,
        h => return Err(err(format!("unknown head {h}"))),
    };
    let version = u64::from_le_bytes(c.take()?);
    let policy = c.net()?;
    let value = c.net()?;
    let log_std = if head == HeadKind::SquashedGaussian { c.f64()? } else { super::LOG_STD_INIT };
    if !c.0.is_empty() {
        return Err(err("trailing bytes"));
    }
    if policy.input_len() != value.input_len() || policy.sizes().last() != Some(&head.outputs()) || value.sizes().last() != Some(&1) {
        return Err(err("network shapes do not match the head"));
    }
    Ok(AgentParams { head, policy, value, log_std, version })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub head: HeadKind,
    pub version: u64,
    pub policy_layers: Vec<usize>,
    pub value_layers: Vec<usize>,
    pub checksum: String,
    pub seed: u64,
    /// Whatever configuration produced the parameters.
    pub config: Value,
}

impl CheckpointMeta {
    pub fn describe(params: &AgentParams, seed: u64, config: Value) -> Self {
        Self {
            format: String::from_utf8_lossy(MAGIC).into_owned(),
            head: params.head,
            version: params.version,
            policy_layers: params.policy.sizes().to_vec(),
            value_layers: params.value.sizes().to_vec(),
            checksum: params.checksum(),
            seed,
            config,
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` and `path.json`.
pub fn save_checkpoint(path: &Path, params: &AgentParams, meta: &CheckpointMeta) -> Result<(), AgentError> {
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, params).map_err(|e| err(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| err(format!("{}: {e}", path.display())))?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| err(e.to_string()))?;
    fs::write(sidecar(path), json + "\n").map_err(|e| err(e.to_string()))
}

/// Reads a checkpoint and its sidecar, verifying the parameter checksum.
pub fn load_checkpoint(path: &Path) -> Result<(AgentParams, CheckpointMeta), AgentError> {
    let file = fs::File::open(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    let params = read_checkpoint(file)?;
    let text = fs::read_to_string(sidecar(path)).map_err(|e| err(format!("sidecar: {e}")))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| err(format!("sidecar: {e}")))?;
    if meta.checksum != params.checksum() {
        return Err(err("parameter checksum does not match the sidecar"));
    }
    Ok((params, meta))
}

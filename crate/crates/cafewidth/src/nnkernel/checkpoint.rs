//! Versioned binary checkpoints for [`SupernetState`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  "CAFW1"                           5 bytes
//! count  u32                               number of tensors
//! tensor records, each:
//!   name_len u32, name utf-8 bytes
//!   rank     u32, dims u32 × rank          rank 0 means one scalar
//!   payload  f64 × Π dims
//! ```
//!
//! Tensors are named `layer{i}.weight|bias|mweight|mbias` (i is the 1-based
//! layer id) plus a rank-0 `step`. The loader rebuilds the state for a given
//! graph and rejects missing, unknown, or wrongly shaped tensors.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::archgraph::{LayerKind, NetworkGraph};
use crate::error::{Error, Result};
use crate::nnkernel::{LayerTensors, SupernetState};

pub const MAGIC: &[u8; 5] = b"CAFW1";

fn tensor_dims(layer: &LayerTensors, which: &str) -> Vec<u32> {
    match which {
        "weight" | "mweight" => match layer.kind {
            LayerKind::Conv => vec![layer.n_out as u32, layer.n_in as u32, layer.k as u32, layer.k as u32],
            LayerKind::DepthwiseConv => vec![layer.n_out as u32, layer.k as u32, layer.k as u32],
            LayerKind::Dense => vec![layer.n_out as u32, layer.n_in as u32],
        },
        _ => vec![layer.n_out as u32],
    }
}

fn write_tensor(out: &mut impl Write, name: &str, dims: &[u32], data: &[f64]) -> Result<()> {
    debug_assert_eq!(dims.iter().product::<u32>().max(1) as usize, data.len());
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&d.to_le_bytes())?;
    }
    for &v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Serialize a state to the versioned binary form.
pub fn write_checkpoint(state: &SupernetState, out: &mut impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    let count = state.layers.len() * 4 + 1;
    out.write_all(&(count as u32).to_le_bytes())?;
    for (idx, layer) in state.layers.iter().enumerate() {
        let id = idx + 1;
        for (which, data) in [
            ("weight", &layer.w),
            ("bias", &layer.b),
            ("mweight", &layer.mw),
            ("mbias", &layer.mb),
        ] {
            write_tensor(out, &format!("layer{id}.{which}"), &tensor_dims(layer, which), data)?;
        }
    }
    write_tensor(out, "step", &[], &[state.step as f64])?;
    Ok(())
}

pub fn save_checkpoint(state: &SupernetState, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(state, &mut file)?;
    file.flush()?;
    Ok(())
}

fn read_exact(input: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    input
        .read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("unexpected end of file".into()))?;
    Ok(buf)
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let b = read_exact(input, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parse a checkpoint and validate every tensor against `graph`'s shapes.
pub fn read_checkpoint(graph: &NetworkGraph, input: &mut impl Read) -> Result<SupernetState> {
    let magic = read_exact(input, 5)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let count = read_u32(input)? as usize;
    let mut tensors: BTreeMap<String, (Vec<u32>, Vec<f64>)> = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(input)? as usize;
        if name_len > 4096 {
            return Err(Error::Checkpoint(format!("tensor name length {name_len} is implausible")));
        }
        let name = String::from_utf8(read_exact(input, name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        let rank = read_u32(input)? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("tensor rank {rank} is implausible")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(input)?);
        }
        let len = dims.iter().product::<u32>().max(1) as usize;
        let raw = read_exact(input, len * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        if tensors.insert(name.clone(), (dims, data)).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name:?}")));
        }
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).unwrap_or(0) > 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }

    // Build the expected skeleton from the graph, then fill it.
    let mut state = SupernetState::init(graph, 0);
    let mut used = 0usize;
    for (idx, layer) in state.layers.iter_mut().enumerate() {
        let id = idx + 1;
        for (which, slot) in [
            ("weight", &mut layer.w),
            ("bias", &mut layer.b),
            ("mweight", &mut layer.mw),
            ("mbias", &mut layer.mb),
        ] {
            let name = format!("layer{id}.{which}");
            let (dims, data) = tensors
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))?;
            let expect = tensor_dims_for(layer.kind, layer.n_out, layer.n_in, layer.k, which);
            if *dims != expect {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?} has dims {dims:?}, expected {expect:?}"
                )));
            }
            slot.copy_from_slice(data);
            used += 1;
        }
    }
    let (dims, data) = tensors
        .get("step")
        .ok_or_else(|| Error::Checkpoint("missing tensor \"step\"".into()))?;
    if !dims.is_empty() || data.len() != 1 {
        return Err(Error::Checkpoint("tensor \"step\" must be a scalar".into()));
    }
    state.step = data[0] as u64;
    used += 1;
    if used != tensors.len() {
        let extra: Vec<&String> = tensors
            .keys()
            .filter(|k| {
                k.as_str() != "step"
                    && !(1..=state.layers.len()).any(|id| {
                        ["weight", "bias", "mweight", "mbias"]
                            .iter()
                            .any(|w| k.as_str() == format!("layer{id}.{w}"))
                    })
            })
            .collect();
        return Err(Error::Checkpoint(format!("unexpected tensors {extra:?}")));
    }
    Ok(state)
}

fn tensor_dims_for(kind: LayerKind, n_out: usize, n_in: usize, k: usize, which: &str) -> Vec<u32> {
    match which {
        "weight" | "mweight" => match kind {
            LayerKind::Conv => vec![n_out as u32, n_in as u32, k as u32, k as u32],
            LayerKind::DepthwiseConv => vec![n_out as u32, k as u32, k as u32],
            LayerKind::Dense => vec![n_out as u32, n_in as u32],
        },
        _ => vec![n_out as u32],
    }
}

pub fn load_checkpoint(graph: &NetworkGraph, path: &Path) -> Result<SupernetState> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(graph, &mut file)
}

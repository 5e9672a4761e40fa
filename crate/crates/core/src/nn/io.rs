//! Checkpoint container `crossrsa-ckpt/1`.
//!
//! ```text
//! str  magic            "crossrsa-ckpt/1"
//! str  header           JSON: {rule, seed, epochs_trained, has_fc1, spec, norm}
//! u32  n_tensors
//! per tensor:
//!   str  layer          "Conv1" .. "FC2"
//!   str  kind           "weight" | "bias"
//!   u32  ndim
//!   u64  dims[ndim]
//!   f64  values[prod(dims)]   row-major
//! ```
//!
//! Strings are `u32` length + UTF-8, numbers little-endian. Conv weights are
//! stored as `(out, in, k, k)`, dense weights as `(out, in)`.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{ChannelNorm, Checkpoint, LayerKind, NetworkSpec, NnError, Rule};
use crate::binio::{FormatError, Reader, Writer};
use crate::error::{Error, Result};

pub const CKPT_MAGIC: &str = "crossrsa-ckpt/1";

#[derive(Serialize, Deserialize)]
struct Header {
    rule: Rule,
    seed: u64,
    epochs_trained: usize,
    has_fc1: bool,
    spec: NetworkSpec,
    norm: ChannelNorm,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let header = Header {
        rule: ckpt.rule,
        seed: ckpt.seed,
        epochs_trained: ckpt.epochs_trained,
        has_fc1: ckpt.has_fc1,
        spec: ckpt.spec.clone(),
        norm: ckpt.norm.clone(),
    };
    let mut w = Writer::new();
    w.str(CKPT_MAGIC)
        .str(&serde_json::to_string(&header).expect("header serialises"))
        .u32(2 * ckpt.layers.len() as u32);
    for layer in &ckpt.layers {
        let name = layer.name.to_string();
        let dims: Vec<usize> = match layer.kind {
            LayerKind::Conv { in_channels, kernel, .. } => {
                vec![layer.weight.nrows(), in_channels, kernel, kernel]
            }
            LayerKind::Dense { .. } => vec![layer.weight.nrows(), layer.weight.ncols()],
        };
        w.str(&name).str("weight").u32(dims.len() as u32);
        for d in dims {
            w.u64(d as u64);
        }
        w.f64s(layer.weight.iter().copied());
        w.str(&name).str("bias").u32(1).u64(layer.bias.len() as u64);
        w.f64s(layer.bias.iter().copied());
    }
    w.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<Checkpoint, NnError> {
    let mut r = Reader::new(bytes);
    r.magic(CKPT_MAGIC)?;
    let header: Header = serde_json::from_str(&r.str("header")?)
        .map_err(|e| FormatError::Header(e.to_string()))?;
    header.spec.validate()?;
    let mut layers = header.spec.build_layers(header.has_fc1);
    let n = r.u32("tensor count")? as usize;
    if n != 2 * layers.len() {
        return Err(FormatError::Schema(format!("expected {} tensors, found {n}", 2 * layers.len())).into());
    }
    let mut seen = vec![[false; 2]; layers.len()];
    for _ in 0..n {
        let name = r.str("tensor layer")?;
        let kind = r.str("tensor kind")?;
        let ndim = r.u32("tensor rank")? as usize;
        if ndim > 4 {
            return Err(FormatError::Schema(format!("tensor {name}.{kind} has rank {ndim}")).into());
        }
        let dims = (0..ndim)
            .map(|_| r.u64("tensor dims").map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let idx = layers
            .iter()
            .position(|l| l.name.to_string() == name)
            .ok_or_else(|| FormatError::Schema(format!("unknown layer {name:?}")))?;
        let layer = &mut layers[idx];
        let slot = match kind.as_str() {
            "weight" => 0,
            "bias" => 1,
            other => return Err(FormatError::Schema(format!("unknown tensor kind {other:?}")).into()),
        };
        if std::mem::replace(&mut seen[idx][slot], true) {
            return Err(FormatError::Schema(format!("duplicate tensor {name}.{kind}")).into());
        }
        let expected: Vec<usize> = match (slot, &layer.kind) {
            (0, LayerKind::Conv { in_channels, kernel, .. }) => {
                vec![layer.weight.nrows(), *in_channels, *kernel, *kernel]
            }
            (0, LayerKind::Dense { .. }) => vec![layer.weight.nrows(), layer.weight.ncols()],
            _ => vec![layer.bias.len()],
        };
        if dims != expected {
            return Err(NnError::Shape {
                layer: name,
                msg: format!("{kind} has shape {dims:?}, expected {expected:?}"),
            });
        }
        let values = r.f64s(expected.iter().product(), "tensor values")?;
        if slot == 0 {
            layer.weight = Array2::from_shape_vec(layer.weight.dim(), values).expect("sized");
        } else {
            layer.bias = Array1::from(values);
        }
    }
    r.finish()?;
    let ckpt = Checkpoint {
        spec: header.spec,
        rule: header.rule,
        seed: header.seed,
        epochs_trained: header.epochs_trained,
        has_fc1: header.has_fc1,
        layers,
        norm: header.norm,
    };
    ckpt.validate()?;
    Ok(ckpt)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    Ok(decode_checkpoint(&bytes)?)
}

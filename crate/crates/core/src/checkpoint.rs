//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `FDRCKPT1`, a little-endian `u64` header length,
//! a JSON header (model kind, hyperparameters, layer specs, tensor shapes,
//! validation trace), then every parameter value as little-endian `f64` in
//! storage order. Values are written bit-for-bit, so save/load is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Hyperparams, ModelKind, TrainedModel};
use crate::nn::{Layer, LayerSpec, Network, RealMatrix};

pub const MAGIC: &[u8; 8] = b"FDRCKPT1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: ModelKind,
    hyperparams: Hyperparams,
    layers: Vec<LayerSpec>,
    tensor_shapes: Vec<(usize, usize)>,
    value_count: usize,
    val_loss_trace: Vec<f64>,
    best_epoch: usize,
}

pub fn save<W: Write>(model: &TrainedModel, sink: W) -> Result<()> {
    let mut sink = BufWriter::new(sink);
    let tensor_shapes: Vec<_> = model.network.params().map(|p| p.shape()).collect();
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: model.kind,
        hyperparams: model.hyperparams,
        layers: model.network.specs(),
        value_count: tensor_shapes.iter().map(|(r, c)| r * c).sum(),
        tensor_shapes,
        val_loss_trace: model.val_loss_trace.clone(),
        best_epoch: model.best_epoch,
    };
    let header = serde_json::to_vec(&header)?;
    sink.write_all(MAGIC)?;
    sink.write_all(&(header.len() as u64).to_le_bytes())?;
    sink.write_all(&header)?;
    for p in model.network.params() {
        for v in p.value.values() {
            sink.write_all(&v.to_le_bytes())?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn load<R: Read>(source: R) -> Result<TrainedModel> {
    let mut source = BufReader::new(source);
    let mut magic = [0u8; 8];
    source.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    source.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Checkpoint(format!("implausible header length {len}")));
    }
    let mut header = vec![0u8; len];
    source.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let expected_shapes: Vec<(usize, usize)> =
        header.layers.iter().flat_map(LayerSpec::param_shapes).collect();
    if expected_shapes != header.tensor_shapes {
        return Err(Error::Checkpoint("tensor shapes disagree with layer specs".into()));
    }

    let mut buf = [0u8; 8];
    let mut layers = Vec::with_capacity(header.layers.len());
    let mut read_count = 0;
    for spec in &header.layers {
        let mut tensors = Vec::new();
        for (rows, cols) in spec.param_shapes() {
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                source.read_exact(&mut buf).map_err(|e| {
                    Error::Checkpoint(format!("truncated parameter payload: {e}"))
                })?;
                values.push(f64::from_le_bytes(buf));
            }
            read_count += rows * cols;
            tensors.push(RealMatrix::from_vec(rows, cols, values)?);
        }
        layers.push(Layer::from_params(*spec, tensors)?);
    }
    if read_count != header.value_count {
        return Err(Error::Checkpoint(format!(
            "header declares {} values, layers hold {read_count}",
            header.value_count
        )));
    }
    if source.read(&mut buf)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameter payload".into()));
    }
    Ok(TrainedModel {
        kind: header.kind,
        hyperparams: header.hyperparams,
        network: Network::new(layers),
        val_loss_trace: header.val_loss_trace,
        best_epoch: header.best_epoch,
    })
}

pub fn save_path(model: &TrainedModel, path: &Path) -> Result<()> {
    save(model, File::create(path)?)
}

pub fn load_path(path: &Path) -> Result<TrainedModel> {
    load(File::open(path)?)
}

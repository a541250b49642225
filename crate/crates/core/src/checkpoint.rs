//! Single-file checkpoints.
//!
//! The container is a safetensors file: an 8-byte little-endian header
//! length, a JSON header describing every tensor (name, `F32` dtype, shape,
//! byte offsets), then the raw little-endian `f32` data. The run header
//! (configuration, label coding, seed, metric history) is stored as a JSON
//! string under the `"header"` metadata key.

use std::collections::HashMap;
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use crate::augment::MACHINE_PAIR_LABEL;
use crate::config::TrainConfig;
use crate::corpus::{HUMAN_CODE, MACHINE_CODE};
use crate::error::{Error, Result};
use crate::model::{Model, Params};
use crate::objective::ContrastiveMode;
use crate::trainer::RunRecord;

pub const FORMAT: &str = "mgtd-checkpoint/1";
const HEADER_KEY: &str = "header";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCoding {
    pub human: u8,
    pub machine: u8,
    pub machine_pair_label: i8,
}

impl Default for LabelCoding {
    fn default() -> Self {
        LabelCoding {
            human: HUMAN_CODE,
            machine: MACHINE_CODE,
            machine_pair_label: MACHINE_PAIR_LABEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub label_coding: LabelCoding,
    pub seed: u64,
    pub contrastive_mode: ContrastiveMode,
    pub config: TrainConfig,
    pub run: Option<RunRecord>,
}

impl CheckpointHeader {
    pub fn new(config: &TrainConfig, run: Option<RunRecord>) -> Self {
        CheckpointHeader {
            format: FORMAT.to_string(),
            label_coding: LabelCoding::default(),
            seed: config.seed,
            contrastive_mode: config.mode,
            config: config.clone(),
            run,
        }
    }
}

fn ckpt_err(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn to_bytes(params: &Params, header: &CheckpointHeader) -> Result<Vec<u8>> {
    let tensors = params.tensors();
    let buffers: Vec<Vec<u8>> = tensors
        .iter()
        .map(|t| t.data.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect())
        .collect();
    let views = tensors
        .iter()
        .zip(&buffers)
        .map(|(t, buf)| Ok((t.name, TensorView::new(Dtype::F32, t.shape.clone(), buf).map_err(ckpt_err)?)))
        .collect::<Result<Vec<_>>>()?;
    let metadata = HashMap::from([(HEADER_KEY.to_string(), serde_json::to_string(header)?)]);
    safetensors::serialize(views, Some(metadata)).map_err(ckpt_err)
}

pub fn save(path: impl AsRef<Path>, model: &Model, header: &CheckpointHeader) -> Result<()> {
    let path = path.as_ref();
    if model.config != header.config.model_config() {
        return Err(Error::Checkpoint("header configuration does not describe this model".into()));
    }
    let bytes = to_bytes(&model.params, header)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Params, CheckpointHeader)> {
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(ckpt_err)?;
    let header_json = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(HEADER_KEY))
        .ok_or_else(|| Error::Checkpoint("missing run header".into()))?;
    let header: CheckpointHeader = serde_json::from_str(header_json)?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format {:?}", header.format)));
    }
    if header.label_coding != LabelCoding::default() {
        return Err(Error::Checkpoint(format!(
            "checkpoint label coding {:?} differs from this build",
            header.label_coding
        )));
    }

    let st = SafeTensors::deserialize(bytes).map_err(ckpt_err)?;
    let mut params = Params::zeros(&header.config.model_config());
    let expected: Vec<(&'static str, Vec<usize>)> =
        params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    if st.names().len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            st.names().len()
        )));
    }
    for ((name, shape), dst) in expected.iter().zip(params.slices_mut()) {
        let view = st.tensor(name).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        if view.dtype() != Dtype::F32 {
            return Err(Error::Checkpoint(format!("{name}: expected F32, found {:?}", view.dtype())));
        }
        if view.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{name}: expected shape {shape:?}, found {:?}",
                view.shape()
            )));
        }
        for (d, chunk) in dst.iter_mut().zip(view.data().chunks_exact(4)) {
            *d = f64::from(f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")));
        }
    }
    Ok((params, header))
}

pub fn load(path: impl AsRef<Path>) -> Result<(Model, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (params, header) = from_bytes(&bytes)?;
    let model = Model::from_params(header.config.model_config(), params)?;
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig {
            embed_dim: 3,
            hidden_dim: 2,
            vocab_buckets: 5,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = cfg();
        let model = Model::new(c.model_config(), c.seed).unwrap();
        let header = CheckpointHeader::new(&c, None);
        let bytes = to_bytes(&model.params, &header).unwrap();
        let (params, h2) = from_bytes(&bytes).unwrap();
        assert_eq!(h2, header);
        for (a, b) in params.slices().iter().zip(model.params.slices()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(h2.seed, 11);
    }

    #[test]
    fn stores_one_tensor_per_parameter() {
        let c = cfg();
        let model = Model::new(c.model_config(), 0).unwrap();
        let bytes = to_bytes(&model.params, &CheckpointHeader::new(&c, None)).unwrap();
        let st = SafeTensors::deserialize(&bytes).unwrap();
        let mut names = st.names();
        names.sort();
        assert_eq!(
            names,
            vec![
                "encoder.embedding",
                "encoder.proj.bias",
                "encoder.proj.weight",
                "head.dense.bias",
                "head.dense.weight",
                "head.out.bias",
                "head.out.weight",
            ]
        );
    }

    #[test]
    fn rejects_garbage_and_mismatched_shapes() {
        assert!(from_bytes(b"not a checkpoint").is_err());
        let c = cfg();
        let model = Model::new(c.model_config(), 0).unwrap();
        let other = TrainConfig {
            embed_dim: 4,
            ..c.clone()
        };
        let bytes = to_bytes(&model.params, &CheckpointHeader::new(&other, None)).unwrap();
        assert!(matches!(from_bytes(&bytes), Err(Error::Checkpoint(_))));
    }
}

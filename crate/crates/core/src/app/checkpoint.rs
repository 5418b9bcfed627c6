//! Binary checkpoint: `MAGIC`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header, then every tensor as
//! little-endian `f32` values, row-major, in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::numerics::Tensor;
use crate::tokenizer::Vocab;

pub const MAGIC: &[u8; 8] = b"TYSPANCK";
pub const FORMAT_VERSION: u32 = 1;

/// Where a set of weights came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    /// Seed for initialization and training randomness.
    pub seed: u64,
    /// Optimizer updates applied since initialization.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    vocab: Vocab,
    lineage: Lineage,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes(model: &Model, lineage: &Lineage) -> Result<Vec<u8>> {
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        lineage: lineage.clone(),
        tensors: model
            .params
            .iter()
            .map(|(name, t)| TensorEntry { name: name.to_string(), shape: t.shape().to_vec() })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 20 + 4 * model.params.num_values());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format(format!("checkpoint truncated in {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<(Model, Lineage)> {
    if take(&mut bytes, 8, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().expect("8 bytes"));
    let header: Header = serde_json::from_slice(take(&mut bytes, len as usize, "header")?)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut params = ModelParams::new();
    for entry in &header.tensors {
        if params.get(&entry.name).is_some() {
            return Err(Error::Format(format!("tensor `{}` listed twice", entry.name)));
        }
        let count: usize = entry.shape.iter().product();
        let raw = take(&mut bytes, 4 * count, &entry.name)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        params.insert(entry.name.clone(), Tensor::new(&entry.shape, data)?);
    }
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after the last tensor", bytes.len())));
    }
    header.config.validate()?;
    let expected = crate::model::init_params::<f32>(&header.config, header.vocab.len(), 0);
    for (name, t) in expected.iter() {
        match params.get(name) {
            Some(p) if p.shape() == t.shape() => {}
            Some(p) => {
                return Err(Error::Format(format!("tensor `{name}` has shape {:?}, config implies {:?}", p.shape(), t.shape())))
            }
            None => return Err(Error::Format(format!("checkpoint lacks tensor `{name}`"))),
        }
    }
    if params.len() != expected.len() {
        return Err(Error::Format("checkpoint has tensors the config does not define".into()));
    }
    Ok((Model { config: header.config, vocab: header.vocab, params }, header.lineage))
}

pub fn save_checkpoint(path: &Path, model: &Model, lineage: &Lineage) -> Result<()> {
    fs::write(path, to_bytes(model, lineage)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, Lineage)> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::matcher::HeadConfig;

    fn model() -> Model {
        let cfg = ModelConfig {
            encoder: EncoderConfig { depth: 1, width: 8, heads: 2, ffn_mult: 2, max_positions: 32, dropout: 0.1, layer_norm_eps: 1e-5 },
            heads: HeadConfig { dropout: 0.4, max_width: 4 },
            max_types: 5,
        };
        Model::new(cfg, Vocab::from_units(&["ab", "cd"]).unwrap(), 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = model();
        // include values whose bit patterns a text format could disturb
        m.params.get_mut("final_ln.beta").unwrap().data_mut()[..3].copy_from_slice(&[-0.0, f32::MIN_POSITIVE, 1.0e-45]);
        let lin = Lineage { seed: 9, steps: 12 };
        let (back, lin2) = from_bytes(&to_bytes(&m, &lin).unwrap()).unwrap();
        assert_eq!(lin, lin2);
        assert_eq!(back.config, m.config);
        assert_eq!(back.vocab, m.vocab);
        for ((n1, a), (n2, b)) in m.params.iter().zip(back.params.iter()) {
            assert_eq!(n1, n2);
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = to_bytes(&model(), &Lineage { seed: 0, steps: 0 }).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(from_bytes(&magic).is_err());
        let mut version = bytes;
        version[8] = 7;
        assert!(from_bytes(&version).is_err());
    }
}

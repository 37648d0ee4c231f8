//! Checkpoint files: one line of JSON header, then little-endian `f32` payload.
//!
//! The header lists every tensor by name with its shape and its offset (in
//! floats) into the payload, plus the architecture needed to rebuild the bundle.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Encoder, Linear, Mlp, ModelBundle, ModelConfig};
use crate::autodiff::Matrix;
use crate::error::{CdganError, Result};

const FORMAT: &str = "cdgan-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

fn named(bundle: &ModelBundle<f32>) -> Vec<(String, &Matrix<f32>)> {
    fn mlp<'a>(prefix: &str, m: &'a Mlp<f32>, out: &mut Vec<(String, &'a Matrix<f32>)>) {
        for (i, l) in m.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &l.weight));
            out.push((format!("{prefix}.{i}.bias"), &l.bias));
        }
    }
    let mut out = Vec::new();
    mlp("generator", &bundle.generator, &mut out);
    mlp("discriminator", &bundle.discriminator, &mut out);
    mlp("encoder.trunk", &bundle.encoder.trunk, &mut out);
    for (head, l) in [("f_head", &bundle.encoder.f_head), ("e_head", &bundle.encoder.e_head)] {
        out.push((format!("encoder.{head}.weight"), &l.weight));
        out.push((format!("encoder.{head}.bias"), &l.bias));
    }
    out
}

pub fn to_bytes(bundle: &ModelBundle<f32>) -> Result<Vec<u8>> {
    let tensors = named(bundle);
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for (name, m) in &tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: m.shape(),
            offset,
        });
        offset += m.as_slice().len();
    }
    let header = Header {
        format: FORMAT.to_string(),
        config: bundle.config.clone(),
        tensors: entries,
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(offset * 4);
    for (_, m) in &tensors {
        for v in m.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

pub fn save(bundle: &ModelBundle<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(bundle)?).map_err(|e| CdganError::io(path, e))
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelBundle<f32>> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| CdganError::Format {
        offset: 0,
        msg: "checkpoint header is not newline-terminated".into(),
    })?;
    let header: Header = serde_json::from_slice(&bytes[..nl])?;
    if header.format != FORMAT {
        return Err(CdganError::Format {
            offset: 0,
            msg: format!("expected format {FORMAT}, found {}", header.format),
        });
    }
    let payload = &bytes[nl + 1..];
    if !payload.len().is_multiple_of(4) {
        return Err(CdganError::Format {
            offset: (nl + 1) as u64,
            msg: format!("payload length {} is not a multiple of 4", payload.len()),
        });
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    // Rebuild the architecture, then overwrite every tensor by name.
    let mut bundle = skeleton(&header.config)?;
    let mut slots: Vec<(String, &mut Matrix<f32>)> = named_mut(&mut bundle);
    if slots.len() != header.tensors.len() {
        return Err(CdganError::Format {
            offset: 0,
            msg: format!("header lists {} tensors, architecture has {}", header.tensors.len(), slots.len()),
        });
    }
    for ((name, slot), entry) in slots.iter_mut().zip(&header.tensors) {
        let len = entry.shape[0] * entry.shape[1];
        if *name != entry.name || slot.shape() != entry.shape {
            return Err(CdganError::Format {
                offset: 0,
                msg: format!("tensor {} {:?} does not match expected {name} {:?}", entry.name, entry.shape, slot.shape()),
            });
        }
        let src = floats.get(entry.offset..entry.offset + len).ok_or_else(|| CdganError::Format {
            offset: (nl + 1 + entry.offset * 4) as u64,
            msg: format!("tensor {name} runs past the end of the payload"),
        })?;
        slot.as_mut_slice().copy_from_slice(src);
    }
    Ok(bundle)
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelBundle<f32>> {
    let path = path.as_ref();
    from_bytes(&fs::read(path).map_err(|e| CdganError::io(path, e))?)
}

fn skeleton(config: &ModelConfig) -> Result<ModelBundle<f32>> {
    config.validate()?;
    let mlp = |spec: super::MlpSpec| -> Mlp<f32> {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Linear {
                weight: Matrix::zeros(w[0], w[1]),
                bias: Matrix::zeros(1, w[1]),
            })
            .collect();
        Mlp { spec, layers }
    };
    let trunk = mlp(config.trunk_spec());
    let t = trunk.spec.output_width();
    let head = |out: usize| Linear {
        weight: Matrix::zeros(t, out),
        bias: Matrix::zeros(1, out),
    };
    Ok(ModelBundle {
        generator: mlp(config.generator_spec()),
        discriminator: mlp(config.discriminator_spec()),
        encoder: Encoder {
            f_head: head(config.d_f),
            e_head: head(config.d_z),
            trunk,
            normalize_f: config.normalize_f,
        },
        config: config.clone(),
    })
}

fn named_mut(bundle: &mut ModelBundle<f32>) -> Vec<(String, &mut Matrix<f32>)> {
    let names: Vec<String> = named(bundle).into_iter().map(|(n, _)| n).collect();
    let mut params = bundle.generator.params_mut();
    params.extend(bundle.discriminator.params_mut());
    params.extend(bundle.encoder.params_mut());
    names.into_iter().zip(params).collect()
}

//! Versioned JSON checkpoint.
//!
//! Layer weights are stored row-major (`rows = inputs`, `cols = outputs`).
//! Every real is written in scientific notation with 17 significant digits so
//! that a load/save cycle reproduces the exact bits.

use std::io::{self, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mlp::{Dense, Mlp};
use super::model::{Encoder, LatentAffine, ModelCheckpoint, TrainingMetadata, Vae};
use crate::error::{Error, Result};

/// JSON formatter that prints every `f64` with 17 significant digits.
#[derive(Debug, Default, Clone, Copy)]
pub struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{:.16e}", value as f64)
    }
}

/// Serializes with [`FullPrecision`] floats; compact layout.
pub fn to_precise_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    layer_sizes: Vec<usize>,
    activation: String,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct EncoderFile {
    body: NetworkFile,
    mean_head: LayerFile,
    logvar_head: LayerFile,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    encoder: EncoderFile,
    decoder: NetworkFile,
    latent_affine: LatentAffine,
    metadata: TrainingMetadata,
}

fn layer_to_file(d: &Dense) -> LayerFile {
    LayerFile {
        rows: d.inputs(),
        cols: d.outputs(),
        weights: d.weights.iter().copied().collect(),
        bias: d.bias.to_vec(),
    }
}

fn layer_from_file(f: LayerFile) -> Result<Dense> {
    if f.bias.len() != f.cols {
        return Err(Error::Checkpoint(format!(
            "bias length {} does not match {} columns",
            f.bias.len(),
            f.cols
        )));
    }
    if f.weights.iter().chain(f.bias.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    let weights = Array2::from_shape_vec((f.rows, f.cols), f.weights)
        .map_err(|e| Error::Checkpoint(format!("weight shape: {e}")))?;
    Ok(Dense {
        weights,
        bias: Array1::from(f.bias),
    })
}

fn network_to_file(m: &Mlp) -> NetworkFile {
    NetworkFile {
        layer_sizes: m.layer_sizes(),
        activation: if m.tanh_output { "tanh" } else { "tanh_hidden_linear_output" }.into(),
        layers: m.layers.iter().map(layer_to_file).collect(),
    }
}

fn network_from_file(f: NetworkFile) -> Result<Mlp> {
    let tanh_output = match f.activation.as_str() {
        "tanh" => true,
        "tanh_hidden_linear_output" => false,
        other => return Err(Error::Checkpoint(format!("unknown activation {other:?}"))),
    };
    let layers = f
        .layers
        .into_iter()
        .map(layer_from_file)
        .collect::<Result<Vec<_>>>()?;
    let mlp = Mlp {
        layers,
        tanh_output,
    };
    for w in mlp.layers.windows(2) {
        if w[0].outputs() != w[1].inputs() {
            return Err(Error::Checkpoint("layer shapes do not chain".into()));
        }
    }
    if mlp.layers.is_empty() || mlp.layer_sizes() != f.layer_sizes {
        return Err(Error::Checkpoint("layer_sizes do not match the stored layers".into()));
    }
    Ok(mlp)
}

impl ModelCheckpoint {
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let file = CheckpointFile {
            format_version: self.format_version,
            encoder: EncoderFile {
                body: network_to_file(&self.vae.encoder.body),
                mean_head: layer_to_file(&self.vae.encoder.mean_head),
                logvar_head: layer_to_file(&self.vae.encoder.logvar_head),
            },
            decoder: network_to_file(&self.vae.decoder),
            latent_affine: self.latent_affine,
            metadata: self.metadata.clone(),
        };
        let mut bytes = to_precise_json(&file)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_slice(bytes)
            .map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if file.format_version != Self::FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {})",
                file.format_version,
                Self::FORMAT_VERSION
            )));
        }
        let vae = Vae {
            encoder: Encoder {
                body: network_from_file(file.encoder.body)?,
                mean_head: layer_from_file(file.encoder.mean_head)?,
                logvar_head: layer_from_file(file.encoder.logvar_head)?,
            },
            decoder: network_from_file(file.decoder)?,
        };
        let last_hidden = *vae.encoder.body.layer_sizes().last().unwrap();
        let heads_ok = [&vae.encoder.mean_head, &vae.encoder.logvar_head]
            .iter()
            .all(|h| h.inputs() == last_hidden && h.outputs() == 2);
        let dec_sizes = vae.decoder.layer_sizes();
        if !heads_ok || dec_sizes[0] != 2 || *dec_sizes.last().unwrap() != vae.input_dim() {
            return Err(Error::Checkpoint("encoder/decoder shapes are inconsistent".into()));
        }
        file.latent_affine.validate()?;
        Ok(Self {
            format_version: file.format_version,
            vae,
            latent_affine: file.latent_affine,
            metadata: file.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn content_hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_json_bytes()?))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

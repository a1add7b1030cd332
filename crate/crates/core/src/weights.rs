//! Weights file serialization.
//!
//! Binary little-endian layout: magic `ADLW`, `u32` version (= 1), `u32`
//! layer count, then per layer an id record (`u32` length + UTF-8 bytes)
//! followed by two tensor records — weights then bias — each `u8` ndim,
//! `u32` dims, `f32` values in row-major order. No padding between records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ConvLayer, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: [u8; 4] = *b"ADLW";
const VERSION: u32 = 1;
/// Upper bound on elements per tensor record; rejects corrupt dim tables
/// before they turn into huge allocations.
const MAX_ELEMS: usize = 1 << 28;

/// Writes `params` to `path`, storing values at `f32` precision.
pub fn save_weights<S: Scalar>(params: &ModelParams<S>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    w.write_all(&MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(params.layers().len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for layer in params.layers() {
        let id = layer.id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(id).map_err(io_err)?;
        write_tensor(&mut w, &layer.weights).map_err(io_err)?;
        write_tensor(&mut w, &layer.bias).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn write_tensor<S: Scalar>(w: &mut impl Write, t: &Tensor<S>) -> std::io::Result<()> {
    w.write_all(&[t.shape().len() as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        let v32 = v.to_f32().unwrap_or(f32::NAN);
        w.write_all(&v32.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a weights file back into parameters at scalar type `S`.
pub fn load_weights<S: Scalar>(path: &Path) -> Result<ModelParams<S>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };

    let magic = r.bytes::<4>("magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            field: "magic",
            detail: format!("expected {:?}, got {magic:?}", MAGIC),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            field: "version",
            detail: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let layer_count = r.u32("layer_count")? as usize;
    if layer_count == 0 {
        return Err(Error::Format {
            field: "layer_count",
            detail: "file declares zero layers".into(),
        });
    }

    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let id_len = r.u32("id")? as usize;
        let id_bytes = r.vec(id_len, "id")?;
        let id = String::from_utf8(id_bytes).map_err(|_| Error::Format {
            field: "id",
            detail: "layer id is not valid UTF-8".into(),
        })?;
        let weights = read_tensor::<S>(&mut r)?;
        let bias = read_tensor::<S>(&mut r)?;
        validate_layer_shapes(&id, &weights, &bias)?;
        layers.push(ConvLayer { id, weights, bias });
    }
    if !r.at_eof(path)? {
        return Err(Error::Format {
            field: "trailer",
            detail: "unexpected bytes after the last layer record".into(),
        });
    }

    let encoder_stages = infer_encoder_stages(&layers)?;
    Ok(ModelParams::from_layers(layers, encoder_stages))
}

fn read_tensor<S: Scalar>(r: &mut Reader) -> Result<Tensor<S>> {
    let ndim = r.bytes::<1>("ndim")?[0] as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::Format {
            field: "ndim",
            detail: format!("tensor rank {ndim} out of range 1..=8"),
        });
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut elems = 1usize;
    for _ in 0..ndim {
        let d = r.u32("dims")? as usize;
        elems = elems.saturating_mul(d);
        dims.push(d);
    }
    if elems == 0 || elems > MAX_ELEMS {
        return Err(Error::Format {
            field: "dims",
            detail: format!("dim table {dims:?} declares {elems} elements"),
        });
    }
    let mut data = Vec::with_capacity(elems);
    for _ in 0..elems {
        let raw = r.bytes::<4>("values")?;
        data.push(S::from_f64_c(f32::from_le_bytes(raw) as f64));
    }
    Tensor::new(dims, data)
}

fn validate_layer_shapes<S: Scalar>(id: &str, weights: &Tensor<S>, bias: &Tensor<S>) -> Result<()> {
    let ws = weights.shape();
    if ws.len() != 4 || ws[2] != 3 || ws[3] != 3 {
        return Err(Error::Format {
            field: "dims",
            detail: format!("layer `{id}` weights shape {ws:?} is not [C_out, C_in, 3, 3]"),
        });
    }
    if bias.shape() != [ws[0]] {
        return Err(Error::Format {
            field: "dims",
            detail: format!(
                "layer `{id}` bias shape {:?} does not match C_out {}",
                bias.shape(),
                ws[0]
            ),
        });
    }
    Ok(())
}

fn infer_encoder_stages<S: Scalar>(layers: &[ConvLayer<S>]) -> Result<usize> {
    let stages = layers.len() / 2;
    if layers.len() != 2 * stages {
        return Err(Error::Format {
            field: "layer_count",
            detail: format!("expected an even layer count, got {}", layers.len()),
        });
    }
    for (k, layer) in layers.iter().enumerate() {
        let expected = if k < stages {
            format!("enc{}_conv", k + 1)
        } else {
            format!("dec{}_conv", k - stages + 1)
        };
        if layer.id != expected {
            return Err(Error::Format {
                field: "id",
                detail: format!("layer {k} id `{}` != expected `{expected}`", layer.id),
            });
        }
    }
    Ok(stages)
}

struct Reader {
    inner: BufReader<File>,
}

impl Reader {
    fn bytes<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Format {
            field,
            detail: format!("truncated while reading `{field}`: {e}"),
        })?;
        Ok(buf)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>(field)?))
    }

    fn vec(&mut self, len: usize, field: &'static str) -> Result<Vec<u8>> {
        if len > 4096 {
            return Err(Error::Format {
                field,
                detail: format!("record length {len} is implausible"),
            });
        }
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Format {
            field,
            detail: format!("truncated while reading `{field}`: {e}"),
        })?;
        Ok(buf)
    }

    fn at_eof(&mut self, path: &Path) -> Result<bool> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(true),
            Ok(_) => Ok(false),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

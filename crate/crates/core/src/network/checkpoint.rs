//! Binary checkpoints.
//!
//! A file is one line of JSON header terminated by `\n`, followed by the
//! payload as little-endian `f64`s. The header always carries `kind` and the
//! payload length so files can be inspected with `head -1`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::MlpModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub kind: String,
    pub layer_dims: Vec<usize>,
    pub seed: u64,
    pub epoch: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayHeader {
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub len: usize,
}

const MODEL_KIND: &str = "mlp";
const MATRIX_KIND: &str = "matrix";

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn write_blob<H: Serialize>(path: impl AsRef<Path>, header: &H, payload: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = serde_json::to_vec(header)?;
    buf.push(b'\n');
    buf.reserve(payload.len() * 8);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_blob<H: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(H, Vec<f64>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(path, "missing header line"))?;
    let header: H = serde_json::from_slice(&bytes[..nl]).map_err(|e| format_err(path, format!("bad header: {e}")))?;
    let body = &bytes[nl + 1..];
    if body.len() % 8 != 0 {
        return Err(format_err(path, "payload length is not a multiple of 8"));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, data))
}

pub fn save_model(path: impl AsRef<Path>, model: &MlpModel, seed: u64, epoch: usize) -> Result<()> {
    let flat = model.to_flat();
    let header = ModelHeader {
        kind: MODEL_KIND.into(),
        layer_dims: model.layer_dims().to_vec(),
        seed,
        epoch,
        len: flat.len(),
    };
    write_blob(path, &header, &flat)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(MlpModel, ModelHeader)> {
    let path = path.as_ref();
    let (header, data): (ModelHeader, _) = read_blob(path)?;
    if header.kind != MODEL_KIND {
        return Err(format_err(path, format!("expected a model checkpoint, found `{}`", header.kind)));
    }
    if header.len != data.len() {
        return Err(format_err(
            path,
            format!("header declares {} values, file has {}", header.len, data.len()),
        ));
    }
    let model = MlpModel::from_flat(&header.layer_dims, &data).map_err(|e| format_err(path, e.to_string()))?;
    Ok((model, header))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let header = ArrayHeader {
        kind: MATRIX_KIND.into(),
        rows: m.rows(),
        cols: m.cols(),
        len: m.rows() * m.cols(),
    };
    write_blob(path, &header, m.as_slice())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let (header, data): (ArrayHeader, _) = read_blob(path)?;
    if header.kind != MATRIX_KIND || header.len != data.len() || header.rows * header.cols != header.len {
        return Err(format_err(path, "inconsistent matrix header"));
    }
    Matrix::from_vec(header.rows, header.cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_xavier;

    #[test]
    fn model_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = init_xavier(&[7, 5, 3], 11).unwrap();
        save_model(&path, &m, 11, 4).unwrap();
        let (back, h) = load_model(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!((h.seed, h.epoch, h.layer_dims), (11, 4, vec![7, 5, 3]));
        let first = fs::read(&path).unwrap();
        save_model(&path, &m, 11, 4).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn truncated_and_mistyped_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_model(&path, &init_xavier(&[3, 2], 1).unwrap(), 1, 0).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { .. })));
        let mpath = dir.path().join("x.bin");
        save_matrix(&mpath, &Matrix::identity(3)).unwrap();
        assert!(load_model(&mpath).is_err());
        assert_eq!(load_matrix(&mpath).unwrap(), Matrix::identity(3));
    }
}

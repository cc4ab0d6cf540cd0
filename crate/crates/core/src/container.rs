//! Array container: a directory holding raw little-endian row-major binaries
//! described by a `manifest.json` with `{name, dtype, shape, file}` entries
//! plus an optional free-form `meta` object.

use crate::error::{Error, Result};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainerManifest {
    pub arrays: Vec<ArraySpec>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

/// Array payload, f32 or u8.
#[derive(Debug, Clone)]
pub enum ArrayData {
    F32(ArrayD<f32>),
    U8(ArrayD<u8>),
}

impl ArrayData {
    pub fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F32(_) => "f32",
            ArrayData::U8(_) => "u8",
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            ArrayData::F32(a) => a.shape(),
            ArrayData::U8(a) => a.shape(),
        }
    }

    pub fn as_f32(&self) -> Result<&ArrayD<f32>> {
        match self {
            ArrayData::F32(a) => Ok(a),
            _ => Err(Error::Container("expected f32 array".into())),
        }
    }

    pub fn as_u8(&self) -> Result<&ArrayD<u8>> {
        match self {
            ArrayData::U8(a) => Ok(a),
            _ => Err(Error::Container("expected u8 array".into())),
        }
    }
}

/// Write arrays (in the given order) plus metadata to `dir`.
pub fn write_container(
    dir: &Path,
    arrays: &[(&str, ArrayData)],
    meta: serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut specs = Vec::with_capacity(arrays.len());
    for (name, data) in arrays {
        let file = format!("{name}.bin");
        let path = dir.join(&file);
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        match data {
            ArrayData::F32(a) => {
                let a = a.as_standard_layout();
                for v in a.iter() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            ArrayData::U8(a) => {
                let a = a.as_standard_layout();
                for v in a.iter() {
                    out.write_all(&[*v])?;
                }
            }
        }
        out.flush()?;
        specs.push(ArraySpec {
            name: name.to_string(),
            dtype: data.dtype().to_string(),
            shape: data.shape().to_vec(),
            file,
        });
    }
    let manifest = ContainerManifest {
        arrays: specs,
        meta,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Read every array of a container directory.
pub fn read_container(dir: &Path) -> Result<(BTreeMap<String, ArrayData>, serde_json::Value)> {
    let manifest_path = dir.join("manifest.json");
    let manifest: ContainerManifest =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).map_err(|e| {
            Error::Container(format!("{}: {e}", manifest_path.display()))
        })?)?;
    let mut out = BTreeMap::new();
    for spec in &manifest.arrays {
        let n_elems: usize = spec.shape.iter().product();
        let path = dir.join(&spec.file);
        let mut bytes = Vec::new();
        std::fs::File::open(&path)?.read_to_end(&mut bytes)?;
        let data = match spec.dtype.as_str() {
            "f32" => {
                if bytes.len() != n_elems * 4 {
                    return Err(Error::Container(format!(
                        "{}: expected {} bytes, found {}",
                        path.display(),
                        n_elems * 4,
                        bytes.len()
                    )));
                }
                let vals: Vec<f32> = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                ArrayData::F32(ArrayD::from_shape_vec(IxDyn(&spec.shape), vals).map_err(
                    |e| Error::Container(format!("{}: {e}", spec.name)),
                )?)
            }
            "u8" => {
                if bytes.len() != n_elems {
                    return Err(Error::Container(format!(
                        "{}: expected {} bytes, found {}",
                        path.display(),
                        n_elems,
                        bytes.len()
                    )));
                }
                ArrayData::U8(
                    ArrayD::from_shape_vec(IxDyn(&spec.shape), bytes)
                        .map_err(|e| Error::Container(format!("{}: {e}", spec.name)))?,
                )
            }
            other => {
                return Err(Error::Container(format!(
                    "{}: unsupported dtype {other}",
                    spec.name
                )))
            }
        };
        out.insert(spec.name.clone(), data);
    }
    Ok((out, manifest.meta))
}

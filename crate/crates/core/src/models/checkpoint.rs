//! Checkpoint directory: `checkpoint.json` (config plus tensor table) and
//! `tensors.bin` (little-endian, concatenated in table order).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::{Mode, Model};
use crate::error::{Error, Result};
use crate::tensor::{DType, NdArray, Scalar};

pub const CHECKPOINT_FORMAT: &str = "stconv-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const TENSORS_FILE: &str = "tensors.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Param,
    Buffer,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    /// Offset into the buffer, in elements.
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub dtype: DType,
    pub endianness: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, dir: &Path, metadata: &BTreeMap<String, String>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    let mut bytes = Vec::new();
    let mut offset = 0;
    let groups = [(TensorKind::Param, model.params()), (TensorKind::Buffer, model.buffers())];
    for (kind, group) in groups {
        for (name, arr) in group {
            tensors.push(TensorEntry {
                name: name.clone(),
                kind,
                shape: arr.shape().to_vec(),
                offset,
            });
            offset += arr.len();
            arr.data().iter().for_each(|v| v.write_le(&mut bytes));
        }
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        dtype: T::DTYPE,
        endianness: "little".into(),
        config: model.config().clone(),
        tensors,
        metadata: metadata.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    let tpath = dir.join(TENSORS_FILE);
    fs::write(&tpath, bytes).map_err(|e| Error::io(&tpath, e))
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
        return Err(Error::format(
            &mpath,
            format!("unsupported checkpoint {} v{}", manifest.format, manifest.version),
        ));
    }
    if manifest.endianness != "little" {
        return Err(Error::format(&mpath, format!("unsupported endianness {}", manifest.endianness)));
    }
    Ok(manifest)
}

fn decode<S: Scalar, T: Scalar>(raw: &[u8]) -> Vec<T> {
    raw.chunks_exact(S::DTYPE.size_of()).map(|c| T::c(S::read_le(c).f64())).collect()
}

/// Loads a checkpoint into eval mode. Stored values are converted when the
/// stored element type differs from `T`.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(Model<T>, CheckpointManifest)> {
    let manifest = read_manifest(dir)?;
    let tpath = dir.join(TENSORS_FILE);
    let raw = fs::read(&tpath).map_err(|e| Error::io(&tpath, e))?;
    let width = manifest.dtype.size_of();
    let total: usize = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if raw.len() != total * width {
        return Err(Error::format(
            &tpath,
            format!("expected {} bytes, found {}", total * width, raw.len()),
        ));
    }
    let mut params = BTreeMap::new();
    let mut buffers = BTreeMap::new();
    for t in &manifest.tensors {
        let n: usize = t.shape.iter().product();
        let slice = &raw[t.offset * width..(t.offset + n) * width];
        let data: Vec<T> = match manifest.dtype {
            DType::F32 if T::DTYPE == DType::F32 => slice.chunks_exact(4).map(T::read_le).collect(),
            DType::F64 if T::DTYPE == DType::F64 => slice.chunks_exact(8).map(T::read_le).collect(),
            DType::F32 => decode::<f32, T>(slice),
            DType::F64 => decode::<f64, T>(slice),
        };
        let arr = NdArray::new(&t.shape, data)?;
        match t.kind {
            TensorKind::Param => params.insert(t.name.clone(), arr),
            TensorKind::Buffer => buffers.insert(t.name.clone(), arr),
        };
    }
    let mut model = Model::from_parts(manifest.config.clone(), params, buffers)?;
    model.set_mode(Mode::Eval);
    Ok((model, manifest))
}

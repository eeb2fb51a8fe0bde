//! Labeled trial collections and their directory format: `manifest.json`
//! plus `data.bin` (little-endian f32, trial-major, then channel, then time).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{NdArray, Scalar};

pub const TRIALSET_FORMAT: &str = "stconv-trialset";
pub const TRIALSET_VERSION: u32 = 1;
pub const TRIALSET_MANIFEST: &str = "manifest.json";
pub const TRIALSET_DATA: &str = "data.bin";

#[derive(Clone, Debug, PartialEq)]
pub struct TrialSet {
    /// `[N, C, T]`.
    data: NdArray<f32>,
    labels: Vec<usize>,
    sfreq: f64,
    channel_names: Vec<String>,
    class_names: Vec<String>,
    /// Generator bookkeeping, e.g. which channel carries each class's signal.
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl TrialSet {
    pub fn new(
        data: NdArray<f32>,
        labels: Vec<usize>,
        sfreq: f64,
        channel_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let shape = data.shape();
        if shape.len() != 3 {
            return Err(Error::dim("TrialSet::new", format!("data must be [N,C,T], got {shape:?}")));
        }
        if labels.len() != shape[0] {
            return Err(Error::dim(
                "TrialSet::new",
                format!("{} labels for {} trials", labels.len(), shape[0]),
            ));
        }
        if channel_names.len() != shape[1] {
            return Err(Error::dim(
                "TrialSet::new",
                format!("{} channel names for {} channels", channel_names.len(), shape[1]),
            ));
        }
        let unique: HashSet<&String> = channel_names.iter().collect();
        if unique.len() != channel_names.len() {
            return Err(Error::Data("channel names must be unique".into()));
        }
        if !(sfreq > 0.0 && sfreq.is_finite()) {
            return Err(Error::Parameter(format!("sampling rate must be positive, got {sfreq}")));
        }
        if class_names.is_empty() {
            return Err(Error::Data("at least one class name is required".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Data(format!("label {bad} out of range for {} classes", class_names.len())));
        }
        Ok(Self {
            data,
            labels,
            sfreq,
            channel_names,
            class_names,
            metadata: BTreeMap::new(),
        })
    }

    pub fn data(&self) -> &NdArray<f32> {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sfreq(&self) -> f64 {
        self.sfreq
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_trials(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_times(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// One trial as a `C*T` slice, channel-major.
    pub fn trial(&self, i: usize) -> &[f32] {
        let len = self.n_channels() * self.n_times();
        &self.data.data()[i * len..(i + 1) * len]
    }

    /// Same trial set with the sample buffer replaced (shape must match).
    pub fn with_data(&self, data: NdArray<f32>) -> Result<Self> {
        if data.shape() != self.data.shape() {
            return Err(Error::dim(
                "TrialSet::with_data",
                format!("shape {:?} does not match {:?}", data.shape(), self.data.shape()),
            ));
        }
        Ok(Self {
            data,
            ..self.clone()
        })
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::Data("empty trial subset".into()));
        }
        let data = self.data.select_rows(idx)?;
        Ok(Self {
            data,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone()
        })
    }

    /// Network input `[n, 1, C, T]` for the given trials.
    pub fn batch<T: Scalar>(&self, idx: &[usize]) -> Result<NdArray<T>> {
        let (c, t) = (self.n_channels(), self.n_times());
        let mut data = Vec::with_capacity(idx.len() * c * t);
        for &i in idx {
            if i >= self.n_trials() {
                return Err(Error::dim("TrialSet::batch", format!("trial {i} out of range")));
            }
            data.extend(self.trial(i).iter().map(|&v| T::c(v as f64)));
        }
        NdArray::new(&[idx.len(), 1, c, t], data)
    }

    /// All trials as network input `[N, 1, C, T]`.
    pub fn as_batch<T: Scalar>(&self) -> NdArray<T> {
        let (n, c, t) = (self.n_trials(), self.n_channels(), self.n_times());
        NdArray::new(&[n, 1, c, t], self.data.data().iter().map(|&v| T::c(v as f64)).collect())
            .expect("shape")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSetManifest {
    pub format: String,
    pub version: u32,
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_times: usize,
    pub sfreq: f64,
    pub labels: Vec<usize>,
    pub channel_names: Vec<String>,
    pub class_names: Vec<String>,
    pub dtype: String,
    pub endianness: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

pub fn save_trialset(set: &TrialSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = TrialSetManifest {
        format: TRIALSET_FORMAT.into(),
        version: TRIALSET_VERSION,
        n_trials: set.n_trials(),
        n_channels: set.n_channels(),
        n_times: set.n_times(),
        sfreq: set.sfreq,
        labels: set.labels.clone(),
        channel_names: set.channel_names.clone(),
        class_names: set.class_names.clone(),
        dtype: "f32".into(),
        endianness: "little".into(),
        metadata: set.metadata.clone(),
    };
    let mpath = dir.join(TRIALSET_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    let bytes: Vec<u8> = set.data.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    let dpath = dir.join(TRIALSET_DATA);
    fs::write(&dpath, bytes).map_err(|e| Error::io(&dpath, e))
}

pub fn load_trialset(dir: &Path) -> Result<TrialSet> {
    let mpath = dir.join(TRIALSET_MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: TrialSetManifest = serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if m.format != TRIALSET_FORMAT || m.version != TRIALSET_VERSION {
        return Err(Error::format(&mpath, format!("unsupported trial set {} v{}", m.format, m.version)));
    }
    if m.dtype != "f32" || m.endianness != "little" {
        return Err(Error::format(
            &mpath,
            format!("unsupported element encoding {} {}", m.dtype, m.endianness),
        ));
    }
    let dpath = dir.join(TRIALSET_DATA);
    let raw = fs::read(&dpath).map_err(|e| Error::io(&dpath, e))?;
    let expected = m.n_trials * m.n_channels * m.n_times * 4;
    if raw.len() != expected {
        return Err(Error::format(
            &dpath,
            format!("expected {expected} bytes, found {}", raw.len()),
        ));
    }
    let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let data = NdArray::new(&[m.n_trials, m.n_channels, m.n_times], values)
        .map_err(|e| Error::format(&dpath, e.to_string()))?;
    let mut set = TrialSet::new(data, m.labels, m.sfreq, m.channel_names, m.class_names)?;
    set.metadata = m.metadata;
    Ok(set)
}

/// Imports trials from CSV: `index_csv` has a `file,label` header and one row
/// per trial; each trial file holds one row per channel and one column per
/// sample. Paths are resolved relative to the index file.
pub fn import_csv(index_csv: &Path, sfreq: f64, class_names: Option<Vec<String>>) -> Result<TrialSet> {
    let base = index_csv.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(index_csv).map_err(|e| csv_err(index_csv, e))?;
    let headers = reader.headers().map_err(|e| csv_err(index_csv, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["file", "label"] {
        return Err(Error::format(index_csv, "header must be `file,label`"));
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(index_csv, e))?;
        let label: usize = row[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(index_csv, format!("bad label `{}`", &row[1])))?;
        let path = base.join(row[0].trim());
        let trial = read_trial_csv(&path)?;
        let shape = (trial.len(), trial[0].len());
        match dims {
            None => dims = Some(shape),
            Some(d) if d != shape => {
                return Err(Error::format(
                    &path,
                    format!("trial is {}x{}, expected {}x{}", shape.0, shape.1, d.0, d.1),
                ))
            }
            _ => {}
        }
        labels.push(label);
        data.extend(trial.into_iter().flatten());
    }
    let (c, t) = dims.ok_or_else(|| Error::Data(format!("{} lists no trials", index_csv.display())))?;
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let class_names = class_names.unwrap_or_else(|| (0..n_classes.max(1)).map(|i| format!("class{i}")).collect());
    let channel_names = (0..c).map(|i| format!("ch{i}")).collect();
    let arr = NdArray::new(&[labels.len(), c, t], data)?;
    TrialSet::new(arr, labels, sfreq, channel_names, class_names)
}

fn read_trial_csv(path: &Path) -> Result<Vec<Vec<f32>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f32>().map_err(|_| Error::format(path, format!("bad sample `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::format(path, "empty trial"));
    }
    Ok(rows)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

//! CSV tables and SVG figures for the analyses. Output depends only on the
//! inputs: no timestamps, fixed ordering, shortest round-trip float text.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::activations::ActivationSet;
use super::correlation::{kernel_feature_correlations, KernelCorrelations};
use super::ridge::{reconstruct_band_power, RidgeOptions};
use super::rsa::{compute_rdm, contrast_permutation_test, type_of, Distance, PermutationTest, Rdm};
use super::svg;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelAnalysis {
    pub model_id: String,
    /// `[C, n_bands]`.
    pub r2: NdArray<f64>,
    pub correlations: KernelCorrelations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisResults {
    pub channel_names: Vec<String>,
    pub band_labels: Vec<String>,
    pub models: Vec<ModelAnalysis>,
    pub rdm: Rdm,
    /// Present when the model ids form at least two types of two models.
    pub contrast: Option<PermutationTest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub ridge: RidgeOptions,
    pub distance: Distance,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            ridge: RidgeOptions::default(),
            distance: Distance::Correlation,
            permutations: 999,
            seed: 0,
        }
    }
}

/// Runs all three analyses over activation sets that share one trial set
/// and its `[N, C, n_bands]` band-power table.
pub fn analyze_activations(
    sets: &[ActivationSet],
    bands: &NdArray<f64>,
    channel_names: &[String],
    band_labels: &[String],
    opts: &AnalysisOptions,
) -> Result<AnalysisResults> {
    let mut models = Vec::with_capacity(sets.len());
    for s in sets {
        models.push(ModelAnalysis {
            model_id: s.model_id.clone(),
            r2: reconstruct_band_power(s, bands, &opts.ridge)?,
            correlations: kernel_feature_correlations(s, bands)?,
        });
    }
    let rdm = compute_rdm(sets, opts.distance)?;
    let groups: Vec<String> = rdm.model_ids.iter().map(|m| type_of(m)).collect();
    let contrast = contrast_permutation_test(&rdm, &groups, opts.permutations, opts.seed).ok();
    Ok(AnalysisResults {
        channel_names: channel_names.to_vec(),
        band_labels: band_labels.to_vec(),
        models,
        rdm,
        contrast,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn r2_csv(channels: &[String], bands: &[String], r2: &NdArray<f64>) -> String {
    let mut out = String::from("channel,band,r2\n");
    for (i, c) in channels.iter().enumerate() {
        for (j, b) in bands.iter().enumerate() {
            let _ = writeln!(out, "{c},{b},{}", r2.at(&[i, j]));
        }
    }
    out
}

pub fn rdm_csv(rdm: &Rdm) -> String {
    let mut out = String::from("model");
    rdm.model_ids.iter().for_each(|m| {
        let _ = write!(out, ",{m}");
    });
    out.push('\n');
    for (i, m) in rdm.model_ids.iter().enumerate() {
        out.push_str(m);
        for j in 0..rdm.len() {
            let _ = write!(out, ",{}", rdm.get(i, j));
        }
        out.push('\n');
    }
    out
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::format(path, format!("bad number `{s}`")))
}

pub fn read_rdm_csv(path: &Path) -> Result<Rdm> {
    let text = read(path)?;
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().ok_or_else(|| Error::format(path, "empty file"))?.split(',').collect();
    if head.first() != Some(&"model") {
        return Err(Error::format(path, "first column must be `model`"));
    }
    let ids: Vec<String> = head[1..].iter().map(|s| s.to_string()).collect();
    let m = ids.len();
    let mut values = Vec::with_capacity(m * m);
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != m + 1 || i >= m || cells[0] != ids[i] {
            return Err(Error::format(path, format!("malformed row {}", i + 2)));
        }
        for c in &cells[1..] {
            values.push(parse_f64(path, c)?);
        }
    }
    if values.len() != m * m {
        return Err(Error::format(path, format!("expected {m} rows")));
    }
    Ok(Rdm {
        model_ids: ids,
        dissimilarity: NdArray::new(&[m, m], values)?,
    })
}

/// Returns channel names, band labels, and the `[C, n_bands]` table.
pub fn read_r2_csv(path: &Path) -> Result<(Vec<String>, Vec<String>, NdArray<f64>)> {
    let text = read(path)?;
    let mut channels: Vec<String> = Vec::new();
    let mut bands: Vec<String> = Vec::new();
    let mut values = Vec::new();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(Error::format(path, format!("malformed row `{line}`")));
        }
        if !channels.iter().any(|c| c == cells[0]) {
            channels.push(cells[0].to_string());
        }
        if !bands.iter().any(|b| b == cells[1]) {
            bands.push(cells[1].to_string());
        }
        values.push(parse_f64(path, cells[2])?);
    }
    if channels.is_empty() {
        return Err(Error::format(path, "no rows"));
    }
    let arr = NdArray::new(&[channels.len(), bands.len()], values).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((channels, bands, arr))
}

fn correlations_csv(k: &KernelCorrelations, channels: &[String], bands: &[String]) -> String {
    let mut out = String::from("kernel,channel,band,r\n");
    let shape = k.r.shape();
    for kk in 0..shape[0] {
        for (c, cn) in channels.iter().enumerate() {
            for (b, bn) in bands.iter().enumerate() {
                let _ = writeln!(out, "{kk},{cn},{bn},{}", k.r.at(&[kk, c, b]));
            }
        }
    }
    out
}

/// Writes all tables, then renders the figures into the same directory.
/// Returns the paths written, sorted.
pub fn emit_reports(results: &AnalysisResults, out_dir: &Path, performance_csv: Option<&str>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut summary = String::from("model,mean,std,constant_kernels\n");
    for m in &results.models {
        write(
            &out_dir.join(format!("r2_{}.csv", m.model_id)),
            &r2_csv(&results.channel_names, &results.band_labels, &m.r2),
        )?;
        write(
            &out_dir.join(format!("correlations_{}.csv", m.model_id)),
            &correlations_csv(&m.correlations, &results.channel_names, &results.band_labels),
        )?;
        let s = &m.correlations.summary;
        let constant: Vec<String> = s.constant_kernels.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(summary, "{},{},{},{}", m.model_id, s.mean, s.std, constant.join(" "));
    }
    write(&out_dir.join("correlation_summary.csv"), &summary)?;
    write(&out_dir.join("rdm.csv"), &rdm_csv(&results.rdm))?;
    if let Some(c) = &results.contrast {
        let text = format!(
            "within_type_mean,between_type_mean,gap,p_value,n_permutations\n{},{},{},{},{}\n",
            c.observed.within_type_mean, c.observed.between_type_mean, c.observed.gap, c.p_value, c.n_permutations
        );
        write(&out_dir.join("contrast.csv"), &text)?;
    }
    if let Some(perf) = performance_csv {
        write(&out_dir.join("performance.csv"), perf)?;
    }
    render_reports(out_dir, out_dir)?;
    let mut files: Vec<PathBuf> = fs::read_dir(out_dir)
        .map_err(|e| Error::io(out_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    files.sort();
    Ok(files)
}

fn sorted_with_prefix(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with(prefix) && name.ends_with(ext)
        })
        .collect();
    out.sort();
    Ok(out)
}

fn stem_after<'a>(path: &'a Path, prefix: &str) -> &'a str {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    stem.strip_prefix(prefix).unwrap_or(stem)
}

/// Renders SVG figures from the CSV tables found in `in_dir`:
/// `rdm.svg`, `r2_<model>.svg`, `correlations_hist.svg`, and
/// `performance.svg` (from `performance.csv` or `results.csv`).
pub fn render_reports(in_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: String, text: String| -> Result<()> {
        let p = out_dir.join(name);
        write(&p, &text)?;
        written.push(p);
        Ok(())
    };

    let rdm_path = in_dir.join("rdm.csv");
    if rdm_path.exists() {
        let rdm = read_rdm_csv(&rdm_path)?;
        let vmax = rdm.dissimilarity.data().iter().copied().fold(0.0, f64::max);
        emit(
            "rdm.svg".into(),
            svg::heatmap("Representational dissimilarity", &rdm.model_ids, &rdm.model_ids, rdm.dissimilarity.data(), 0.0, vmax.max(1e-12)),
        )?;
    }

    for p in sorted_with_prefix(in_dir, "r2_", ".csv")? {
        let id = stem_after(&p, "r2_").to_string();
        let (channels, bands, r2) = read_r2_csv(&p)?;
        emit(
            format!("r2_{id}.svg"),
            svg::heatmap(&format!("Band-power reconstruction R2: {id}"), &channels, &bands, r2.data(), 0.0, 1.0),
        )?;
    }

    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for p in sorted_with_prefix(in_dir, "correlations_", ".csv")? {
        let group = type_of(stem_after(&p, "correlations_"));
        let text = read(&p)?;
        let mut vals = Vec::new();
        for line in text.lines().skip(1) {
            let r = line.rsplit(',').next().unwrap_or("");
            vals.push(parse_f64(&p, r)?);
        }
        match series.iter_mut().find(|(g, _)| *g == group) {
            Some((_, v)) => v.extend(vals),
            None => series.push((group, vals)),
        }
    }
    if !series.is_empty() {
        emit(
            "correlations_hist.svg".into(),
            svg::histogram("Kernel / band-power correlations", &series, 40, -1.0, 1.0, "Pearson r"),
        )?;
    }

    let perf = [in_dir.join("performance.csv"), in_dir.join("results.csv")].into_iter().find(|p| p.exists());
    if let Some(p) = perf {
        let text = read(&p)?;
        let mut lines = text.lines();
        let head: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        let col = |name: &str| head.iter().position(|h| *h == name);
        if let (Some(mc), Some(ac), Some(tc)) = (col("model"), col("test_accuracy"), col("mean_epoch_s")) {
            let mut points = Vec::new();
            for line in lines {
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != head.len() || cells[mc] == "majority" {
                    continue;
                }
                points.push((cells[mc].to_string(), parse_f64(&p, cells[tc])?, parse_f64(&p, cells[ac])?));
            }
            emit(
                "performance.svg".into(),
                svg::scatter("Accuracy vs time per epoch", &points, "mean epoch time (s)", "test accuracy"),
            )?;
        }
    }
    Ok(written)
}

use serde::{Deserialize, Serialize};

use super::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelCorrelations {
    /// Pearson r, `[K, C, n_bands]`.
    pub r: NdArray<f64>,
    pub summary: CorrelationSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub mean: f64,
    pub std: f64,
    /// Kernels whose per-trial mean never varies; their r values are 0.
    pub constant_kernels: Vec<usize>,
}

/// Pearson correlation; 0 when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa.sqrt() * sbb.sqrt())
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Correlates each kernel's per-trial temporal mean with every (channel,
/// band) power across trials.
pub fn kernel_feature_correlations(acts: &ActivationSet, bands: &NdArray<f64>) -> Result<KernelCorrelations> {
    let shape = bands.shape();
    if shape.len() != 3 || shape[0] != acts.n_samples() {
        return Err(Error::dim(
            "kernel_feature_correlations",
            format!("band table {:?} does not match {} samples", shape, acts.n_samples()),
        ));
    }
    let (n, c, nb) = (shape[0], shape[1], shape[2]);
    let means = acts.kernel_means();
    let k = acts.n_kernels();
    let kernel_series: Vec<Vec<f64>> = (0..k).map(|j| means.iter().map(|row| row[j]).collect()).collect();
    let feature_series: Vec<Vec<f64>> =
        (0..c * nb).map(|f| (0..n).map(|i| bands.data()[i * c * nb + f]).collect()).collect();
    let constant_kernels: Vec<usize> = (0..k).filter(|&j| is_constant(&kernel_series[j])).collect();
    let mut r = Vec::with_capacity(k * c * nb);
    for ks in &kernel_series {
        for fs in &feature_series {
            r.push(pearson(ks, fs));
        }
    }
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let std = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
    Ok(KernelCorrelations {
        r: NdArray::new(&[k, c, nb], r)?,
        summary: CorrelationSummary {
            mean,
            std,
            constant_kernels,
        },
    })
}

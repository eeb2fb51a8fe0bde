//! Cross-validated ridge reconstruction of band powers from activations.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

pub const MIN_SAMPLES: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeOptions {
    pub lambda: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            folds: 5,
            seed: 0,
        }
    }
}

/// Column means and standard deviations (population; zero spread mapped
/// to 1).
fn moments(x: &DMatrix<f64>, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    (0..x.ncols())
        .map(|j| {
            let m = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / n;
            let v = rows.iter().map(|&i| (x[(i, j)] - m).powi(2)).sum::<f64>() / n;
            let s = v.sqrt();
            (m, if s < 1e-12 { 1.0 } else { s })
        })
        .unzip()
}

fn standardized(x: &DMatrix<f64>, rows: &[usize], mean: &[f64], sd: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |r, j| (x[(rows[r], j)] - mean[j]) / sd[j])
}

/// Held-out R² for every target column of `targets` (`[N, D]`), from ridge
/// regressions on `predictors` (`[N, P]`). Predictors and each target are
/// z-scored with training-fold statistics; predictions are mapped back to
/// target units and residuals pooled over all folds.
pub fn cross_validated_r2(predictors: &DMatrix<f64>, targets: &DMatrix<f64>, opts: &RidgeOptions) -> Result<Vec<f64>> {
    let n = predictors.nrows();
    if targets.nrows() != n {
        return Err(Error::dim(
            "reconstruct_band_power",
            format!("{n} activation rows vs {} target rows", targets.nrows()),
        ));
    }
    if n < MIN_SAMPLES || n < 2 * opts.folds {
        return Err(Error::Data(format!("{n} samples are too few to cross-validate")));
    }
    if opts.folds < 2 || !(opts.lambda > 0.0) {
        return Err(Error::Parameter("ridge needs folds >= 2 and lambda > 0".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let d = targets.ncols();
    let mut preds = DMatrix::<f64>::zeros(n, d);
    for f in 0..opts.folds {
        let test: Vec<usize> = order.iter().skip(f).step_by(opts.folds).copied().collect();
        let mut train: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % opts.folds != f).map(|(_, &v)| v).collect();
        train.sort_unstable();
        let (xm, xs) = moments(predictors, &train);
        let (ym, ys) = moments(targets, &train);
        let xtr = standardized(predictors, &train, &xm, &xs);
        let ytr = standardized(targets, &train, &ym, &ys);
        let mut gram = xtr.tr_mul(&xtr);
        for i in 0..gram.nrows() {
            gram[(i, i)] += opts.lambda;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numeric { layer: "ridge".into() })?;
        let w = chol.solve(&xtr.tr_mul(&ytr));
        let xte = standardized(predictors, &test, &xm, &xs);
        let p = xte * w;
        for (r, &i) in test.iter().enumerate() {
            for j in 0..d {
                preds[(i, j)] = ym[j] + ys[j] * p[(r, j)];
            }
        }
    }
    Ok((0..d)
        .map(|j| {
            let y: DVector<f64> = targets.column(j).into();
            let mean = y.mean();
            let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
            let ss_res: f64 = y.iter().zip(preds.column(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
            if ss_tot > 0.0 {
                1.0 - ss_res / ss_tot
            } else {
                0.0
            }
        })
        .collect())
}

pub(crate) fn activation_matrix(acts: &ActivationSet) -> DMatrix<f64> {
    DMatrix::from_row_slice(acts.n_samples(), acts.width(), acts.activations().data())
}

/// R² of reconstructing each (channel, band) power from the flattened
/// activations: `[C, n_bands]`.
pub fn reconstruct_band_power(acts: &ActivationSet, bands: &NdArray<f64>, opts: &RidgeOptions) -> Result<NdArray<f64>> {
    let shape = bands.shape();
    if shape.len() != 3 || shape[0] != acts.n_samples() {
        return Err(Error::dim(
            "reconstruct_band_power",
            format!("band table {:?} does not match {} samples", shape, acts.n_samples()),
        ));
    }
    let x = activation_matrix(acts);
    let y = DMatrix::from_row_slice(shape[0], shape[1] * shape[2], bands.data());
    let r2 = cross_validated_r2(&x, &y, opts)?;
    NdArray::new(&[shape[1], shape[2]], r2)
}

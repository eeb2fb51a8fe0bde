use serde::{Deserialize, Serialize};

use super::trialset::TrialSet;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

/// Standard deviations below this are treated as 1.
const STD_FLOOR: f64 = 1e-12;

/// Per-channel standardization fitted over all trials and samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(trials: &TrialSet) -> Result<Self> {
        let (c, t) = (trials.n_channels(), trials.n_times());
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        for trial in trials.data().data().chunks(c * t) {
            for (ch, row) in trial.chunks(t).enumerate() {
                for &v in row {
                    sum[ch] += v as f64;
                }
            }
        }
        let count = (trials.n_trials() * t) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        for trial in trials.data().data().chunks(c * t) {
            for (ch, row) in trial.chunks(t).enumerate() {
                for &v in row {
                    let d = v as f64 - mean[ch];
                    sq[ch] += d * d;
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count).sqrt();
                if sd < STD_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, trials: &TrialSet) -> Result<TrialSet> {
        let (c, t) = (trials.n_channels(), trials.n_times());
        if c != self.mean.len() {
            return Err(Error::dim(
                "Scaler::apply",
                format!("scaler fitted on {} channels, trials have {c}", self.mean.len()),
            ));
        }
        let mut out = trials.data().data().to_vec();
        for trial in out.chunks_mut(c * t) {
            for (ch, row) in trial.chunks_mut(t).enumerate() {
                let (m, s) = (self.mean[ch], self.std[ch]);
                row.iter_mut().for_each(|v| *v = ((*v as f64 - m) / s) as f32);
            }
        }
        trials.with_data(NdArray::new(trials.data().shape(), out)?)
    }
}

pub fn standard_scale(fit: &TrialSet) -> Result<Scaler> {
    Scaler::fit(fit)
}

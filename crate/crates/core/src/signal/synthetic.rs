//! EEG-shaped synthetic trials: unit-RMS 1/f background per channel plus a
//! class-specific 10-12 Hz component in one designated channel per class.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::trialset::TrialSet;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

pub const BURST_BAND: (f64, f64) = (10.0, 12.0);

const CHANNELS_22: [&str; 22] = [
    "Fz", "FC3", "FC1", "FCz", "FC2", "FC4", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "CP3", "CP1", "CPz", "CP2",
    "CP4", "P1", "Pz", "P2", "POz",
];
const CHANNELS_3: [&str; 3] = ["C3", "Cz", "C4"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_times: usize,
    #[serde(default = "default_sfreq")]
    pub sfreq: f64,
    pub n_classes: usize,
    /// Peak amplitude of the planted component relative to the unit-RMS
    /// background.
    pub effect_strength: f64,
    pub seed: u64,
}

fn default_sfreq() -> f64 {
    250.0
}

pub fn channel_names(n: usize) -> Vec<String> {
    match n {
        22 => CHANNELS_22.iter().map(|s| s.to_string()).collect(),
        3 => CHANNELS_3.iter().map(|s| s.to_string()).collect(),
        _ => (0..n).map(|i| format!("ch{i}")).collect(),
    }
}

/// Background noise with power spectrum proportional to `1/f`, zero mean and
/// unit RMS.
pub fn pink_noise(rng: &mut impl Rng, n: usize, fft: &dyn rustfft::Fft<f64>, ifft: &dyn rustfft::Fft<f64>) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.sample(StandardNormal), 0.0)).collect();
    fft.process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, b) in buf.iter_mut().enumerate().skip(1) {
        let bin = k.min(n - k) as f64;
        *b /= bin.sqrt();
    }
    ifft.process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// Tukey (tapered cosine) envelope with half the window tapered.
fn tukey(n: usize) -> Vec<f64> {
    let alpha = 0.5;
    let edge = alpha * (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|i| {
            let x = i as f64;
            let from_end = (n - 1 - i) as f64;
            let d = x.min(from_end);
            if d >= edge {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::PI * d / edge).cos())
            }
        })
        .collect()
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<TrialSet> {
    let SyntheticConfig {
        n_trials,
        n_channels,
        n_times,
        sfreq,
        n_classes,
        effect_strength,
        seed,
    } = *cfg;
    if n_trials == 0 || n_channels == 0 || n_times < 2 {
        return Err(Error::Config("synthetic data needs trials, channels, and at least 2 samples".into()));
    }
    if n_classes < 2 {
        return Err(Error::Config("synthetic data needs at least 2 classes".into()));
    }
    if n_classes > n_channels {
        return Err(Error::Config(format!(
            "{n_classes} classes cannot each own a channel out of {n_channels}"
        )));
    }
    if !(effect_strength >= 0.0 && effect_strength.is_finite()) {
        return Err(Error::Config(format!("effect_strength must be >= 0, got {effect_strength}")));
    }
    if !(sfreq > 2.0 * BURST_BAND.1) {
        return Err(Error::Config(format!("sampling rate {sfreq} Hz cannot carry the {BURST_BAND:?} Hz band")));
    }

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut channels: Vec<usize> = (0..n_channels).collect();
    channels.shuffle(&mut master);
    let class_channels: Vec<usize> = channels[..n_classes].to_vec();
    let mut labels: Vec<usize> = (0..n_trials).map(|i| i % n_classes).collect();
    labels.shuffle(&mut master);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_times);
    let ifft = planner.plan_fft_inverse(n_times);
    let envelope = tukey(n_times);
    let mut data = Vec::with_capacity(n_trials * n_channels * n_times);
    for (i, &label) in labels.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let mut trial: Vec<Vec<f64>> =
            (0..n_channels).map(|_| pink_noise(&mut rng, n_times, fft.as_ref(), ifft.as_ref())).collect();
        let amp = effect_strength * rng.gen_range(0.5..1.5);
        let freq = rng.gen_range(BURST_BAND.0..BURST_BAND.1);
        let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let row = &mut trial[class_channels[label]];
        for (t, v) in row.iter_mut().enumerate() {
            let time = t as f64 / sfreq;
            *v += amp * envelope[t] * (2.0 * std::f64::consts::PI * freq * time + phase).sin();
        }
        data.extend(trial.into_iter().flatten().map(|v| v as f32));
    }

    let names = channel_names(n_channels);
    let class_names = (0..n_classes).map(|k| format!("class{k}")).collect();
    let arr = NdArray::new(&[n_trials, n_channels, n_times], data)?;
    let mut set = TrialSet::new(arr, labels, sfreq, names.clone(), class_names)?;
    set.metadata.insert("generator".into(), json!("synthetic"));
    set.metadata.insert("seed".into(), json!(seed));
    set.metadata.insert("effect_strength".into(), json!(effect_strength));
    set.metadata.insert("burst_band_hz".into(), json!([BURST_BAND.0, BURST_BAND.1]));
    set.metadata.insert("class_channels".into(), json!(class_channels));
    set.metadata.insert(
        "class_channel_names".into(),
        json!(class_channels.iter().map(|&c| names[c].clone()).collect::<Vec<_>>()),
    );
    Ok(set)
}

/// Class-to-channel map recorded by [`generate_synthetic`].
pub fn class_channels(set: &TrialSet) -> Option<Vec<usize>> {
    serde_json::from_value(set.metadata.get("class_channels")?.clone()).ok()
}

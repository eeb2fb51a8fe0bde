//! Welch power spectral density and fixed-band power features.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::trialset::TrialSet;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

pub const WELCH_SEGMENT: usize = 256;

/// Lower-inclusive, upper-exclusive band edges in Hz.
pub const BANDS: [(f64, f64); 5] = [(8.0, 10.0), (10.0, 12.0), (12.0, 16.0), (16.0, 24.0), (24.0, 32.0)];

pub fn band_label(band: (f64, f64)) -> String {
    format!("{}-{}Hz", band.0, band.1)
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reusable Welch estimator for a fixed signal length and sampling rate.
pub struct Welch {
    seg: usize,
    step: usize,
    sfreq: f64,
    window: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Welch {
    pub fn new(n_times: usize, sfreq: f64) -> Result<Self> {
        if n_times < 8 {
            return Err(Error::Parameter(format!("Welch needs at least 8 samples, got {n_times}")));
        }
        let seg = n_times.min(WELCH_SEGMENT);
        let window = hann(seg);
        let fft = FftPlanner::new().plan_fft_forward(seg);
        Ok(Self {
            seg,
            step: seg - seg / 2,
            sfreq,
            window,
            fft,
        })
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..=self.seg / 2).map(|k| k as f64 * self.sfreq / self.seg as f64).collect()
    }

    pub fn resolution(&self) -> f64 {
        self.sfreq / self.seg as f64
    }

    /// One-sided density; `sum(psd) * resolution()` approximates the variance.
    pub fn psd(&self, signal: &[f64]) -> Vec<f64> {
        let seg = self.seg;
        let n_bins = seg / 2 + 1;
        let mut acc = vec![0.0; n_bins];
        let norm: f64 = self.window.iter().map(|w| w * w).sum::<f64>() * self.sfreq;
        let mut buf = vec![Complex64::new(0.0, 0.0); seg];
        let mut count = 0usize;
        let mut start = 0;
        while start + seg <= signal.len() {
            let chunk = &signal[start..start + seg];
            let mean = chunk.iter().sum::<f64>() / seg as f64;
            for ((b, &x), &w) in buf.iter_mut().zip(chunk).zip(&self.window) {
                *b = Complex64::new((x - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
            count += 1;
            start += self.step;
        }
        let last = n_bins - 1;
        for (k, a) in acc.iter_mut().enumerate() {
            let one_sided = if k == 0 || (seg % 2 == 0 && k == last) { 1.0 } else { 2.0 };
            *a *= one_sided / (norm * count as f64);
        }
        acc
    }
}

/// Welch PSD with 256-sample (or shorter) Hann segments at 50% overlap.
pub fn welch_psd(signal: &[f64], sfreq: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = Welch::new(signal.len(), sfreq)?;
    Ok((w.freqs(), w.psd(signal)))
}

/// Integrates `psd` over bins whose center lies in each band.
pub fn band_powers_from_psd(freqs: &[f64], psd: &[f64], bands: &[(f64, f64)]) -> Vec<f64> {
    let df = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 0.0 };
    bands
        .iter()
        .map(|&(lo, hi)| {
            freqs
                .iter()
                .zip(psd)
                .filter(|(&f, _)| f >= lo && f < hi)
                .map(|(_, &p)| p * df)
                .sum()
        })
        .collect()
}

/// Band powers for every trial and channel: `[N, C, 5]`.
pub fn band_powers(trials: &TrialSet) -> Result<NdArray<f64>> {
    if trials.sfreq() / 2.0 <= BANDS[BANDS.len() - 1].1 {
        return Err(Error::Parameter(format!(
            "sampling rate {} Hz too low for bands up to {} Hz",
            trials.sfreq(),
            BANDS[BANDS.len() - 1].1
        )));
    }
    let w = Welch::new(trials.n_times(), trials.sfreq())?;
    let freqs = w.freqs();
    let (n, c) = (trials.n_trials(), trials.n_channels());
    let mut out = Vec::with_capacity(n * c * BANDS.len());
    for row in trials.data().data().chunks(trials.n_times()) {
        let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        out.extend(band_powers_from_psd(&freqs, &w.psd(&x), &BANDS));
    }
    NdArray::new(&[n, c, BANDS.len()], out)
}

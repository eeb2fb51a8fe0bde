//! Zero-phase Butterworth bandpass as cascaded second-order sections.

use rustfft::num_complex::Complex64;

use super::trialset::TrialSet;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

pub const BUTTER_ORDER: usize = 4;

/// One biquad: `b0 b1 b2 / 1 a1 a2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sos {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

/// Digital Butterworth bandpass of prototype order `order`, as `order`
/// second-order sections (overall filter order `2 * order`).
pub fn butter_bandpass(order: usize, low: f64, high: f64, sfreq: f64) -> Result<Vec<Sos>> {
    let nyq = sfreq / 2.0;
    if !(low > 0.0 && low < high && high < nyq) {
        return Err(Error::Parameter(format!(
            "band edges must satisfy 0 < low < high < {nyq} Hz, got {low}..{high}"
        )));
    }
    if order == 0 {
        return Err(Error::Parameter("filter order must be positive".into()));
    }
    // Bilinear transform with fs = 2 on the normalized axis; pre-warp edges.
    let fs2 = 4.0;
    let wl = fs2 * (std::f64::consts::PI * low / sfreq).tan();
    let wh = fs2 * (std::f64::consts::PI * high / sfreq).tan();
    let bw = wh - wl;
    let wo2 = wl * wh;

    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let disc = (p * p - wo2).sqrt();
        poles.push(p + disc);
        poles.push(p - disc);
    }
    // Analog zeros: `order` at s = 0. Gain bw^order.
    let mut gain = Complex64::new(bw.powi(order as i32), 0.0);
    for _ in 0..order {
        gain *= fs2;
    }
    let digital: Vec<Complex64> = poles.iter().map(|&p| (fs2 + p) / (fs2 - p)).collect();
    for &p in &poles {
        gain /= fs2 - p;
    }
    let mut upper: Vec<Complex64> = digital.into_iter().filter(|p| p.im > 0.0).collect();
    if upper.len() != order {
        return Err(Error::Parameter("band too narrow for a stable filter design".into()));
    }
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let mut sos: Vec<Sos> = upper
        .iter()
        .map(|p| Sos {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        })
        .collect();
    for v in sos[0].b.iter_mut() {
        *v *= gain.re;
    }
    Ok(sos)
}

/// Steady-state initial conditions (transposed direct form II) for a unit step.
fn sos_zi(sos: &[Sos]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.iter()
        .map(|s| {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            let (r0, r1) = (b1 - a1 * b0, b2 - a2 * b0);
            // [[1 + a1, -1], [a2, 1]] z = r
            let det = 1.0 + a1 + a2;
            let z0 = (r0 + r1) / det;
            let z1 = r1 - a2 * z0;
            let zi = [scale * z0, scale * z1];
            scale *= s.b.iter().sum::<f64>() / s.a.iter().sum::<f64>();
            zi
        })
        .collect()
}

fn sos_filter(sos: &[Sos], zi: &[[f64; 2]], x0: f64, x: &mut [f64]) {
    for (s, z) in sos.iter().zip(zi) {
        let (mut z0, mut z1) = (z[0] * x0, z[1] * x0);
        for v in x.iter_mut() {
            let xi = *v;
            let y = s.b[0] * xi + z0;
            z0 = s.b[1] * xi - s.a[1] * y + z1;
            z1 = s.b[2] * xi - s.a[2] * y;
            *v = y;
        }
    }
}

/// Forward-backward filtering with odd-reflection padding, so the overall
/// response is the squared magnitude with zero phase.
pub fn filtfilt(sos: &[Sos], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let pad = (3 * (2 * sos.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let zi = sos_zi(sos);
    let first = ext[0];
    sos_filter(sos, &zi, first, &mut ext);
    ext.reverse();
    let first = ext[0];
    sos_filter(sos, &zi, first, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Order-4 zero-phase Butterworth bandpass on every channel of every trial.
pub fn bandpass(trials: &TrialSet, low: f64, high: f64) -> Result<TrialSet> {
    let sos = butter_bandpass(BUTTER_ORDER, low, high, trials.sfreq())?;
    let t = trials.n_times();
    let mut out = Vec::with_capacity(trials.data().len());
    for row in trials.data().data().chunks(t) {
        let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        out.extend(filtfilt(&sos, &x).into_iter().map(|v| v as f32));
    }
    trials.with_data(NdArray::new(trials.data().shape(), out)?)
}

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::error::Error;
use crate::tensor::NdArray;

fn sine(freq: f64, amp: f64, sfreq: f64, n: usize) -> Vec<f64> {
    (0..n).map(|t| amp * (2.0 * PI * freq * t as f64 / sfreq).sin()).collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn single_channel(rows: Vec<Vec<f64>>, sfreq: f64) -> TrialSet {
    let (n, t) = (rows.len(), rows[0].len());
    let data = rows.into_iter().flatten().map(|v| v as f32).collect();
    TrialSet::new(NdArray::new(&[n, 1, t], data).unwrap(), vec![0; n], sfreq, vec!["c".into()], vec!["a".into()])
        .unwrap()
}

// ---- filter -------------------------------------------------------------

/// Squared-magnitude response of one pass, evaluated directly from the SOS.
fn sos_gain(sos: &[Sos], f: f64, sfreq: f64) -> f64 {
    use rustfft::num_complex::Complex64;
    let z = Complex64::from_polar(1.0, -2.0 * PI * f / sfreq);
    sos.iter()
        .map(|s| {
            let num = s.b[0] + s.b[1] * z + s.b[2] * z * z;
            let den = s.a[0] + s.a[1] * z + s.a[2] * z * z;
            (num / den).norm()
        })
        .product()
}

/// Closed-form Butterworth bandpass magnitude after the bilinear map.
fn analytic_gain(order: usize, lo: f64, hi: f64, f: f64, sfreq: f64) -> f64 {
    let warp = |x: f64| (PI * x / sfreq).tan();
    let (wl, wh, w) = (warp(lo), warp(hi), warp(f));
    let lp = (w * w - wl * wh).abs() / (w * (wh - wl));
    1.0 / (1.0 + lp.powi(2 * order as i32)).sqrt()
}

#[test]
fn butterworth_matches_closed_form_response() {
    let sos = butter_bandpass(4, 8.0, 32.0, 250.0).unwrap();
    assert_eq!(sos.len(), 4);
    for f in [1.0, 4.0, 8.0, 11.0, 16.0, 32.0, 64.0, 100.0] {
        let got = sos_gain(&sos, f, 250.0);
        let want = analytic_gain(4, 8.0, 32.0, f, 250.0);
        assert!((got - want).abs() < 1e-9, "f={f}: {got} vs {want}");
    }
    // poles inside the unit circle
    assert!(sos.iter().all(|s| s.a[2] < 1.0));
}

#[test]
fn bandpass_attenuates_one_octave_out() {
    let sos = butter_bandpass(BUTTER_ORDER, 8.0, 32.0, 250.0).unwrap();
    for f in [4.0, 64.0] {
        let x = sine(f, 1.0, 250.0, 2000);
        let y = filtfilt(&sos, &x);
        let ratio = rms(&y[200..1800]) / rms(&x[200..1800]);
        assert!(ratio < 0.1, "{f} Hz ratio {ratio}");
    }
    let x = sine(16.0, 1.0, 250.0, 2000);
    let y = filtfilt(&sos, &x);
    let ratio = rms(&y) / rms(&x);
    assert!((ratio - 1.0).abs() < 0.05, "16 Hz ratio {ratio}");
}

#[test]
fn bandpass_on_trialsets() {
    let set = single_channel(vec![sine(4.0, 1.0, 250.0, 1000), vec![0.0; 1000], sine(16.0, 1.0, 250.0, 1000)], 250.0);
    let out = bandpass(&set, 8.0, 32.0).unwrap();
    let row = |i: usize| out.trial(i).iter().map(|&v| v as f64).collect::<Vec<_>>();
    assert!(rms(&row(0)) < 0.1 * rms(&sine(4.0, 1.0, 250.0, 1000)));
    assert!(row(1).iter().all(|&v| v == 0.0));
    assert!((rms(&row(2)) / rms(&sine(16.0, 1.0, 250.0, 1000)) - 1.0).abs() < 0.05);
    assert!(matches!(bandpass(&set, 8.0, 130.0), Err(Error::Parameter(_))));
    assert!(matches!(bandpass(&set, 0.0, 30.0), Err(Error::Parameter(_))));
}

#[test]
fn bandpass_is_zero_phase() {
    let sos = butter_bandpass(BUTTER_ORDER, 8.0, 32.0, 250.0).unwrap();
    for f in [10.0, 15.0, 25.0] {
        let x = sine(f, 1.0, 250.0, 1500);
        let y = filtfilt(&sos, &x);
        let xc = |lag: i64| -> f64 {
            (300..1200).map(|t| x[t] * y[(t as i64 + lag) as usize]).sum()
        };
        let best = (-20..=20).max_by(|&a, &b| xc(a).total_cmp(&xc(b))).unwrap();
        assert_eq!(best, 0, "{f} Hz");
    }
}

// ---- spectra ------------------------------------------------------------

/// Welch estimate via a naive DFT.
fn naive_welch(x: &[f64], sfreq: f64) -> Vec<f64> {
    let seg = x.len().min(256);
    let win: Vec<f64> = (0..seg).map(|i| (PI * i as f64 / seg as f64).sin().powi(2)).collect();
    let wss: f64 = win.iter().map(|w| w * w).sum();
    let step = seg - seg / 2;
    let mut out = vec![0.0; seg / 2 + 1];
    let mut count = 0;
    let mut s = 0;
    while s + seg <= x.len() {
        let chunk = &x[s..s + seg];
        let mean: f64 = chunk.iter().sum::<f64>() / seg as f64;
        for (k, o) in out.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, (&v, &w)) in chunk.iter().zip(&win).enumerate() {
                let ang = -2.0 * PI * (k * n) as f64 / seg as f64;
                re += (v - mean) * w * ang.cos();
                im += (v - mean) * w * ang.sin();
            }
            let two = if k == 0 || (seg % 2 == 0 && k == seg / 2) { 1.0 } else { 2.0 };
            *o += two * (re * re + im * im) / (sfreq * wss);
        }
        count += 1;
        s += step;
    }
    out.iter().map(|v| v / count as f64).collect()
}

#[test]
fn welch_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [8, 100, 256, 700] {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) + 0.3).collect();
        let (freqs, psd) = welch_psd(&x, 250.0).unwrap();
        let want = naive_welch(&x, 250.0);
        assert_eq!(freqs.len(), want.len());
        for (a, b) in psd.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "n={n}: {a} vs {b}");
        }
    }
    assert!(welch_psd(&[0.0; 7], 250.0).is_err());
}

#[test]
fn welch_parseval_for_sinusoid() {
    let (freqs, psd) = welch_psd(&sine(11.0, 1.0, 250.0, 1000), 250.0).unwrap();
    let df = freqs[1] - freqs[0];
    let total: f64 = psd.iter().sum::<f64>() * df;
    assert!((total - 0.5).abs() / 0.5 < 0.05, "{total}");
}

#[test]
fn welch_white_noise_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sigma2: f64 = 2.5;
    let mut totals = Vec::new();
    let mut mean_psd = vec![0.0; 129];
    for _ in 0..40 {
        let x: Vec<f64> = (0..2000).map(|_| sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let (freqs, psd) = welch_psd(&x, 250.0).unwrap();
        totals.push(psd.iter().sum::<f64>() * (freqs[1] - freqs[0]));
        mean_psd.iter_mut().zip(&psd).for_each(|(m, p)| *m += p / 40.0);
    }
    let total = totals.iter().sum::<f64>() / totals.len() as f64;
    assert!((total - sigma2).abs() / sigma2 < 0.1, "{total}");
    let level = sigma2 / 125.0;
    for p in &mean_psd[1..128] {
        assert!((p - level).abs() / level < 0.25, "{p} vs {level}");
    }
    let (_, zero) = welch_psd(&[0.0; 300], 250.0).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));
}

#[test]
fn band_edges_are_lower_inclusive() {
    let freqs: Vec<f64> = (0..=128).map(|k| k as f64).collect();
    let mut psd = vec![0.0; 129];
    psd[10] = 1.0;
    let bp = band_powers_from_psd(&freqs, &psd, &BANDS);
    assert_eq!(bp, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
    psd[10] = 0.0;
    psd[32] = 1.0;
    assert!(band_powers_from_psd(&freqs, &psd, &BANDS).iter().all(|&v| v == 0.0));
}

#[test]
fn band_power_concentrates_alpha_sinusoid() {
    let set = single_channel(vec![sine(11.0, 1.0, 250.0, 1000)], 250.0);
    let bp = band_powers(&set).unwrap();
    assert_eq!(bp.shape(), &[1, 1, 5]);
    let total: f64 = bp.data().iter().sum();
    assert!(bp.data()[1] / total >= 0.9, "{:?}", bp.data());
    let low = TrialSet::new(NdArray::zeros(&[1, 1, 100]), vec![0], 60.0, vec!["c".into()], vec!["a".into()]).unwrap();
    assert!(matches!(band_powers(&low), Err(Error::Parameter(_))));
}

#[test]
fn band_powers_add_for_disjoint_sinusoids() {
    let a = sine(9.0, 1.0, 250.0, 1000);
    let b = sine(20.0, 0.7, 250.0, 1000);
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let bp = band_powers(&single_channel(vec![a, b, sum], 250.0)).unwrap();
    let d = bp.data();
    for j in 0..5 {
        let parts = d[j] + d[5 + j];
        let whole = d[10 + j];
        assert!((whole - parts).abs() <= 0.05 * parts.max(1e-3), "band {j}: {whole} vs {parts}");
    }
}

proptest! {
    #[test]
    fn band_powers_nonnegative(seed in 0u64..500, n in 64usize..600) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let set = single_channel(vec![x], 250.0);
        prop_assert!(band_powers(&set).unwrap().data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn welch_total_power_tracks_variance(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..4000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let (f, p) = welch_psd(&x, 250.0).unwrap();
        let total = p.iter().sum::<f64>() * (f[1] - f[0]);
        prop_assert!((total - var).abs() / var < 0.1);
    }
}

// ---- scaler -------------------------------------------------------------

fn noise_set(n: usize, c: usize, t: usize, seed: u64, offset: f32, scale: f32) -> TrialSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = NdArray::from_fn(&[n, c, t], |_| offset + scale * rng.sample::<f32, _>(StandardNormal));
    TrialSet::new(data, vec![0; n], 250.0, channel_names(c), vec!["a".into()]).unwrap()
}

fn channel_moments(set: &TrialSet) -> Vec<(f64, f64)> {
    let (c, t) = (set.n_channels(), set.n_times());
    (0..c)
        .map(|ch| {
            let vals: Vec<f64> = (0..set.n_trials())
                .flat_map(|i| set.trial(i)[ch * t..(ch + 1) * t].iter().map(|&v| v as f64).collect::<Vec<_>>())
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            (m, v.sqrt())
        })
        .collect()
}

#[test]
fn scaler_standardizes_fit_set() {
    let set = noise_set(20, 3, 50, 1, 4.0, 3.0);
    let out = standard_scale(&set).unwrap().apply(&set).unwrap();
    for (m, s) in channel_moments(&out) {
        assert!(m.abs() < 1e-6 && (s - 1.0).abs() < 1e-6, "{m} {s}");
    }
}

#[test]
fn scaler_guards_constant_channels_and_checks_width() {
    let set = TrialSet::new(NdArray::full(&[2, 1, 10], 5.0), vec![0, 0], 250.0, vec!["c".into()], vec!["a".into()])
        .unwrap();
    let sc = standard_scale(&set).unwrap();
    assert_eq!(sc.std, vec![1.0]);
    assert!(sc.apply(&set).unwrap().data().data().iter().all(|&v| v == 0.0));
    let other = noise_set(2, 3, 10, 0, 0.0, 1.0);
    assert!(matches!(sc.apply(&other), Err(Error::Dimension { .. })));
}

#[test]
fn scaler_generalizes_to_held_out_trials() {
    let train = noise_set(500, 2, 20, 2, -1.0, 0.5);
    let test = noise_set(500, 2, 20, 3, -1.0, 0.5);
    let out = standard_scale(&train).unwrap().apply(&test).unwrap();
    for (_, s) in channel_moments(&out) {
        assert!((0.8..=1.2).contains(&s), "{s}");
    }
}

// ---- synthetic data -----------------------------------------------------

fn syn(n: usize, c: usize, classes: usize, effect: f64, seed: u64) -> TrialSet {
    generate_synthetic(&SyntheticConfig {
        n_trials: n,
        n_channels: c,
        n_times: 500,
        sfreq: 250.0,
        n_classes: classes,
        effect_strength: effect,
        seed,
    })
    .unwrap()
}

#[test]
fn synthetic_is_deterministic_and_balanced() {
    let a = syn(41, 22, 4, 1.0, 5);
    assert_eq!(a, syn(41, 22, 4, 1.0, 5));
    assert_ne!(a.data(), syn(41, 22, 4, 1.0, 6).data());
    let mut counts = [0usize; 4];
    a.labels().iter().for_each(|&l| counts[l] += 1);
    assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    let map = class_channels(&a).unwrap();
    assert_eq!(map.len(), 4);
    assert!(map.iter().all(|&c| c < 22));
    assert_eq!(a.channel_names()[7], "C3");
    let err = generate_synthetic(&SyntheticConfig {
        n_trials: 10,
        n_channels: 3,
        n_times: 100,
        sfreq: 250.0,
        n_classes: 4,
        effect_strength: 1.0,
        seed: 0,
    });
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn pink_noise_has_unit_rms_and_inverse_frequency_spectrum() {
    let mut planner = rustfft::FftPlanner::new();
    let (fft, ifft) = (planner.plan_fft_forward(2048), planner.plan_fft_inverse(2048));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut psd = vec![0.0; 129];
    for _ in 0..30 {
        let x = pink_noise(&mut rng, 2048, fft.as_ref(), ifft.as_ref());
        assert!((rms(&x) - 1.0).abs() < 1e-9);
        let (_, p) = welch_psd(&x, 250.0).unwrap();
        psd.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
    }
    // least-squares slope of log psd against log f over 4-60 Hz
    let pts: Vec<(f64, f64)> = (5..=61).map(|k| ((k as f64 * 250.0 / 256.0).ln(), psd[k].ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 1.0).abs() < 0.15, "{slope}");
}

/// Log band powers flattened per trial, z-scored with training statistics.
fn features(set: &TrialSet) -> Vec<Vec<f64>> {
    let bp = band_powers(set).unwrap();
    let width = bp.len() / set.n_trials();
    bp.data().chunks(width).map(|r| r.iter().map(|v| (v + 1e-12).ln()).collect()).collect()
}

/// Plain logistic regression by full-batch gradient descent.
fn logistic_accuracy(x: &[Vec<f64>], y: &[usize], train: &[usize], test: &[usize]) -> f64 {
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| train.iter().map(|&i| x[i][j]).sum::<f64>() / train.len() as f64).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            (train.iter().map(|&i| (x[i][j] - mean[j]).powi(2)).sum::<f64>() / train.len() as f64).sqrt().max(1e-9)
        })
        .collect();
    let z = |i: usize| -> Vec<f64> { (0..d).map(|j| (x[i][j] - mean[j]) / sd[j]).collect() };
    let mut w = vec![0.0; d + 1];
    for _ in 0..300 {
        let mut g = vec![0.0; d + 1];
        for &i in train {
            let zi = z(i);
            let s = w[d] + zi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let err = 1.0 / (1.0 + (-s).exp()) - y[i] as f64;
            zi.iter().enumerate().for_each(|(j, v)| g[j] += err * v);
            g[d] += err;
        }
        w.iter_mut().zip(&g).for_each(|(wj, gj)| *wj -= 0.5 * (gj / train.len() as f64 + 1e-3 * *wj));
    }
    let correct = test
        .iter()
        .filter(|&&i| {
            let zi = z(i);
            let s = w[d] + zi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            (s > 0.0) as usize == y[i]
        })
        .count();
    correct as f64 / test.len() as f64
}

#[test]
fn null_effect_is_not_decodable() {
    let set = syn(400, 3, 2, 0.0, 21);
    let x = features(&set);
    let (train, test): (Vec<usize>, Vec<usize>) = (0..400).partition(|i| i % 2 == 0);
    let acc = logistic_accuracy(&x, set.labels(), &train, &test);
    let half_width = 1.96 * (0.25f64 / test.len() as f64).sqrt();
    assert!((acc - 0.5).abs() <= half_width, "{acc}");
}

/// Mann-Whitney AUC of `score` for class 1 over class 0.
fn auc(score: &[f64], y: &[usize]) -> f64 {
    let pos: Vec<f64> = score.iter().zip(y).filter(|(_, &l)| l == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = score.iter().zip(y).filter(|(_, &l)| l == 0).map(|(s, _)| *s).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[test]
fn strong_effect_separates_classes_in_designated_channel() {
    let set = syn(200, 3, 2, 3.0, 8);
    let map = class_channels(&set).unwrap();
    let bp = band_powers(&set).unwrap();
    let alpha = |ch: usize| -> Vec<f64> { (0..200).map(|i| bp.at(&[i, ch, 1])).collect() };
    assert!(auc(&alpha(map[1]), set.labels()) > 0.95);
    let flipped: Vec<usize> = set.labels().iter().map(|&l| 1 - l).collect();
    assert!(auc(&alpha(map[0]), &flipped) > 0.95);
    let x = features(&set);
    let (train, test): (Vec<usize>, Vec<usize>) = (0..200).partition(|i| i % 2 == 0);
    assert!(logistic_accuracy(&x, set.labels(), &train, &test) > 0.9);
}

// ---- splits -------------------------------------------------------------

fn check_folds(labels: &[usize], folds: &[Fold]) {
    let n = labels.len();
    let mut seen = vec![0; n];
    for f in folds {
        f.test.iter().for_each(|&i| seen[i] += 1);
        assert_eq!(f.train.len() + f.test.len(), n);
        assert!(f.train.iter().all(|i| f.test.binary_search(i).is_err()));
    }
    assert!(seen.iter().all(|&s| s == 1));
    let n_classes = labels.iter().max().unwrap() + 1;
    for c in 0..n_classes {
        let counts: Vec<usize> = folds.iter().map(|f| f.test.iter().filter(|&&i| labels[i] == c).count()).collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "class {c}: {counts:?}");
    }
}

#[test]
fn kfold_examples() {
    let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
    let folds = stratified_kfold(&labels, 5, 0).unwrap();
    for f in &folds {
        let mut ls: Vec<usize> = f.test.iter().map(|&i| labels[i]).collect();
        ls.sort();
        assert_eq!(ls, vec![0, 1]);
    }
    let labels: Vec<usize> = (0..103).map(|i| if i < 78 { i / 26 } else { 3 }).collect();
    assert_eq!(labels.iter().filter(|&&l| l == 3).count(), 25);
    let folds = stratified_kfold(&labels, 5, 4).unwrap();
    check_folds(&labels, &folds);
    assert_eq!(folds, stratified_kfold(&labels, 5, 4).unwrap());
    assert!(matches!(stratified_kfold(&[0, 0, 0, 0, 0, 1, 1, 1, 1], 5, 0), Err(Error::Data(_))));
}

#[test]
fn holdout_is_stratified_and_disjoint() {
    let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
    let idx: Vec<usize> = (0..100).filter(|i| i % 5 != 0).collect();
    let (train, val) = holdout_split(&idx, &labels, 0.2, 9).unwrap();
    assert_eq!(train.len() + val.len(), idx.len());
    assert!(val.iter().all(|v| idx.contains(v) && !train.contains(v)));
    for c in 0..4 {
        assert_eq!(val.iter().filter(|&&i| labels[i] == c).count(), 4);
    }
    assert_eq!((train.clone(), val.clone()), holdout_split(&idx, &labels, 0.2, 9).unwrap());
}

#[test]
fn holdout_keeps_every_class_on_both_sides() {
    let labels = [0, 0, 1, 1, 1, 1, 1, 1, 1, 1];
    let (train, val) = holdout_split(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9], &labels, 0.01, 0).unwrap();
    assert_eq!(val.iter().filter(|&&i| labels[i] == 0).count(), 1);
    assert_eq!(train.iter().filter(|&&i| labels[i] == 0).count(), 1);
    assert!(matches!(holdout_split(&[0, 2, 3, 4], &labels, 0.2, 0), Err(Error::Data(_))));
}

proptest! {
    #[test]
    fn kfold_partitions_and_balances(seed in 0u64..10_000, n_classes in 2usize..5, extra in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 5 * n_classes + extra;
        let mut labels: Vec<usize> = (0..n).map(|i| if i < 5 * n_classes { i % n_classes } else { rng.gen_range(0..n_classes) }).collect();
        use rand::seq::SliceRandom;
        labels.shuffle(&mut rng);
        let folds = stratified_kfold(&labels, 5, seed).unwrap();
        check_folds(&labels, &folds);
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

// ---- storage ------------------------------------------------------------

#[test]
fn trialset_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let set = syn(9, 3, 2, 1.0, 2);
    save_trialset(&set, dir.path()).unwrap();
    let back = load_trialset(dir.path()).unwrap();
    assert_eq!(back, set);
    let a: Vec<u32> = set.data().data().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u32> = back.data().data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn truncated_or_unknown_trialsets_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let set = syn(4, 3, 2, 1.0, 2);
    save_trialset(&set, dir.path()).unwrap();
    let p = dir.path().join(TRIALSET_DATA);
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    let err = load_trialset(dir.path()).unwrap_err();
    assert!(err.to_string().contains(&format!("expected {} bytes, found {}", bytes.len(), bytes.len() - 3)), "{err}");

    std::fs::write(&p, &bytes).unwrap();
    let mp = dir.path().join(TRIALSET_MANIFEST);
    let text = std::fs::read_to_string(&mp).unwrap().replace("\"version\": 1", "\"version\": 9");
    std::fs::write(&mp, text).unwrap();
    assert!(matches!(load_trialset(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn csv_import_matches_in_memory_construction() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.csv"), "file,label\nt0.csv,1\nt1.csv,0\n").unwrap();
    std::fs::write(dir.path().join("t0.csv"), "1,2,3,4\n-0.5,0.25,8,1e-3\n").unwrap();
    std::fs::write(dir.path().join("t1.csv"), "0,0,0,0\n5,6,7,8\n").unwrap();
    let set = import_csv(&dir.path().join("index.csv"), 128.0, None).unwrap();
    let want = TrialSet::new(
        NdArray::new(&[2, 2, 4], vec![1.0, 2.0, 3.0, 4.0, -0.5, 0.25, 8.0, 1e-3, 0.0, 0.0, 0.0, 0.0, 5.0, 6.0, 7.0, 8.0])
            .unwrap(),
        vec![1, 0],
        128.0,
        vec!["ch0".into(), "ch1".into()],
        vec!["class0".into(), "class1".into()],
    )
    .unwrap();
    assert_eq!(set, want);

    std::fs::write(dir.path().join("t1.csv"), "0,0,0\n5,6,7\n").unwrap();
    assert!(matches!(import_csv(&dir.path().join("index.csv"), 128.0, None), Err(Error::Format { .. })));
}

#[test]
fn trialset_invariants() {
    let ok = |labels: Vec<usize>, names: Vec<&str>, sfreq: f64| {
        TrialSet::new(
            NdArray::zeros(&[2, 2, 4]),
            labels,
            sfreq,
            names.into_iter().map(String::from).collect(),
            vec!["a".into(), "b".into()],
        )
    };
    assert!(ok(vec![0, 1], vec!["x", "y"], 100.0).is_ok());
    assert!(ok(vec![0, 2], vec!["x", "y"], 100.0).is_err());
    assert!(ok(vec![0, 1], vec!["x", "x"], 100.0).is_err());
    assert!(ok(vec![0, 1], vec!["x", "y"], 0.0).is_err());
    assert!(ok(vec![0], vec!["x", "y"], 100.0).is_err());
}

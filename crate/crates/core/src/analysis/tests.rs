use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::error::Error;
use crate::tensor::NdArray;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_acts(id: &str, n: usize, k: usize, t: usize, seed: u64) -> ActivationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ActivationSet::new(id, NdArray::from_fn(&[n, k, t], |_| normal(&mut rng))).unwrap()
}

// ---- ridge --------------------------------------------------------------

/// Gauss-Jordan solve with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Straightforward single-target version of the cross-validated ridge.
fn naive_r2(x: &[Vec<f64>], y: &[f64], lambda: f64, folds: usize, seed: u64) -> f64 {
    use rand::seq::SliceRandom;
    let n = y.len();
    let p = x[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pred = vec![0.0; n];
    for f in 0..folds {
        let test: Vec<usize> = (0..n).filter(|i| i % folds == f).map(|i| order[i]).collect();
        let train: Vec<usize> = (0..n).filter(|i| i % folds != f).map(|i| order[i]).collect();
        let stat = |v: &dyn Fn(usize) -> f64| {
            let m = train.iter().map(|&i| v(i)).sum::<f64>() / train.len() as f64;
            let s = (train.iter().map(|&i| (v(i) - m).powi(2)).sum::<f64>() / train.len() as f64).sqrt();
            (m, if s < 1e-12 { 1.0 } else { s })
        };
        let xs: Vec<(f64, f64)> = (0..p).map(|j| stat(&|i| x[i][j])).collect();
        let (ym, ysd) = stat(&|i| y[i]);
        let z = |i: usize, j: usize| (x[i][j] - xs[j].0) / xs[j].1;
        let mut a = vec![vec![0.0; p]; p];
        let mut rhs = vec![0.0; p];
        for &i in &train {
            let yz = (y[i] - ym) / ysd;
            for r in 0..p {
                rhs[r] += z(i, r) * yz;
                for c in 0..p {
                    a[r][c] += z(i, r) * z(i, c);
                }
            }
        }
        (0..p).for_each(|r| a[r][r] += lambda);
        let w = solve(a, rhs);
        for &i in &test {
            pred[i] = ym + ysd * (0..p).map(|j| z(i, j) * w[j]).sum::<f64>();
        }
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn ridge_matches_naive_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, p) = (60, 7);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| normal(&mut rng)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] - r[3] + 0.8 * normal(&mut rng) + 10.0).collect();
    let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    let ym = DMatrix::from_fn(n, 1, |i, _| y[i]);
    for lambda in [0.1, 1.0, 10.0] {
        let opts = RidgeOptions { lambda, folds: 5, seed: 2 };
        let got = cross_validated_r2(&xm, &ym, &opts).unwrap()[0];
        let want = naive_r2(&x, &y, lambda, 5, 2);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn linear_target_is_reconstructed() {
    let acts = random_acts("m", 200, 4, 6, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let coef: Vec<f64> = (0..24).map(|_| normal(&mut rng)).collect();
    let mut bands = Vec::new();
    for row in acts.rows() {
        let y: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
        bands.push(y + 1e-3 * normal(&mut rng));
        bands.push(normal(&mut rng));
    }
    let table = NdArray::new(&[200, 1, 2], bands).unwrap();
    let r2 = reconstruct_band_power(&acts, &table, &RidgeOptions::default()).unwrap();
    assert!(r2.data()[0] > 0.99, "{:?}", r2.data());
    assert!(r2.data()[1] < 0.05);
}

#[test]
fn permuted_targets_are_near_zero() {
    use rand::seq::SliceRandom;
    // held-out R² under the null is biased low by roughly p/n, so keep n >> p
    let acts = random_acts("m", 1000, 5, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let signal: Vec<f64> = acts.rows().map(|r| r[0] + r[7] + 0.1 * normal(&mut rng)).collect();
    let mut scores = Vec::new();
    for _ in 0..20 {
        let mut y = signal.clone();
        y.shuffle(&mut rng);
        let table = NdArray::new(&[1000, 1, 1], y).unwrap();
        let r2 = reconstruct_band_power(&acts, &table, &RidgeOptions::default()).unwrap().data()[0];
        assert!(r2 <= 0.05, "{r2}");
        scores.push(r2);
    }
    scores.sort_by(f64::total_cmp);
    assert!(scores[10].abs() < 0.05, "{scores:?}");
}

#[test]
fn ridge_needs_enough_samples() {
    let acts = random_acts("m", 24, 2, 2, 0);
    let table = NdArray::zeros(&[24, 1, 1]);
    assert!(matches!(reconstruct_band_power(&acts, &table, &RidgeOptions::default()), Err(Error::Data(_))));
    let table = NdArray::zeros(&[30, 1, 1]);
    assert!(matches!(reconstruct_band_power(&acts, &table, &RidgeOptions::default()), Err(Error::Dimension { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn held_out_r2_never_exceeds_one(seed in 0u64..1000, noise in 0.0f64..2.0) {
        let acts = random_acts("m", 40, 3, 2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let y: Vec<f64> = acts.rows().map(|r| r[1] - r[4] + noise * normal(&mut rng)).collect();
        let table = NdArray::new(&[40, 1, 1], y).unwrap();
        let r2 = reconstruct_band_power(&acts, &table, &RidgeOptions { seed, ..RidgeOptions::default() }).unwrap();
        prop_assert!(r2.data()[0] <= 1.0);
    }
}

// ---- correlations -------------------------------------------------------

#[test]
fn kernel_equal_to_feature_has_unit_correlation() {
    let acts = random_acts("m", 50, 3, 4, 7);
    let means = acts.kernel_means();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bands = Vec::new();
    for row in &means {
        bands.extend([row[1], normal(&mut rng)]);
    }
    let table = NdArray::new(&[50, 1, 2], bands).unwrap();
    let k = kernel_feature_correlations(&acts, &table).unwrap();
    assert_eq!(k.r.shape(), &[3, 1, 2]);
    assert!((k.r.at(&[1, 0, 0]) - 1.0).abs() < 1e-12);
    assert!(k.summary.constant_kernels.is_empty());
}

#[test]
fn independent_streams_are_uncorrelated() {
    let acts = random_acts("m", 1000, 10, 1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let table = NdArray::from_fn(&[1000, 4, 5], |_| normal(&mut rng));
    let k = kernel_feature_correlations(&acts, &table).unwrap();
    let small = k.r.data().iter().filter(|r| r.abs() < 0.1).count();
    assert!(small as f64 >= 0.99 * k.r.len() as f64);
    assert!(k.summary.mean.abs() < 0.05);
}

#[test]
fn constant_kernels_are_flagged() {
    let mut data = random_acts("m", 30, 2, 3, 1).activations().clone();
    for i in 0..30 {
        for t in 0..3 {
            data.set(&[i, 0, t], 0.5);
        }
    }
    let acts = ActivationSet::new("m", data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let table = NdArray::from_fn(&[30, 2, 5], |_| normal(&mut rng));
    let k = kernel_feature_correlations(&acts, &table).unwrap();
    assert_eq!(k.summary.constant_kernels, vec![0]);
    assert!((0..10).all(|f| k.r.data()[f] == 0.0));
}

// ---- RSA ----------------------------------------------------------------

fn affine(set: &ActivationSet, id: &str) -> ActivationSet {
    let arr = set.activations().map(|v| 2.0 * v + 3.0);
    ActivationSet::new(id, arr).unwrap()
}

#[test]
fn rdm_basic_properties() {
    let a = random_acts("a", 40, 4, 5, 1);
    let b = affine(&a, "b");
    let c = random_acts("c", 40, 4, 5, 2);
    let rdm = compute_rdm(&[a.clone(), b, c], Distance::Correlation).unwrap();
    assert_eq!(rdm.get(0, 0), 0.0);
    assert!(rdm.get(0, 1).abs() < 1e-12);
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(rdm.get(i, j), rdm.get(j, i));
            assert!((0.0..=2.0).contains(&rdm.get(i, j)));
        }
    }
    let bad = random_acts("d", 40, 3, 5, 3);
    assert!(matches!(compute_rdm(&[a, bad], Distance::Correlation), Err(Error::Dimension { .. })));
}

#[test]
fn per_sample_affine_maps_are_invisible() {
    let a = random_acts("a", 20, 3, 4, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut data = a.activations().clone();
    for row in data.data_mut().chunks_mut(12) {
        let (s, o) = (rng.gen_range(0.1..5.0), rng.gen_range(-3.0..3.0));
        row.iter_mut().for_each(|v| *v = s * *v + o);
    }
    let b = ActivationSet::new("b", data).unwrap();
    let c = random_acts("c", 20, 3, 4, 7);
    let r1 = compute_rdm(&[a, c.clone()], Distance::Correlation).unwrap();
    let r2 = compute_rdm(&[b, c], Distance::Correlation).unwrap();
    assert!((r1.get(0, 1) - r2.get(0, 1)).abs() < 1e-12);
}

#[test]
fn unrelated_activations_have_unit_distance() {
    let a = random_acts("a", 500, 40, 9, 10);
    let b = random_acts("b", 500, 40, 9, 11);
    let d = compute_rdm(&[a, b], Distance::Correlation).unwrap().get(0, 1);
    assert!((d - 1.0).abs() < 0.05, "{d}");
}

#[test]
fn euclidean_distance_matches_direct_sum() {
    let a = random_acts("a", 6, 2, 3, 1);
    let b = random_acts("b", 6, 2, 3, 2);
    let want: f64 = a
        .rows()
        .zip(b.rows())
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / 6.0;
    let got = compute_rdm(&[a, b], Distance::Euclidean).unwrap().get(0, 1);
    assert!((got - want).abs() < 1e-12);
}

fn rdm_from(ids: &[&str], f: impl Fn(usize, usize) -> f64) -> Rdm {
    let m = ids.len();
    Rdm {
        model_ids: ids.iter().map(|s| s.to_string()).collect(),
        dissimilarity: NdArray::from_fn(&[m, m], |k| {
            let (i, j) = (k / m, k % m);
            if i == j {
                0.0
            } else {
                f(i.min(j), i.max(j))
            }
        }),
    }
}

#[test]
fn block_rdm_contrast() {
    let ids = ["a_fold0", "a_fold1", "a_fold2", "b_fold0", "b_fold1", "b_fold2"];
    let rdm = rdm_from(&ids, |i, j| if i / 3 == j / 3 { 0.1 } else { 0.5 });
    let groups: Vec<String> = ids.iter().map(|s| type_of(s)).collect();
    let c = rdm_contrast(&rdm, &groups).unwrap();
    assert!((c.gap - 0.4).abs() < 1e-12);
    assert!((c.within_type_mean - 0.1).abs() < 1e-12);
    let t = contrast_permutation_test(&rdm, &groups, 199, 1).unwrap();
    assert!(t.p_value < 0.1);
    let lone: Vec<String> = ["a", "a", "a", "a", "a", "b"].iter().map(|s| s.to_string()).collect();
    assert!(matches!(rdm_contrast(&rdm, &lone), Err(Error::Data(_))));
}

#[test]
fn random_rdm_has_no_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let vals: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..1.0)).collect();
    let ids: Vec<String> = (0..20).map(|i| format!("t{}_fold{}", i % 4, i / 4)).collect();
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let rdm = rdm_from(&id_refs, |i, j| vals[i * 20 + j]);
    let groups: Vec<String> = ids.iter().map(|s| type_of(s)).collect();
    let t = contrast_permutation_test(&rdm, &groups, 999, 3).unwrap();
    assert!(t.p_value > 0.05, "{t:?}");
    assert!(t.observed.gap.abs() < 0.1);
}

// ---- fusion coherence ---------------------------------------------------

#[test]
fn fused_copy_is_representationally_identical() {
    use crate::models::{build_model, fuse_1d_to_2d, Mode, ModelConfig, ModelKind};
    let cfg = ModelConfig {
        n_kernels: 6,
        kernel_len: 5,
        pool_size: 8,
        pool_stride: Some(4),
        ..ModelConfig::new(ModelKind::Cnn1d, 3, 40, 2)
    };
    let mut m1 = build_model::<f64>(cfg, 3).unwrap();
    m1.set_mode(Mode::Eval);
    let m2 = fuse_1d_to_2d(&m1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = NdArray::from_fn(&[60, 1, 3, 40], |_| normal(&mut rng));
    let a1 = ActivationSet::extract("cnn1d_fold0", &m1, &x).unwrap();
    let a2 = ActivationSet::extract("cnn2d_fused", &m2, &x).unwrap();
    assert!(compute_rdm(&[a1.clone(), a2.clone()], Distance::Correlation).unwrap().get(0, 1) < 1e-6);
    let table = NdArray::from_fn(&[60, 3, 5], |_| normal(&mut rng).abs());
    let r1 = reconstruct_band_power(&a1, &table, &RidgeOptions::default()).unwrap();
    let r2 = reconstruct_band_power(&a2, &table, &RidgeOptions::default()).unwrap();
    assert!(r1.max_abs_diff(&r2) < 1e-6);
}

// ---- reports ------------------------------------------------------------

fn sample_results() -> AnalysisResults {
    let sets: Vec<ActivationSet> = (0..4).map(|i| random_acts(&format!("t{}_fold{}", i % 2, i / 2), 30, 2, 3, i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let table = NdArray::from_fn(&[30, 2, 5], |_| normal(&mut rng).abs());
    let channels = vec!["C3".to_string(), "C4".to_string()];
    let bands: Vec<String> = crate::signal::BANDS.iter().map(|&b| crate::signal::band_label(b)).collect();
    analyze_activations(
        &sets,
        &table,
        &channels,
        &bands,
        &AnalysisOptions {
            permutations: 99,
            ..AnalysisOptions::default()
        },
    )
    .unwrap()
}

#[test]
fn reports_are_byte_stable_and_round_trip() {
    let res = sample_results();
    let perf = "model,fold,test_accuracy,n_epochs,best_epoch,mean_epoch_s,total_s\nt0,0,0.5,3,1,0.1,0.4\nmajority,0,0.25,0,0,0,0\n";
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let f1 = emit_reports(&res, d1.path(), Some(perf)).unwrap();
    let f2 = emit_reports(&res, d2.path(), Some(perf)).unwrap();
    assert_eq!(f1.len(), f2.len());
    for (a, b) in f1.iter().zip(&f2) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{a:?}");
    }
    let names: Vec<String> = f1.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for want in ["rdm.csv", "rdm.svg", "contrast.csv", "correlations_hist.svg", "performance.svg", "r2_t0_fold0.svg"] {
        assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
    }
    let back = read_rdm_csv(&d1.path().join("rdm.csv")).unwrap();
    assert_eq!(back, res.rdm);
    let (channels, bands, r2) = read_r2_csv(&d1.path().join("r2_t0_fold0.csv")).unwrap();
    assert_eq!(channels.len() * bands.len(), 10);
    assert_eq!(r2, res.models[0].r2);
    let rows = std::fs::read_to_string(d1.path().join("r2_t0_fold0.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 2 * 5);
}

#[test]
fn activation_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = random_acts("cnn1d_fold0", 5, 2, 3, 0);
    save_activations(&a, dir.path()).unwrap();
    let b = load_activations(dir.path()).unwrap();
    assert_eq!(b.model_id, a.model_id);
    let expect = a.activations().map(|v| v as f32 as f64);
    assert_eq!(b.activations(), &expect);
}

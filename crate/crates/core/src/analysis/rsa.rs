//! Representational dissimilarity across models on a shared trial set.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    /// Mean over samples of `1 - pearson(a_n, b_n)`.
    #[default]
    Correlation,
    /// Mean over samples of `||a_n - b_n||`.
    Euclidean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rdm {
    pub model_ids: Vec<String>,
    /// `[M, M]`, symmetric with a zero diagonal.
    pub dissimilarity: NdArray<f64>,
}

impl Rdm {
    pub fn len(&self) -> usize {
        self.model_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dissimilarity.at(&[i, j])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.model_ids.iter().position(|m| m == id)
    }
}

/// Rows centered and scaled to unit norm, so Pearson r is a dot product.
/// Constant rows become all-zero (r = 0 against anything).
fn normalized_rows(set: &ActivationSet) -> Vec<Vec<f64>> {
    set.rows()
        .map(|row| {
            let m = row.iter().sum::<f64>() / row.len() as f64;
            let c: Vec<f64> = row.iter().map(|v| v - m).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                c.iter().map(|v| v / norm).collect()
            } else {
                vec![0.0; c.len()]
            }
        })
        .collect()
}

pub fn compute_rdm(sets: &[ActivationSet], metric: Distance) -> Result<Rdm> {
    let first = sets.first().ok_or_else(|| Error::Data("no activation sets given".into()))?;
    for s in sets {
        if s.n_samples() != first.n_samples() || s.width() != first.width() {
            return Err(Error::dim(
                "compute_rdm",
                format!(
                    "{} is {}x{}, {} is {}x{}",
                    s.model_id,
                    s.n_samples(),
                    s.width(),
                    first.model_id,
                    first.n_samples(),
                    first.width()
                ),
            ));
        }
    }
    let m = sets.len();
    let n = first.n_samples() as f64;
    let prepared: Vec<Vec<Vec<f64>>> = match metric {
        Distance::Correlation => sets.iter().map(normalized_rows).collect(),
        Distance::Euclidean => sets.iter().map(|s| s.rows().map(<[f64]>::to_vec).collect()).collect(),
    };
    let mut d = NdArray::zeros(&[m, m]);
    for i in 0..m {
        for j in i + 1..m {
            let total: f64 = prepared[i]
                .iter()
                .zip(&prepared[j])
                .map(|(a, b)| match metric {
                    Distance::Correlation => 1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
                    Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
                })
                .sum();
            let v = (total / n).max(0.0);
            d.set(&[i, j], v);
            d.set(&[j, i], v);
        }
    }
    Ok(Rdm {
        model_ids: sets.iter().map(|s| s.model_id.clone()).collect(),
        dissimilarity: d,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub within_type_mean: f64,
    pub between_type_mean: f64,
    /// `between - within`; positive when same-type models are more alike.
    pub gap: f64,
}

fn check_groups(rdm: &Rdm, groups: &[String]) -> Result<()> {
    if groups.len() != rdm.len() {
        return Err(Error::dim(
            "rdm_contrast",
            format!("{} group labels for {} models", groups.len(), rdm.len()),
        ));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    groups.iter().for_each(|g| *counts.entry(g).or_default() += 1);
    if counts.len() < 2 || counts.values().any(|&c| c < 2) {
        return Err(Error::Data(format!(
            "contrast needs at least two groups of at least two models, got {counts:?}"
        )));
    }
    Ok(())
}

fn contrast_unchecked(rdm: &Rdm, groups: &[String]) -> Contrast {
    let (mut w, mut nw, mut b, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..rdm.len() {
        for j in i + 1..rdm.len() {
            if groups[i] == groups[j] {
                w += rdm.get(i, j);
                nw += 1;
            } else {
                b += rdm.get(i, j);
                nb += 1;
            }
        }
    }
    let (within, between) = (w / nw as f64, b / nb as f64);
    Contrast {
        within_type_mean: within,
        between_type_mean: between,
        gap: between - within,
    }
}

pub fn rdm_contrast(rdm: &Rdm, groups: &[String]) -> Result<Contrast> {
    check_groups(rdm, groups)?;
    Ok(contrast_unchecked(rdm, groups))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub observed: Contrast,
    pub n_permutations: usize,
    /// `(1 + #{permuted gap >= observed gap}) / (1 + n_permutations)`.
    pub p_value: f64,
}

/// One-sided test of the gap against random relabelings of the models.
pub fn contrast_permutation_test(rdm: &Rdm, groups: &[String], n_permutations: usize, seed: u64) -> Result<PermutationTest> {
    let observed = rdm_contrast(rdm, groups)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = groups.to_vec();
    let mut hits = 0;
    for _ in 0..n_permutations {
        shuffled.shuffle(&mut rng);
        if contrast_unchecked(rdm, &shuffled).gap >= observed.gap {
            hits += 1;
        }
    }
    Ok(PermutationTest {
        observed,
        n_permutations,
        p_value: (1 + hits) as f64 / (1 + n_permutations) as f64,
    })
}

/// Group label of an id of the form `<type>_fold<k>` (the whole id otherwise).
pub fn type_of(model_id: &str) -> String {
    model_id.split("_fold").next().unwrap_or(model_id).to_string()
}

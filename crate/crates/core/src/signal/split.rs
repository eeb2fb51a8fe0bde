//! Label-stratified cross-validation folds and holdout splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut groups = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

/// `k` folds whose test sets partition `0..labels.len()`. Each class is
/// shuffled and dealt round-robin, continuing the deal across classes so
/// fold sizes also stay within one of each other.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Parameter(format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests = vec![Vec::new(); k];
    let mut next = 0;
    for (class, mut members) in by_class(labels).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::Data(format!(
                "class {class} has {} trials, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for idx in members {
            tests[next].push(idx);
            next = (next + 1) % k;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
            Fold { train, test }
        })
        .collect())
}

/// Splits `idx` into (train, validation), taking `round(fraction * n_c)`
/// validation items from each class, clamped so both sides keep at least one.
/// A class with a single member cannot be stratified and is a data error.
pub fn holdout_split(idx: &[usize], labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!("holdout fraction must be in (0, 1), got {fraction}")));
    }
    let sub: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (class, mut members) in by_class(&sub).into_iter().enumerate() {
        match members.len() {
            0 => continue,
            1 => {
                return Err(Error::Data(format!(
                    "class {class} has a single training trial; cannot hold out a stratified validation set"
                )))
            }
            _ => {}
        }
        members.shuffle(&mut rng);
        let n_val = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        val.extend(members[..n_val].iter().map(|&p| idx[p]));
        train.extend(members[n_val..].iter().map(|&p| idx[p]));
    }
    if val.is_empty() {
        return Err(Error::Data("holdout split produced an empty validation set".into()));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

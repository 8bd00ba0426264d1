use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use rand::seq::SliceRandom;

/// Near-equal contiguous chunk sizes: the first `n % k` chunks get one extra element.
pub fn fold_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|f| n / k + usize::from(f < n % k)).collect()
}

/// Seeded random partition of `0..n` into `k` folds: a uniform shuffle cut
/// into contiguous chunks. Returns the fold id of every index.
pub fn random_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || n < k {
        return Err(Error::domain(format!("cannot split {n} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut fold_of = vec![0; n];
    let mut start = 0;
    for (f, size) in fold_sizes(n, k).into_iter().enumerate() {
        for &i in &order[start..start + size] {
            fold_of[i] = f;
        }
        start += size;
    }
    Ok(fold_of)
}

/// Indices belonging to each fold, in ascending order.
pub fn fold_members(fold_of: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (i, &f) in fold_of.iter().enumerate() {
        members[f].push(i);
    }
    members
}

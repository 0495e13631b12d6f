//! Balanced multi-task mini-batches.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// `(task, example index)` pairs of one mini-batch.
pub type BatchPlan = Vec<(usize, usize)>;

/// Per-task example counts of batch number `b`: `⌊B/T⌋` each, plus one
/// extra for `B mod T` tasks chosen by a rotation that advances every batch.
pub fn batch_shares(batch_size: usize, num_tasks: usize, b: usize) -> Vec<usize> {
    let base = batch_size / num_tasks;
    let extra = batch_size % num_tasks;
    let mut shares = vec![base; num_tasks];
    for j in 0..extra {
        shares[(b * extra + j) % num_tasks] += 1;
    }
    shares
}

/// One epoch of balanced batches over tasks with `sizes[t]` training
/// examples. Each task's pool is shuffled and drawn without replacement;
/// full batches are emitted while every pool can fill its share, then a
/// final batch takes the same number `k` (the smallest remaining pool) from
/// every task, so the epoch ends when the first pool runs dry.
pub fn balanced_batches<R: Rng + ?Sized>(sizes: &[usize], batch_size: usize, rng: &mut R) -> Result<Vec<BatchPlan>> {
    let t = sizes.len();
    if t == 0 {
        return Err(Error::contract("batching needs at least one task"));
    }
    if let Some(empty) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::contract(format!("task {empty} has no training examples")));
    }
    if batch_size < t {
        return Err(Error::contract(format!(
            "batch size {batch_size} is smaller than the number of tasks {t}"
        )));
    }
    let pools: Vec<Vec<usize>> = sizes
        .iter()
        .map(|&n| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    let mut cursor = vec![0usize; t];
    let mut batches = Vec::new();
    loop {
        let shares = batch_shares(batch_size, t, batches.len());
        let remaining: Vec<usize> = (0..t).map(|i| sizes[i] - cursor[i]).collect();
        let full = (0..t).all(|i| remaining[i] >= shares[i]);
        let take: Vec<usize> = if full {
            shares
        } else {
            let k = *remaining.iter().min().expect("non-empty");
            if k == 0 {
                break;
            }
            vec![k; t]
        };
        let mut plan = Vec::with_capacity(take.iter().sum());
        for (task, &n) in take.iter().enumerate() {
            plan.extend(pools[task][cursor[task]..cursor[task] + n].iter().map(|&i| (task, i)));
            cursor[task] += n;
        }
        batches.push(plan);
        if !full {
            break;
        }
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn counts(plan: &BatchPlan, t: usize) -> Vec<usize> {
        let mut c = vec![0; t];
        for &(task, _) in plan {
            c[task] += 1;
        }
        c
    }

    #[test]
    fn three_tasks_rotate_eleven_eleven_ten() {
        let mut seen = HashSet::new();
        for b in 0..3 {
            let s = batch_shares(32, 3, b);
            let mut sorted = s.clone();
            sorted.sort();
            assert_eq!(sorted, vec![10, 11, 11]);
            seen.insert(s);
        }
        assert_eq!(seen.len(), 3, "the short task rotates");
    }

    #[test]
    fn eleven_tasks_ten_threes_one_two() {
        let s = batch_shares(32, 11, 0);
        assert_eq!(s.iter().filter(|&&c| c == 3).count(), 10);
        assert_eq!(s.iter().filter(|&&c| c == 2).count(), 1);
        assert_ne!(batch_shares(32, 11, 1), s);
    }

    #[test]
    fn small_task_ends_the_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = balanced_batches(&[100, 10_000], 32, &mut rng).unwrap();
        let total: Vec<usize> = batches.iter().fold(vec![0, 0], |acc, b| {
            let c = counts(b, 2);
            vec![acc[0] + c[0], acc[1] + c[1]]
        });
        assert_eq!(total[0], 100);
        assert!(total[1] < 10_000);
    }

    #[test]
    fn rejects_batch_smaller_than_task_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(balanced_batches(&[5, 5, 5], 2, &mut rng).is_err());
        assert!(balanced_batches(&[5, 0], 4, &mut rng).is_err());
        assert!(balanced_batches(&[], 4, &mut rng).is_err());
    }

    #[test]
    fn pools_are_reshuffled_each_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = balanced_batches(&[50], 8, &mut rng).unwrap();
        let b = balanced_batches(&[50], 8, &mut rng).unwrap();
        assert_ne!(a, b);
    }

    proptest! {
        #[test]
        fn batches_are_balanced_unique_and_exhaust_smallest(
            sizes in prop::collection::vec(5usize..=500, 1..=11),
            batch in 11usize..=64,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = sizes.len();
            let batches = balanced_batches(&sizes, batch, &mut rng).unwrap();
            let mut seen = HashSet::new();
            let mut used = vec![0; t];
            for b in &batches {
                prop_assert!(b.len() <= batch);
                let c = counts(b, t);
                prop_assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
                for &(task, i) in b {
                    prop_assert!(i < sizes[task]);
                    prop_assert!(seen.insert((task, i)));
                    used[task] += 1;
                }
            }
            prop_assert!((0..t).any(|i| used[i] == sizes[i]));
        }
    }
}

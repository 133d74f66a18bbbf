use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub n_folds: usize,
    pub fold_index: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            n_folds: 5,
            fold_index: 0,
            seed: 0,
        }
    }
}

/// Item indices per partition, each sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Held-out count for a year with `n` items: 0 below 3 items, else at least 1.
pub fn test_count(n: usize, fraction: f64) -> usize {
    if n < 3 {
        0
    } else {
        ((fraction * n as f64).round() as usize).clamp(1, n)
    }
}

/// Per-year shuffle, head goes to test, the rest is dealt round-robin into
/// folds `0, 1, ..`; fold `fold_index` is validation. A year left with a
/// single non-test item keeps it in training.
pub fn year_stratified_split(years: &[i32], spec: &SplitSpec) -> Split {
    assert!(spec.n_folds >= 1 && spec.fold_index < spec.n_folds, "fold index out of range");
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &y) in years.iter().enumerate() {
        by_year.entry(y).or_default().push(i);
    }
    let mut split = Split::default();
    for (year, mut items) in by_year {
        let mut rng = rng::derive(spec.seed, &[b"split", &year.to_le_bytes()]);
        items.shuffle(&mut rng);
        let n_test = test_count(items.len(), spec.test_fraction);
        split.test.extend_from_slice(&items[..n_test]);
        let rest = &items[n_test..];
        for (j, &item) in rest.iter().enumerate() {
            if rest.len() > 1 && j % spec.n_folds == spec.fold_index {
                split.val.push(item);
            } else {
                split.train.push(item);
            }
        }
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_item_year() {
        let years = vec![1900; 10];
        let spec = SplitSpec::default();
        let s = year_stratified_split(&years, &spec);
        assert_eq!(s.test.len(), 2);
        assert_eq!(s.val.len() + s.train.len(), 8);

        // Same procedure by hand: shuffle, head 2 to test, the remaining 8
        // are dealt to folds 0,1,2,3,4,0,1,2.
        let mut ids: Vec<usize> = (0..10).collect();
        let mut r = rng::derive(spec.seed, &[b"split", &1900i32.to_le_bytes()]);
        ids.shuffle(&mut r);
        let mut test = ids[..2].to_vec();
        test.sort_unstable();
        assert_eq!(s.test, test);
        let expected_val = [2, 2, 2, 1, 1];
        for (fold, &n_val) in expected_val.iter().enumerate() {
            let f = year_stratified_split(&years, &SplitSpec { fold_index: fold, ..spec });
            let mut want: Vec<usize> = (0..8).filter(|j| j % 5 == fold).map(|j| ids[2 + j]).collect();
            want.sort_unstable();
            assert_eq!(f.val, want);
            assert_eq!(f.val.len(), n_val);
        }
    }

    #[test]
    fn tiny_years_go_to_training() {
        for fold in 0..5 {
            let s = year_stratified_split(&[1850], &SplitSpec { fold_index: fold, ..SplitSpec::default() });
            assert_eq!(s.train, vec![0]);
            assert!(s.val.is_empty() && s.test.is_empty());
        }
        let s = year_stratified_split(&[1850, 1850], &SplitSpec::default());
        assert!(s.test.is_empty());
    }

    #[test]
    fn every_fold_is_used_once() {
        let years = vec![1900; 27];
        let mut seen = vec![0; 27];
        let mut tests = None;
        for fold in 0..5 {
            let s = year_stratified_split(&years, &SplitSpec { fold_index: fold, ..SplitSpec::default() });
            for &v in &s.val {
                seen[v] += 1;
            }
            if let Some(t) = &tests {
                assert_eq!(t, &s.test);
            }
            tests = Some(s.test);
        }
        let test = tests.unwrap();
        for (i, &c) in seen.iter().enumerate() {
            assert_eq!(c, usize::from(!test.contains(&i)));
        }
    }

    proptest! {
        #[test]
        fn partition_and_per_year_fraction(years in prop::collection::vec(1820i32..1840, 1..300), seed in 0u64..1000, fold in 0usize..5) {
            let spec = SplitSpec { seed, fold_index: fold, ..SplitSpec::default() };
            let s = year_stratified_split(&years, &spec);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..years.len()).collect::<Vec<_>>());
            let mut counts: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
            for (i, y) in years.iter().enumerate() {
                let e = counts.entry(*y).or_default();
                e.0 += 1;
                if s.test.binary_search(&i).is_ok() {
                    e.1 += 1;
                }
            }
            for (n, t) in counts.values() {
                let target = 0.2 * *n as f64;
                prop_assert!((*t as f64 - target).abs() <= 1.0, "n={} test={}", n, t);
            }
        }
    }
}

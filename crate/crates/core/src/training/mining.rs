use rand::Rng;
use serde::{Deserialize, Serialize};

/// Curriculum for negative sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub negatives: usize,
    pub max_hard_fraction: f64,
    /// Epoch at which the hard fraction reaches its maximum.
    pub ramp_epochs: usize,
    pub overlap_boost: f64,
}

impl CurriculumSchedule {
    pub fn for_epochs(total: usize) -> Self {
        Self {
            negatives: 16,
            max_hard_fraction: 0.8,
            ramp_epochs: total / 2,
            overlap_boost: 2.0,
        }
    }

    /// Linear ramp from 0 at epoch 0 to the maximum at `ramp_epochs`.
    pub fn hard_fraction(&self, epoch: usize) -> f64 {
        if self.ramp_epochs == 0 {
            return self.max_hard_fraction;
        }
        self.max_hard_fraction * (epoch as f64 / self.ramp_epochs as f64).min(1.0)
    }
}

/// Valid non-gold rows in the top quartile by score (ties by row index).
pub fn top_quartile(scores: &[f64], valid: &[bool], gold: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..scores.len()).filter(|&i| i != gold && valid[i]).collect();
    rows.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let keep = rows.len().div_ceil(4);
    rows.truncate(keep);
    rows
}

/// Draws up to `negatives` distinct non-gold rows.
///
/// Each slot is hard with probability `hard_fraction` (drawn from the
/// top quartile of `scores`), otherwise drawn from all non-gold rows. Rows
/// overlapping the gold carry weight `overlap_boost`, others weight 1.
/// When the pool has no more than `negatives` non-gold rows, all of them
/// are returned in row order.
pub fn mine_negatives<R: Rng>(
    valid: &[bool],
    overlaps_gold: &[bool],
    gold: usize,
    scores: Option<&[f64]>,
    hard_fraction: f64,
    schedule: &CurriculumSchedule,
    rng: &mut R,
) -> Vec<usize> {
    let all: Vec<usize> = (0..valid.len()).filter(|&i| i != gold && valid[i]).collect();
    if all.len() <= schedule.negatives {
        return all;
    }
    let hard = match scores {
        Some(s) if hard_fraction > 0.0 => top_quartile(s, valid, gold),
        _ => Vec::new(),
    };
    let weight = |i: usize| if overlaps_gold[i] { schedule.overlap_boost } else { 1.0 };
    let mut taken = vec![false; valid.len()];
    let mut out = Vec::with_capacity(schedule.negatives);
    while out.len() < schedule.negatives {
        let use_hard = hard_fraction > 0.0 && rng.gen::<f64>() < hard_fraction;
        let from_hard = use_hard && hard.iter().any(|&i| !taken[i]);
        let source = if from_hard { &hard } else { &all };
        let pick = weighted_pick(source, &taken, &weight, rng);
        taken[pick] = true;
        out.push(pick);
    }
    out
}

fn weighted_pick<R: Rng>(rows: &[usize], taken: &[bool], weight: &impl Fn(usize) -> f64, rng: &mut R) -> usize {
    let total: f64 = rows.iter().filter(|&&i| !taken[i]).map(|&i| weight(i)).sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = None;
    for &i in rows.iter().filter(|&&i| !taken[i]) {
        last = Some(i);
        u -= weight(i);
        if u < 0.0 {
            return i;
        }
    }
    last.expect("a row remains")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ramp() {
        let s = CurriculumSchedule::for_epochs(20);
        assert_eq!(s.hard_fraction(0), 0.0);
        assert!((s.hard_fraction(5) - 0.4).abs() < 1e-12);
        assert_eq!(s.hard_fraction(10), 0.8);
        assert_eq!(s.hard_fraction(30), 0.8);
    }

    #[test]
    fn exhaustion_returns_all() {
        let s = CurriculumSchedule::for_epochs(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = mine_negatives(&[true; 3], &[true, false, false], 0, None, 0.0, &s, &mut rng);
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn draws_are_distinct_and_non_gold() {
        let s = CurriculumSchedule::for_epochs(10);
        let n = 100;
        let scores: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let overlaps: Vec<bool> = (0..n).map(|i| i % 7 == 0).collect();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let got = mine_negatives(&vec![true; n], &overlaps, 3, Some(&scores), 0.5, &s, &mut rng);
            assert_eq!(got.len(), 16);
            let mut d = got.clone();
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), 16);
            assert!(!got.contains(&3));
        }
    }

    #[test]
    fn full_hard_fraction_stays_in_top_quartile() {
        let mut s = CurriculumSchedule::for_epochs(10);
        s.max_hard_fraction = 1.0;
        let n = 200;
        // Strictly ordered scores: row i has score -i.
        let scores: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
        let valid = vec![true; n];
        // Brute force: non-gold rows sorted by score, first ceil(199/4) = 50.
        let mut non_gold: Vec<usize> = (0..n).filter(|&i| i != 10).collect();
        non_gold.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let quartile: Vec<usize> = non_gold[..50].to_vec();
        assert_eq!(top_quartile(&scores, &valid, 10), quartile);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let got = mine_negatives(&valid, &vec![false; n], 10, Some(&scores), s.hard_fraction(5), &s, &mut rng);
            assert!(got.iter().all(|g| quartile.contains(g)));
        }
    }

    #[test]
    fn overlap_boost_shifts_mass() {
        let s = CurriculumSchedule {
            negatives: 1,
            ..CurriculumSchedule::for_epochs(10)
        };
        let n = 11;
        let overlaps: Vec<bool> = (0..n).map(|i| i == 1).collect();
        let mut hits = 0;
        let trials = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..trials {
            if mine_negatives(&vec![true; n], &overlaps, 0, None, 0.0, &s, &mut rng)[0] == 1 {
                hits += 1;
            }
        }
        // weight 2 among total 2 + 9 = 11
        let p = hits as f64 / trials as f64;
        assert!((p - 2.0 / 11.0).abs() < 0.01, "{p}");
    }

    #[test]
    fn deterministic() {
        let s = CurriculumSchedule::for_epochs(10);
        let v = vec![true; 64];
        let o = vec![false; 64];
        let a = mine_negatives(&v, &o, 0, None, 0.0, &s, &mut ChaCha8Rng::seed_from_u64(5));
        let b = mine_negatives(&v, &o, 0, None, 0.0, &s, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}

use super::params::{sigmoid, softplus};

/// Floor on the within-pool standard deviation used for z-scoring.
pub const SCORE_STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseLoss {
    pub loss: f64,
    pub d_gold: f64,
    pub d_negatives: Vec<f64>,
}

/// Mean over negatives of `ln(1 + exp(s_neg - s_gold))`, with exact gradients.
pub fn pairwise_softplus_loss(gold: f64, negatives: &[f64]) -> PairwiseLoss {
    assert!(!negatives.is_empty(), "pairwise loss needs a negative");
    let k = negatives.len() as f64;
    let mut loss = 0.0;
    let mut d_gold = 0.0;
    let d_negatives = negatives
        .iter()
        .map(|&s| {
            let margin = s - gold;
            loss += softplus(margin);
            let g = sigmoid(margin) / k;
            d_gold -= g;
            g
        })
        .collect();
    PairwiseLoss {
        loss: loss / k,
        d_gold,
        d_negatives,
    }
}

/// Z-scores over the rows flagged in `valid`; other rows map to 0.
pub fn normalize_pool_scores(raw: &[f64], valid: &[bool]) -> Vec<f64> {
    let n = valid.iter().filter(|&&v| v).count();
    if n == 0 {
        return vec![0.0; raw.len()];
    }
    let mean = raw.iter().zip(valid).filter(|(_, &v)| v).map(|(x, _)| x).sum::<f64>() / n as f64;
    let var = raw
        .iter()
        .zip(valid)
        .filter(|(_, &v)| v)
        .map(|(x, _)| (x - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let sd = var.sqrt().max(SCORE_STD_FLOOR);
    raw.iter()
        .zip(valid)
        .map(|(x, &v)| if v { (x - mean) / sd } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_values() {
        let l = pairwise_softplus_loss(0.3, &[0.3]);
        assert!((l.loss - 2f64.ln()).abs() < 1e-15);
        assert!(pairwise_softplus_loss(20.0, &[0.0]).loss < 1e-8);
        // ln(1 + e) = 1.3132616875...
        assert!((pairwise_softplus_loss(0.0, &[1.0]).loss - 1.3132617).abs() < 1e-7);
        let big = pairwise_softplus_loss(-800.0, &[800.0]);
        assert!(big.loss.is_finite() && (big.loss - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn loss_gradient_finite_difference() {
        let negs = [0.4, -1.2, 2.0];
        let l = pairwise_softplus_loss(0.1, &negs);
        let h = 1e-6;
        let fd = (pairwise_softplus_loss(0.1 + h, &negs).loss - pairwise_softplus_loss(0.1 - h, &negs).loss) / (2.0 * h);
        assert!((fd - l.d_gold).abs() < 1e-8);
        for i in 0..negs.len() {
            let mut p = negs;
            let mut m = negs;
            p[i] += h;
            m[i] -= h;
            let fd = (pairwise_softplus_loss(0.1, &p).loss - pairwise_softplus_loss(0.1, &m).loss) / (2.0 * h);
            assert!((fd - l.d_negatives[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn z_scores() {
        let z = normalize_pool_scores(&[1.0, 2.0, 3.0], &[true; 3]);
        let s = (2.0f64 / 3.0).sqrt();
        assert!((z[0] + 1.0 / s).abs() < 1e-12 && z[1].abs() < 1e-15 && (z[2] - 1.0 / s).abs() < 1e-12);
        assert!((z[2] - 1.2247449).abs() < 1e-7);
        assert_eq!(normalize_pool_scores(&[4.0, 4.0], &[true; 2]), vec![0.0, 0.0]);
        let affine: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|x| 2.5 * x - 7.0).collect();
        let za = normalize_pool_scores(&affine, &[true; 3]);
        for (a, b) in z.iter().zip(&za) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(normalize_pool_scores(&[1.0, 99.0, 3.0], &[true, false, true])[1], 0.0);
    }
}

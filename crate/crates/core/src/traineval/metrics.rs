//! Binary-classification metrics.

use super::{Result, TrainEvalError};

/// Area under the ROC curve via the rank statistic: the probability that a
/// random positive outranks a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(TrainEvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|l| **l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(TrainEvalError::AucUndefined);
    }
    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Midranks over tied score runs.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            if labels[idx[k]] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Fraction of predictions on the right side of the threshold.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(TrainEvalError::EmptyInput);
    }
    if scores.len() != labels.len() {
        return Err(TrainEvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| (**s > threshold) == (**l == 1))
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_perfect_ranking() {
        let got = auc(&[0.9, 0.1, 0.8, 0.4], &[1, 0, 1, 0]).unwrap();
        assert_eq!(got, 1.0);
    }

    #[test]
    fn auc_half_for_mixed_ranking() {
        // Brute force over the four positive-negative pairs gives 2/4.
        let got = auc(&[0.2, 0.9, 0.8, 0.1], &[1, 0, 1, 0]).unwrap();
        assert!((got - 0.5).abs() < 1e-15);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let got = auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap();
        assert!((got - 0.5).abs() < 1e-15);
    }

    #[test]
    fn auc_single_class_is_undefined() {
        assert!(matches!(
            auc(&[0.1, 0.9], &[1, 1]),
            Err(TrainEvalError::AucUndefined)
        ));
    }

    #[test]
    fn accuracy_endpoints() {
        assert_eq!(accuracy(&[0.9, 0.1], &[1, 0], 0.5).unwrap(), 1.0);
        assert_eq!(accuracy(&[0.9, 0.1], &[0, 1], 0.5).unwrap(), 0.0);
        assert!(matches!(
            accuracy(&[], &[], 0.5),
            Err(TrainEvalError::EmptyInput)
        ));
    }

    #[test]
    fn accuracy_mixed_hand_count() {
        let scores = [0.9, 0.2, 0.6, 0.4, 0.51, 0.5, 0.7];
        let labels = [1, 0, 0, 0, 1, 1, 1];
        // score > 0.5 vs label: hits are 0.9/1, 0.2/0, 0.4/0, 0.51/1, 0.7/1;
        // misses are 0.6/0 and 0.5/1 (not above the threshold).
        let got = accuracy(&scores, &labels, 0.5).unwrap();
        assert!((got - 5.0 / 7.0).abs() < 1e-15);
    }

    /// Brute-force pairwise oracle.
    fn auc_bruteforce(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, (si, li)) in scores.iter().zip(labels).enumerate() {
            if *li != 1 {
                continue;
            }
            for (j, (sj, lj)) in scores.iter().zip(labels).enumerate() {
                if *lj != 0 || i == j {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_matches_bruteforce_on_random_inputs() {
        let mut rng = crate::rng::Rng::new(2024);
        for trial in 0..300 {
            let n = 2 + rng.next_range(199);
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                // Coarse grid forces plenty of ties.
                scores.push((rng.next_range(20) as f64) / 19.0);
                labels.push(rng.bernoulli(0.4) as u8);
            }
            if !labels.contains(&0) || !labels.contains(&1) {
                continue;
            }
            let fast = auc(&scores, &labels).unwrap();
            let slow = auc_bruteforce(&scores, &labels);
            assert!(
                (fast - slow).abs() < 1e-12,
                "trial {trial}: {fast} vs {slow}"
            );
        }
    }
}

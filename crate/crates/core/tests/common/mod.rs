#![allow(dead_code)]

use clusterauc::{ClusteredDataset, ScoredSample, TiePolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pair-enumeration AUC, in half-credit units doubled to stay integral.
pub fn brute_force_credit2(scores: &[f64], labels: &[u8], policy: TiePolicy) -> (u128, u128) {
    let mut credit2 = 0u128;
    let mut pairs = 0u128;
    for (i, &sp) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sn) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1;
            if sp > sn {
                credit2 += 2;
            } else if sp == sn && policy == TiePolicy::HalfCredit {
                credit2 += 1;
            }
        }
    }
    (credit2, pairs)
}

pub fn brute_force_auc(scores: &[f64], labels: &[u8], policy: TiePolicy) -> Option<f64> {
    let (c, p) = brute_force_credit2(scores, labels, policy);
    (p > 0).then(|| c as f64 / (2 * p) as f64)
}

/// Draws a score; with probability `tie_p` it comes from a coarse grid.
pub fn draw_score(rng: &mut ChaCha8Rng, tie_p: f64) -> f64 {
    if rng.gen_bool(tie_p) {
        f64::from(rng.gen_range(0..5u8)) / 4.0
    } else {
        rng.gen::<f64>()
    }
}

/// Random clustered dataset with probabilities in [0, 1] and one feature.
pub fn random_dataset(seed: u64, max_n: usize, max_k: usize, tie_p: f64) -> ClusteredDataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let k = rng.gen_range(1..=max_k);
    let pos_rate = rng.gen_range(0.05..0.95);
    let samples: Vec<ScoredSample<f64>> = (0..n)
        .map(|_| {
            let label = u8::from(rng.gen_bool(pos_rate));
            // Skewed cluster draw so some clusters end up tiny or single-class.
            let c = ((rng.gen::<f64>().powi(2)) * k as f64) as usize;
            let s = draw_score(&mut rng, tie_p);
            ScoredSample::new(s, label, format!("k{c}"))
                .with_probability(s)
                .with_features(vec![Some(rng.gen::<f64>() + c as f64)])
        })
        .collect();
    ClusteredDataset::from_samples(vec!["x".into()], samples).expect("valid samples")
}

pub fn policies() -> [TiePolicy; 2] {
    [TiePolicy::HalfCredit, TiePolicy::Strict]
}

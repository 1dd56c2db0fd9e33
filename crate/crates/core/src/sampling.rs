//! Per-campaign visit sampling with weight reweighting, for shrinking a
//! large forecast pool into a solvable instance without biasing any
//! campaign's eligible supply weight.
//!
//! Each campaign draws k eligible visits uniformly without replacement from
//! its own seeded stream, so edits to one campaign never disturb another's
//! draw. The union of draws is kept (deduplicated by visit), and each kept
//! visit's weight is scaled by the mean, over the campaigns it is eligible
//! for, of that campaign's correction factor
//! (true eligible weight) / (eligible weight present in the union).

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand::rngs::StdRng;

use crate::error::{Error, Result};
use crate::graph::{Campaign, SupplyNode, evaluate_eligibility};

/// One independent stream per (seed, campaign id), FNV-1a folded.
pub(crate) fn stream_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in seed.to_le_bytes().iter().chain(id.as_bytes()) {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn sample_reweight(
    pool: &[SupplyNode],
    campaigns: &[Campaign],
    k: usize,
    seed: u64,
) -> Result<Vec<SupplyNode>> {
    if k == 0 {
        return Err(Error::InvalidInstance("sample size k must be positive".into()));
    }

    let mut union: BTreeSet<usize> = BTreeSet::new();
    let mut true_weight = vec![0.0; campaigns.len()];
    for (j, campaign) in campaigns.iter().enumerate() {
        let mut eligible = Vec::new();
        for (i, visit) in pool.iter().enumerate() {
            if evaluate_eligibility(&campaign.targeting, &visit.attributes) {
                eligible.push(i);
                true_weight[j] += visit.weight;
            }
        }
        if eligible.is_empty() {
            continue;
        }
        if k >= eligible.len() {
            union.extend(eligible);
        } else {
            let mut rng = StdRng::seed_from_u64(stream_seed(seed, &campaign.id));
            for pick in rand::seq::index::sample(&mut rng, eligible.len(), k) {
                union.insert(eligible[pick]);
            }
        }
    }

    let factors: Vec<Option<f64>> = campaigns
        .iter()
        .enumerate()
        .map(|(j, campaign)| {
            let in_union: f64 = union
                .iter()
                .filter(|&&i| evaluate_eligibility(&campaign.targeting, &pool[i].attributes))
                .map(|&i| pool[i].weight)
                .sum();
            (in_union > 0.0).then(|| true_weight[j] / in_union)
        })
        .collect();

    Ok(union
        .into_iter()
        .map(|i| {
            let visit = &pool[i];
            let mut sum = 0.0;
            let mut count = 0usize;
            for (j, campaign) in campaigns.iter().enumerate() {
                if let Some(f) = factors[j] {
                    if evaluate_eligibility(&campaign.targeting, &visit.attributes) {
                        sum += f;
                        count += 1;
                    }
                }
            }
            let scale = if count > 0 { sum / count as f64 } else { 1.0 };
            SupplyNode { weight: visit.weight * scale, ..visit.clone() }
        })
        .collect())
}

//! Class-balanced minibatch sampling.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sampled indices, positives first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Minibatch {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn pick(pool: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool = pool.to_vec();
    let (chosen, _) = pool.partial_shuffle(rng, n);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    chosen
}

/// Draw up to `count` indices with at most `positive_fraction` positives,
/// filling the rest with negatives. `None` signals that both pools are empty
/// and the batch should be skipped.
pub fn sample_minibatch(
    positives: &[usize],
    negatives: &[usize],
    count: usize,
    positive_fraction: f64,
    seed: u64,
) -> Option<Minibatch> {
    if positives.is_empty() && negatives.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quota = ((count as f64 * positive_fraction).round() as usize).min(count);
    let pos = pick(positives, quota.min(positives.len()), &mut rng);
    let neg = pick(negatives, (count - pos.len()).min(negatives.len()), &mut rng);
    Some(Minibatch { positives: pos, negatives: neg })
}

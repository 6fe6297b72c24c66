use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::{Error, Result};

const MIN_PARTICIPANTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Uuid>,
    pub heldout: Vec<Uuid>,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Uniform seeded split of participant ids. Input order does not matter.
pub fn split_cohort(ids: &[Uuid], train_fraction: f64, seed: u64) -> Result<Split> {
    if ids.len() < MIN_PARTICIPANTS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_PARTICIPANTS} participants to split, got {}",
            ids.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train_fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let n_train = ((sorted.len() as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, sorted.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let heldout = sorted.split_off(n_train);
    let mut train = sorted;
    train.sort_unstable();
    let mut heldout = heldout;
    heldout.sort_unstable();
    Ok(Split {
        train,
        heldout,
        seed,
        train_fraction,
    })
}

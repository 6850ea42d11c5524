use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SampleSet;
use crate::error::{Error, Result};

/// Splits by vehicle so no vehicle contributes to both sides. Vehicles are
/// visited in seed-shuffled order and each goes to training when that brings
/// the training share of windows closer to `ratio`.
pub fn split_train_val(samples: &SampleSet, ratio: f64, seed: u64) -> Result<(SampleSet, SampleSet)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for w in &samples.windows {
        *counts.entry(w.vehicle_id).or_default() += 1;
    }
    let mut vehicles: Vec<(u32, usize)> = counts.into_iter().collect();
    vehicles.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let target = ratio * samples.len() as f64;
    let mut in_train = 0usize;
    let mut train_ids = BTreeSet::new();
    for (vid, n) in vehicles {
        let with = (in_train + n) as f64 - target;
        let without = in_train as f64 - target;
        if with.abs() < without.abs() {
            in_train += n;
            train_ids.insert(vid);
        }
    }

    let mut train = SampleSet {
        provenance: samples.provenance.clone(),
        ..SampleSet::default()
    };
    train.provenance.seed = Some(seed);
    let mut val = train.clone();
    for w in &samples.windows {
        if train_ids.contains(&w.vehicle_id) {
            train.windows.push(w.clone());
        } else {
            val.windows.push(w.clone());
        }
    }
    Ok((train, val))
}

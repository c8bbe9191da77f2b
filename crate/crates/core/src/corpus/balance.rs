use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::CaseRecord;
use crate::error::{Error, Result};

/// One 50/50 training set: every minority-class case plus as many
/// majority-class cases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedSet {
    pub set_index: usize,
    pub case_ids: Vec<String>,
}

/// Draws `k` balanced sets from `pool`.
///
/// Majority cases come from a shuffled queue that is reshuffled and refilled
/// only once exhausted, so overlap between sets is as small as the pool
/// allows. A case never appears twice in the same set.
pub fn balanced_resample<'a>(
    pool: impl IntoIterator<Item = &'a CaseRecord>,
    k: usize,
    seed: u64,
) -> Result<Vec<BalancedSet>> {
    if k == 0 {
        return Err(Error::Config("number of balanced sets must be positive".into()));
    }
    let (positives, negatives): (Vec<&CaseRecord>, Vec<&CaseRecord>) =
        pool.into_iter().partition(|c| c.is_violation());
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::SingleClass);
    }
    let (minority, majority) = if positives.len() < negatives.len() {
        (positives, negatives)
    } else {
        (negatives, positives)
    };
    let minority: Vec<&str> = minority.iter().map(|c| c.id.as_str()).collect();
    let majority: Vec<&str> = majority.iter().map(|c| c.id.as_str()).collect();
    let m = minority.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queue: VecDeque<&str> = VecDeque::new();
    let mut sets = Vec::with_capacity(k);
    for set_index in 0..k {
        let mut chosen: Vec<&str> = Vec::with_capacity(m);
        let mut in_set: HashSet<&str> = HashSet::with_capacity(m);
        let mut deferred: Vec<&str> = Vec::new();
        while chosen.len() < m {
            if queue.is_empty() {
                let mut refill = majority.clone();
                refill.shuffle(&mut rng);
                queue.extend(refill);
            }
            let id = queue.pop_front().expect("queue refilled above");
            if in_set.insert(id) {
                chosen.push(id);
            } else {
                deferred.push(id);
            }
        }
        for id in deferred.into_iter().rev() {
            queue.push_front(id);
        }
        let case_ids = minority
            .iter()
            .chain(chosen.iter())
            .map(|s| (*s).to_owned())
            .collect();
        sets.push(BalancedSet { set_index, case_ids });
    }
    Ok(sets)
}

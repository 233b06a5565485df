use std::cmp::Ordering;

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Indices of `target` items drawn without replacement, each item weighted by
/// `1 / size(its group)`. Items of singleton groups are always kept. Returned
/// indices are ascending.
///
/// Uses weighted random sampling with exponential keys: item `i` gets key
/// `ln(u_i) / w_i` and the largest keys win.
pub fn weighted_subsample_indices(
    group_of: &[usize],
    group_sizes: &[usize],
    target: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = group_of.len();
    if target == 0 || target > n {
        return Err(Error::Invalid(format!(
            "subsample target {target} outside 1..={n}"
        )));
    }
    let singletons: Vec<usize> = (0..n).filter(|&i| group_sizes[group_of[i]] == 1).collect();
    if target < singletons.len() {
        return Err(Error::Invalid(format!(
            "subsample target {target} is smaller than the {} singleton-group documents that must be kept",
            singletons.len()
        )));
    }

    let mut rng = CounterRng::new(seed);
    let mut keyed: Vec<(f64, usize)> = (0..n)
        .filter(|&i| group_sizes[group_of[i]] > 1)
        .map(|i| {
            let u = rng.next_f64_open0();
            (u.ln() * group_sizes[group_of[i]] as f64, i)
        })
        .collect();
    // Descending key, ascending index on ties.
    keyed.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => a.1.cmp(&b.1),
        o => o,
    });

    let mut chosen: Vec<usize> = singletons;
    chosen.extend(keyed.iter().take(target - chosen.len()).map(|&(_, i)| i));
    chosen.sort_unstable();
    Ok(chosen)
}

/// Draws `target` documents favouring rare label groups; keeps ingestion order.
pub fn weighted_subsample(d: &Dataset, target: usize, seed: u64) -> Result<Dataset> {
    let (group_of, sizes) = d.group_ids();
    let idx = weighted_subsample_indices(&group_of, &sizes, target, seed)?;
    Ok(d.select(&idx))
}

//! Leakage-free train/test splitting.
//!
//! Pairs are edges of a graph whose nodes are normalized sentences. A split
//! is leakage-free when no sentence node is touched by both a train-pool pair
//! and a test pair. Whole connected components can always be assigned to
//! either side, so the splitter first looks for a set of components whose
//! sizes sum exactly to the test size (subset-sum with reconstruction). If no
//! exact combination exists it tops the test set up with part of one more
//! component and drops that component's pairs that now touch the test set.

use std::collections::{HashMap, HashSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{normalize_sentence, Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Target fraction of each label in the test set, in label-set order.
    /// `None` keeps whatever ratio the component draw produces, which follows
    /// the source ratio in expectation.
    pub class_ratio: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train_pool: Dataset,
    pub test: Dataset,
}

struct Components {
    /// Pair indices grouped by connected component.
    groups: Vec<Vec<usize>>,
}

fn components(d: &Dataset) -> Components {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut node = |s: &str| {
        let n = ids.len();
        *ids.entry(normalize_sentence(s)).or_insert(n)
    };
    let edges: Vec<(usize, usize)> = d.pairs().map(|p| (node(&p.u), node(&p.v))).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in &edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut by_root: HashMap<usize, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &(a, _)) in edges.iter().enumerate() {
        let r = find(&mut parent, a);
        let g = *by_root.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    Components { groups }
}

/// `from[s]` is the component that first reached sum `s`, or `None` when `s`
/// is unreachable. `from[0]` is `Some(usize::MAX)`.
fn subset_sums(sizes: &[usize], cap: usize) -> Vec<Option<usize>> {
    let mut from = vec![None; cap + 1];
    from[0] = Some(usize::MAX);
    for (i, &sz) in sizes.iter().enumerate() {
        if sz == 0 || sz > cap {
            continue;
        }
        for s in (sz..=cap).rev() {
            if from[s].is_none() && from[s - sz].is_some() {
                from[s] = Some(i);
            }
        }
    }
    from
}

fn reconstruct(from: &[Option<usize>], sizes: &[usize], mut s: usize) -> Vec<usize> {
    let mut picked = Vec::new();
    while s > 0 {
        let i = from[s].expect("reachable sum");
        picked.push(i);
        s -= sizes[i];
    }
    picked
}

fn sentences_of(d: &Dataset, idx: &[usize]) -> HashSet<String> {
    let mut out = HashSet::new();
    for &i in idx {
        let p = &d.examples()[i].pair;
        out.insert(normalize_sentence(&p.u));
        out.insert(normalize_sentence(&p.v));
    }
    out
}

fn touches(d: &Dataset, i: usize, set: &HashSet<String>) -> bool {
    let p = &d.examples()[i].pair;
    set.contains(&normalize_sentence(&p.u)) || set.contains(&normalize_sentence(&p.v))
}

/// Partition `all_pairs` into a train pool and a test set with no sentence
/// shared between them. Both sizes are honored exactly; pairs that can go to
/// neither side are dropped.
pub fn split_no_leakage(
    all_pairs: &Dataset,
    train_pool_size: usize,
    test_size: usize,
    seed: u64,
    options: &SplitOptions,
) -> Result<Split> {
    let total = all_pairs.len();
    let mut comps = components(all_pairs).groups;
    let mut rng = rng::seeded(seed);
    comps.shuffle(&mut rng);
    let sizes: Vec<usize> = comps.iter().map(Vec::len).collect();

    let budget = total.saturating_sub(train_pool_size);
    let from = subset_sums(&sizes, total);
    let max_test_size = (0..=budget).rev().find(|&s| from[s].is_some()).unwrap_or(0);
    let infeasible = || Error::InfeasibleSplit {
        requested: test_size,
        max_test_size,
    };
    if test_size + train_pool_size > total {
        return Err(infeasible());
    }

    let test_idx: Vec<usize> = match &options.class_ratio {
        None => choose_test_exact(all_pairs, &comps, &sizes, &from, test_size, train_pool_size, &mut rng)
            .ok_or_else(infeasible)?,
        Some(ratio) => {
            choose_test_ratio(all_pairs, &comps, test_size, train_pool_size, ratio, &mut rng)?.ok_or_else(infeasible)?
        }
    };

    let test_sentences = sentences_of(all_pairs, &test_idx);
    let in_test: HashSet<usize> = test_idx.iter().copied().collect();
    let eligible: Vec<usize> = (0..total)
        .filter(|i| !in_test.contains(i) && !touches(all_pairs, *i, &test_sentences))
        .collect();
    if eligible.len() < train_pool_size {
        return Err(infeasible());
    }
    let mut train_idx: Vec<usize> = index::sample(&mut rng, eligible.len(), train_pool_size)
        .into_iter()
        .map(|k| eligible[k])
        .collect();
    train_idx.sort_unstable();
    let mut test_idx = test_idx;
    test_idx.sort_unstable();

    Ok(Split {
        train_pool: all_pairs.subset(&train_idx, DatasetKind::Train),
        test: all_pairs.subset(&test_idx, DatasetKind::Test),
    })
}

fn choose_test_exact(
    d: &Dataset,
    comps: &[Vec<usize>],
    sizes: &[usize],
    from: &[Option<usize>],
    test_size: usize,
    train_pool_size: usize,
    rng: &mut rng::Rng,
) -> Option<Vec<usize>> {
    if from[test_size].is_some() {
        let picked = reconstruct(from, sizes, test_size);
        return Some(picked.iter().flat_map(|&c| comps[c].iter().copied()).collect());
    }
    // Top up the largest exact whole-component sum below the target with a
    // partial component; try candidates in shuffled order.
    let base_sum = (0..test_size).rev().find(|&s| from[s].is_some())?;
    let base = reconstruct(from, sizes, base_sum);
    let need = test_size - base_sum;
    let base_idx: Vec<usize> = base.iter().flat_map(|&c| comps[c].iter().copied()).collect();
    let base_set: HashSet<usize> = base.iter().copied().collect();
    for (c, members) in comps.iter().enumerate() {
        if base_set.contains(&c) || members.len() <= need {
            continue;
        }
        let mut members = members.clone();
        members.shuffle(rng);
        let part = &members[..need];
        let mut candidate = base_idx.clone();
        candidate.extend_from_slice(part);
        let sentences = sentences_of(d, &candidate);
        let chosen: HashSet<usize> = candidate.iter().copied().collect();
        let eligible = (0..d.len())
            .filter(|i| !chosen.contains(i) && !touches(d, *i, &sentences))
            .count();
        if eligible >= train_pool_size {
            return Some(candidate);
        }
    }
    None
}

fn choose_test_ratio(
    d: &Dataset,
    comps: &[Vec<usize>],
    test_size: usize,
    train_pool_size: usize,
    ratio: &[f64],
    rng: &mut rng::Rng,
) -> Result<Option<Vec<usize>>> {
    let k = d.label_set().len();
    if ratio.len() != k {
        return Err(Error::Shape {
            expected: k,
            got: ratio.len(),
        });
    }
    let total: f64 = ratio.iter().sum();
    if ratio.iter().any(|r| !r.is_finite() || *r < 0.0) || total <= 0.0 {
        return Err(Error::Distribution(format!("bad class ratio {ratio:?}")));
    }
    // Largest-remainder quotas.
    let raw: Vec<f64> = ratio.iter().map(|r| r / total * test_size as f64).collect();
    let mut quota: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    let mut short = test_size - quota.iter().sum::<usize>();
    for &c in order.iter().cycle().take(k * 2) {
        if short == 0 {
            break;
        }
        quota[c] += 1;
        short -= 1;
    }

    // Whole components that fit the remaining quotas first, then single
    // pairs from other components for whatever is left.
    let labels = d.label_ids()?;
    let mut remaining = quota;
    let mut picked = Vec::with_capacity(test_size);
    let mut taken = vec![false; comps.len()];
    for (ci, members) in comps.iter().enumerate() {
        let mut counts = vec![0usize; k];
        for &i in members {
            counts[labels[i]] += 1;
        }
        if counts.iter().zip(&remaining).all(|(c, r)| c <= r) {
            for (r, c) in remaining.iter_mut().zip(&counts) {
                *r -= c;
            }
            picked.extend_from_slice(members);
            taken[ci] = true;
        }
        if remaining.iter().all(|&r| r == 0) {
            break;
        }
    }
    for (ci, members) in comps.iter().enumerate() {
        if remaining.iter().all(|&r| r == 0) {
            break;
        }
        if taken[ci] {
            continue;
        }
        let mut members = members.clone();
        members.shuffle(rng);
        for i in members {
            if remaining[labels[i]] > 0 {
                remaining[labels[i]] -= 1;
                picked.push(i);
            }
        }
    }
    if remaining.iter().any(|&r| r > 0) {
        return Ok(None);
    }
    let sentences = sentences_of(d, &picked);
    let chosen: HashSet<usize> = picked.iter().copied().collect();
    let eligible = (0..d.len())
        .filter(|i| !chosen.contains(i) && !touches(d, *i, &sentences))
        .count();
    Ok((eligible >= train_pool_size).then_some(picked))
}

/// True when no normalized sentence occurs on both sides.
pub fn is_leakage_free(train: &Dataset, test: &Dataset) -> bool {
    let test_sentences = sentences_of(test, &(0..test.len()).collect::<Vec<_>>());
    (0..train.len()).all(|i| !touches(train, i, &test_sentences))
}

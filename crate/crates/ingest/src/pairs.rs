//! Sentence-pair construction from linked bug records.

use std::collections::{HashMap, HashSet};

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use pairshot_core::prompting::Task;
use pairshot_core::{rng, Dataset, DatasetKind, LabeledExample, SentencePair};

use crate::bugzilla::BugRecord;
use crate::error::{IngestError, Result};

/// Counts from one pair-building pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairReport {
    pub emitted: usize,
    /// Links whose target is not among the records.
    pub unresolved_targets: usize,
    /// Pairs dropped because a side was empty after trimming.
    pub empty_text: usize,
}

fn linked_pairs(
    records: &[BugRecord],
    label: &str,
    keep: impl Fn(&BugRecord) -> bool,
    targets: impl Fn(&BugRecord) -> &[u64],
) -> (Vec<LabeledExample>, PairReport) {
    let by_id: HashMap<u64, &BugRecord> = records.iter().map(|r| (r.id, r)).collect();
    let mut report = PairReport::default();
    let mut out = Vec::new();
    for r in records.iter().filter(|r| keep(r)) {
        for t in targets(r) {
            let Some(target) = by_id.get(t) else {
                report.unresolved_targets += 1;
                log::info!("bug {}: link target {t} is outside the fetched records", r.id);
                continue;
            };
            let (u, v) = (r.summary.trim(), target.summary.trim());
            if u.is_empty() || v.is_empty() {
                report.empty_text += 1;
                continue;
            }
            out.push(LabeledExample::new(SentencePair::new(u, v), label));
            report.emitted += 1;
        }
    }
    (out, report)
}

/// (summary, duplicate-target summary) for every DUPLICATE-resolved bug.
pub fn build_duplicate_pairs(records: &[BugRecord]) -> (Vec<LabeledExample>, PairReport) {
    linked_pairs(records, "Duplicate", |r| r.resolution == "DUPLICATE", |r| &r.dupe_of)
}

/// (u, v) where u depends on v.
pub fn build_dependency_pairs(records: &[BugRecord]) -> (Vec<LabeledExample>, PairReport) {
    linked_pairs(records, "Entailment", |_| true, |r| &r.depends_on)
}

fn unordered(a: u64, b: u64) -> (u64, u64) {
    (a.min(b), a.max(b))
}

/// Every duplicate and dependency link as an unordered id pair.
pub fn link_set(records: &[BugRecord]) -> HashSet<(u64, u64)> {
    records
        .iter()
        .flat_map(|r| r.dupe_of.iter().chain(&r.depends_on).map(move |&t| unordered(r.id, t)))
        .collect()
}

/// The `k`-th unordered pair (i < j) of `0..n` in lexicographic order.
fn triangle_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
        i += 1;
    }
}

/// `n` distinct unordered pairs of items, drawn uniformly from those not in
/// `exclude`, labeled `label`. Items with empty text are ignored.
pub fn sample_neutral_pairs(
    items: &[(u64, String)],
    n: usize,
    seed: u64,
    exclude: &HashSet<(u64, u64)>,
    label: &str,
) -> Result<Vec<LabeledExample>> {
    let mut seen_ids = HashSet::new();
    let items: Vec<&(u64, String)> = items
        .iter()
        .filter(|(id, text)| !text.trim().is_empty() && seen_ids.insert(*id))
        .collect();
    let m = items.len();
    let total = m * m.saturating_sub(1) / 2;
    let ids: HashSet<u64> = items.iter().map(|(id, _)| *id).collect();
    let blocked = exclude
        .iter()
        .filter(|(a, b)| a != b && ids.contains(a) && ids.contains(b))
        .count();
    let available = total - blocked;
    if n > available {
        return Err(IngestError::InfeasibleNeutral {
            requested: n,
            available,
        });
    }
    let allowed = |i: usize, j: usize| !exclude.contains(&unordered(items[i].0, items[j].0));
    let mut r = rng::seeded(seed);
    let picks: Vec<(usize, usize)> = if n * 2 >= available || total <= 1 << 16 {
        let all: Vec<(usize, usize)> = (0..total)
            .map(|k| triangle_pair(k, m))
            .filter(|&(i, j)| allowed(i, j))
            .collect();
        index::sample(&mut r, all.len(), n)
            .into_iter()
            .map(|k| all[k])
            .collect()
    } else {
        let mut chosen = HashSet::new();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let (i, j) = triangle_pair(r.random_range(0..total), m);
            if allowed(i, j) && chosen.insert((i, j)) {
                out.push((i, j));
            }
        }
        out
    };
    Ok(picks
        .into_iter()
        .map(|(i, j)| LabeledExample::new(SentencePair::new(items[i].1.trim(), items[j].1.trim()), label))
        .collect())
}

/// `n` neutral pairs among open (blank-resolution) bugs, none of which is a
/// linked pair.
pub fn build_neutral_pairs(records: &[BugRecord], n: usize, seed: u64, label: &str) -> Result<Vec<LabeledExample>> {
    let open: Vec<(u64, String)> = records
        .iter()
        .filter(|r| r.is_open())
        .map(|r| (r.id, r.summary.clone()))
        .collect();
    sample_neutral_pairs(&open, n, seed, &link_set(records), label)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub task_id: String,
    pub positives: PairReport,
    pub neutrals: usize,
    /// Neutral pairs per positive pair.
    pub neutral_ratio: f64,
    pub seed: u64,
}

/// Positive pairs for `task` plus `round(neutral_ratio * positives)`
/// neutral pairs.
pub fn bugzilla_dataset(
    records: &[BugRecord],
    task: Task,
    neutral_ratio: f64,
    seed: u64,
) -> Result<(Dataset, AssemblyReport)> {
    let (positives, report) = match task {
        Task::BugzillaDuplicate => build_duplicate_pairs(records),
        Task::BugzillaEntailment => build_dependency_pairs(records),
        other => {
            return Err(IngestError::Core(pairshot_core::Error::UnknownTask(format!(
                "{} is not a Bugzilla task",
                other.id()
            ))))
        }
    };
    let n_neutral = (neutral_ratio * positives.len() as f64).round() as usize;
    let mut examples = positives;
    examples.extend(build_neutral_pairs(records, n_neutral, seed, task.neutral_label())?);
    let ds = Dataset::new(examples, task.label_set(), DatasetKind::Train)?;
    Ok((
        ds,
        AssemblyReport {
            task_id: task.id().into(),
            positives: report,
            neutrals: n_neutral,
            neutral_ratio,
            seed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bug(id: u64, summary: &str, resolution: &str, dupe: &[u64], deps: &[u64]) -> BugRecord {
        BugRecord {
            id,
            summary: summary.into(),
            description: String::new(),
            creation_time: "2020-05-05T00:00:00Z".parse().unwrap(),
            resolution: resolution.into(),
            dupe_of: dupe.to_vec(),
            depends_on: deps.to_vec(),
        }
    }

    #[test]
    fn duplicate_links_and_skips() {
        let recs = vec![
            bug(1, "a", "DUPLICATE", &[2], &[]),
            bug(2, "b", "", &[], &[]),
            bug(3, "c", "DUPLICATE", &[99], &[]),
            bug(4, "  ", "DUPLICATE", &[2], &[]),
        ];
        let (pairs, rep) = build_duplicate_pairs(&recs);
        assert_eq!(
            pairs,
            vec![LabeledExample::new(SentencePair::new("a", "b"), "Duplicate")]
        );
        assert_eq!(
            rep,
            PairReport {
                emitted: 1,
                unresolved_targets: 1,
                empty_text: 1
            }
        );
    }

    #[test]
    fn dependency_direction_and_cycles() {
        let recs = vec![bug(1, "A", "", &[], &[2]), bug(2, "B", "", &[], &[1])];
        let (pairs, _) = build_dependency_pairs(&recs);
        assert_eq!(
            pairs,
            vec![
                LabeledExample::new(SentencePair::new("A", "B"), "Entailment"),
                LabeledExample::new(SentencePair::new("B", "A"), "Entailment"),
            ]
        );
        assert!(build_dependency_pairs(&[bug(5, "x", "", &[], &[])]).0.is_empty());
    }

    #[test]
    fn neutral_edge_cases() {
        let two = vec![bug(1, "a", "", &[], &[]), bug(2, "b", "", &[], &[])];
        let one = build_neutral_pairs(&two, 1, 0, "Neutral").unwrap();
        assert_eq!(one, vec![LabeledExample::new(SentencePair::new("a", "b"), "Neutral")]);
        assert!(build_neutral_pairs(&two, 0, 0, "Neutral").unwrap().is_empty());
        assert!(matches!(
            build_neutral_pairs(&two, 2, 0, "Neutral"),
            Err(IngestError::InfeasibleNeutral {
                requested: 2,
                available: 1
            })
        ));
    }

    #[test]
    fn ten_records_twenty_distinct_pairs() {
        let recs: Vec<BugRecord> = (0..10).map(|i| bug(i, &format!("s{i}"), "", &[], &[])).collect();
        let pairs = build_neutral_pairs(&recs, 20, 3, "Neutral").unwrap();
        let distinct: HashSet<(String, String)> = pairs.iter().map(|p| (p.pair.u.clone(), p.pair.v.clone())).collect();
        assert_eq!(distinct.len(), 20);
        assert!(pairs.iter().all(|p| p.pair.u != p.pair.v));
        assert_eq!(pairs, build_neutral_pairs(&recs, 20, 3, "Neutral").unwrap());
    }

    #[test]
    fn linked_pairs_are_never_neutral() {
        let recs = vec![
            bug(1, "a", "", &[], &[2]),
            bug(2, "b", "", &[], &[]),
            bug(3, "c", "", &[], &[]),
        ];
        let pairs = build_neutral_pairs(&recs, 2, 1, "Neutral").unwrap();
        assert!(pairs.iter().all(|p| !(p.pair.u == "a" && p.pair.v == "b")));
        assert!(build_neutral_pairs(&recs, 3, 1, "Neutral").is_err());
    }
}

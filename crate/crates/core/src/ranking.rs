//! Rank and nearest-neighbour contract shared by both embedding backends.
//!
//! Scores are "lower is closer". Ties are broken by the term's lexicographic
//! order, so rank and nearest are total and deterministic.

use std::cmp::Ordering;

use thiserror::Error;

use crate::taxcore::Term;

/// A term with no vector in the queried model.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("no representation for \"{0}\"")]
pub struct Missing(pub Term);

/// Adding `0.0` folds `-0.0` into `0.0` so signed zeros tie.
fn closer(a: (f64, &Term), b: (f64, &Term)) -> Ordering {
    (a.0 + 0.0).total_cmp(&(b.0 + 0.0)).then_with(|| a.1.cmp(b.1))
}

/// 1-based position of `terms[target]` among all terms except `terms[query]`,
/// ordered by `score(i)`.
pub fn rank_by<F>(terms: &[Term], query: usize, target: usize, mut score: F) -> usize
where
    F: FnMut(usize) -> f64,
{
    debug_assert_ne!(query, target);
    let key = (score(target), &terms[target]);
    1 + (0..terms.len())
        .filter(|&i| i != query && i != target)
        .filter(|&i| closer((score(i), &terms[i]), key) == Ordering::Less)
        .count()
}

/// The `k` closest of `candidates` (indices into `terms`), skipping `query`.
pub fn nearest_by<I, F>(terms: &[Term], candidates: I, query: usize, k: usize, mut score: F) -> Vec<(Term, f64)>
where
    I: IntoIterator<Item = usize>,
    F: FnMut(usize) -> f64,
{
    let mut scored: Vec<(f64, usize)> = candidates
        .into_iter()
        .filter(|&c| c != query)
        .map(|c| (score(c), c))
        .collect();
    scored.sort_by(|a, b| closer((a.0, &terms[a.1]), (b.0, &terms[b.1])));
    scored.dedup_by_key(|s| s.1);
    scored
        .into_iter()
        .take(k)
        .map(|(s, i)| (terms[i].clone(), s))
        .collect()
}

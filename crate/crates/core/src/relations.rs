//! Noisy IS-A candidate ingestion and cleaning into a training set.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::taxcore::{Term, TaxonomyError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelationError {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    MalformedLine { line: usize, found: usize },
    #[error("line {line}: frequency {value:?} is not a positive integer")]
    BadFrequency { line: usize, value: String },
    #[error("line {line}: {source}")]
    BadTerm { line: usize, source: TaxonomyError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTriple {
    pub hyponym: Term,
    pub hypernym: Term,
    pub frequency: u64,
}

/// Candidate pairs with their aggregated extraction counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationSet {
    pairs: BTreeMap<(Term, Term), u64>,
}

impl RelationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `frequency` to the pair's count. Zero frequencies are ignored.
    pub fn add(&mut self, hyponym: Term, hypernym: Term, frequency: u64) {
        if frequency > 0 {
            *self.pairs.entry((hyponym, hypernym)).or_insert(0) += frequency;
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn frequency(&self, hyponym: &Term, hypernym: &Term) -> Option<u64> {
        self.pairs.get(&(hyponym.clone(), hypernym.clone())).copied()
    }

    pub fn total_frequency(&self) -> u64 {
        self.pairs.values().sum()
    }

    /// Triples in (hyponym, hypernym) order.
    pub fn triples(&self) -> impl Iterator<Item = RelationTriple> + '_ {
        self.pairs.iter().map(|((h, g), &f)| RelationTriple {
            hyponym: h.clone(),
            hypernym: g.clone(),
            frequency: f,
        })
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Term, &Term)> {
        self.pairs.keys().map(|(h, g)| (h, g))
    }

    pub fn terms(&self) -> BTreeSet<Term> {
        self.pairs
            .keys()
            .flat_map(|(h, g)| [h.clone(), g.clone()])
            .collect()
    }

    pub fn is_antisymmetric_irreflexive(&self) -> bool {
        self.pairs
            .keys()
            .all(|(h, g)| h != g && !self.pairs.contains_key(&(g.clone(), h.clone())))
    }

    /// Applies the cleaning rules: vocabulary restriction, frequency cutoff,
    /// no reflexive pairs, and only the more frequent direction of a
    /// symmetric pair (ties keep the lexicographically smaller pair).
    pub fn clean(&self, vocab: &BTreeSet<Term>, min_freq: u64) -> RelationSet {
        let filtered: BTreeMap<(Term, Term), u64> = self
            .pairs
            .iter()
            .filter(|((h, g), &f)| {
                f >= min_freq && h != g && vocab.contains(h) && vocab.contains(g)
            })
            .map(|(k, &f)| (k.clone(), f))
            .collect();
        RelationSet {
            pairs: resolve_symmetric(filtered),
        }
    }

    /// Unions two cleaned sets, summing colliding pairs and resolving
    /// cross-set symmetric conflicts by per-direction totals.
    pub fn merge(&self, other: &RelationSet) -> RelationSet {
        let mut summed = self.pairs.clone();
        for (k, &f) in &other.pairs {
            *summed.entry(k.clone()).or_insert(0) += f;
        }
        summed.retain(|(h, g), _| h != g);
        RelationSet {
            pairs: resolve_symmetric(summed),
        }
    }
}

fn resolve_symmetric(pairs: BTreeMap<(Term, Term), u64>) -> BTreeMap<(Term, Term), u64> {
    let mut out = BTreeMap::new();
    for ((h, g), &f) in &pairs {
        let keep = match pairs.get(&(g.clone(), h.clone())) {
            None => true,
            // (h, g) < (g, h) exactly when h < g.
            Some(&rev) => f > rev || (f == rev && h < g),
        };
        if keep {
            out.insert((h.clone(), g.clone()), f);
        }
    }
    out
}

/// Parses `<hyponym>\t<hypernym>\t<frequency>` lines, aggregating duplicates.
pub fn parse_relations<S: AsRef<str>>(lines: &[S]) -> Result<RelationSet, RelationError> {
    let mut set = RelationSet::new();
    for (i, line) in lines.iter().enumerate() {
        let line = line.as_ref();
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(RelationError::MalformedLine {
                line: lineno,
                found: fields.len(),
            });
        }
        let term = |s: &str| Term::new(s).map_err(|source| RelationError::BadTerm { line: lineno, source });
        let frequency = match fields[2].trim().parse::<u64>() {
            Ok(f) if f > 0 => f,
            _ => {
                return Err(RelationError::BadFrequency {
                    line: lineno,
                    value: fields[2].to_string(),
                })
            }
        };
        set.add(term(fields[0])?, term(fields[1])?, frequency);
    }
    Ok(set)
}

pub fn serialize_relations(r: &RelationSet) -> Vec<String> {
    r.triples()
        .map(|t| format!("{}\t{}\t{}", t.hyponym, t.hypernym, t.frequency))
        .collect()
}

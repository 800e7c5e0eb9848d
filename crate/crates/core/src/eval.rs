//! Edge-level evaluation against a gold taxonomy and McNemar's test between
//! two systems.

use thiserror::Error;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use crate::taxcore::{Edge, StructureReport, Taxonomy, Term};

/// Chi-square critical value, one degree of freedom, α = 0.05.
pub const CHI2_CRITICAL_05: f64 = 3.841;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("gold taxonomy has no edges")]
    EmptyGold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub system_edges: usize,
    pub gold_edges: usize,
    pub correct_edges: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn edge_f1(system: &Taxonomy, gold: &Taxonomy) -> Result<EvalReport, EvalError> {
    if gold.edge_count() == 0 {
        return Err(EvalError::EmptyGold);
    }
    let correct = system.edges().intersection(gold.edges()).count();
    let precision = ratio(correct, system.edge_count());
    let recall = ratio(correct, gold.edge_count());
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalReport {
        precision,
        recall,
        f1,
        system_edges: system.edge_count(),
        gold_edges: gold.edge_count(),
        correct_edges: correct,
    })
}

pub fn structure_stats(t: &Taxonomy) -> StructureReport {
    t.structure()
}

/// Guesses the root of an edge list: the parentless term with the most
/// descendants, ties lexicographic.
pub fn infer_root(edges: &[Edge]) -> Option<Term> {
    let mut children: BTreeMap<&Term, Vec<&Term>> = BTreeMap::new();
    let mut has_parent: BTreeSet<&Term> = BTreeSet::new();
    for (c, p) in edges {
        children.entry(p).or_default().push(c);
        has_parent.insert(c);
    }
    let descendants = |start: &Term| {
        let mut seen: BTreeSet<&Term> = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &c in children.get(v).into_iter().flatten() {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        seen.len()
    };
    children
        .keys()
        .filter(|t| !has_parent.contains(*t))
        .map(|t| (Reverse(descendants(t)), *t))
        .min()
        .map(|(_, t)| t.clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemarResult {
    /// Gold edges found by A only.
    pub b: usize,
    /// Gold edges found by B only.
    pub c: usize,
    pub statistic: f64,
    pub significant_at_05: bool,
}

impl McNemarResult {
    /// Continuity-corrected statistic `(|b − c| − 1)² / (b + c)`.
    pub fn from_counts(b: usize, c: usize) -> Self {
        let statistic = if b + c == 0 {
            0.0
        } else {
            let diff = (b as f64 - c as f64).abs() - 1.0;
            diff * diff / (b + c) as f64
        };
        McNemarResult {
            b,
            c,
            statistic,
            significant_at_05: statistic > CHI2_CRITICAL_05,
        }
    }
}

/// Pairs the two systems on each gold edge (found or not).
pub fn mcnemar(system_a: &Taxonomy, system_b: &Taxonomy, gold: &Taxonomy) -> McNemarResult {
    let (mut b, mut c) = (0, 0);
    for edge in gold.edges() {
        match (system_a.edges().contains(edge), system_b.edges().contains(edge)) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    McNemarResult::from_counts(b, c)
}

/// One evaluated system, for the text and TSV reports.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    pub scores: EvalReport,
    pub structure: StructureReport,
}

pub fn report_tsv(rows: &[ReportRow], comparison: Option<(&str, &str, McNemarResult)>) -> Vec<String> {
    let mut out = vec![
        "system\tprecision\trecall\tf1\tsystem_edges\tgold_edges\tcorrect_edges\torphans\tcomponents".to_string(),
    ];
    for r in rows {
        let s = &r.scores;
        out.push(format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}\t{}",
            r.name,
            s.precision,
            s.recall,
            s.f1,
            s.system_edges,
            s.gold_edges,
            s.correct_edges,
            r.structure.orphan_count,
            r.structure.component_count
        ));
    }
    if let Some((a, b, m)) = comparison {
        out.push(format!(
            "#mcnemar\t{a}\t{b}\tb={}\tc={}\tstatistic={:.6}\tsignificant_at_05={}",
            m.b, m.c, m.statistic, m.significant_at_05
        ));
    }
    out
}

pub fn report_text(rows: &[ReportRow], comparison: Option<(&str, &str, McNemarResult)>) -> Vec<String> {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(6).max(6);
    let mut out = vec![format!(
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}  {:>7}  {:>10}",
        "system", "precision", "recall", "F1", "edges", "correct", "orphans"
    )];
    for r in rows {
        out.push(format!(
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}  {:>7}  {:>10}",
            r.name,
            r.scores.precision,
            r.scores.recall,
            r.scores.f1,
            r.scores.system_edges,
            r.scores.correct_edges,
            r.structure.orphan_count
        ));
    }
    if let Some((a, b, m)) = comparison {
        out.push(format!(
            "McNemar {a} vs {b}: b={} c={} chi2={:.4} {}",
            m.b,
            m.c,
            m.statistic,
            if m.significant_at_05 { "significant (p < 0.05)" } else { "not significant" }
        ));
    }
    out
}

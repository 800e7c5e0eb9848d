//! Taxonomy refinement: outlier relocation, orphan attachment, compound
//! attachment and final cycle removal, driven by an embedding backend.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::euclid::EuclideanModel;
use crate::hyperbolic::PoincareModel;
use crate::ranking::Missing;
use crate::taxcore::{Edge, Taxonomy, Term};

#[derive(Debug, Error, PartialEq)]
pub enum RefineError {
    #[error("no taxonomy term has a representation in the embedding model")]
    NoSharedVocabulary,
}

/// How a backend turns an edge into a rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// Rank of the parent among all terms by distance to the child.
    Parent,
    /// Rank of the child's closest co-hyponym among all terms by similarity.
    CoHyponym,
}

/// The queries refinement needs from an embedding model.
pub trait Backend {
    fn mode(&self) -> RankMode;
    fn contains(&self, t: &Term) -> bool;
    /// 1-based rank of `y` relative to `x` (1 = closest).
    fn rank(&self, x: &Term, y: &Term) -> Result<usize, Missing>;
    /// Closest represented candidate to `x`, ties lexicographic.
    fn closest(&self, x: &Term, candidates: &BTreeSet<Term>) -> Result<Option<Term>, Missing>;
}

impl Backend for PoincareModel {
    fn mode(&self) -> RankMode {
        RankMode::Parent
    }

    fn contains(&self, t: &Term) -> bool {
        PoincareModel::contains(self, t)
    }

    fn rank(&self, x: &Term, y: &Term) -> Result<usize, Missing> {
        PoincareModel::rank(self, x, y)
    }

    fn closest(&self, x: &Term, candidates: &BTreeSet<Term>) -> Result<Option<Term>, Missing> {
        Ok(self.nearest(x, candidates, 1)?.into_iter().next().map(|(t, _)| t))
    }
}

impl Backend for EuclideanModel {
    fn mode(&self) -> RankMode {
        RankMode::CoHyponym
    }

    fn contains(&self, t: &Term) -> bool {
        EuclideanModel::contains(self, t)
    }

    fn rank(&self, x: &Term, y: &Term) -> Result<usize, Missing> {
        self.sim_rank(x, y)
    }

    fn closest(&self, x: &Term, candidates: &BTreeSet<Term>) -> Result<Option<Term>, Missing> {
        Ok(self.most_similar(x, candidates, 1)?.into_iter().next().map(|(t, _)| t))
    }
}

/// Ranks stored per edge before any removal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankTable {
    pub entries: BTreeMap<Edge, usize>,
    /// Edges that could not be ranked (unrepresented endpoint, no co-hyponym, self-loop).
    pub skipped: Vec<Edge>,
}

impl RankTable {
    /// Exact arithmetic mean of the stored ranks; `None` when nothing was ranked.
    pub fn mean_rank(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        let sum: u128 = self.entries.values().map(|&r| r as u128).sum();
        Some(sum as f64 / self.entries.len() as f64)
    }
}

pub fn build_rank_table<B: Backend + ?Sized>(t: &Taxonomy, backend: &B) -> Result<RankTable, RefineError> {
    if !t.vocabulary().iter().any(|v| backend.contains(v)) {
        return Err(RefineError::NoSharedVocabulary);
    }
    let children = t.children_map();
    let mut table = RankTable::default();
    for edge @ (child, parent) in t.edges() {
        let rank = match backend.mode() {
            _ if child == parent => None,
            RankMode::Parent => backend.rank(child, parent).ok(),
            RankMode::CoHyponym => {
                let siblings: BTreeSet<Term> = children[parent]
                    .iter()
                    .copied()
                    .filter(|c| *c != child)
                    .cloned()
                    .collect();
                backend
                    .closest(child, &siblings)
                    .ok()
                    .flatten()
                    .and_then(|sib| backend.rank(child, &sib).ok())
            }
        };
        match rank {
            Some(r) => {
                table.entries.insert(edge.clone(), r);
            }
            None => table.skipped.push(edge.clone()),
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Sanitize,
    Relocate,
    Orphans,
    Compounds,
    Cycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Remove,
    Attach,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Sanitize => "sanitize",
            Stage::Relocate => "relocate",
            Stage::Orphans => "orphans",
            Stage::Compounds => "compounds",
            Stage::Cycles => "cycles",
        })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Remove => "remove",
            Action::Attach => "attach",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub stage: Stage,
    pub action: Action,
    pub child: Term,
    pub parent: Term,
}

/// Every edge mutation made by refinement, in pipeline order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefinementLog {
    pub entries: Vec<LogEntry>,
}

impl RefinementLog {
    fn push(&mut self, stage: Stage, action: Action, (child, parent): Edge) {
        self.entries.push(LogEntry {
            stage,
            action,
            child,
            parent,
        });
    }

    fn extend(&mut self, other: RefinementLog) {
        self.entries.extend(other.entries);
    }

    fn select(&self, stage: Stage, action: Action) -> Vec<Edge> {
        self.entries
            .iter()
            .filter(|e| e.stage == stage && e.action == action)
            .map(|e| (e.child.clone(), e.parent.clone()))
            .collect()
    }

    pub fn removed_edges(&self) -> Vec<Edge> {
        self.select(Stage::Relocate, Action::Remove)
    }

    pub fn relocated_components(&self) -> Vec<Edge> {
        self.select(Stage::Relocate, Action::Attach)
    }

    pub fn attached_orphans(&self) -> Vec<Edge> {
        self.select(Stage::Orphans, Action::Attach)
    }

    pub fn attached_compounds(&self) -> Vec<Edge> {
        self.select(Stage::Compounds, Action::Attach)
    }

    pub fn cycle_edges_removed(&self) -> Vec<Edge> {
        self.select(Stage::Cycles, Action::Remove)
    }

    /// `stage\taction\tchild\tparent` rows.
    pub fn to_tsv(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\t{}", e.stage, e.action, e.child, e.parent))
            .collect()
    }
}

/// Removes every ranked edge above `threshold`, then hangs each detached
/// component's top term under its closest term in the root component (or
/// under the root when it has no representation).
pub fn relocate_outliers<B: Backend + ?Sized>(
    t: &Taxonomy,
    table: &RankTable,
    backend: &B,
    threshold: Option<f64>,
) -> (Taxonomy, RefinementLog) {
    let mut out = t.clone();
    let mut log = RefinementLog::default();
    if let Some(limit) = threshold {
        for (edge, &rank) in &table.entries {
            if rank as f64 > limit && out.remove_edge(edge) {
                log.push(Stage::Relocate, Action::Remove, edge.clone());
            }
        }
    }

    let components = out.components();
    let root = out.root().clone();
    let Some(root_component) = components.iter().find(|c| c.contains(&root)).cloned() else {
        return (out, log);
    };
    let mut tops: Vec<Term> = components
        .iter()
        .filter(|c| c.len() >= 2 && !c.contains(&root))
        .map(|c| top_term(&out, c))
        .collect();
    tops.sort();

    for top in tops {
        let target = if backend.contains(&top) {
            backend.closest(&top, &root_component).ok().flatten()
        } else {
            None
        };
        let edge = (top, target.unwrap_or_else(|| root.clone()));
        out.insert_edge(edge.0.clone(), edge.1.clone());
        log.push(Stage::Relocate, Action::Attach, edge);
    }
    (out, log)
}

/// The member with no parent and the most descendants, ties lexicographic.
/// Falls back to the smallest member when every member has a parent.
fn top_term(t: &Taxonomy, component: &BTreeSet<Term>) -> Term {
    let children = t.children_map();
    let descendants = |start: &Term| {
        let mut seen: BTreeSet<&Term> = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &c in children.get(v).map(Vec::as_slice).unwrap_or_default() {
                if seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        seen.len()
    };
    component
        .iter()
        .filter(|m| t.parents_of(m).next().is_none())
        .map(|m| (std::cmp::Reverse(descendants(m)), m))
        .min()
        .map(|(_, m)| m.clone())
        .unwrap_or_else(|| component.first().expect("non-empty component").clone())
}

/// Terms that may act as parents for attachment: every edge endpoint plus the root.
fn attachable(t: &Taxonomy) -> BTreeSet<Term> {
    let mut set = t.connected_terms();
    set.insert(t.root().clone());
    set
}

/// Hangs orphans under their closest connected term.
///
/// With [`RankMode::Parent`] the edge is added only when its rank does not
/// exceed `threshold`. With [`RankMode::CoHyponym`] the orphan goes under the
/// parent of its most similar connected term.
pub fn attach_orphans<B: Backend + ?Sized>(
    t: &Taxonomy,
    backend: &B,
    threshold: Option<f64>,
) -> (Taxonomy, RefinementLog) {
    let mut out = t.clone();
    let mut log = RefinementLog::default();
    let candidates = attachable(t);
    for orphan in t.orphans() {
        let Ok(Some(closest)) = backend.closest(&orphan, &candidates) else {
            continue;
        };
        let parent = match backend.mode() {
            RankMode::Parent => {
                let rank = backend.rank(&orphan, &closest).ok();
                match (rank, threshold) {
                    (Some(r), Some(limit)) if r as f64 <= limit => Some(closest),
                    _ => None,
                }
            }
            RankMode::CoHyponym => t.parents_of(&closest).next().cloned(),
        };
        if let Some(parent) = parent {
            out.insert_edge(orphan.clone(), parent.clone());
            log.push(Stage::Orphans, Action::Attach, (orphan, parent));
        }
    }
    (out, log)
}

/// Start index of the rightmost token-aligned occurrence of `needle` in `hay`.
fn token_match(hay: &[&str], needle: &[&str]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (0..=hay.len() - needle.len())
        .rev()
        .find(|&i| hay[i..i + needle.len()] == *needle)
}

/// Hangs each remaining orphan under the longest connected term that occurs
/// in it on token boundaries (ties: rightmost occurrence, then lexicographic).
pub fn attach_compounds(t: &Taxonomy) -> (Taxonomy, RefinementLog) {
    let mut out = t.clone();
    let mut log = RefinementLog::default();
    let candidates = attachable(t);
    for orphan in t.orphans() {
        let tokens: Vec<&str> = orphan.tokens().collect();
        let best = candidates
            .iter()
            .filter(|c| **c != orphan)
            .filter_map(|c| {
                let needle: Vec<&str> = c.tokens().collect();
                token_match(&tokens, &needle).map(|pos| (c.as_str().len(), pos, c))
            })
            .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.cmp(a.2)));
        if let Some((_, _, parent)) = best {
            out.insert_edge(orphan.clone(), parent.clone());
            log.push(Stage::Compounds, Action::Attach, (orphan.clone(), parent.clone()));
        }
    }
    (out, log)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RefineOptions {
    pub seed: u64,
    /// Replaces the mean rank as removal and attachment threshold.
    pub threshold_override: Option<f64>,
}

/// Full refinement: rank table, relocation, orphan and compound attachment,
/// then cycle removal. Root-as-child edges are dropped first.
pub fn refine<B: Backend + ?Sized>(
    t: &Taxonomy,
    backend: &B,
    options: RefineOptions,
) -> Result<(Taxonomy, RefinementLog), RefineError> {
    let mut log = RefinementLog::default();
    let sanitized = t.sanitize_root();
    for edge in t.edges().difference(sanitized.edges()) {
        log.push(Stage::Sanitize, Action::Remove, edge.clone());
    }

    let table = build_rank_table(&sanitized, backend)?;
    let threshold = options.threshold_override.or(table.mean_rank());

    let (relocated, l) = relocate_outliers(&sanitized, &table, backend, threshold);
    log.extend(l);
    let (with_orphans, l) = attach_orphans(&relocated, backend, threshold);
    log.extend(l);
    let (with_compounds, l) = attach_compounds(&with_orphans);
    log.extend(l);
    let (acyclic, removed) = with_compounds.break_cycles(options.seed);
    for edge in removed {
        log.push(Stage::Cycles, Action::Remove, edge);
    }
    Ok((acyclic, log))
}

/// Connects every orphan directly to the root.
pub fn root_baseline(t: &Taxonomy) -> Taxonomy {
    let mut out = t.clone();
    for orphan in t.orphans() {
        out.insert_edge(orphan, t.root().clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::PoincarePoint;

    fn t(s: &str) -> Term {
        Term::new(s).unwrap()
    }

    fn tax(root: &str, edges: &[(&str, &str)], extra: &[&str]) -> Taxonomy {
        Taxonomy::from_edges(t(root), edges.iter().map(|(c, p)| (t(c), t(p)))).with_terms(extra.iter().map(|s| t(s)))
    }

    fn poincare(points: &[(&str, [f64; 2])]) -> PoincareModel {
        PoincareModel::from_points(
            2,
            points.iter().map(|(n, c)| (t(n), PoincarePoint::new(c.to_vec()).unwrap())),
        )
        .unwrap()
    }

    /// Backend with fixed ranks per pair; closest is the lexicographically
    /// smallest candidate unless overridden.
    struct Scripted {
        ranks: BTreeMap<(Term, Term), usize>,
        default_rank: usize,
        known: BTreeSet<Term>,
        closest: BTreeMap<Term, Term>,
    }

    impl Backend for Scripted {
        fn mode(&self) -> RankMode {
            RankMode::Parent
        }
        fn contains(&self, x: &Term) -> bool {
            self.known.contains(x)
        }
        fn rank(&self, x: &Term, y: &Term) -> Result<usize, Missing> {
            if !self.known.contains(x) {
                return Err(Missing(x.clone()));
            }
            Ok(*self.ranks.get(&(x.clone(), y.clone())).unwrap_or(&self.default_rank))
        }
        fn closest(&self, x: &Term, c: &BTreeSet<Term>) -> Result<Option<Term>, Missing> {
            if !self.known.contains(x) {
                return Err(Missing(x.clone()));
            }
            if let Some(p) = self.closest.get(x) {
                if c.contains(p) {
                    return Ok(Some(p.clone()));
                }
            }
            Ok(c.iter().find(|y| *y != x && self.known.contains(*y)).cloned())
        }
    }

    fn scripted(terms: &[&str], ranks: &[((&str, &str), usize)]) -> Scripted {
        Scripted {
            ranks: ranks.iter().map(|((a, b), r)| ((t(a), t(b)), *r)).collect(),
            default_rank: 1,
            known: terms.iter().map(|s| t(s)).collect(),
            closest: BTreeMap::new(),
        }
    }

    #[test]
    fn mean_rank_arithmetic() {
        let mut rt = RankTable::default();
        rt.entries.insert((t("a"), t("r")), 4);
        assert_eq!(rt.mean_rank(), Some(4.0));
        for (i, r) in [1, 3, 8].into_iter().enumerate() {
            rt.entries.insert((t(&format!("x{i}")), t("r")), r);
        }
        rt.entries.remove(&(t("a"), t("r")));
        assert_eq!(rt.mean_rank(), Some(4.0));
        assert_eq!(RankTable::default().mean_rank(), None);
    }

    #[test]
    fn rank_table_matches_model() {
        let m = poincare(&[("r", [0.0, 0.0]), ("a", [0.5, 0.0]), ("b", [0.0, 0.9]), ("c", [0.5, 0.1])]);
        let tx = tax("r", &[("a", "r"), ("b", "r"), ("c", "a"), ("z", "r")], &[]);
        let rt = build_rank_table(&tx, &m).unwrap();
        assert_eq!(rt.skipped, vec![(t("z"), t("r"))]);
        for ((c, p), r) in &rt.entries {
            // brute force: sort every other term by distance
            let mut others: Vec<(f64, &Term)> = m
                .terms()
                .iter()
                .filter(|z| *z != c)
                .map(|z| (m.distance(c, z).unwrap(), z))
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
            assert_eq!(others.iter().position(|(_, z)| *z == p).unwrap() + 1, *r);
        }
    }

    #[test]
    fn rank_table_needs_shared_vocabulary() {
        let m = poincare(&[("x", [0.0, 0.0]), ("y", [0.1, 0.0])]);
        assert_eq!(
            build_rank_table(&tax("r", &[("a", "r")], &[]), &m),
            Err(RefineError::NoSharedVocabulary)
        );
    }

    #[test]
    fn equal_ranks_remove_nothing() {
        let tx = tax("r", &[("a", "r"), ("b", "r"), ("c", "a")], &[]);
        let b = scripted(&["r", "a", "b", "c"], &[]);
        let rt = build_rank_table(&tx, &b).unwrap();
        let (out, log) = relocate_outliers(&tx, &rt, &b, rt.mean_rank());
        assert_eq!(out, tx);
        assert!(log.entries.is_empty());
    }

    #[test]
    fn above_mean_edge_removed() {
        let tx = tax("r", &[("a", "r"), ("b", "r")], &[]);
        let b = scripted(&["r", "a", "b"], &[(("a", "r"), 1), (("b", "r"), 10)]);
        let rt = build_rank_table(&tx, &b).unwrap();
        assert_eq!(rt.mean_rank(), Some(5.5));
        let (out, log) = relocate_outliers(&tx, &rt, &b, rt.mean_rank());
        assert_eq!(log.removed_edges(), vec![(t("b"), t("r"))]);
        assert!(!out.contains_edge(&t("b"), &t("r")));
        // b is now isolated: left for orphan attachment, not relocated
        assert!(log.relocated_components().is_empty());
    }

    #[test]
    fn detached_chain_reattaches_to_nearest() {
        // c is the root; (b, c) is the outlier edge, {a, b} must be re-hung.
        let m = poincare(&[
            ("c", [0.0, 0.0]),
            ("d", [0.0, 0.5]),
            ("e", [0.0, -0.5]),
            ("b", [0.05, 0.6]),
            ("a", [0.1, 0.7]),
        ]);
        let tx = tax("c", &[("a", "b"), ("b", "c"), ("d", "c"), ("e", "c")], &[]);
        // direct distance check of the nearest candidate in the root component
        let db_d = m.distance(&t("b"), &t("d")).unwrap();
        assert!(db_d < m.distance(&t("b"), &t("c")).unwrap());
        assert!(db_d < m.distance(&t("b"), &t("e")).unwrap());
        let mut rt = RankTable::default();
        rt.entries.insert((t("a"), t("b")), 1);
        rt.entries.insert((t("b"), t("c")), 9);
        rt.entries.insert((t("d"), t("c")), 1);
        rt.entries.insert((t("e"), t("c")), 1);
        let (out, log) = relocate_outliers(&tx, &rt, &m, rt.mean_rank());
        assert_eq!(log.removed_edges(), vec![(t("b"), t("c"))]);
        assert_eq!(log.relocated_components(), vec![(t("b"), t("d"))]);
        assert!(out.contains_edge(&t("a"), &t("b")));
    }

    #[test]
    fn unrepresented_top_goes_to_root() {
        let tx = tax("r", &[("a", "b"), ("x", "r")], &[]);
        let b = scripted(&["r", "x"], &[]);
        let rt = build_rank_table(&tx, &b).unwrap();
        let (out, log) = relocate_outliers(&tx, &rt, &b, rt.mean_rank());
        assert_eq!(log.relocated_components(), vec![(t("b"), t("r"))]);
        assert!(out.contains_edge(&t("b"), &t("r")));
    }

    #[test]
    fn top_term_prefers_most_descendants() {
        // two parentless members: "b" has 2 descendants, "a" has 1
        let tx = tax("r", &[("x", "a"), ("x", "b"), ("y", "b")], &[]);
        let comp = tx.components().into_iter().find(|c| c.contains(&t("x"))).unwrap();
        assert_eq!(top_term(&tx, &comp), t("b"));
    }

    #[test]
    fn orphan_threshold() {
        let tx = tax("r", &[("a", "r")], &["o", "p"]);
        let mut b = scripted(&["r", "a", "o", "p"], &[(("p", "a"), 7)]);
        b.closest.insert(t("o"), t("a"));
        b.closest.insert(t("p"), t("a"));
        let (out, log) = attach_orphans(&tx, &b, Some(2.0));
        assert_eq!(log.attached_orphans(), vec![(t("o"), t("a"))]);
        assert!(out.orphans().contains(&t("p")));
    }

    #[test]
    fn orphans_do_not_chain() {
        let tx = tax("r", &[("a", "r")], &["o1", "o2"]);
        let mut b = scripted(&["r", "a", "o1", "o2"], &[]);
        b.closest.insert(t("o2"), t("o1"));
        let (out, _) = attach_orphans(&tx, &b, Some(1.0));
        assert!(!out.contains_edge(&t("o2"), &t("o1")));
    }

    #[test]
    fn second_language_acquisition_under_linguistics() {
        let m = poincare(&[
            ("humanities", [0.0, 0.0]),
            ("linguistics", [0.4, 0.0]),
            ("semantics", [0.7, 0.1]),
            ("sociology", [-0.4, 0.0]),
            ("second language acquisition", [0.55, -0.1]),
        ]);
        let tx = tax(
            "humanities",
            &[("linguistics", "humanities"), ("semantics", "linguistics"), ("sociology", "humanities")],
            &["second language acquisition"],
        );
        let rt = build_rank_table(&tx, &m).unwrap();
        let (out, log) = attach_orphans(&tx, &m, rt.mean_rank());
        assert_eq!(
            log.attached_orphans(),
            vec![(t("second language acquisition"), t("linguistics"))]
        );
        assert!(out.orphans().is_empty());
    }

    #[test]
    fn wastewater_relocated_under_waste() {
        let m = poincare(&[
            ("environment", [0.0, 0.0]),
            ("water", [0.0, 0.5]),
            ("aquatic environment", [0.05, 0.6]),
            ("waste", [0.5, 0.0]),
            ("pollutant", [0.6, 0.1]),
            ("wastewater", [0.65, -0.05]),
        ]);
        let tx = tax(
            "environment",
            &[
                ("water", "environment"),
                ("aquatic environment", "water"),
                ("waste", "environment"),
                ("pollutant", "waste"),
                ("wastewater", "water"),
            ],
            &[],
        );
        let (out, log) = refine(&tx, &m, RefineOptions::default()).unwrap();
        assert!(log.removed_edges().contains(&(t("wastewater"), t("water"))));
        assert!(out.contains_edge(&t("wastewater"), &t("waste")));
        assert!(!out.contains_edge(&t("wastewater"), &t("water")));
    }

    #[test]
    fn compound_attachment() {
        let tx = tax("food", &[("potatoes", "food")], &["sweet potatoes", "kumquat"]);
        let (out, log) = attach_compounds(&tx);
        assert_eq!(log.attached_compounds(), vec![(t("sweet potatoes"), t("potatoes"))]);
        assert!(out.orphans().contains(&t("kumquat")));
    }

    #[test]
    fn compound_prefers_longest() {
        let tx = tax("food", &[("potato", "food"), ("sweet potato", "potato")], &["sweet potato salad"]);
        // enumerate candidates by hand: "potato" (6 chars), "sweet potato" (12 chars)
        let (out, _) = attach_compounds(&tx);
        assert!(out.contains_edge(&t("sweet potato salad"), &t("sweet potato")));
    }

    #[test]
    fn compound_token_boundaries() {
        let tx = tax("drink", &[("tea", "drink")], &["steam engine", "green tea"]);
        let (out, log) = attach_compounds(&tx);
        assert_eq!(log.attached_compounds(), vec![(t("green tea"), t("tea"))]);
        assert!(out.orphans().contains(&t("steam engine")));
    }

    #[test]
    fn compound_rightmost_then_lexicographic() {
        let tx = tax("r", &[("fish", "r"), ("salad", "r")], &["fish salad"]);
        let (out, _) = attach_compounds(&tx);
        assert!(out.contains_edge(&t("fish salad"), &t("salad")));
        let tx = tax("r", &[("corn", "r"), ("rice", "r")], &["corn rice"]);
        let (out, _) = attach_compounds(&tx);
        assert!(out.contains_edge(&t("corn rice"), &t("rice")));
        assert_eq!(token_match(&["a", "b", "a"], &["a"]), Some(2));
    }

    #[test]
    fn perfect_backend_is_identity() {
        let tx = tax("r", &[("a", "r"), ("b", "r"), ("c", "a"), ("d", "c")], &[]);
        let b = scripted(&["r", "a", "b", "c", "d"], &[]);
        let (out, log) = refine(&tx, &b, RefineOptions::default()).unwrap();
        assert_eq!(out, tx);
        assert!(log.entries.is_empty());
    }

    #[test]
    fn refine_drops_root_child_edges_and_cycles() {
        let tx = tax("r", &[("r", "a"), ("a", "r"), ("b", "c"), ("c", "b")], &[]);
        let b = scripted(&["r", "a", "b", "c"], &[]);
        let (out, log) = refine(&tx, &b, RefineOptions { seed: 4, ..Default::default() }).unwrap();
        assert!(out.is_acyclic());
        assert!(out.edges().iter().all(|(c, _)| c != out.root()));
        assert_eq!(log.entries[0].stage, Stage::Sanitize);
        assert_eq!(out.vocabulary(), tx.vocabulary());
        let stages: Vec<Stage> = log.entries.iter().map(|e| e.stage).collect();
        assert!(stages.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn root_baseline_connects_everything() {
        let tx = tax("r", &[("a", "r")], &["o1", "o2"]);
        let out = root_baseline(&tx);
        assert_eq!(out.edge_count(), 3);
        assert!(out.orphans().is_empty());
        let full = tax("r", &[("a", "r")], &[]);
        assert_eq!(root_baseline(&full), full);
    }

    #[test]
    fn cohyponym_mode_uses_sibling_parent() {
        let lines = [
            "5 2",
            "fruit 1 0",
            "apples 0.9 0.3",
            "pears 0.85 0.35",
            "bananas 0.8 0.4",
            "vegetables -1 0.2",
        ];
        let (m, _) = crate::euclid::load_vectors(&lines, None).unwrap();
        let tx = tax("food", &[("fruit", "food"), ("apples", "fruit"), ("pears", "fruit"), ("vegetables", "food")], &["bananas"]);
        let rt = build_rank_table(&tx, &m).unwrap();
        // apples: closest co-hyponym is pears, which is also its most similar term overall
        assert_eq!(rt.entries[&(t("apples"), t("fruit"))], m.sim_rank(&t("apples"), &t("pears")).unwrap());
        assert_eq!(rt.entries[&(t("apples"), t("fruit"))], 1);
        let (out, log) = attach_orphans(&tx, &m, rt.mean_rank());
        assert_eq!(log.attached_orphans(), vec![(t("bananas"), t("fruit"))]);
        assert!(out.contains_edge(&t("bananas"), &t("fruit")));
    }
}

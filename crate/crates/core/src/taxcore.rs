//! Taxonomy data model, TExEval TSV I/O, structural queries and cycle removal.
//!
//! Edges are stored in child → parent orientation. A [`Taxonomy`] is an
//! immutable value: every operation returns a new taxonomy.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("empty term")]
    EmptyTerm,
    #[error("line {line}: expected at least 3 tab-separated fields, found {found}")]
    MalformedLine { line: usize, found: usize },
    #[error("line {line}: {source}")]
    BadTerm { line: usize, source: Box<TaxonomyError> },
    #[error("edge endpoint {0} is not in the vocabulary")]
    UnknownEndpoint(Term),
}

/// A normalized vocabulary entry: lowercase, single-spaced, non-empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term(String);

impl Term {
    pub fn new(raw: &str) -> Result<Self, TaxonomyError> {
        let normalized = raw
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ");
        if normalized.is_empty() {
            return Err(TaxonomyError::EmptyTerm);
        }
        Ok(Term(normalized))
    }

    /// Builds a term from an embedding-file key, where `_` joins compound words.
    pub fn from_underscored(raw: &str) -> Result<Self, TaxonomyError> {
        Term::new(&raw.replace('_', " "))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Compound form with spaces joined by `_`, as used in embedding files.
    pub fn underscored(&self) -> String {
        self.0.replace(' ', "_")
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ')
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A directed IS-A edge, `child` → `parent`.
pub type Edge = (Term, Term);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    root: Term,
    vocabulary: BTreeSet<Term>,
    edges: BTreeSet<Edge>,
}

/// Counts reported for a taxonomy (orphans, components, edges, removed cycle edges).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StructureReport {
    pub orphan_count: usize,
    pub component_count: usize,
    pub edge_count: usize,
    pub cycle_count_removed: usize,
}

/// Parses the `<id>\t<term>\t<hypernym>` lines of a TExEval file into edges.
///
/// Blank lines and lines starting with `#` are skipped. Identifiers are ignored.
pub fn parse_edges<S: AsRef<str>>(lines: &[S]) -> Result<Vec<Edge>, TaxonomyError> {
    let mut edges = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let line = line.as_ref();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(TaxonomyError::MalformedLine {
                line: i + 1,
                found: fields.len(),
            });
        }
        let term = |s: &str| {
            Term::new(s).map_err(|e| TaxonomyError::BadTerm {
                line: i + 1,
                source: Box::new(e),
            })
        };
        edges.push((term(fields[1])?, term(fields[2])?));
    }
    Ok(edges)
}

pub fn parse_taxonomy<S: AsRef<str>>(lines: &[S], root: Term) -> Result<Taxonomy, TaxonomyError> {
    Ok(Taxonomy::from_edges(root, parse_edges(lines)?))
}

/// Emits edges sorted by (child, parent) with sequential ids from 0.
pub fn serialize_taxonomy(t: &Taxonomy) -> Vec<String> {
    t.edges
        .iter()
        .enumerate()
        .map(|(i, (child, parent))| format!("{i}\t{child}\t{parent}"))
        .collect()
}

/// Reads a term list: one term per line, or `<id>\t<term>`; the last field wins.
pub fn parse_terms<S: AsRef<str>>(lines: &[S]) -> Result<Vec<Term>, TaxonomyError> {
    let mut terms = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let line = line.as_ref();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit('\t').next().unwrap_or(line);
        terms.push(Term::new(field).map_err(|e| TaxonomyError::BadTerm {
            line: i + 1,
            source: Box::new(e),
        })?);
    }
    Ok(terms)
}

impl Taxonomy {
    /// Vocabulary is the edge endpoints plus the root.
    pub fn from_edges(root: Term, edges: impl IntoIterator<Item = Edge>) -> Self {
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        let mut vocabulary: BTreeSet<Term> = edges
            .iter()
            .flat_map(|(c, p)| [c.clone(), p.clone()])
            .collect();
        vocabulary.insert(root.clone());
        Taxonomy {
            root,
            vocabulary,
            edges,
        }
    }

    pub fn new(
        root: Term,
        vocabulary: impl IntoIterator<Item = Term>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, TaxonomyError> {
        let mut vocabulary: BTreeSet<Term> = vocabulary.into_iter().collect();
        vocabulary.insert(root.clone());
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        for (c, p) in &edges {
            for end in [c, p] {
                if !vocabulary.contains(end) {
                    return Err(TaxonomyError::UnknownEndpoint(end.clone()));
                }
            }
        }
        Ok(Taxonomy {
            root,
            vocabulary,
            edges,
        })
    }

    /// Adds terms to the vocabulary without touching edges.
    pub fn with_terms(mut self, terms: impl IntoIterator<Item = Term>) -> Self {
        self.vocabulary.extend(terms);
        self
    }

    pub fn root(&self) -> &Term {
        &self.root
    }

    pub fn vocabulary(&self) -> &BTreeSet<Term> {
        &self.vocabulary
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_edge(&self, child: &Term, parent: &Term) -> bool {
        self.edges.contains(&(child.clone(), parent.clone()))
    }

    pub(crate) fn insert_edge(&mut self, child: Term, parent: Term) -> bool {
        debug_assert!(self.vocabulary.contains(&child) && self.vocabulary.contains(&parent));
        self.edges.insert((child, parent))
    }

    pub(crate) fn remove_edge(&mut self, edge: &Edge) -> bool {
        self.edges.remove(edge)
    }

    pub fn parents_of<'a>(&'a self, child: &'a Term) -> impl Iterator<Item = &'a Term> + 'a {
        self.edges
            .range((child.clone(), min_term())..)
            .take_while(move |(c, _)| c == child)
            .map(|(_, p)| p)
    }

    /// Map from parent to its children.
    pub fn children_map(&self) -> BTreeMap<&Term, Vec<&Term>> {
        let mut map: BTreeMap<&Term, Vec<&Term>> = BTreeMap::new();
        for (c, p) in &self.edges {
            map.entry(p).or_default().push(c);
        }
        map
    }

    /// Terms incident to at least one edge.
    pub fn connected_terms(&self) -> BTreeSet<Term> {
        self.edges
            .iter()
            .flat_map(|(c, p)| [c.clone(), p.clone()])
            .collect()
    }

    pub fn orphans(&self) -> BTreeSet<Term> {
        let connected = self.connected_terms();
        self.vocabulary
            .iter()
            .filter(|t| **t != self.root && !connected.contains(*t))
            .cloned()
            .collect()
    }

    /// Weakly connected components, each sorted, ordered by their smallest term.
    pub fn components(&self) -> Vec<BTreeSet<Term>> {
        let index: BTreeMap<&Term, usize> =
            self.vocabulary.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let mut dsu = DisjointSets::new(self.vocabulary.len());
        for (c, p) in &self.edges {
            dsu.union(index[c], index[p]);
        }
        let mut groups: BTreeMap<usize, BTreeSet<Term>> = BTreeMap::new();
        for (t, &i) in &index {
            groups.entry(dsu.find(i)).or_default().insert((*t).clone());
        }
        let mut out: Vec<BTreeSet<Term>> = groups.into_values().collect();
        out.sort_by(|a, b| a.first().cmp(&b.first()));
        out
    }

    pub fn is_acyclic(&self) -> bool {
        self.edges.iter().all(|(c, p)| c != p) && strongly_connected_components(self)
            .iter()
            .all(|scc| scc.len() < 2)
    }

    /// Drops every edge in which the root is the child.
    pub fn sanitize_root(&self) -> Taxonomy {
        let mut out = self.clone();
        out.edges.retain(|(c, _)| *c != self.root);
        out
    }

    /// Removes cycle edges until the relation is acyclic.
    ///
    /// Self-loops are removed first. Then, for every strongly connected
    /// component of size ≥ 2, the shortest cycle through its smallest term is
    /// found and one of its edges, chosen by the seeded generator, is removed.
    /// This repeats until no such component remains.
    pub fn break_cycles(&self, seed: u64) -> (Taxonomy, BTreeSet<Edge>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        let mut removed: BTreeSet<Edge> = out.edges.iter().filter(|(c, p)| c == p).cloned().collect();
        out.edges.retain(|(c, p)| c != p);

        loop {
            let sccs: Vec<Vec<Term>> = strongly_connected_components(&out)
                .into_iter()
                .filter(|scc| scc.len() >= 2)
                .collect();
            if sccs.is_empty() {
                break;
            }
            for scc in sccs {
                let members: BTreeSet<&Term> = scc.iter().collect();
                let cycle = shortest_cycle(&out, &members);
                let pick = rng.random_range(0..cycle.len());
                let edge = cycle[pick].clone();
                out.edges.remove(&edge);
                removed.insert(edge);
            }
        }
        (out, removed)
    }

    pub fn structure(&self) -> StructureReport {
        StructureReport {
            orphan_count: self.orphans().len(),
            component_count: self.components().len(),
            edge_count: self.edges.len(),
            cycle_count_removed: 0,
        }
    }
}

fn min_term() -> Term {
    Term(String::new())
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Tarjan's strongly connected components over the child → parent edges.
///
/// Iterative to stay safe on deep chains. Each component is sorted.
pub fn strongly_connected_components(t: &Taxonomy) -> Vec<Vec<Term>> {
    let terms: Vec<&Term> = t.vocabulary.iter().collect();
    let index: BTreeMap<&Term, usize> = terms.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let n = terms.len();
    let mut adj = vec![Vec::new(); n];
    for (c, p) in &t.edges {
        adj[index[c]].push(index[p]);
    }

    const UNVISITED: usize = usize::MAX;
    let mut order = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0usize;
    let mut out = Vec::new();

    for start in 0..n {
        if order[start] != UNVISITED {
            continue;
        }
        // (node, next neighbor position)
        let mut call: Vec<(usize, usize)> = vec![(start, 0)];
        order[start] = next;
        low[start] = next;
        next += 1;
        stack.push(start);
        on_stack[start] = true;

        while let Some(frame) = call.last_mut() {
            let v = frame.0;
            if let Some(&w) = adj[v].get(frame.1) {
                frame.1 += 1;
                if order[w] == UNVISITED {
                    order[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(order[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == order[v] {
                    let mut scc = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        scc.push(terms[w].clone());
                        if w == v {
                            break;
                        }
                    }
                    scc.sort();
                    out.push(scc);
                }
            }
        }
    }
    out
}

/// Shortest directed cycle through the smallest member, restricted to `members`.
fn shortest_cycle(t: &Taxonomy, members: &BTreeSet<&Term>) -> Vec<Edge> {
    let start = *members.first().expect("non-empty component");
    let mut prev: BTreeMap<&Term, &Term> = BTreeMap::new();
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for p in t.parents_of(v) {
            if !members.contains(p) {
                continue;
            }
            if p == start {
                let mut cycle = vec![(v.clone(), start.clone())];
                let mut cur = v;
                while cur != start {
                    let before = prev[cur];
                    cycle.push((before.clone(), cur.clone()));
                    cur = before;
                }
                cycle.reverse();
                return cycle;
            }
            if !prev.contains_key(p) {
                prev.insert(p, v);
                queue.push_back(p);
            }
        }
    }
    unreachable!("a strongly connected component of size >= 2 has a cycle through every member")
}

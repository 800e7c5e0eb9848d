//! Pre-trained word2vec vectors in the text export format, with cosine
//! similarity and similarity ranks.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::ranking::{nearest_by, rank_by, Missing};
use crate::taxcore::Term;

#[derive(Debug, Error, PartialEq)]
pub enum EuclidError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EuclidError> {
    if u.len() != v.len() {
        return Err(EuclidError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EuclidError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanModel {
    dim: usize,
    terms: Vec<Term>,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    by_term: HashMap<Term, usize>,
    vectors: Vec<Vec<f64>>,
}

/// What `load_vectors` dropped on the way.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub zero_vectors: usize,
    pub filtered: usize,
    pub duplicates: usize,
}

/// Reads a `<count> <dim>` header followed by `<key> <d floats>` rows.
///
/// Keys are lowercased; `_` inside a key stands for a space. With a filter,
/// rows whose term (in either form) is not in it are dropped.
pub fn load_vectors<S: AsRef<str>>(
    lines: &[S],
    vocab_filter: Option<&BTreeSet<Term>>,
) -> Result<(EuclideanModel, LoadStats), EuclidError> {
    let err = |line: usize, message: String| EuclidError::Parse { line, message };
    let mut rows = lines
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 1, l.as_ref()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (hline, header) = rows.next().ok_or_else(|| err(1, "missing header".into()))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| err(hline, format!("bad header: {e}")))?;
    let [_, dim] = nums[..] else {
        return Err(err(hline, "header must be `<count> <dim>`".into()));
    };
    if dim == 0 {
        return Err(err(hline, "dimension must be positive".into()));
    }

    let mut model = EuclideanModel {
        dim,
        terms: Vec::new(),
        keys: Vec::new(),
        index: HashMap::new(),
        by_term: HashMap::new(),
        vectors: Vec::new(),
    };
    let mut stats = LoadStats::default();
    for (line, row) in rows {
        let mut fields = row.split_whitespace();
        let raw = fields.next().unwrap_or_default();
        let values: Vec<f64> = fields
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| err(line, format!("bad value: {e}")))?;
        if values.len() != dim {
            return Err(err(line, format!("expected {dim} values, found {}", values.len())));
        }
        let key = raw.to_lowercase();
        let term = Term::from_underscored(&key).map_err(|e| err(line, e.to_string()))?;
        if let Some(filter) = vocab_filter {
            if !filter.contains(&term) {
                stats.filtered += 1;
                continue;
            }
        }
        if values.iter().all(|&x| x == 0.0) {
            stats.zero_vectors += 1;
            continue;
        }
        if model.by_term.contains_key(&term) {
            stats.duplicates += 1;
            continue;
        }
        model.index.insert(key.clone(), model.vectors.len());
        model.by_term.insert(term.clone(), model.vectors.len());
        model.keys.push(key);
        model.terms.push(term);
        model.vectors.push(values);
    }
    Ok((model, stats))
}

/// Writes the model back in the text export format.
pub fn write_vectors(model: &EuclideanModel) -> Vec<String> {
    let mut out = vec![format!("{} {}", model.vectors.len(), model.dim)];
    for (key, v) in model.keys.iter().zip(&model.vectors) {
        let mut line = key.clone();
        for x in v {
            line.push(' ');
            line.push_str(&x.to_string());
        }
        out.push(line);
    }
    out
}

impl EuclideanModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Exact key first, then the underscore-joined compound.
    fn slot(&self, t: &Term) -> Option<usize> {
        self.index
            .get(t.as_str())
            .or_else(|| self.index.get(&t.underscored()))
            .or_else(|| self.by_term.get(t))
            .copied()
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.slot(t).is_some()
    }

    pub fn vector(&self, t: &Term) -> Result<&[f64], Missing> {
        self.slot(t)
            .map(|i| self.vectors[i].as_slice())
            .ok_or_else(|| Missing(t.clone()))
    }

    pub fn similarity(&self, x: &Term, y: &Term) -> Result<f64, Missing> {
        let (a, b) = (self.vector(x)?, self.vector(y)?);
        Ok(cosine(a, b).expect("stored vectors are non-zero and share a dimension"))
    }

    fn cos_idx(&self, xv: &[f64], i: usize) -> f64 {
        cosine(xv, &self.vectors[i]).expect("stored vectors are non-zero")
    }

    /// Rank of `y` among all other model terms by descending cosine to `x`.
    pub fn sim_rank(&self, x: &Term, y: &Term) -> Result<usize, Missing> {
        let xi = self.slot(x).ok_or_else(|| Missing(x.clone()))?;
        let yi = self.slot(y).ok_or_else(|| Missing(y.clone()))?;
        if xi == yi {
            return Err(Missing(y.clone()));
        }
        let xv = &self.vectors[xi];
        Ok(rank_by(&self.terms, xi, yi, |i| -self.cos_idx(xv, i)))
    }

    /// The `k` most similar candidates to `x` with their cosine similarity.
    pub fn most_similar<'a>(
        &self,
        x: &Term,
        candidates: impl IntoIterator<Item = &'a Term>,
        k: usize,
    ) -> Result<Vec<(Term, f64)>, Missing> {
        let xi = self.slot(x).ok_or_else(|| Missing(x.clone()))?;
        let xv = &self.vectors[xi];
        let present = candidates.into_iter().filter_map(|c| self.slot(c));
        Ok(nearest_by(&self.terms, present, xi, k, |i| -self.cos_idx(xv, i))
            .into_iter()
            .map(|(t, s)| (t, -s))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Term {
        Term::new(s).unwrap()
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        assert!((cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.9746).abs() < 1e-4);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(EuclidError::ZeroVector));
    }

    #[test]
    fn load_basic() {
        let (m, _) = load_vectors(&["2 3", "cat 1 0 0", "dog 0 1 0"], None).unwrap();
        assert_eq!((m.len(), m.dim()), (2, 3));
    }

    #[test]
    fn load_dimension_error() {
        let e = load_vectors(&["2 3", "cat 1 0 0", "dog 0 1"], None).unwrap_err();
        assert!(matches!(e, EuclidError::Parse { line: 3, .. }));
    }

    #[test]
    fn load_filter_and_zero() {
        let filter = BTreeSet::from([t("cat")]);
        let (m, s) = load_vectors(&["2 3", "cat 1 0 0", "dog 0 1 0"], Some(&filter)).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(s.filtered, 1);
        let (m, s) = load_vectors(&["2 2", "cat 0 0", "dog 0 1"], None).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(s.zero_vectors, 1);
    }

    #[test]
    fn compound_lookup() {
        let filter = BTreeSet::from([t("sweet potato")]);
        let (m, _) = load_vectors(&["1 2", "Sweet_Potato 1 1"], Some(&filter)).unwrap();
        assert!(m.contains(&t("sweet potato")));
        let (m, _) = load_vectors(&["1 2", "tea 1 1"], None).unwrap();
        assert_eq!(m.vector(&t("coffee")), Err(Missing(t("coffee"))));
    }

    #[test]
    fn sim_rank_cases() {
        let (m, _) = load_vectors(&["3 2", "a 1 0", "b 0.9 0.1", "c 0 1"], None).unwrap();
        assert_eq!(m.sim_rank(&t("a"), &t("b")), Ok(1));
        assert_eq!(m.sim_rank(&t("a"), &t("c")), Ok(2));
        assert_eq!(m.sim_rank(&t("a"), &t("x")), Err(Missing(t("x"))));
        let top = m.most_similar(&t("a"), m.terms(), 1).unwrap();
        assert_eq!(top[0].0, t("b"));
    }

    proptest! {
        #[test]
        fn round_trip_six_decimals(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..8)) {
            let mut lines = vec![format!("{} 3", rows.len())];
            for (i, r) in rows.iter().enumerate() {
                lines.push(format!("w{i} {} {} {}", r[0], r[1], r[2]));
            }
            let (m, _) = load_vectors(&lines, None).unwrap();
            let (back, _) = load_vectors(&write_vectors(&m), None).unwrap();
            for term in m.terms() {
                let (a, b) = (m.vector(term).unwrap(), back.vector(term).unwrap());
                for (x, y) in a.iter().zip(b) {
                    prop_assert!((x - y).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn cosine_in_range(u in prop::collection::vec(-5.0f64..5.0, 4), v in prop::collection::vec(-5.0f64..5.0, 4)) {
            if let Ok(c) = cosine(&u, &v) {
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }
    }
}

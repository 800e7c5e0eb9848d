//! Poincaré ball geometry and embedding training.
//!
//! Training minimizes, for every positive pair `(u, v)`, the softmax loss
//! `-log(exp(-d(u,v)) / Σ_{w ∈ N(u) ∪ {v}} exp(-d(u,w)))` over sampled
//! negatives `N(u)`, using Riemannian SGD: the Euclidean gradient is scaled by
//! the inverse metric `(1 - ‖θ‖²)² / 4` and the result is projected back inside
//! the ball.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ranking::{nearest_by, rank_by, Missing};
use crate::relations::RelationSet;
use crate::taxcore::Term;

/// Margin kept between every point and the unit sphere.
pub const BOUNDARY_EPS: f64 = 1e-5;

const INIT_RANGE: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum HyperbolicError {
    #[error("point with squared norm {0} is not strictly inside the unit ball")]
    OutsideBall(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot train on an empty relation set")]
    EmptyRelations,
    #[error("relations must be antisymmetric and irreflexive; clean them first")]
    NotCleaned,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A point strictly inside the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint(Vec<f64>);

impl PoincarePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, HyperbolicError> {
        let sq = norm_sq(&coords);
        if sq.is_nan() || sq >= 1.0 {
            return Err(HyperbolicError::OutsideBall(sq));
        }
        Ok(PoincarePoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum()
}

fn dist_sq(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `d(u,v) = arcosh(1 + 2‖u−v‖² / ((1−‖u‖²)(1−‖v‖²)))` for validated points.
pub fn poincare_distance(u: &PoincarePoint, v: &PoincarePoint) -> Result<f64, HyperbolicError> {
    if u.dim() != v.dim() {
        return Err(HyperbolicError::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    Ok(distance(&u.0, &v.0))
}

/// Unchecked distance on raw coordinates inside the ball.
///
/// Evaluated as `ln(1 + x + sqrt(x(x+2)))` with `x = γ − 1 ≥ 0`, which equals
/// `arcosh(γ)` and keeps precision near `u = v`.
pub fn distance(u: &[f64], v: &[f64]) -> f64 {
    let alpha = 1.0 - norm_sq(u);
    let beta = 1.0 - norm_sq(v);
    let x = (2.0 * dist_sq(u, v) / (alpha * beta)).max(0.0);
    (x + (x * (x + 2.0)).sqrt()).ln_1p()
}

/// Euclidean gradient of `d(u, v)` with respect to `u`.
///
/// Zero when `u == v`, where the distance is not differentiable.
pub fn distance_grad(u: &[f64], v: &[f64]) -> Vec<f64> {
    let alpha = 1.0 - norm_sq(u);
    let beta = 1.0 - norm_sq(v);
    let diff_sq = dist_sq(u, v);
    let x = 2.0 * diff_sq / (alpha * beta);
    let root = (x * (x + 2.0)).sqrt();
    if root == 0.0 {
        return vec![0.0; u.len()];
    }
    // (‖v‖² − 2⟨u,v⟩ + 1) u − (1 − ‖u‖²) v  ==  ‖u−v‖² u + α (u − v)
    let scale = 4.0 / (beta * root * alpha * alpha);
    u.iter()
        .zip(v)
        .map(|(a, b)| scale * (diff_sq * a + alpha * (a - b)))
        .collect()
}

/// Riemannian gradient of `d(u, v)` at `u`: the Euclidean one times `(1 − ‖u‖²)² / 4`.
pub fn riemannian_grad(u: &[f64], v: &[f64]) -> Vec<f64> {
    let s = (1.0 - norm_sq(u)).powi(2) / 4.0;
    distance_grad(u, v).into_iter().map(|g| g * s).collect()
}

/// Rescales `x` onto the sphere of radius `1 − eps` when it lies beyond it.
fn project(x: &mut [f64], eps: f64) {
    let limit = 1.0 - eps;
    let norm = norm_sq(x).sqrt();
    if norm > limit {
        let s = limit / norm;
        x.iter_mut().for_each(|a| *a *= s);
        while norm_sq(x).sqrt() > limit {
            x.iter_mut().for_each(|a| *a *= 1.0 - f64::EPSILON);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub burn_in_epochs: usize,
    pub burn_in_rate_divisor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 50,
            epochs: 400,
            learning_rate: 0.1,
            negatives: 10,
            burn_in_epochs: 10,
            burn_in_rate_divisor: 10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HyperbolicError> {
        let bad = |m: &str| Err(HyperbolicError::InvalidConfig(m.to_string()));
        if self.dim < 2 {
            return bad("dimension must be at least 2");
        }
        if self.epochs == 0 || self.negatives == 0 {
            return bad("epochs and negatives must be positive");
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.learning_rate) || !positive(self.burn_in_rate_divisor) {
            return bad("learning rate and burn-in divisor must be positive");
        }
        if self.burn_in_epochs >= self.epochs {
            return bad("burn-in epochs must be fewer than epochs");
        }
        Ok(())
    }
}

/// Terms mapped to points of the Poincaré ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareModel {
    dim: usize,
    epsilon: f64,
    terms: Vec<Term>,
    index: BTreeMap<Term, usize>,
    coords: Vec<f64>,
    alphas: Vec<f64>,
}

impl PoincareModel {
    pub fn from_points(
        dim: usize,
        points: impl IntoIterator<Item = (Term, PoincarePoint)>,
    ) -> Result<Self, HyperbolicError> {
        let sorted: BTreeMap<Term, PoincarePoint> = points.into_iter().collect();
        let mut coords = Vec::with_capacity(sorted.len() * dim);
        let mut terms = Vec::with_capacity(sorted.len());
        for (term, point) in sorted {
            if point.dim() != dim {
                return Err(HyperbolicError::DimensionMismatch {
                    expected: dim,
                    found: point.dim(),
                });
            }
            coords.extend_from_slice(point.coords());
            terms.push(term);
        }
        Ok(Self::from_parts(dim, terms, coords))
    }

    fn from_parts(dim: usize, terms: Vec<Term>, coords: Vec<f64>) -> Self {
        let index = terms.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        let alphas = coords.chunks(dim.max(1)).map(|r| 1.0 - norm_sq(r)).collect();
        PoincareModel {
            dim,
            epsilon: BOUNDARY_EPS,
            terms,
            index,
            coords,
            alphas,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Model vocabulary in lexicographic order.
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.index.contains_key(t)
    }

    pub fn vector(&self, t: &Term) -> Result<&[f64], Missing> {
        self.slot(t).map(|i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn distance(&self, x: &Term, y: &Term) -> Result<f64, Missing> {
        Ok(distance(self.vector(x)?, self.vector(y)?))
    }

    fn slot(&self, t: &Term) -> Result<usize, Missing> {
        self.index.get(t).copied().ok_or_else(|| Missing(t.clone()))
    }

    fn dist_idx(&self, i: usize, j: usize) -> f64 {
        let x = (2.0 * dist_sq(self.row(i), self.row(j)) / (self.alphas[i] * self.alphas[j])).max(0.0);
        (x + (x * (x + 2.0)).sqrt()).ln_1p()
    }

    /// 1-based index of `y` among all other model terms sorted by distance to
    /// `x`, ties broken lexicographically. A term has no rank relative to itself.
    pub fn rank(&self, x: &Term, y: &Term) -> Result<usize, Missing> {
        let (xi, yi) = (self.slot(x)?, self.slot(y)?);
        if xi == yi {
            return Err(Missing(y.clone()));
        }
        Ok(rank_by(&self.terms, xi, yi, |i| self.dist_idx(i, xi)))
    }

    /// The `k` nearest members of `candidates` to `x`. Candidates without a
    /// vector are skipped.
    pub fn nearest<'a>(
        &self,
        x: &Term,
        candidates: impl IntoIterator<Item = &'a Term>,
        k: usize,
    ) -> Result<Vec<(Term, f64)>, Missing> {
        let xi = self.slot(x)?;
        let present = candidates.into_iter().filter_map(|c| self.index.get(c).copied());
        Ok(nearest_by(&self.terms, present, xi, k, |i| self.dist_idx(i, xi)))
    }
}

/// Per-epoch mean losses next to the trained model.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: PoincareModel,
    pub epoch_losses: Vec<f64>,
}

pub fn train(relations: &RelationSet, config: &TrainConfig) -> Result<PoincareModel, HyperbolicError> {
    train_with_report(relations, config).map(|r| r.model)
}

/// Trains on the (unweighted) pairs of a cleaned relation set.
///
/// Negatives are drawn uniformly from the vocabulary, skipping the anchor and
/// every term it is related to. When none can be found, the anchor itself
/// stands in as a zero-distance negative, which still pulls the pair together.
pub fn train_with_report(relations: &RelationSet, config: &TrainConfig) -> Result<TrainReport, HyperbolicError> {
    config.validate()?;
    if relations.is_empty() {
        return Err(HyperbolicError::EmptyRelations);
    }
    if !relations.is_antisymmetric_irreflexive() {
        return Err(HyperbolicError::NotCleaned);
    }

    let terms: Vec<Term> = relations.terms().into_iter().collect();
    let index: BTreeMap<&Term, usize> = terms.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let n = terms.len();
    let dim = config.dim;

    let pairs: Vec<(usize, usize)> = relations.pairs().map(|(h, g)| (index[h], index[g])).collect();
    let mut related: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for &(u, v) in &pairs {
        related[u].insert(v);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut coords: Vec<f64> = (0..n * dim)
        .map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE))
        .collect();

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut targets: Vec<usize> = Vec::with_capacity(config.negatives + 1);
    let mut grads: Vec<(usize, Vec<f64>)> = Vec::with_capacity(config.negatives + 2);

    for epoch in 0..config.epochs {
        let lr = if epoch < config.burn_in_epochs {
            config.learning_rate / config.burn_in_rate_divisor
        } else {
            config.learning_rate
        };
        order.shuffle(&mut rng);
        let mut total = 0.0;

        for &pi in &order {
            let (u, v) = pairs[pi];
            targets.clear();
            targets.push(v);
            let eligible = n - 1 - related[u].len();
            if eligible > 0 {
                let mut tries = 0;
                while targets.len() <= config.negatives && tries < 10 * config.negatives {
                    let w = rng.random_range(0..n);
                    if w != u && !related[u].contains(&w) {
                        targets.push(w);
                    }
                    tries += 1;
                }
            }
            if targets.len() == 1 {
                targets.push(u);
            }

            let uv = &coords[u * dim..(u + 1) * dim];
            let dists: Vec<f64> = targets
                .iter()
                .map(|&w| distance(uv, &coords[w * dim..(w + 1) * dim]))
                .collect();
            let dmin = dists.iter().copied().fold(f64::INFINITY, f64::min);
            let weights: Vec<f64> = dists.iter().map(|d| (dmin - d).exp()).collect();
            let z: f64 = weights.iter().sum();
            total += dists[0] - dmin + z.ln();

            grads.clear();
            let mut gu = vec![0.0; dim];
            for (j, &w) in targets.iter().enumerate() {
                let coef = if j == 0 { 1.0 } else { 0.0 } - weights[j] / z;
                if w == u || coef == 0.0 {
                    continue;
                }
                let wv = &coords[w * dim..(w + 1) * dim];
                for (g, d) in gu.iter_mut().zip(distance_grad(uv, wv)) {
                    *g += coef * d;
                }
                let gw: Vec<f64> = distance_grad(wv, uv).into_iter().map(|d| coef * d).collect();
                match grads.iter_mut().find(|(i, _)| *i == w) {
                    Some((_, acc)) => acc.iter_mut().zip(gw).for_each(|(a, b)| *a += b),
                    None => grads.push((w, gw)),
                }
            }
            grads.push((u, gu));

            for (i, g) in &grads {
                let row = &mut coords[i * dim..(i + 1) * dim];
                let scale = lr * (1.0 - norm_sq(row)).powi(2) / 4.0;
                row.iter_mut().zip(g).for_each(|(x, gx)| *x -= scale * gx);
                project(row, BOUNDARY_EPS);
            }
        }
        epoch_losses.push(total / pairs.len() as f64);
    }

    Ok(TrainReport {
        model: PoincareModel::from_parts(dim, terms, coords),
        epoch_losses,
    })
}

/// Writes `<count> <dim>` then `<term> <v1> ... <vd>` rows, compounds joined by `_`.
pub fn write_model(model: &PoincareModel) -> Vec<String> {
    let mut out = Vec::with_capacity(model.len() + 1);
    out.push(format!("{} {}", model.len(), model.dim));
    for (i, t) in model.terms.iter().enumerate() {
        let mut line = t.underscored();
        for x in model.row(i) {
            line.push(' ');
            line.push_str(&x.to_string());
        }
        out.push(line);
    }
    out
}

pub fn read_model<S: AsRef<str>>(lines: &[S]) -> Result<PoincareModel, HyperbolicError> {
    let parse_err = |line: usize, message: String| HyperbolicError::Parse { line, message };
    let mut rows = lines
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 1, l.as_ref()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));

    let (hline, header) = rows.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(hline, format!("bad header: {e}")))?;
    let [count, dim] = nums[..] else {
        return Err(parse_err(hline, "header must be `<count> <dim>`".into()));
    };

    let mut points = Vec::with_capacity(count);
    let mut seen = BTreeSet::new();
    for (line, row) in rows {
        let mut fields = row.split_whitespace();
        let key = fields.next().unwrap_or_default();
        let term = Term::from_underscored(key).map_err(|e| parse_err(line, e.to_string()))?;
        let coords: Vec<f64> = fields
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(line, format!("bad coordinate: {e}")))?;
        if coords.len() != dim {
            return Err(parse_err(line, format!("expected {dim} coordinates, found {}", coords.len())));
        }
        let point = PoincarePoint::new(coords).map_err(|e| parse_err(line, e.to_string()))?;
        if !seen.insert(term.clone()) {
            return Err(parse_err(line, format!("duplicate term {term}")));
        }
        points.push((term, point));
    }
    if points.len() != count {
        return Err(parse_err(hline, format!("header announces {count} rows, found {}", points.len())));
    }
    PoincareModel::from_points(dim, points)
}

//! End-to-end runs: load, baseline preparation, relation cleaning, embedding,
//! refinement and evaluation, writing one artifact per stage.
//!
//! Configuration is a `key = value` text file. Relative paths resolve against
//! the directory holding the config file.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{self, McNemarResult, ReportRow};
use crate::euclid;
use crate::hyperbolic::{self, TrainConfig};
use crate::refine::{self, Backend, RefineOptions, RefinementLog};
use crate::relations::{self, RelationSet};
use crate::taxcore::{self, Edge, Taxonomy, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Poincare,
    Euclid,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "poincare" => Ok(BackendKind::Poincare),
            "euclid" => Ok(BackendKind::Euclid),
            other => Err(format!("unknown backend {other:?} (expected poincare or euclid)")),
        }
    }
}

impl BackendKind {
    fn name(self) -> &'static str {
        match self {
            BackendKind::Poincare => "poincare",
            BackendKind::Euclid => "euclid",
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {message}")]
    BadValue { key: String, message: String },
    #[error("missing required setting {0}")]
    Missing(&'static str),
    #[error("input file not found: {}", .0.display())]
    MissingFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub taxonomy: Option<PathBuf>,
    /// Extra vocabulary (one term per line); terms absent from the taxonomy become orphans.
    pub terms: Option<PathBuf>,
    pub relations_domain: Option<PathBuf>,
    pub relations_general: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    /// Pre-trained word2vec text vectors, for the euclid backend.
    pub vectors: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub root: Option<String>,
    pub backend: BackendKind,
    pub train: TrainConfig,
    pub min_freq_domain: u64,
    pub min_freq_general: u64,
    pub threshold_override: Option<f64>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            taxonomy: None,
            terms: None,
            relations_domain: None,
            relations_general: None,
            gold: None,
            vectors: None,
            output_dir: PathBuf::from("out"),
            root: None,
            backend: BackendKind::Poincare,
            train: TrainConfig::default(),
            min_freq_domain: 3,
            min_freq_general: 5,
            threshold_override: None,
            seed: 0,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        message: e.to_string(),
    })
}

impl PipelineConfig {
    /// Parses `key = value` lines; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut config = PipelineConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            config.set(key.trim(), value.trim(), base)?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|_| ConfigError::MissingFile(path.to_path_buf()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Sets one key; used by the config parser and by command-line overrides.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        let path = || Some(base.join(value));
        match key {
            "taxonomy" => self.taxonomy = path(),
            "terms" => self.terms = path(),
            "relations_domain" => self.relations_domain = path(),
            "relations_general" => self.relations_general = path(),
            "gold" => self.gold = path(),
            "vectors" => self.vectors = path(),
            "output_dir" => self.output_dir = base.join(value),
            "root" => self.root = Some(value.to_string()),
            "backend" => self.backend = parse_value(key, value)?,
            "min_freq_domain" => self.min_freq_domain = parse_value(key, value)?,
            "min_freq_general" => self.min_freq_general = parse_value(key, value)?,
            "threshold_override" => self.threshold_override = Some(parse_value(key, value)?),
            "seed" => self.seed = parse_value(key, value)?,
            "dim" => self.train.dim = parse_value(key, value)?,
            "epochs" => self.train.epochs = parse_value(key, value)?,
            "learning_rate" => self.train.learning_rate = parse_value(key, value)?,
            "negatives" => self.train.negatives = parse_value(key, value)?,
            "burn_in_epochs" => self.train.burn_in_epochs = parse_value(key, value)?,
            "burn_in_rate_divisor" => self.train.burn_in_rate_divisor = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Checks required settings and that every referenced input exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let taxonomy = self.taxonomy.as_ref().ok_or(ConfigError::Missing("taxonomy"))?;
        let root = self.root.as_deref().ok_or(ConfigError::Missing("root"))?;
        Term::new(root).map_err(|e| ConfigError::BadValue {
            key: "root".into(),
            message: e.to_string(),
        })?;
        match self.backend {
            BackendKind::Poincare if self.relations_domain.is_none() => {
                return Err(ConfigError::Missing("relations_domain"))
            }
            BackendKind::Euclid if self.vectors.is_none() => return Err(ConfigError::Missing("vectors")),
            _ => {}
        }
        if self.min_freq_domain == 0 || self.min_freq_general == 0 {
            return Err(ConfigError::BadValue {
                key: "min_freq".into(),
                message: "must be at least 1".into(),
            });
        }
        let inputs = [
            Some(taxonomy),
            self.terms.as_ref(),
            self.relations_domain.as_ref(),
            self.relations_general.as_ref(),
            self.gold.as_ref(),
            self.vectors.as_ref(),
        ];
        for p in inputs.into_iter().flatten() {
            if !p.is_file() {
                return Err(ConfigError::MissingFile(p.clone()));
            }
        }
        Ok(())
    }

    /// Canonical `key=value` rendering of everything except the output directory.
    fn canonical(&self) -> String {
        let p = |x: &Option<PathBuf>| x.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let t = &self.train;
        let mut s = String::new();
        let _ = write!(
            s,
            "taxonomy={}\nterms={}\nrelations_domain={}\nrelations_general={}\ngold={}\nvectors={}\n",
            p(&self.taxonomy),
            p(&self.terms),
            p(&self.relations_domain),
            p(&self.relations_general),
            p(&self.gold),
            p(&self.vectors)
        );
        let _ = write!(
            s,
            "root={}\nbackend={}\nmin_freq_domain={}\nmin_freq_general={}\nthreshold_override={:?}\nseed={}\n",
            self.root.as_deref().unwrap_or_default(),
            self.backend.name(),
            self.min_freq_domain,
            self.min_freq_general,
            self.threshold_override,
            self.seed
        );
        let _ = write!(
            s,
            "dim={}\nepochs={}\nlearning_rate={}\nnegatives={}\nburn_in_epochs={}\nburn_in_rate_divisor={}\n",
            t.dim, t.epochs, t.learning_rate, t.negatives, t.burn_in_epochs, t.burn_in_rate_divisor
        );
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical config.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Derives independent per-stage seeds from the run seed (SplitMix64 step).
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed.wrapping_add(stage.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SEED_BASELINE: u64 = 1;
const SEED_REFINE: u64 = 2;

/// Baseline preparation: drops root-as-child edges, then breaks cycles.
pub fn prepare(t: &Taxonomy, seed: u64) -> (Taxonomy, BTreeSet<Edge>) {
    t.sanitize_root().break_cycles(stage_seed(seed, SEED_BASELINE))
}

pub fn refine_options(seed: u64, threshold_override: Option<f64>) -> RefineOptions {
    RefineOptions {
        seed: stage_seed(seed, SEED_REFINE),
        threshold_override,
    }
}

#[derive(Debug, Error)]
#[error("stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

fn stage_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

pub fn read_lines(path: &Path) -> io::Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_string).collect())
}

/// Writes `lines` under a `#` provenance header.
pub fn write_artifact(path: &Path, header: &str, lines: &[String]) -> io::Result<()> {
    let mut text = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum::<usize>() + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    fs::write(path, text)
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub artifacts: Vec<PathBuf>,
    pub baseline: Taxonomy,
    pub refined: Taxonomy,
    pub log: RefinementLog,
    pub baseline_cycles_removed: usize,
    pub report: Option<Vec<ReportRow>>,
    pub comparison: Option<McNemarResult>,
}

pub const CLEANED_RELATIONS: &str = "relations.cleaned.tsv";
pub const POINCARE_MODEL: &str = "model.poincare.txt";
pub const EUCLID_MODEL: &str = "model.vectors.txt";
pub const REFINED_TAXONOMY: &str = "taxonomy.refined.tsv";
pub const REFINEMENT_LOG: &str = "refinement.log.tsv";
pub const EVAL_TSV: &str = "eval.tsv";

/// Loads the taxonomy file plus the optional term list.
pub fn load_taxonomy(path: &Path, root: &Term, terms: Option<&Path>) -> Result<Taxonomy, PipelineError> {
    let lines = read_lines(path).map_err(stage_err("load"))?;
    let mut t = taxcore::parse_taxonomy(&lines, root.clone()).map_err(stage_err("load"))?;
    if let Some(terms) = terms {
        let lines = read_lines(terms).map_err(stage_err("load"))?;
        t = t.with_terms(taxcore::parse_terms(&lines).map_err(stage_err("load"))?);
    }
    Ok(t)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    config.validate().map_err(stage_err("config"))?;
    let root = Term::new(config.root.as_deref().unwrap_or_default()).map_err(stage_err("config"))?;
    let header = format!("# taxorefine seed={} config={}", config.seed, config.hash());
    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir).map_err(stage_err("output"))?;
    let mut artifacts = Vec::new();
    let mut emit = |name: &str, lines: &[String]| -> Result<(), PipelineError> {
        let path = out_dir.join(name);
        write_artifact(&path, &header, lines).map_err(stage_err("output"))?;
        artifacts.push(path);
        Ok(())
    };

    let input = load_taxonomy(
        config.taxonomy.as_deref().expect("validated"),
        &root,
        config.terms.as_deref(),
    )?;
    let (baseline, cycles) = prepare(&input, config.seed);

    let cleaned = match &config.relations_domain {
        Some(path) => {
            let vocab = baseline.vocabulary();
            let lines = read_lines(path).map_err(stage_err("clean"))?;
            let mut set = relations::parse_relations(&lines)
                .map_err(stage_err("clean"))?
                .clean(vocab, config.min_freq_domain);
            if let Some(general) = &config.relations_general {
                let lines = read_lines(general).map_err(stage_err("clean"))?;
                let general = relations::parse_relations(&lines)
                    .map_err(stage_err("clean"))?
                    .clean(vocab, config.min_freq_general);
                set = set.merge(&general);
            }
            emit(CLEANED_RELATIONS, &relations::serialize_relations(&set))?;
            Some(set)
        }
        None => None,
    };

    let options = refine_options(config.seed, config.threshold_override);
    let (refined, log) = match config.backend {
        BackendKind::Poincare => {
            let train = TrainConfig {
                seed: config.seed,
                ..config.train.clone()
            };
            let set: &RelationSet = cleaned.as_ref().expect("validated");
            let model = hyperbolic::train(set, &train).map_err(stage_err("train"))?;
            emit(POINCARE_MODEL, &hyperbolic::write_model(&model))?;
            refine_with(&baseline, &model, options)?
        }
        BackendKind::Euclid => {
            let lines = read_lines(config.vectors.as_deref().expect("validated")).map_err(stage_err("vectors"))?;
            let (model, _) =
                euclid::load_vectors(&lines, Some(baseline.vocabulary())).map_err(stage_err("vectors"))?;
            emit(EUCLID_MODEL, &euclid::write_vectors(&model))?;
            refine_with(&baseline, &model, options)?
        }
    };
    emit(REFINED_TAXONOMY, &taxcore::serialize_taxonomy(&refined))?;
    let mut log_lines = vec!["stage\taction\tchild\tparent".to_string()];
    log_lines.extend(log.to_tsv());
    emit(REFINEMENT_LOG, &log_lines)?;

    let (report, comparison) = match &config.gold {
        Some(gold_path) => {
            let gold = load_taxonomy(gold_path, &root, None)?;
            let mut rows = Vec::new();
            for (name, t) in [
                ("baseline", &baseline),
                ("root", &refine::root_baseline(&baseline)),
                ("refined", &refined),
            ] {
                rows.push(ReportRow {
                    name: name.to_string(),
                    scores: eval::edge_f1(t, &gold).map_err(stage_err("eval"))?,
                    structure: t.structure(),
                });
            }
            rows[0].structure.cycle_count_removed = cycles.len();
            let m = eval::mcnemar(&refined, &baseline, &gold);
            let cmp = Some(("refined", "baseline", m));
            emit(EVAL_TSV, &eval::report_tsv(&rows, cmp))?;
            (Some(rows), Some(m))
        }
        None => (None, None),
    };

    Ok(PipelineOutcome {
        artifacts,
        baseline,
        refined,
        log,
        baseline_cycles_removed: cycles.len(),
        report,
        comparison,
    })
}

fn refine_with<B: Backend>(
    t: &Taxonomy,
    backend: &B,
    options: RefineOptions,
) -> Result<(Taxonomy, RefinementLog), PipelineError> {
    refine::refine(t, backend, options).map_err(stage_err("refine"))
}

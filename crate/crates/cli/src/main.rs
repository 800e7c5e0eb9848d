//! `taxorefine` command-line interface.
//!
//! Exit codes: 0 success, 1 stage failure, 2 usage error (including missing
//! input files).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use taxorefine::euclid;
use taxorefine::eval::{self, ReportRow};
use taxorefine::hyperbolic::{self, TrainConfig};
use taxorefine::pipeline::{self, PipelineConfig};
use taxorefine::refine::{self, Backend, RefinementLog};
use taxorefine::relations::{self, RelationSet};
use taxorefine::taxcore::{self, Taxonomy, Term};

#[derive(Parser)]
#[command(name = "taxorefine", version, about = "Refine noisy taxonomies with Poincaré or word2vec embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and merge hypernym candidate relations.
    Clean(CleanArgs),
    /// Train Poincaré embeddings on cleaned relations.
    Train(TrainArgs),
    /// Refine a taxonomy with a trained model.
    Refine(RefineArgs),
    /// Score a taxonomy against a gold standard.
    Eval(EvalArgs),
    /// Run every stage from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct CleanArgs {
    /// Relation TSV: hyponym, hypernym, frequency.
    #[arg(long)]
    relations: PathBuf,
    /// Taxonomy whose terms form the vocabulary.
    #[arg(long)]
    vocab: PathBuf,
    /// Extra vocabulary terms, one per line.
    #[arg(long)]
    terms: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    min_freq: u64,
    /// General-corpus relations to clean separately and merge in.
    #[arg(long)]
    merge: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    merge_min_freq: u64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Cleaned relation TSV.
    #[arg(long)]
    relations: PathBuf,
    /// Model file to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 10)]
    negatives: usize,
    #[arg(long, default_value_t = 10)]
    burn_in_epochs: usize,
    #[arg(long, default_value_t = 10.0)]
    burn_in_rate_divisor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Poincare,
    Euclid,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    taxonomy: PathBuf,
    #[arg(long)]
    root: String,
    #[arg(long, value_enum, default_value = "poincare")]
    backend: BackendArg,
    /// Poincaré model file, or word2vec text vectors for the euclid backend.
    #[arg(long)]
    model: PathBuf,
    /// Extra vocabulary terms, one per line.
    #[arg(long)]
    terms: Option<PathBuf>,
    #[arg(long)]
    threshold_override: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Refinement log TSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Output taxonomy (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Second system, compared with McNemar's test.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Root term (inferred from the gold taxonomy when omitted).
    #[arg(long)]
    root: Option<String>,
    /// Also write the report as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override any config key, e.g. `--set epochs=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn stage(name: &str, cause: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: format!("stage {name}: {cause}"),
    }
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file not found: {}", path.display())))
    }
}

fn read(path: &Path, stage_name: &str) -> Result<Vec<String>, Failure> {
    require(path)?;
    pipeline::read_lines(path).map_err(|e| stage(stage_name, format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, lines: &[String]) -> Result<(), Failure> {
    match output {
        Some(path) => {
            let mut text = lines.join("\n");
            text.push('\n');
            std::fs::write(path, text).map_err(|e| stage("output", format!("{}: {e}", path.display())))
        }
        None => {
            for l in lines {
                println!("{l}");
            }
            Ok(())
        }
    }
}

fn parse_root(root: &str) -> Result<Term, Failure> {
    Term::new(root).map_err(|e| usage(format!("--root: {e}")))
}

fn clean(args: CleanArgs) -> Result<(), Failure> {
    let edges = taxcore::parse_edges(&read(&args.vocab, "load")?).map_err(|e| stage("load", e))?;
    let mut vocab: BTreeSet<Term> = edges.into_iter().flat_map(|(c, p)| [c, p]).collect();
    if let Some(terms) = &args.terms {
        vocab.extend(taxcore::parse_terms(&read(terms, "load")?).map_err(|e| stage("load", e))?);
    }
    if args.min_freq == 0 || args.merge_min_freq == 0 {
        return Err(usage("minimum frequency must be at least 1"));
    }
    let parse = |path: &Path| -> Result<RelationSet, Failure> {
        relations::parse_relations(&read(path, "clean")?).map_err(|e| stage("clean", e))
    };
    let mut set = parse(&args.relations)?.clean(&vocab, args.min_freq);
    if let Some(general) = &args.merge {
        set = set.merge(&parse(general)?.clean(&vocab, args.merge_min_freq));
    }
    eprintln!("{} relations kept", set.len());
    emit(args.output.as_deref(), &relations::serialize_relations(&set))
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let set = relations::parse_relations(&read(&args.relations, "train")?).map_err(|e| stage("train", e))?;
    let config = TrainConfig {
        dim: args.dim,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        negatives: args.negatives,
        burn_in_epochs: args.burn_in_epochs,
        burn_in_rate_divisor: args.burn_in_rate_divisor,
        seed: args.seed,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let report = hyperbolic::train_with_report(&set, &config).map_err(|e| stage("train", e))?;
    if let (Some(first), Some(last)) = (report.epoch_losses.first(), report.epoch_losses.last()) {
        eprintln!("{} terms, loss {first:.4} -> {last:.4}", report.model.len());
    }
    emit(Some(&args.output), &hyperbolic::write_model(&report.model))
}

fn write_log(path: &Path, log: &RefinementLog) -> Result<(), Failure> {
    let mut lines = vec!["stage\taction\tchild\tparent".to_string()];
    lines.extend(log.to_tsv());
    emit(Some(path), &lines)
}

fn refine_with<B: Backend>(args: &RefineArgs, t: &Taxonomy, backend: &B) -> Result<(), Failure> {
    let (prepared, removed) = pipeline::prepare(t, args.seed);
    let (refined, log) = refine::refine(&prepared, backend, pipeline::refine_options(args.seed, args.threshold_override))
        .map_err(|e| stage("refine", e))?;
    eprintln!(
        "{} cycle edges removed before refinement; {} log entries; {} orphans left",
        removed.len(),
        log.entries.len(),
        refined.orphans().len()
    );
    if let Some(path) = &args.log {
        write_log(path, &log)?;
    }
    emit(args.output.as_deref(), &taxcore::serialize_taxonomy(&refined))
}

fn refine_cmd(args: RefineArgs) -> Result<(), Failure> {
    let root = parse_root(&args.root)?;
    require(&args.taxonomy)?;
    if let Some(terms) = &args.terms {
        require(terms)?;
    }
    let t = pipeline::load_taxonomy(&args.taxonomy, &root, args.terms.as_deref()).map_err(|e| stage(e.stage, e.message))?;
    let model_lines = read(&args.model, "model")?;
    match args.backend {
        BackendArg::Poincare => {
            let model = hyperbolic::read_model(&model_lines).map_err(|e| stage("model", e))?;
            refine_with(&args, &t, &model)
        }
        BackendArg::Euclid => {
            let (model, _) = euclid::load_vectors(&model_lines, Some(t.vocabulary())).map_err(|e| stage("model", e))?;
            refine_with(&args, &t, &model)
        }
    }
}

fn eval_cmd(args: EvalArgs) -> Result<(), Failure> {
    let gold_edges = taxcore::parse_edges(&read(&args.gold, "load")?).map_err(|e| stage("load", e))?;
    let root = match &args.root {
        Some(r) => parse_root(r)?,
        None => eval::infer_root(&gold_edges).ok_or_else(|| usage("cannot infer a root from the gold taxonomy; pass --root"))?,
    };
    let gold = Taxonomy::from_edges(root.clone(), gold_edges);
    let load = |path: &Path| -> Result<Taxonomy, Failure> {
        require(path)?;
        pipeline::load_taxonomy(path, &root, None).map_err(|e| stage(e.stage, e.message))
    };
    let mut systems = vec![(args.system.display().to_string(), load(&args.system)?)];
    if let Some(other) = &args.compare {
        systems.push((other.display().to_string(), load(other)?));
    }
    let mut rows = Vec::new();
    for (name, t) in &systems {
        rows.push(ReportRow {
            name: name.clone(),
            scores: eval::edge_f1(t, &gold).map_err(|e| stage("eval", e))?,
            structure: t.structure(),
        });
    }
    let comparison = (systems.len() == 2).then(|| {
        (
            systems[0].0.as_str(),
            systems[1].0.as_str(),
            eval::mcnemar(&systems[0].1, &systems[1].1, &gold),
        )
    });
    emit(None, &eval::report_text(&rows, comparison))?;
    if let Some(path) = &args.tsv {
        emit(Some(path), &eval::report_tsv(&rows, comparison))?;
    }
    Ok(())
}

fn pipeline_cmd(args: PipelineArgs) -> Result<(), Failure> {
    require(&args.config)?;
    let mut config = PipelineConfig::from_file(&args.config).map_err(|e| usage(e.to_string()))?;
    let cwd = Path::new(".");
    for item in &args.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        config.set(key.trim(), value.trim(), cwd).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(dir) = args.output_dir {
        config.output_dir = dir;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let outcome = pipeline::run_pipeline(&config).map_err(|e| stage(e.stage, e.message))?;
    if let Some(rows) = &outcome.report {
        let cmp = outcome.comparison.map(|m| ("refined", "baseline", m));
        for line in eval::report_text(rows, cmp) {
            println!("{line}");
        }
    }
    for path in &outcome.artifacts {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Clean(a) => clean(a),
        Command::Train(a) => train(a),
        Command::Refine(a) => refine_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("taxorefine: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

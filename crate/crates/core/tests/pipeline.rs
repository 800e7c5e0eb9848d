use std::path::{Path, PathBuf};

use taxorefine::pipeline::{self, BackendKind, PipelineConfig};
use taxorefine::taxcore;
use taxorefine::Term;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/food").join(name)
}

fn config(name: &str, out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::from_file(&fixture(name)).unwrap();
    c.output_dir = out.to_path_buf();
    c
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn poincare_run_refines_toy_taxonomy() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("pipeline.conf", dir.path());
    let outcome = pipeline::run_pipeline(&c).unwrap();
    assert_eq!(outcome.artifacts.len(), 5);
    let expected = format!("# taxorefine seed={} config={}", c.seed, c.hash());
    for a in &outcome.artifacts {
        assert_eq!(header(a), expected, "{}", a.display());
    }

    let refined = &outcome.refined;
    assert!(refined.is_acyclic());
    assert_eq!(refined.vocabulary(), outcome.baseline.vocabulary());
    assert!(refined.edges().iter().all(|(c, p)| c != p && c != refined.root()));
    // the root-as-child edge and the self-loop in the input are gone
    assert!(!outcome.baseline.contains_edge(&Term::new("food").unwrap(), &Term::new("fruit").unwrap()));
    assert_eq!(outcome.baseline_cycles_removed, 2);

    let rows = outcome.report.unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["baseline", "root", "refined"]);
    assert_eq!(rows[1].structure.orphan_count, 0);

    // the written taxonomy parses back to the refined one
    let lines = pipeline::read_lines(&dir.path().join(pipeline::REFINED_TAXONOMY)).unwrap();
    let back = taxcore::parse_taxonomy(&lines, refined.root().clone()).unwrap();
    assert_eq!(back.edges(), refined.edges());
}

#[test]
fn euclid_run_skips_training() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("pipeline.euclid.conf", dir.path());
    assert_eq!(c.backend, BackendKind::Euclid);
    let outcome = pipeline::run_pipeline(&c).unwrap();
    let names: Vec<String> = outcome
        .artifacts
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        [pipeline::EUCLID_MODEL, pipeline::REFINED_TAXONOMY, pipeline::REFINEMENT_LOG, pipeline::EVAL_TSV]
    );
    assert!(outcome.refined.is_acyclic());
    // zero vector for "kumquat" and terms outside the vocabulary are dropped
    let model = std::fs::read_to_string(dir.path().join(pipeline::EUCLID_MODEL)).unwrap();
    assert!(!model.contains("kumquat"));
    assert!(model.contains("green_apple"));
}

#[test]
fn seed_changes_hash_not_output_dir() {
    let a = config("pipeline.conf", Path::new("/tmp/x"));
    let b = config("pipeline.conf", Path::new("/tmp/y"));
    assert_eq!(a.hash(), b.hash());
    let c = PipelineConfig { seed: 8, ..a.clone() };
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn stage_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "0\tonly two\n").unwrap();
    let mut c = config("pipeline.conf", &dir.path().join("out"));
    c.taxonomy = Some(bad);
    let e = pipeline::run_pipeline(&c).unwrap_err();
    assert_eq!(e.stage, "load");

    let mut c = config("pipeline.conf", &dir.path().join("out"));
    c.train.burn_in_epochs = c.train.epochs;
    assert_eq!(pipeline::run_pipeline(&c).unwrap_err().stage, "train");

    let mut c = config("pipeline.conf", &dir.path().join("out"));
    c.relations_domain = Some(dir.path().join("absent.tsv"));
    let e = pipeline::run_pipeline(&c).unwrap_err();
    assert_eq!(e.stage, "config");
    assert!(e.message.contains("absent.tsv"));
}

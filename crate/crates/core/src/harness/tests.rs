use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::{build_encoder, init_encoder_params};
use super::*;
use crate::corpus::Vocabulary;
use crate::error::AtagError;
use crate::generator::Decoder;
use crate::graph::{build_from_tuples, AtagStructure, Thresholds};
use crate::lexicon::{ExtractionTuple, Extractor};

fn tiny() -> RunConfig {
    RunConfig {
        synthetic_cases: 16,
        abnormality_threshold: 2,
        dim: 8,
        heads: 2,
        layers: 1,
        recursions: 1,
        phase1_epochs: 1,
        phase2_epochs: 1,
        batch_size: 4,
        max_sentences: 4,
        max_words: 8,
        ..RunConfig::default()
    }
}

fn setup(config: &RunConfig) -> (Corpora, AtagStructure) {
    let corpora = load_corpora(config).unwrap();
    let graph = resolve_graph(config, &corpora.train, &Extractor::bundled()).unwrap();
    (corpora, graph)
}

#[test]
fn zero_epochs_keep_initial_weights() {
    let mut config = tiny();
    config.phase1_epochs = 0;
    config.phase2_epochs = 0;
    let (corpora, graph) = setup(&config);
    let trained = train(&config, &graph, &corpora.train, &Extractor::bundled()).unwrap();

    let vocab = Vocabulary::build(&corpora.train, config.min_token_frequency).unwrap();
    let encoder = build_encoder(&graph, &config).unwrap();
    let decoder = Decoder::new(config.decoder_config(vocab.len())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let enc = init_encoder_params(&encoder, &config, &mut rng);
    let dec = decoder.init_params(&mut rng);
    assert_eq!(trained.encoder_params, enc);
    assert_eq!(trained.decoder_params, dec);
    assert!(trained.history.phase1.is_empty() && trained.history.phase2.is_empty());
}

#[test]
fn phase_two_leaves_encoder_untouched() {
    let mut config = tiny();
    config.phase2_epochs = 0;
    let (corpora, graph) = setup(&config);
    let ex = Extractor::bundled();
    let before = train(&config, &graph, &corpora.train, &ex).unwrap();
    config.phase2_epochs = 3;
    let after = train(&config, &graph, &corpora.train, &ex).unwrap();
    assert_eq!(before.encoder_params, after.encoder_params);
    assert_ne!(before.decoder_params, after.decoder_params);
    assert_eq!(after.history.phase2.len(), 3);
}

#[test]
fn graph_from_another_corpus_is_rejected() {
    let config = tiny();
    let (corpora, _) = setup(&config);
    let foreign: Vec<Vec<ExtractionTuple>> = (0..4)
        .map(|_| vec![ExtractionTuple::positive("unrelatedoma", &["left"])])
        .collect();
    let graph = build_from_tuples(&foreign, Thresholds { abnormality: 1, attribute: 1, edge: 1 }).unwrap();
    let err = train(&config, &graph, &corpora.train, &Extractor::bundled()).unwrap_err();
    assert!(matches!(err, AtagError::Validation(_)), "{err}");
}

#[test]
fn checkpoint_round_trip_and_hash_checks() {
    let config = tiny();
    let (corpora, graph) = setup(&config);
    let trained = train(&config, &graph, &corpora.train, &Extractor::bundled()).unwrap();
    let ckpt = Checkpoint::new(&config, &graph, trained).unwrap();
    let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
    assert_eq!(back, ckpt);

    let mut tampered = ckpt.clone();
    tampered.config.seed += 1;
    let err = Checkpoint::from_json(&tampered.to_json().unwrap()).unwrap_err();
    assert!(matches!(err, AtagError::HashMismatch { .. }), "{err}");

    let mut versioned = ckpt.clone();
    versioned.format = "atag-checkpoint/0".into();
    assert!(matches!(
        Checkpoint::from_json(&versioned.to_json().unwrap()),
        Err(AtagError::Version { .. })
    ));

    let mut other = config.clone();
    other.abnormality_threshold = 3;
    let (_, other_graph) = setup(&other);
    assert_ne!(other_graph.content_hash().unwrap(), graph.content_hash().unwrap());
    assert!(matches!(Model::new(ckpt, &other_graph), Err(AtagError::HashMismatch { .. })));
}

#[test]
fn generation_is_repeatable() {
    let config = tiny();
    let (corpora, graph) = setup(&config);
    let trained = train(&config, &graph, &corpora.train, &Extractor::bundled()).unwrap();
    let model = Model::new(Checkpoint::new(&config, &graph, trained).unwrap(), &graph).unwrap();
    let a = reports_to_string(&generate_reports(&model, &corpora.eval).unwrap()).unwrap();
    let b = reports_to_string(&generate_reports(&model, &corpora.eval).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(parse_reports(&a, "mem").unwrap().len(), corpora.eval.len());
}

#[test]
fn postprocess_drops_repeats_and_short_sentences() {
    let s = |t: &str| t.split(' ').map(String::from).collect::<Vec<_>>();
    let out = postprocess(vec![s("heart size normal"), s("no effusion"), s("heart size normal"), s("clear")]);
    assert_eq!(out, vec![s("heart size normal"), s("no effusion")]);
}

#[test]
fn pairing_requires_matching_case_ids() {
    let config = tiny();
    let (corpora, _) = setup(&config);
    let mut gen: Vec<GeneratedReport> = corpora
        .eval
        .iter()
        .map(|c| GeneratedReport { case_id: c.case_id.clone(), report: "heart size is normal .".into() })
        .collect();
    assert_eq!(pair_reports(&corpora.eval, &gen).unwrap().len(), gen.len());
    gen.pop();
    assert!(pair_reports(&corpora.eval, &gen).is_err());
}

#[test]
fn pipeline_is_byte_stable() {
    let config = tiny();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(&config, a.path()).unwrap();
    run_pipeline(&config, b.path()).unwrap();
    for name in ["config.toml", "graph.json", "checkpoint.json", "reports.jsonl", "scores.txt", "manifest.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    assert_eq!(ra.manifest.files.len(), 5);
    assert_eq!(ra.manifest.config_hash, config.hash());
    let saved = Checkpoint::load(a.path().join("checkpoint.json")).unwrap();
    assert_eq!(saved, ra.checkpoint);
    let reloaded = RunConfig::load(a.path().join("config.toml")).unwrap();
    assert_eq!(reloaded, config);
}

#[test]
fn study_tables_have_the_documented_rows() {
    assert!(matches!("table-9".parse::<Study>(), Err(AtagError::Config(_))));
    let mut config = tiny();
    config.synthetic_cases = 32;
    config.phase1_epochs = 0;
    config.phase2_epochs = 0;

    let gate = reproduce(Study::GateAblation, &config, &[1, 2], None).unwrap();
    let labels: Vec<_> = gate.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["base", "+ATAG", "+ATAG+GATE"]);
    assert!(gate.rows.iter().all(|r| r.values.len() == reproduce::COLUMNS.len()));

    let dir = tempfile::tempdir().unwrap();
    let sizes = reproduce(Study::GraphSize, &config, &[1], Some(dir.path())).unwrap();
    assert_eq!(sizes.rows.len(), 3);
    let (corpora, _) = setup(&config);
    let held = corpora.train.len() / 5;
    let train_cases = &corpora.train[..corpora.train.len() - held];
    for (row, t) in sizes.rows.iter().zip([2, 3, 4]) {
        let mut c = config.clone();
        c.abnormality_threshold = t;
        let stats = resolve_graph(&c, train_cases, &Extractor::bundled()).unwrap().stats();
        assert_eq!((row.abnormalities, row.attributes), (stats.abnormalities, stats.attributes));
    }
    let table = std::fs::read_to_string(dir.path().join("table.tsv")).unwrap();
    assert_eq!(table, sizes.to_text());
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn study_reruns_are_byte_identical() {
    let mut config = tiny();
    config.phase2_epochs = 2;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    reproduce(Study::GateAblation, &config, &[3], Some(a.path())).unwrap();
    reproduce(Study::GateAblation, &config, &[3], Some(b.path())).unwrap();
    for name in ["base/seed3/scores.txt", "+ATAG+GATE/seed3/scores.txt", "table.tsv", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

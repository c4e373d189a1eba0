use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use atag::corpus::{generate_synthetic_corpus, load_corpus, write_corpus, CorpusFormat, ReportCase, SyntheticSpec};
use atag::generator::{DecodeOptions, DecoderKind};
use atag::graph::{build_from_annotations, build_from_reports, intersect, AtagStructure, Thresholds};
use atag::harness::train::case_tuples;
use atag::harness::{
    generate_reports, load_corpora, load_reports, radrqi_config, reproduce, resolve_graph, run_pipeline,
    score_reports, train, Checkpoint, Model, RunConfig, RunDirectory, Study, DEFAULT_SEEDS,
};
use atag::lexicon::{Extractor, Lexicon};
use atag::metrics::RadRqiConfig;

#[derive(Parser)]
#[command(name = "atag", version, about = "Attributed abnormality graphs for report generation and scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate or synthesize corpora.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Run the lexicon extractor over a corpus.
    #[command(subcommand)]
    Lexicon(LexiconCommand),
    /// Build a graph file from a corpus.
    BuildGraph(BuildGraphArgs),
    /// Inspect or combine graph files.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Two-phase training into a run directory.
    Train(TrainArgs),
    /// Write one generated report per case.
    Generate(GenerateArgs),
    /// Score generated reports against references.
    Evaluate(EvaluateArgs),
    /// Build graph, train, generate and evaluate in one run directory.
    Run(TrainArgs),
    /// Run a named study over several seeds.
    Reproduce(ReproduceArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    Validate { path: PathBuf },
    Synth {
        /// Generator settings; the bundled ones when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Overrides the generator case count.
        #[arg(long)]
        cases: Option<usize>,
        /// Overrides the generator feature width.
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum LexiconCommand {
    Extract {
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BuildMode {
    Annotations,
    Reports,
}

#[derive(Args)]
struct BuildGraphArgs {
    #[arg(long, value_enum, default_value = "annotations")]
    mode: BuildMode,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    abn_freq: usize,
    #[arg(long, default_value_t = 2)]
    attr_freq: usize,
    #[arg(long, default_value_t = 2)]
    edge_freq: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum GraphCommand {
    Stats { path: PathBuf },
    /// Keeps only the abnormalities and attributes present in both graphs.
    Intersect {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Flat TOML run configuration; defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Must match the decoder stored in the checkpoint.
    #[arg(long)]
    decoder: Option<DecoderKind>,
    #[arg(long)]
    out: PathBuf,
    /// Per-token attention and gate trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    gen: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Ranks categories by graph node frequency; by reference frequency when absent.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    alpha_b: f64,
    #[arg(long, default_value_t = 25)]
    top_k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// gate-ablation or graph-size.
    study: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn extractor(lexicon: Option<&Path>) -> Result<Extractor> {
    Ok(match lexicon {
        Some(p) => Extractor::new(Lexicon::load(p)?),
        None => Extractor::bundled(),
    })
}

fn config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn corpus(path: &Path) -> Result<Vec<ReportCase>> {
    Ok(load_corpus(path, CorpusFormat::JsonLines)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus(CorpusCommand::Validate { path }) => {
            let cases = corpus(&path)?;
            println!("{}: {} cases", path.display(), cases.len());
        }
        Command::Corpus(CorpusCommand::Synth { spec, seed, cases, feature_dim, out }) => {
            let mut spec = match spec {
                Some(p) => SyntheticSpec::load(p)?,
                None => SyntheticSpec::bundled(),
            };
            if let Some(n) = cases {
                spec.cases = n;
            }
            if let Some(d) = feature_dim {
                spec.feature_dim = d;
            }
            let cases = generate_synthetic_corpus(&spec, seed)?;
            write_corpus(&out, &cases)?;
            println!("wrote {} cases to {}", cases.len(), out.display());
        }
        Command::Lexicon(LexiconCommand::Extract { lexicon, input, out }) => {
            let ex = extractor(lexicon.as_deref())?;
            let mut text = String::new();
            for case in corpus(&input)? {
                let record = serde_json::json!({
                    "case_id": case.case_id,
                    "source": if case.annotations.is_empty() { "report" } else { "annotations" },
                    "tuples": case_tuples(&case, &ex),
                });
                let _ = writeln!(text, "{record}");
            }
            write(&out, &text)?;
        }
        Command::BuildGraph(a) => {
            let ex = extractor(a.lexicon.as_deref())?;
            let cases = corpus(&a.corpus)?;
            let t = Thresholds { abnormality: a.abn_freq, attribute: a.attr_freq, edge: a.edge_freq };
            let graph = match a.mode {
                BuildMode::Annotations => build_from_annotations(&cases, &ex, t)?,
                BuildMode::Reports => build_from_reports(&cases, &ex, t)?,
            };
            graph.save(&a.out)?;
            print!("{}", graph.stats());
        }
        Command::Graph(GraphCommand::Stats { path }) => {
            print!("{}", AtagStructure::load(&path)?.stats());
        }
        Command::Graph(GraphCommand::Intersect { first, second, out }) => {
            let g = intersect(&AtagStructure::load(&first)?, &AtagStructure::load(&second)?)?;
            g.save(&out)?;
            print!("{}", g.stats());
        }
        Command::Train(a) => {
            let config = config(a.config.as_deref())?;
            let ex = Extractor::bundled();
            let corpora = load_corpora(&config)?;
            let graph = resolve_graph(&config, &corpora.train, &ex)?;
            let mut dir = RunDirectory::create(&a.out, &config.hash())?;
            dir.set_graph_hash(graph.content_hash()?);
            dir.write("config.toml", "config", &config.to_toml()?)?;
            dir.write("graph.json", "graph", &graph.to_json()?)?;
            let trained = train(&config, &graph, &corpora.train, &ex)?;
            let ckpt = Checkpoint::new(&config, &graph, trained)?;
            dir.write("checkpoint.json", "checkpoint", &ckpt.to_json()?)?;
            dir.finish()?;
            let last = |h: &[f64]| h.last().map_or("-".to_string(), |l| format!("{l:.6}"));
            println!(
                "phase 1 loss {} / phase 2 loss {}; run directory {}",
                last(&ckpt.history.phase1),
                last(&ckpt.history.phase2),
                a.out.display()
            );
        }
        Command::Generate(a) => {
            let ckpt = Checkpoint::load(&a.checkpoint)?;
            if let Some(kind) = a.decoder {
                if kind != ckpt.config.decoder {
                    bail!("checkpoint holds a {:?} decoder, not {kind:?}", ckpt.config.decoder);
                }
            }
            let graph = AtagStructure::load(&a.graph)?;
            let model = Model::new(ckpt, &graph)?;
            let cases = corpus(&a.corpus)?;
            let reports = generate_reports(&model, &cases)?;
            write(&a.out, &atag::harness::reports_to_string(&reports)?)?;
            if let Some(path) = a.trace {
                let mut text = String::new();
                for case in &cases {
                    let g = model.generate_ids(case, DecodeOptions { trace: true, ..DecodeOptions::default() })?;
                    let record = serde_json::json!({ "case_id": case.case_id, "trace": g.trace });
                    let _ = writeln!(text, "{record}");
                }
                write(&path, &text)?;
            }
        }
        Command::Evaluate(a) => {
            let ex = extractor(a.lexicon.as_deref())?;
            let refs = corpus(&a.reference)?;
            let generated = load_reports(&a.gen)?;
            let cfg = match &a.graph {
                Some(p) => {
                    let run = RunConfig { alpha_b: a.alpha_b, top_k: a.top_k, ..RunConfig::default() };
                    radrqi_config(&run, &AtagStructure::load(p)?)?
                }
                None => {
                    let tuples: Vec<_> = refs.iter().map(|c| ex.report(&c.report())).collect();
                    RadRqiConfig::from_references(a.alpha_b, a.top_k, tuples.iter().map(Vec::as_slice))?
                }
            };
            let scores = score_reports(&refs, &generated, &ex, &cfg)?;
            let text = scores.to_score_file();
            match a.out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Run(a) => {
            let result = run_pipeline(&config(a.config.as_deref())?, &a.out)?;
            print!("{}", result.scores.to_score_file());
        }
        Command::Reproduce(a) => {
            let study: Study = a.study.parse()?;
            let seeds = if a.seeds.is_empty() { DEFAULT_SEEDS.to_vec() } else { a.seeds };
            let table = reproduce(study, &config(a.config.as_deref())?, &seeds, Some(&a.out))?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

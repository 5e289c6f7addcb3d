use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use trajrec::config::{ExperimentConfig, ModelKind, Precision};
use trajrec::curate::{drop_out_of_vocabulary, make_training_windows, read_sequences_jsonl, write_sequences_jsonl, WindowMode};
use trajrec::embed::EmbeddingTable;
use trajrec::evalkit::{
    build_corpus, build_embeddings, build_network, generate_world, relative_delta, run_experiment,
    run_experiment_with, run_sweep, write_rank_histogram_csv, write_sweep_csv, Corpus, EvalReport, SweepSpec,
};
use trajrec::seeds::{digest_hex, sub_seed};
use trajrec::seqmodel::{train_seq, AdamConfig, TrainConfig, Vocabulary};
use trajrec::synthcat::{read_events_jsonl, write_events_jsonl, World};
use trajrec::{Error, Result, Scalar, ShowId};

const WORLD_FILE: &str = "catalog.json";
const STREAMS_FILE: &str = "streams.jsonl";
const TRAIN_FILE: &str = "train_sequences.jsonl";
const TEST_FILE: &str = "test_sequences.jsonl";
const TOP_SHOWS_FILE: &str = "top_shows.json";
const EMBEDDING_FILE: &str = "embeddings.tsv";
const MODEL_FILE: &str = "model.tsv";
const NMF_W_FILE: &str = "nmf_w.tsv";
const NMF_H_FILE: &str = "nmf_h.tsv";
const REPORT_FILE: &str = "report.json";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "trajrec", about = "Trajectory-based show recommendation experiments")]
struct Cli {
    /// Experiment config (flat TOML). For `sweep`, a sweep spec.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Replaces the config's top-level seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the catalog, users, and stream log.
    Gen,
    /// Curate the generated log into train and test sequences.
    Curate,
    /// Train show embeddings on the curated data.
    Embed,
    /// Train the configured model on the curated data and embeddings.
    Train,
    /// Run the whole pipeline and write an evaluation report.
    Run,
    /// Run one experiment per value of a sweep axis.
    Sweep,
    /// Compare ordered against shuffled training sequences.
    AblateShuffle,
    /// Recompute metrics from stored reports and check artifact digests.
    Verify {
        /// Report files; defaults to every report in the output directory.
        reports: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen => cmd_gen(cli),
        Command::Curate => cmd_curate(cli),
        Command::Embed => cmd_embed(cli),
        Command::Train => cmd_train(cli),
        Command::Run => cmd_run(cli),
        Command::Sweep => cmd_sweep(cli),
        Command::AblateShuffle => cmd_ablate_shuffle(cli),
        Command::Verify { reports } => cmd_verify(cli, reports),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed_override {
        config.seed = seed;
    }
    Ok(config)
}

/// Creates the output directory if its parent exists.
fn out_dir(cli: &Cli) -> Result<&Path> {
    let out = cli.out.as_path();
    if !out.is_dir() {
        let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(Error::config(format!("parent of output directory {} does not exist", out.display())));
        }
        fs::create_dir(out).map_err(|e| Error::config(format!("cannot create {}: {e}", out.display())))?;
    }
    Ok(out)
}

fn write_file(dir: &Path, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut out = BufWriter::new(File::create(&path)?);
    write(&mut out)?;
    out.flush()?;
    Ok(path)
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>> {
    let path = dir.join(name);
    File::open(&path)
        .map(BufReader::new)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))
}

/// Records artifact digests and the config fingerprint that produced them.
fn record_manifest(dir: &Path, config: &ExperimentConfig, files: &[&str]) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut manifest: Value = match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)?,
        Err(_) => json!({}),
    };
    let fingerprint = config.fingerprint();
    if manifest["config_fingerprint"] != json!(fingerprint) {
        manifest = json!({ "config_fingerprint": fingerprint, "files": {} });
    }
    for name in files {
        let digest = digest_hex(&fs::read(dir.join(name))?);
        manifest["files"][*name] = json!(digest);
    }
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn file_digest(dir: &Path, name: &str) -> Result<String> {
    Ok(digest_hex(&fs::read(dir.join(name))?))
}

fn cmd_gen(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let dir = out_dir(cli)?;
    let generated = generate_world(&config)?;
    write_file(dir, WORLD_FILE, |out| {
        serde_json::to_writer(&mut *out, &generated.world)?;
        Ok(out.write_all(b"\n")?)
    })?;
    write_file(dir, STREAMS_FILE, |out| write_events_jsonl(&generated.events, out))?;
    record_manifest(dir, &config, &[WORLD_FILE, STREAMS_FILE])?;
    for name in [WORLD_FILE, STREAMS_FILE] {
        println!("{}  {}", file_digest(dir, name)?, dir.join(name).display());
    }
    Ok(())
}

fn read_world(dir: &Path) -> Result<World> {
    serde_json::from_reader(open(dir, WORLD_FILE)?).map_err(|e| Error::data(format!("{WORLD_FILE}: {e}")))
}

fn cmd_curate(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let dir = out_dir(cli)?;
    let world = read_world(dir)?;
    let events = read_events_jsonl(open(dir, STREAMS_FILE)?)?;
    let corpus = build_corpus(&config, &world, &events)?;
    write_file(dir, TRAIN_FILE, |out| write_sequences_jsonl(&corpus.train, out))?;
    write_file(dir, TEST_FILE, |out| write_sequences_jsonl(&corpus.test, out))?;
    write_file(dir, TOP_SHOWS_FILE, |out| Ok(serde_json::to_writer(out, &corpus.top_shows)?))?;
    record_manifest(dir, &config, &[TRAIN_FILE, TEST_FILE, TOP_SHOWS_FILE])?;
    println!(
        "train_sequences={} test_sequences={} top_shows={}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.top_shows.len()
    );
    Ok(())
}

fn read_corpus(dir: &Path) -> Result<Corpus> {
    let top_shows: BTreeSet<ShowId> =
        serde_json::from_reader(open(dir, TOP_SHOWS_FILE)?).map_err(|e| Error::data(format!("{TOP_SHOWS_FILE}: {e}")))?;
    Ok(Corpus {
        top_shows,
        train: read_sequences_jsonl(open(dir, TRAIN_FILE)?)?,
        test: read_sequences_jsonl(open(dir, TEST_FILE)?)?,
    })
}

fn cmd_embed(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    match config.precision {
        Precision::F32 => embed_typed::<f32>(cli, &config),
        Precision::F64 => embed_typed::<f64>(cli, &config),
    }
}

fn embed_typed<F: Scalar>(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let dir = out_dir(cli)?;
    let world = read_world(dir)?;
    let corpus = read_corpus(dir)?;
    let (table, loss) = build_embeddings::<F>(config, &world, &corpus)?;
    write_file(dir, EMBEDDING_FILE, |out| table.write_tsv(out))?;
    record_manifest(dir, config, &[EMBEDDING_FILE])?;
    println!(
        "kind={} shows={} dim={} final_loss={}",
        config.embedding.kind.name(),
        table.len(),
        table.dim(),
        loss.last().map_or("n/a".into(), |l| format!("{l:.6}"))
    );
    Ok(())
}

fn cmd_train(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    match config.precision {
        Precision::F32 => train_typed::<f32>(cli, &config),
        Precision::F64 => train_typed::<f64>(cli, &config),
    }
}

fn train_typed<F: Scalar>(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let dir = out_dir(cli)?;
    let corpus = read_corpus(dir)?;
    if config.model.kind == ModelKind::Cf {
        let shows: Vec<ShowId> = corpus.top_shows.iter().copied().collect();
        let histories: Vec<Vec<ShowId>> = corpus
            .train
            .iter()
            .map(|s| s.shows.iter().filter(|x| corpus.top_shows.contains(x)).copied().collect())
            .collect();
        let matrix = trajrec::cfbase::build_interaction_matrix(&histories, &shows)?;
        let nmf = trajrec::cfbase::NmfConfig {
            rank: config.cf.rank,
            max_iters: config.cf.max_iters,
            tol: config.cf.tol,
            seed: sub_seed(config.seed, "nmf", 0),
        };
        let factors = trajrec::cfbase::nmf_factorize::<F>(&matrix, &nmf)?;
        write_file(dir, NMF_W_FILE, |out| factors.w_table()?.write_tsv(out))?;
        write_file(dir, NMF_H_FILE, |out| factors.h_table()?.write_tsv(out))?;
        record_manifest(dir, config, &[NMF_W_FILE, NMF_H_FILE])?;
        println!("model=cf iterations={} objective={:.6}", factors.objective.len() - 1, factors.objective.last().unwrap());
        return Ok(());
    }
    let embeddings = EmbeddingTable::<F>::read_tsv(open(dir, EMBEDDING_FILE)?)?;
    let vocab = Vocabulary::new(&corpus.top_shows);
    let windows = make_training_windows(&corpus.train, config.curation.k, WindowMode::Training)?;
    let (windows, _) = drop_out_of_vocabulary(windows, &corpus.top_shows);
    let mut network = build_network::<F>(config, embeddings.dim(), vocab.len())?;
    let m = &config.model;
    let outcome = train_seq(
        &mut network,
        &windows,
        &embeddings,
        &vocab,
        &TrainConfig {
            epochs: m.epochs,
            batch_size: m.batch_size,
            adam: AdamConfig { lr: m.lr, beta1: m.beta1, beta2: m.beta2, eps: m.eps },
            seed: sub_seed(config.seed, "train", 0),
        },
    )?;
    write_file(dir, MODEL_FILE, |out| network.write_tsv(out))?;
    record_manifest(dir, config, &[MODEL_FILE])?;
    println!(
        "model={} windows={} final_loss={}",
        m.kind.name(),
        windows.len(),
        outcome.loss_curve.last().map_or("n/a".into(), |l| format!("{l:.6}"))
    );
    Ok(())
}

fn write_report(dir: &Path, name: &str, report: &EvalReport) -> Result<()> {
    write_file(dir, name, |out| Ok(out.write_all((report.to_json_pretty() + "\n").as_bytes())?))?;
    Ok(())
}

fn cmd_run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let dir = out_dir(cli)?;
    let report = run_experiment(&config)?;
    write_report(dir, REPORT_FILE, &report)?;
    write_file(dir, "rank_histogram.csv", |out| write_rank_histogram_csv(&report.ranks, out))?;
    record_manifest(dir, &config, &[REPORT_FILE, "rank_histogram.csv"])?;
    println!("{}", report.summary_line());
    Ok(())
}

fn cmd_sweep(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| Error::config("sweep needs --config <spec>"))?;
    let mut spec = SweepSpec::load(path)?;
    if let Some(seed) = cli.seed_override {
        spec.base_config.seed = seed;
    }
    let dir = out_dir(cli)?;
    let cells = run_sweep(&spec, cli.parallel)?;
    let mut worst = 0;
    for (i, cell) in cells.iter().enumerate() {
        match &cell.outcome {
            Ok(report) => {
                write_report(dir, &format!("cell_{i:02}.json"), report)?;
                println!("{}={} {}", spec.axis.name(), cell.value, report.summary_line());
            }
            Err(failure) => {
                eprintln!("{}={} failed: {}", spec.axis.name(), cell.value, failure.message);
                worst = worst.max(failure.exit_code);
            }
        }
    }
    write_file(dir, "sweep.csv", |out| write_sweep_csv(&cells, out))?;
    match worst {
        0 => Ok(()),
        2 => Err(Error::config("one or more sweep cells failed")),
        4 => Err(Error::Numeric("one or more sweep cells failed".into())),
        _ => Err(Error::data("one or more sweep cells failed")),
    }
}

fn cmd_ablate_shuffle(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let dir = out_dir(cli)?;
    let generated = generate_world(&config).map_err(|e| e.at(trajrec::Stage::Generate))?;
    let ordered_config = ExperimentConfig { shuffle: false, ..config.clone() };
    let shuffled_config = ExperimentConfig { shuffle: true, ..config };
    let ordered = run_experiment_with(&ordered_config, &generated)?;
    let shuffled = run_experiment_with(&shuffled_config, &generated)?;
    write_report(dir, "report_ordered.json", &ordered)?;
    write_report(dir, "report_shuffled.json", &shuffled)?;
    let delta = relative_delta(ordered.success_at_k, shuffled.success_at_k);
    println!("ordered: {}", ordered.summary_line());
    println!("shuffled: {}", shuffled.summary_line());
    println!("delta_sa20_relative={delta:.4}");
    Ok(())
}

fn cmd_verify(cli: &Cli, reports: &[PathBuf]) -> Result<()> {
    let dir = cli.out.as_path();
    let mut paths = reports.to_vec();
    if paths.is_empty() {
        let mut found: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.ends_with(".json") && (name.starts_with("report") || name.starts_with("cell_"))
            })
            .collect();
        found.sort();
        paths = found;
    }
    if paths.is_empty() {
        return Err(Error::data(format!("no reports found in {}", dir.display())));
    }
    for path in &paths {
        let report: EvalReport = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        report.verify().map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        println!("ok {} {}", path.display(), report.summary_line());
    }
    if reports.is_empty() {
        if let Ok(bytes) = fs::read(dir.join(MANIFEST_FILE)) {
            let manifest: Value = serde_json::from_slice(&bytes)?;
            if let Some(files) = manifest["files"].as_object() {
                for (name, digest) in files {
                    let actual = file_digest(dir, name)?;
                    if Some(actual.as_str()) != digest.as_str() {
                        return Err(Error::data(format!("{name}: digest does not match the manifest")));
                    }
                    println!("ok {name} {actual}");
                }
            }
        }
    }
    Ok(())
}

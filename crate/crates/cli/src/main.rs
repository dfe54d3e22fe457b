use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use qcgen_core::classifier::{train_classifier, Classifier, LABEL_REAL};
use qcgen_core::config::Settings;
use qcgen_core::corpus::{self, list_qasm_files, CorpusStats, NamedCircuit};
use qcgen_core::generator::{self, ManifestEntry, Timing};
use qcgen_core::nn::checkpoint;
use qcgen_core::qasm::{self, parse_lenient, parse_strict, serialize, validate};
use qcgen_core::random_gen::random_circuit;
use qcgen_core::structure::{self, extract_metrics, interaction_graph, MetricsRow, Source};
use qcgen_core::vocab::build_vocab;
use qcgen_core::{selftest, synth};

#[derive(Parser)]
#[command(name = "qcgen", version, about = "Generate, classify and compare OpenQASM 2.0 circuits")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML or JSON settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a corpus directory and write its statistics and vocabulary.
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Vocabulary file (default: vocab.json next to --out).
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
    /// Train the generator on the corpus a stats file describes.
    TrainGenerator {
        stats: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Corpus directory (default: the one recorded in the stats file).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Generate circuits with a trained generator.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        no_repeat: Option<usize>,
    },
    /// Write random baseline circuits matched to a corpus.
    Random {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the real-versus-random classifier.
    TrainClassifier {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        random: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        split: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Evaluation report (default: eval_report.json next to --out).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Label every circuit in a directory as real (0) or random (1).
    Classify {
        #[arg(long)]
        model: PathBuf,
        dir: PathBuf,
        /// Also write the results as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Strictly validate every circuit in a directory.
    Validate { dir: PathBuf },
    /// Compute structural metrics. Arguments are files or directories,
    /// optionally prefixed with `real:`, `random:` or `ketgpt:`.
    Analyze {
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Write interaction graphs as DOT files here.
        #[arg(long)]
        dot_dir: Option<PathBuf>,
    },
    /// Two-level clustering of a metrics CSV.
    Cluster {
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Summary JSON (default: clusters_summary.json next to --out).
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the built-in gradient, oracle and round-trip checks.
    Selftest,
    /// Write the structured synthetic corpus.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 56)]
        count: usize,
    },
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// `(name relative to dir, text)` for every `.qasm` file below `dir`, or
/// the file itself when `dir` is a file.
fn read_qasm(path: &Path) -> Result<Vec<(String, String)>> {
    let files = if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        list_qasm_files(path)?
    };
    files
        .iter()
        .map(|f| {
            let name = f
                .strip_prefix(path)
                .ok()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or_else(|| Path::new(f.file_name().unwrap_or_default()))
                .to_string_lossy()
                .replace('\\', "/");
            let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            Ok((name, text))
        })
        .collect()
}

fn read_circuits(dir: &Path) -> Result<Vec<NamedCircuit>> {
    let files = read_qasm(dir)?;
    if files.is_empty() {
        bail!("no .qasm files in {}", dir.display());
    }
    Ok(files
        .into_iter()
        .map(|(name, text)| NamedCircuit {
            name,
            circuit: parse_lenient(&text).circuit,
        })
        .collect())
}

fn load_stats(path: &Path) -> Result<CorpusStats> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    CorpusStats::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ingest(settings: &Settings, dir: &Path, out: &Path, vocab_out: Option<PathBuf>) -> Result<()> {
    let root = dir.canonicalize().with_context(|| format!("opening {}", dir.display()))?;
    let corpus = corpus::ingest(&root, &settings.corpus)?;
    let vocab = build_vocab(&corpus.stats);
    write(out, corpus.stats.to_json()? + "\n")?;
    let vocab_path = vocab_out.unwrap_or_else(|| sibling(out, "vocab.json"));
    write(&vocab_path, vocab.to_json() + "\n")?;
    println!(
        "{} files, {} unique statements, vocabulary size {}",
        corpus.stats.file_count,
        corpus.stats.unique_statements.len(),
        vocab.size()
    );
    Ok(())
}

struct TrainOverrides {
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
}

fn train_gen(
    settings: &Settings,
    seed: u64,
    stats_path: &Path,
    out: &Path,
    corpus_dir: Option<PathBuf>,
    o: TrainOverrides,
) -> Result<()> {
    let stats = load_stats(stats_path)?;
    let dir = corpus_dir
        .or_else(|| stats.source_dir.clone())
        .context("stats file records no corpus directory; pass --corpus")?;
    let circuits: Vec<NamedCircuit> = stats
        .files
        .iter()
        .map(|name| {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            Ok(NamedCircuit {
                name: name.clone(),
                circuit: parse_lenient(&text).circuit,
            })
        })
        .collect::<Result<_>>()?;
    let vocab = build_vocab(&stats);
    let mut train = settings.generator_train(seed);
    train.epochs = o.epochs.unwrap_or(train.epochs);
    train.learning_rate = o.learning_rate.unwrap_or(train.learning_rate);
    train.batch_size = o.batch_size.unwrap_or(train.batch_size);
    let trained = generator::train_generator(&circuits, &vocab, settings.generator_model(vocab.size()), &train)?;
    let mut meta = generator::checkpoint_metadata(&vocab, &stats);
    meta["epoch_losses"] = serde_json::json!(trained.epoch_losses);
    meta["skipped"] = serde_json::json!(trained.skipped);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    checkpoint::save(out, &trained.model, &meta)?;
    println!(
        "trained on {} circuits ({} skipped), final epoch loss {:.5}",
        circuits.len() - trained.skipped.len(),
        trained.skipped.len(),
        trained.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Serialize)]
struct Failure {
    seed: u64,
    error: String,
}

#[derive(Serialize)]
struct Manifest {
    files: Vec<ManifestEntry>,
    failures: Vec<Failure>,
}

fn generate(
    settings: &Settings,
    seed: u64,
    model_path: &Path,
    count: u64,
    out: &Path,
    top_k: Option<usize>,
    no_repeat: Option<usize>,
) -> Result<()> {
    let (model, meta) = checkpoint::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let (vocab, stats) = generator::from_checkpoint_metadata(&meta).map_err(anyhow::Error::msg)?;
    let mut opts = settings.generation.clone();
    opts.top_k = top_k.unwrap_or(opts.top_k);
    opts.no_repeat_window = no_repeat.unwrap_or(opts.no_repeat_window);
    fs::create_dir_all(out)?;

    let results: Vec<_> = (seed..seed + count)
        .into_par_iter()
        .map(|s| (s, generator::timed(|| generator::generate(&model, &vocab, &stats, s, &opts))))
        .collect();
    let mut manifest = Manifest {
        files: Vec::new(),
        failures: Vec::new(),
    };
    let mut timings = Vec::new();
    for (s, (result, seconds)) in results {
        match result {
            Ok(g) => {
                write(&out.join(g.file_name()), serialize(&g.circuit))?;
                timings.push(Timing {
                    file: g.file_name(),
                    seconds,
                });
                manifest.files.push(ManifestEntry::from_generation(&g));
            }
            Err(e) => {
                log::warn!("seed {s}: {e}");
                manifest.failures.push(Failure {
                    seed: s,
                    error: e.to_string(),
                });
            }
        }
    }
    write(&out.join("manifest.json"), to_json(&manifest)?)?;
    write(&out.join("timings.json"), to_json(&timings)?)?;
    let valid = manifest.files.iter().filter(|e| e.valid).count();
    println!(
        "generated {} files ({} valid, {} failed)",
        manifest.files.len(),
        valid,
        manifest.failures.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct RandomEntry {
    file: String,
    seed: u64,
    qubit_count: usize,
    gate_count: usize,
    valid: bool,
}

fn random(seed: u64, stats_path: &Path, count: u64, out: &Path) -> Result<()> {
    let stats = load_stats(stats_path)?;
    let vocab = build_vocab(&stats);
    if vocab.size() == qcgen_core::vocab::NUM_SPECIALS {
        bail!("the corpus has no usable statements");
    }
    fs::create_dir_all(out)?;
    let circuits: Vec<_> = (seed..seed + count)
        .into_par_iter()
        .map(|s| random_circuit(&vocab, &stats, s))
        .collect();
    let mut entries = Vec::new();
    for r in &circuits {
        write(&out.join(r.file_name()), serialize(&r.circuit))?;
        entries.push(RandomEntry {
            file: r.file_name(),
            seed: r.seed,
            qubit_count: r.qubit_count,
            gate_count: r.circuit.gate_count(),
            valid: validate(&r.circuit).is_valid(),
        });
    }
    write(&out.join("manifest.json"), to_json(&entries)?)?;
    println!("wrote {} random circuits", entries.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_clf(
    settings: &Settings,
    seed: u64,
    real: &Path,
    random: &Path,
    out: &Path,
    split: Option<f64>,
    epochs: Option<usize>,
    report: Option<PathBuf>,
) -> Result<()> {
    let real = read_circuits(real)?;
    let random = read_circuits(random)?;
    let mut opts = settings.classifier_options(seed);
    opts.split = split.unwrap_or(opts.split);
    opts.train.epochs = epochs.unwrap_or(opts.train.epochs);
    let trained = train_classifier(&real, &random, &opts)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    checkpoint::save(out, &trained.classifier.model, &trained.classifier.metadata())?;
    let report_path = report.unwrap_or_else(|| sibling(out, "eval_report.json"));
    write(&report_path, to_json(&trained.report)?)?;
    let m = trained.report.confusion_matrix;
    println!(
        "held-out accuracy {:.4} ({} of {}); tp {} tn {} fp {} fn {}",
        trained.report.accuracy,
        m.correct(),
        m.total(),
        m.tp,
        m.tn,
        m.fp,
        m.fn_
    );
    if !trained.report.shared_families.is_empty() {
        let names: Vec<&str> = trained.report.shared_families.iter().map(|f| f.family.as_str()).collect();
        println!("families on both sides of the split: {}", names.join(", "));
    }
    Ok(())
}

#[derive(Serialize)]
struct Classified {
    file: String,
    label: usize,
    probability: f64,
}

fn classify(model_path: &Path, dir: &Path, out: Option<PathBuf>) -> Result<()> {
    let (model, meta) = checkpoint::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let clf = Classifier::from_checkpoint(model, &meta)?;
    let files = read_qasm(dir)?;
    if files.is_empty() {
        bail!("no .qasm files in {}", dir.display());
    }
    let predictions: Vec<_> = files
        .par_iter()
        .map(|(_, text)| clf.classify_text(text))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for ((name, _), p) in files.iter().zip(&predictions) {
        println!("{name}\t{}\t{:.6}", p.label, p.probability);
        rows.push(Classified {
            file: name.clone(),
            label: p.label,
            probability: p.probability,
        });
    }
    let real = predictions.iter().filter(|p| p.label == LABEL_REAL).count();
    let fraction = real as f64 / predictions.len() as f64;
    println!("real fraction: {fraction:.4} ({real} of {})", predictions.len());
    if let Some(out) = out {
        write(
            &out,
            to_json(&serde_json::json!({ "files": rows, "real_fraction": fraction }))?,
        )?;
    }
    Ok(())
}

fn validate_dir(dir: &Path) -> Result<()> {
    let files = read_qasm(dir)?;
    if files.is_empty() {
        bail!("no .qasm files in {}", dir.display());
    }
    let mut valid = 0;
    for (name, text) in &files {
        match parse_strict(text) {
            Err(e) => println!("{name}: syntax error at {e}"),
            Ok(c) => {
                let report = validate(&c);
                match report.violations.first() {
                    None => valid += 1,
                    Some(v) => println!(
                        "{name}: {} violation(s), first: statement {} {:?} {}",
                        report.violations.len(),
                        v.statement,
                        v.kind,
                        v.detail
                    ),
                }
            }
        }
    }
    println!(
        "{:.1}% valid ({valid} of {})",
        100.0 * valid as f64 / files.len() as f64,
        files.len()
    );
    Ok(())
}

fn analyze(inputs: &[String], out: &Path, dot_dir: Option<PathBuf>) -> Result<()> {
    let mut rows = Vec::new();
    for input in inputs {
        let (source, path) = match input.split_once(':') {
            Some((s, p)) if s.parse::<Source>().is_ok() => (Some(s.parse::<Source>().expect("checked")), p),
            _ => (None, input.as_str()),
        };
        let files = read_qasm(Path::new(path))?;
        let metrics: Vec<MetricsRow> = files
            .par_iter()
            .map(|(name, text)| MetricsRow {
                source: source.unwrap_or_else(|| Source::infer(name)),
                file: name.clone(),
                metrics: extract_metrics(&parse_lenient(text).circuit),
            })
            .collect();
        if let Some(dot) = &dot_dir {
            for (name, text) in &files {
                let stem = name.trim_end_matches(".qasm").replace('/', "_");
                let graph = interaction_graph(&parse_lenient(text).circuit);
                write(&dot.join(format!("interaction_{stem}.dot")), graph.to_dot(&stem))?;
            }
        }
        rows.extend(metrics);
    }
    if rows.is_empty() {
        bail!("no .qasm files found");
    }
    let mut buf = Vec::new();
    structure::write_metrics_csv(&mut buf, &rows)?;
    write(out, buf)?;
    println!("wrote metrics for {} circuits", rows.len());
    Ok(())
}

fn cluster(settings: &Settings, seed: u64, metrics: &Path, out: &Path, summary: Option<PathBuf>, k: Option<usize>) -> Result<()> {
    let file = fs::File::open(metrics).with_context(|| format!("opening {}", metrics.display()))?;
    let rows = structure::read_metrics_csv(file).map_err(anyhow::Error::msg)?;
    if rows.len() < 2 {
        bail!("clustering needs at least two circuits");
    }
    let report = structure::cluster(&rows, k.unwrap_or(settings.structure.k_structure), seed);
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write(out, buf)?;
    write(
        &summary.unwrap_or_else(|| sibling(out, "clusters_summary.json")),
        report.to_json() + "\n",
    )?;
    println!("{} clusters over {} circuits", report.clusters.len(), rows.len());
    if let Some(share) = report.random_share_near_ketgpt {
        println!("mean random share in clusters with ketgpt circuits: {share:.4}");
    }
    Ok(())
}

fn run_selftest() -> Result<bool> {
    let results = selftest::run();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn synth_corpus(out: &Path, count: usize) -> Result<()> {
    fs::create_dir_all(out)?;
    for nc in synth::structured_corpus(count) {
        write(&out.join(&nc.name), qasm::serialize(&nc.circuit))?;
    }
    println!("wrote {count} circuits to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let seed = cli.seed;
    match cli.command {
        Command::Ingest { dir, out, vocab_out } => ingest(&settings, &dir, &out, vocab_out)?,
        Command::TrainGenerator {
            stats,
            out,
            corpus,
            epochs,
            learning_rate,
            batch_size,
        } => train_gen(
            &settings,
            seed,
            &stats,
            &out,
            corpus,
            TrainOverrides {
                epochs,
                learning_rate,
                batch_size,
            },
        )?,
        Command::Generate {
            model,
            count,
            out,
            top_k,
            no_repeat,
        } => generate(&settings, seed, &model, count, &out, top_k, no_repeat)?,
        Command::Random { stats, count, out } => random(seed, &stats, count, &out)?,
        Command::TrainClassifier {
            real,
            random,
            out,
            split,
            epochs,
            report,
        } => train_clf(&settings, seed, &real, &random, &out, split, epochs, report)?,
        Command::Classify { model, dir, out } => classify(&model, &dir, out)?,
        Command::Validate { dir } => validate_dir(&dir)?,
        Command::Analyze { inputs, out, dot_dir } => analyze(&inputs, &out, dot_dir)?,
        Command::Cluster { metrics, out, summary, k } => cluster(&settings, seed, &metrics, &out, summary, k)?,
        Command::Selftest => return run_selftest(),
        Command::SynthCorpus { out, count } => synth_corpus(&out, count)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

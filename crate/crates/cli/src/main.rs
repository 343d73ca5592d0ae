//! `od`: command-line surface over the outlier-detection toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use odkit_core::io::SyntheticKind;
use odkit_core::llm::ENV_API_KEY;
use odkit_core::registry::load_registry;
use odkit_core::{
    benchmark, builtin_registry, load_csv, load_model, make_synthetic, profile,
    profile_summary_text, render_text, save_csv, save_model, select, BenchConfig, BenchDataset,
    DetectorId, FittedDetector, Hyperparams, LabeledDataset, LlmClient, LlmConfig, OdError,
    Registry, SelectorConfig, SelectorMode,
};

#[derive(Parser)]
#[command(
    name = "od",
    version,
    about = "Outlier detection: profile datasets, pick a detector, fit, score, benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a dataset's shape, moments, noise, and modality.
    Profile {
        /// CSV file; header row, optional `label` column of 0/1.
        data: PathBuf,
        /// Emit the profile as one JSON object instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Recommend a detector for a dataset and explain the choice.
    Select {
        /// CSV file; a `label` column, when present, informs the profile.
        data: PathBuf,
        /// Free-text context forwarded to the language model prompts.
        #[arg(long)]
        notes: Option<String>,
        /// Use the deterministic symbolic selector; no network, no key.
        #[arg(long)]
        offline: bool,
        /// Candidate threshold δ: models scoring at least δ stay in the
        /// running (δ = -1 keeps the whole pool).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        delta: f64,
        /// Extra registry JSON merged over the built-in model catalog.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Write the full selection audit as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a detector on a CSV and write the model file.
    Fit {
        /// One of: ae, ae1svm, deepsvdd, devnet, iforest, knn, lof, lunar, vae.
        algorithm: String,
        /// Training CSV; `devnet` needs a `label` column.
        data: PathBuf,
        /// Where to write the fitted model (JSON).
        #[arg(long)]
        model_out: PathBuf,
        /// Assumed anomaly fraction in (0, 0.5].
        #[arg(long, default_value_t = 0.1)]
        contamination: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hyperparameter override as key=value; repeatable.
        #[arg(long = "hp", value_name = "KEY=VALUE")]
        hyperparams: Vec<String>,
    },
    /// Score a CSV with a fitted model: one `score,flag` line per row.
    Score {
        data: PathBuf,
        /// Model file written by `fit`.
        #[arg(long)]
        model_in: PathBuf,
        /// Write scores to this file instead of stdout.
        #[arg(long)]
        scores_out: Option<PathBuf>,
    },
    /// Benchmark a detector pool over a directory of labeled CSVs.
    Bench {
        /// Directory scanned (non-recursively) for *.csv files; every file
        /// needs a `label` column.
        dir: PathBuf,
        /// Comma-separated detector ids; defaults to all nine.
        #[arg(long, value_delimiter = ',')]
        pool: Option<Vec<String>>,
        /// Comma-separated seeds; each dataset is benchmarked once per seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Write the report JSON here (and the text table next to it as .txt).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Show the model catalog: strengths, weaknesses, and notes per detector.
    Registry {
        /// Extra registry JSON merged over the built-in catalog.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic benchmark dataset as CSV.
    Synth {
        /// One of: blob, highdim_sparse, skewed, correlated, multimodal,
        /// labeled_semi.
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Drop the label column from the output.
        #[arg(long)]
        unlabeled: bool,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError { code: 1, message: message.into() }
    }

    fn data(message: impl Into<String>) -> CliError {
        CliError { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> CliError {
        CliError { code: 3, message: message.into() }
    }
}

impl From<OdError> for CliError {
    fn from(err: OdError) -> CliError {
        let code = match &err {
            OdError::InvalidParam(_)
            | OdError::UnknownHyperparam { .. }
            | OdError::InvalidHyperparam { .. } => 1,
            OdError::InvalidData(_)
            | OdError::DimensionMismatch { .. }
            | OdError::LabelsRequired(_)
            | OdError::CsvCell { .. }
            | OdError::CsvFormat(_)
            | OdError::Registry(_) => 2,
            _ => 3,
        };
        CliError { code, message: err.to_string() }
    }
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes (`od ... | head`), like any
    // other line-oriented tool.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err)
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) =>
        {
            print!("{err}");
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Profile { data, json } => cmd_profile(&data, json),
        Command::Select { data, notes, offline, delta, registry, out } => {
            cmd_select(&data, notes, offline, delta, registry.as_deref(), out.as_deref())
        }
        Command::Fit { algorithm, data, model_out, contamination, seed, hyperparams } => {
            cmd_fit(&algorithm, &data, &model_out, contamination, seed, &hyperparams)
        }
        Command::Score { data, model_in, scores_out } => {
            cmd_score(&data, &model_in, scores_out.as_deref())
        }
        Command::Bench { dir, pool, seeds, report } => {
            cmd_bench(&dir, pool.as_deref(), seeds.as_deref(), report.as_deref())
        }
        Command::Registry { registry, json } => cmd_registry(registry.as_deref(), json),
        Command::Synth { kind, seed, out, unlabeled } => cmd_synth(&kind, seed, &out, unlabeled),
    }
}

/// Input files get data-error semantics (exit 2) with the path in front.
fn load_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    load_csv(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_catalog(path: Option<&Path>) -> Result<Registry, CliError> {
    match path {
        Some(p) => {
            load_registry(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
        }
        None => Ok(builtin_registry()),
    }
}

fn valid_ids() -> String {
    DetectorId::ALL
        .iter()
        .map(|id| id.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_detector(name: &str) -> Result<DetectorId, CliError> {
    name.parse().map_err(|_| {
        CliError::usage(format!("unknown detector \"{name}\"; valid ids: {}", valid_ids()))
    })
}

fn cmd_profile(data: &Path, json: bool) -> Result<(), CliError> {
    let dataset = load_dataset(data)?;
    let prof = profile(&dataset.data, dataset.labels.as_deref());
    if json {
        let text = serde_json::to_string_pretty(&prof)
            .map_err(|e| CliError::runtime(e.to_string()))?;
        println!("{text}");
    } else {
        println!("{}", profile_summary_text(&prof));
    }
    Ok(())
}

fn cmd_select(
    data: &Path,
    notes: Option<String>,
    offline: bool,
    delta: f64,
    registry: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let dataset = load_dataset(data)?;
    let catalog = load_catalog(registry)?;

    let key_present = std::env::var(ENV_API_KEY).map(|k| !k.is_empty()).unwrap_or(false);
    let (mode, mut client) = if offline {
        (SelectorMode::Offline, None)
    } else if key_present {
        // Any trouble reaching the model degrades to the symbolic path; a
        // selection is always produced.
        match LlmConfig::from_env().and_then(LlmClient::live) {
            Ok(c) => (SelectorMode::Llm, Some(c)),
            Err(e) => {
                eprintln!("warning: {e}; continuing offline");
                (SelectorMode::Offline, None)
            }
        }
    } else {
        return Err(CliError::usage(format!(
            "no {ENV_API_KEY} in the environment; pass --offline for the \
             deterministic symbolic selector, or export a key for LLM-assisted \
             selection"
        )));
    };

    let config = SelectorConfig {
        delta,
        mode,
        notes,
        ..SelectorConfig::default()
    };
    let result = select(
        &dataset.data,
        dataset.labels.as_deref(),
        &DetectorId::ALL,
        &catalog,
        &config,
        client.as_mut(),
    )?;

    if result.mode == SelectorMode::Llm && result.reason == "symbolic fallback" {
        eprintln!("warning: refinement replies were unusable; fell back to the symbolic choice");
    }

    println!("chosen: {}", result.chosen);
    println!("reason: {}", result.reason);
    let tags = result
        .tags
        .iter()
        .map(|t| t.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    println!("tags: {tags}");
    println!("scores (* = candidate):");
    let mut rows: Vec<(DetectorId, f64)> = result.scores.iter().map(|(&id, &s)| (id, s)).collect();
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
    for (id, score) in rows {
        let marker = if result.candidates.contains(&id) { " *" } else { "" };
        println!("  {:<10} {score:+.4}{marker}", id.as_str());
    }

    if let Some(path) = out {
        let audit = serde_json::to_string_pretty(&result)
            .map_err(|e| CliError::runtime(e.to_string()))?;
        std::fs::write(path, audit + "\n")
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        println!("audit written to {}", path.display());
    }
    Ok(())
}

fn cmd_fit(
    algorithm: &str,
    data: &Path,
    model_out: &Path,
    contamination: f64,
    seed: u64,
    assignments: &[String],
) -> Result<(), CliError> {
    let id = parse_detector(algorithm)?;
    let dataset = load_dataset(data)?;
    let mut hp = Hyperparams::new();
    for assignment in assignments {
        hp.set_from_str(assignment)
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let fitted = FittedDetector::fit_labeled(
        id,
        &dataset.data,
        dataset.labels.as_deref(),
        contamination,
        &hp,
        seed,
    )?;
    save_model(&fitted, model_out)
        .map_err(|e| CliError::runtime(format!("{}: {e}", model_out.display())))?;
    println!(
        "fitted {id} on {}x{}; threshold {}; model written to {}",
        dataset.data.n(),
        dataset.data.d(),
        fitted.threshold(),
        model_out.display()
    );
    Ok(())
}

fn cmd_score(data: &Path, model_in: &Path, scores_out: Option<&Path>) -> Result<(), CliError> {
    let dataset = load_dataset(data)?;
    let model =
        load_model(model_in).map_err(|e| CliError::data(format!("{}: {e}", model_in.display())))?;
    let scores = model.decision_function(&dataset.data)?;
    let flags = model.predict_labels(&dataset.data)?;
    let mut body = String::new();
    for (score, flag) in scores.values().iter().zip(&flags) {
        writeln!(body, "{score},{flag}").expect("string writes are infallible");
    }
    match scores_out {
        Some(path) => {
            std::fs::write(path, &body)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            println!(
                "scored {} rows; {} flagged; written to {}",
                flags.len(),
                flags.iter().filter(|&&f| f == 1).count(),
                path.display()
            );
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn cmd_bench(
    dir: &Path,
    pool: Option<&[String]>,
    seeds: Option<&[u64]>,
    report_path: Option<&Path>,
) -> Result<(), CliError> {
    let pool: Vec<DetectorId> = match pool {
        Some(names) => names
            .iter()
            .map(|n| parse_detector(n))
            .collect::<Result<_, _>>()?,
        None => DetectorId::ALL.to_vec(),
    };
    let seeds: Vec<u64> = seeds.map(<[u64]>::to_vec).unwrap_or_else(|| vec![0]);

    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::data(format!(
            "no .csv files in {}",
            dir.display()
        )));
    }

    let mut datasets = Vec::new();
    for path in &files {
        let dataset = load_dataset(path)?;
        if dataset.labels.is_none() {
            return Err(CliError::data(format!(
                "{}: benchmark datasets need a label column",
                path.display()
            )));
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        for &seed in &seeds {
            datasets.push(BenchDataset {
                name: format!("{stem}_s{seed}"),
                dataset: dataset.clone(),
                semi_supervised: false,
            });
        }
    }

    let report = benchmark(
        &datasets,
        &pool,
        &builtin_registry(),
        &BenchConfig::default(),
        None,
    )?;

    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::runtime(e.to_string()))?;
        std::fs::write(path, json + "\n")
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        let table_path = path.with_extension("txt");
        std::fs::write(&table_path, render_text(&report))
            .map_err(|e| CliError::runtime(format!("{}: {e}", table_path.display())))?;
        println!(
            "report written to {} and {}",
            path.display(),
            table_path.display()
        );
    }

    println!("mean ranks (lower is better):");
    let mut order: Vec<(f64, &String)> = report
        .ranks
        .mean_ranks
        .iter()
        .copied()
        .zip(&report.ranks.methods)
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite ranks").then(a.1.cmp(b.1)));
    for (rank, method) in order {
        println!("  {rank:6.3}  {method}");
    }
    Ok(())
}

fn cmd_registry(path: Option<&Path>, json: bool) -> Result<(), CliError> {
    let catalog = load_catalog(path)?;
    if json {
        let file = serde_json::json!({
            "version": 1,
            "models": catalog.iter().collect::<Vec<_>>(),
        });
        let text =
            serde_json::to_string_pretty(&file).map_err(|e| CliError::runtime(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }
    for meta in catalog.iter() {
        let strengths = meta
            .strengths
            .iter()
            .map(|t| t.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        let weaknesses = meta
            .weaknesses
            .iter()
            .map(|t| t.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        println!("{}", meta.id);
        println!("  strengths:  {strengths}");
        println!("  weaknesses: {weaknesses}");
        if !meta.notes.is_empty() {
            println!("  notes:      {}", meta.notes);
        }
    }
    Ok(())
}

fn cmd_synth(kind: &str, seed: u64, out: &Path, unlabeled: bool) -> Result<(), CliError> {
    let kind: SyntheticKind = kind.parse().map_err(|e: OdError| CliError::usage(e.to_string()))?;
    let synth = make_synthetic(kind, seed);
    let anomalies = synth.anomaly_indices.len();
    let dataset = if unlabeled {
        LabeledDataset::unlabeled(synth.dataset.data)
    } else {
        synth.dataset
    };
    save_csv(&dataset, out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    println!(
        "wrote {kind}: n={}, d={}, {anomalies} anomalies -> {}",
        dataset.data.n(),
        dataset.data.d(),
        out.display()
    );
    Ok(())
}

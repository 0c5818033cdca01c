//! `dcf`: train, evaluate and run deep convolutional forest spam filters.

mod settings;

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcf_core::baseline::{train_baseline, BaselineParams, Resources};
use dcf_core::cascade::{load_model, save_model, train_cascade, CascadeModel, TrainReport};
use dcf_core::config::RunConfig;
use dcf_core::corpus::{load_dataset, split_dataset, tokenize, DatasetSplit, RawMessage, TokenizedMessage};
use dcf_core::embedding::EmbeddingTable;
use dcf_core::metrics::EvalReport;
use dcf_core::Label;

use settings::{Failure, Overrides};

#[derive(Parser)]
#[command(name = "dcf", version, about = "Deep convolutional forest spam filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a cascade and write the model file.
    Train(Overrides),
    /// Evaluate a model on the test part of the dataset split.
    Eval(Overrides),
    /// Classify one message per input line.
    Predict(PredictArgs),
    /// Print a report file written by `train` or `eval`.
    Report(ReportArgs),
}

#[derive(Args)]
struct PredictArgs {
    /// Read messages from this file instead of standard input.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(value_name = "FILE")]
    file: PathBuf,
}

const TRAIN_REPORT_FORMAT: &str = "dcf-train-report/1";

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(o) => cmd_train(&o),
        Command::Eval(o) => cmd_eval(&o),
        Command::Predict(a) => cmd_predict(&a),
        Command::Report(a) => cmd_report(&a.file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dcf: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, Failure> {
    p.as_deref()
        .ok_or_else(|| Failure::usage(format!("no {key} path given (--{key}, DCF_{}, or config file)", key.to_uppercase())))
}

fn tokenized_split(config: &RunConfig, raw: &[RawMessage]) -> Result<DatasetSplit<TokenizedMessage>, Failure> {
    let split = split_dataset(raw, &config.split, config.cascade.seed).map_err(Failure::data)?;
    Ok(split.map(|m| tokenize(m, &config.cascade.preprocess)))
}

fn vocabulary(split: &DatasetSplit<TokenizedMessage>) -> HashSet<String> {
    [&split.train, &split.validation, &split.test]
        .into_iter()
        .flatten()
        .flat_map(|m| m.tokens.iter().cloned())
        .collect()
}

fn load_table(path: &Path, dim: usize, vocab: Option<&HashSet<String>>) -> Result<EmbeddingTable<f64>, Failure> {
    match vocab {
        Some(v) => EmbeddingTable::load_filtered(path, dim, |w| v.contains(w)),
        None => EmbeddingTable::load(path, dim),
    }
    .map_err(Failure::data)
}

fn evaluate(
    model: &CascadeModel<f64>,
    messages: &[TokenizedMessage],
    table: &EmbeddingTable<f64>,
) -> Result<EvalReport<f64>, Failure> {
    let preds = model.predict_batch(messages, table).map_err(Failure::data)?;
    let truth: Vec<Label> = messages.iter().map(|m| m.label).collect();
    let labels: Vec<Label> = preds.iter().map(|p| p.0).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.1).collect();
    EvalReport::from_predictions(&truth, &labels, &scores).map_err(Failure::data)
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| Failure::data(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644)).map_err(io)?;
    }
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn train_report_kv(report: &TrainReport) -> String {
    let mut s = format!("format={TRAIN_REPORT_FORMAT}\nlevels={}\n", report.level_count());
    for (i, l) in report.levels.iter().enumerate() {
        s.push_str(&format!("level.{}.accuracy={}\n", i + 1, l.accuracy));
        s.push_str(&format!("level.{}.log_loss={}\n", i + 1, l.log_loss));
    }
    if let Some(r) = &report.rejected {
        s.push_str(&format!("rejected.accuracy={}\nrejected.log_loss={}\n", r.accuracy, r.log_loss));
    }
    s.push_str(&format!("stop_reason={}\n", report.stop_reason.as_str()));
    s.push_str(&format!("synthetic_count={}\n", report.synthetic_count));
    s
}

fn default_report_path(model: &Path, suffix: &str) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_train(o: &Overrides) -> Result<(), Failure> {
    let config = o.resolve()?.config;
    let dataset = required(&config.dataset, "dataset")?;
    let embeddings = required(&config.embeddings, "embeddings")?;

    let raw = load_dataset(dataset).map_err(Failure::data)?;
    let split = tokenized_split(&config, &raw)?;
    let table = load_table(embeddings, config.embedding_dim, Some(&vocabulary(&split)))?;
    eprintln!(
        "dcf: {} messages ({} train, {} validation, {} test), {} embedded words",
        raw.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        table.len()
    );

    let (mut model, report) = train_cascade(&split, &table, &config.cascade).map_err(Failure::data)?;
    model.metadata = settings::metadata(&config);
    save_model(&model, &config.model).map_err(Failure::model)?;

    print!("{}", report.to_text());
    let report_path = config
        .report
        .clone()
        .unwrap_or_else(|| default_report_path(&config.model, ".train-report"));
    write_atomic(&report_path, &train_report_kv(&report))?;
    println!("model written to {}", config.model.display());

    if config.baseline {
        let dcf = evaluate(&model, &split.test, &table)?;
        let raw_split = split_dataset(&raw, &config.split, config.cascade.seed).map_err(Failure::data)?;
        let resources = Resources::load(config.wordlist.as_deref(), config.blacklist.as_deref()).map_err(Failure::data)?;
        let params = BaselineParams {
            n_trees: config.cascade.n_trees,
            smote_k: config.cascade.smote_k,
            seed: config.cascade.seed,
        };
        let (_, base) = train_baseline::<f64>(&raw_split, &resources, &params).map_err(Failure::data)?;
        println!("\nDCF on the test split:\n{}", dcf.to_table());
        println!("manual-feature baseline on the test split:\n{}", base.to_table());
    }
    Ok(())
}

/// Loads the model and lets its header override the run configuration.
fn load_with_header(o: &Overrides) -> Result<(CascadeModel<f64>, RunConfig), Failure> {
    let resolved = o.resolve()?;
    let model: CascadeModel<f64> = load_model(&resolved.config.model).map_err(Failure::model)?;
    let config = settings::merge_model_header(&resolved, &model)?;
    Ok((model, config))
}

fn cmd_eval(o: &Overrides) -> Result<(), Failure> {
    let (model, config) = load_with_header(o)?;
    let dataset = required(&config.dataset, "dataset")?;
    let embeddings = required(&config.embeddings, "embeddings")?;
    let raw = load_dataset(dataset).map_err(Failure::data)?;
    let split = tokenized_split(&config, &raw)?;
    let table = load_table(embeddings, model.embedding_dim, Some(&vocabulary(&split)))?;
    let report = evaluate(&model, &split.test, &table)?;
    println!("test split: {} messages, model with {} level(s)", split.test.len(), model.level_count());
    print!("{}", report.to_table());
    if let Some(p) = &config.report {
        write_atomic(p, &report.to_kv())?;
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<(), Failure> {
    let (model, config) = load_with_header(&a.overrides)?;
    let embeddings = required(&config.embeddings, "embeddings")?;
    let lines: Vec<String> = match &a.input {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            String::from_utf8_lossy(&bytes).lines().map(str::to_string).collect()
        }
        None => std::io::stdin()
            .lock()
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::data(format!("standard input: {e}")))?,
    };
    if lines.is_empty() {
        return Ok(());
    }
    let table = load_table(embeddings, model.embedding_dim, None)?;
    let messages: Vec<TokenizedMessage> = lines
        .iter()
        .map(|text| {
            tokenize(
                &RawMessage {
                    label: Label::Ham,
                    text: text.clone(),
                },
                &model.config.preprocess,
            )
        })
        .collect();
    let preds = model.predict_batch(&messages, &table).map_err(Failure::data)?;
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for (label, p) in preds {
        writeln!(out, "{label}\t{p:.4}").map_err(|e| Failure::data(format!("standard output: {e}")))?;
    }
    out.flush().map_err(|e| Failure::data(format!("standard output: {e}")))
}

fn cmd_report(path: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let format = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("format="))
        .ok_or_else(|| Failure::data(format!("{}: no format line", path.display())))?;
    if format == dcf_core::metrics::REPORT_FORMAT {
        let report = EvalReport::from_kv(&text).map_err(Failure::data)?;
        print!("{}", report.to_table());
    } else if format == TRAIN_REPORT_FORMAT {
        let pairs = dcf_core::config::parse_kv(&text).map_err(Failure::data)?;
        let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let levels: usize = get("levels").and_then(|v| v.parse().ok()).unwrap_or(0);
        for i in 1..=levels {
            println!(
                "level {i}: validation accuracy {}, log-loss {}",
                get(&format!("level.{i}.accuracy")).unwrap_or("?"),
                get(&format!("level.{i}.log_loss")).unwrap_or("?")
            );
        }
        if let Some(acc) = get("rejected.accuracy") {
            println!("level {} rejected: validation accuracy {acc}", levels + 1);
        }
        println!(
            "levels: {levels} (stopped: {})",
            get("stop_reason").unwrap_or("?")
        );
    } else {
        return Err(Failure::data(format!("{}: unknown report format {format:?}", path.display())));
    }
    Ok(())
}

//! `knnseq`: build datastores, predict, evaluate, sweep and validate files.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error. Every failure
//! prints a single `error: ...` line on stderr.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use knnseq::corpus_io::{
    read_corpus, read_datastore, write_atomic, write_datastore, DATASTORE_MAGIC,
};
use knnseq::decode::{check_entity, read_predictions, write_predictions};
use knnseq::sweep::{corpus_gold, parse_list, predict_corpus};
use knnseq::tagset::TAGSET_HEADER;
use knnseq::{
    build_datastore_with, micro_prf, run_sweep, BuildOptions, KnnConfig, MainLabelIndex, SweepGrid,
    Tagset,
};

const DEFAULT_KS: &str = "8,16,32,64,128,256,512";
const DEFAULT_LAMBDAS: &str = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";

#[derive(Parser)]
#[command(
    name = "knnseq",
    version,
    about = "Retrieval-augmented inference for flat NER with subtypes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a datastore from every token of a labeled training corpus.
    BuildDatastore {
        train: PathBuf,
        #[arg(long)]
        tagset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Leave `O`-labeled tokens out of the store.
        #[arg(long)]
        exclude_o: bool,
    },
    /// Predict entities for every record of a corpus.
    Predict {
        test: PathBuf,
        #[arg(long)]
        tagset: PathBuf,
        #[arg(long)]
        datastore: PathBuf,
        #[arg(long, default_value_t = 512)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction file against a gold corpus.
    Evaluate {
        gold: PathBuf,
        predictions: PathBuf,
        #[arg(long)]
        tagset: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid search over k and lambda on a labeled dev corpus.
    Sweep {
        dev: PathBuf,
        #[arg(long)]
        tagset: PathBuf,
        #[arg(long)]
        datastore: PathBuf,
        #[arg(long, default_value = DEFAULT_KS)]
        ks: String,
        #[arg(long, default_value = DEFAULT_LAMBDAS)]
        lambdas: String,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a tagset, corpus, datastore or prediction file for conformance.
    Validate {
        file: PathBuf,
        /// Required for everything except tagset files.
        #[arg(long)]
        tagset: Option<PathBuf>,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<knnseq::Error> for Failure {
    fn from(e: knnseq::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn build(train: &Path, tagset: &Path, out: &Path, exclude_o: bool) -> CmdResult {
    let ts = Tagset::load(tagset)?;
    let corpus = read_corpus(train, &ts)?;
    let ds = build_datastore_with(
        &corpus,
        &ts,
        &BuildOptions {
            exclude_outside: exclude_o,
        },
    )?;
    write_datastore(&ds, out)?;
    println!("entries: {}", ds.len());
    println!("dim: {}", ds.dim());
    println!("labels:");
    for (i, n) in ds.label_histogram().iter().enumerate() {
        if *n > 0 {
            println!("  {} {n}", ts.main_tag_of(MainLabelIndex(i as u32))?);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn predict(
    test: &Path,
    tagset: &Path,
    datastore: &Path,
    k: usize,
    lambda: f64,
    tau: f64,
    out: &Path,
) -> CmdResult {
    let cfg = KnnConfig::new(k, lambda, tau)?;
    let ts = Tagset::load(tagset)?;
    let ds = read_datastore(datastore, &ts)?;
    let corpus = read_corpus(test, &ts)?;
    let preds = predict_corpus(&corpus, &ds, &cfg, &ts)?;
    write_predictions(&preds, out)?;
    let entities: usize = preds.iter().map(|p| p.entities.len()).sum();
    println!(
        "predicted {entities} entities in {} sentences (k={k}, lambda={lambda}, tau={tau})",
        preds.len()
    );
    Ok(())
}

fn evaluate(gold: &Path, predictions: &Path, tagset: &Path, out: Option<&Path>) -> CmdResult {
    let ts = Tagset::load(tagset)?;
    let corpus = read_corpus(gold, &ts)?;
    let pred = read_predictions(predictions, &ts)?;
    let lengths: HashMap<&str, usize> = corpus
        .records
        .iter()
        .map(|r| (r.id.as_str(), r.len()))
        .collect();
    for p in &pred {
        if let Some(&m) = lengths.get(p.id.as_str()) {
            for ent in &p.entities {
                check_entity(ent, Some(m), &ts)
                    .map_err(|e| Failure::Validation(format!("prediction `{}`: {e}", p.id)))?;
            }
        }
    }
    let report = micro_prf(&corpus_gold(&corpus, &ts)?, &pred, &ts)?;
    let text = report.to_json();
    println!("{text}");
    if let Some(out) = out {
        write_atomic(out, format!("{text}\n").as_bytes())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    dev: &Path,
    tagset: &Path,
    datastore: &Path,
    ks: &str,
    lambdas: &str,
    tau: f64,
    out: Option<&Path>,
) -> CmdResult {
    let grid = SweepGrid {
        ks: parse_list(ks)?,
        lambdas: parse_list(lambdas)?,
        tau,
    };
    grid.validate()?;
    let ts = Tagset::load(tagset)?;
    let ds = read_datastore(datastore, &ts)?;
    let corpus = read_corpus(dev, &ts)?;
    let table = run_sweep(&corpus, &ds, &grid, &ts)?.to_csv();
    match out {
        Some(out) => write_atomic(out, table.as_bytes())?,
        None => print!("{table}"),
    }
    Ok(())
}

enum FileKind {
    Tagset,
    Datastore,
    Corpus,
    Predictions,
}

fn sniff(path: &Path) -> Result<FileKind, Failure> {
    let runtime = |e: std::io::Error| Failure::Runtime(format!("{}: {e}", path.display()));
    let mut head = [0u8; 4];
    let n = File::open(path)
        .map_err(runtime)?
        .read(&mut head)
        .map_err(runtime)?;
    if n == 4 && head == DATASTORE_MAGIC {
        return Ok(FileKind::Datastore);
    }
    let mut first = String::new();
    BufReader::new(File::open(path).map_err(runtime)?)
        .read_line(&mut first)
        .map_err(|_| Failure::Validation("file is neither a datastore nor UTF-8 text".into()))?;
    let first = first.trim();
    if first == TAGSET_HEADER {
        return Ok(FileKind::Tagset);
    }
    match serde_json::from_str::<serde_json::Value>(first) {
        Ok(v) if v.get("entities").is_some() && v.get("format").is_none() => {
            Ok(FileKind::Predictions)
        }
        _ => Ok(FileKind::Corpus),
    }
}

fn validate(file: &Path, tagset: Option<&Path>) -> CmdResult {
    let kind = sniff(file)?;
    if let FileKind::Tagset = kind {
        let ts = Tagset::load(file)?;
        println!(
            "ok: tagset, {} main types ({} labels), {} subtypes ({} labels), hash {}",
            ts.main_types().len(),
            ts.main_label_count(),
            ts.sub_types().len(),
            ts.sub_label_count(),
            ts.hash_hex()
        );
        return Ok(());
    }
    let ts = match tagset {
        Some(p) => Tagset::load(p)?,
        None => {
            return Err(Failure::Validation(
                "--tagset is required to validate this file".into(),
            ))
        }
    };
    match kind {
        FileKind::Datastore => {
            let ds = read_datastore(file, &ts)?;
            println!("ok: datastore, {} entries, dim {}", ds.len(), ds.dim());
        }
        FileKind::Corpus => {
            let c = read_corpus(file, &ts)?;
            println!(
                "ok: corpus, {} records, {} tokens, dim {}",
                c.records.len(),
                c.token_count(),
                c.dim
            );
        }
        FileKind::Predictions => {
            let p = read_predictions(file, &ts)?;
            println!("ok: predictions, {} records", p.len());
        }
        FileKind::Tagset => unreachable!(),
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::BuildDatastore {
            train,
            tagset,
            out,
            exclude_o,
        } => build(&train, &tagset, &out, exclude_o),
        Command::Predict {
            test,
            tagset,
            datastore,
            k,
            lambda,
            tau,
            out,
        } => predict(&test, &tagset, &datastore, k, lambda, tau, &out),
        Command::Evaluate {
            gold,
            predictions,
            tagset,
            out,
        } => evaluate(&gold, &predictions, &tagset, out.as_deref()),
        Command::Sweep {
            dev,
            tagset,
            datastore,
            ks,
            lambdas,
            tau,
            out,
        } => sweep(
            &dev,
            &tagset,
            &datastore,
            &ks,
            &lambdas,
            tau,
            out.as_deref(),
        ),
        Command::Validate { file, tagset } => validate(&file, tagset.as_deref()),
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            eprintln!("error: {}", one_line(first.trim_start_matches("error:")));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(2)
        }
    }
}

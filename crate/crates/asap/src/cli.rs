//! Command-line entry point: ingest/validate, curate, stats, split,
//! train, predict, eval, visualize-attention, detect-unreliable.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.
//! Key flags can be set through `ASAP_`-prefixed environment variables
//! for CI use; precedence is CLI flag > config file > built-in default,
//! and the resolved configuration is echoed into every output directory.

use crate::corpus::{
    self, compute_stats, curate, read_csv, read_raw_records, write_csv, AspectTaxonomy,
    CurationConfig, Dataset, Split,
};
use crate::encoder::{tokenize, EncoderConfig, TinyEncoder, Vocab};
use crate::evaluation::{
    detect_unreliable, evaluate_acsa, evaluate_rp, export_attention, render_metrics_table,
    DEFAULT_UNRELIABLE_THRESHOLD,
};
use crate::joint::{HeadParams, JointPrediction, NUM_CLASSES};
use crate::training::{self, Checkpoint, TrainConfig};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
enum CliError {
    Data(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<corpus::CorpusError> for CliError {
    fn from(e: corpus::CorpusError) -> Self {
        match e {
            corpus::CorpusError::Io(_) | corpus::CorpusError::Csv(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<crate::encoder::EncoderError> for CliError {
    fn from(e: crate::encoder::EncoderError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::joint::JointError> for CliError {
    fn from(e: crate::joint::JointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::training::TrainError> for CliError {
    fn from(e: crate::training::TrainError) -> Self {
        match e {
            training::TrainError::TaxonomyMismatch(_)
            | training::TrainError::SplitMisuse(_)
            | training::TrainError::Joint(_) => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<crate::evaluation::EvalError> for CliError {
    fn from(e: crate::evaluation::EvalError) -> Self {
        match e {
            crate::evaluation::EvalError::Io(_) | crate::evaluation::EvalError::Json(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "asap",
    about = "Joint aspect-category sentiment analysis and review rating prediction",
    after_help = "Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a corpus CSV and report whether every record is well-formed.
    Validate(ValidateArgs),
    /// Apply curation filters and privacy stripping to a raw corpus.
    Curate(CurateArgs),
    /// Compute and print dataset statistics.
    Stats(StatsArgs),
    /// Randomly split a corpus into train/dev/test files.
    Split(SplitArgs),
    /// Train the joint model.
    Train(TrainArgs),
    /// Run inference from a checkpoint, writing line-delimited records.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Export attention weights (records plus an HTML heatmap).
    VisualizeAttention(VisualizeArgs),
    /// Flag reviews whose predicted and user ratings disagree.
    DetectUnreliable(DetectArgs),
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Corpus CSV file.
    #[arg(long, env = "ASAP_DATA")]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct CurateArgs {
    /// Raw corpus CSV file.
    #[arg(long, env = "ASAP_DATA")]
    data: PathBuf,
    /// Output directory for curated.csv and reports.
    #[arg(long, env = "ASAP_OUT_DIR")]
    out_dir: PathBuf,
    /// TOML file with curation thresholds.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Minimum Chinese-character count (inclusive).
    #[arg(long)]
    min_chars: Option<usize>,
    /// Maximum Chinese-character count (inclusive).
    #[arg(long)]
    max_chars: Option<usize>,
    /// Maximum allowed non-Chinese character ratio.
    #[arg(long)]
    max_non_chinese_ratio: Option<f64>,
    /// Aspect-cell value meaning "not mentioned".
    #[arg(long)]
    sentinel: Option<i64>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, env = "ASAP_DATA")]
    data: PathBuf,
    /// Name printed in the table's split column.
    #[arg(long, default_value = "unsplit")]
    split_name: String,
    /// Also write the stats as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long, env = "ASAP_DATA")]
    data: PathBuf,
    #[arg(long, env = "ASAP_OUT_DIR")]
    out_dir: PathBuf,
    #[arg(long, env = "ASAP_SEED", default_value_t = 0)]
    seed: u64,
    /// Comma-separated train,dev,test ratios.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    ratios: String,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training corpus CSV.
    #[arg(long, env = "ASAP_DATA")]
    data: PathBuf,
    /// Optional dev corpus CSV for per-epoch metrics and selection.
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long, env = "ASAP_OUT_DIR")]
    out_dir: PathBuf,
    /// Encoder backend; only the built-in tiny transformer for now.
    #[arg(long, default_value = "tiny")]
    encoder: String,
    /// TOML file with [train] and [encoder] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, env = "ASAP_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    lambda_acsa: Option<f64>,
    #[arg(long)]
    lambda_rp: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<u64>,
    /// Tiny-encoder hidden size.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, env = "ASAP_DATA")]
    data: PathBuf,
    #[arg(long, env = "ASAP_CHECKPOINT")]
    checkpoint: PathBuf,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predictions JSONL produced by `predict`.
    #[arg(long)]
    preds: PathBuf,
    /// Gold corpus CSV.
    #[arg(long)]
    gold: PathBuf,
    /// Also write the metrics as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VisualizeArgs {
    #[arg(long, env = "ASAP_DATA")]
    data: PathBuf,
    #[arg(long, env = "ASAP_CHECKPOINT")]
    checkpoint: PathBuf,
    #[arg(long, env = "ASAP_OUT_DIR")]
    out_dir: PathBuf,
    /// Restrict to one review id; default is every review.
    #[arg(long)]
    review_id: Option<String>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long, env = "ASAP_DATA")]
    data: PathBuf,
    #[arg(long, env = "ASAP_CHECKPOINT")]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_UNRELIABLE_THRESHOLD)]
    threshold: f64,
    /// Output JSONL path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One prediction line of the `predict` output, consumable by `eval`
/// without the checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    /// `N x C` class probabilities in taxonomy order.
    pub probs: Vec<[f64; NUM_CLASSES]>,
    pub g_hat: f64,
}

impl PredictionRecord {
    pub fn from_prediction(id: &str, pred: &JointPrediction) -> Self {
        PredictionRecord {
            id: id.to_string(),
            probs: pred
                .class_probs
                .rows()
                .into_iter()
                .map(|row| [row[0], row[1], row[2]])
                .collect(),
            g_hat: pred.predicted_rating,
        }
    }

    pub fn to_prediction(&self) -> JointPrediction {
        let n = self.probs.len();
        let mut class_probs = Array2::zeros((n, NUM_CLASSES));
        for (i, row) in self.probs.iter().enumerate() {
            for (c, &p) in row.iter().enumerate() {
                class_probs[(i, c)] = p;
            }
        }
        JointPrediction {
            class_probs,
            predicted_rating: self.g_hat,
            attention: None,
        }
    }
}

/// Run the CLI; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Curate(args) => cmd_curate(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Split(args) => cmd_split(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::VisualizeAttention(args) => cmd_visualize(args),
        Command::DetectUnreliable(args) => cmd_detect(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let taxonomy = AspectTaxonomy::default_restaurant();
    Ok(read_csv(path, &taxonomy, Split::Unsplit)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data)?;
    let pairs: usize = ds.reviews.iter().map(|r| r.mentioned_count()).sum();
    println!(
        "ok: {} reviews, {} labeled (review, aspect) pairs",
        ds.len(),
        pairs
    );
    Ok(())
}

fn cmd_curate(args: CurateArgs) -> Result<(), CliError> {
    let mut rules = match &args.config {
        Some(path) => CurationConfig::from_toml_file(path)?,
        None => CurationConfig::default(),
    };
    if let Some(v) = args.min_chars {
        rules.min_chinese_chars = v;
    }
    if let Some(v) = args.max_chars {
        rules.max_chinese_chars = v;
    }
    if let Some(v) = args.max_non_chinese_ratio {
        rules.max_non_chinese_ratio = v;
    }
    if let Some(v) = args.sentinel {
        rules.sentinel = v;
    }

    std::fs::create_dir_all(&args.out_dir)?;
    let taxonomy = AspectTaxonomy::default_restaurant();
    let raw = read_raw_records(&args.data)?;
    let (ds, report) = curate(&raw, &taxonomy, &rules);
    write_csv(&ds, &args.out_dir.join("curated.csv"))?;
    write_json(&args.out_dir.join("curation_report.json"), &report)?;
    write_json(&args.out_dir.join("resolved_config.json"), &rules)?;
    println!(
        "kept {} / {} reviews (short {}, long {}, non-chinese {}, low-quality {}, malformed {})",
        report.kept,
        report.total_seen(),
        report.dropped_short,
        report.dropped_long,
        report.dropped_non_chinese,
        report.dropped_low_quality,
        report.dropped_malformed
    );
    if !report.dropped_fields.is_empty() {
        println!("stripped fields: {}", report.dropped_fields.join(", "));
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data)?;
    let stats = compute_stats(&ds)?;
    print!("{}", stats.render_table(&args.split_name));
    if let Some(path) = &args.json {
        write_json(path, &stats)?;
    }
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<(), CliError> {
    let parts: Vec<f64> = args
        .ratios
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("bad --ratios {:?}: {e}", args.ratios)))?;
    let [rt, rd, re] = parts[..] else {
        return Err(CliError::Data(format!(
            "--ratios needs three comma-separated numbers, got {:?}",
            args.ratios
        )));
    };
    let ds = load_dataset(&args.data)?;
    let (train, dev, test) = corpus::split(&ds, args.seed, (rt, rd, re))?;
    std::fs::create_dir_all(&args.out_dir)?;
    write_csv(&train, &args.out_dir.join("train.csv"))?;
    write_csv(&dev, &args.out_dir.join("dev.csv"))?;
    write_csv(&test, &args.out_dir.join("test.csv"))?;
    println!(
        "split {} reviews into {} train / {} dev / {} test (seed {})",
        ds.len(),
        train.len(),
        dev.len(),
        test.len(),
        args.seed
    );
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
struct TrainFileConfig {
    #[serde(default)]
    train: Option<TrainConfig>,
    #[serde(default)]
    encoder: Option<EncoderFileConfig>,
}

#[derive(Debug, Default, Deserialize)]
struct EncoderFileConfig {
    d: Option<usize>,
    layers: Option<usize>,
    heads: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ResolvedTrainConfig<'a> {
    train: &'a TrainConfig,
    encoder: &'a EncoderConfig,
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    if args.encoder != "tiny" {
        return Err(CliError::Data(format!(
            "unknown encoder {:?}; available: tiny",
            args.encoder
        )));
    }
    let file_cfg: TrainFileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| CliError::Data(format!("bad train config: {e}")))?
        }
        None => TrainFileConfig::default(),
    };

    let mut cfg = file_cfg.train.unwrap_or_default();
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.max_len {
        cfg.max_len = v;
    }
    if let Some(v) = args.lambda_acsa {
        cfg.loss_weights.acsa = v;
    }
    if let Some(v) = args.lambda_rp {
        cfg.loss_weights.rp = v;
    }
    if let Some(v) = args.grad_clip {
        cfg.grad_clip = Some(v);
    }
    if let Some(v) = args.warmup_steps {
        cfg.warmup_steps = v;
    }
    cfg.checkpoint_dir = Some(args.out_dir.join("checkpoints"));

    let enc_file = file_cfg.encoder.unwrap_or_default();
    let mut enc_cfg = EncoderConfig::tiny_default(cfg.seed);
    enc_cfg.d = args.d.or(enc_file.d).unwrap_or(enc_cfg.d);
    enc_cfg.layers = args.layers.or(enc_file.layers).unwrap_or(enc_cfg.layers);
    enc_cfg.heads = args.heads.or(enc_file.heads).unwrap_or(enc_cfg.heads);
    enc_cfg.max_len = cfg.max_len;

    let mut train_ds = load_dataset(&args.data)?;
    train_ds.split = Split::Train;
    let dev_ds = match &args.dev {
        Some(path) => {
            let mut ds = load_dataset(path)?;
            ds.split = Split::Dev;
            Some(ds)
        }
        None => None,
    };

    let mut vocab = Vocab::new();
    vocab
        .extend_from_texts(
            train_ds.reviews.iter().map(|r| r.text.as_str()),
            cfg.max_len,
        )
        .map_err(CliError::from)?;
    let mut encoder = TinyEncoder::new(enc_cfg, vocab);
    let mut heads = HeadParams::init(
        encoder.config.d,
        train_ds.taxonomy.len(),
        cfg.seed.wrapping_add(1),
    );

    std::fs::create_dir_all(&args.out_dir)?;
    write_json(
        &args.out_dir.join("resolved_config.json"),
        &ResolvedTrainConfig {
            train: &cfg,
            encoder: &encoder.config,
        },
    )?;

    let log_path = args.out_dir.join("log.jsonl");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    let outcome = training::train(
        &train_ds,
        dev_ds.as_ref(),
        &cfg,
        &mut encoder,
        &mut heads,
        |event| {
            // log failures surface at flush
            if serde_json::to_writer(&mut log, event).is_ok() {
                let _ = log.write_all(b"\n");
            }
        },
    )?;
    log.flush()?;

    if let Some(record) = outcome.history.last() {
        match record.dev {
            Some(m) => println!(
                "done: {} epochs; dev Macro-F1 {:.4}, Acc {:.4}, MAE {:.4}, RP-Acc {:.4}",
                record.epoch, m.macro_f1, m.accuracy, m.mae, m.rp_accuracy
            ),
            None => println!("done: {} epochs (no dev set)", record.epoch),
        }
    }
    if let Some((epoch, path)) = &outcome.best_macro_f1 {
        println!("best dev Macro-F1 at epoch {epoch}: {}", path.display());
    }
    if let Some((epoch, path)) = &outcome.best_mae {
        println!("best dev MAE at epoch {epoch}: {}", path.display());
    }
    if let Some(path) = &outcome.final_checkpoint {
        println!("final checkpoint: {}", path.display());
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let preds = training::predict(&ds, &ckpt)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    for (review, pred) in ds.reviews.iter().zip(&preds) {
        let record = PredictionRecord::from_prediction(&review.id, pred);
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    println!("wrote {} predictions to {}", preds.len(), args.out.display());
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            serde_json::from_str(line)
                .map_err(|e| CliError::Data(format!("bad prediction line: {e}")))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct EvalReport {
    acsa: crate::evaluation::AcsaMetrics,
    rp: crate::evaluation::RpMetrics,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let gold = load_dataset(&args.gold)?;
    let records = read_predictions(&args.preds)?;
    let by_id: std::collections::HashMap<&str, &PredictionRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let preds: Vec<JointPrediction> = gold
        .reviews
        .iter()
        .map(|r| {
            by_id
                .get(r.id.as_str())
                .map(|rec| rec.to_prediction())
                .ok_or_else(|| CliError::Data(format!("no prediction for review {:?}", r.id)))
        })
        .collect::<Result<_, _>>()?;
    let acsa = evaluate_acsa(&preds, &gold)?;
    let rp = evaluate_rp(&preds, &gold)?;
    print!("{}", render_metrics_table(Some(&acsa), Some(&rp)));
    if let Some(path) = &args.out {
        write_json(path, &EvalReport { acsa, rp })?;
    }
    Ok(())
}

fn cmd_visualize(args: VisualizeArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let preds = training::predict_trace(&ds, &ckpt, true)?;
    let names = ds.taxonomy.names();
    let mut exported = 0usize;
    for (review, pred) in ds.reviews.iter().zip(&preds) {
        if let Some(wanted) = &args.review_id {
            if &review.id != wanted {
                continue;
            }
        }
        let tokens = tokenize(&review.text, ckpt.encoder.config.max_len)
            .map_err(CliError::from)?;
        let jsonl = args.out_dir.join(format!("{}.attention.jsonl", review.id));
        let html = args.out_dir.join(format!("{}.attention.html", review.id));
        export_attention(review, pred, &names, &tokens, &jsonl, Some(&html))?;
        exported += 1;
    }
    if exported == 0 {
        return Err(CliError::Data(match args.review_id {
            Some(id) => format!("review {id:?} not found in {}", args.data.display()),
            None => "no reviews to visualize".to_string(),
        }));
    }
    println!("exported attention for {exported} reviews to {}", args.out_dir.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct UnreliableRecord {
    id: String,
    rating: u8,
    g_hat: f64,
    margin: f64,
    flagged: bool,
}

fn cmd_detect(args: DetectArgs) -> Result<(), CliError> {
    if !(args.threshold > 0.0) {
        return Err(CliError::Data(format!(
            "--threshold must be positive, got {}",
            args.threshold
        )));
    }
    let ds = load_dataset(&args.data)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let preds = training::predict(&ds, &ckpt)?;
    let mut records = Vec::new();
    for (review, pred) in ds.reviews.iter().zip(&preds) {
        let verdict = detect_unreliable(review, pred.predicted_rating, args.threshold)?;
        records.push(UnreliableRecord {
            id: review.id.clone(),
            rating: review.rating,
            g_hat: pred.predicted_rating,
            margin: verdict.margin,
            flagged: verdict.flagged,
        });
    }
    // most suspicious first
    records.sort_by(|a, b| b.margin.total_cmp(&a.margin));
    let mut sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => Box::new(std::io::stdout()),
    };
    for record in &records {
        serde_json::to_writer(&mut sink, record)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

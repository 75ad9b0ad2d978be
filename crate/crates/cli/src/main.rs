//! `crisis-filter`: command-line front end for hashing, de-duplication,
//! classifier training, the streaming pipeline and the evaluation harness.

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crisis_filter::classify::{
    build_relevance_dataset, cross_validate, decode_model, encode_model, train, train_split, ClassifierModel,
    Dataset, FeatureVector, TrainParams, DEFAULT_IRRELEVANT_CATEGORIES, IRRELEVANT, RELEVANCE_THRESHOLD, RELEVANT,
};
use crisis_filter::dedup::{write_curve_csv, DedupConfig, Engine, HashWindow, DEFAULT_CAPACITY, DEFAULT_THRESHOLD};
use crisis_filter::harness::{
    generate_corpus, run_setting, sweep_threshold_experiment, BudgetConfig, Corpus, CorpusSpec, Setting,
    DEFAULT_SWEEP_PAIRS,
};
use crisis_filter::imagecore::decode;
use crisis_filter::metrics::{permutation_test, PredictionSet};
use crisis_filter::phash::phash;
use crisis_filter::pipeline::{
    extract_records, ingest, load_snapshot, run_pipeline, save_snapshot, FileFetcher, Fetcher, LabelScorer, PassAll,
    PipelineConfig, RelevanceScorer, DEFAULT_QUEUE_CAPACITY, DEFAULT_WORKERS,
};
use crisis_filter::record::{DamageLabel, ImageRecord};

/// Invalid argument combinations detected after parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "crisis-filter", version, about, arg_required_else_help = true)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the perceptual hash of each image.
    Hash {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Near-duplicate filtering.
    #[command(subcommand)]
    Dedup(DedupCmd),
    /// Relevancy classifier.
    #[command(subcommand)]
    Relevancy(RelevancyCmd),
    /// Damage-severity classifier.
    #[command(subcommand)]
    Damage(DamageCmd),
    /// Streaming filter pipeline.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Synthetic corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Evaluation experiments.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Subcommand)]
enum DedupCmd {
    /// Stream records through the duplicate window only.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Decisions JSONL (default stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RelevancyCmd {
    /// Train the relevancy model on a labeled manifest (60/20/20 split).
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Object tags marking irrelevant images (default: built-in list).
        #[arg(long, value_delimiter = ',')]
        categories: Vec<String>,
        #[arg(long)]
        model_out: PathBuf,
        /// Training report JSON (default stdout).
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Score records with a relevancy model.
    Score(ScoreArgs),
}

#[derive(Subcommand)]
enum DamageCmd {
    /// Train the damage model on all damage-labeled records.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        model_out: PathBuf,
        /// Cross-validation report JSON (default stdout).
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Predict damage classes for records.
    Score(ScoreArgs),
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run relevancy filtering and de-duplication over a record stream.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Relevancy model file.
        #[arg(long, conflicts_with = "use_labels")]
        model: Option<PathBuf>,
        /// Use the records' own relevance labels instead of a model.
        #[arg(long)]
        use_labels: bool,
        #[arg(long, default_value_t = RELEVANCE_THRESHOLD)]
        relevance_threshold: f64,
        #[arg(long)]
        dedup_first: bool,
        #[arg(long, default_value_t = DEFAULT_WORKERS)]
        workers: usize,
        #[arg(long, default_value_t = DEFAULT_QUEUE_CAPACITY)]
        queue_capacity: usize,
        /// Retention report JSON (default stdout).
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Per-record outcomes JSONL.
        #[arg(long)]
        outcomes_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Write a synthetic labeled corpus: manifest, images and ground truth.
    Generate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Threshold sweep over truth-labelled near pairs.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = DEFAULT_SWEEP_PAIRS)]
        n_pairs: usize,
        /// Accuracy curve CSV (default stdout).
        #[arg(long)]
        curve_out: Option<PathBuf>,
        /// Full result JSON with the sampled pairs.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Fixed-budget labeling simulation.
    BudgetSim {
        #[command(flatten)]
        spec: SpecArgs,
        /// S1, S2, S3, S4 or all.
        #[arg(long, default_value = "all")]
        setting: String,
        #[arg(long, default_value_t = 6000)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        cost_per_label: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: u32,
        #[command(flatten)]
        train: TrainArgs,
        /// Relevancy model for S3/S4 (default: ground-truth relevance).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report JSON (default stdout). `all` writes an array.
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Directory for per-setting out-of-fold predictions.
        #[arg(long)]
        predictions_dir: Option<PathBuf>,
    },
    /// Permutation test on the macro-F1 difference of two prediction sets.
    PermTest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1000)]
        shuffles: usize,
        /// Omit the shuffled statistics from the report.
        #[arg(long)]
        summary_only: bool,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Records JSONL.
    #[arg(long)]
    input: PathBuf,
    /// Directory for relative image paths (default: the input's directory).
    #[arg(long)]
    base_dir: Option<PathBuf>,
    /// Fetch http(s) locators over the network.
    #[cfg(feature = "http")]
    #[arg(long)]
    http: bool,
    /// Network timeout in seconds.
    #[cfg(feature = "http")]
    #[arg(long, default_value_t = 10)]
    timeout: u64,
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u32,
    #[arg(long, default_value_t = DEFAULT_CAPACITY)]
    capacity: usize,
    #[arg(long, default_value = "linear-scan")]
    engine: String,
    #[arg(long)]
    snapshot_in: Option<PathBuf>,
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 500)]
    epochs: u32,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    model: PathBuf,
    /// Scores JSONL (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpecArgs {
    /// Corpus spec JSON; missing fields take defaults. `--seed` overrides
    /// its seed.
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl TrainArgs {
    fn params(&self, seed: u64) -> TrainParams {
        TrainParams {
            seed,
            epochs: self.epochs,
            l2: self.l2,
            learning_rate: self.learning_rate,
            ..TrainParams::default()
        }
    }
}

impl InputArgs {
    fn records(&self) -> Result<Vec<ImageRecord>> {
        let file = fs::File::open(&self.input).with_context(|| format!("open {}", self.input.display()))?;
        let ingested = ingest(BufReader::new(file))?;
        if ingested.stats.malformed > 0 {
            log::warn!(
                "skipped {} malformed lines (first: {:?})",
                ingested.stats.malformed,
                ingested.stats.malformed_lines.first()
            );
        }
        Ok(ingested.records)
    }

    fn fetcher(&self) -> Box<dyn Fetcher> {
        let base = self.base_dir.clone().unwrap_or_else(|| {
            self.input
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default()
        });
        let files = FileFetcher::new(base);
        #[cfg(feature = "http")]
        if self.http {
            return Box::new(crisis_filter::pipeline::HttpFetcher::new(
                std::time::Duration::from_secs(self.timeout),
                files,
            ));
        }
        Box::new(files)
    }
}

impl WindowArgs {
    fn engine(&self) -> Result<Engine> {
        self.engine.parse().map_err(|e| usage(format!("{e}")))
    }

    fn window(&self) -> Result<HashWindow> {
        let engine = self.engine()?;
        match &self.snapshot_in {
            Some(path) => {
                let w = load_snapshot(path, engine)?;
                if w.config().threshold() != self.threshold || w.config().capacity() != self.capacity {
                    log::info!(
                        "snapshot settings (threshold {}, capacity {}) override the flags",
                        w.config().threshold(),
                        w.config().capacity()
                    );
                }
                Ok(w)
            }
            None => Ok(HashWindow::new(
                DedupConfig::new(self.threshold, self.capacity, engine).map_err(|e| usage(e.to_string()))?,
            )),
        }
    }

    fn save(&self, window: &HashWindow) -> Result<()> {
        if let Some(path) = &self.snapshot_out {
            save_snapshot(window, path)?;
        }
        Ok(())
    }
}

impl SpecArgs {
    fn corpus(&self, seed: u64) -> Result<Corpus> {
        let mut spec: CorpusSpec = match &self.spec {
            Some(path) => serde_json::from_slice(&fs::read(path).with_context(|| format!("read {}", path.display()))?)
                .with_context(|| format!("parse corpus spec {}", path.display()))?,
            None => CorpusSpec::default(),
        };
        spec.seed = seed;
        Ok(generate_corpus(&spec)?)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_jsonl(path: Option<&Path>, lines: &[serde_json::Value]) -> Result<()> {
    let mut out = output(path)?;
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> Result<ClassifierModel> {
    let bytes = fs::read(path).with_context(|| format!("read model {}", path.display()))?;
    decode_model(&bytes).with_context(|| format!("decode model {}", path.display()))
}

fn save_model(path: &Path, model: &ClassifierModel) -> Result<()> {
    fs::write(path, encode_model(model)).with_context(|| format!("write model {}", path.display()))
}

/// Features for `records`, dropping (and logging) records that fail.
fn featurize(records: &[ImageRecord], fetcher: &dyn Fetcher) -> (Vec<ImageRecord>, Vec<FeatureVector>) {
    let mut kept = Vec::new();
    let mut features = Vec::new();
    for (r, res) in records.iter().zip(extract_records(records, fetcher)) {
        match res {
            Ok((f, _)) => {
                kept.push(r.clone());
                features.push(f);
            }
            Err((reason, detail)) => log::warn!("{}: {reason}: {detail}", r.id),
        }
    }
    (kept, features)
}

fn cmd_hash(images: &[PathBuf]) -> Result<()> {
    let mut out = output(None)?;
    for path in images {
        let bytes = fs::read(path).with_context(|| format!("read {}", path.display()))?;
        let img = decode(&bytes).with_context(|| format!("decode {}", path.display()))?;
        if images.len() == 1 {
            writeln!(out, "{}", phash(&img))?;
        } else {
            writeln!(out, "{}  {}", phash(&img), path.display())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_dedup_run(input: &InputArgs, window_args: &WindowArgs, out: Option<&Path>) -> Result<()> {
    let records = input.records()?;
    let mut window = window_args.window()?;
    let extracted = extract_records(&records, input.fetcher().as_ref());
    let lines: Vec<_> = records
        .iter()
        .zip(extracted)
        .map(|(r, res)| match res {
            Ok((_, hash)) => {
                let decision = window.check_and_insert(hash, &r.id);
                let mut line = json!({ "id": r.id, "hash": hash.to_string() });
                if let serde_json::Value::Object(extra) = serde_json::to_value(decision)? {
                    line.as_object_mut().expect("object").extend(extra);
                }
                Ok(line)
            }
            Err((reason, detail)) => Ok(json!({ "id": r.id, "error": reason, "detail": detail })),
        })
        .collect::<Result<_>>()?;
    window_args.save(&window)?;
    write_jsonl(out, &lines)
}

fn cmd_relevancy_train(
    seed: u64,
    input: &InputArgs,
    train_args: &TrainArgs,
    categories: &[String],
    model_out: &Path,
    report_out: Option<&Path>,
) -> Result<()> {
    let cats: Vec<&str> = if categories.is_empty() {
        DEFAULT_IRRELEVANT_CATEGORIES.to_vec()
    } else {
        categories.iter().map(String::as_str).collect()
    };
    let selected = build_relevance_dataset(&input.records()?, &cats, seed)?;
    let (records, features) = featurize(&selected, input.fetcher().as_ref());
    let classes = vec![RELEVANT.to_string(), IRRELEVANT.to_string()];
    let labels = records
        .iter()
        .map(|r| match r.relevance {
            Some(crisis_filter::record::Relevance::Relevant) => 0,
            _ => 1,
        })
        .collect();
    let ds = Dataset::new(classes.clone(), features, labels)?;
    let split = train_split(&ds, &train_args.params(seed), seed)?;
    save_model(model_out, &split.model)?;
    write_json(
        report_out,
        &json!({
            "classes": classes,
            "n": ds.len(),
            "class_counts": ds.class_counts(),
            "sizes": split.sizes,
            "best_epoch": split.best_epoch,
            "validation": split.validation,
            "test": split.test,
        }),
    )
}

fn cmd_relevancy_score(args: &ScoreArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    RelevanceScorer::check(&model).map_err(|e| anyhow!("{}: {e}", args.model.display()))?;
    let records = args.input.records()?;
    let extracted = extract_records(&records, args.input.fetcher().as_ref());
    let lines: Vec<_> = records
        .iter()
        .zip(extracted)
        .map(|(r, res)| match res {
            Ok((f, _)) => {
                let p = model.relevance_probability(&f)?;
                Ok(json!({ "id": r.id, "p_relevant": p, "relevant": p >= RELEVANCE_THRESHOLD }))
            }
            Err((reason, detail)) => Ok(json!({ "id": r.id, "error": reason, "detail": detail })),
        })
        .collect::<Result<_>>()?;
    write_jsonl(args.out.as_deref(), &lines)
}

fn cmd_damage_train(
    seed: u64,
    input: &InputArgs,
    train_args: &TrainArgs,
    folds: usize,
    model_out: &Path,
    report_out: Option<&Path>,
) -> Result<()> {
    let labeled: Vec<ImageRecord> = input.records()?.into_iter().filter(|r| r.damage.is_some()).collect();
    if labeled.is_empty() {
        bail!("no damage-labeled records in {}", input.input.display());
    }
    let (records, features) = featurize(&labeled, input.fetcher().as_ref());
    let classes: Vec<String> = DamageLabel::ALL.iter().map(|d| d.as_str().to_string()).collect();
    let labels = records
        .iter()
        .map(|r| DamageLabel::ALL.iter().position(|&d| Some(d) == r.damage).expect("labeled"))
        .collect();
    let ds = Dataset::new(classes.clone(), features, labels)?;
    let params = train_args.params(seed);
    let cv = cross_validate(&ds, &params, folds, seed)?;
    let model = train(&ds, &params)?.model;
    save_model(model_out, &model)?;
    write_json(
        report_out,
        &json!({
            "classes": classes,
            "n": ds.len(),
            "class_counts": ds.class_counts(),
            "folds": folds,
            "cv": cv.report,
        }),
    )
}

fn cmd_damage_score(args: &ScoreArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let records = args.input.records()?;
    let extracted = extract_records(&records, args.input.fetcher().as_ref());
    let lines: Vec<_> = records
        .iter()
        .zip(extracted)
        .map(|(r, res)| match res {
            Ok((f, _)) => {
                let scores = model.score(&f)?;
                let best = crisis_filter::metrics::argmax(&scores);
                let by_class: serde_json::Map<String, serde_json::Value> = model
                    .classes()
                    .iter()
                    .zip(&scores)
                    .map(|(c, &p)| (c.clone(), json!(p)))
                    .collect();
                Ok(json!({ "id": r.id, "predicted": model.classes()[best], "scores": by_class }))
            }
            Err((reason, detail)) => Ok(json!({ "id": r.id, "error": reason, "detail": detail })),
        })
        .collect::<Result<_>>()?;
    write_jsonl(args.out.as_deref(), &lines)
}

#[allow(clippy::too_many_arguments)]
fn cmd_pipeline_run(
    input: &InputArgs,
    window_args: &WindowArgs,
    model: Option<&Path>,
    use_labels: bool,
    cfg: PipelineConfig,
    report_out: Option<&Path>,
    outcomes_out: Option<&Path>,
) -> Result<()> {
    let scorer: Box<dyn RelevanceScorer> = match model {
        Some(path) => Box::new(load_model(path)?),
        None if use_labels => Box::new(LabelScorer),
        None => {
            log::warn!("no relevancy model given; every record passes the relevancy stage");
            Box::new(PassAll)
        }
    };
    let records = input.records()?;
    let mut window = window_args.window()?;
    let out = run_pipeline(&records, input.fetcher().as_ref(), scorer.as_ref(), &mut window, &cfg)?;
    window_args.save(&window)?;
    if let Some(path) = outcomes_out {
        let lines: Vec<_> = out
            .outcomes
            .iter()
            .map(serde_json::to_value)
            .collect::<Result<_, _>>()?;
        write_jsonl(Some(path), &lines)?;
    }
    write_json(report_out, &out.report)
}

fn cmd_corpus_generate(seed: u64, spec: &SpecArgs, out: &Path) -> Result<()> {
    let corpus = spec.corpus(seed)?;
    corpus.write(out)?;
    let violations = corpus.violations(corpus.spec.threshold);
    if !violations.is_empty() {
        log::warn!("{} pairs break the duplicate-distance contract", violations.len());
    }
    write_json(
        Some(&out.join("truth.json")),
        &json!({
            "spec": corpus.spec,
            "stats": corpus.stats,
            "expected_retention": corpus.expected_retention(),
            "violations": violations,
        }),
    )
}

fn cmd_sweep(seed: u64, spec: &SpecArgs, n_pairs: usize, curve_out: Option<&Path>, report_out: Option<&Path>) -> Result<()> {
    let corpus = spec.corpus(seed)?;
    let result = sweep_threshold_experiment(&corpus, n_pairs, seed)?;
    if let Some(path) = report_out {
        write_json(Some(path), &result)?;
    }
    let mut out = output(curve_out)?;
    write_curve_csv(&result.curve, &mut out)?;
    out.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_budget_sim(
    seed: u64,
    spec: &SpecArgs,
    setting: &str,
    cfg: BudgetConfig,
    model: Option<&Path>,
    report_out: Option<&Path>,
    predictions_dir: Option<&Path>,
) -> Result<()> {
    let settings: Vec<Setting> = if setting.eq_ignore_ascii_case("all") {
        Setting::ALL.to_vec()
    } else {
        vec![setting.parse().map_err(|e| usage(format!("{e}")))?]
    };
    let corpus = spec.corpus(seed)?;
    let relevant: Vec<bool> = match model {
        Some(path) => {
            let m = load_model(path)?;
            RelevanceScorer::check(&m).map_err(|e| anyhow!("{}: {e}", path.display()))?;
            corpus
                .items
                .iter()
                .map(|it| m.relevance_probability(&it.features).map(|p| p >= RELEVANCE_THRESHOLD))
                .collect::<Result<_, _>>()?
        }
        None => corpus
            .items
            .iter()
            .map(|it| it.record.relevance != Some(crisis_filter::record::Relevance::Irrelevant))
            .collect(),
    };
    if let Some(dir) = predictions_dir {
        fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
    }
    let mut reports = Vec::new();
    for s in &settings {
        let (report, predictions) = run_setting(&corpus, &cfg, *s, &relevant)?;
        if let Some(dir) = predictions_dir {
            write_json(Some(&dir.join(format!("{s}.json"))), &predictions)?;
        }
        reports.push(report);
    }
    if reports.len() == 1 {
        write_json(report_out, &reports[0])
    } else {
        write_json(report_out, &reports)
    }
}

fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let bytes = fs::read(path).with_context(|| format!("read {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parse prediction set {}", path.display()))
}

fn cmd_perm_test(seed: u64, a: &Path, b: &Path, shuffles: usize, summary_only: bool, report_out: Option<&Path>) -> Result<()> {
    let (a, b) = (read_predictions(a)?, read_predictions(b)?);
    let mut result = permutation_test(&a, &b, shuffles, seed)?;
    if summary_only {
        result.diff_samples.clear();
    }
    write_json(report_out, &result)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Hash { images } => cmd_hash(images),
        Command::Dedup(DedupCmd::Run { input, window, out }) => cmd_dedup_run(input, window, out.as_deref()),
        Command::Relevancy(RelevancyCmd::Train {
            input,
            train,
            categories,
            model_out,
            report_out,
        }) => cmd_relevancy_train(seed, input, train, categories, model_out, report_out.as_deref()),
        Command::Relevancy(RelevancyCmd::Score(args)) => cmd_relevancy_score(args),
        Command::Damage(DamageCmd::Train {
            input,
            train,
            folds,
            model_out,
            report_out,
        }) => cmd_damage_train(seed, input, train, *folds, model_out, report_out.as_deref()),
        Command::Damage(DamageCmd::Score(args)) => cmd_damage_score(args),
        Command::Pipeline(PipelineCmd::Run {
            input,
            window,
            model,
            use_labels,
            relevance_threshold,
            dedup_first,
            workers,
            queue_capacity,
            report_out,
            outcomes_out,
        }) => {
            let cfg = PipelineConfig {
                workers: *workers,
                queue_capacity: *queue_capacity,
                dedup_first: *dedup_first,
                relevance_threshold: *relevance_threshold,
            };
            cmd_pipeline_run(
                input,
                window,
                model.as_deref(),
                *use_labels,
                cfg,
                report_out.as_deref(),
                outcomes_out.as_deref(),
            )
        }
        Command::Corpus(CorpusCmd::Generate { spec, out }) => cmd_corpus_generate(seed, spec, out),
        Command::Eval(EvalCmd::Sweep {
            spec,
            n_pairs,
            curve_out,
            report_out,
        }) => cmd_sweep(seed, spec, *n_pairs, curve_out.as_deref(), report_out.as_deref()),
        Command::Eval(EvalCmd::BudgetSim {
            spec,
            setting,
            budget,
            cost_per_label,
            folds,
            threshold,
            train,
            model,
            report_out,
            predictions_dir,
        }) => {
            let cfg = BudgetConfig {
                budget_usd: *budget,
                cost_per_label: *cost_per_label,
                sample_seed: seed,
                folds: *folds,
                dedup_threshold: *threshold,
                train: train.params(seed),
            };
            cmd_budget_sim(
                seed,
                spec,
                setting,
                cfg,
                model.as_deref(),
                report_out.as_deref(),
                predictions_dir.as_deref(),
            )
        }
        Command::Eval(EvalCmd::PermTest {
            a,
            b,
            shuffles,
            summary_only,
            report_out,
        }) => cmd_perm_test(seed, a, b, *shuffles, *summary_only, report_out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", e.render());
                    ExitCode::from(1)
                }
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.chain().any(|c| {
                let kind = c
                    .downcast_ref::<io::Error>()
                    .map(io::Error::kind)
                    .or_else(|| c.downcast_ref::<serde_json::Error>().and_then(serde_json::Error::io_error_kind));
                kind == Some(io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

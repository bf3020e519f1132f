use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hc_edit::calibration::{build_null_table, CalibrationConfig, NullTable};
use hc_edit::harness::{
    estimate_power, read_rows, AltSpec, Dataset, MixtureConfig, PowerConfig, Statistic,
    SurrogateModel,
};
use hc_edit::multiple_testing::{simulate_critical_values_with, CriticalValueTable, HcConfig};
use hc_edit::pipeline::{analyze, AnalyzeOptions, ThresholdSpec, Verdict};
use hc_edit::provider::{
    read_records, validate_logprob_file, write_records, ContextPolicy, FileProvider,
    ProviderDescriptor, TokenizedSentence,
};
use hc_edit::rng::substream;
use hc_edit::text_ingest::{Document, SegmentationConfig, SpanFile};

/// Exit status when the document is judged edited.
const EXIT_EDITED: u8 = 3;

#[derive(Parser)]
#[command(name = "hc-edit", version, about = "Detect sparse edits in machine-generated text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a length-conditioned null table from logprob records.
    Calibrate(CalibrateArgs),
    /// Test one document for edits.
    Analyze(AnalyzeArgs),
    /// Simulate HC critical values under the uniform null.
    Crit(CritArgs),
    /// Estimate detection power on a mixed-authorship dataset.
    Power(PowerArgs),
    /// Sparse-mixture Monte Carlo comparing HC, Fisher and BH.
    Mixmc(MixmcArgs),
    /// Check a logprob file against the record schema.
    Validate(ValidateArgs),
    /// Write the sentence spans of a document for an external scorer.
    Segment(SegmentArgs),
    /// Generate a synthetic corpus with a surrogate model.
    Synth(SynthArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, num_args = 1.., required = true)]
    logprobs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = hc_edit::calibration::DEFAULT_MIN_LEN)]
    min_len: usize,
    #[arg(long, default_value_t = hc_edit::calibration::DEFAULT_MIN_BUCKET)]
    min_bucket: usize,
    #[arg(long, default_value = "none")]
    context: ContextPolicy,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    doc: PathBuf,
    /// `file:PATH` or an http(s) URL.
    #[arg(long)]
    provider: ProviderDescriptor,
    #[arg(long)]
    table: PathBuf,
    #[arg(long, group = "threshold")]
    thr: Option<f64>,
    #[arg(long, group = "threshold")]
    crit_table: Option<PathBuf>,
    /// Directory of `.txt` documents known to be fully generated.
    #[arg(long, group = "threshold")]
    null_docs: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Segmentation config (JSON).
    #[arg(long)]
    segmentation: Option<PathBuf>,
    #[arg(long, default_value_t = hc_edit::multiple_testing::DEFAULT_GAMMA0)]
    gamma0: f64,
    /// Suppress the table printed to stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct CritArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    sims: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = hc_edit::multiple_testing::DEFAULT_GAMMA0)]
    gamma0: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PowerArgs {
    /// JSON Lines rows of {"machine", "human", "title"}.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    logprobs: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2")]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    null_sims: usize,
    #[arg(long, default_value_t = hc_edit::calibration::DEFAULT_MIN_LEN)]
    min_len: usize,
    #[arg(long, default_value_t = hc_edit::calibration::DEFAULT_MIN_BUCKET)]
    min_bucket: usize,
    #[arg(long)]
    segmentation: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MixmcArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    null_sims: usize,
    #[arg(long, value_delimiter = ',', default_value = "hc,fisher,bh")]
    stats: Vec<Statistic>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    file: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sentences in the analysed documents.
    #[arg(long, default_value_t = 60)]
    sentences: usize,
    /// Per-sentence edit probability of `edited.txt`.
    #[arg(long, default_value_t = 0.2)]
    edit_rate: f64,
    #[arg(long, default_value_t = 400)]
    calibration_docs: usize,
    #[arg(long, default_value_t = 25)]
    null_docs: usize,
    #[arg(long, default_value_t = 120)]
    articles: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Calibrate(a) => calibrate(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Crit(a) => crit(a),
        Command::Power(a) => power(a),
        Command::Mixmc(a) => mixmc(a),
        Command::Validate(a) => validate(a),
        Command::Segment(a) => run_segment(a),
        Command::Synth(a) => synth(a),
    }
}

fn calibrate(a: CalibrateArgs) -> Result<ExitCode> {
    let mut records = Vec::new();
    for path in &a.logprobs {
        records.extend(read_records(path)?);
    }
    let n_records = records.len();
    let cfg = CalibrationConfig {
        min_len: a.min_len,
        min_bucket: a.min_bucket,
        policy: a.context,
    };
    let table = build_null_table(records, cfg)?;
    emit(Some(&a.out), &table.to_json()?)?;
    eprintln!(
        "{} sentences, {} calibrated, {} excluded as short",
        n_records,
        table.total(),
        table.excluded_short
    );
    Ok(ExitCode::SUCCESS)
}

fn run_analyze(a: AnalyzeArgs) -> Result<ExitCode> {
    let rules = segmentation(a.segmentation.as_deref())?;
    let table = NullTable::read(&a.table)?;
    let doc = Document::from_file(&a.doc, &rules)?;
    log::info!("{}: {} sentences", doc.doc_id, doc.len());
    let provider = a.provider.clone().with_model_id(table.model_id.clone()).connect()?;
    let thr = if let Some(v) = a.thr {
        ThresholdSpec::user(v)
    } else if let Some(path) = &a.crit_table {
        ThresholdSpec::table(CriticalValueTable::read(path)?, a.alpha)
    } else if let Some(dir) = &a.null_docs {
        ThresholdSpec::null_docs(read_documents(dir, &rules)?, a.alpha)
    } else {
        bail!("one of --thr, --crit-table or --null-docs is required");
    };
    let opts = AnalyzeOptions {
        hc: HcConfig::with_gamma0(a.gamma0),
    };
    let report = analyze(&doc, provider.as_ref(), &table, &thr, opts)?;
    if let Some(out) = &a.out {
        emit(Some(out), &report.to_json()?)?;
    }
    if !a.quiet {
        print!("{}", report.render());
    }
    Ok(match report.verdict {
        Verdict::Edited => ExitCode::from(EXIT_EDITED),
        Verdict::NotEdited => ExitCode::SUCCESS,
    })
}

fn crit(a: CritArgs) -> Result<ExitCode> {
    log::info!("simulating {} sizes x {} levels, {} draws each", a.n.len(), a.alpha.len(), a.sims);
    let table = simulate_critical_values_with(&a.n, &a.alpha, a.sims, a.seed, HcConfig::with_gamma0(a.gamma0))?;
    emit(a.out.as_deref(), &table.to_json()?)?;
    Ok(ExitCode::SUCCESS)
}

fn power(a: PowerArgs) -> Result<ExitCode> {
    let rules = segmentation(a.segmentation.as_deref())?;
    let rows = read_rows(&a.data)?;
    let records = FileProvider::open(&a.logprobs)?;
    let id = a
        .data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let dataset = Dataset::from_rows(id, &rows, &records, &rules)?;
    log::info!(
        "dataset {}: {} machine and {} human sentences",
        dataset.id,
        dataset.machine_len(),
        dataset.human.len()
    );
    let cfg = PowerConfig {
        epsilons: a.eps,
        ns: a.n,
        alpha: a.alpha,
        n_trials: a.trials,
        seed: a.seed,
        calibration: CalibrationConfig {
            min_len: a.min_len,
            min_bucket: a.min_bucket,
            policy: ContextPolicy::None,
        },
        hc: HcConfig::default(),
        null_sims: a.null_sims,
    };
    let report = estimate_power(&dataset, &cfg)?;
    for s in &report.skipped {
        eprintln!(
            "skipped eps = {} n = {}: {}",
            s.config.epsilon, s.config.n_sentences, s.reason
        );
    }
    emit(a.out.as_deref(), &to_json(&report)?)?;
    Ok(ExitCode::SUCCESS)
}

fn mixmc(a: MixmcArgs) -> Result<ExitCode> {
    let cfg = MixtureConfig {
        n: a.n,
        beta: a.beta,
        alt: AltSpec { mu: a.mu },
        stats: a.stats,
        n_trials: a.trials,
        seed: a.seed,
        alpha: a.alpha,
        null_sims: a.null_sims,
        hc: HcConfig::default(),
    };
    let report = hc_edit::harness::mixture_mc(&cfg)?;
    emit(a.out.as_deref(), &to_json(&report)?)?;
    Ok(ExitCode::SUCCESS)
}

fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let summary = validate_logprob_file(&a.file)?;
    print!("{}", to_json(&summary)?);
    Ok(if summary.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_segment(a: SegmentArgs) -> Result<ExitCode> {
    let rules = segmentation(a.config.as_deref())?;
    let doc = Document::from_file(&a.input, &rules)?;
    emit(a.out.as_deref(), &SpanFile::from(&doc).to_json()?)?;
    Ok(ExitCode::SUCCESS)
}

/// Layout of the generated directory:
/// `calibration.logprobs.jsonl`, `edited.txt`, `clean.txt`, `null/*.txt`,
/// `records.logprobs.jsonl` (edited, clean and null documents),
/// `dataset.jsonl` with `dataset.logprobs.jsonl`, and `truth.json`.
fn synth(a: SynthArgs) -> Result<ExitCode> {
    let model = SurrogateModel::default();
    let dir = &a.out_dir;
    fs::create_dir_all(dir.join("null")).with_context(|| format!("creating {}", dir.display()))?;
    let mut rng = substream(a.seed, 0);

    let mut calibration = Vec::new();
    for d in 0..a.calibration_docs {
        calibration.extend(model.document(&format!("cal-{d:04}"), a.sentences, 0.0, &mut rng).records);
    }
    write_records(dir.join("calibration.logprobs.jsonl"), &calibration)?;

    let mut records: Vec<TokenizedSentence> = Vec::new();
    let edited = model.document("edited", a.sentences, a.edit_rate, &mut rng);
    fs::write(dir.join("edited.txt"), &edited.text)?;
    records.extend(edited.records);
    let clean = model.document("clean", a.sentences, 0.0, &mut rng);
    fs::write(dir.join("clean.txt"), &clean.text)?;
    records.extend(clean.records);
    for d in 0..a.null_docs {
        let id = format!("null-{d:03}");
        let doc = model.document(&id, a.sentences, 0.0, &mut rng);
        fs::write(dir.join("null").join(format!("{id}.txt")), &doc.text)?;
        records.extend(doc.records);
    }
    write_records(dir.join("records.logprobs.jsonl"), &records)?;

    let corpus = model.corpus(a.articles, 20, &mut rng);
    let mut rows = String::new();
    for row in &corpus.rows {
        rows.push_str(&serde_json::to_string(row)?);
        rows.push('\n');
    }
    fs::write(dir.join("dataset.jsonl"), rows)?;
    write_records(dir.join("dataset.logprobs.jsonl"), &corpus.records)?;

    #[derive(Serialize)]
    struct Truth<'a> {
        model: &'a SurrogateModel,
        seed: u64,
        edited: &'a [usize],
    }
    let truth = Truth {
        model: &model,
        seed: a.seed,
        edited: &edited.truth,
    };
    fs::write(dir.join("truth.json"), to_json(&truth)?)?;
    eprintln!("wrote synthetic corpus to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn segmentation(path: Option<&Path>) -> Result<SegmentationConfig> {
    Ok(match path {
        Some(p) => SegmentationConfig::from_json_file(p)?,
        None => SegmentationConfig::default(),
    })
}

/// Every `.txt` file in `dir`, in file name order.
fn read_documents(dir: &Path, rules: &SegmentationConfig) -> Result<Vec<Document>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "txt"));
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(Document::from_file(p, rules)?))
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

//! Command-line interface to the trajectory evaluation toolkit.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use trajeval_core::analysis::{write_metrics_csv, MetricsRow};
use trajeval_core::corpus::{
    build_split, corpus_stats, load_corpus, load_problem, write_corpus, Corpus, LoadOptions,
    SplitManifest,
};
use trajeval_core::genharness::{
    append_ledger, generate, records_to_corpus, GenerateOptions, GenerationTask, HttpTextEndpoint,
    PromptExample, PromptTemplate, SamplingParams,
};
use trajeval_core::report::{render, run_evaluation, ComparisonReport, EvalConfig, RenderFormat};
use trajeval_core::streams::{
    extract_high_res, extract_low_res, HighResRecord, LowResRecord,
};

#[derive(Parser)]
#[command(name = "trajeval", version, about = "Evaluate how student-like code submission trajectories are")]
struct Cli {
    /// Evaluation config file (JSON); required by `eval`, optional elsewhere
    /// as a source of default paths.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file, report stats, and optionally write the
    /// canonical normalized form and a per-submission metrics CSV.
    Ingest(IngestArgs),
    /// Restrict a corpus to the streams named by a split manifest.
    Split(SplitArgs),
    /// Extract low-resolution stages or high-resolution next-step windows.
    Extract(ExtractArgs),
    /// Build prompts from extracted examples, query a generation endpoint,
    /// and archive the results.
    Generate(GenerateArgs),
    /// Run the full evaluation pipeline described by the config.
    Eval(EvalArgs),
    /// Render a saved report as JSON, a CSV bundle, or markdown tables.
    Render(RenderArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus file (line-delimited JSON records).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Drop byte-identical consecutive submissions.
    #[arg(long)]
    dedup_consecutive: bool,
    /// Tolerated fraction of malformed record lines.
    #[arg(long, default_value_t = 0.0)]
    max_malformed_frac: f64,
    /// Write the canonical normalized corpus here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-submission static metrics here as CSV.
    #[arg(long)]
    metrics_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtractMode {
    LowRes,
    HighRes,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(value_enum)]
    mode: ExtractMode,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// History size for high-resolution windows.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Condition on the student's chronologically previous problem.
    #[arg(long)]
    with_context: bool,
    /// Output JSONL of example references.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Extracted example references (JSONL from `extract`).
    #[arg(long)]
    examples: PathBuf,
    /// Corpus the references resolve against.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Problem definition files (JSON), one per problem.
    #[arg(long)]
    problems: Vec<PathBuf>,
    /// Prompt template file; defaults ship with the toolkit.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Chat-completion endpoint URL.
    #[arg(long)]
    endpoint_url: String,
    /// Model name sent to the endpoint.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    #[arg(long, default_value_t = 0.8)]
    top_p: f64,
    #[arg(long, default_value_t = 20)]
    top_k: u32,
    #[arg(long, default_value_t = 0.0)]
    min_p: f64,
    /// Concurrent in-flight requests.
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Sustained requests per second.
    #[arg(long, default_value_t = 4.0)]
    rps: f64,
    /// Append generation records to this ledger.
    #[arg(long)]
    ledger: PathBuf,
    /// Also archive extracted code as a candidate corpus.
    #[arg(long)]
    corpus_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Report output path (canonical JSON).
    #[arg(long)]
    out: PathBuf,
    /// Override: sandbox command for the doctest executor.
    #[arg(long, num_args = 1.., value_delimiter = ' ')]
    executor_cmd: Option<Vec<String>>,
    /// Override: per-test timeout in seconds.
    #[arg(long)]
    test_timeout_s: Option<f64>,
    /// Override: executor worker pool width.
    #[arg(long)]
    max_workers: Option<usize>,
    /// Override: embedding request batch size.
    #[arg(long)]
    embed_batch: Option<usize>,
    /// Override: progress curve bin count.
    #[arg(long)]
    progress_bins: Option<usize>,
    /// Override: coverage direction (generated_covers_students or
    /// students_cover_generated).
    #[arg(long)]
    coverage_direction: Option<String>,
}

#[derive(Args)]
struct RenderArgs {
    /// Saved report (JSON produced by `eval`).
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    format: String,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => ingest(args, cli.config.as_deref()),
        Command::Split(args) => split(args, cli.config.as_deref()),
        Command::Extract(args) => extract(args, cli.config.as_deref()),
        Command::Generate(args) => generate_cmd(args, cli.config.as_deref()),
        Command::Eval(args) => eval(args, cli.config.as_deref()),
        Command::Render(args) => render_cmd(args),
    }
}

/// Resolve a corpus path: explicit flag first, then the config's reference.
fn corpus_path(explicit: Option<PathBuf>, config: Option<&Path>) -> Result<PathBuf> {
    if let Some(path) = explicit {
        return Ok(path);
    }
    if let Some(config_path) = config {
        let config = EvalConfig::load(config_path)?;
        return Ok(config.reference_corpus);
    }
    bail!("no corpus given: pass --corpus or a --config naming one")
}

fn load(path: &Path, options: &LoadOptions) -> Result<Corpus> {
    let (corpus, report) = load_corpus(path, options)?;
    for malformed in &report.malformed {
        eprintln!(
            "warning: {} line {}: {}",
            path.display(),
            malformed.line_number,
            malformed.message
        );
    }
    if report.deduped_consecutive > 0 {
        eprintln!(
            "note: dropped {} consecutive duplicate submissions",
            report.deduped_consecutive
        );
    }
    Ok(corpus)
}

fn ingest(args: IngestArgs, config: Option<&Path>) -> Result<()> {
    let path = corpus_path(args.corpus, config)?;
    let options = LoadOptions {
        dedup_consecutive: args.dedup_consecutive,
        max_malformed_fraction: args.max_malformed_frac,
        ..LoadOptions::default()
    };
    let corpus = load(&path, &options)?;
    let stats = corpus_stats(&corpus);
    println!(
        "students / problems / submissions: {}",
        stats.render_summary()
    );
    println!("streams: {}", stats.streams);

    if let Some(out) = args.out {
        write_corpus(&corpus, &out)?;
        println!("wrote normalized corpus to {}", out.display());
    }
    if let Some(csv_path) = args.metrics_csv {
        let rows: Vec<MetricsRow> = corpus
            .streams()
            .flat_map(|s| s.submissions.iter().map(MetricsRow::for_submission))
            .collect();
        write_metrics_csv(&rows, &csv_path)?;
        println!("wrote {} metric rows to {}", rows.len(), csv_path.display());
    }
    Ok(())
}

fn split(args: SplitArgs, config: Option<&Path>) -> Result<()> {
    let path = corpus_path(args.corpus, config)?;
    let corpus = load(&path, &LoadOptions::default())?;
    let manifest = SplitManifest::load(&args.manifest)?;
    let filtered = build_split(&corpus, &manifest)?;
    write_corpus(&filtered, &args.out)?;
    let stats = corpus_stats(&filtered);
    println!(
        "split {:?}: {} streams, {} submissions -> {}",
        manifest.name,
        stats.streams,
        stats.submissions,
        args.out.display()
    );
    Ok(())
}

fn placeholder_problem(problem_id: &str) -> trajeval_core::corpus::ProblemSpec {
    trajeval_core::corpus::ProblemSpec {
        problem_id: problem_id.to_string(),
        statement: String::new(),
        skeleton_code: String::new(),
        doctests: vec![],
    }
}

fn extract(args: ExtractArgs, config: Option<&Path>) -> Result<()> {
    let path = corpus_path(args.corpus, config)?;
    let corpus = load(&path, &LoadOptions::default())?;

    let mut out = fs::File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut written = 0usize;

    for stream in corpus.streams() {
        // Reference output carries positions only; an empty problem spec is
        // enough to drive extraction.
        let problem = corpus
            .get_problem(&stream.problem_id)
            .cloned()
            .unwrap_or_else(|| placeholder_problem(&stream.problem_id));

        let prior = if args.with_context {
            let ordered = corpus.student_streams_by_onset(&stream.student_id);
            let position = ordered
                .iter()
                .position(|s| s.problem_id == stream.problem_id)
                .unwrap_or(0);
            if position > 0 {
                Some(ordered[position - 1].clone())
            } else {
                None
            }
        } else {
            None
        };

        match args.mode {
            ExtractMode::LowRes => {
                for example in extract_low_res(stream, &problem, prior.as_ref())? {
                    let record = LowResRecord::of(&example);
                    writeln!(out, "{}", serde_json::to_string(&record)?)?;
                    written += 1;
                }
            }
            ExtractMode::HighRes => {
                for example in extract_high_res(stream, args.k, &problem, prior.as_ref())? {
                    let record = HighResRecord::of(&example);
                    writeln!(out, "{}", serde_json::to_string(&record)?)?;
                    written += 1;
                }
            }
        }
    }
    println!("wrote {written} example records to {}", args.out.display());
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum ExampleRecord {
    High(HighResRecord),
    Low(LowResRecord),
}

fn generate_cmd(args: GenerateArgs, config: Option<&Path>) -> Result<()> {
    let corpus_file = corpus_path(args.corpus, config)?;
    let mut corpus = load(&corpus_file, &LoadOptions::default())?;
    for problem_path in &args.problems {
        corpus.insert_problem(load_problem(problem_path)?);
    }

    let text = fs::read_to_string(&args.examples)
        .with_context(|| format!("cannot read {}", args.examples.display()))?;
    let user_template = args.template.as_deref().map(PromptTemplate::load).transpose()?;

    let mut tasks = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ExampleRecord = serde_json::from_str(line)
            .with_context(|| format!("bad example record on line {}", idx + 1))?;
        let task = match &record {
            ExampleRecord::High(high) => {
                let example = high.resolve(&corpus)?;
                let template = user_template.clone().unwrap_or_else(|| {
                    if example.context_segment.is_some() {
                        PromptTemplate::default_high_res_with_context()
                    } else {
                        PromptTemplate::default_high_res()
                    }
                });
                GenerationTask::from_example(PromptExample::HighRes(&example), &template)?
            }
            ExampleRecord::Low(low) => {
                let example = low.resolve(&corpus)?;
                let template = user_template.clone().unwrap_or_else(|| {
                    if example.context.is_some() {
                        PromptTemplate::default_low_res_with_context()
                    } else {
                        PromptTemplate::default_low_res()
                    }
                });
                GenerationTask::from_example(PromptExample::LowRes(&example), &template)?
            }
        };
        tasks.push(task);
    }
    println!("built {} prompts", tasks.len());

    let endpoint = HttpTextEndpoint::new(
        &args.endpoint_url,
        &args.model,
        std::env::var("GEN_API_KEY").ok(),
    );
    let params = SamplingParams {
        temperature: args.temperature,
        top_p: args.top_p,
        top_k: args.top_k,
        min_p: args.min_p,
    };
    let options = GenerateOptions {
        concurrency: args.concurrency,
        requests_per_second: args.rps,
        retries: 3,
    };
    let records = generate(&tasks, &endpoint, &params, &options)?;
    append_ledger(&records, &args.ledger)?;
    println!("appended {} records to {}", records.len(), args.ledger.display());

    if let Some(corpus_out) = args.corpus_out {
        let (candidate, harvest) = records_to_corpus(&records, &corpus)?;
        write_corpus(&candidate, &corpus_out)?;
        println!(
            "archived {} submissions to {} ({} extraction failures, {} errors, {} duplicates)",
            harvest.kept,
            corpus_out.display(),
            harvest.extraction_failed,
            harvest.errored,
            harvest.duplicates.len()
        );
    }
    Ok(())
}

fn eval(args: EvalArgs, config_path: Option<&Path>) -> Result<()> {
    let config_path =
        config_path.ok_or_else(|| anyhow::anyhow!("eval requires --config <file>"))?;
    let mut config = EvalConfig::load(config_path)?;

    if let Some(batch) = args.embed_batch {
        config.embedding.batch_size = batch;
    }
    if let Some(bins) = args.progress_bins {
        config.progress_bins = bins;
    }
    if let Some(direction) = &args.coverage_direction {
        config.coverage_direction = match direction.as_str() {
            "generated_covers_students" => {
                trajeval_core::embedding::CoverageDirection::GeneratedCoversStudents
            }
            "students_cover_generated" => {
                trajeval_core::embedding::CoverageDirection::StudentsCoverGenerated
            }
            other => bail!("unknown coverage direction {other:?}"),
        };
    }
    if args.executor_cmd.is_some() || args.test_timeout_s.is_some() || args.max_workers.is_some() {
        if let trajeval_core::report::FunctionalMode::Execute {
            executor_cmd,
            test_timeout_s,
            max_workers,
        } = &mut config.functional
        {
            if let Some(cmd) = args.executor_cmd {
                *executor_cmd = cmd;
            }
            if let Some(timeout) = args.test_timeout_s {
                *test_timeout_s = timeout;
            }
            if let Some(workers) = args.max_workers {
                *max_workers = workers;
            }
        } else {
            bail!("executor overrides apply only when the config enables execution");
        }
    }

    let report = run_evaluation(&config)?;
    fs::write(&args.out, report.to_canonical_json())
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!("report digest: {}", report.digest());
    for notice in &report.meta.notices {
        println!("notice: {notice}");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn render_cmd(args: RenderArgs) -> Result<()> {
    let text = fs::read_to_string(&args.report)
        .with_context(|| format!("cannot read {}", args.report.display()))?;
    let report: ComparisonReport =
        serde_json::from_str(&text).context("report does not match the schema")?;
    let format: RenderFormat = args
        .format
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let files = render(&report, format, &args.out_dir)?;
    for file in files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

//! End-to-end evaluation runs and report rendering.
//!
//! [`run_evaluation`] drives the whole pipeline from one configuration:
//! corpus loading and splitting, per-submission analysis, functional
//! classification, embedding metrics, style-model fitting, and table/figure
//! assembly. Partial metric failures (no embedding provider, no executor)
//! degrade to omitted sections with explicit notices; identical inputs and
//! configuration produce byte-identical reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{analyze, CodeMetrics};
use crate::corpus::{
    build_split, corpus_stats, load_corpus, load_problem, Corpus, CorpusError, CorpusStats,
    LoadOptions, SplitManifest, Stream, StreamKey,
};
use crate::embedding::{
    embed, knn_coverage_directed, knn_distance, project_2d, write_projection_csv,
    CoverageDirection, EmbedOptions, EmbeddingError, EmbeddingProvider, EmbeddingSet,
    FileEmbeddingProvider, HttpEmbeddingProvider, Projection2d,
};
use crate::functional::{
    classify_batch, classify_from_grader_text, error_distribution, ErrorType, ExecutorConfig,
    FunctionalError,
};
use crate::stats::{
    bin_curve, fit_style_model, levenshtein, mean_std, normalized_position, pairwise_mae,
    style_score, ProgressCurve, StatsError, StyleScoreModel,
};
use crate::streams::{stage_index, Stage, StreamError, SubmissionRef};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Streams(#[from] StreamError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error("config file {path}: {message}")]
    Config { path: String, message: String },
    #[error("candidate {population} names {count} stream key(s) absent from the reference split: {}", .keys.join(", "))]
    KeyMisalignment {
        population: String,
        count: usize,
        keys: Vec<String>,
    },
    #[error("no problem spec for {0:?} (functional metrics need doctests)")]
    MissingProblem(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which experiment a candidate corpus was generated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    LowRes,
    HighRes,
}

/// One candidate population to compare against the reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub name: String,
    pub path: PathBuf,
    /// Whether the population was generated with cross-problem context.
    pub context: bool,
    pub experiment: Experiment,
}

fn default_knn_k() -> usize {
    3
}
fn default_coverage_k() -> usize {
    10
}
fn default_bins() -> usize {
    10
}
fn default_batch() -> usize {
    32
}
fn default_timeout() -> f64 {
    5.0
}
fn default_workers() -> usize {
    4
}

/// Embedding section of the configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EmbeddingMode {
    #[default]
    Off,
    /// Precomputed-vector file, no network.
    File { path: PathBuf },
    /// HTTP provider; the auth token is read from `token_env`.
    Http {
        url: String,
        provider_id: String,
        dim: usize,
        #[serde(default)]
        token_env: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSection {
    #[serde(flatten)]
    pub mode: EmbeddingMode,
    pub batch_size: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            mode: EmbeddingMode::Off,
            batch_size: default_batch(),
            cache_dir: None,
        }
    }
}

/// Functional section of the configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum FunctionalMode {
    #[default]
    Off,
    /// Sandboxed doctest execution. Empty command means the bundled runner.
    Execute {
        #[serde(default)]
        executor_cmd: Vec<String>,
        #[serde(default = "default_timeout")]
        test_timeout_s: f64,
        #[serde(default = "default_workers")]
        max_workers: usize,
    },
    /// Classify recorded grader output only; no execution.
    GraderText,
}

/// Full evaluation configuration, loadable from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub reference_corpus: PathBuf,
    #[serde(default)]
    pub problems: Vec<PathBuf>,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    pub candidates: Vec<CandidateSpec>,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub functional: FunctionalMode,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    #[serde(default = "default_coverage_k")]
    pub coverage_k: usize,
    #[serde(default)]
    pub coverage_direction: CoverageDirection,
    #[serde(default = "default_bins")]
    pub progress_bins: usize,
    #[serde(default)]
    pub dedup_consecutive: bool,
    #[serde(default)]
    pub max_malformed_fraction: f64,
}

impl EvalConfig {
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(|e| ReportError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config: EvalConfig =
            serde_json::from_str(&text).map_err(|e| ReportError::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        // Paths in the config are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        config.reference_corpus = base.join(&config.reference_corpus);
        config.problems = config.problems.iter().map(|p| base.join(p)).collect();
        config.manifest = config.manifest.as_ref().map(|p| base.join(p));
        for candidate in &mut config.candidates {
            candidate.path = base.join(&candidate.path);
        }
        if let EmbeddingMode::File { path: vector_path } = &mut config.embedding.mode {
            *vector_path = base.join(&vector_path);
        }
        if let Some(dir) = &mut config.embedding.cache_dir {
            *dir = base.join(&dir);
        }
        Ok(config)
    }
}

/// Mean (Std) plus optional pairwise MAE for one table cell group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae_pairs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub population: String,
    pub stage: Stage,
    pub context: bool,
    pub knn_distance: f64,
    pub knn_coverage: f64,
    pub student_rows: usize,
    pub generated_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub population: String,
    pub bin: String,
    /// None for the student reference row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<bool>,
    pub violations: CellStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub style: Option<CellStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub population: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<bool>,
    /// Mean/std over per-stream full-pass rates; MAE over matched 0/1 pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_rate: Option<CellStats>,
    /// Secondary column: mean per-submission pass fraction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_pass_fraction: Option<f64>,
    pub violations: CellStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub style: Option<CellStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cosine_distance_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistRow {
    pub population: String,
    pub stage: Stage,
    pub count: usize,
    /// Proportions in taxonomy order: no_error, logical, runtime, compile.
    pub proportions: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCurve {
    pub population: String,
    #[serde(flatten)]
    pub curve: ProgressCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub toolkit_version: String,
    pub reference_corpus_sha256: String,
    pub candidate_corpus_sha256: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_name: Option<String>,
    pub config_digest: String,
    pub reference_stats: CorpusStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub style_model: Option<StyleScoreModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub style_model_digest: Option<String>,
    pub notices: Vec<String>,
    /// Itemized exclusions: counter name to count.
    pub exclusions: BTreeMap<String, usize>,
    pub interpretation_notes: Vec<String>,
}

/// The paper-shaped comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub meta: ReportMeta,
    pub table1: Vec<Table1Row>,
    pub table2: Vec<Table2Row>,
    pub table3: Vec<Table3Row>,
    pub error_distributions: Vec<ErrorDistRow>,
    pub progress_curves: Vec<PopulationCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection: Option<Projection2d>,
}

impl ComparisonReport {
    /// Canonical JSON bytes of the report.
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// SHA-256 of the canonical JSON; the regeneration identity of a run.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }
}

/// Config copy with directories stripped from every path, so the digest is
/// identical across checkouts and platforms.
fn sanitized_for_digest(config: &EvalConfig) -> EvalConfig {
    let base = |p: &Path| PathBuf::from(p.file_name().unwrap_or(p.as_os_str()));
    let mut sanitized = config.clone();
    sanitized.reference_corpus = base(&config.reference_corpus);
    sanitized.problems = config.problems.iter().map(|p| base(p)).collect();
    sanitized.manifest = config.manifest.as_ref().map(|p| base(p));
    for candidate in &mut sanitized.candidates {
        candidate.path = base(&candidate.path);
    }
    if let EmbeddingMode::File { path } = &mut sanitized.embedding.mode {
        *path = base(path);
    }
    sanitized.embedding.cache_dir = config.embedding.cache_dir.as_ref().map(|p| base(p));
    sanitized
}

fn sha256_file(path: &Path) -> Result<String, ReportError> {
    let bytes = fs::read(path).map_err(|e| ReportError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn sha256_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Per-submission functional outcome used by the report, regardless of
/// whether it came from execution or grader text.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    error_type: ErrorType,
    full_pass: bool,
    pass_fraction: Option<f64>,
}

type SubKey = (StreamKey, usize);

struct Population {
    name: String,
    context: bool,
    experiment: Experiment,
    corpus: Corpus,
    metrics: BTreeMap<SubKey, CodeMetrics>,
    outcomes: BTreeMap<SubKey, Outcome>,
}

fn analyze_corpus(corpus: &Corpus) -> BTreeMap<SubKey, CodeMetrics> {
    let mut metrics = BTreeMap::new();
    for stream in corpus.streams() {
        for sub in &stream.submissions {
            metrics.insert((stream.key(), sub.attempt_index), analyze(&sub.code));
        }
    }
    metrics
}

/// Stage targets of one reference stream: (stage, attempt index).
fn stage_targets(stream: &Stream) -> Result<[(Stage, usize); 3], StreamError> {
    Ok([
        (Stage::First, stage_index(Stage::First, stream.len())?),
        (Stage::Middle, stage_index(Stage::Middle, stream.len())?),
        (Stage::Last, stage_index(Stage::Last, stream.len())?),
    ])
}

/// High-resolution targets of one reference stream: attempts 1..n-1.
fn high_res_targets(stream: &Stream) -> Vec<usize> {
    (1..stream.len()).collect()
}

/// Pair candidate submissions to reference targets by mirrored timestamp.
/// Returns (target attempt index, candidate attempt index) pairs plus the
/// number of candidate submissions matching no target.
fn pair_by_timestamp(
    reference: &Stream,
    candidate: &Stream,
    targets: &[usize],
) -> (Vec<(usize, usize)>, usize) {
    let mut pairs = Vec::new();
    let mut matched_candidates = BTreeSet::new();
    for &target in targets {
        let target_ts = reference.submissions[target].timestamp_ms;
        // Coinciding targets (first == middle in short streams) legitimately
        // share one mirrored candidate.
        if let Some(cand) = candidate
            .submissions
            .iter()
            .find(|c| c.timestamp_ms == target_ts)
        {
            pairs.push((target, cand.attempt_index));
            matched_candidates.insert(cand.attempt_index);
        }
    }
    let unmatched = candidate.len() - matched_candidates.len();
    (pairs, unmatched)
}

fn classify_population(
    corpus: &Corpus,
    problems: &Corpus,
    mode: &FunctionalMode,
    notices: &mut Vec<String>,
    exclusions: &mut BTreeMap<String, usize>,
) -> Result<BTreeMap<SubKey, Outcome>, ReportError> {
    let mut outcomes = BTreeMap::new();
    match mode {
        FunctionalMode::Off => {}
        FunctionalMode::GraderText => {
            for stream in corpus.streams() {
                for sub in &stream.submissions {
                    let classified = sub
                        .grader_output
                        .as_deref()
                        .and_then(classify_from_grader_text);
                    match classified {
                        Some(error_type) => {
                            outcomes.insert(
                                (stream.key(), sub.attempt_index),
                                Outcome {
                                    error_type,
                                    full_pass: error_type == ErrorType::NoError,
                                    pass_fraction: None,
                                },
                            );
                        }
                        None => {
                            *exclusions
                                .entry("functional_unknown_grader_text".to_string())
                                .or_insert(0) += 1;
                        }
                    }
                }
            }
        }
        FunctionalMode::Execute {
            executor_cmd,
            test_timeout_s,
            max_workers,
        } => {
            let bundle_dir = tempfile::tempdir().map_err(|e| ReportError::Io {
                path: "executor bundle dir".to_string(),
                source: e,
            })?;
            let mut config = if executor_cmd.is_empty() {
                ExecutorConfig::bundled_python(bundle_dir.path())?
            } else {
                ExecutorConfig::new(executor_cmd.clone())
            };
            config.per_test_timeout_s = *test_timeout_s;

            let mut items = Vec::new();
            let mut keys = Vec::new();
            for stream in corpus.streams() {
                if problems.get_problem(&stream.problem_id).is_none() {
                    return Err(ReportError::MissingProblem(stream.problem_id.clone()));
                }
                for sub in &stream.submissions {
                    items.push((
                        SubmissionRef {
                            student_id: sub.student_id.clone(),
                            problem_id: sub.problem_id.clone(),
                            attempt_index: sub.attempt_index,
                        },
                        sub.code.clone(),
                    ));
                    keys.push((stream.key(), sub.attempt_index));
                }
            }
            let lookup = |r: &SubmissionRef| problems.get_problem(&r.problem_id).cloned();
            let results = classify_batch(&items, &lookup, &config, *max_workers)?;
            for ((reference, _), key) in items.iter().zip(keys) {
                let result = &results[reference];
                outcomes.insert(
                    key,
                    Outcome {
                        error_type: result.error_type,
                        full_pass: result.full_pass,
                        pass_fraction: Some(result.pass_fraction),
                    },
                );
            }
            if outcomes.is_empty() {
                notices.push("functional: no submissions classified".to_string());
            }
        }
    }
    Ok(outcomes)
}

fn build_provider(
    section: &EmbeddingSection,
) -> Result<Option<Box<dyn EmbeddingProvider>>, ReportError> {
    match &section.mode {
        EmbeddingMode::Off => Ok(None),
        EmbeddingMode::File { path } => {
            Ok(Some(Box::new(FileEmbeddingProvider::load(path)?)))
        }
        EmbeddingMode::Http {
            url,
            provider_id,
            dim,
            token_env,
        } => {
            let token = token_env
                .as_ref()
                .and_then(|name| std::env::var(name).ok());
            Ok(Some(Box::new(HttpEmbeddingProvider::new(
                url,
                provider_id,
                *dim,
                token,
            ))))
        }
    }
}

fn embed_submissions(
    corpus: &Corpus,
    selection: &[(StreamKey, usize)],
    provider: &dyn EmbeddingProvider,
    options: &EmbedOptions,
) -> Result<EmbeddingSet, ReportError> {
    let mut keys = Vec::with_capacity(selection.len());
    let mut texts: Vec<&str> = Vec::with_capacity(selection.len());
    for (stream_key, attempt) in selection {
        let stream = corpus.get_stream(stream_key).expect("selection in corpus");
        let sub = &stream.submissions[*attempt];
        keys.push(SubmissionRef {
            student_id: sub.student_id.clone(),
            problem_id: sub.problem_id.clone(),
            attempt_index: sub.attempt_index,
        });
        texts.push(&sub.code);
    }
    Ok(embed(keys, &texts, provider, options)?)
}

fn cell_stats(values: &[f64], mae: Option<&crate::stats::PairwiseMae>) -> CellStats {
    let (mean, std) = mean_std(values);
    CellStats {
        mean,
        std,
        count: values.len(),
        mae: mae.map(|m| m.value),
        mae_pairs: mae.map(|m| m.pairs),
    }
}

/// Execute the full pipeline described by the configuration.
pub fn run_evaluation(config: &EvalConfig) -> Result<ComparisonReport, ReportError> {
    let mut notices: Vec<String> = Vec::new();
    let mut exclusions: BTreeMap<String, usize> = BTreeMap::new();

    let load_options = LoadOptions {
        dedup_consecutive: config.dedup_consecutive,
        max_malformed_fraction: config.max_malformed_fraction,
        ..LoadOptions::default()
    };

    // Reference corpus, optional split, and problem table.
    let (mut reference, ref_load) = load_corpus(&config.reference_corpus, &load_options)?;
    if !ref_load.malformed.is_empty() {
        exclusions.insert(
            "reference_malformed_lines".to_string(),
            ref_load.malformed.len(),
        );
    }
    let mut split_name = None;
    if let Some(manifest_path) = &config.manifest {
        let manifest = SplitManifest::load(manifest_path)?;
        split_name = Some(manifest.name.clone());
        reference = build_split(&reference, &manifest)?;
    }
    for problem_path in &config.problems {
        reference.insert_problem(load_problem(problem_path)?);
    }

    // Candidate corpora, with stream keys validated against the split.
    let mut populations: Vec<Population> = Vec::new();
    let mut candidate_hashes = BTreeMap::new();
    for spec in &config.candidates {
        let (corpus, load) = load_corpus(&spec.path, &load_options)?;
        if !load.malformed.is_empty() {
            exclusions.insert(
                format!("{}_malformed_lines", spec.name),
                load.malformed.len(),
            );
        }
        let unmatched: Vec<String> = corpus
            .streams()
            .map(Stream::key)
            .filter(|k| reference.get_stream(k).is_none())
            .map(|k| k.to_string())
            .collect();
        if !unmatched.is_empty() {
            return Err(ReportError::KeyMisalignment {
                population: spec.name.clone(),
                count: unmatched.len(),
                keys: unmatched,
            });
        }
        candidate_hashes.insert(spec.name.clone(), sha256_file(&spec.path)?);
        populations.push(Population {
            name: spec.name.clone(),
            context: spec.context,
            experiment: spec.experiment,
            metrics: analyze_corpus(&corpus),
            outcomes: BTreeMap::new(),
            corpus,
        });
    }

    // Static analysis and functional classification.
    let reference_metrics = analyze_corpus(&reference);
    let parse_failures = reference_metrics.values().filter(|m| !m.parse_ok).count();
    if parse_failures > 0 {
        exclusions.insert("reference_parse_failures".to_string(), parse_failures);
    }
    let reference_outcomes = classify_population(
        &reference,
        &reference,
        &config.functional,
        &mut notices,
        &mut exclusions,
    )?;
    if matches!(config.functional, FunctionalMode::Off) {
        notices.push("functional: disabled".to_string());
    }
    for population in &mut populations {
        let failures = population.metrics.values().filter(|m| !m.parse_ok).count();
        if failures > 0 {
            exclusions.insert(format!("{}_parse_failures", population.name), failures);
        }
        // Candidate corpora carry no grader output; grader-text mode leaves
        // them unclassified rather than guessing.
        population.outcomes = classify_population(
            &population.corpus,
            &reference,
            &config.functional,
            &mut notices,
            &mut exclusions,
        )?;
    }

    // Style model, fitted on the reference split only.
    let reference_metric_list: Vec<CodeMetrics> = reference_metrics.values().cloned().collect();
    let style_model = match fit_style_model(&reference_metric_list) {
        Ok((model, diagnostics)) => {
            for feature in diagnostics.constant_features {
                notices.push(format!("style: feature {feature} constant over reference"));
            }
            Some(model)
        }
        Err(e) => {
            notices.push(format!("style: model not fitted ({e})"));
            None
        }
    };

    let score_of = |model: &StyleScoreModel, metrics: &BTreeMap<SubKey, CodeMetrics>, key: &SubKey| {
        metrics.get(key).and_then(|m| style_score(model, m))
    };

    // Embedding provider (optional).
    let provider = build_provider(&config.embedding)?;
    if provider.is_none() {
        notices.push("embedding: disabled".to_string());
    }
    let embed_options = EmbedOptions {
        batch_size: config.embedding.batch_size,
        normalize: false,
        cache_dir: config.embedding.cache_dir.clone(),
    };

    // ---- Table 1 and stage-level pairing (low-resolution populations) ----
    let mut table1 = Vec::new();
    let mut error_rows = Vec::new();
    let mut table2 = Vec::new();
    let mut projection_sets: Vec<(String, EmbeddingSet)> = Vec::new();

    // Reference stage targets, shared by every low-res population.
    let mut reference_stage_targets: BTreeMap<Stage, Vec<(StreamKey, usize)>> = BTreeMap::new();
    for stream in reference.streams() {
        for (stage, attempt) in stage_targets(stream)? {
            reference_stage_targets
                .entry(stage)
                .or_default()
                .push((stream.key(), attempt));
        }
    }

    // Student stage embeddings (only when any low-res candidate exists).
    let has_low_res = populations
        .iter()
        .any(|p| p.experiment == Experiment::LowRes);
    let mut student_stage_sets: BTreeMap<Stage, EmbeddingSet> = BTreeMap::new();
    if let (Some(provider), true) = (provider.as_deref(), has_low_res) {
        let mut pooled_selection = Vec::new();
        for stage in Stage::ALL {
            let selection = reference_stage_targets
                .get(&stage)
                .cloned()
                .unwrap_or_default();
            if selection.is_empty() {
                continue;
            }
            pooled_selection.extend(selection.clone());
            let set = embed_submissions(&reference, &selection, provider, &embed_options)?;
            student_stage_sets.insert(stage, set);
        }
        let pooled = embed_submissions(&reference, &pooled_selection, provider, &embed_options)?;
        projection_sets.push(("student".to_string(), pooled));
    }

    // Reference error distribution per stage.
    if !reference_outcomes.is_empty() {
        let groups: Vec<(String, Vec<ErrorType>)> = Stage::ALL
            .iter()
            .map(|stage| {
                let outcomes = reference_stage_targets
                    .get(stage)
                    .map(|targets| {
                        targets
                            .iter()
                            .filter_map(|key| reference_outcomes.get(key))
                            .map(|o| o.error_type)
                            .collect()
                    })
                    .unwrap_or_default();
                (stage.token().to_string(), outcomes)
            })
            .collect();
        let (distributions, warnings) = error_distribution(&groups);
        notices.extend(warnings.into_iter().map(|w| format!("error_dist(student): {w}")));
        for dist in distributions {
            let stage = Stage::ALL
                .into_iter()
                .find(|s| s.token() == dist.group)
                .expect("stage group");
            error_rows.push(ErrorDistRow {
                population: "student".to_string(),
                stage,
                count: dist.count,
                proportions: dist.proportions,
            });
        }
    }

    // Student row of Table 2: last-stage targets.
    let last_targets = reference_stage_targets
        .get(&Stage::Last)
        .cloned()
        .unwrap_or_default();
    if !last_targets.is_empty() {
        let violations: Vec<f64> = last_targets
            .iter()
            .map(|key| reference_metrics[key].violations as f64)
            .collect();
        let style_values: Vec<f64> = style_model
            .as_ref()
            .map(|model| {
                last_targets
                    .iter()
                    .filter_map(|key| score_of(model, &reference_metrics, key))
                    .collect()
            })
            .unwrap_or_default();
        table2.push(Table2Row {
            population: "student".to_string(),
            bin: "last".to_string(),
            context: None,
            violations: cell_stats(&violations, None),
            style: (!style_values.is_empty()).then(|| cell_stats(&style_values, None)),
        });
    }

    for population in &populations {
        if population.experiment != Experiment::LowRes {
            continue;
        }
        // Stage-pair the candidate submissions against the reference.
        let mut stage_pairs: BTreeMap<Stage, Vec<(SubKey, SubKey)>> = BTreeMap::new();
        let mut missing_targets = 0usize;
        let mut unmatched_candidates = 0usize;
        for candidate_stream in population.corpus.streams() {
            let key = candidate_stream.key();
            let reference_stream = reference.get_stream(&key).expect("keys validated");
            let targets = stage_targets(reference_stream)?;
            let (pairs, unmatched) = pair_by_timestamp(
                reference_stream,
                candidate_stream,
                &targets.iter().map(|(_, i)| *i).collect::<Vec<_>>(),
            );
            unmatched_candidates += unmatched;
            for (stage, target_attempt) in targets {
                match pairs.iter().find(|(t, _)| *t == target_attempt) {
                    Some((_, candidate_attempt)) => {
                        stage_pairs.entry(stage).or_default().push((
                            (key.clone(), target_attempt),
                            (key.clone(), *candidate_attempt),
                        ));
                    }
                    None => missing_targets += 1,
                }
            }
        }
        if missing_targets > 0 {
            exclusions.insert(
                format!("{}_missing_stage_targets", population.name),
                missing_targets,
            );
        }
        if unmatched_candidates > 0 {
            exclusions.insert(
                format!("{}_unmatched_submissions", population.name),
                unmatched_candidates,
            );
        }

        // Table 1 per stage.
        if let Some(provider) = provider.as_deref() {
            let mut pooled_selection = Vec::new();
            for stage in Stage::ALL {
                let pairs = match stage_pairs.get(&stage) {
                    Some(pairs) if !pairs.is_empty() => pairs,
                    _ => continue,
                };
                let candidate_selection: Vec<SubKey> =
                    pairs.iter().map(|(_, c)| c.clone()).collect();
                pooled_selection.extend(candidate_selection.clone());
                let generated = embed_submissions(
                    &population.corpus,
                    &candidate_selection,
                    provider,
                    &embed_options,
                )?;
                let students = match student_stage_sets.get(&stage) {
                    Some(set) => set,
                    None => continue,
                };
                table1.push(Table1Row {
                    population: population.name.clone(),
                    stage,
                    context: population.context,
                    knn_distance: knn_distance(students, &generated, config.knn_k)?,
                    knn_coverage: knn_coverage_directed(
                        students,
                        &generated,
                        config.coverage_k,
                        config.coverage_direction,
                    )?,
                    student_rows: students.len(),
                    generated_rows: generated.len(),
                });
            }
            if !pooled_selection.is_empty() {
                let pooled = embed_submissions(
                    &population.corpus,
                    &pooled_selection,
                    provider,
                    &embed_options,
                )?;
                projection_sets.push((population.name.clone(), pooled));
            }
        }

        // Error distributions per stage.
        if !population.outcomes.is_empty() {
            let groups: Vec<(String, Vec<ErrorType>)> = Stage::ALL
                .iter()
                .map(|stage| {
                    let outcomes = stage_pairs
                        .get(stage)
                        .map(|pairs| {
                            pairs
                                .iter()
                                .filter_map(|(_, c)| population.outcomes.get(c))
                                .map(|o| o.error_type)
                                .collect()
                        })
                        .unwrap_or_default();
                    (stage.token().to_string(), outcomes)
                })
                .collect();
            let (distributions, warnings) = error_distribution(&groups);
            notices.extend(
                warnings
                    .into_iter()
                    .map(|w| format!("error_dist({}): {w}", population.name)),
            );
            for dist in distributions {
                let stage = Stage::ALL
                    .into_iter()
                    .find(|s| s.token() == dist.group)
                    .expect("stage group");
                error_rows.push(ErrorDistRow {
                    population: population.name.clone(),
                    stage,
                    count: dist.count,
                    proportions: dist.proportions,
                });
            }
        }

        // Table 2: last-stage style metrics with pairwise MAE.
        if let Some(pairs) = stage_pairs.get(&Stage::Last) {
            let violations: Vec<f64> = pairs
                .iter()
                .map(|(_, c)| population.metrics[c].violations as f64)
                .collect();
            let violation_pairs: Vec<(Option<f64>, Option<f64>)> = pairs
                .iter()
                .map(|(s, c)| {
                    (
                        Some(population.metrics[c].violations as f64),
                        Some(reference_metrics[s].violations as f64),
                    )
                })
                .collect();
            let violations_mae = pairwise_mae("violations", &violation_pairs).ok();
            let style = style_model.as_ref().map(|model| {
                let values: Vec<f64> = pairs
                    .iter()
                    .filter_map(|(_, c)| score_of(model, &population.metrics, c))
                    .collect();
                let style_pairs: Vec<(Option<f64>, Option<f64>)> = pairs
                    .iter()
                    .map(|(s, c)| {
                        (
                            score_of(model, &population.metrics, c),
                            score_of(model, &reference_metrics, s),
                        )
                    })
                    .collect();
                let mae = pairwise_mae("style_score", &style_pairs).ok();
                cell_stats(&values, mae.as_ref())
            });
            table2.push(Table2Row {
                population: population.name.clone(),
                bin: "last".to_string(),
                context: Some(population.context),
                violations: cell_stats(&violations, violations_mae.as_ref()),
                style,
            });
        }
    }

    // ---- Table 3 and progress curves (high-resolution populations) ----
    let mut table3 = Vec::new();
    let mut progress_curves = Vec::new();

    let reference_streams: Vec<&Stream> = reference.streams().collect();
    let has_high_res = populations
        .iter()
        .any(|p| p.experiment == Experiment::HighRes);

    if has_high_res && !reference_streams.is_empty() {
        // Student progress curves over full streams.
        if !reference_outcomes.is_empty() {
            let mut pass_points = Vec::new();
            let mut full_points = Vec::new();
            for stream in &reference_streams {
                let n = stream.len();
                for sub in &stream.submissions {
                    if let Some(outcome) = reference_outcomes.get(&(stream.key(), sub.attempt_index))
                    {
                        let u = normalized_position(sub.attempt_index, n);
                        if let Some(fraction) = outcome.pass_fraction {
                            pass_points.push((u, fraction));
                        }
                        full_points.push((u, f64::from(outcome.full_pass)));
                    }
                }
            }
            if !pass_points.is_empty() {
                progress_curves.push(PopulationCurve {
                    population: "student".to_string(),
                    curve: bin_curve("pass_fraction", &pass_points, config.progress_bins)?,
                });
            }
            progress_curves.push(PopulationCurve {
                population: "student".to_string(),
                curve: bin_curve("full_pass", &full_points, config.progress_bins)?,
            });
        }
        if let Some(model) = &style_model {
            let mut style_points = Vec::new();
            for stream in &reference_streams {
                let n = stream.len();
                for sub in &stream.submissions {
                    if let Some(score) =
                        score_of(model, &reference_metrics, &(stream.key(), sub.attempt_index))
                    {
                        style_points.push((normalized_position(sub.attempt_index, n), score));
                    }
                }
            }
            progress_curves.push(PopulationCurve {
                population: "student".to_string(),
                curve: bin_curve("style_score", &style_points, config.progress_bins)?,
            });
        }
        let mut edit_points = Vec::new();
        for stream in &reference_streams {
            let n = stream.len();
            for i in 1..n {
                let distance =
                    levenshtein(&stream.submissions[i - 1].code, &stream.submissions[i].code);
                edit_points.push((normalized_position(i, n), distance as f64));
            }
        }
        if !edit_points.is_empty() {
            progress_curves.push(PopulationCurve {
                population: "student".to_string(),
                curve: bin_curve("edit_distance", &edit_points, config.progress_bins)?,
            });
        }
    }

    for population in &populations {
        if population.experiment != Experiment::HighRes {
            continue;
        }
        // Pair candidates to next-step targets by mirrored timestamp.
        let mut pairs: Vec<(SubKey, SubKey, f64)> = Vec::new(); // (student, candidate, u)
        let mut missing = 0usize;
        for candidate_stream in population.corpus.streams() {
            let key = candidate_stream.key();
            let reference_stream = reference.get_stream(&key).expect("keys validated");
            let targets = high_res_targets(reference_stream);
            let (matched, unmatched) =
                pair_by_timestamp(reference_stream, candidate_stream, &targets);
            missing += targets.len() - matched.len();
            if unmatched > 0 {
                *exclusions
                    .entry(format!("{}_unmatched_submissions", population.name))
                    .or_insert(0) += unmatched;
            }
            for (target, candidate_attempt) in matched {
                pairs.push((
                    (key.clone(), target),
                    (key.clone(), candidate_attempt),
                    normalized_position(target, reference_stream.len()),
                ));
            }
        }
        if missing > 0 {
            exclusions.insert(format!("{}_missing_targets", population.name), missing);
        }
        if pairs.is_empty() {
            notices.push(format!("{}: no matched next-step pairs", population.name));
            continue;
        }

        // Pass rate: per-stream mean full_pass, population mean/std over
        // streams; MAE over matched 0/1 pairs.
        let pass_rate = if population.outcomes.is_empty() {
            None
        } else {
            let mut per_stream: BTreeMap<StreamKey, Vec<f64>> = BTreeMap::new();
            let mut pair_values = Vec::new();
            let mut fractions = Vec::new();
            for (student_key, candidate_key, _) in &pairs {
                if let Some(candidate_outcome) = population.outcomes.get(candidate_key) {
                    per_stream
                        .entry(candidate_key.0.clone())
                        .or_default()
                        .push(f64::from(candidate_outcome.full_pass));
                    if let Some(fraction) = candidate_outcome.pass_fraction {
                        fractions.push(fraction);
                    }
                    pair_values.push((
                        Some(f64::from(candidate_outcome.full_pass)),
                        reference_outcomes
                            .get(student_key)
                            .map(|o| f64::from(o.full_pass)),
                    ));
                }
            }
            if per_stream.is_empty() {
                None
            } else {
                let stream_rates: Vec<f64> = per_stream
                    .values()
                    .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                    .collect();
                let mae = pairwise_mae("pass_rate", &pair_values).ok();
                let mut stats = cell_stats(&stream_rates, mae.as_ref());
                stats.mean *= 100.0; // percent, std left in fraction units
                Some((stats, mean_std(&fractions).0))
            }
        };

        // Violations and style over all matched candidate submissions.
        let violations: Vec<f64> = pairs
            .iter()
            .map(|(_, c, _)| population.metrics[c].violations as f64)
            .collect();
        let violation_pairs: Vec<(Option<f64>, Option<f64>)> = pairs
            .iter()
            .map(|(s, c, _)| {
                (
                    Some(population.metrics[c].violations as f64),
                    Some(reference_metrics[s].violations as f64),
                )
            })
            .collect();
        let style = style_model.as_ref().map(|model| {
            let values: Vec<f64> = pairs
                .iter()
                .filter_map(|(_, c, _)| score_of(model, &population.metrics, c))
                .collect();
            let style_pairs: Vec<(Option<f64>, Option<f64>)> = pairs
                .iter()
                .map(|(s, c, _)| {
                    (
                        score_of(model, &population.metrics, c),
                        score_of(model, &reference_metrics, s),
                    )
                })
                .collect();
            let mae = pairwise_mae("style_score", &style_pairs).ok();
            cell_stats(&values, mae.as_ref())
        });

        // Cosine distance between matched pairs (mean, reported in the MAE
        // column; see interpretation notes).
        let cosine_distance_mae = match provider.as_deref() {
            Some(provider) => {
                let student_selection: Vec<SubKey> =
                    pairs.iter().map(|(s, _, _)| s.clone()).collect();
                let candidate_selection: Vec<SubKey> =
                    pairs.iter().map(|(_, c, _)| c.clone()).collect();
                let student_set =
                    embed_submissions(&reference, &student_selection, provider, &embed_options)?;
                let candidate_set = embed_submissions(
                    &population.corpus,
                    &candidate_selection,
                    provider,
                    &embed_options,
                )?;
                let mut total = 0.0;
                for i in 0..student_set.len() {
                    let a = crate::embedding::EmbeddingVector::new(student_set.row(i).to_vec())?;
                    let b = crate::embedding::EmbeddingVector::new(candidate_set.row(i).to_vec())?;
                    total += 1.0 - crate::embedding::cosine_similarity(&a, &b)?;
                }
                Some(total / student_set.len() as f64)
            }
            None => None,
        };

        table3.push(Table3Row {
            population: population.name.clone(),
            context: Some(population.context),
            pass_rate: pass_rate.as_ref().map(|(stats, _)| stats.clone()),
            mean_pass_fraction: pass_rate.as_ref().map(|(_, fraction)| *fraction),
            violations: cell_stats(&violations, pairwise_mae("violations", &violation_pairs).ok().as_ref()),
            style,
            cosine_distance_mae,
        });

        // Candidate progress curves at target positions.
        if !population.outcomes.is_empty() {
            let mut pass_points = Vec::new();
            let mut full_points = Vec::new();
            for (_, candidate_key, u) in &pairs {
                if let Some(outcome) = population.outcomes.get(candidate_key) {
                    if let Some(fraction) = outcome.pass_fraction {
                        pass_points.push((*u, fraction));
                    }
                    full_points.push((*u, f64::from(outcome.full_pass)));
                }
            }
            if !pass_points.is_empty() {
                progress_curves.push(PopulationCurve {
                    population: population.name.clone(),
                    curve: bin_curve("pass_fraction", &pass_points, config.progress_bins)?,
                });
            }
            if !full_points.is_empty() {
                progress_curves.push(PopulationCurve {
                    population: population.name.clone(),
                    curve: bin_curve("full_pass", &full_points, config.progress_bins)?,
                });
            }
        }
        if let Some(model) = &style_model {
            let style_points: Vec<(f64, f64)> = pairs
                .iter()
                .filter_map(|(_, c, u)| {
                    score_of(model, &population.metrics, c).map(|score| (*u, score))
                })
                .collect();
            if !style_points.is_empty() {
                progress_curves.push(PopulationCurve {
                    population: population.name.clone(),
                    curve: bin_curve("style_score", &style_points, config.progress_bins)?,
                });
            }
        }
        // Edit made by the candidate from the ground-truth previous attempt.
        let mut edit_points = Vec::new();
        for (student_key, candidate_key, u) in &pairs {
            let reference_stream = reference.get_stream(&student_key.0).expect("validated");
            let candidate_stream = population
                .corpus
                .get_stream(&candidate_key.0)
                .expect("validated");
            let previous = &reference_stream.submissions[student_key.1 - 1].code;
            let generated = &candidate_stream.submissions[candidate_key.1].code;
            edit_points.push((*u, levenshtein(previous, generated) as f64));
        }
        if !edit_points.is_empty() {
            progress_curves.push(PopulationCurve {
                population: population.name.clone(),
                curve: bin_curve("edit_distance", &edit_points, config.progress_bins)?,
            });
        }
    }

    // Projection over pooled low-res sets.
    let projection = if projection_sets.len() >= 2 {
        let labeled: Vec<(&str, &EmbeddingSet)> = projection_sets
            .iter()
            .map(|(name, set)| (name.as_str(), set))
            .collect();
        match project_2d(&labeled) {
            Ok(projection) => Some(projection),
            Err(e) => {
                notices.push(format!("projection: skipped ({e})"));
                None
            }
        }
    } else {
        if provider.is_some() && has_low_res {
            notices.push("projection: fewer than two populations embedded".to_string());
        }
        None
    };

    let style_model_digest = style_model
        .as_ref()
        .map(|model| sha256_text(&serde_json::to_string(model).expect("model serializes")));
    let config_digest = sha256_text(
        &serde_json::to_string(&sanitized_for_digest(config)).expect("config serializes"),
    );

    let meta = ReportMeta {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        reference_corpus_sha256: sha256_file(&config.reference_corpus)?,
        candidate_corpus_sha256: candidate_hashes,
        split_name,
        config_digest,
        reference_stats: corpus_stats(&reference),
        style_model,
        style_model_digest,
        notices,
        exclusions,
        interpretation_notes: vec![
            "pass_rate: mean/std over per-stream full-pass rates; mean in percent, std in fraction units".to_string(),
            "pass_rate MAE: mean |candidate - student| over matched 0/1 full-pass pairs".to_string(),
            "cosine_distance_mae: mean pairwise cosine distance between matched candidate/student submissions".to_string(),
            "style model fitted once per report on the reference split".to_string(),
            format!("knn coverage direction: {:?}", config.coverage_direction),
        ],
    };

    Ok(ComparisonReport {
        meta,
        table1,
        table2,
        table3,
        error_distributions: error_rows,
        progress_curves,
        projection,
    })
}

/// Output format of [`render`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Json,
    CsvBundle,
    Markdown,
}

impl std::str::FromStr for RenderFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(RenderFormat::Json),
            "csv-bundle" | "csv" => Ok(RenderFormat::CsvBundle),
            "markdown" | "md" => Ok(RenderFormat::Markdown),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

fn fmt_distance(x: f64) -> String {
    format!("{x:.3}")
}

fn fmt_percent(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

fn fmt_score(x: f64) -> String {
    format!("{x:.2}")
}

fn fmt_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.2} ({std:.2})")
}

fn fmt_pass_rate(stats: &CellStats) -> String {
    format!("{:.1} ({:.2})", stats.mean, stats.std)
}

fn opt_cell(value: Option<String>) -> String {
    value.unwrap_or_else(|| "--".to_string())
}

/// Render the markdown report mirroring the published table layouts.
pub fn render_markdown(report: &ComparisonReport) -> String {
    let mut out = String::new();
    out.push_str("# Trajectory comparison report\n\n");
    out.push_str(&format!(
        "- reference corpus: `{}`\n- config digest: `{}`\n",
        report.meta.reference_corpus_sha256, report.meta.config_digest
    ));
    if let Some(split) = &report.meta.split_name {
        out.push_str(&format!("- split: `{split}`\n"));
    }
    if let Some(digest) = &report.meta.style_model_digest {
        out.push_str(&format!("- style model digest: `{digest}`\n"));
    }
    out.push_str(&format!(
        "- reference population: {}\n",
        report.meta.reference_stats.render_summary()
    ));
    out.push('\n');

    if !report.table1.is_empty() {
        out.push_str("## Table 1: Distribution-level embedding metrics\n\n");
        out.push_str("| Model | Stage | Context | Avg. KNN Dist. | KNN Cov. |\n");
        out.push_str("|---|---|---|---|---|\n");
        for row in &report.table1 {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                row.population,
                row.stage,
                if row.context { "T" } else { "F" },
                fmt_distance(row.knn_distance),
                fmt_percent(row.knn_coverage),
            ));
        }
        out.push('\n');
    }

    if !report.table2.is_empty() {
        out.push_str("## Table 2: PEP 8 violations and style score (final bin)\n\n");
        out.push_str(
            "| Model | Bin | Context | PEP 8 Viol. Mean (Std) | PEP 8 Viol. MAE | Style Score Mean (Std) | Style Score MAE |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|\n");
        for row in &report.table2 {
            let context = match row.context {
                Some(true) => "T".to_string(),
                Some(false) => "F".to_string(),
                None => "--".to_string(),
            };
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                row.population,
                row.bin,
                context,
                fmt_mean_std(row.violations.mean, row.violations.std),
                opt_cell(row.violations.mae.map(fmt_score)),
                opt_cell(row.style.as_ref().map(|s| fmt_mean_std(s.mean, s.std))),
                opt_cell(row.style.as_ref().and_then(|s| s.mae).map(fmt_score)),
            ));
        }
        out.push('\n');
    }

    if !report.table3.is_empty() {
        out.push_str("## Table 3: Next-step summary statistics\n\n");
        out.push_str(
            "| Model | Pass Rate (%) Mean (Std) | Pass Rate MAE | PEP 8 Viol. Mean (Std) | PEP 8 Viol. MAE | Style Score Mean (Std) | Style Score MAE | Cosine Dist. MAE |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for row in &report.table3 {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
                row.population,
                opt_cell(row.pass_rate.as_ref().map(fmt_pass_rate)),
                opt_cell(
                    row.pass_rate
                        .as_ref()
                        .and_then(|s| s.mae)
                        .map(fmt_score)
                ),
                fmt_mean_std(row.violations.mean, row.violations.std),
                opt_cell(row.violations.mae.map(fmt_score)),
                opt_cell(row.style.as_ref().map(|s| fmt_mean_std(s.mean, s.std))),
                opt_cell(row.style.as_ref().and_then(|s| s.mae).map(fmt_score)),
                opt_cell(row.cosine_distance_mae.map(fmt_distance)),
            ));
        }
        out.push('\n');
    }

    if !report.error_distributions.is_empty() {
        out.push_str("## Error type distributions by stage\n\n");
        out.push_str("| Population | Stage | n | no_error | logical | runtime | compile |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for row in &report.error_distributions {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                row.population,
                row.stage,
                row.count,
                fmt_percent(row.proportions[0]),
                fmt_percent(row.proportions[1]),
                fmt_percent(row.proportions[2]),
                fmt_percent(row.proportions[3]),
            ));
        }
        out.push('\n');
    }

    if !report.meta.notices.is_empty() {
        out.push_str("## Notices\n\n");
        for notice in &report.meta.notices {
            out.push_str(&format!("- {notice}\n"));
        }
        out.push('\n');
    }
    out
}

/// Write the report in the requested format; returns the produced files.
pub fn render(
    report: &ComparisonReport,
    format: RenderFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|e| ReportError::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let write = |name: &str, contents: &str| -> Result<PathBuf, ReportError> {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|e| ReportError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(path)
    };

    match format {
        RenderFormat::Json => Ok(vec![write("report.json", &report.to_canonical_json())?]),
        RenderFormat::Markdown => Ok(vec![write("report.md", &render_markdown(report))?]),
        RenderFormat::CsvBundle => {
            let mut files = Vec::new();

            let mut table1 = String::from("population,stage,context,knn_distance,knn_coverage,student_rows,generated_rows\n");
            for row in &report.table1 {
                table1.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{},{}\n",
                    row.population,
                    row.stage,
                    if row.context { "T" } else { "F" },
                    row.knn_distance,
                    row.knn_coverage,
                    row.student_rows,
                    row.generated_rows
                ));
            }
            files.push(write("table1.csv", &table1)?);

            let cell = |c: &CellStats| {
                format!(
                    "{:.6},{:.6},{},{},{}",
                    c.mean,
                    c.std,
                    c.count,
                    c.mae.map_or_else(String::new, |m| format!("{m:.6}")),
                    c.mae_pairs.map_or_else(String::new, |p| p.to_string())
                )
            };
            let mut table2 = String::from(
                "population,bin,context,viol_mean,viol_std,viol_count,viol_mae,viol_mae_pairs,style_mean,style_std,style_count,style_mae,style_mae_pairs\n",
            );
            for row in &report.table2 {
                let context = match row.context {
                    Some(true) => "T",
                    Some(false) => "F",
                    None => "",
                };
                let style = row
                    .style
                    .as_ref()
                    .map_or_else(|| ",,,,".to_string(), &cell);
                table2.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.population,
                    row.bin,
                    context,
                    cell(&row.violations),
                    style
                ));
            }
            files.push(write("table2.csv", &table2)?);

            let mut table3 = String::from(
                "population,context,pass_mean_pct,pass_std,pass_count,pass_mae,pass_mae_pairs,mean_pass_fraction,viol_mean,viol_std,viol_count,viol_mae,viol_mae_pairs,style_mean,style_std,style_count,style_mae,style_mae_pairs,cosine_distance_mae\n",
            );
            for row in &report.table3 {
                let context = match row.context {
                    Some(true) => "T",
                    Some(false) => "F",
                    None => "",
                };
                let pass = row
                    .pass_rate
                    .as_ref()
                    .map_or_else(|| ",,,,".to_string(), &cell);
                let style = row
                    .style
                    .as_ref()
                    .map_or_else(|| ",,,,".to_string(), &cell);
                table3.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.population,
                    context,
                    pass,
                    row.mean_pass_fraction
                        .map_or_else(String::new, |f| format!("{f:.6}")),
                    cell(&row.violations),
                    style,
                    row.cosine_distance_mae
                        .map_or_else(String::new, |c| format!("{c:.6}"))
                ));
            }
            files.push(write("table3.csv", &table3)?);

            let mut err_dist =
                String::from("population,stage,count,no_error,logical,runtime,compile\n");
            for row in &report.error_distributions {
                err_dist.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                    row.population,
                    row.stage,
                    row.count,
                    row.proportions[0],
                    row.proportions[1],
                    row.proportions[2],
                    row.proportions[3]
                ));
            }
            files.push(write("err_dist.csv", &err_dist)?);

            let metrics: BTreeSet<&str> = report
                .progress_curves
                .iter()
                .map(|c| c.curve.metric.as_str())
                .collect();
            for metric in metrics {
                let mut csv = String::from("metric,population,bin_lo,bin_hi,mean,count\n");
                for curve in report
                    .progress_curves
                    .iter()
                    .filter(|c| c.curve.metric == metric)
                {
                    for bin in &curve.curve.bins {
                        csv.push_str(&format!(
                            "{},{},{:.3},{:.3},{},{}\n",
                            metric,
                            curve.population,
                            bin.lo,
                            bin.hi,
                            bin.mean.map_or_else(String::new, |m| format!("{m:.6}")),
                            bin.count
                        ));
                    }
                }
                files.push(write(&format!("progress_{metric}.csv"), &csv)?);
            }

            if let Some(projection) = &report.projection {
                let csv_path = out_dir.join("embed2d.csv");
                let sidecar = out_dir.join("embed2d_variance.json");
                write_projection_csv(projection, &csv_path, &sidecar)?;
                files.push(csv_path);
                files.push(sidecar);
            }
            Ok(files)
        }
    }
}

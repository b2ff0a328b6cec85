//! Functional outcome classification: the four-way error taxonomy, doctest
//! execution through a sandboxed external process, and grader-text parsing.
//!
//! Untrusted code never runs in this process. The executor protocol writes
//! `{code, doctests, timeout_s, memory_mb}` as JSON to the sandbox's stdin
//! and reads one `{status, per_test:[{ok, got}], stderr}` JSON result from
//! its stdout; protocol success is exit code 0 regardless of the code's own
//! outcome. A hard wall-clock deadline guards against a wedged sandbox.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::{Doctest, ProblemSpec};
use crate::streams::SubmissionRef;

/// Reference sandbox implementation, shipped with the crate. Materialize it
/// with [`write_bundled_runner`] and point `ExecutorConfig::command` at it.
pub const DOCTEST_RUNNER_SOURCE: &str = include_str!("../resources/doctest_runner.py");

/// Four-way functional outcome of one submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    NoError,
    Logical,
    Runtime,
    Compile,
}

impl ErrorType {
    pub const ALL: [ErrorType; 4] = [
        ErrorType::NoError,
        ErrorType::Logical,
        ErrorType::Runtime,
        ErrorType::Compile,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ErrorType::NoError => "no_error",
            ErrorType::Logical => "logical",
            ErrorType::Runtime => "runtime",
            ErrorType::Compile => "compile",
        }
    }

    /// Classification precedence: compile > runtime > logical > no_error.
    pub fn severity(self) -> u8 {
        match self {
            ErrorType::NoError => 0,
            ErrorType::Logical => 1,
            ErrorType::Runtime => 2,
            ErrorType::Compile => 3,
        }
    }
}

impl std::fmt::Display for ErrorType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Outcome of running one submission against its doctests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalResult {
    pub error_type: ErrorType,
    pub tests_passed: usize,
    pub tests_total: usize,
    pub pass_fraction: f64,
    pub full_pass: bool,
    pub executor_log: String,
}

impl FunctionalResult {
    fn build(error_type: ErrorType, passed: usize, total: usize, log: String) -> Self {
        Self {
            error_type,
            tests_passed: passed,
            tests_total: total,
            pass_fraction: if total > 0 { passed as f64 / total as f64 } else { 0.0 },
            full_pass: total > 0 && passed == total,
            executor_log: log,
        }
    }
}

/// Working-directory policy for sandbox processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WorkdirPolicy {
    /// A fresh temp directory per invocation, removed afterwards.
    #[default]
    TempDir,
    /// Inherit the toolkit's working directory.
    Inherit,
}

/// How to launch and bound the sandbox process.
#[derive(Debug, Clone)]
pub struct ExecutorConfig {
    /// Command and arguments launching the sandbox, e.g.
    /// `["python3", "runner.py"]`.
    pub command: Vec<String>,
    pub per_test_timeout_s: f64,
    pub memory_cap_mb: Option<u64>,
    pub workdir: WorkdirPolicy,
}

impl ExecutorConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            per_test_timeout_s: 5.0,
            memory_cap_mb: Some(256),
            workdir: WorkdirPolicy::TempDir,
        }
    }

    /// Write the bundled runner into `dir` and configure a python3 launch of
    /// it. The directory must outlive the executor. `-I -S` keeps the
    /// interpreter isolated from the environment and site packages.
    pub fn bundled_python(dir: &Path) -> Result<Self, FunctionalError> {
        let runner = write_bundled_runner(dir)?;
        Ok(Self::new(vec![
            "python3".to_string(),
            "-I".to_string(),
            "-S".to_string(),
            runner.display().to_string(),
        ]))
    }
}

/// Materialize the bundled runner script; returns its path.
pub fn write_bundled_runner(dir: &Path) -> Result<std::path::PathBuf, FunctionalError> {
    std::fs::create_dir_all(dir).map_err(|e| FunctionalError::SandboxLaunch {
        message: format!("cannot create {}: {e}", dir.display()),
    })?;
    let path = dir.join("doctest_runner.py");
    std::fs::write(&path, DOCTEST_RUNNER_SOURCE).map_err(|e| FunctionalError::SandboxLaunch {
        message: format!("cannot write {}: {e}", path.display()),
    })?;
    Ok(path)
}

/// Infrastructure failures, distinct from any code outcome.
#[derive(Debug, thiserror::Error)]
pub enum FunctionalError {
    #[error("problem {0:?} has no doctests")]
    NoDoctests(String),
    #[error("sandbox launch failed: {message}")]
    SandboxLaunch { message: String },
    #[error("sandbox protocol violation: {message}")]
    Protocol { message: String },
}

#[derive(Debug, Serialize)]
struct RunnerRequest<'a> {
    code: &'a str,
    doctests: &'a [Doctest],
    timeout_s: f64,
    memory_mb: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct RunnerPerTest {
    ok: bool,
    #[allow(dead_code)]
    got: String,
}

#[derive(Debug, Deserialize)]
struct RunnerResponse {
    status: String,
    per_test: Vec<RunnerPerTest>,
    #[serde(default)]
    stderr: String,
}

/// Run one submission's doctests in the sandbox and classify the outcome.
///
/// Compile check comes first: code that fails to compile is `compile` no
/// matter what its tests would do, and any failure before the first doctest
/// executes counts as `compile`. An uncaught exception or timeout on any
/// test is `runtime`; tests all executing with at least one wrong value is
/// `logical`; all passing is `no_error`.
pub fn classify_from_execution(
    code: &str,
    problem: &ProblemSpec,
    config: &ExecutorConfig,
) -> Result<FunctionalResult, FunctionalError> {
    if problem.doctests.is_empty() {
        return Err(FunctionalError::NoDoctests(problem.problem_id.clone()));
    }
    if config.per_test_timeout_s <= 0.0 {
        return Err(FunctionalError::SandboxLaunch {
            message: format!(
                "per-test timeout must be positive, got {}",
                config.per_test_timeout_s
            ),
        });
    }
    let total = problem.doctests.len();
    let started = Instant::now();

    let request = serde_json::to_string(&RunnerRequest {
        code,
        doctests: &problem.doctests,
        timeout_s: config.per_test_timeout_s,
        memory_mb: config.memory_cap_mb,
    })
    .expect("request serializes");

    let (program, args) = config
        .command
        .split_first()
        .ok_or_else(|| FunctionalError::SandboxLaunch {
            message: "empty executor command".to_string(),
        })?;

    let temp_dir;
    let mut command = Command::new(program);
    command
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if config.workdir == WorkdirPolicy::TempDir {
        temp_dir = tempfile::tempdir().map_err(|e| FunctionalError::SandboxLaunch {
            message: format!("cannot create sandbox workdir: {e}"),
        })?;
        command.current_dir(temp_dir.path());
    }

    let mut child = command.spawn().map_err(|e| FunctionalError::SandboxLaunch {
        message: format!("cannot spawn {program}: {e}"),
    })?;

    {
        let mut stdin = child.stdin.take().expect("piped stdin");
        stdin
            .write_all(request.as_bytes())
            .map_err(|e| FunctionalError::Protocol {
                message: format!("cannot write request: {e}"),
            })?;
    }

    let mut stdout_pipe = child.stdout.take().expect("piped stdout");
    let mut stderr_pipe = child.stderr.take().expect("piped stderr");
    let (sender, receiver) = mpsc::channel();
    let stdout_thread = std::thread::spawn(move || {
        let mut buffer = String::new();
        let read = stdout_pipe.read_to_string(&mut buffer);
        let _ = sender.send(read.map(|_| buffer));
    });
    let stderr_thread = std::thread::spawn(move || {
        let mut buffer = String::new();
        let _ = stderr_pipe.read_to_string(&mut buffer);
        buffer
    });

    // Hard deadline: per-test budget for every test plus startup grace.
    let deadline =
        Duration::from_secs_f64(config.per_test_timeout_s * total as f64 + 10.0);
    let stdout = match receiver.recv_timeout(deadline) {
        Ok(Ok(stdout)) => {
            let _ = child.wait();
            stdout
        }
        Ok(Err(e)) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(FunctionalError::Protocol {
                message: format!("cannot read sandbox stdout: {e}"),
            });
        }
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            let _ = stdout_thread.join();
            let _ = stderr_thread.join();
            // A wedged sandbox counts as a timeout of the code under test.
            return Ok(FunctionalResult::build(
                ErrorType::Runtime,
                0,
                total,
                format!(
                    "hard deadline of {:.1}s exceeded; sandbox killed",
                    deadline.as_secs_f64()
                ),
            ));
        }
    };
    let _ = stdout_thread.join();
    let stderr = stderr_thread.join().unwrap_or_default();

    let response: RunnerResponse =
        serde_json::from_str(stdout.trim()).map_err(|e| FunctionalError::Protocol {
            message: format!("bad sandbox response ({e}): {stdout:?} stderr: {stderr:?}"),
        })?;
    if response.per_test.len() != total {
        return Err(FunctionalError::Protocol {
            message: format!(
                "sandbox reported {} tests for {} doctests",
                response.per_test.len(),
                total
            ),
        });
    }

    let passed = response.per_test.iter().filter(|t| t.ok).count();
    let error_type = match response.status.as_str() {
        "compile_error" | "setup_error" => ErrorType::Compile,
        "runtime_error" => ErrorType::Runtime,
        "ok" => {
            if passed == total {
                ErrorType::NoError
            } else {
                ErrorType::Logical
            }
        }
        other => {
            return Err(FunctionalError::Protocol {
                message: format!("unknown sandbox status {other:?}"),
            })
        }
    };
    let passed = if error_type == ErrorType::Compile { 0 } else { passed };

    let log = format!(
        "status={} elapsed={:.3}s\n{}{}",
        response.status,
        started.elapsed().as_secs_f64(),
        response.stderr,
        stderr
    );
    Ok(FunctionalResult::build(error_type, passed, total, log))
}

/// Grader-text signatures, applied in order. Unmatched text lands in the
/// `None` bucket, excluded from distributions with a counter.
pub fn classify_from_grader_text(grader_output: &str) -> Option<ErrorType> {
    let text = grader_output;
    if text.trim().is_empty() {
        return None;
    }
    let compile_signature = ["SyntaxError", "IndentationError", "TabError"]
        .iter()
        .any(|sig| text.contains(sig));
    if compile_signature {
        return Some(ErrorType::Compile);
    }
    let expectation_block = text.contains("# Error: expected")
        || (text.contains("Expected:") && text.contains("Got:"));
    if expectation_block {
        return Some(ErrorType::Logical);
    }
    if text.contains("Traceback (most recent call last)") || contains_exception_line(text) {
        return Some(ErrorType::Runtime);
    }
    if text.to_lowercase().contains("all tests passed") {
        return Some(ErrorType::NoError);
    }
    None
}

/// A line like `RecursionError: ...` or `ZeroDivisionError: ...`.
fn contains_exception_line(text: &str) -> bool {
    text.lines().any(|line| {
        let trimmed = line.trim_start();
        trimmed
            .split_once(':')
            .is_some_and(|(head, _)| {
                !head.is_empty()
                    && head.chars().all(|c| c.is_ascii_alphanumeric())
                    && (head.ends_with("Error") || head.ends_with("Exception"))
            })
    })
}

/// Per-group proportions over the four error types, in taxonomy order
/// (no_error, logical, runtime, compile). Proportions sum to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub group: String,
    pub count: usize,
    pub proportions: [f64; 4],
}

/// Distributions per group; empty groups are omitted and reported in the
/// returned warnings.
pub fn error_distribution(
    groups: &[(String, Vec<ErrorType>)],
) -> (Vec<ErrorDistribution>, Vec<String>) {
    let mut distributions = Vec::new();
    let mut warnings = Vec::new();
    for (group, outcomes) in groups {
        if outcomes.is_empty() {
            warnings.push(format!("group {group:?} has no classified submissions"));
            continue;
        }
        let mut counts = [0usize; 4];
        for outcome in outcomes {
            counts[ErrorType::ALL.iter().position(|e| e == outcome).expect("taxonomy")] += 1;
        }
        let total = outcomes.len() as f64;
        distributions.push(ErrorDistribution {
            group: group.clone(),
            count: outcomes.len(),
            proportions: [
                counts[0] as f64 / total,
                counts[1] as f64 / total,
                counts[2] as f64 / total,
                counts[3] as f64 / total,
            ],
        });
    }
    (distributions, warnings)
}

/// Classify many submissions under a bounded worker pool. Results merge
/// deterministically by submission key regardless of completion order.
///
/// Execution is deterministic for a given (problem, code) pair, so identical
/// pairs run the sandbox once and share the result.
pub fn classify_batch(
    items: &[(SubmissionRef, String)],
    problem_of: &(dyn Fn(&SubmissionRef) -> Option<ProblemSpec> + Sync),
    config: &ExecutorConfig,
    max_workers: usize,
) -> Result<BTreeMap<SubmissionRef, FunctionalResult>, FunctionalError> {
    let mut unique: Vec<(SubmissionRef, String)> = Vec::new();
    let mut slot_of: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut item_slots = Vec::with_capacity(items.len());
    for (key, code) in items {
        let dedup_key = (key.problem_id.clone(), code.clone());
        let slot = *slot_of.entry(dedup_key).or_insert_with(|| {
            unique.push((key.clone(), code.clone()));
            unique.len() - 1
        });
        item_slots.push(slot);
    }

    let workers = max_workers.max(1).min(unique.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<FunctionalResult, FunctionalError>>>> =
        unique.iter().map(|_| std::sync::Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= unique.len() {
                    break;
                }
                let (key, code) = &unique[index];
                let outcome = match problem_of(key) {
                    Some(problem) => classify_from_execution(code, &problem, config),
                    None => Err(FunctionalError::NoDoctests(key.problem_id.clone())),
                };
                *results[index].lock().expect("result slot") = Some(outcome);
            });
        }
    });

    let mut resolved = Vec::with_capacity(unique.len());
    for slot in results {
        resolved.push(
            slot.into_inner()
                .expect("result slot")
                .expect("every unique pair visited")?,
        );
    }
    let mut merged = BTreeMap::new();
    for ((key, _), slot) in items.iter().zip(item_slots) {
        merged.insert(key.clone(), resolved[slot].clone());
    }
    Ok(merged)
}

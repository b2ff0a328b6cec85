//! Prompt assembly, text-generation endpoint client, and candidate-corpus
//! archiving.
//!
//! Prompts are pure functions of (example, template): byte-identical across
//! runs. Every code snippet placed into a prompt is wrapped in `<code>` and
//! `</code>`. Generation requests run under bounded concurrency with a
//! token-bucket rate limiter; per-prompt failures are recorded and the run
//! continues, while authentication failures abort.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Stream, Submission};
use crate::net::{retry_with_backoff, Retry};
use crate::streams::{HighResExample, LowResExample, Stage, SubmissionRef};

/// Code snippet delimiters used in prompts.
pub const CODE_OPEN: &str = "<code>";
pub const CODE_CLOSE: &str = "</code>";

/// Default system role preamble.
pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a helpful assistant simulating a student in an \
     introduction to Python programming course working on a homework problem.";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("template {template_id} is missing placeholder {{{{{placeholder}}}}}")]
    MissingPlaceholder {
        template_id: String,
        placeholder: String,
    },
    #[error("template {template_id} uses {{{{{placeholder}}}}} but the example provides no value for it")]
    UnavailablePlaceholder {
        template_id: String,
        placeholder: String,
    },
    #[error("cannot read template {path}: {source}")]
    TemplateIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("endpoint authentication failed: {0}")]
    Auth(String),
    #[error("cannot write ledger {path}: {source}")]
    LedgerIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ledger {path} line {line}: {message}")]
    LedgerFormat {
        path: String,
        line: usize,
        message: String,
    },
    #[error("record references {0:?} which does not resolve in the reference corpus: {1}")]
    BadRecordRef(String, String),
}

/// A conditioning prompt template. The body carries `{{placeholder}}`
/// markers; snippets substituted for `skeleton`, `history`, and `context`
/// arrive pre-wrapped in the code delimiters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub system_preamble: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(template_id: &str, system_preamble: &str, body: &str) -> Self {
        Self {
            template_id: template_id.to_string(),
            system_preamble: system_preamble.to_string(),
            body: body.to_string(),
        }
    }

    /// Load a template body from a UTF-8 file; the template id is the file
    /// stem and the system preamble is the shipped default.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let body = std::fs::read_to_string(path).map_err(|e| HarnessError::TemplateIo {
            path: path.display().to_string(),
            source: e,
        })?;
        let template_id = path
            .file_stem()
            .map_or_else(|| "template".to_string(), |s| s.to_string_lossy().to_string());
        Ok(Self {
            template_id,
            system_preamble: DEFAULT_SYSTEM_PROMPT.to_string(),
            body,
        })
    }

    /// Stage-conditioned generation without cross-problem context.
    pub fn default_low_res() -> Self {
        Self::new(
            "low-res-default",
            DEFAULT_SYSTEM_PROMPT,
            "Problem:\n{{problem_statement}}\n\nSkeleton code:\n{{skeleton}}\n\n\
             Write the code you would submit at the {{stage}} stage of working on this \
             problem. Wrap your code in <code> and </code>.",
        )
    }

    /// Stage-conditioned generation with a same-stage prior-problem snapshot.
    pub fn default_low_res_with_context() -> Self {
        Self::new(
            "low-res-context-default",
            DEFAULT_SYSTEM_PROMPT,
            "Problem:\n{{problem_statement}}\n\nSkeleton code:\n{{skeleton}}\n\n\
             Your submission on a previous problem at the {{stage}} stage:\n{{context}}\n\n\
             Write the code you would submit at the {{stage}} stage of working on this \
             problem. Wrap your code in <code> and </code>.",
        )
    }

    /// Next-step generation from prior attempts on the same problem.
    pub fn default_high_res() -> Self {
        Self::new(
            "high-res-default",
            DEFAULT_SYSTEM_PROMPT,
            "Problem:\n{{problem_statement}}\n\nSkeleton code:\n{{skeleton}}\n\n\
             Your previous attempts on this problem, oldest first:\n{{history}}\n\n\
             Write your next code submission. Wrap your code in <code> and </code>.",
        )
    }

    /// Next-step generation with a prior-problem stream segment.
    pub fn default_high_res_with_context() -> Self {
        Self::new(
            "high-res-context-default",
            DEFAULT_SYSTEM_PROMPT,
            "Problem:\n{{problem_statement}}\n\nSkeleton code:\n{{skeleton}}\n\n\
             Your submissions on a previous problem at the same point of progress, \
             oldest first:\n{{context}}\n\n\
             Your previous attempts on this problem, oldest first:\n{{history}}\n\n\
             Write your next code submission. Wrap your code in <code> and </code>.",
        )
    }
}

/// A rendered prompt: system role text plus user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

fn wrap_code(code: &str) -> String {
    format!("{CODE_OPEN}\n{}\n{CODE_CLOSE}", code.trim_end_matches('\n'))
}

fn wrap_blocks<'a>(codes: impl Iterator<Item = &'a str>) -> String {
    codes.map(wrap_code).collect::<Vec<_>>().join("\n\n")
}

/// Either experiment's example, borrowed for prompt building.
#[derive(Debug, Clone, Copy)]
pub enum PromptExample<'a> {
    LowRes(&'a LowResExample),
    HighRes(&'a HighResExample),
}

impl<'a> From<&'a LowResExample> for PromptExample<'a> {
    fn from(example: &'a LowResExample) -> Self {
        PromptExample::LowRes(example)
    }
}

impl<'a> From<&'a HighResExample> for PromptExample<'a> {
    fn from(example: &'a HighResExample) -> Self {
        PromptExample::HighRes(example)
    }
}

impl PromptExample<'_> {
    pub fn target_ref(&self) -> SubmissionRef {
        match self {
            PromptExample::LowRes(e) => SubmissionRef::of(&e.target),
            PromptExample::HighRes(e) => SubmissionRef::of(&e.target),
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PromptExample::LowRes(e) => Some(e.stage),
            PromptExample::HighRes(_) => None,
        }
    }

    fn values(&self) -> BTreeMap<&'static str, String> {
        let mut values = BTreeMap::new();
        match self {
            PromptExample::LowRes(example) => {
                values.insert("stage", example.stage.token().to_string());
                values.insert("problem_statement", example.problem.statement.clone());
                values.insert("skeleton", wrap_code(&example.problem.skeleton_code));
                if let Some(context) = &example.context {
                    values.insert("context", wrap_code(&context.code));
                }
            }
            PromptExample::HighRes(example) => {
                values.insert("problem_statement", example.problem.statement.clone());
                values.insert("skeleton", wrap_code(&example.problem.skeleton_code));
                values.insert(
                    "history",
                    wrap_blocks(example.history.iter().map(|s| s.code.as_str())),
                );
                if let Some(segment) = &example.context_segment {
                    values.insert(
                        "context",
                        wrap_blocks(segment.iter().map(|s| s.code.as_str())),
                    );
                }
            }
        }
        values
    }
}

fn template_placeholders(body: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        rest = &rest[start + 2..];
        if let Some(end) = rest.find("}}") {
            names.push(rest[..end].trim().to_string());
            rest = &rest[end + 2..];
        } else {
            break;
        }
    }
    names
}

/// Render an example through a template. History and context render
/// oldest-first; all code is wrapped in the delimiters. Placeholders the
/// example requires must be present, and placeholders the template uses must
/// have values.
pub fn build_prompt(
    example: PromptExample<'_>,
    template: &PromptTemplate,
) -> Result<Prompt, HarnessError> {
    let values = example.values();
    let used = template_placeholders(&template.body);

    for placeholder in values.keys() {
        if !used.iter().any(|u| u == placeholder) {
            return Err(HarnessError::MissingPlaceholder {
                template_id: template.template_id.clone(),
                placeholder: (*placeholder).to_string(),
            });
        }
    }
    let mut user = template.body.clone();
    for name in &used {
        let value = values
            .get(name.as_str())
            .ok_or_else(|| HarnessError::UnavailablePlaceholder {
                template_id: template.template_id.clone(),
                placeholder: name.clone(),
            })?;
        user = user.replace(&format!("{{{{{name}}}}}"), value);
    }
    Ok(Prompt {
        system: template.system_preamble.clone(),
        user,
    })
}

/// Sampling parameters forwarded to the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub min_p: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.8,
            top_k: 20,
            min_p: 0.0,
        }
    }
}

/// One endpoint call failure.
#[derive(Debug)]
pub enum CallError {
    Auth(String),
    Transient(String),
}

/// A chat-completion style text-generation endpoint.
pub trait TextEndpoint: Sync {
    fn endpoint_id(&self) -> &str;
    fn complete(
        &self,
        prompt: &Prompt,
        params: &SamplingParams,
    ) -> Result<String, CallError>;
}

/// HTTP chat-completion endpoint: POST
/// `{model, messages, temperature, top_p, top_k, min_p}` and read
/// `{choices: [{message: {content}}]}`.
pub struct HttpTextEndpoint {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    endpoint_id: String,
    client: reqwest::blocking::Client,
}

impl HttpTextEndpoint {
    pub fn new(url: &str, model: &str, api_key: Option<String>) -> Self {
        Self {
            url: url.to_string(),
            model: model.to_string(),
            api_key,
            endpoint_id: format!("{model}@{url}"),
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

impl TextEndpoint for HttpTextEndpoint {
    fn endpoint_id(&self) -> &str {
        &self.endpoint_id
    }

    fn complete(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, CallError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "top_k": params.top_k,
            "min_p": params.min_p,
        });
        let mut request = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| CallError::Transient(e.to_string()))?;
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN
        {
            return Err(CallError::Auth(status.to_string()));
        }
        if !status.is_success() {
            return Err(CallError::Transient(format!("status {status}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| CallError::Transient(format!("bad response body: {e}")))?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| CallError::Transient("response carried no choices".to_string()))
    }
}

/// Outcome marker of one generation record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    ExtractionFailed,
    Error { message: String },
}

/// One archived generation with full provenance. Immutable once written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub target_ref: SubmissionRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub template_id: String,
    pub endpoint_id: String,
    pub sampling: SamplingParams,
    pub raw_response: String,
    /// First well-delimited code block of the response.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extracted_code: Option<String>,
    pub status: RecordStatus,
    pub created_at_ms: i64,
}

/// First `<code>`-delimited block, falling back to the first fenced block.
pub fn extract_code(response: &str) -> Option<String> {
    if let Some(start) = response.find(CODE_OPEN) {
        let after = &response[start + CODE_OPEN.len()..];
        if let Some(end) = after.find(CODE_CLOSE) {
            return Some(trim_block(&after[..end]));
        }
    }
    let fence_start = response.find("```")?;
    let after = &response[fence_start + 3..];
    // Drop a language tag on the opening fence line.
    let body_start = after.find('\n').map_or(0, |p| p + 1);
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(trim_block(&body[..end]))
}

fn trim_block(block: &str) -> String {
    block.trim_matches('\n').to_string()
}

/// One prompt to run: the example's identity plus its rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationTask {
    pub target_ref: SubmissionRef,
    pub stage: Option<Stage>,
    pub template_id: String,
    pub prompt: Prompt,
}

impl GenerationTask {
    pub fn from_example(
        example: PromptExample<'_>,
        template: &PromptTemplate,
    ) -> Result<Self, HarnessError> {
        Ok(Self {
            target_ref: example.target_ref(),
            stage: example.stage(),
            template_id: template.template_id.clone(),
            prompt: build_prompt(example, template)?,
        })
    }
}

/// Knobs for [`generate`].
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub concurrency: usize,
    /// Sustained requests per second for the token bucket.
    pub requests_per_second: f64,
    pub retries: u32,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            concurrency: 4,
            requests_per_second: 4.0,
            retries: 3,
        }
    }
}

struct TokenBucket {
    capacity: f64,
    refill_per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn new(capacity: f64, refill_per_second: f64) -> Self {
        Self {
            capacity,
            refill_per_second,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("bucket lock");
                let (ref mut tokens, ref mut last) = *state;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64()
                    * self.refill_per_second)
                    .min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    None
                } else {
                    Some(Duration::from_secs_f64(
                        (1.0 - *tokens) / self.refill_per_second,
                    ))
                }
            };
            match wait {
                None => return,
                Some(duration) => std::thread::sleep(duration),
            }
        }
    }
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(SystemTime::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

/// Run every task against the endpoint: one record per task, in task order.
/// Transient failures retry with exponential backoff and then record an
/// error status; authentication failures abort the whole run.
pub fn generate(
    tasks: &[GenerationTask],
    endpoint: &dyn TextEndpoint,
    params: &SamplingParams,
    options: &GenerateOptions,
) -> Result<Vec<GenerationRecord>, HarnessError> {
    let bucket = TokenBucket::new(
        options.concurrency.max(1) as f64,
        options.requests_per_second.max(0.001),
    );
    let next = AtomicUsize::new(0);
    let auth_failed = AtomicBool::new(false);
    let auth_message = Mutex::new(String::new());
    let slots: Vec<Mutex<Option<GenerationRecord>>> =
        tasks.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..options.concurrency.max(1).min(tasks.len().max(1)) {
            scope.spawn(|| loop {
                if auth_failed.load(Ordering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= tasks.len() {
                    break;
                }
                let task = &tasks[index];
                let outcome = retry_with_backoff(
                    options.retries,
                    Duration::from_millis(200),
                    || {
                        bucket.acquire();
                        endpoint.complete(&task.prompt, params).map_err(|e| match e {
                            CallError::Auth(message) => Retry::Fatal(message),
                            CallError::Transient(message) => Retry::Transient(message),
                        })
                    },
                );
                let record = match outcome {
                    Ok(raw_response) => {
                        let extracted = extract_code(&raw_response);
                        GenerationRecord {
                            target_ref: task.target_ref.clone(),
                            stage: task.stage,
                            template_id: task.template_id.clone(),
                            endpoint_id: endpoint.endpoint_id().to_string(),
                            sampling: *params,
                            status: if extracted.is_some() {
                                RecordStatus::Ok
                            } else {
                                RecordStatus::ExtractionFailed
                            },
                            extracted_code: extracted,
                            raw_response,
                            created_at_ms: now_ms(),
                        }
                    }
                    Err(message) => {
                        // Retries exhausted. An auth failure poisons the run.
                        if message.contains("401")
                            || message.contains("403")
                            || message.to_lowercase().contains("unauthorized")
                            || message.to_lowercase().contains("forbidden")
                        {
                            auth_failed.store(true, Ordering::SeqCst);
                            *auth_message.lock().expect("auth message") = message;
                            break;
                        }
                        GenerationRecord {
                            target_ref: task.target_ref.clone(),
                            stage: task.stage,
                            template_id: task.template_id.clone(),
                            endpoint_id: endpoint.endpoint_id().to_string(),
                            sampling: *params,
                            raw_response: String::new(),
                            extracted_code: None,
                            status: RecordStatus::Error { message },
                            created_at_ms: now_ms(),
                        }
                    }
                };
                *slots[index].lock().expect("record slot") = Some(record);
            });
        }
    });

    if auth_failed.load(Ordering::SeqCst) {
        return Err(HarnessError::Auth(
            auth_message.into_inner().expect("auth message"),
        ));
    }
    Ok(slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot").expect("record per task"))
        .collect())
}

/// Append records to a line-delimited JSON ledger.
pub fn append_ledger(records: &[GenerationRecord], path: &Path) -> Result<(), HarnessError> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| HarnessError::LedgerIo {
            path: path.display().to_string(),
            source: e,
        })?;
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(file, "{line}").map_err(|e| HarnessError::LedgerIo {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<GenerationRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::LedgerIo {
        path: path.display().to_string(),
        source: e,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| HarnessError::LedgerFormat {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Result of archiving records into a candidate corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HarvestReport {
    pub kept: usize,
    pub extraction_failed: usize,
    pub errored: usize,
    pub duplicates: Vec<String>,
}

/// Turn successfully extracted records into a candidate corpus whose
/// submissions mirror their targets' (student, problem, attempt) identity —
/// timestamps are copied from the target so pairwise metrics align 1:1.
/// Duplicate example references keep the first record and warn.
pub fn records_to_corpus(
    records: &[GenerationRecord],
    reference: &Corpus,
) -> Result<(Corpus, HarvestReport), HarnessError> {
    let mut report = HarvestReport::default();
    let mut seen: BTreeMap<SubmissionRef, ()> = BTreeMap::new();
    let mut streams: BTreeMap<(String, String, String), Vec<Submission>> = BTreeMap::new();

    for record in records {
        match &record.status {
            RecordStatus::Ok => {}
            RecordStatus::ExtractionFailed => {
                report.extraction_failed += 1;
                continue;
            }
            RecordStatus::Error { .. } => {
                report.errored += 1;
                continue;
            }
        }
        if seen.insert(record.target_ref.clone(), ()).is_some() {
            report.duplicates.push(format!(
                "{}/{}#{}",
                record.target_ref.student_id,
                record.target_ref.problem_id,
                record.target_ref.attempt_index
            ));
            continue;
        }
        let target = record.target_ref.resolve(reference).map_err(|e| {
            HarnessError::BadRecordRef(
                format!(
                    "{}/{}#{}",
                    record.target_ref.student_id,
                    record.target_ref.problem_id,
                    record.target_ref.attempt_index
                ),
                e.to_string(),
            )
        })?;
        let code = record
            .extracted_code
            .clone()
            .expect("ok records carry code");
        streams
            .entry((
                target.student_id.clone(),
                target.problem_id.clone(),
                target.semester.clone(),
            ))
            .or_default()
            .push(Submission {
                student_id: target.student_id.clone(),
                problem_id: target.problem_id.clone(),
                semester: target.semester.clone(),
                timestamp_ms: target.timestamp_ms,
                code,
                grader_output: None,
                attempt_index: 0,
            });
        report.kept += 1;
    }

    let streams = streams
        .into_iter()
        .map(|((student_id, problem_id, semester), submissions)| Stream {
            student_id,
            problem_id,
            semester,
            submissions,
        })
        .collect();
    Ok((Corpus::from_streams(streams), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Doctest, ProblemSpec};

    fn problem() -> ProblemSpec {
        ProblemSpec {
            problem_id: "p1".to_string(),
            statement: "Return the square of x.".to_string(),
            skeleton_code: "def square(x):\n    \"*** YOUR CODE HERE ***\"\n".to_string(),
            doctests: vec![Doctest {
                input: "square(2)".to_string(),
                expected: "4".to_string(),
            }],
        }
    }

    fn submission(idx: usize, code: &str) -> Submission {
        Submission {
            student_id: "s1".to_string(),
            problem_id: "p1".to_string(),
            semester: "sp21".to_string(),
            timestamp_ms: 1000 + idx as i64,
            code: code.to_string(),
            grader_output: None,
            attempt_index: idx,
        }
    }

    fn low_res_example(with_context: bool) -> LowResExample {
        LowResExample {
            stage: Stage::First,
            target: submission(0, "def square(x):\n    return x\n"),
            problem: problem(),
            context: with_context.then(|| {
                let mut c = submission(0, "def cube(x):\n    return x\n");
                c.problem_id = "p0".to_string();
                c
            }),
        }
    }

    #[test]
    fn low_res_prompt_carries_stage_and_skeleton() {
        let example = low_res_example(false);
        let prompt =
            build_prompt((&example).into(), &PromptTemplate::default_low_res()).unwrap();
        assert!(prompt.user.contains("first"));
        assert!(prompt.user.contains("def square(x):"));
        assert!(!prompt.user.contains("previous problem"));
        assert_eq!(prompt.system, DEFAULT_SYSTEM_PROMPT);
    }

    #[test]
    fn context_code_is_wrapped_in_delimiters() {
        let example = low_res_example(true);
        let prompt = build_prompt(
            (&example).into(),
            &PromptTemplate::default_low_res_with_context(),
        )
        .unwrap();
        let context_pos = prompt.user.find("def cube").unwrap();
        let open = prompt.user[..context_pos].rfind(CODE_OPEN).unwrap();
        let close = prompt.user[context_pos..].find(CODE_CLOSE).unwrap() + context_pos;
        assert!(open < context_pos && context_pos < close);
    }

    #[test]
    fn prompt_building_is_byte_deterministic() {
        let example = low_res_example(true);
        let template = PromptTemplate::default_low_res_with_context();
        let one = build_prompt((&example).into(), &template).unwrap();
        let two = build_prompt((&example).into(), &template).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn missing_placeholder_is_named() {
        let example = low_res_example(true);
        // Template lacks {{context}} while the example has one.
        let err =
            build_prompt((&example).into(), &PromptTemplate::default_low_res()).unwrap_err();
        match err {
            HarnessError::MissingPlaceholder { placeholder, .. } => {
                assert_eq!(placeholder, "context");
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn unavailable_placeholder_is_named() {
        let example = low_res_example(false);
        let err = build_prompt(
            (&example).into(),
            &PromptTemplate::default_low_res_with_context(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            HarnessError::UnavailablePlaceholder { ref placeholder, .. } if placeholder == "context"
        ));
    }

    #[test]
    fn high_res_renders_truncated_history_oldest_first() {
        let example = HighResExample {
            target: submission(3, "def square(x):\n    return x * x\n"),
            history: vec![
                submission(1, "def square(x):\n    return 1\n"),
                submission(2, "def square(x):\n    return 2\n"),
            ],
            problem: problem(),
            context_segment: None,
        };
        let prompt =
            build_prompt((&example).into(), &PromptTemplate::default_high_res()).unwrap();
        // Wrapped blocks open with "<code>\n": skeleton + 2 history entries.
        assert_eq!(prompt.user.matches("<code>\n").count(), 3);
        let first = prompt.user.find("return 1").unwrap();
        let second = prompt.user.find("return 2").unwrap();
        assert!(first < second);
    }

    #[test]
    fn sampling_defaults_match_documented_values() {
        let params = SamplingParams::default();
        assert_eq!(params.temperature, 0.7);
        assert_eq!(params.top_p, 0.8);
        assert_eq!(params.top_k, 20);
        assert_eq!(params.min_p, 0.0);
    }

    #[test]
    fn extraction_takes_first_delimited_block() {
        let response = "Sure!\n<code>\ndef f():\n    return 1\n</code>\nand <code>second</code>";
        assert_eq!(extract_code(response).unwrap(), "def f():\n    return 1");
        let fenced = "```python\ndef g():\n    return 2\n```";
        assert_eq!(extract_code(fenced).unwrap(), "def g():\n    return 2");
        assert_eq!(extract_code("no code here"), None);
    }

    struct StubEndpoint {
        fail_first: Mutex<bool>,
        reply_with_code: bool,
    }

    impl TextEndpoint for StubEndpoint {
        fn endpoint_id(&self) -> &str {
            "stub-endpoint"
        }
        fn complete(&self, prompt: &Prompt, _params: &SamplingParams) -> Result<String, CallError> {
            let mut fail = self.fail_first.lock().unwrap();
            if *fail {
                *fail = false;
                return Err(CallError::Transient("transient outage".to_string()));
            }
            if self.reply_with_code {
                Ok(format!(
                    "<code>\n# echo of {} chars\nx = 1\n</code>",
                    prompt.user.len()
                ))
            } else {
                Ok("I cannot write code today.".to_string())
            }
        }
    }

    fn tasks(n: usize) -> Vec<GenerationTask> {
        let template = PromptTemplate::default_low_res();
        (0..n)
            .map(|i| {
                let mut example = low_res_example(false);
                example.target.student_id = format!("s{i}");
                GenerationTask::from_example((&example).into(), &template).unwrap()
            })
            .collect()
    }

    #[test]
    fn generate_retries_transient_failures() {
        let endpoint = StubEndpoint {
            fail_first: Mutex::new(true),
            reply_with_code: true,
        };
        let records = generate(
            &tasks(10),
            &endpoint,
            &SamplingParams::default(),
            &GenerateOptions {
                requests_per_second: 1000.0,
                ..GenerateOptions::default()
            },
        )
        .unwrap();
        assert_eq!(records.len(), 10);
        assert!(records.iter().all(|r| r.status == RecordStatus::Ok));
    }

    #[test]
    fn undelimited_response_records_extraction_failure() {
        let endpoint = StubEndpoint {
            fail_first: Mutex::new(false),
            reply_with_code: false,
        };
        let records = generate(
            &tasks(2),
            &endpoint,
            &SamplingParams::default(),
            &GenerateOptions {
                requests_per_second: 1000.0,
                ..GenerateOptions::default()
            },
        )
        .unwrap();
        assert!(records
            .iter()
            .all(|r| r.status == RecordStatus::ExtractionFailed));
        assert!(records.iter().all(|r| r.extracted_code.is_none()));
    }

    struct AuthFailEndpoint;

    impl TextEndpoint for AuthFailEndpoint {
        fn endpoint_id(&self) -> &str {
            "auth-fail"
        }
        fn complete(&self, _: &Prompt, _: &SamplingParams) -> Result<String, CallError> {
            Err(CallError::Auth("401 Unauthorized".to_string()))
        }
    }

    #[test]
    fn auth_failure_aborts_the_run() {
        let err = generate(
            &tasks(3),
            &AuthFailEndpoint,
            &SamplingParams::default(),
            &GenerateOptions {
                requests_per_second: 1000.0,
                ..GenerateOptions::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, HarnessError::Auth(_)));
    }

    #[test]
    fn ledger_round_trips() {
        let endpoint = StubEndpoint {
            fail_first: Mutex::new(false),
            reply_with_code: true,
        };
        let records = generate(
            &tasks(3),
            &endpoint,
            &SamplingParams::default(),
            &GenerateOptions {
                requests_per_second: 1000.0,
                ..GenerateOptions::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        append_ledger(&records, &path).unwrap();
        let back = read_ledger(&path).unwrap();
        assert_eq!(records, back);
    }

    fn reference_corpus() -> Corpus {
        let submissions: Vec<Submission> = (0..5)
            .map(|i| submission(i, &format!("def square(x):\n    return {i}\n")))
            .collect();
        Corpus::from_streams(vec![Stream {
            student_id: "s1".to_string(),
            problem_id: "p1".to_string(),
            semester: "sp21".to_string(),
            submissions,
        }])
    }

    fn ok_record(attempt: usize, code: &str) -> GenerationRecord {
        GenerationRecord {
            target_ref: SubmissionRef {
                student_id: "s1".to_string(),
                problem_id: "p1".to_string(),
                attempt_index: attempt,
            },
            stage: None,
            template_id: "t".to_string(),
            endpoint_id: "e".to_string(),
            sampling: SamplingParams::default(),
            raw_response: String::new(),
            extracted_code: Some(code.to_string()),
            status: RecordStatus::Ok,
            created_at_ms: 0,
        }
    }

    #[test]
    fn records_mirror_target_attempts() {
        let reference = reference_corpus();
        let records = vec![
            ok_record(0, "a = 0"),
            ok_record(2, "a = 2"),
            ok_record(4, "a = 4"),
        ];
        let (candidate, report) = records_to_corpus(&records, &reference).unwrap();
        assert_eq!(report.kept, 3);
        let stream = candidate.find_stream("s1", "p1").unwrap();
        assert_eq!(stream.len(), 3);
        // Mirrored timestamps preserve target order 0 < 2 < 4.
        let times: Vec<i64> = stream.submissions.iter().map(|s| s.timestamp_ms).collect();
        assert_eq!(times, vec![1000, 1002, 1004]);
    }

    #[test]
    fn failed_and_duplicate_records_are_counted() {
        let reference = reference_corpus();
        let mut failed = ok_record(1, "");
        failed.extracted_code = None;
        failed.status = RecordStatus::ExtractionFailed;
        let records = vec![
            ok_record(0, "a = 0"),
            failed,
            ok_record(0, "a = 99"),
        ];
        let (candidate, report) = records_to_corpus(&records, &reference).unwrap();
        assert_eq!(report.kept, 1);
        assert_eq!(report.extraction_failed, 1);
        assert_eq!(report.duplicates.len(), 1);
        let stream = candidate.find_stream("s1", "p1").unwrap();
        assert_eq!(stream.submissions[0].code, "a = 0");
    }
}

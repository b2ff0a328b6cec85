//! Submission data model and corpus ingestion.
//!
//! A corpus file is UTF-8 line-delimited JSON: a header line
//! `{"schema":"trajectory-corpus/1"}` followed by one record per line with
//! fields `{student_id, problem_id, semester, timestamp_ms, code,
//! grader_output?}`. Records are grouped into streams per
//! (student, problem, semester), sorted by timestamp (ties keep input
//! order), and attempt-indexed. The resulting [`Corpus`] is immutable and
//! safe to share across parallel readers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Current corpus file schema tag.
pub const SCHEMA_VERSION: &str = "trajectory-corpus/1";

/// One timestamped code attempt with grader outcome; the atomic record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub student_id: String,
    pub problem_id: String,
    pub semester: String,
    pub timestamp_ms: i64,
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grader_output: Option<String>,
    /// 0-based rank within its stream, assigned after ordering.
    #[serde(default)]
    pub attempt_index: usize,
}

/// Ordered submissions of one (student, problem, semester) triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    pub student_id: String,
    pub problem_id: String,
    pub semester: String,
    pub submissions: Vec<Submission>,
}

impl Stream {
    pub fn len(&self) -> usize {
        self.submissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.submissions.is_empty()
    }

    pub fn key(&self) -> StreamKey {
        StreamKey {
            student_id: self.student_id.clone(),
            problem_id: self.problem_id.clone(),
            semester: self.semester.clone(),
        }
    }
}

/// Identity of a stream within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub student_id: String,
    pub problem_id: String,
    pub semester: String,
}

impl fmt::Display for StreamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.student_id, self.problem_id, self.semester)
    }
}

/// One doctest: an input expression and the expected output text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Doctest {
    pub input: String,
    pub expected: String,
}

/// A problem definition: statement, skeleton, and its doctests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub problem_id: String,
    pub statement: String,
    pub skeleton_code: String,
    pub doctests: Vec<Doctest>,
}

/// Named membership list over stream keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub name: String,
    /// Each key is `[student_id, problem_id, semester]`.
    pub keys: Vec<(String, String, String)>,
}

impl SplitManifest {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| CorpusError::ManifestFormat {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn key_set(&self) -> BTreeSet<StreamKey> {
        self.keys
            .iter()
            .map(|(s, p, sem)| StreamKey {
                student_id: s.clone(),
                problem_id: p.clone(),
                semester: sem.clone(),
            })
            .collect()
    }

    /// True when the two manifests share no member key. The two test splits
    /// (new-student/old-problem vs new-student/new-problem) must be disjoint.
    pub fn is_disjoint_from(&self, other: &SplitManifest) -> bool {
        self.key_set().is_disjoint(&other.key_set())
    }
}

/// An immutable set of streams plus the problem table they refer to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    streams: BTreeMap<StreamKey, Stream>,
    problems: BTreeMap<String, ProblemSpec>,
}

/// Counts reported by [`corpus_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub students: usize,
    pub problems: usize,
    pub streams: usize,
    pub submissions: usize,
}

impl CorpusStats {
    /// Stats-report form: students / problems / submissions with thousands
    /// separators, e.g. `5,478 / 33 / 689,023`.
    pub fn render_summary(&self) -> String {
        format!(
            "{} / {} / {}",
            group_thousands(self.students),
            group_thousands(self.problems),
            group_thousands(self.submissions)
        )
    }
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// A malformed input line, collected rather than silently dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedLine {
    pub line_number: usize,
    pub message: String,
}

/// Ingestion outcome alongside the corpus itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub record_lines: usize,
    pub malformed: Vec<MalformedLine>,
    pub deduped_consecutive: usize,
}

/// Options for [`load_corpus`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Expected schema tag in the header line.
    pub schema_version: String,
    /// Abort when malformed lines exceed this fraction of record lines.
    /// The default is strict: any malformed line aborts.
    pub max_malformed_fraction: f64,
    /// Drop byte-identical consecutive submissions within a stream.
    pub dedup_consecutive: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            max_malformed_fraction: 0.0,
            dedup_consecutive: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing schema header line in {path}")]
    MissingHeader { path: String },
    #[error("schema version mismatch in {path}: found {found:?}, expected {expected:?}")]
    SchemaVersion {
        path: String,
        found: String,
        expected: String,
    },
    #[error(
        "{count} of {total} record lines malformed (limit {limit}); first: line {first_line}: {first_message}"
    )]
    TooManyMalformed {
        count: usize,
        total: usize,
        limit: f64,
        first_line: usize,
        first_message: String,
    },
    /// Anonymization guardrail: records must not carry contact fields.
    #[error("record on line {line_number} contains an `email` field; refusing to ingest")]
    PiiField { line_number: usize },
    #[error("manifest {path} is not valid JSON: {message}")]
    ManifestFormat { path: String, message: String },
    #[error("manifest names {count} key(s) absent from the corpus: {}", missing.join(", "))]
    UnknownManifestKeys { count: usize, missing: Vec<String> },
    #[error("problem file {path} is not valid JSON: {message}")]
    ProblemFormat { path: String, message: String },
    #[error("no stream for student {student_id:?} on problem {problem_id:?}")]
    NoSuchStream {
        student_id: String,
        problem_id: String,
    },
    #[error("ambiguous stream for student {student_id:?} on problem {problem_id:?}: {count} semesters")]
    AmbiguousStream {
        student_id: String,
        problem_id: String,
        count: usize,
    },
}

#[derive(Debug, Deserialize)]
struct HeaderLine {
    schema: String,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    student_id: String,
    problem_id: String,
    semester: String,
    timestamp_ms: i64,
    code: String,
    #[serde(default)]
    grader_output: Option<String>,
}

impl Corpus {
    pub fn streams(&self) -> impl Iterator<Item = &Stream> {
        self.streams.values()
    }

    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    pub fn get_stream(&self, key: &StreamKey) -> Option<&Stream> {
        self.streams.get(key)
    }

    /// Look up a stream by (student, problem) without a semester, as example
    /// refs carry only those two fields. Errors when the pair is ambiguous.
    pub fn find_stream(
        &self,
        student_id: &str,
        problem_id: &str,
    ) -> Result<&Stream, CorpusError> {
        let mut found: Vec<&Stream> = self
            .streams
            .values()
            .filter(|s| s.student_id == student_id && s.problem_id == problem_id)
            .collect();
        match found.len() {
            0 => Err(CorpusError::NoSuchStream {
                student_id: student_id.to_string(),
                problem_id: problem_id.to_string(),
            }),
            1 => Ok(found.remove(0)),
            n => Err(CorpusError::AmbiguousStream {
                student_id: student_id.to_string(),
                problem_id: problem_id.to_string(),
                count: n,
            }),
        }
    }

    pub fn problems(&self) -> impl Iterator<Item = &ProblemSpec> {
        self.problems.values()
    }

    pub fn get_problem(&self, problem_id: &str) -> Option<&ProblemSpec> {
        self.problems.get(problem_id)
    }

    pub fn insert_problem(&mut self, problem: ProblemSpec) {
        self.problems.insert(problem.problem_id.clone(), problem);
    }

    /// Build a corpus directly from streams (used by the generation harness).
    /// Streams are re-sorted and re-indexed so invariants hold regardless of
    /// input order.
    pub fn from_streams(streams: Vec<Stream>) -> Self {
        let mut map = BTreeMap::new();
        for mut stream in streams {
            sort_and_index(&mut stream.submissions);
            map.insert(stream.key(), stream);
        }
        Self {
            streams: map,
            problems: BTreeMap::new(),
        }
    }

    /// All streams of one student, ordered by first-submission timestamp.
    /// Used to pick the chronologically previous problem as cross-problem
    /// context.
    pub fn student_streams_by_onset(&self, student_id: &str) -> Vec<&Stream> {
        let mut streams: Vec<&Stream> = self
            .streams
            .values()
            .filter(|s| s.student_id == student_id)
            .collect();
        streams.sort_by_key(|s| {
            (
                s.submissions.first().map_or(i64::MAX, |sub| sub.timestamp_ms),
                s.problem_id.clone(),
            )
        });
        streams
    }
}

fn sort_and_index(submissions: &mut [Submission]) {
    // Stable sort: timestamp ties keep input order so streams are
    // deterministic across runs.
    submissions.sort_by_key(|s| s.timestamp_ms);
    for (i, sub) in submissions.iter_mut().enumerate() {
        sub.attempt_index = i;
    }
}

/// Read, validate, and materialize a corpus from a line-delimited record file.
pub fn load_corpus(path: &Path, options: &LoadOptions) -> Result<(Corpus, LoadReport), CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| CorpusError::MissingHeader {
            path: path.display().to_string(),
        })?;
    let header: HeaderLine =
        serde_json::from_str(header).map_err(|_| CorpusError::MissingHeader {
            path: path.display().to_string(),
        })?;
    if header.schema != options.schema_version {
        return Err(CorpusError::SchemaVersion {
            path: path.display().to_string(),
            found: header.schema,
            expected: options.schema_version.clone(),
        });
    }

    let mut report = LoadReport::default();
    let mut grouped: BTreeMap<StreamKey, Vec<Submission>> = BTreeMap::new();

    for (idx, line) in lines {
        let line_number = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.record_lines += 1;

        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                report.malformed.push(MalformedLine {
                    line_number,
                    message: format!("invalid JSON: {e}"),
                });
                continue;
            }
        };
        if value.get("email").is_some() {
            return Err(CorpusError::PiiField { line_number });
        }
        let raw: RawRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                report.malformed.push(MalformedLine {
                    line_number,
                    message: format!("bad record: {e}"),
                });
                continue;
            }
        };
        if raw.code.trim_end().is_empty() {
            report.malformed.push(MalformedLine {
                line_number,
                message: "empty code".to_string(),
            });
            continue;
        }

        let key = StreamKey {
            student_id: raw.student_id.clone(),
            problem_id: raw.problem_id.clone(),
            semester: raw.semester.clone(),
        };
        grouped.entry(key).or_default().push(Submission {
            student_id: raw.student_id,
            problem_id: raw.problem_id,
            semester: raw.semester,
            timestamp_ms: raw.timestamp_ms,
            code: raw.code,
            grader_output: raw.grader_output,
            attempt_index: 0,
        });
    }

    if !report.malformed.is_empty() {
        let fraction = report.malformed.len() as f64 / report.record_lines.max(1) as f64;
        if fraction > options.max_malformed_fraction {
            let first = &report.malformed[0];
            return Err(CorpusError::TooManyMalformed {
                count: report.malformed.len(),
                total: report.record_lines,
                limit: options.max_malformed_fraction,
                first_line: first.line_number,
                first_message: first.message.clone(),
            });
        }
    }

    let mut streams = BTreeMap::new();
    for (key, mut submissions) in grouped {
        sort_and_index(&mut submissions);
        if options.dedup_consecutive {
            let before = submissions.len();
            submissions.dedup_by(|b, a| a.code == b.code);
            report.deduped_consecutive += before - submissions.len();
            for (i, sub) in submissions.iter_mut().enumerate() {
                sub.attempt_index = i;
            }
        }
        streams.insert(
            key.clone(),
            Stream {
                student_id: key.student_id,
                problem_id: key.problem_id,
                semester: key.semester,
                submissions,
            },
        );
    }

    Ok((
        Corpus {
            streams,
            problems: BTreeMap::new(),
        },
        report,
    ))
}

/// Write a corpus in canonical form: header line, then records in stream-key
/// order, submissions in attempt order. Loading a written file and writing it
/// again is byte-identical.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    writeln!(out, "{}", serde_json::json!({ "schema": SCHEMA_VERSION }))
        .expect("write to Vec cannot fail");
    for stream in corpus.streams() {
        for sub in &stream.submissions {
            let record = serde_json::json!({
                "student_id": sub.student_id,
                "problem_id": sub.problem_id,
                "semester": sub.semester,
                "timestamp_ms": sub.timestamp_ms,
                "code": sub.code,
            });
            let mut record = record;
            if let Some(g) = &sub.grader_output {
                record["grader_output"] = serde_json::Value::String(g.clone());
            }
            writeln!(out, "{record}").expect("write to Vec cannot fail");
        }
    }
    fs::write(path, out).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Load one problem definition from a JSON document.
pub fn load_problem(path: &Path) -> Result<ProblemSpec, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| CorpusError::ProblemFormat {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Restrict a corpus to exactly the streams named by a manifest.
/// Stream order in the result is deterministic (lexicographic by key).
pub fn build_split(corpus: &Corpus, manifest: &SplitManifest) -> Result<Corpus, CorpusError> {
    let wanted = manifest.key_set();
    let missing: Vec<String> = wanted
        .iter()
        .filter(|k| !corpus.streams.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::UnknownManifestKeys {
            count: missing.len(),
            missing,
        });
    }
    let streams = wanted
        .into_iter()
        .map(|k| (k.clone(), corpus.streams[&k].clone()))
        .collect();
    Ok(Corpus {
        streams,
        problems: corpus.problems.clone(),
    })
}

/// Exact population counts for a corpus.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let students: BTreeSet<&str> = corpus
        .streams
        .values()
        .map(|s| s.student_id.as_str())
        .collect();
    let problems: BTreeSet<&str> = corpus
        .streams
        .values()
        .map(|s| s.problem_id.as_str())
        .collect();
    CorpusStats {
        students: students.len(),
        problems: problems.len(),
        streams: corpus.streams.len(),
        submissions: corpus.streams.values().map(Stream::len).sum(),
    }
}

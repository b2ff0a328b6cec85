//! Shared test support: the bundled synthetic corpus, its frozen candidate
//! corpora, the precomputed-embedding fixture, and golden-file helpers.
//!
//! Regenerate the checked-in fixtures with:
//! `UPDATE_GOLDEN=1 cargo test -p trajeval-core --test acceptance`

#![allow(dead_code)]

pub mod taxonomy;

use std::fs;
use std::path::{Path, PathBuf};

use trajeval_core::corpus::{
    load_corpus, write_corpus, Corpus, Doctest, LoadOptions, ProblemSpec, Stream, Submission,
};
use trajeval_core::embedding::{content_hash, write_vector_file};
use trajeval_core::streams::stage_indices;

pub const SEMESTER: &str = "sp22";
pub const STUDENTS: usize = 12;
pub const FIXTURE_EMBED_DIM: usize = 16;
pub const FIXTURE_PROVIDER_ID: &str = "fixture-sha";

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    fixtures_dir().join("golden")
}

/// Compare text against a checked-in golden file, rewriting it when
/// UPDATE_GOLDEN is set.
pub fn assert_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {} ({e}); run with UPDATE_GOLDEN=1", path.display()));
    if expected != actual {
        panic!(
            "golden mismatch for {name}\n--- expected ---\n{expected}\n--- actual ---\n{actual}"
        );
    }
}

/// Outcome kind scripted for one attempt of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Syntax,
    Runtime,
    Logical,
    Partial,
    Correct,
}

pub fn problems() -> Vec<ProblemSpec> {
    vec![
        ProblemSpec {
            problem_id: "square".to_string(),
            statement: "Write square(x), which returns the square of x.".to_string(),
            skeleton_code: "def square(x):\n    \"*** YOUR CODE HERE ***\"\n".to_string(),
            doctests: vec![
                doctest("square(2)", "4"),
                doctest("square(-3)", "9"),
                doctest("square(0)", "0"),
                doctest("square(10)", "100"),
            ],
        },
        ProblemSpec {
            problem_id: "sum_list".to_string(),
            statement: "Write sum_list(lst), which returns the sum of the numbers in lst."
                .to_string(),
            skeleton_code: "def sum_list(lst):\n    \"*** YOUR CODE HERE ***\"\n".to_string(),
            doctests: vec![
                doctest("sum_list([1, 2, 3])", "6"),
                doctest("sum_list([])", "0"),
                doctest("sum_list([5])", "5"),
                doctest("sum_list([-1, 1])", "0"),
            ],
        },
        ProblemSpec {
            problem_id: "count_digits".to_string(),
            statement: "Write count_digits(n), which returns how many digits the nonnegative \
                        integer n has."
                .to_string(),
            skeleton_code: "def count_digits(n):\n    \"*** YOUR CODE HERE ***\"\n".to_string(),
            doctests: vec![
                doctest("count_digits(100)", "3"),
                doctest("count_digits(7)", "1"),
                doctest("count_digits(54321)", "5"),
                doctest("count_digits(0)", "1"),
            ],
        },
    ]
}

fn doctest(input: &str, expected: &str) -> Doctest {
    Doctest {
        input: input.to_string(),
        expected: expected.to_string(),
    }
}

/// Base code text for one (problem, step kind), before style quirks.
fn base_code(problem: &str, kind: StepKind) -> &'static str {
    match (problem, kind) {
        ("square", StepKind::Syntax) => "def square(x):\n    return x *\n",
        ("square", StepKind::Runtime) => "def square(x):\n    return x * y\n",
        ("square", StepKind::Logical) => "def square(x):\n    return x + x\n",
        ("square", StepKind::Partial) => {
            "def square(x):\n    if x > 0:\n        return x * x\n    return 0\n"
        }
        ("square", StepKind::Correct) => "def square(x):\n    return x * x\n",
        ("sum_list", StepKind::Syntax) => {
            "def sum_list(lst):\n    total = 0\n    for x in lst\n        total += x\n    return total\n"
        }
        ("sum_list", StepKind::Runtime) => {
            "def sum_list(lst):\n    return lst[0] + sum_list(lst[1:])\n"
        }
        ("sum_list", StepKind::Logical) => {
            "def sum_list(lst):\n    total = 0\n    for x in lst:\n        total = x\n    return total\n"
        }
        ("sum_list", StepKind::Partial) => {
            "def sum_list(lst):\n    if lst == []:\n        return 0\n    total = 1\n    for x in lst:\n        total += x\n    return total\n"
        }
        ("sum_list", StepKind::Correct) => {
            "def sum_list(lst):\n    total = 0\n    for x in lst:\n        total += x\n    return total\n"
        }
        ("count_digits", StepKind::Syntax) => "def count_digits(n)\n    return 1\n",
        ("count_digits", StepKind::Runtime) => {
            "def count_digits(n):\n    return count_digits(n // 10) + 1\n"
        }
        ("count_digits", StepKind::Logical) => {
            "def count_digits(n):\n    count = 0\n    while n > 0:\n        n = n // 10\n        count += 1\n    return count\n"
        }
        ("count_digits", StepKind::Partial) => {
            "def count_digits(n):\n    if n == 0:\n        return 1\n    count = 0\n    while n > 9:\n        n = n // 10\n        count += 1\n    return count\n"
        }
        ("count_digits", StepKind::Correct) => "def count_digits(n):\n    return len(str(n))\n",
        _ => unreachable!("unknown problem"),
    }
}

/// Apply a student group's style quirks without changing the outcome kind.
fn style_quirks(code: &str, student: usize) -> String {
    match student % 3 {
        // Clean style.
        0 => code.to_string(),
        // Sloppy: cramped operators, a long comment, trailing whitespace.
        1 => {
            let cramped = code.replace(" = ", "=").replace(" += ", "+=");
            let mut lines: Vec<String> = cramped.lines().map(str::to_string).collect();
            if let Some(first) = lines.first_mut() {
                first.push_str("  ");
            }
            format!(
                "# here is my attempt, hopefully this one finally works on every single autograder test case\n{}\n",
                lines.join("\n")
            )
        }
        // Verbose: docstring and an explanatory comment.
        _ => {
            let mut lines: Vec<String> = code.lines().map(str::to_string).collect();
            if !lines.is_empty() {
                lines.insert(1, "    \"\"\"My solution, explained step by step.\"\"\"".to_string());
                lines.insert(2, "    # walk through the input and build the answer".to_string());
            }
            format!("{}\n", lines.join("\n"))
        }
    }
}

fn grader_text(kind: StepKind, problem: &str) -> String {
    match kind {
        StepKind::Syntax => format!(
            "Traceback (most recent call last):\n  File \"{problem}.py\", line 2\nSyntaxError: invalid syntax"
        ),
        StepKind::Runtime => format!(
            "Traceback (most recent call last):\n  File \"{problem}.py\", line 2, in {problem}\nZeroDivisionError: division by zero"
        ),
        StepKind::Logical | StepKind::Partial => {
            "Test 2 failed:\n# Error: expected\n#     9\n# but got\n#     6".to_string()
        }
        StepKind::Correct => "All tests passed".to_string(),
    }
}

/// Scripted step kinds for a stream of length n; some students never reach a
/// correct final attempt.
pub fn trajectory(n: usize, student: usize) -> Vec<StepKind> {
    let mut steps = match n {
        1 => vec![StepKind::Correct],
        2 => vec![StepKind::Logical, StepKind::Correct],
        3 => vec![StepKind::Syntax, StepKind::Logical, StepKind::Correct],
        4 => vec![
            StepKind::Syntax,
            StepKind::Runtime,
            StepKind::Logical,
            StepKind::Correct,
        ],
        5 => vec![
            StepKind::Syntax,
            StepKind::Runtime,
            StepKind::Logical,
            StepKind::Partial,
            StepKind::Correct,
        ],
        _ => vec![
            StepKind::Syntax,
            StepKind::Runtime,
            StepKind::Logical,
            StepKind::Logical,
            StepKind::Partial,
            StepKind::Correct,
        ],
    };
    if student % 4 == 3 {
        if let Some(last) = steps.last_mut() {
            *last = StepKind::Partial;
        }
    }
    steps
}

pub fn stream_length(student: usize, problem: usize) -> usize {
    2 + (student + problem) % 4
}

fn timestamp(student: usize, problem: usize, attempt: usize) -> i64 {
    1_650_000_000_000 + (student as i64) * 10_000_000 + (problem as i64) * 1_000_000
        + (attempt as i64) * 60_000
}

/// The bundled synthetic reference corpus: 12 students x 3 problems with
/// scripted trajectories and matching grader output.
pub fn reference_corpus() -> Corpus {
    let problem_list = problems();
    let mut streams = Vec::new();
    for student in 0..STUDENTS {
        let student_id = format!("s{:02}", student + 1);
        for (problem_idx, problem) in problem_list.iter().enumerate() {
            let n = stream_length(student, problem_idx);
            let steps = trajectory(n, student);
            let submissions = steps
                .iter()
                .enumerate()
                .map(|(attempt, kind)| Submission {
                    student_id: student_id.clone(),
                    problem_id: problem.problem_id.clone(),
                    semester: SEMESTER.to_string(),
                    timestamp_ms: timestamp(student, problem_idx, attempt),
                    code: style_quirks(base_code(&problem.problem_id, *kind), student),
                    grader_output: Some(grader_text(*kind, &problem.problem_id)),
                    attempt_index: attempt,
                })
                .collect();
            streams.push(Stream {
                student_id: student_id.clone(),
                problem_id: problem.problem_id.clone(),
                semester: SEMESTER.to_string(),
                submissions,
            });
        }
    }
    let mut corpus = Corpus::from_streams(streams);
    for problem in problem_list {
        corpus.insert_problem(problem);
    }
    corpus
}

/// How a scripted candidate population rewrites a student's target code.
fn candidate_code(target_code: &str, problem: &str, student: usize, flavor: usize) -> String {
    match (student + flavor) % 3 {
        // Echo the student's code with a renamed helper comment.
        0 => format!("# next try\n{target_code}"),
        // Overly polished model: ignores the student and emits clean code.
        1 => base_code(problem, StepKind::Correct).to_string(),
        // Small incremental edit of the student's code.
        _ => {
            let mut edited = target_code.trim_end_matches('\n').to_string();
            edited.push_str("\n# double checked the edge cases\n");
            edited
        }
    }
}

/// Candidate corpus mirroring the reference's stage targets.
pub fn candidate_low_res(reference: &Corpus, flavor: usize) -> Corpus {
    let mut streams = Vec::new();
    for stream in reference.streams() {
        let (first, middle, last) = stage_indices(stream.len()).unwrap();
        let mut targets = vec![first, middle, last];
        targets.dedup();
        let student: usize = stream.student_id[1..].parse::<usize>().unwrap() - 1;
        let submissions: Vec<Submission> = targets
            .iter()
            .map(|&attempt| {
                let target = &stream.submissions[attempt];
                Submission {
                    student_id: stream.student_id.clone(),
                    problem_id: stream.problem_id.clone(),
                    semester: stream.semester.clone(),
                    timestamp_ms: target.timestamp_ms,
                    code: candidate_code(&target.code, &stream.problem_id, student, flavor),
                    grader_output: None,
                    attempt_index: 0,
                }
            })
            .collect();
        streams.push(Stream {
            student_id: stream.student_id.clone(),
            problem_id: stream.problem_id.clone(),
            semester: stream.semester.clone(),
            submissions,
        });
    }
    Corpus::from_streams(streams)
}

/// Candidate corpus mirroring the reference's next-step targets.
pub fn candidate_high_res(reference: &Corpus) -> Corpus {
    let mut streams = Vec::new();
    for stream in reference.streams() {
        let student: usize = stream.student_id[1..].parse::<usize>().unwrap() - 1;
        let submissions: Vec<Submission> = (1..stream.len())
            .map(|t| {
                let target = &stream.submissions[t];
                // Incremental flavor: edit the previous ground-truth attempt.
                let source = &stream.submissions[t - 1].code;
                let code = if student.is_multiple_of(2) {
                    candidate_code(source, &stream.problem_id, student, t)
                } else {
                    candidate_code(&target.code, &stream.problem_id, student, t)
                };
                Submission {
                    student_id: stream.student_id.clone(),
                    problem_id: stream.problem_id.clone(),
                    semester: stream.semester.clone(),
                    timestamp_ms: target.timestamp_ms,
                    code,
                    grader_output: None,
                    attempt_index: 0,
                }
            })
            .collect();
        streams.push(Stream {
            student_id: stream.student_id.clone(),
            problem_id: stream.problem_id.clone(),
            semester: stream.semester.clone(),
            submissions,
        });
    }
    Corpus::from_streams(streams)
}

/// Deterministic pseudo-embedding of a code text: 16 dims derived from the
/// content hash. No semantics, but stable and collision-poor, which is all
/// the fixture needs.
pub fn fixture_vector(code: &str) -> Vec<f64> {
    let hash = content_hash(code);
    let bytes = hex::decode(&hash).expect("hash is hex");
    let mut vector: Vec<f64> = (0..FIXTURE_EMBED_DIM)
        .map(|i| (f64::from(bytes[2 * i]) - 127.5) / 127.5)
        .collect();
    if vector.iter().map(|v| v * v).sum::<f64>() < 1e-6 {
        vector[0] = 1.0;
    }
    vector
}

fn all_codes(corpora: &[&Corpus]) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    for corpus in corpora {
        for stream in corpus.streams() {
            for sub in &stream.submissions {
                seen.insert(sub.code.clone());
            }
        }
    }
    seen.into_iter().collect()
}

/// Write every fixture file under tests/fixtures/.
pub fn generate_fixtures() {
    let dir = fixtures_dir();
    fs::create_dir_all(dir.join("problems")).unwrap();
    fs::create_dir_all(golden_dir()).unwrap();

    let reference = reference_corpus();
    write_corpus(&reference, &dir.join("reference.jsonl")).unwrap();

    for problem in problems() {
        let path = dir.join("problems").join(format!("{}.json", problem.problem_id));
        fs::write(&path, serde_json::to_string_pretty(&problem).unwrap()).unwrap();
    }

    let keys: Vec<(String, String, String)> = reference
        .streams()
        .map(|s| (s.student_id.clone(), s.problem_id.clone(), s.semester.clone()))
        .collect();
    let manifest = serde_json::json!({ "name": "test_NS_OP", "keys": keys });
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .unwrap();

    let low_plain = candidate_low_res(&reference, 0);
    let low_ctx = candidate_low_res(&reference, 1);
    let high = candidate_high_res(&reference);
    write_corpus(&low_plain, &dir.join("candidate_lowres_plain.jsonl")).unwrap();
    write_corpus(&low_ctx, &dir.join("candidate_lowres_ctx.jsonl")).unwrap();
    write_corpus(&high, &dir.join("candidate_highres.jsonl")).unwrap();

    let codes = all_codes(&[&reference, &low_plain, &low_ctx, &high]);
    let entries: Vec<(String, Vec<f64>)> = codes
        .iter()
        .map(|code| (content_hash(code), fixture_vector(code)))
        .collect();
    write_vector_file(
        &dir.join("embeddings.vec"),
        FIXTURE_EMBED_DIM,
        FIXTURE_PROVIDER_ID,
        &entries,
    )
    .unwrap();
}

/// Load a fixture corpus back from disk.
pub fn load_fixture_corpus(name: &str) -> Corpus {
    let (corpus, report) = load_corpus(&fixtures_dir().join(name), &LoadOptions::default())
        .unwrap_or_else(|e| panic!("fixture {name} unreadable: {e}"));
    assert!(report.malformed.is_empty(), "fixture {name} has malformed lines");
    corpus
}

/// The evaluation config used by the golden end-to-end run.
pub fn golden_config() -> trajeval_core::report::EvalConfig {
    let dir = fixtures_dir();
    trajeval_core::report::EvalConfig {
        reference_corpus: dir.join("reference.jsonl"),
        problems: problems()
            .iter()
            .map(|p| dir.join("problems").join(format!("{}.json", p.problem_id)))
            .collect(),
        manifest: Some(dir.join("manifest.json")),
        candidates: vec![
            trajeval_core::report::CandidateSpec {
                name: "mimic-plain".to_string(),
                path: dir.join("candidate_lowres_plain.jsonl"),
                context: false,
                experiment: trajeval_core::report::Experiment::LowRes,
            },
            trajeval_core::report::CandidateSpec {
                name: "mimic-ctx".to_string(),
                path: dir.join("candidate_lowres_ctx.jsonl"),
                context: true,
                experiment: trajeval_core::report::Experiment::LowRes,
            },
            trajeval_core::report::CandidateSpec {
                name: "mimic-steps".to_string(),
                path: dir.join("candidate_highres.jsonl"),
                context: false,
                experiment: trajeval_core::report::Experiment::HighRes,
            },
        ],
        embedding: trajeval_core::report::EmbeddingSection {
            mode: trajeval_core::report::EmbeddingMode::File {
                path: dir.join("embeddings.vec"),
            },
            batch_size: 32,
            cache_dir: None,
        },
        functional: trajeval_core::report::FunctionalMode::Execute {
            executor_cmd: vec![],
            test_timeout_s: 5.0,
            max_workers: 4,
        },
        knn_k: 3,
        coverage_k: 10,
        coverage_direction: trajeval_core::embedding::CoverageDirection::default(),
        progress_bins: 10,
        dedup_consecutive: false,
        max_malformed_fraction: 0.0,
    }
}

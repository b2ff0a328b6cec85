//! Temporal segmentation of submission streams.
//!
//! Two views are extracted from each stream: a low-resolution view keeping
//! the first, middle, and last attempts, and a high-resolution view of
//! next-step windows (k prior attempts, next attempt). Both views support
//! cross-problem conditioning: a submission (or segment) taken from a prior
//! problem of the same student at the same relative position.
//!
//! All operations are pure functions over immutable streams.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ProblemSpec, Stream, Submission};

/// Low-resolution stage within a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    First,
    Middle,
    Last,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::First, Stage::Middle, Stage::Last];

    pub fn token(self) -> &'static str {
        match self {
            Stage::First => "first",
            Stage::Middle => "middle",
            Stage::Last => "last",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// One stage-conditioned generation/evaluation example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowResExample {
    pub stage: Stage,
    pub target: Submission,
    pub problem: ProblemSpec,
    /// Same-stage submission from a prior problem of the same student.
    pub context: Option<Submission>,
}

/// One next-step generation/evaluation example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighResExample {
    pub target: Submission,
    /// Up to k attempts immediately preceding the target, oldest first.
    pub history: Vec<Submission>,
    pub problem: ProblemSpec,
    /// Up to k+1 attempts from a prior problem, ending at the aligned
    /// relative position, oldest first.
    pub context_segment: Option<Vec<Submission>>,
}

#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error("stream has no submissions")]
    EmptyStream,
    #[error("history size k must be at least 1")]
    ZeroHistory,
    #[error("prior stream belongs to student {prior:?}, target stream to {target:?}")]
    PriorWrongStudent { prior: String, target: String },
    #[error("prior stream is on the same problem {0:?}")]
    PriorSameProblem(String),
    #[error("no problem spec for {0:?}")]
    UnknownProblem(String),
    #[error("reference {student_id}/{problem_id}#{attempt_index} does not resolve: {reason}")]
    BadRef {
        student_id: String,
        problem_id: String,
        attempt_index: usize,
        reason: String,
    },
}

/// Positions of the first, middle, and last attempts of a stream of length n.
///
/// The middle is floor((n-1)/2): the exact middle entry for odd n, the lower
/// median for even n.
pub fn stage_indices(n: usize) -> Result<(usize, usize, usize), StreamError> {
    if n == 0 {
        return Err(StreamError::EmptyStream);
    }
    Ok((0, (n - 1) / 2, n - 1))
}

/// Index of a stage within a stream of length n.
pub fn stage_index(stage: Stage, n: usize) -> Result<usize, StreamError> {
    let (first, middle, last) = stage_indices(n)?;
    Ok(match stage {
        Stage::First => first,
        Stage::Middle => middle,
        Stage::Last => last,
    })
}

/// Map a target attempt position onto a prior stream of length m, preserving
/// relative position: t' = round(t * (m-1) / (n-1)), half up.
///
/// Endpoints map to endpoints: t=0 -> 0 and t=n-1 -> m-1.
pub fn align_relative(t: usize, n: usize, m: usize) -> Result<usize, StreamError> {
    if n == 0 || m == 0 {
        return Err(StreamError::EmptyStream);
    }
    assert!(t < n, "attempt index {t} out of range for stream length {n}");
    if n == 1 {
        return Ok(0);
    }
    // Exact rational rounding: round_half_up(p/q) = (2p + q) / (2q).
    let p = t * (m - 1);
    let q = n - 1;
    Ok((2 * p + q) / (2 * q))
}

fn check_prior(stream: &Stream, prior: &Stream) -> Result<(), StreamError> {
    if prior.student_id != stream.student_id {
        return Err(StreamError::PriorWrongStudent {
            prior: prior.student_id.clone(),
            target: stream.student_id.clone(),
        });
    }
    if prior.problem_id == stream.problem_id {
        return Err(StreamError::PriorSameProblem(prior.problem_id.clone()));
    }
    if prior.is_empty() {
        return Err(StreamError::EmptyStream);
    }
    Ok(())
}

/// Extract the three stage examples of a stream, optionally conditioned on
/// the same student's prior-problem stream at matching stages.
pub fn extract_low_res(
    stream: &Stream,
    problem: &ProblemSpec,
    prior_stream: Option<&Stream>,
) -> Result<Vec<LowResExample>, StreamError> {
    if stream.is_empty() {
        return Err(StreamError::EmptyStream);
    }
    if let Some(prior) = prior_stream {
        check_prior(stream, prior)?;
    }

    let mut examples = Vec::with_capacity(3);
    for stage in Stage::ALL {
        let target_idx = stage_index(stage, stream.len())?;
        let context = match prior_stream {
            Some(prior) => Some(prior.submissions[stage_index(stage, prior.len())?].clone()),
            None => None,
        };
        examples.push(LowResExample {
            stage,
            target: stream.submissions[target_idx].clone(),
            problem: problem.clone(),
            context,
        });
    }
    Ok(examples)
}

/// Extract next-step windows: one example per target attempt t in 1..n-1,
/// with up to k prior attempts as history. A stream of length 1 has no next
/// step to predict and yields an empty list.
///
/// When a prior stream is given, each example carries a segment of up to k+1
/// prior-problem attempts ending at the aligned relative position (truncated
/// at stream boundaries rather than padded).
pub fn extract_high_res(
    stream: &Stream,
    k: usize,
    problem: &ProblemSpec,
    prior_stream: Option<&Stream>,
) -> Result<Vec<HighResExample>, StreamError> {
    if k == 0 {
        return Err(StreamError::ZeroHistory);
    }
    if stream.is_empty() {
        return Err(StreamError::EmptyStream);
    }
    if let Some(prior) = prior_stream {
        check_prior(stream, prior)?;
    }

    let n = stream.len();
    let mut examples = Vec::with_capacity(n.saturating_sub(1));
    for t in 1..n {
        let history = stream.submissions[t.saturating_sub(k)..t].to_vec();
        let context_segment = match prior_stream {
            Some(prior) => {
                let end = align_relative(t, n, prior.len())?;
                let start = end.saturating_sub(k);
                Some(prior.submissions[start..=end].to_vec())
            }
            None => None,
        };
        examples.push(HighResExample {
            target: stream.submissions[t].clone(),
            history,
            problem: problem.clone(),
            context_segment,
        });
    }
    Ok(examples)
}

/// Reference to a submission by stream position, the serialized currency of
/// extracted example sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubmissionRef {
    pub student_id: String,
    pub problem_id: String,
    pub attempt_index: usize,
}

impl SubmissionRef {
    pub fn of(sub: &Submission) -> Self {
        Self {
            student_id: sub.student_id.clone(),
            problem_id: sub.problem_id.clone(),
            attempt_index: sub.attempt_index,
        }
    }

    pub fn resolve<'c>(&self, corpus: &'c Corpus) -> Result<&'c Submission, StreamError> {
        let mk_err = |reason: &str| StreamError::BadRef {
            student_id: self.student_id.clone(),
            problem_id: self.problem_id.clone(),
            attempt_index: self.attempt_index,
            reason: reason.to_string(),
        };
        let stream = corpus
            .find_stream(&self.student_id, &self.problem_id)
            .map_err(|e| mk_err(&e.to_string()))?;
        stream
            .submissions
            .get(self.attempt_index)
            .ok_or_else(|| mk_err("attempt index out of range"))
    }
}

/// Serialized low-resolution example (one JSONL line).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowResRecord {
    pub stage: Stage,
    pub target_ref: SubmissionRef,
    #[serde(default)]
    pub context_refs: Vec<SubmissionRef>,
}

/// Serialized high-resolution example (one JSONL line).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighResRecord {
    pub target_ref: SubmissionRef,
    pub history_refs: Vec<SubmissionRef>,
    #[serde(default)]
    pub context_refs: Vec<SubmissionRef>,
}

impl LowResRecord {
    pub fn of(example: &LowResExample) -> Self {
        Self {
            stage: example.stage,
            target_ref: SubmissionRef::of(&example.target),
            context_refs: example.context.iter().map(SubmissionRef::of).collect(),
        }
    }

    pub fn resolve(&self, corpus: &Corpus) -> Result<LowResExample, StreamError> {
        let target = self.target_ref.resolve(corpus)?.clone();
        let problem = corpus
            .get_problem(&target.problem_id)
            .ok_or_else(|| StreamError::UnknownProblem(target.problem_id.clone()))?
            .clone();
        let context = match self.context_refs.as_slice() {
            [] => None,
            [one] => Some(one.resolve(corpus)?.clone()),
            more => Some(more[0].resolve(corpus)?.clone()),
        };
        Ok(LowResExample {
            stage: self.stage,
            target,
            problem,
            context,
        })
    }
}

impl HighResRecord {
    pub fn of(example: &HighResExample) -> Self {
        Self {
            target_ref: SubmissionRef::of(&example.target),
            history_refs: example.history.iter().map(SubmissionRef::of).collect(),
            context_refs: example
                .context_segment
                .iter()
                .flatten()
                .map(SubmissionRef::of)
                .collect(),
        }
    }

    pub fn resolve(&self, corpus: &Corpus) -> Result<HighResExample, StreamError> {
        let target = self.target_ref.resolve(corpus)?.clone();
        let problem = corpus
            .get_problem(&target.problem_id)
            .ok_or_else(|| StreamError::UnknownProblem(target.problem_id.clone()))?
            .clone();
        let history = self
            .history_refs
            .iter()
            .map(|r| r.resolve(corpus).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        let context_segment = if self.context_refs.is_empty() {
            None
        } else {
            Some(
                self.context_refs
                    .iter()
                    .map(|r| r.resolve(corpus).cloned())
                    .collect::<Result<Vec<_>, _>>()?,
            )
        };
        Ok(HighResExample {
            target,
            history,
            problem,
            context_segment,
        })
    }
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn stage_indices_are_monotone(n in 1usize..200) {
            let (first, middle, last) = stage_indices(n).unwrap();
            prop_assert!(first <= middle && middle <= last);
            prop_assert!(last < n);
        }

        #[test]
        fn align_relative_is_monotone_in_t(n in 2usize..40, m in 1usize..40) {
            let mut prev = 0;
            for t in 0..n {
                let mapped = align_relative(t, n, m).unwrap();
                prop_assert!(mapped < m);
                prop_assert!(mapped >= prev);
                prev = mapped;
            }
        }

        #[test]
        fn high_res_example_count_is_n_minus_1(n in 1usize..30, k in 1usize..6) {
            let s = super::tests_support::stream_of(n);
            let p = super::tests_support::problem_of("p1");
            let examples = extract_high_res(&s, k, &p, None).unwrap();
            prop_assert_eq!(examples.len(), n.saturating_sub(1));
        }

        #[test]
        fn history_never_leaks_the_future(n in 2usize..30, k in 1usize..6) {
            let s = super::tests_support::stream_of(n);
            let p = super::tests_support::problem_of("p1");
            for example in extract_high_res(&s, k, &p, None).unwrap() {
                let max_history = example.history.iter().map(|h| h.attempt_index).max().unwrap();
                prop_assert!(max_history < example.target.attempt_index);
                prop_assert_eq!(example.history.len(), k.min(example.target.attempt_index));
            }
        }

        #[test]
        fn context_segment_has_k_plus_1_entries_unless_clipped(
            n in 2usize..30,
            m in 1usize..30,
            k in 1usize..6,
        ) {
            let s = super::tests_support::stream_of(n);
            let prior = super::tests_support::prior_stream_of(m);
            let p = super::tests_support::problem_of("p1");
            for example in extract_high_res(&s, k, &p, Some(&prior)).unwrap() {
                let segment = example.context_segment.as_ref().unwrap();
                let end = segment.last().unwrap().attempt_index;
                prop_assert_eq!(segment.len(), (k + 1).min(end + 1));
                prop_assert!(end < m);
            }
        }
    }
}

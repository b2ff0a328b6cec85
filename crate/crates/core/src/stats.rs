//! Population statistics: the PCA style score, edit distance, progress
//! curves over normalized attempt positions, and pairwise MAE aggregation.

use serde::{Deserialize, Serialize};

use crate::analysis::CodeMetrics;
use crate::corpus::Stream;

/// Feature order of the style model, fixed across fits.
pub const STYLE_FEATURES: [&str; 5] =
    ["char_count", "line_count", "ast_depth", "ast_width", "ast_nodes"];

const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {needed} parseable submissions with nonconstant features, got {got}")]
    NotEnoughData { needed: usize, got: usize },
    #[error("every feature is constant over the reference set")]
    AllConstantFeatures,
    #[error("no pairs with both sides defined")]
    NoDefinedPairs,
    #[error("no streams to aggregate")]
    EmptyStreams,
    #[error("bin count must be at least 1")]
    ZeroBins,
}

/// First-principal-component model over standardized style features, fitted
/// on the reference (student) population and applied to every population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleScoreModel {
    pub feature_order: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Unit loading vector, oriented so the sign anchor loads positively.
    pub loading: Vec<f64>,
    pub sign_anchor: String,
}

/// Non-fatal fit diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FitDiagnostics {
    /// Features whose scale was pinned to 1 because they are constant.
    pub constant_features: Vec<String>,
}

fn feature_vector(m: &CodeMetrics) -> Option<[f64; 5]> {
    Some([
        m.char_count as f64,
        m.line_count as f64,
        m.ast_depth? as f64,
        m.ast_width? as f64,
        m.ast_nodes? as f64,
    ])
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fit the style model: z-score each feature with population statistics from
/// the reference set, then take the leading eigenvector of the standardized
/// covariance. Unparseable submissions are excluded from fitting.
pub fn fit_style_model(
    reference: &[CodeMetrics],
) -> Result<(StyleScoreModel, FitDiagnostics), StatsError> {
    let rows: Vec<[f64; 5]> = reference.iter().filter_map(feature_vector).collect();
    if rows.len() < 2 {
        return Err(StatsError::NotEnoughData {
            needed: 2,
            got: rows.len(),
        });
    }

    let mut means = vec![0.0; 5];
    let mut scales = vec![0.0; 5];
    let mut diagnostics = FitDiagnostics::default();
    for j in 0..5 {
        let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let (mean, std) = mean_std(&column);
        means[j] = mean;
        if std == 0.0 {
            scales[j] = 1.0;
            diagnostics
                .constant_features
                .push(STYLE_FEATURES[j].to_string());
        } else {
            scales[j] = std;
        }
    }
    if diagnostics.constant_features.len() == 5 {
        return Err(StatsError::AllConstantFeatures);
    }

    let standardized: Vec<[f64; 5]> = rows
        .iter()
        .map(|r| {
            let mut z = [0.0; 5];
            for j in 0..5 {
                z[j] = (r[j] - means[j]) / scales[j];
            }
            z
        })
        .collect();

    let n = standardized.len() as f64;
    let mut covariance = vec![vec![0.0; 5]; 5];
    for z in &standardized {
        for (a, row) in covariance.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell += z[a] * z[b] / n;
            }
        }
    }

    let (mut loading, _) = dominant_eigenvector(&covariance);

    // Orient the axis: larger/denser code scores higher. Fall back to the
    // largest-magnitude component if the anchor loads zero.
    let anchor_index = 0;
    let mut sign_anchor = STYLE_FEATURES[anchor_index].to_string();
    let mut anchor_value = loading[anchor_index];
    if anchor_value == 0.0 {
        let (idx, value) = loading
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, v)| (i, *v))
            .expect("loading has five components");
        sign_anchor = STYLE_FEATURES[idx].to_string();
        anchor_value = value;
    }
    if anchor_value < 0.0 {
        for v in &mut loading {
            *v = -*v;
        }
    }

    Ok((
        StyleScoreModel {
            feature_order: STYLE_FEATURES.iter().map(|s| s.to_string()).collect(),
            means,
            scales,
            loading,
            sign_anchor,
        },
        diagnostics,
    ))
}

/// Project one submission's features onto the fitted axis. Undefined for
/// unparseable submissions; callers exclude and count those.
pub fn style_score(model: &StyleScoreModel, metrics: &CodeMetrics) -> Option<f64> {
    let features = feature_vector(metrics)?;
    let score = (0..5)
        .map(|j| model.loading[j] * (features[j] - model.means[j]) / model.scales[j])
        .sum();
    Some(score)
}

/// Dominant eigenvector of a symmetric positive semidefinite matrix by power
/// iteration: deterministic all-ones start, tolerance 1e-10, at most 10,000
/// iterations. Returns the (unit vector, eigenvalue) pair.
pub(crate) fn dominant_eigenvector(matrix: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let d = matrix.len();
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    for _ in 0..POWER_MAX_ITERATIONS {
        let mut next = vec![0.0; d];
        for (a, row) in matrix.iter().enumerate() {
            for (b, cell) in row.iter().enumerate() {
                next[a] += cell * v[b];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Zero matrix: any unit vector spans the (degenerate) top space.
            return (v, 0.0);
        }
        for x in &mut next {
            *x /= norm;
        }
        let delta: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        v = next;
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    let mut image = vec![0.0; d];
    for (a, row) in matrix.iter().enumerate() {
        for (b, cell) in row.iter().enumerate() {
            image[a] += cell * v[b];
        }
    }
    let eigenvalue = image.iter().zip(&v).map(|(a, b)| a * b).sum();
    (v, eigenvalue)
}

/// Minimum number of character insertions, deletions, and substitutions
/// turning one text into the other.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diagonal = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let substitution = diagonal + usize::from(ca != cb);
            diagonal = row[j + 1];
            row[j + 1] = substitution.min(diagonal + 1).min(row[j] + 1);
        }
    }
    row[b.len()]
}

/// Position of attempt i within a stream of length n, normalized to [0, 1].
/// First and last attempts land exactly at 0 and 1; a single-attempt stream
/// maps to 0.
pub fn normalized_position(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// One bin of a progress curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Absent for empty bins.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
}

/// A metric averaged over normalized attempt positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressCurve {
    pub metric: String,
    pub bins: Vec<ProgressBin>,
}

impl ProgressCurve {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Aggregate pre-mapped (position, value) points into uniform bins over
/// [0, 1]. The final bin is closed so u = 1 is included.
pub fn bin_curve(
    metric: &str,
    points: &[(f64, f64)],
    bins: usize,
) -> Result<ProgressCurve, StatsError> {
    if bins == 0 {
        return Err(StatsError::ZeroBins);
    }
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for &(u, value) in points {
        let idx = ((u * bins as f64).floor() as usize).min(bins - 1);
        sums[idx] += value;
        counts[idx] += 1;
    }
    let bins_out = (0..bins)
        .map(|j| ProgressBin {
            lo: j as f64 / bins as f64,
            hi: (j + 1) as f64 / bins as f64,
            count: counts[j],
            mean: (counts[j] > 0).then(|| sums[j] / counts[j] as f64),
        })
        .collect();
    Ok(ProgressCurve {
        metric: metric.to_string(),
        bins: bins_out,
    })
}

/// Bin a per-submission metric over many streams. The metric may be
/// undefined at some positions (for example, edit distance at the first
/// attempt); those are skipped.
pub fn progress_curve<F>(
    metric: &str,
    streams: &[&Stream],
    value_at: F,
    bins: usize,
) -> Result<ProgressCurve, StatsError>
where
    F: Fn(&Stream, usize) -> Option<f64>,
{
    if streams.is_empty() {
        return Err(StatsError::EmptyStreams);
    }
    let mut points = Vec::new();
    for stream in streams {
        let n = stream.len();
        for i in 0..n {
            if let Some(value) = value_at(stream, i) {
                points.push((normalized_position(i, n), value));
            }
        }
    }
    bin_curve(metric, &points, bins)
}

/// Edit distance between consecutive submissions, mapped to the position of
/// the later attempt.
pub fn edit_distance_at(stream: &Stream, i: usize) -> Option<f64> {
    if i == 0 {
        return None;
    }
    let prev = &stream.submissions[i - 1].code;
    let here = &stream.submissions[i].code;
    Some(levenshtein(prev, here) as f64)
}

/// Mean absolute difference over matched (candidate, reference) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMae {
    pub metric: String,
    pub pairs: usize,
    /// Pairs with an undefined side, skipped and counted.
    pub skipped: usize,
    pub value: f64,
}

pub fn pairwise_mae(
    metric: &str,
    pairs: &[(Option<f64>, Option<f64>)],
) -> Result<PairwiseMae, StatsError> {
    let mut sum = 0.0;
    let mut matched = 0usize;
    let mut skipped = 0usize;
    for (candidate, reference) in pairs {
        match (candidate, reference) {
            (Some(c), Some(r)) => {
                sum += (c - r).abs();
                matched += 1;
            }
            _ => skipped += 1,
        }
    }
    if matched == 0 {
        return Err(StatsError::NoDefinedPairs);
    }
    Ok(PairwiseMae {
        metric: metric.to_string(),
        pairs: matched,
        skipped,
        value: sum / matched as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Submission;

    fn metrics(chars: usize, lines: usize, depth: usize, width: usize, nodes: usize) -> CodeMetrics {
        CodeMetrics {
            char_count: chars,
            line_count: lines,
            ast_depth: Some(depth),
            ast_width: Some(width),
            ast_nodes: Some(nodes),
            violations: 0,
            parse_ok: true,
        }
    }

    #[test]
    fn correlated_pair_loads_equally() {
        // char_count and line_count move together; the rest are constant.
        let reference = vec![
            metrics(10, 1, 3, 2, 4),
            metrics(20, 2, 3, 2, 4),
            metrics(30, 3, 3, 2, 4),
        ];
        let (model, diagnostics) = fit_style_model(&reference).unwrap();
        assert_eq!(
            diagnostics.constant_features,
            vec!["ast_depth", "ast_width", "ast_nodes"]
        );
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        assert!((model.loading[0] - inv_sqrt2).abs() < 1e-9);
        assert!((model.loading[1] - inv_sqrt2).abs() < 1e-9);
        for j in 2..5 {
            assert!(model.loading[j].abs() < 1e-9);
        }
        // Standardized rows are (-sqrt(3/2), 0, +sqrt(3/2)); scores scale by sqrt(2).
        let scores: Vec<f64> = reference
            .iter()
            .map(|m| style_score(&model, m).unwrap())
            .collect();
        let sqrt3 = 3f64.sqrt();
        assert!((scores[0] + sqrt3).abs() < 1e-9);
        assert!(scores[1].abs() < 1e-9);
        assert!((scores[2] - sqrt3).abs() < 1e-9);
    }

    #[test]
    fn single_varying_feature_concentrates_loading() {
        let reference = vec![
            metrics(10, 1, 3, 2, 4),
            metrics(10, 1, 3, 2, 9),
            metrics(10, 1, 3, 2, 14),
        ];
        let (model, _) = fit_style_model(&reference).unwrap();
        assert!((model.loading[4].abs() - 1.0).abs() < 1e-9);
        assert_eq!(model.sign_anchor, "ast_nodes");
        assert!(model.loading[4] > 0.0);
    }

    #[test]
    fn scores_at_reference_means_are_zero() {
        let reference = vec![metrics(10, 1, 3, 2, 4), metrics(30, 3, 5, 4, 12)];
        let (model, _) = fit_style_model(&reference).unwrap();
        let at_mean = metrics(20, 2, 4, 3, 8);
        assert!(style_score(&model, &at_mean).unwrap().abs() < 1e-9);
    }

    #[test]
    fn fitted_scores_have_zero_mean() {
        let reference: Vec<CodeMetrics> = (0..17)
            .map(|i| metrics(50 + 13 * i, 1 + i % 7, 3 + i % 4, 2 + i % 3, 10 + 2 * i))
            .collect();
        let (model, _) = fit_style_model(&reference).unwrap();
        let scores: Vec<f64> = reference
            .iter()
            .map(|m| style_score(&model, m).unwrap())
            .collect();
        let (mean, _) = mean_std(&scores);
        assert!(mean.abs() < 1e-9, "score mean {mean}");
    }

    #[test]
    fn unparseable_submissions_are_excluded() {
        let bad = CodeMetrics {
            char_count: 5,
            line_count: 1,
            ast_depth: None,
            ast_width: None,
            ast_nodes: None,
            violations: 1,
            parse_ok: false,
        };
        let reference = vec![bad.clone(), metrics(10, 1, 3, 2, 4)];
        assert!(matches!(
            fit_style_model(&reference),
            Err(StatsError::NotEnoughData { got: 1, .. })
        ));
        let (model, _) =
            fit_style_model(&[metrics(10, 1, 3, 2, 4), metrics(20, 2, 4, 3, 8)]).unwrap();
        assert_eq!(style_score(&model, &bad), None);
    }

    #[test]
    fn all_constant_features_error() {
        let reference = vec![metrics(10, 1, 3, 2, 4); 3];
        assert!(matches!(
            fit_style_model(&reference),
            Err(StatsError::AllConstantFeatures)
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let (model, _) =
            fit_style_model(&[metrics(10, 1, 3, 2, 4), metrics(20, 2, 4, 3, 8)]).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: StyleScoreModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        for field in ["feature_order", "means", "scales", "loading", "sign_anchor"] {
            assert!(json.contains(field), "missing {field}");
        }
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("same", "same"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
    }

    fn stream_of_len(n: usize) -> Stream {
        let submissions = (0..n)
            .map(|i| Submission {
                student_id: "s".into(),
                problem_id: "p".into(),
                semester: "sp21".into(),
                timestamp_ms: i as i64,
                code: format!("x = {i}"),
                grader_output: None,
                attempt_index: i,
            })
            .collect();
        Stream {
            student_id: "s".into(),
            problem_id: "p".into(),
            semester: "sp21".into(),
            submissions,
        }
    }

    #[test]
    fn progress_curve_maps_positions() {
        let stream = stream_of_len(3);
        let curve =
            progress_curve("attempt_index", &[&stream], |_, i| Some(i as f64), 10).unwrap();
        assert_eq!(curve.total_count(), 3);
        assert_eq!(curve.bins[0].mean, Some(0.0));
        assert_eq!(curve.bins[5].mean, Some(1.0));
        assert_eq!(curve.bins[9].mean, Some(2.0));
        let means: Vec<f64> = curve.bins.iter().filter_map(|b| b.mean).collect();
        assert!(means.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_attempt_stream_maps_to_first_bin() {
        let stream = stream_of_len(1);
        let curve = progress_curve("m", &[&stream], |_, _| Some(1.0), 10).unwrap();
        assert_eq!(curve.bins[0].count, 1);
        assert_eq!(curve.total_count(), 1);
    }

    #[test]
    fn rising_pass_fraction_rises_across_bins() {
        let a = stream_of_len(2);
        let b = stream_of_len(2);
        let curve = progress_curve(
            "pass",
            &[&a, &b],
            |_, i| Some(if i == 0 { 0.0 } else { 1.0 }),
            10,
        )
        .unwrap();
        assert_eq!(curve.bins[0].mean, Some(0.0));
        assert_eq!(curve.bins[9].mean, Some(1.0));
    }

    #[test]
    fn empty_stream_list_is_an_error() {
        assert!(matches!(
            progress_curve("m", &[], |_, _| Some(0.0), 10),
            Err(StatsError::EmptyStreams)
        ));
    }

    #[test]
    fn edit_distance_skips_first_attempt() {
        let stream = stream_of_len(3);
        assert_eq!(edit_distance_at(&stream, 0), None);
        assert!(edit_distance_at(&stream, 1).is_some());
        let curve = progress_curve("edit", &[&stream], edit_distance_at, 10).unwrap();
        assert_eq!(curve.total_count(), 2);
    }

    #[test]
    fn pairwise_mae_examples() {
        let mae = pairwise_mae("m", &[(Some(1.0), Some(1.0)), (Some(2.0), Some(4.0))]).unwrap();
        assert_eq!(mae.value, 1.0);
        assert_eq!(mae.pairs, 2);
        let zero = pairwise_mae("m", &[(Some(3.0), Some(3.0))]).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn pairwise_mae_skips_and_counts_undefined_sides() {
        let mae = pairwise_mae(
            "m",
            &[(Some(1.0), None), (None, Some(2.0)), (Some(5.0), Some(4.0))],
        )
        .unwrap();
        assert_eq!(mae.skipped, 2);
        assert_eq!(mae.pairs, 1);
        assert_eq!(mae.value, 1.0);
        assert!(matches!(
            pairwise_mae("m", &[(None, Some(1.0))]),
            Err(StatsError::NoDefinedPairs)
        ));
    }
}

//! Code embeddings and distribution-level semantic metrics.
//!
//! Embeddings come from a pluggable provider: an HTTP endpoint speaking
//! `{"texts": [...]} -> {"vectors": [[...]]}`, or a precomputed-vector file
//! keyed by content hash. Results are cached on disk by
//! (provider id, content hash) so reruns neither re-bill nor drift.
//!
//! Distance is cosine distance (1 - cosine similarity). KNN metrics are
//! exact brute force; neighbor-rank ties break by stable row index.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::net::{retry_with_backoff, Retry};
use crate::streams::SubmissionRef;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm vector at row {index}")]
    ZeroVector { index: usize },
    #[error("{side} set is empty")]
    EmptySet { side: &'static str },
    #[error("keys ({keys}) and matrix rows ({rows}) differ")]
    KeyRowMismatch { keys: usize, rows: usize },
    #[error("provider {provider_id} failed for batch starting at {batch_start}: {message}")]
    Provider {
        provider_id: String,
        batch_start: usize,
        message: String,
    },
    #[error("authentication rejected by provider: {0}")]
    AuthFailure(String),
    #[error("no precomputed vector for content hash {hash}")]
    MissingHash { hash: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad vector file {path}: {message}")]
    VectorFileFormat { path: String, message: String },
    #[error("pooled matrix has fewer than {needed} rows ({got})")]
    TooFewRows { needed: usize, got: usize },
    #[error("pooled matrix has no variance; nothing to project")]
    DegenerateProjection,
}

/// A fixed-dimension embedding with its cached L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = l2(&values);
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector { index: 0 });
        }
        Ok(Self { values, norm })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity of two nonzero vectors of equal dimension.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(dot / (a.norm * b.norm))
}

/// A keyed embedding matrix for one population.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    keys: Vec<SubmissionRef>,
    matrix: Vec<Vec<f64>>,
    norms: Vec<f64>,
    pub provider_id: String,
    pub normalized: bool,
}

impl EmbeddingSet {
    pub fn new(
        keys: Vec<SubmissionRef>,
        matrix: Vec<Vec<f64>>,
        provider_id: &str,
        normalized: bool,
    ) -> Result<Self, EmbeddingError> {
        if keys.len() != matrix.len() {
            return Err(EmbeddingError::KeyRowMismatch {
                keys: keys.len(),
                rows: matrix.len(),
            });
        }
        let dim = matrix.first().map_or(0, Vec::len);
        let mut norms = Vec::with_capacity(matrix.len());
        for (index, row) in matrix.iter().enumerate() {
            if row.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            let norm = l2(row);
            if norm == 0.0 {
                return Err(EmbeddingError::ZeroVector { index });
            }
            if normalized && (norm - 1.0).abs() > 1e-6 {
                return Err(EmbeddingError::ZeroVector { index });
            }
            norms.push(norm);
        }
        Ok(Self {
            keys,
            matrix,
            norms,
            provider_id: provider_id.to_string(),
            normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.first().map_or(0, Vec::len)
    }

    pub fn keys(&self) -> &[SubmissionRef] {
        &self.keys
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i]
    }

    fn cosine_rows(&self, i: usize, other: &EmbeddingSet, j: usize) -> f64 {
        let dot: f64 = self.matrix[i]
            .iter()
            .zip(&other.matrix[j])
            .map(|(x, y)| x * y)
            .sum();
        dot / (self.norms[i] * other.norms[j])
    }
}

/// Cosine distance between one row of each set.
fn cosine_distance_rows(a: &EmbeddingSet, i: usize, b: &EmbeddingSet, j: usize) -> f64 {
    1.0 - a.cosine_rows(i, b, j)
}

fn check_pair(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<(), EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Indices of the k nearest rows of `pool` to row `i` of `from`, by cosine
/// distance with ties broken by row index.
fn nearest_indices(from: &EmbeddingSet, i: usize, pool: &EmbeddingSet, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let distances: Vec<f64> = (0..pool.len())
        .map(|j| cosine_distance_rows(from, i, pool, j))
        .collect();
    order.sort_by(|&x, &y| distances[x].total_cmp(&distances[y]).then(x.cmp(&y)));
    order.truncate(k.min(pool.len()));
    order
}

/// Mean over reference rows of the average cosine distance to their k nearest
/// candidate rows. Lower means closer local alignment.
pub fn knn_distance(
    students: &EmbeddingSet,
    generated: &EmbeddingSet,
    k: usize,
) -> Result<f64, EmbeddingError> {
    if students.is_empty() {
        return Err(EmbeddingError::EmptySet { side: "student" });
    }
    if generated.is_empty() {
        return Err(EmbeddingError::EmptySet { side: "generated" });
    }
    check_pair(students, generated)?;
    let mut total = 0.0;
    for i in 0..students.len() {
        let neighbors = nearest_indices(students, i, generated, k);
        let sum: f64 = neighbors
            .iter()
            .map(|&j| cosine_distance_rows(students, i, generated, j))
            .sum();
        total += sum / neighbors.len() as f64;
    }
    Ok(total / students.len() as f64)
}

/// Which population's neighborhoods define coverage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageDirection {
    /// Student rows covered by generated rows' neighborhoods (default).
    #[default]
    GeneratedCoversStudents,
    /// The converse reading, for sensitivity comparison.
    StudentsCoverGenerated,
}

/// Fraction of reference rows that appear in the union of the candidate
/// rows' k-nearest-reference neighborhoods. Higher means more of the
/// reference distribution is covered.
pub fn knn_coverage(
    students: &EmbeddingSet,
    generated: &EmbeddingSet,
    k: usize,
) -> Result<f64, EmbeddingError> {
    knn_coverage_directed(students, generated, k, CoverageDirection::GeneratedCoversStudents)
}

/// Coverage with an explicit direction.
pub fn knn_coverage_directed(
    students: &EmbeddingSet,
    generated: &EmbeddingSet,
    k: usize,
    direction: CoverageDirection,
) -> Result<f64, EmbeddingError> {
    if students.is_empty() {
        return Err(EmbeddingError::EmptySet { side: "student" });
    }
    if generated.is_empty() {
        return Err(EmbeddingError::EmptySet { side: "generated" });
    }
    check_pair(students, generated)?;
    let (from, pool) = match direction {
        CoverageDirection::GeneratedCoversStudents => (generated, students),
        CoverageDirection::StudentsCoverGenerated => (students, generated),
    };
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    for j in 0..from.len() {
        for index in nearest_indices(from, j, pool, k) {
            covered.insert(index);
        }
    }
    Ok(covered.len() as f64 / pool.len() as f64)
}

/// One projected submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub key: SubmissionRef,
    pub population: String,
    pub x: f64,
    pub y: f64,
}

/// 2-D PCA projection of pooled embedding sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2d {
    pub points: Vec<ProjectedPoint>,
    /// Fractions of pooled variance explained by the two components.
    pub explained_variance: [f64; 2],
}

/// Fit PCA on the pooled mean-centered rows of all sets and project every row
/// onto the first two principal coordinates.
///
/// The sign of each component is fixed by making its largest-magnitude
/// loading entry positive.
pub fn project_2d(sets: &[(&str, &EmbeddingSet)]) -> Result<Projection2d, EmbeddingError> {
    let rows: usize = sets.iter().map(|(_, s)| s.len()).sum();
    if rows < 3 {
        return Err(EmbeddingError::TooFewRows { needed: 3, got: rows });
    }
    let dim = sets
        .iter()
        .find(|(_, s)| !s.is_empty())
        .map_or(0, |(_, s)| s.dim());
    for (_, set) in sets {
        if !set.is_empty() && set.dim() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                got: set.dim(),
            });
        }
    }

    let mut mean = vec![0.0; dim];
    for (_, set) in sets {
        for i in 0..set.len() {
            for (m, v) in mean.iter_mut().zip(set.row(i)) {
                *m += v;
            }
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }

    let centered: Vec<Vec<f64>> = sets
        .iter()
        .flat_map(|(_, set)| (0..set.len()).map(|i| set.row(i).to_vec()))
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let total_variance: f64 =
        centered.iter().map(|row| row.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
            / rows as f64;
    if total_variance <= f64::EPSILON {
        return Err(EmbeddingError::DegenerateProjection);
    }

    let pc1 = principal_direction(&centered, dim, None);
    let lambda1 = component_variance(&centered, &pc1);
    let pc2 = principal_direction(&centered, dim, Some(&pc1));
    let lambda2 = component_variance(&centered, &pc2);

    let mut points = Vec::with_capacity(rows);
    let mut row_iter = centered.iter();
    for (population, set) in sets {
        for key in set.keys() {
            let row = row_iter.next().expect("row per key");
            points.push(ProjectedPoint {
                key: key.clone(),
                population: (*population).to_string(),
                x: dot(row, &pc1),
                y: dot(row, &pc2),
            });
        }
    }

    Ok(Projection2d {
        points,
        explained_variance: [lambda1 / total_variance, lambda2 / total_variance],
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Power iteration over the implicit covariance X'X/n, optionally deflated by
/// a known first component. The start vector is the largest-norm (residual)
/// data row: deterministic, and inside the span being searched, so tied
/// eigenvalues cannot strand the iteration. Tolerance 1e-10, at most 10,000
/// iterations.
fn principal_direction(centered: &[Vec<f64>], dim: usize, deflate: Option<&[f64]>) -> Vec<f64> {
    let n = centered.len() as f64;
    let orthogonalize = |v: &mut Vec<f64>| {
        if let Some(prev) = deflate {
            let proj = dot(v, prev);
            for (x, p) in v.iter_mut().zip(prev) {
                *x -= proj * p;
            }
        }
    };

    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = 0.0;
    for row in centered {
        let mut residual = row.clone();
        orthogonalize(&mut residual);
        let norm = l2(&residual);
        if norm > best_norm {
            best_norm = norm;
            best = Some(residual);
        }
    }
    let mut v = match best {
        Some(residual) if best_norm > 1e-12 => residual,
        // No variance in the searched span; return a deterministic direction
        // orthogonal to the deflated one.
        _ => {
            let idx = deflate.map_or(0, |prev| {
                prev.iter()
                    .enumerate()
                    .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .map_or(0, |(i, _)| i)
            });
            let mut basis = vec![0.0; dim];
            basis[idx] = 1.0;
            orthogonalize(&mut basis);
            if l2(&basis) <= f64::EPSILON {
                basis = vec![0.0; dim];
                basis[(idx + 1) % dim] = 1.0;
                orthogonalize(&mut basis);
            }
            basis
        }
    };
    normalize(&mut v);

    for _ in 0..10_000 {
        // w = X'(Xv)/n without materializing the covariance.
        let mut w = vec![0.0; dim];
        for row in centered {
            let scale = dot(row, &v) / n;
            for (wi, ri) in w.iter_mut().zip(row) {
                *wi += scale * ri;
            }
        }
        orthogonalize(&mut w);
        let norm = l2(&w);
        if norm <= f64::EPSILON {
            // No variance left: keep the current (deterministic) direction.
            break;
        }
        for x in &mut w {
            *x /= norm;
        }
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = w;
        if delta < 1e-10 {
            break;
        }
    }

    // Deterministic sign: the largest-magnitude loading entry is positive.
    let anchor = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i);
    if v[anchor] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

fn component_variance(centered: &[Vec<f64>], direction: &[f64]) -> f64 {
    centered.iter().map(|row| dot(row, direction).powi(2)).sum::<f64>() / centered.len() as f64
}

fn normalize(v: &mut [f64]) {
    let norm = l2(v);
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

/// Write projection rows as CSV plus a sidecar JSON of explained variance.
pub fn write_projection_csv(
    projection: &Projection2d,
    csv_path: &Path,
    sidecar_path: &Path,
) -> Result<(), EmbeddingError> {
    let io_err = |path: &Path, source: std::io::Error| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut writer = csv::Writer::from_path(csv_path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(csv_path, source),
        other => EmbeddingError::VectorFileFormat {
            path: csv_path.display().to_string(),
            message: format!("{other:?}"),
        },
    })?;
    writer
        .write_record(["key", "population", "x", "y"])
        .and_then(|()| {
            for p in &projection.points {
                writer.write_record([
                    format!(
                        "{}/{}#{}",
                        p.key.student_id, p.key.problem_id, p.key.attempt_index
                    ),
                    p.population.clone(),
                    format!("{:.6}", p.x),
                    format!("{:.6}", p.y),
                ])?;
            }
            writer.flush()?;
            Ok(())
        })
        .map_err(|e| EmbeddingError::VectorFileFormat {
            path: csv_path.display().to_string(),
            message: e.to_string(),
        })?;
    let sidecar = serde_json::json!({
        "explained_variance": projection.explained_variance,
    });
    fs::write(sidecar_path, format!("{sidecar}\n")).map_err(|e| io_err(sidecar_path, e))
}

/// Hex SHA-256 of a code text; the cache and vector-file key.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Source of embedding vectors.
pub trait EmbeddingProvider {
    fn provider_id(&self) -> &str;
    fn dim(&self) -> usize;
    /// One vector per text, in order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

/// Options for [`embed`].
#[derive(Debug, Clone)]
pub struct EmbedOptions {
    pub batch_size: usize,
    /// L2-normalize rows after retrieval.
    pub normalize: bool,
    /// Directory for the on-disk vector cache; None disables caching.
    pub cache_dir: Option<PathBuf>,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            normalize: false,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    provider_id: String,
    content_hash: String,
    vector: Vec<f64>,
}

fn cache_path(dir: &Path) -> PathBuf {
    dir.join("embedding-cache.jsonl")
}

fn load_cache(dir: &Path, provider_id: &str) -> BTreeMap<String, Vec<f64>> {
    let mut cache = BTreeMap::new();
    let path = cache_path(dir);
    if let Ok(text) = fs::read_to_string(&path) {
        for line in text.lines() {
            if let Ok(entry) = serde_json::from_str::<CacheLine>(line) {
                if entry.provider_id == provider_id {
                    cache.insert(entry.content_hash, entry.vector);
                }
            }
        }
    }
    cache
}

fn append_cache(
    dir: &Path,
    provider_id: &str,
    entries: &[(String, Vec<f64>)],
) -> Result<(), EmbeddingError> {
    fs::create_dir_all(dir).map_err(|e| EmbeddingError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let path = cache_path(dir);
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| EmbeddingError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    for (hash, vector) in entries {
        let line = serde_json::to_string(&CacheLine {
            provider_id: provider_id.to_string(),
            content_hash: hash.clone(),
            vector: vector.clone(),
        })
        .expect("cache line serializes");
        writeln!(file, "{line}").map_err(|e| EmbeddingError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}

/// Embed texts through a provider with content-hash caching and batching.
/// Duplicate texts are embedded once and share a row value.
pub fn embed(
    keys: Vec<SubmissionRef>,
    texts: &[&str],
    provider: &dyn EmbeddingProvider,
    options: &EmbedOptions,
) -> Result<EmbeddingSet, EmbeddingError> {
    assert_eq!(keys.len(), texts.len(), "one key per text");
    let mut by_hash: BTreeMap<String, Vec<f64>> = match &options.cache_dir {
        Some(dir) => load_cache(dir, provider.provider_id()),
        None => BTreeMap::new(),
    };

    // Unique texts missing from the cache, in first-seen order.
    let mut missing: Vec<(&str, String)> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for text in texts {
        let hash = content_hash(text);
        if !by_hash.contains_key(&hash) && seen.insert(hash.clone()) {
            missing.push((text, hash));
        }
    }

    let mut fresh: Vec<(String, Vec<f64>)> = Vec::new();
    for (chunk_index, chunk) in missing.chunks(options.batch_size.max(1)).enumerate() {
        let batch: Vec<&str> = chunk.iter().map(|(t, _)| *t).collect();
        let batch_offset = chunk_index * options.batch_size.max(1);
        let vectors = provider.embed_batch(&batch).map_err(|e| match e {
            EmbeddingError::Provider {
                provider_id,
                message,
                ..
            } => EmbeddingError::Provider {
                provider_id,
                // Index of the failed batch within the uncached texts.
                batch_start: batch_offset,
                message,
            },
            other => other,
        })?;
        if vectors.len() != batch.len() {
            return Err(EmbeddingError::Provider {
                provider_id: provider.provider_id().to_string(),
                batch_start: 0,
                message: format!("returned {} vectors for {} texts", vectors.len(), batch.len()),
            });
        }
        for ((_, hash), vector) in chunk.iter().zip(vectors) {
            if vector.len() != provider.dim() {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: provider.dim(),
                    got: vector.len(),
                });
            }
            fresh.push((hash.clone(), vector));
        }
    }
    if let (Some(dir), false) = (&options.cache_dir, fresh.is_empty()) {
        append_cache(dir, provider.provider_id(), &fresh)?;
    }
    by_hash.extend(fresh);

    let mut matrix = Vec::with_capacity(texts.len());
    for text in texts {
        let hash = content_hash(text);
        let mut row = by_hash
            .get(&hash)
            .unwrap_or_else(|| unreachable!("vector for every text"))
            .clone();
        if options.normalize {
            normalize(&mut row);
        }
        matrix.push(row);
    }
    EmbeddingSet::new(keys, matrix, provider.provider_id(), options.normalize)
}

/// Provider backed by an HTTP endpoint.
pub struct HttpEmbeddingProvider {
    pub url: String,
    pub provider_id: String,
    pub dim: usize,
    pub auth_token: Option<String>,
    pub retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpEmbeddingProvider {
    pub fn new(url: &str, provider_id: &str, dim: usize, auth_token: Option<String>) -> Self {
        Self {
            url: url.to_string(),
            provider_id: provider_id.to_string(),
            dim,
            auth_token,
            retries: 3,
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct VectorsResponse {
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let body = serde_json::json!({ "texts": texts });
        retry_with_backoff(self.retries, Duration::from_millis(250), || {
            let mut request = self.client.post(&self.url).json(&body);
            if let Some(token) = &self.auth_token {
                request = request.bearer_auth(token);
            }
            let response = request.send().map_err(|e| {
                Retry::Transient(EmbeddingError::Provider {
                    provider_id: self.provider_id.clone(),
                    batch_start: 0,
                    message: e.to_string(),
                })
            })?;
            let status = response.status();
            if status == reqwest::StatusCode::UNAUTHORIZED
                || status == reqwest::StatusCode::FORBIDDEN
            {
                return Err(Retry::Fatal(EmbeddingError::AuthFailure(status.to_string())));
            }
            if !status.is_success() {
                return Err(Retry::Transient(EmbeddingError::Provider {
                    provider_id: self.provider_id.clone(),
                    batch_start: 0,
                    message: format!("status {status}"),
                }));
            }
            let parsed: VectorsResponse = response.json().map_err(|e| {
                Retry::Transient(EmbeddingError::Provider {
                    provider_id: self.provider_id.clone(),
                    batch_start: 0,
                    message: format!("bad response body: {e}"),
                })
            })?;
            Ok(parsed.vectors)
        })
    }
}

/// Provider backed by a precomputed-vector file: a header line
/// `{"dim": ..., "provider_id": ...}` followed by `{content_hash, vector}`
/// lines. Lookups are by content hash; no network is involved.
pub struct FileEmbeddingProvider {
    provider_id: String,
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorFileHeader {
    dim: usize,
    provider_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorFileLine {
    content_hash: String,
    vector: Vec<f64>,
}

impl FileEmbeddingProvider {
    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let text = fs::read_to_string(path).map_err(|e| EmbeddingError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut lines = text.lines();
        let header: VectorFileHeader = lines
            .next()
            .ok_or(())
            .and_then(|line| serde_json::from_str(line).map_err(|_| ()))
            .map_err(|()| EmbeddingError::VectorFileFormat {
                path: path.display().to_string(),
                message: "missing {dim, provider_id} header".to_string(),
            })?;
        let mut vectors = BTreeMap::new();
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: VectorFileLine =
                serde_json::from_str(line).map_err(|e| EmbeddingError::VectorFileFormat {
                    path: path.display().to_string(),
                    message: format!("line {}: {e}", idx + 2),
                })?;
            if entry.vector.len() != header.dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: header.dim,
                    got: entry.vector.len(),
                });
            }
            vectors.insert(entry.content_hash, entry.vector);
        }
        Ok(Self {
            provider_id: header.provider_id,
            dim: header.dim,
            vectors,
        })
    }

    pub fn entry_count(&self) -> usize {
        self.vectors.len()
    }
}

impl EmbeddingProvider for FileEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        texts
            .iter()
            .map(|text| {
                let hash = content_hash(text);
                self.vectors
                    .get(&hash)
                    .cloned()
                    .ok_or(EmbeddingError::MissingHash { hash })
            })
            .collect()
    }
}

/// Write a precomputed-vector file consumable by [`FileEmbeddingProvider`].
pub fn write_vector_file(
    path: &Path,
    dim: usize,
    provider_id: &str,
    entries: &[(String, Vec<f64>)],
) -> Result<(), EmbeddingError> {
    let mut out = String::new();
    out.push_str(
        &serde_json::to_string(&VectorFileHeader {
            dim,
            provider_id: provider_id.to_string(),
        })
        .expect("header serializes"),
    );
    out.push('\n');
    for (hash, vector) in entries {
        out.push_str(
            &serde_json::to_string(&VectorFileLine {
                content_hash: hash.clone(),
                vector: vector.clone(),
            })
            .expect("line serializes"),
        );
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| EmbeddingError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

//! Two-stage exemplar selection.
//!
//! The archive is ranked by cosine similarity between the query embedding
//! and each stored query embedding. An adaptive cutoff on the sorted
//! profile gives the candidate set, and one filter-model call prunes it to
//! exemplars whose workflows fit the query.

mod cache;
mod cutoff;
mod filter;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatBackend, ChatMessage, ChatRequest, Embedder, GatewayError, TokenUsage};
use crate::workflow::ExecutionTrace;

pub use cache::EmbeddingCache;
pub use cutoff::{adaptive_cutoff, cutoff_objective, segment_fit_rmse, CUTOFF_TIE_TOLERANCE};
pub use filter::{candidates_json, parse_filter_output, render_filter_prompt};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RetrievalError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("embedding is empty or has non-finite components")]
    InvalidEmbedding,
    #[error("archive is empty")]
    EmptyArchive,
    #[error("invalid segment {a}..={b} for a profile of length {len}")]
    InvalidSegment { a: usize, b: usize, len: usize },
    #[error("profile of length {0} has no admissible breakpoint")]
    DegenerateProfile(usize),
    #[error("cutoff {cutoff} outside 1..={len}")]
    InvalidCutoff { cutoff: usize, len: usize },
    #[error("filter output could not be parsed: {0}")]
    ParseFailure(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self, RetrievalError> {
        if components.is_empty() || components.iter().any(|c| !c.is_finite()) {
            return Err(RetrievalError::InvalidEmbedding);
        }
        Ok(Self { components })
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Cosine of the angle between `u` and `v`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if u.dimension() != v.dimension() {
        return Err(RetrievalError::DimensionMismatch {
            left: u.dimension(),
            right: v.dimension(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroNorm);
    }
    let dot: f64 = u
        .components
        .iter()
        .zip(&v.components)
        .map(|(a, b)| a * b)
        .sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Similarity scores sorted non-increasing, with the archive position each
/// rank came from (zero-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile {
    pub scores: Vec<f64>,
    pub original_index: Vec<usize>,
}

impl SimilarityProfile {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Ranks archive vectors by descending cosine similarity to `query`.
/// Equal scores keep ascending archive order.
pub fn rank_by_similarity(
    query: &EmbeddingVector,
    archive: &[EmbeddingVector],
) -> Result<SimilarityProfile, RetrievalError> {
    if archive.is_empty() {
        return Err(RetrievalError::EmptyArchive);
    }
    let mut scored: Vec<(usize, f64)> = archive
        .iter()
        .enumerate()
        .map(|(i, v)| cosine_similarity(query, v).map(|s| (i, s)))
        .collect::<Result<_, _>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(SimilarityProfile {
        scores: scored.iter().map(|(_, s)| *s).collect(),
        original_index: scored.iter().map(|(i, _)| *i).collect(),
    })
}

/// An archived query with its verified workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarRecord {
    pub id: String,
    pub query: String,
    pub workflow: ExecutionTrace,
}

/// A problem on one line of an archive file.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ArchiveError {
    pub line: usize,
    pub message: String,
}

/// Parses a line-delimited archive and checks record invariants.
/// All problems are reported together.
pub fn parse_archive(text: &str) -> Result<Vec<ExemplarRecord>, Vec<ArchiveError>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExemplarRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(ArchiveError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let mut fail = |message: String| {
            errors.push(ArchiveError {
                line: line_no,
                message,
            })
        };
        if record.query.trim().is_empty() {
            fail(format!("record `{}` has an empty query", record.id));
        }
        if record.workflow.is_empty() {
            fail(format!("record `{}` has an empty workflow", record.id));
        }
        if !ids.insert(record.id.clone()) {
            fail(format!("duplicate record id `{}`", record.id));
        }
        records.push(record);
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(errors)
    }
}

pub fn load_archive(path: &Path) -> Result<Vec<ExemplarRecord>, Vec<ArchiveError>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![ArchiveError {
            line: 0,
            message: format!("{}: {e}", path.display()),
        }]
    })?;
    parse_archive(&text)
}

pub fn archive_to_jsonl(records: &[ExemplarRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

/// The `cutoff` best-ranked records, most similar first.
pub fn build_candidate_set(
    profile: &SimilarityProfile,
    cutoff: usize,
    archive: &[ExemplarRecord],
) -> Result<Vec<ExemplarRecord>, RetrievalError> {
    if cutoff == 0 || cutoff > profile.len() {
        return Err(RetrievalError::InvalidCutoff {
            cutoff,
            len: profile.len(),
        });
    }
    Ok(profile.original_index[..cutoff]
        .iter()
        .map(|&i| archive[i].clone())
        .collect())
}

/// How exemplars are chosen for the prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetrievalMode {
    /// Adaptive cutoff followed by the filter gate.
    #[default]
    Adaptive,
    /// Fixed top-k by similarity, no filter.
    TopK(usize),
    /// No exemplars.
    None,
}

impl FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "adaptive" => Ok(RetrievalMode::Adaptive),
            "none" => Ok(RetrievalMode::None),
            other => {
                let k = other
                    .strip_prefix("topk:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| {
                        format!("invalid retrieval mode `{other}` (adaptive | topk:<k> | none)")
                    })?;
                Ok(RetrievalMode::TopK(k))
            }
        }
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetrievalMode::Adaptive => f.write_str("adaptive"),
            RetrievalMode::TopK(k) => write!(f, "topk:{k}"),
            RetrievalMode::None => f.write_str("none"),
        }
    }
}

/// Everything the selection pipeline decided, for transcripts and tests.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Selection {
    pub profile: Option<SimilarityProfile>,
    pub cutoff: usize,
    /// True when the archive was too short for the adaptive cutoff.
    pub cutoff_fallback: bool,
    pub candidates: Vec<ExemplarRecord>,
    pub selected: Vec<ExemplarRecord>,
    /// Reason the filter result was discarded, if it was.
    pub filter_fallback: Option<String>,
    pub filter_usage: TokenUsage,
}

impl Selection {
    pub fn selected_ids(&self) -> Vec<String> {
        self.selected.iter().map(|r| r.id.clone()).collect()
    }
}

/// Embeds the archive (through an optional cache), ranks, cuts off and
/// filters.
pub struct ExemplarSelector<'a> {
    embedder: &'a dyn Embedder,
    filter: Option<&'a dyn ChatBackend>,
    cache: Option<&'a EmbeddingCache>,
    mode: RetrievalMode,
}

impl<'a> ExemplarSelector<'a> {
    pub fn new(embedder: &'a dyn Embedder, filter: &'a dyn ChatBackend) -> Self {
        Self {
            embedder,
            filter: Some(filter),
            cache: None,
            mode: RetrievalMode::Adaptive,
        }
    }

    /// Selector without a filter gate; candidates pass through unchanged.
    pub fn unfiltered(embedder: &'a dyn Embedder) -> Self {
        Self {
            embedder,
            filter: None,
            cache: None,
            mode: RetrievalMode::Adaptive,
        }
    }

    pub fn with_cache(mut self, cache: &'a EmbeddingCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_mode(mut self, mode: RetrievalMode) -> Self {
        self.mode = mode;
        self
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        match self.cache {
            Some(cache) => cache.get_or_embed(self.embedder, text),
            None => Ok(self.embedder.embed(text)?),
        }
    }

    /// Archive embeddings, computed concurrently and returned in archive order.
    pub fn embed_archive(
        &self,
        archive: &[ExemplarRecord],
    ) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        archive.par_iter().map(|r| self.embed(&r.query)).collect()
    }

    pub fn profile(
        &self,
        query: &str,
        archive: &[ExemplarRecord],
    ) -> Result<SimilarityProfile, RetrievalError> {
        if archive.is_empty() {
            return Err(RetrievalError::EmptyArchive);
        }
        let vectors = self.embed_archive(archive)?;
        let q = self.embedder.embed(query)?;
        rank_by_similarity(&q, &vectors)
    }

    pub fn select(
        &self,
        query: &str,
        archive: &[ExemplarRecord],
    ) -> Result<Selection, RetrievalError> {
        if self.mode == RetrievalMode::None {
            return Ok(Selection::default());
        }
        let profile = self.profile(query, archive)?;
        let mut selection = Selection::default();
        match self.mode {
            RetrievalMode::TopK(k) => {
                selection.cutoff = k.min(profile.len());
            }
            _ => match adaptive_cutoff(&profile.scores) {
                Ok(m) => selection.cutoff = m,
                Err(RetrievalError::DegenerateProfile(n)) => {
                    selection.cutoff = n;
                    selection.cutoff_fallback = true;
                }
                Err(e) => return Err(e),
            },
        }
        selection.candidates = build_candidate_set(&profile, selection.cutoff, archive)?;
        selection.profile = Some(profile);

        let filter = match (self.mode, self.filter) {
            (RetrievalMode::Adaptive, Some(filter)) => filter,
            _ => {
                selection.selected = selection.candidates.clone();
                return Ok(selection);
            }
        };
        let prompt = render_filter_prompt(query, &selection.candidates);
        let response = filter.complete(&ChatRequest::new(vec![ChatMessage::user(prompt)]))?;
        selection.filter_usage = response.usage;
        let parsed = match response.text() {
            Some(text) => parse_filter_output(text, selection.candidates.len()),
            None => Err(RetrievalError::ParseFailure(
                "filter replied with a tool call".into(),
            )),
        };
        match parsed {
            Ok(keep) => {
                selection.selected = keep
                    .into_iter()
                    .map(|i| selection.candidates[i].clone())
                    .collect();
            }
            Err(e) => {
                tracing::warn!(error = %e, "filter output unusable; keeping all candidates");
                selection.filter_fallback = Some(e.to_string());
                selection.selected = selection.candidates.clone();
            }
        }
        Ok(selection)
    }
}

/// Adaptive two-stage selection; returns the selected subset.
pub fn select_exemplars(
    query: &str,
    archive: &[ExemplarRecord],
    embedder: &dyn Embedder,
    filter: &dyn ChatBackend,
) -> Result<Vec<ExemplarRecord>, RetrievalError> {
    Ok(ExemplarSelector::new(embedder, filter)
        .select(query, archive)?
        .selected)
}

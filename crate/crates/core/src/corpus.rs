//! Corpus ingest and preparation: JSONL utterance manifests, annotation-level
//! overlap resolution, bounded-duration chunking, and reference rendering.
//!
//! Overlap is handled with two heuristics: an utterance whose span lies fully
//! inside a different speaker's utterance is discarded (short vocalizations
//! like "uh-huh"), and partially overlapping utterances are kept and arranged
//! sequentially by start time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tags::{Qualifier, SaaDoc, SpeakerTag, Turn};

/// One transcribed, speaker-labeled utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub session_id: String,
    pub speaker_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<u32>,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

impl Utterance {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// All utterances of one conversation, canonically sorted by start time
/// (ties by end time, then speaker id).
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Session {
    pub fn sort_canonical(&mut self) {
        self.utterances.sort_by(|a, b| {
            a.start_s
                .partial_cmp(&b.start_s)
                .expect("finite start_s")
                .then(a.end_s.partial_cmp(&b.end_s).expect("finite end_s"))
                .then_with(|| a.speaker_id.cmp(&b.speaker_id))
        });
    }
}

/// A set of sessions, ordered by session id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub sessions: Vec<Session>,
}

impl Corpus {
    pub fn utterance_count(&self) -> usize {
        self.sessions.iter().map(|s| s.utterances.len()).sum()
    }

    /// Distinct speaker ids across the corpus, sorted.
    pub fn speakers(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .sessions
            .iter()
            .flat_map(|s| s.utterances.iter().map(|u| u.speaker_id.clone()))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: invalid JSON: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: end_s ({end_s}) must be greater than start_s ({start_s})")]
    NonPositiveSpan { line: usize, start_s: f64, end_s: f64 },
    #[error("line {line}: start_s must be finite and non-negative (got {start_s})")]
    BadStart { line: usize, start_s: f64 },
    #[error("line {line}: end_s must be finite (got {end_s})")]
    BadEnd { line: usize, end_s: f64 },
    #[error("line {line}: text is empty after trimming")]
    EmptyText { line: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn validate_utterance(u: &Utterance, line: usize) -> Result<(), ManifestError> {
    if !u.start_s.is_finite() || u.start_s < 0.0 {
        return Err(ManifestError::BadStart { line, start_s: u.start_s });
    }
    if !u.end_s.is_finite() {
        return Err(ManifestError::BadEnd { line, end_s: u.end_s });
    }
    if u.end_s <= u.start_s {
        return Err(ManifestError::NonPositiveSpan { line, start_s: u.start_s, end_s: u.end_s });
    }
    if u.text.trim().is_empty() {
        return Err(ManifestError::EmptyText { line });
    }
    Ok(())
}

/// Parse a JSONL utterance manifest. Nothing is skipped silently: every
/// malformed line is an error naming its 1-based line number.
pub fn parse_manifest(content: &str) -> Result<Corpus, ManifestError> {
    let mut by_session: BTreeMap<String, Vec<Utterance>> = BTreeMap::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let utt: Utterance =
            serde_json::from_str(raw).map_err(|source| ManifestError::Json { line, source })?;
        validate_utterance(&utt, line)?;
        by_session.entry(utt.session_id.clone()).or_default().push(utt);
    }
    let sessions = by_session
        .into_iter()
        .map(|(id, utterances)| {
            let mut s = Session { id, utterances };
            s.sort_canonical();
            s
        })
        .collect();
    Ok(Corpus { sessions })
}

/// Load a JSONL utterance manifest from disk.
pub fn load_manifest(path: &Path) -> Result<Corpus, ManifestError> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

/// Serialize a corpus back to canonical JSONL: pinned key order, times with
/// exactly three decimal places (millisecond precision). Loading then
/// serializing canonical input is byte-identical.
pub fn serialize_manifest(corpus: &Corpus) -> String {
    let mut out = String::new();
    for session in &corpus.sessions {
        for u in &session.utterances {
            write!(out, "{{\"session_id\":{},\"speaker_id\":{}", json_str(&u.session_id), json_str(&u.speaker_id)).unwrap();
            if let Some(ch) = u.channel {
                write!(out, ",\"channel\":{ch}").unwrap();
            }
            writeln!(
                out,
                ",\"start_s\":{:.3},\"end_s\":{:.3},\"text\":{}}}",
                u.start_s,
                u.end_s,
                json_str(&u.text)
            )
            .unwrap();
        }
    }
    out
}

/// Drop every utterance whose span lies fully inside a different speaker's
/// utterance (containment is judged against the input set, so the result is
/// stable under re-application). Remaining utterances stay in canonical
/// start-time order; partial overlaps are kept.
pub fn resolve_overlaps(session: &Session) -> Session {
    let utts = &session.utterances;
    let keep: Vec<bool> = utts
        .iter()
        .map(|u| {
            !utts.iter().any(|v| {
                v.speaker_id != u.speaker_id
                    && v.start_s <= u.start_s
                    && u.end_s <= v.end_s
                    && !(v.start_s == u.start_s && v.end_s == u.end_s && {
                        // identical spans contain each other; drop both
                        false
                    })
            })
        })
        .collect();
    let mut out = Session {
        id: session.id.clone(),
        utterances: utts
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(u, _)| u.clone())
            .collect(),
    };
    out.sort_canonical();
    out
}

/// A bounded-duration excerpt of a session with its turn sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_session: String,
    pub span_start_s: f64,
    pub span_end_s: f64,
    /// `(speaker_id, text)` in time order; consecutive same-speaker entries
    /// are merged at render time, not here.
    pub turns: Vec<(String, String)>,
    pub target_bucket_s: u32,
}

impl Chunk {
    pub fn duration_s(&self) -> f64 {
        self.span_end_s - self.span_start_s
    }

    /// Distinct speakers in first-appearance order.
    pub fn speakers(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for (spk, _) in &self.turns {
            if !seen.contains(&spk.as_str()) {
                seen.push(spk.as_str());
            }
        }
        seen
    }
}

/// Valid chunk duration targets in seconds.
pub const TARGET_BUCKETS: [u32; 4] = [10, 30, 60, 120];

#[derive(Debug, Error, PartialEq)]
pub enum ChunkError {
    #[error("target_s must be one of 10/30/60/120, got {0}")]
    BadTarget(u32),
    #[error("cap_s ({cap_s}) must be at least target_s ({target_s})")]
    CapBelowTarget { target_s: u32, cap_s: f64 },
}

/// Chunking output: the chunks plus human-readable warnings about dropped
/// material (over-cap utterances, under-target fragments).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChunkOutput {
    pub chunks: Vec<Chunk>,
    pub warnings: Vec<String>,
}

/// Cut a session into chunks near `target_s` by greedy left-to-right
/// accumulation of whole utterances.
///
/// A chunk closes as soon as its span reaches `target_s`, so every emitted
/// chunk satisfies `target_s <= duration < target_s + longest included
/// utterance` and never exceeds `cap_s`. Accumulations that cannot reach the
/// target (the cap would be exceeded, the target boundary falls in silence,
/// or the session ends) are dropped; fragments of at least `target_s / 2`
/// are reported as warnings.
pub fn chunk_session(
    session: &Session,
    target_s: u32,
    cap_s: f64,
) -> Result<ChunkOutput, ChunkError> {
    if !TARGET_BUCKETS.contains(&target_s) {
        return Err(ChunkError::BadTarget(target_s));
    }
    if cap_s < f64::from(target_s) {
        return Err(ChunkError::CapBelowTarget { target_s, cap_s });
    }

    let target = f64::from(target_s);
    let mut out = ChunkOutput::default();
    let mut acc: Vec<&Utterance> = Vec::new();
    let mut next_index = 0usize;

    let mut emit = |acc: &mut Vec<&Utterance>, out: &mut ChunkOutput, next_index: &mut usize| {
        let first = acc.first().expect("non-empty accumulation");
        let last = acc.last().expect("non-empty accumulation");
        out.chunks.push(Chunk {
            chunk_id: format!("{}_{}s_{:04}", session.id, target_s, *next_index),
            source_session: session.id.clone(),
            span_start_s: first.start_s,
            span_end_s: last.end_s,
            turns: acc.iter().map(|u| (u.speaker_id.clone(), u.text.trim().to_string())).collect(),
            target_bucket_s: target_s,
        });
        *next_index += 1;
        acc.clear();
    };
    let drop_fragment = |acc: &mut Vec<&Utterance>, out: &mut ChunkOutput, reason: &str| {
        if let (Some(first), Some(last)) = (acc.first(), acc.last()) {
            let span = last.end_s - first.start_s;
            if span >= target / 2.0 {
                out.warnings.push(format!(
                    "session {}: dropped {:.3}s fragment at [{:.3}, {:.3}] ({reason})",
                    session.id, span, first.start_s, last.end_s
                ));
            }
        }
        acc.clear();
    };

    for utt in &session.utterances {
        loop {
            let span_start = acc.first().map_or(utt.start_s, |u| u.start_s);
            let candidate_span = utt.end_s - span_start;
            if candidate_span > cap_s {
                if acc.is_empty() {
                    // single utterance longer than the cap can never fit
                    out.warnings.push(format!(
                        "session {}: dropped utterance at [{:.3}, {:.3}] longer than cap {:.3}s",
                        session.id, utt.start_s, utt.end_s, cap_s
                    ));
                    break;
                }
                drop_fragment(&mut acc, &mut out, "cap reached before target");
                continue; // retry this utterance with a fresh accumulation
            }
            if !acc.is_empty() && utt.start_s - span_start >= target {
                // the target boundary falls in silence before this utterance
                drop_fragment(&mut acc, &mut out, "target boundary in silence");
                continue;
            }
            acc.push(utt);
            if candidate_span >= target {
                emit(&mut acc, &mut out, &mut next_index);
            }
            break;
        }
    }
    drop_fragment(&mut acc, &mut out, "trailing remainder");
    Ok(out)
}

/// Tag style for rendered references.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagStyle {
    Relative,
    Id,
    Cluster,
}

#[derive(Debug, Error, PartialEq)]
pub enum RenderRefError {
    #[error("speaker {0:?} missing from the id map")]
    MissingSpeaker(String),
    #[error("chunk has no turns")]
    EmptyChunk,
}

/// Render a chunk's reference document. Relative indices follow first
/// appearance starting at 1; consecutive turns by the same speaker merge
/// into one tagged turn. `Id` and `Cluster` styles require `id_map` to cover
/// every speaker in the chunk.
pub fn render_reference(
    chunk: &Chunk,
    style: TagStyle,
    id_map: Option<&BTreeMap<String, u32>>,
) -> Result<SaaDoc, RenderRefError> {
    if chunk.turns.is_empty() {
        return Err(RenderRefError::EmptyChunk);
    }
    let mut rel_of: BTreeMap<&str, u32> = BTreeMap::new();
    let mut next_rel = 1u32;
    let mut turns: Vec<Turn> = Vec::new();
    for (speaker, text) in &chunk.turns {
        let rel = *rel_of.entry(speaker.as_str()).or_insert_with(|| {
            let r = next_rel;
            next_rel += 1;
            r
        });
        let qualifier = match style {
            TagStyle::Relative => Qualifier::None,
            TagStyle::Id | TagStyle::Cluster => {
                let value = id_map
                    .and_then(|m| m.get(speaker))
                    .copied()
                    .ok_or_else(|| RenderRefError::MissingSpeaker(speaker.clone()))?;
                if style == TagStyle::Id {
                    Qualifier::Id(value)
                } else {
                    Qualifier::Cluster(value)
                }
            }
        };
        let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        match turns.last_mut() {
            Some(last) if last.tag.rel == rel => last.words.extend(words),
            _ => turns.push(Turn { tag: SpeakerTag { rel, qualifier }, words }),
        }
    }
    Ok(SaaDoc { turns })
}

/// JSONL record for the chunk manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkRecord {
    pub chunk_id: String,
    pub source_session: String,
    pub span_start_s: f64,
    pub span_end_s: f64,
    pub target_bucket_s: u32,
    pub turns: Vec<ChunkTurnRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkTurnRecord {
    pub speaker_id: String,
    pub text: String,
}

impl From<&Chunk> for ChunkRecord {
    fn from(c: &Chunk) -> Self {
        Self {
            chunk_id: c.chunk_id.clone(),
            source_session: c.source_session.clone(),
            span_start_s: c.span_start_s,
            span_end_s: c.span_end_s,
            target_bucket_s: c.target_bucket_s,
            turns: c
                .turns
                .iter()
                .map(|(speaker_id, text)| ChunkTurnRecord {
                    speaker_id: speaker_id.clone(),
                    text: text.clone(),
                })
                .collect(),
        }
    }
}

impl From<ChunkRecord> for Chunk {
    fn from(r: ChunkRecord) -> Self {
        Self {
            chunk_id: r.chunk_id,
            source_session: r.source_session,
            span_start_s: r.span_start_s,
            span_end_s: r.span_end_s,
            turns: r.turns.into_iter().map(|t| (t.speaker_id, t.text)).collect(),
            target_bucket_s: r.target_bucket_s,
        }
    }
}

/// Serialize chunks as JSONL with pinned key order and 3-decimal times.
pub fn serialize_chunk_manifest(chunks: &[Chunk]) -> String {
    let mut out = String::new();
    for c in chunks {
        let turns = serde_json::to_string(&ChunkRecord::from(c).turns).expect("turn serialization");
        writeln!(
            out,
            "{{\"chunk_id\":{},\"source_session\":{},\"span_start_s\":{:.3},\"span_end_s\":{:.3},\"target_bucket_s\":{},\"turns\":{}}}",
            json_str(&c.chunk_id),
            json_str(&c.source_session),
            c.span_start_s,
            c.span_end_s,
            c.target_bucket_s,
            turns
        )
        .unwrap();
    }
    out
}

/// Parse a chunk manifest produced by [`serialize_chunk_manifest`].
pub fn parse_chunk_manifest(content: &str) -> Result<Vec<Chunk>, ManifestError> {
    let mut chunks = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: ChunkRecord =
            serde_json::from_str(raw).map_err(|source| ManifestError::Json { line, source })?;
        chunks.push(rec.into());
    }
    Ok(chunks)
}

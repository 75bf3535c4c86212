//! Speaker-attributed transcript grammar.
//!
//! A document is a sequence of turns. Each turn opens with a header of one of
//! three forms, immediately followed by a colon, then the turn's words:
//!
//! ```text
//! [Speaker 1]: and it's filling up with a
//! [Speaker 2 ID 21794]: yeah
//! [Speaker 1 cluster 14]: thing
//! ```
//!
//! Headers are matched literally and case-sensitively. Words are whitespace
//! delimited; punctuation stays attached (normalization happens at scoring
//! time, see [`crate::align`]).

use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Optional absolute identity carried by a speaker tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Qualifier {
    /// Relative-only tag: `[Speaker 1]`.
    None,
    /// Personal identification number: `[Speaker 1 ID 13259]`.
    Id(u32),
    /// k-means cluster index: `[Speaker 1 cluster 14]`.
    Cluster(u32),
}

/// A turn header. `rel` is the conversation-relative speaker index, starting
/// at 1. `rel == 0` is reserved for the synthetic turn produced by lenient
/// parsing of untagged leading text; it cannot be rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpeakerTag {
    pub rel: u32,
    pub qualifier: Qualifier,
}

impl SpeakerTag {
    pub fn relative(rel: u32) -> Self {
        Self { rel, qualifier: Qualifier::None }
    }
}

impl fmt::Display for SpeakerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.qualifier {
            Qualifier::None => write!(f, "[Speaker {}]", self.rel),
            Qualifier::Id(pin) => write!(f, "[Speaker {} ID {}]", self.rel, pin),
            Qualifier::Cluster(idx) => write!(f, "[Speaker {} cluster {}]", self.rel, idx),
        }
    }
}

/// One tagged turn: a header plus its whitespace-split words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub tag: SpeakerTag,
    pub words: Vec<String>,
}

/// A parsed speaker-attributed document.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SaaDoc {
    pub turns: Vec<Turn>,
}

/// How strictly to treat text that deviates from the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Reject leading untagged text, malformed headers, and empty turn bodies.
    Strict,
    /// Recover: leading text becomes a synthetic `rel = 0` turn, malformed
    /// headers become plain words, empty turns are dropped. All recoveries
    /// are counted in [`ParseFlags`].
    Lenient,
}

/// Diagnostics accumulated by lenient parsing (and gap detection in both
/// modes).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseFlags {
    /// Untagged text preceded the first header (lenient only).
    pub leading_text: bool,
    /// The set of relative indices used is not `{1..m}`.
    pub index_gaps: bool,
    /// Headers with an empty body that were dropped (lenient only).
    pub empty_turns_dropped: usize,
    /// `[Speaker...` sequences that failed to parse and were kept as words
    /// (lenient only).
    pub malformed_headers_as_text: usize,
}

/// Parse result: the document plus recovery diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub doc: SaaDoc,
    pub flags: ParseFlags,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("untagged text before first speaker header at byte offset {offset}")]
    LeadingText { offset: usize },
    #[error("malformed speaker header at byte offset {offset}: {found:?}")]
    MalformedHeader { offset: usize, found: String },
    #[error("empty turn body for header at byte offset {offset}")]
    EmptyTurn { offset: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("turn {index} has synthetic relative index 0 and cannot be rendered")]
    SyntheticTurn { index: usize },
    #[error("turn {index} has no words")]
    EmptyTurn { index: usize },
}

fn header_regex() -> &'static Regex {
    use std::sync::OnceLock;
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\[Speaker ([0-9]+)(?: (ID|cluster) ([0-9]+))?\]:").expect("static regex")
    })
}

struct Header {
    tag: SpeakerTag,
    start: usize,
    body_start: usize,
}

/// Scan for well-formed headers. Returns headers plus the byte spans of
/// `[Speaker` occurrences that are not part of a valid header.
fn scan_headers(text: &str) -> (Vec<Header>, Vec<usize>) {
    let mut headers = Vec::new();
    for caps in header_regex().captures_iter(text) {
        let whole = caps.get(0).expect("match");
        let rel: u32 = match caps[1].parse() {
            Ok(r) => r,
            Err(_) => continue, // integer overflow: treat as malformed
        };
        if rel == 0 {
            continue; // rel must be >= 1; picked up as malformed below
        }
        let qualifier = match (caps.get(2), caps.get(3)) {
            (Some(kind), Some(num)) => match num.as_str().parse::<u32>() {
                Ok(n) if kind.as_str() == "ID" => Qualifier::Id(n),
                Ok(n) => Qualifier::Cluster(n),
                Err(_) => continue,
            },
            _ => Qualifier::None,
        };
        headers.push(Header {
            tag: SpeakerTag { rel, qualifier },
            start: whole.start(),
            body_start: whole.end(),
        });
    }
    let mut malformed = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find("[Speaker") {
        let at = from + pos;
        if !headers.iter().any(|h| h.start == at) {
            malformed.push(at);
        }
        from = at + 1;
    }
    (headers, malformed)
}

/// Parse SAA text into a document.
///
/// The accepted grammar is zero or more turns; a turn is a header followed by
/// all text up to the next header (or end of input), split on whitespace.
pub fn parse_saa(text: &str, mode: ParseMode) -> Result<ParseOutcome, ParseError> {
    let (headers, malformed) = scan_headers(text);
    let mut flags = ParseFlags::default();

    if mode == ParseMode::Strict {
        if let Some(&offset) = malformed.first() {
            let end = (offset + 24).min(text.len());
            let mut cut = end;
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            return Err(ParseError::MalformedHeader { offset, found: text[offset..cut].to_string() });
        }
    } else {
        flags.malformed_headers_as_text = malformed.len();
    }

    let mut turns = Vec::new();

    let leading_end = headers.first().map_or(text.len(), |h| h.start);
    let leading_words: Vec<String> =
        text[..leading_end].split_whitespace().map(str::to_string).collect();
    if !leading_words.is_empty() {
        match mode {
            ParseMode::Strict => {
                let offset = text
                    .char_indices()
                    .find(|(_, c)| !c.is_whitespace())
                    .map_or(0, |(i, _)| i);
                return Err(ParseError::LeadingText { offset });
            }
            ParseMode::Lenient => {
                flags.leading_text = true;
                turns.push(Turn {
                    tag: SpeakerTag { rel: 0, qualifier: Qualifier::None },
                    words: leading_words,
                });
            }
        }
    }

    for (i, header) in headers.iter().enumerate() {
        let body_end = headers.get(i + 1).map_or(text.len(), |next| next.start);
        let words: Vec<String> =
            text[header.body_start..body_end].split_whitespace().map(str::to_string).collect();
        if words.is_empty() {
            match mode {
                ParseMode::Strict => return Err(ParseError::EmptyTurn { offset: header.start }),
                ParseMode::Lenient => {
                    flags.empty_turns_dropped += 1;
                    continue;
                }
            }
        }
        turns.push(Turn { tag: header.tag, words });
    }

    let doc = SaaDoc { turns };
    flags.index_gaps = has_index_gaps(&doc);
    Ok(ParseOutcome { doc, flags })
}

/// Strict-mode parse returning just the document.
pub fn parse_strict(text: &str) -> Result<SaaDoc, ParseError> {
    parse_saa(text, ParseMode::Strict).map(|o| o.doc)
}

fn has_index_gaps(doc: &SaaDoc) -> bool {
    let rels: std::collections::BTreeSet<u32> =
        doc.turns.iter().map(|t| t.tag.rel).filter(|&r| r > 0).collect();
    match rels.iter().next_back() {
        Some(&max) => rels.len() as u32 != max,
        None => false,
    }
}

/// Render a document in canonical form: one line per turn, a single space
/// after the colon, words joined by single spaces, LF line separators.
pub fn render_saa(doc: &SaaDoc) -> Result<String, RenderError> {
    let mut lines = Vec::with_capacity(doc.turns.len());
    for (index, turn) in doc.turns.iter().enumerate() {
        if turn.tag.rel == 0 {
            return Err(RenderError::SyntheticTurn { index });
        }
        if turn.words.is_empty() {
            return Err(RenderError::EmptyTurn { index });
        }
        lines.push(format!("{}: {}", turn.tag, turn.words.join(" ")));
    }
    Ok(lines.join("\n"))
}

/// Flatten a document into its `(word, relative speaker)` stream, the unit
/// of attribution that WDER counts over.
///
/// Callers must resolve synthetic `rel = 0` turns first; see
/// [`crate::align::score_pair`], which rejects them.
pub fn word_speaker_pairs(doc: &SaaDoc) -> Vec<(String, u32)> {
    doc.turns
        .iter()
        .flat_map(|t| t.words.iter().map(move |w| (w.clone(), t.tag.rel)))
        .collect()
}

/// Word stream with attribution dropped; feeds plain WER.
pub fn strip_tags(doc: &SaaDoc) -> Vec<String> {
    doc.turns.iter().flat_map(|t| t.words.iter().cloned()).collect()
}

/// Optional pre-pass for model output whose headers deviate in case or
/// spacing (e.g. `[ speaker 1 ] :`). Rewrites recoverable variants to the
/// canonical form so they parse. Off by default everywhere; enable explicitly.
pub fn normalize_headers(text: &str) -> String {
    use std::sync::OnceLock;
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)\[\s*speaker\s+([0-9]+)(?:\s+(id|cluster)\s+([0-9]+))?\s*\]\s*:")
            .expect("static regex")
    });
    re.replace_all(text, |caps: &regex::Captures<'_>| {
        let rel = &caps[1];
        match (caps.get(2), caps.get(3)) {
            (Some(kind), Some(num)) if kind.as_str().eq_ignore_ascii_case("id") => {
                format!("[Speaker {} ID {}]:", rel, num.as_str())
            }
            (Some(_), Some(num)) => format!("[Speaker {} cluster {}]:", rel, num.as_str()),
            _ => format!("[Speaker {}]:", rel),
        }
    })
    .into_owned()
}

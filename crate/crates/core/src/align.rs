//! Word-level scoring: edit alignment, optimal speaker-label assignment, and
//! WER / WDER.
//!
//! WDER is the fraction of *matched* words (aligned as correct or
//! substituted) attributed to the wrong speaker, after choosing the
//! hypothesis-to-reference speaker mapping that maximizes agreement.
//! Insertions and deletions are excluded from the WDER denominator; they
//! count toward WER only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tags::{word_speaker_pairs, SaaDoc};

/// Text normalization applied to both sides before alignment.
///
/// Normalization is deterministic and idempotent; words emptied by it are
/// dropped from both the word stream and the word-speaker stream so the two
/// stay index-aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormConfig {
    /// Unicode lowercasing.
    pub lowercase: bool,
    /// Strip leading/trailing non-alphanumeric characters; internal
    /// apostrophes (and any other internal characters) survive.
    pub strip_punct: bool,
    /// Split tokens containing whitespace and drop empties.
    pub collapse_ws: bool,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self { lowercase: true, strip_punct: true, collapse_ws: true }
    }
}

impl NormConfig {
    /// Identity transform; used when scoring must see tokens verbatim.
    pub fn none() -> Self {
        Self { lowercase: false, strip_punct: false, collapse_ws: false }
    }
}

fn normalize_word(word: &str, cfg: &NormConfig) -> Vec<String> {
    let mut w = word.to_string();
    if cfg.lowercase {
        w = w.to_lowercase();
    }
    if cfg.strip_punct {
        w = w.trim_matches(|c: char| !c.is_alphanumeric()).to_string();
    }
    if cfg.collapse_ws {
        return w.split_whitespace().map(str::to_string).collect();
    }
    if w.is_empty() {
        Vec::new()
    } else {
        vec![w]
    }
}

/// Normalize a word list. Words emptied by the transform are dropped.
pub fn normalize(words: &[String], cfg: &NormConfig) -> Vec<String> {
    words.iter().flat_map(|w| normalize_word(w, cfg)).collect()
}

/// Normalize a `(word, speaker)` stream, dropping and splitting entries
/// exactly as [`normalize`] does so both streams stay consistent.
pub fn normalize_pairs(pairs: &[(String, u32)], cfg: &NormConfig) -> Vec<(String, u32)> {
    pairs
        .iter()
        .flat_map(|(w, rel)| normalize_word(w, cfg).into_iter().map(move |w| (w, *rel)))
        .collect()
}

/// One step of an edit alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignOp {
    Correct { ref_idx: usize, hyp_idx: usize },
    Substitute { ref_idx: usize, hyp_idx: usize },
    Delete { ref_idx: usize },
    Insert { hyp_idx: usize },
}

/// A minimum-edit-distance alignment between a reference and a hypothesis
/// word sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
}

impl Alignment {
    pub fn correct(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, AlignOp::Correct { .. })).count()
    }
    pub fn substitutions(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, AlignOp::Substitute { .. })).count()
    }
    pub fn deletions(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, AlignOp::Delete { .. })).count()
    }
    pub fn insertions(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, AlignOp::Insert { .. })).count()
    }
    /// Edit cost: substitutions + deletions + insertions.
    pub fn distance(&self) -> usize {
        self.substitutions() + self.deletions() + self.insertions()
    }
}

/// Align two word sequences with unit costs and a pinned deterministic
/// backtrace: at equal cost, diagonal (correct/substitute) beats delete,
/// which beats insert. The tie-break is part of the scoring contract —
/// WDER can depend on which minimum-cost alignment is chosen.
pub fn align_words<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Alignment {
    let n = reference.len();
    let m = hypothesis.len();
    let width = m + 1;
    let mut dp = vec![0u32; (n + 1) * width];
    for j in 0..=m {
        dp[j] = j as u32;
    }
    for i in 1..=n {
        dp[i * width] = i as u32;
        for j in 1..=m {
            let sub_cost =
                if reference[i - 1].as_ref() == hypothesis[j - 1].as_ref() { 0 } else { 1 };
            let diag = dp[(i - 1) * width + j - 1] + sub_cost;
            let del = dp[(i - 1) * width + j] + 1;
            let ins = dp[i * width + j - 1] + 1;
            dp[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let equal = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            let sub_cost = if equal { 0 } else { 1 };
            if dp[(i - 1) * width + j - 1] + sub_cost == here {
                ops.push(if equal {
                    AlignOp::Correct { ref_idx: i - 1, hyp_idx: j - 1 }
                } else {
                    AlignOp::Substitute { ref_idx: i - 1, hyp_idx: j - 1 }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * width + j] + 1 == here {
            ops.push(AlignOp::Delete { ref_idx: i - 1 });
            i -= 1;
            continue;
        }
        ops.push(AlignOp::Insert { hyp_idx: j - 1 });
        j -= 1;
    }
    ops.reverse();
    Alignment { ops }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("reference is empty after normalization")]
    EmptyReference,
    #[error("document contains a synthetic rel=0 turn; resolve it before scoring")]
    SyntheticTurn,
    #[error("alignment does not cover the documents: {0}")]
    DimensionMismatch(String),
    #[error("matrix dimension {0} exceeds brute-force limit 8")]
    BruteForceLimit(usize),
}

/// Per-speaker agreement counts over matched words.
///
/// `counts[r][h]` is the number of correct-or-substituted aligned word pairs
/// whose reference word belongs to reference speaker `ref_rels[r]` and whose
/// hypothesis word belongs to hypothesis speaker `hyp_rels[h]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementMatrix {
    pub ref_rels: Vec<u32>,
    pub hyp_rels: Vec<u32>,
    pub counts: Vec<Vec<u64>>,
}

impl AgreementMatrix {
    pub fn total_matched(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Build the agreement matrix from an alignment computed on the stripped
/// word streams of the same two documents under the same normalization.
pub fn agreement_matrix(
    ref_pairs: &[(String, u32)],
    hyp_pairs: &[(String, u32)],
    alignment: &Alignment,
) -> Result<AgreementMatrix, ScoreError> {
    let mut ref_rels: Vec<u32> = ref_pairs.iter().map(|(_, r)| *r).collect();
    ref_rels.sort_unstable();
    ref_rels.dedup();
    let mut hyp_rels: Vec<u32> = hyp_pairs.iter().map(|(_, r)| *r).collect();
    hyp_rels.sort_unstable();
    hyp_rels.dedup();

    let row_of: BTreeMap<u32, usize> = ref_rels.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let col_of: BTreeMap<u32, usize> = hyp_rels.iter().enumerate().map(|(i, &h)| (h, i)).collect();

    let mut counts = vec![vec![0u64; hyp_rels.len()]; ref_rels.len()];
    for op in &alignment.ops {
        let (ref_idx, hyp_idx) = match op {
            AlignOp::Correct { ref_idx, hyp_idx } | AlignOp::Substitute { ref_idx, hyp_idx } => {
                (*ref_idx, *hyp_idx)
            }
            _ => continue,
        };
        let r = ref_pairs
            .get(ref_idx)
            .ok_or_else(|| ScoreError::DimensionMismatch(format!("ref index {ref_idx}")))?
            .1;
        let h = hyp_pairs
            .get(hyp_idx)
            .ok_or_else(|| ScoreError::DimensionMismatch(format!("hyp index {hyp_idx}")))?
            .1;
        counts[row_of[&r]][col_of[&h]] += 1;
    }
    Ok(AgreementMatrix { ref_rels, hyp_rels, counts })
}

/// A partial injective map from hypothesis speaker labels to reference
/// speaker labels, keyed by the relative indices used in each document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerMapping {
    pub pairs: BTreeMap<u32, u32>,
}

impl SpeakerMapping {
    /// Total agreement achieved by this mapping on `m`.
    pub fn agreement(&self, m: &AgreementMatrix) -> u64 {
        let mut total = 0;
        for (h, col) in m.hyp_rels.iter().enumerate() {
            if let Some(r) = self.pairs.get(col) {
                if let Some(row) = m.ref_rels.iter().position(|x| x == r) {
                    total += m.counts[row][h];
                }
            }
        }
        total
    }
}

/// Matched words attributed to the wrong speaker under `mapping`: a matched
/// word is an error when its hypothesis speaker is unmapped or maps to a
/// reference speaker other than the true one.
pub fn speaker_error_count(m: &AgreementMatrix, mapping: &SpeakerMapping) -> u64 {
    m.total_matched() - mapping.agreement(m)
}

/// Maximum-agreement assignment on a padded square matrix, solved with the
/// O(n^3) Hungarian algorithm over negated counts. Returns only the optimum
/// value; the lexicographic refinement in [`optimal_mapping`] reconstructs
/// the assignment.
fn max_agreement(counts: &[Vec<u64>], skip_rows: &[bool], skip_cols: &[bool]) -> u64 {
    let rows: Vec<usize> =
        (0..counts.len()).filter(|&r| !skip_rows.get(r).copied().unwrap_or(false)).collect();
    let cols: Vec<usize> = (0..counts.first().map_or(0, Vec::len))
        .filter(|&c| !skip_cols.get(c).copied().unwrap_or(false))
        .collect();
    if rows.is_empty() || cols.is_empty() {
        return 0;
    }
    let n = rows.len().max(cols.len());
    // Minimize negated agreement; pad with zeros.
    let cost = |i: usize, j: usize| -> i64 {
        match (rows.get(i), cols.get(j)) {
            (Some(&r), Some(&c)) => -(counts[r][c] as i64),
            _ => 0,
        }
    };

    // Jonker-Volgenant style potentials over a dense square matrix.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // column j -> row (1-based; 0 = free)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut total = 0i64;
    for j in 1..=n {
        if assigned_row[j] > 0 {
            total += cost(assigned_row[j] - 1, j - 1);
        }
    }
    (-total) as u64
}

/// One-to-one hypothesis-to-reference speaker assignment maximizing total
/// agreement. Hypothesis speakers beyond the reference speaker count stay
/// unmapped and contribute all their matched words to the speaker error.
///
/// Ties are broken lowest-index-first: among all maximizing assignments,
/// the one whose per-hypothesis-speaker choices (in ascending hypothesis
/// label order, preferring the smallest reference label, with "unmapped"
/// ordered last) is lexicographically least. Maximizing agreement minimizes
/// WDER because the matched-word denominator does not depend on the mapping.
pub fn optimal_mapping(m: &AgreementMatrix) -> SpeakerMapping {
    let n_ref = m.ref_rels.len();
    let n_hyp = m.hyp_rels.len();
    if n_ref == 0 || n_hyp == 0 {
        return SpeakerMapping::default();
    }

    let mut skip_rows = vec![false; n_ref];
    let mut skip_cols = vec![false; n_hyp];
    let optimum = max_agreement(&m.counts, &skip_rows, &skip_cols);

    let mut pairs = BTreeMap::new();
    let mut locked = 0u64;
    for h in 0..n_hyp {
        skip_cols[h] = true;
        let mut chosen: Option<usize> = None;
        for r in 0..n_ref {
            if skip_rows[r] {
                continue;
            }
            skip_rows[r] = true;
            let rest = max_agreement(&m.counts, &skip_rows, &skip_cols);
            if locked + m.counts[r][h] + rest == optimum {
                chosen = Some(r);
                break;
            }
            skip_rows[r] = false;
        }
        match chosen {
            Some(r) => {
                locked += m.counts[r][h];
                pairs.insert(m.hyp_rels[h], m.ref_rels[r]);
            }
            None => {
                // Leaving h unmapped must still reach the optimum; by
                // exhaustion of the row choices it does.
                debug_assert_eq!(locked + max_agreement(&m.counts, &skip_rows, &skip_cols), optimum);
            }
        }
    }
    SpeakerMapping { pairs }
}

/// Exhaustive-enumeration oracle for [`optimal_mapping`]: same objective and
/// tie-break, dimensions capped at 8.
pub fn brute_force_mapping(m: &AgreementMatrix) -> Result<SpeakerMapping, ScoreError> {
    let n_ref = m.ref_rels.len();
    let n_hyp = m.hyp_rels.len();
    let max_dim = n_ref.max(n_hyp);
    if max_dim > 8 {
        return Err(ScoreError::BruteForceLimit(max_dim));
    }
    if n_ref == 0 || n_hyp == 0 {
        return Ok(SpeakerMapping::default());
    }

    // Depth-first over hypothesis columns in ascending order, trying
    // reference rows ascending then "unmapped"; the first assignment found
    // at any given total is therefore the lexicographically least, so a
    // strictly-greater comparison keeps exactly the tie-break winner.
    struct Search<'a> {
        m: &'a AgreementMatrix,
        used: Vec<bool>,
        current: Vec<Option<usize>>,
        best_total: Option<u64>,
        best: Vec<Option<usize>>,
    }
    impl Search<'_> {
        fn go(&mut self, h: usize, total: u64) {
            if h == self.m.hyp_rels.len() {
                if self.best_total.map_or(true, |b| total > b) {
                    self.best_total = Some(total);
                    self.best = self.current.clone();
                }
                return;
            }
            for r in 0..self.m.ref_rels.len() {
                if self.used[r] {
                    continue;
                }
                self.used[r] = true;
                self.current[h] = Some(r);
                self.go(h + 1, total + self.m.counts[r][h]);
                self.used[r] = false;
            }
            self.current[h] = None;
            self.go(h + 1, total);
        }
    }
    let mut search = Search {
        m,
        used: vec![false; n_ref],
        current: vec![None; n_hyp],
        best_total: None,
        best: vec![None; n_hyp],
    };
    search.go(0, 0);

    let mut pairs = BTreeMap::new();
    for (h, r) in search.best.iter().enumerate() {
        if let Some(r) = r {
            pairs.insert(m.hyp_rels[h], m.ref_rels[*r]);
        }
    }
    Ok(SpeakerMapping { pairs })
}

/// Full score for one reference/hypothesis pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n_ref: usize,
    pub n_hyp: usize,
    pub correct: usize,
    pub sub: usize,
    pub del: usize,
    pub ins: usize,
    /// correct + sub: the WDER denominator.
    pub matched: usize,
    /// Matched words attributed to the wrong speaker under the optimal
    /// mapping.
    pub spk_err: u64,
    pub wer: f64,
    /// `None` when no words matched (WDER undefined); aggregation skips
    /// undefined values rather than treating them as zero.
    pub wder: Option<f64>,
    pub mapping: SpeakerMapping,
}

/// Word error rate: (substitutions + deletions + insertions) / reference
/// length. May exceed 1 with many insertions.
pub fn wer(sub: usize, del: usize, ins: usize, n_ref: usize) -> Result<f64, ScoreError> {
    if n_ref == 0 {
        return Err(ScoreError::EmptyReference);
    }
    Ok((sub + del + ins) as f64 / n_ref as f64)
}

/// Score one pair: normalize both sides, align, build the agreement matrix,
/// choose the optimal speaker mapping, and count errors.
pub fn score_pair(
    reference: &SaaDoc,
    hypothesis: &SaaDoc,
    cfg: &NormConfig,
) -> Result<ScoreReport, ScoreError> {
    if reference.turns.iter().chain(&hypothesis.turns).any(|t| t.tag.rel == 0) {
        return Err(ScoreError::SyntheticTurn);
    }
    let ref_pairs = normalize_pairs(&word_speaker_pairs(reference), cfg);
    let hyp_pairs = normalize_pairs(&word_speaker_pairs(hypothesis), cfg);
    score_pair_streams(&ref_pairs, &hyp_pairs)
}

/// Score pre-normalized `(word, speaker)` streams.
pub fn score_pair_streams(
    ref_pairs: &[(String, u32)],
    hyp_pairs: &[(String, u32)],
) -> Result<ScoreReport, ScoreError> {
    if ref_pairs.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let ref_words: Vec<&str> = ref_pairs.iter().map(|(w, _)| w.as_str()).collect();
    let hyp_words: Vec<&str> = hyp_pairs.iter().map(|(w, _)| w.as_str()).collect();
    let alignment = align_words(&ref_words, &hyp_words);
    let matrix = agreement_matrix(ref_pairs, hyp_pairs, &alignment)?;
    let mapping = optimal_mapping(&matrix);
    let matched = alignment.correct() + alignment.substitutions();
    debug_assert_eq!(matched as u64, matrix.total_matched());
    let spk_err = speaker_error_count(&matrix, &mapping);
    let wder = if matched > 0 { Some(spk_err as f64 / matched as f64) } else { None };
    Ok(ScoreReport {
        n_ref: ref_pairs.len(),
        n_hyp: hyp_pairs.len(),
        correct: alignment.correct(),
        sub: alignment.substitutions(),
        del: alignment.deletions(),
        ins: alignment.insertions(),
        matched,
        spk_err,
        wer: wer(alignment.substitutions(), alignment.deletions(), alignment.insertions(), ref_pairs.len())?,
        wder,
        mapping,
    })
}

/// Score many pairs. With the `parallel` feature the pairs fan out across
/// the rayon pool; output order always matches input order, so results are
/// identical either way.
pub fn score_pairs(
    pairs: &[(SaaDoc, SaaDoc)],
    cfg: &NormConfig,
) -> Vec<Result<ScoreReport, ScoreError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pairs.par_iter().map(|(r, h)| score_pair(r, h, cfg)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        score_pairs_seq(pairs, cfg)
    }
}

/// Sequential counterpart of [`score_pairs`]; kept unconditionally for the
/// benchmark suite and for callers that need to stay off the thread pool.
pub fn score_pairs_seq(
    pairs: &[(SaaDoc, SaaDoc)],
    cfg: &NormConfig,
) -> Vec<Result<ScoreReport, ScoreError>> {
    pairs.iter().map(|(r, h)| score_pair(r, h, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tags::parse_strict;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn normalize_applies_all_flags() {
        let cfg = NormConfig::default();
        assert_eq!(normalize(&words("Hello, it's"), &cfg), vec!["hello", "it's"]);
        assert_eq!(normalize(&vec!["...".to_string()], &cfg), Vec::<String>::new());
        let once = normalize(&words("Hello, WORLD'S end."), &cfg);
        let twice = normalize(&once, &cfg);
        assert_eq!(once, twice);
    }

    #[test]
    fn normalize_none_is_identity() {
        let cfg = NormConfig::none();
        assert_eq!(normalize(&words("Hello, IT'S ..."), &cfg), words("Hello, IT'S ..."));
    }

    #[test]
    fn aligns_single_substitution() {
        let al = align_words(&words("a b c"), &words("a x c"));
        assert_eq!(al.distance(), 1);
        assert_eq!(
            al.ops,
            vec![
                AlignOp::Correct { ref_idx: 0, hyp_idx: 0 },
                AlignOp::Substitute { ref_idx: 1, hyp_idx: 1 },
                AlignOp::Correct { ref_idx: 2, hyp_idx: 2 },
            ]
        );
    }

    #[test]
    fn aligns_deletion_and_insertion() {
        let al = align_words(&words("a b"), &words("a"));
        assert_eq!(
            al.ops,
            vec![AlignOp::Correct { ref_idx: 0, hyp_idx: 0 }, AlignOp::Delete { ref_idx: 1 }]
        );
        let al = align_words::<String>(&[], &words("a"));
        assert_eq!(al.ops, vec![AlignOp::Insert { hyp_idx: 0 }]);
        assert_eq!(al.distance(), 1);
    }

    #[test]
    fn alignment_count_identities_hold() {
        let r = words("the cat sat on the mat");
        let h = words("the cat sit on mat today");
        let al = align_words(&r, &h);
        assert_eq!(al.correct() + al.substitutions() + al.deletions(), r.len());
        assert_eq!(al.correct() + al.substitutions() + al.insertions(), h.len());
        // indices strictly increasing on each side
        let ref_idxs: Vec<usize> = al
            .ops
            .iter()
            .filter_map(|o| match o {
                AlignOp::Correct { ref_idx, .. }
                | AlignOp::Substitute { ref_idx, .. }
                | AlignOp::Delete { ref_idx } => Some(*ref_idx),
                _ => None,
            })
            .collect();
        assert!(ref_idxs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(1, 0, 0, 3).unwrap(), 1.0 / 3.0);
        assert_eq!(wer(0, 0, 0, 5).unwrap(), 0.0);
        // ref [a], hyp [x, y]: 1 substitution + 1 insertion over 1 ref word
        let al = align_words(&words("a"), &words("x y"));
        assert_eq!(al.substitutions() + al.insertions(), 2);
        assert_eq!(wer(al.substitutions(), al.deletions(), al.insertions(), 1).unwrap(), 2.0);
        assert_eq!(wer(0, 0, 0, 0), Err(ScoreError::EmptyReference));
    }

    fn matrix_for(ref_text: &str, hyp_text: &str) -> AgreementMatrix {
        let r = parse_strict(ref_text).unwrap();
        let h = parse_strict(hyp_text).unwrap();
        let cfg = NormConfig::none();
        let rp = normalize_pairs(&word_speaker_pairs(&r), &cfg);
        let hp = normalize_pairs(&word_speaker_pairs(&h), &cfg);
        let rw: Vec<&str> = rp.iter().map(|(w, _)| w.as_str()).collect();
        let hw: Vec<&str> = hp.iter().map(|(w, _)| w.as_str()).collect();
        let al = align_words(&rw, &hw);
        agreement_matrix(&rp, &hp, &al).unwrap()
    }

    #[test]
    fn agreement_matrix_counts_matched_words() {
        // ref: speaker1 says a b, speaker2 says c
        // hyp: speaker1 says a, speaker2 says b c  (all words correct)
        let m = matrix_for("[Speaker 1]: a b\n[Speaker 2]: c", "[Speaker 1]: a\n[Speaker 2]: b c");
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 1]]);
    }

    #[test]
    fn identical_docs_give_diagonal_matrix() {
        let text = "[Speaker 1]: a b\n[Speaker 2]: c d e";
        let m = matrix_for(text, text);
        assert_eq!(m.counts, vec![vec![2, 0], vec![0, 3]]);
    }

    #[test]
    fn swapped_labels_give_anti_diagonal_matrix() {
        let m = matrix_for("[Speaker 1]: a b\n[Speaker 2]: c", "[Speaker 2]: a b\n[Speaker 1]: c");
        assert_eq!(m.counts, vec![vec![0, 2], vec![1, 0]]);
    }

    fn mat(counts: Vec<Vec<u64>>) -> AgreementMatrix {
        let rows = counts.len() as u32;
        let cols = counts.first().map_or(0, Vec::len) as u32;
        AgreementMatrix {
            ref_rels: (1..=rows).collect(),
            hyp_rels: (1..=cols).collect(),
            counts,
        }
    }

    #[test]
    fn optimal_mapping_matches_hand_derived_cases() {
        // brute force over the 2 bijections of a 2x2: identity wins with 2.
        let m = mat(vec![vec![1, 1], vec![0, 1]]);
        let opt = optimal_mapping(&m);
        assert_eq!(opt.pairs, BTreeMap::from([(1, 1), (2, 2)]));
        assert_eq!(opt.agreement(&m), 2);
        assert_eq!(brute_force_mapping(&m).unwrap(), opt);

        // anti-diagonal: swap captures everything
        let m = mat(vec![vec![0, 5], vec![7, 0]]);
        let opt = optimal_mapping(&m);
        assert_eq!(opt.pairs, BTreeMap::from([(1, 2), (2, 1)]));
        assert_eq!(opt.agreement(&m), 12);
    }

    #[test]
    fn rectangular_matrix_leaves_extra_hyp_speakers_unmapped() {
        // one ref speaker, three hyp speakers: best single column mapped
        let m = mat(vec![vec![2, 5, 3]]);
        let opt = optimal_mapping(&m);
        assert_eq!(opt.pairs, BTreeMap::from([(2, 1)]));
        assert_eq!(speaker_error_count(&m, &opt), 5);
        assert_eq!(brute_force_mapping(&m).unwrap(), opt);
    }

    #[test]
    fn zero_matrix_tie_breaks_to_identity_order() {
        let m = mat(vec![vec![0, 0], vec![0, 0]]);
        let opt = optimal_mapping(&m);
        assert_eq!(opt.pairs, BTreeMap::from([(1, 1), (2, 2)]));
        assert_eq!(brute_force_mapping(&m).unwrap(), opt);
    }

    #[test]
    fn empty_matrix_maps_nothing() {
        let m = AgreementMatrix { ref_rels: vec![], hyp_rels: vec![], counts: vec![] };
        assert_eq!(optimal_mapping(&m).pairs.len(), 0);
        assert_eq!(brute_force_mapping(&m).unwrap().pairs.len(), 0);
    }

    #[test]
    fn brute_force_rejects_large_matrices() {
        let m = mat(vec![vec![0; 9]; 9]);
        assert_eq!(brute_force_mapping(&m), Err(ScoreError::BruteForceLimit(9)));
    }

    #[test]
    fn score_identical_pair_is_perfect() {
        let d = parse_strict("[Speaker 1]: a b\n[Speaker 2]: c").unwrap();
        let report = score_pair(&d, &d, &NormConfig::default()).unwrap();
        assert_eq!(report.wer, 0.0);
        assert_eq!(report.wder, Some(0.0));
        assert_eq!(report.matched, 3);
    }

    #[test]
    fn score_is_invariant_to_bijective_relabeling() {
        let r = parse_strict("[Speaker 1]: a b\n[Speaker 2]: c").unwrap();
        let h = parse_strict("[Speaker 2]: a b\n[Speaker 1]: c").unwrap();
        let report = score_pair(&r, &h, &NormConfig::default()).unwrap();
        assert_eq!(report.wder, Some(0.0));
        assert_eq!(report.wer, 0.0);
    }

    #[test]
    fn score_merged_speakers_counts_attribution_errors() {
        // hyp collapses both speakers into one: best mapping keeps speaker 1,
        // and speaker 2's single matched word becomes the error (brute force
        // over the two candidate mappings agrees).
        let r = parse_strict("[Speaker 1]: a b\n[Speaker 2]: c").unwrap();
        let h = parse_strict("[Speaker 1]: a b c").unwrap();
        let report = score_pair(&r, &h, &NormConfig::default()).unwrap();
        assert_eq!(report.matched, 3);
        assert_eq!(report.spk_err, 1);
        assert_eq!(report.wder, Some(1.0 / 3.0));
    }

    #[test]
    fn score_with_no_matches_reports_undefined_wder() {
        let r = parse_strict("[Speaker 1]: a").unwrap();
        let h = SaaDoc::default();
        let report = score_pair(&r, &h, &NormConfig::default()).unwrap();
        assert_eq!(report.matched, 0);
        assert_eq!(report.wder, None);
        assert_eq!(report.wer, 1.0);
    }

    #[test]
    fn score_rejects_empty_reference_and_synthetic_turns() {
        let r = parse_strict("[Speaker 1]: ...").unwrap();
        let h = parse_strict("[Speaker 1]: a").unwrap();
        assert_eq!(
            score_pair(&r, &h, &NormConfig::default()),
            Err(ScoreError::EmptyReference)
        );
        let lenient = crate::tags::parse_saa("lead [Speaker 1]: a", crate::tags::ParseMode::Lenient)
            .unwrap()
            .doc;
        assert_eq!(
            score_pair(&h, &lenient, &NormConfig::default()),
            Err(ScoreError::SyntheticTurn)
        );
    }

    #[test]
    fn wer_ignores_speaker_tags() {
        let r = parse_strict("[Speaker 1]: a b\n[Speaker 2]: c d").unwrap();
        let h = parse_strict("[Speaker 2]: a x\n[Speaker 1]: c d e").unwrap();
        let cfg = NormConfig::default();
        let report = score_pair(&r, &h, &cfg).unwrap();
        let rw = normalize(&crate::tags::strip_tags(&r), &cfg);
        let hw = normalize(&crate::tags::strip_tags(&h), &cfg);
        let al = align_words(&rw, &hw);
        assert_eq!(report.wer, al.distance() as f64 / rw.len() as f64);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Plain recursive minimum over all alignments, budget-bounded so it
        /// stays independent of the DP table.
        fn exhaustive_distance(a: &[String], b: &[String]) -> usize {
            fn feasible(a: &[String], b: &[String], budget: usize) -> bool {
                let gap = a.len().abs_diff(b.len());
                if budget < gap {
                    return false;
                }
                match (a.first(), b.first()) {
                    (None, None) => true,
                    (None, Some(_)) => b.len() <= budget,
                    (Some(_), None) => a.len() <= budget,
                    (Some(x), Some(y)) => {
                        if x == y && feasible(&a[1..], &b[1..], budget) {
                            return true;
                        }
                        if budget == 0 {
                            return false;
                        }
                        (x != y && feasible(&a[1..], &b[1..], budget - 1))
                            || feasible(&a[1..], b, budget - 1)
                            || feasible(a, &b[1..], budget - 1)
                    }
                }
            }
            (0..=a.len() + b.len())
                .find(|&budget| feasible(a, b, budget))
                .expect("some budget always feasible")
        }

        fn arb_seq() -> impl Strategy<Value = Vec<String>> {
            proptest::collection::vec((0u8..4).prop_map(|c| format!("w{c}")), 0..10)
        }

        proptest! {
            #[test]
            fn alignment_cost_is_minimal(a in arb_seq(), b in arb_seq()) {
                let al = align_words(&a, &b);
                prop_assert_eq!(al.distance(), exhaustive_distance(&a, &b));
            }

            #[test]
            fn alignment_covers_both_sequences(a in arb_seq(), b in arb_seq()) {
                let al = align_words(&a, &b);
                prop_assert_eq!(al.correct() + al.substitutions() + al.deletions(), a.len());
                prop_assert_eq!(al.correct() + al.substitutions() + al.insertions(), b.len());
            }

            #[test]
            fn mapping_matches_brute_force(counts in proptest::collection::vec(
                proptest::collection::vec(0u64..20, 1..6), 1..6)
            ) {
                let cols = counts[0].len();
                let counts: Vec<Vec<u64>> = counts
                    .into_iter()
                    .map(|mut row| { row.resize(cols, 0); row })
                    .collect();
                let m = AgreementMatrix {
                    ref_rels: (1..=counts.len() as u32).collect(),
                    hyp_rels: (1..=cols as u32).collect(),
                    counts,
                };
                let opt = optimal_mapping(&m);
                let brute = brute_force_mapping(&m).unwrap();
                prop_assert_eq!(opt.agreement(&m), brute.agreement(&m));
                prop_assert_eq!(opt, brute);
            }

            #[test]
            fn optimal_beats_identity_mapping(counts in proptest::collection::vec(
                proptest::collection::vec(0u64..20, 1..5), 1..5)
            ) {
                let cols = counts[0].len();
                let counts: Vec<Vec<u64>> = counts
                    .into_iter()
                    .map(|mut row| { row.resize(cols, 0); row })
                    .collect();
                let m = AgreementMatrix {
                    ref_rels: (1..=counts.len() as u32).collect(),
                    hyp_rels: (1..=cols as u32).collect(),
                    counts,
                };
                let identity = SpeakerMapping {
                    pairs: (1..=counts.len().min(cols) as u32).map(|i| (i, i)).collect(),
                };
                let opt = optimal_mapping(&m);
                prop_assert!(speaker_error_count(&m, &opt) <= speaker_error_count(&m, &identity));
            }

            #[test]
            fn normalization_is_idempotent(ws in proptest::collection::vec(".{0,12}", 0..8)) {
                let cfg = NormConfig::default();
                let once = normalize(&ws, &cfg);
                prop_assert_eq!(normalize(&once, &cfg), once);
            }
        }
    }
}

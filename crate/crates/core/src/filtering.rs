//! Transcript normalization, word error rate and segment filters.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::language::Language;

pub const DEFAULT_WER_MAX: f64 = 0.6;
pub const DEFAULT_KEEP_FRACTION: f64 = 0.8;
pub const DEFAULT_MIN_DURATION_S: f64 = 3.0;
pub const DEFAULT_MAX_DURATION_S: f64 = 15.0;

/// Lowercased word tokens with punctuation removed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Builds a sequence from pre-split tokens, rejecting empty or spaced ones.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens.iter().find(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(Error::InvalidArgument(format!("invalid token {bad:?}")));
        }
        Ok(Self(tokens))
    }

    /// Splits on whitespace without any normalization.
    pub fn from_whitespace(text: &str) -> Self {
        Self(text.split_whitespace().map(str::to_owned).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}')
}

/// NFKC, lowercase, strip punctuation (keeping intra-word apostrophes), split.
///
/// Diacritics survive normalization, so Spanish `pasó` stays `pasó`. The
/// language argument is accepted for symmetry with the rest of the pipeline;
/// both supported languages share these rules.
pub fn normalize_text(text: &str, _language: Language) -> TokenSequence {
    let lowered: Vec<char> = text.nfkc().flat_map(char::to_lowercase).collect();
    let mut cleaned = String::with_capacity(lowered.len());
    for (i, &c) in lowered.iter().enumerate() {
        if c.is_alphanumeric() || c.is_whitespace() {
            cleaned.push(c);
        } else if is_apostrophe(c) {
            let prev = i.checked_sub(1).map(|j| lowered[j]);
            let next = lowered.get(i + 1);
            if prev.is_some_and(char::is_alphanumeric) && next.is_some_and(|n| n.is_alphanumeric()) {
                cleaned.push('\'');
            } else {
                cleaned.push(' ');
            }
        } else if unicode_normalization::char::is_combining_mark(c) {
            // A mark NFKC could not compose onto its base letter.
            cleaned.push(c);
        } else {
            cleaned.push(' ');
        }
    }
    TokenSequence::from_whitespace(&cleaned)
}

/// Token-level Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Edit distance divided by reference length.
pub fn wer(reference: &TokenSequence, hypothesis: &TokenSequence) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(edit_distance(reference.tokens(), hypothesis.tokens()) as f64 / reference.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub utterance_id: String,
    pub title_id: String,
    pub language: Language,
    pub start_ms: u64,
    pub end_ms: u64,
    pub subtitle_text: String,
    #[serde(default)]
    pub asr_text: Option<String>,
    #[serde(default)]
    pub wer: Option<f64>,
    pub duration_s: f64,
}

impl SegmentRecord {
    pub fn new(
        utterance_id: impl Into<String>,
        title_id: impl Into<String>,
        language: Language,
        start_ms: u64,
        end_ms: u64,
        subtitle_text: impl Into<String>,
    ) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            title_id: title_id.into(),
            language,
            start_ms,
            end_ms,
            subtitle_text: subtitle_text.into(),
            asr_text: None,
            wer: None,
            duration_s: (end_ms - start_ms) as f64 / 1000.0,
        }
    }

    /// Attaches a transcript and scores it against the subtitle text.
    pub fn with_transcript(mut self, asr_text: impl Into<String>) -> Result<Self> {
        let asr_text = asr_text.into();
        let reference = normalize_text(&self.subtitle_text, self.language);
        let hypothesis = normalize_text(&asr_text, self.language);
        self.wer = Some(wer(&reference, &hypothesis)?);
        self.asr_text = Some(asr_text);
        Ok(self)
    }
}

/// Drops segments above `wer_max`, then keeps the best `keep_fraction` of
/// the survivors ordered by (wer, utterance_id).
///
/// Returns `(kept, dropped)`; `kept` is in ranking order.
pub fn filter_by_wer(
    segments: Vec<SegmentRecord>,
    wer_max: f64,
    keep_fraction: f64,
) -> Result<(Vec<SegmentRecord>, Vec<SegmentRecord>)> {
    if let Some(s) = segments.iter().find(|s| s.wer.is_none()) {
        return Err(Error::MissingWer(s.utterance_id.clone()));
    }
    let (mut survivors, mut dropped): (Vec<_>, Vec<_>) =
        segments.into_iter().partition(|s| s.wer.expect("checked") <= wer_max);
    survivors.sort_by(|a, b| {
        a.wer
            .expect("checked")
            .total_cmp(&b.wer.expect("checked"))
            .then_with(|| a.utterance_id.cmp(&b.utterance_id))
    });
    let keep = (keep_fraction * survivors.len() as f64).floor() as usize;
    dropped.extend(survivors.split_off(keep.min(survivors.len())));
    Ok((survivors, dropped))
}

/// Keeps segments with `min_s <= duration_s <= max_s`.
pub fn filter_by_duration(
    segments: Vec<SegmentRecord>,
    min_s: f64,
    max_s: f64,
) -> (Vec<SegmentRecord>, Vec<SegmentRecord>) {
    segments
        .into_iter()
        .partition(|s| s.duration_s >= min_s && s.duration_s <= max_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> TokenSequence {
        TokenSequence::new(s.iter().map(|t| t.to_string()).collect()).unwrap()
    }

    fn seg(id: &str, wer: f64) -> SegmentRecord {
        let mut s = SegmentRecord::new(id, "t", Language::En, 0, 5000, "x");
        s.asr_text = Some("x".into());
        s.wer = Some(wer);
        s
    }

    fn seg_ms(id: &str, dur_ms: u64) -> SegmentRecord {
        SegmentRecord::new(id, "t", Language::En, 1000, 1000 + dur_ms, "x")
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_text("Hello, WORLD!", Language::En), toks(&["hello", "world"]));
        assert_eq!(normalize_text("don't stop", Language::En), toks(&["don't", "stop"]));
        assert_eq!(normalize_text("¿Qué pasó?", Language::Es), toks(&["qué", "pasó"]));
    }

    #[test]
    fn normalization_edge_cases() {
        assert_eq!(normalize_text("'quoted' rock'n'roll", Language::En), toks(&["quoted", "rock'n'roll"]));
        assert_eq!(normalize_text("It\u{2019}s", Language::En), toks(&["it's"]));
        // Decomposed e + combining acute composes under NFKC.
        assert_eq!(normalize_text("cafe\u{301}", Language::Es), toks(&["café"]));
        // Full-width compatibility forms fold to ASCII.
        assert_eq!(normalize_text("ＡＢＣ", Language::En), toks(&["abc"]));
        assert!(normalize_text(" ... ", Language::En).is_empty());
    }

    #[test]
    fn token_sequence_rejects_bad_tokens() {
        assert!(TokenSequence::new(vec!["".into()]).is_err());
        assert!(TokenSequence::new(vec!["a b".into()]).is_err());
    }

    #[test]
    fn wer_examples() {
        let r = toks(&["a", "b", "c"]);
        assert_eq!(wer(&r, &r).unwrap(), 0.0);
        assert_eq!(wer(&r, &toks(&[])).unwrap(), 1.0);
        let w = wer(&r, &toks(&["a", "x", "c", "d"])).unwrap();
        assert!((w - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(wer(&toks(&[]), &r), Err(Error::EmptyReference)));
    }

    #[test]
    fn transcript_attachment_scores_normalized_text() {
        let s = SegmentRecord::new("u", "t", Language::En, 0, 4000, "Hello, there!")
            .with_transcript("hello there")
            .unwrap();
        assert_eq!(s.wer, Some(0.0));
        assert!((s.duration_s - 4.0).abs() < 1e-12);
    }

    #[test]
    fn wer_filter_drops_high_and_keeps_best_fraction() {
        let segs = vec![seg("a", 0.1), seg("b", 0.2), seg("c", 0.5), seg("d", 0.7), seg("e", 0.3)];
        let (kept, dropped) = filter_by_wer(segs, 0.6, 0.8).unwrap();
        let wers: Vec<f64> = kept.iter().map(|s| s.wer.unwrap()).collect();
        assert_eq!(wers, vec![0.1, 0.2, 0.3]);
        assert_eq!(dropped.len(), 2);
    }

    #[test]
    fn wer_filter_ties_break_by_id() {
        let segs = vec![seg("e", 0.0), seg("b", 0.0), seg("d", 0.0), seg("a", 0.0), seg("c", 0.0)];
        let (kept, _) = filter_by_wer(segs, 0.6, 0.8).unwrap();
        let ids: Vec<&str> = kept.iter().map(|s| s.utterance_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn wer_filter_edge_cases() {
        let (k, d) = filter_by_wer(vec![], 0.6, 0.8).unwrap();
        assert!(k.is_empty() && d.is_empty());
        let missing = SegmentRecord::new("m", "t", Language::En, 0, 1000, "x");
        assert!(matches!(filter_by_wer(vec![missing], 0.6, 0.8), Err(Error::MissingWer(id)) if id == "m"));
        // The threshold itself is kept.
        let (k, _) = filter_by_wer(vec![seg("a", 0.6)], 0.6, 1.0).unwrap();
        assert_eq!(k.len(), 1);
    }

    #[test]
    fn duration_boundaries_are_inclusive() {
        let segs = vec![seg_ms("a", 2999), seg_ms("b", 3000), seg_ms("c", 15_000), seg_ms("d", 15_001)];
        let (kept, dropped) = filter_by_duration(segs, 3.0, 15.0);
        let ids = |v: &[SegmentRecord]| v.iter().map(|s| s.utterance_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&kept), vec!["b", "c"]);
        assert_eq!(ids(&dropped), vec!["a", "d"]);
        let (k, d) = filter_by_duration(vec![], 3.0, 15.0);
        assert!(k.is_empty() && d.is_empty());
    }
}

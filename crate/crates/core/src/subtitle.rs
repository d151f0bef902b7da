//! SubRip parsing and same-speaker cue merging.
//!
//! Cue text is cleaned on the way in: markup tags are removed, dialogue
//! hyphens are stripped, continuation lines are joined with a single space and
//! a leading `NAME:` prefix (one to three uppercase words) is lifted into
//! [`SubtitleCue::speaker_hint`].

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::language::Language;

pub const DEFAULT_MAX_GAP_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtitleCue {
    pub index: u32,
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_hint: Option<String>,
}

impl SubtitleCue {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    fn ends_sentence(&self) -> bool {
        matches!(self.text.trim_end().chars().last(), Some('.' | '!' | '?'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueTrack {
    pub title_id: String,
    pub language: Language,
    pub cues: Vec<SubtitleCue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseWarning {
    /// Timing had `end <= start`; the cue was rejected.
    NonPositiveDuration { index: u32, offset: usize },
    /// Nothing left after tag and speaker stripping; the cue was dropped.
    EmptyText { index: u32, offset: usize },
    /// The cue starts before its predecessor ends. It is kept as-is.
    Overlap { index: u32, previous: u32 },
    /// Cue text trails off with an ellipsis, a possible sentence pause.
    TrailingEllipsis { index: u32 },
    /// Source indices were not strictly increasing in time order and were renumbered.
    Renumbered,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseWarning::NonPositiveDuration { index, offset } => {
                write!(f, "cue {index} at byte {offset}: end <= start, rejected")
            }
            ParseWarning::EmptyText { index, offset } => {
                write!(f, "cue {index} at byte {offset}: empty text, dropped")
            }
            ParseWarning::Overlap { index, previous } => {
                write!(f, "cue {index} overlaps cue {previous}")
            }
            ParseWarning::TrailingEllipsis { index } => {
                write!(f, "cue {index} ends with an ellipsis")
            }
            ParseWarning::Renumbered => f.write_str("cue indices renumbered"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSrt {
    pub track: CueTrack,
    pub warnings: Vec<ParseWarning>,
    /// Number of cue blocks found in the input, including rejected ones.
    pub blocks: usize,
}

impl ParsedSrt {
    /// Blocks that did not make it into the track.
    pub fn rejected(&self) -> usize {
        self.blocks - self.track.cues.len()
    }
}

/// Parses `HH:MM:SS,mmm` into milliseconds.
pub fn parse_timestamp(token: &str) -> Option<u64> {
    let (hms, millis) = token.split_once([',', '.'])?;
    let mut parts = hms.split(':');
    let (h, m, s) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || millis.len() != 3 {
        return None;
    }
    let digits = |s: &str, max_len: usize| -> Option<u64> {
        if s.is_empty() || s.len() > max_len || !s.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        s.parse().ok()
    };
    let h = digits(h, 3)?;
    let m = digits(m, 2)?;
    let s = digits(s, 2)?;
    let ms = digits(millis, 3)?;
    if m >= 60 || s >= 60 {
        return None;
    }
    Some(((h * 60 + m) * 60 + s) * 1000 + ms)
}

pub fn format_timestamp(ms: u64) -> String {
    let (h, rem) = (ms / 3_600_000, ms % 3_600_000);
    let (m, rem) = (rem / 60_000, rem % 60_000);
    let (s, millis) = (rem / 1000, rem % 1000);
    format!("{h:02}:{m:02}:{s:02},{millis:03}")
}

fn parse_timing_line(line: &str) -> Option<(u64, u64)> {
    let (start, end) = line.split_once("-->")?;
    Some((parse_timestamp(start.trim())?, parse_timestamp(end.trim())?))
}

struct Line<'a> {
    offset: usize,
    text: &'a str,
}

fn lines_with_offsets(text: &str, base: usize) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let trimmed = raw.trim_end_matches('\n').trim_end_matches('\r');
        out.push(Line {
            offset: base + offset,
            text: trimmed,
        });
        offset += raw.len();
    }
    out
}

/// Removes `<...>` and `{...}` tags. An unclosed bracket is kept literally.
fn strip_markup(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    while let Some(pos) = rest.find(['<', '{']) {
        let close = if rest.as_bytes()[pos] == b'<' { '>' } else { '}' };
        match rest[pos..].find(close) {
            Some(end) => {
                out.push_str(&rest[..pos]);
                rest = &rest[pos + end + 1..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out
}

fn is_speaker_word(word: &str) -> bool {
    word.chars().any(char::is_alphabetic)
        && word
            .chars()
            .all(|c| (c.is_alphabetic() && !c.is_lowercase()) || matches!(c, '.' | '\'' | '-' | '#') || c.is_ascii_digit())
}

/// Splits a leading `NAME:` / `FIRST LAST:` prefix off cue text.
fn split_speaker(text: &str) -> (Option<String>, &str) {
    let Some((prefix, rest)) = text.split_once(':') else {
        return (None, text);
    };
    let words: Vec<&str> = prefix.split_whitespace().collect();
    if words.is_empty() || words.len() > 3 || !words.iter().all(|w| is_speaker_word(w)) {
        return (None, text);
    }
    // "12:30" style clock times are not speaker names.
    if rest.starts_with(|c: char| c.is_ascii_digit()) {
        return (None, text);
    }
    (Some(words.join(" ").to_uppercase()), rest.trim())
}

fn clean_text(lines: &[Line<'_>]) -> (Option<String>, String) {
    let mut parts = Vec::new();
    for line in lines {
        let stripped = strip_markup(line.text);
        let mut t = stripped.trim();
        while let Some(r) = t.strip_prefix(['-', '\u{2013}', '\u{2014}']) {
            t = r.trim_start();
        }
        if !t.is_empty() {
            parts.push(t.to_owned());
        }
    }
    let joined = parts.join(" ");
    let joined = joined.split_whitespace().collect::<Vec<_>>().join(" ");
    let (hint, rest) = split_speaker(&joined);
    (hint, rest.to_owned())
}

/// Parses a SubRip document into a cue track.
///
/// Rejected and dropped cues are reported in [`ParsedSrt::warnings`]. Only a
/// structurally broken document (bad index or timing line, invalid UTF-8) is
/// an error.
pub fn parse_srt(raw: &[u8], title_id: &str, language: Language) -> Result<ParsedSrt> {
    let (raw, bom) = match raw.strip_prefix(b"\xEF\xBB\xBF") {
        Some(rest) => (rest, 3),
        None => (raw, 0),
    };
    let text = std::str::from_utf8(raw).map_err(|e| Error::SrtParse {
        offset: bom + e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let lines = lines_with_offsets(text, bom);

    let mut warnings = Vec::new();
    let mut cues = Vec::new();
    let mut blocks = 0;
    let mut i = 0;
    while i < lines.len() {
        if lines[i].text.trim().is_empty() {
            i += 1;
            continue;
        }
        let block_start = i;
        while i < lines.len() && !lines[i].text.trim().is_empty() {
            i += 1;
        }
        let block = &lines[block_start..i];
        blocks += 1;

        // The numeric counter line is optional in the wild; accept a block
        // that starts directly with its timing line.
        let (index, timing, body) = if block[0].text.contains("-->") {
            (blocks as u32, &block[0], &block[1..])
        } else {
            let idx_line = &block[0];
            let index: u32 = idx_line
                .text
                .trim()
                .trim_start_matches('\u{feff}')
                .parse()
                .map_err(|_| Error::SrtParse {
                    offset: idx_line.offset,
                    message: format!("expected cue index, found {:?}", idx_line.text),
                })?;
            let timing = block.get(1).ok_or_else(|| Error::SrtParse {
                offset: idx_line.offset,
                message: "cue block has no timing line".into(),
            })?;
            (index, timing, &block[2..])
        };
        let (start_ms, end_ms) = parse_timing_line(timing.text).ok_or_else(|| Error::SrtParse {
            offset: timing.offset,
            message: format!("malformed timing line {:?}", timing.text),
        })?;
        if end_ms <= start_ms {
            warnings.push(ParseWarning::NonPositiveDuration {
                index,
                offset: timing.offset,
            });
            continue;
        }
        let (speaker_hint, text) = clean_text(body);
        if text.is_empty() {
            warnings.push(ParseWarning::EmptyText {
                index,
                offset: timing.offset,
            });
            continue;
        }
        cues.push(SubtitleCue {
            index,
            start_ms,
            end_ms,
            text,
            speaker_hint,
        });
    }

    cues.sort_by_key(|c| c.start_ms);
    if cues.windows(2).any(|w| w[1].index <= w[0].index) {
        for (n, cue) in cues.iter_mut().enumerate() {
            cue.index = n as u32 + 1;
        }
        warnings.push(ParseWarning::Renumbered);
    }
    for w in cues.windows(2) {
        if w[1].start_ms < w[0].end_ms {
            warnings.push(ParseWarning::Overlap {
                index: w[1].index,
                previous: w[0].index,
            });
        }
    }
    for cue in &cues {
        let t = cue.text.trim_end();
        if t.ends_with("...") || t.ends_with('\u{2026}') {
            warnings.push(ParseWarning::TrailingEllipsis { index: cue.index });
        }
    }

    Ok(ParsedSrt {
        track: CueTrack {
            title_id: title_id.to_owned(),
            language,
            cues,
        },
        warnings,
        blocks,
    })
}

fn should_merge(prev: &SubtitleCue, next: &SubtitleCue, max_gap_ms: u64) -> bool {
    if next.start_ms < prev.end_ms || next.start_ms - prev.end_ms > max_gap_ms {
        return false;
    }
    match (&prev.speaker_hint, &next.speaker_hint) {
        (Some(a), Some(b)) => a == b,
        (None, None) => !prev.ends_sentence(),
        _ => false,
    }
}

/// Groups of consecutive cue positions that [`merge_cues`] fuses together.
pub fn merge_groups(track: &CueTrack, max_gap_ms: u64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut acc: Option<SubtitleCue> = None;
    for (pos, cue) in track.cues.iter().enumerate() {
        match acc.as_mut() {
            Some(cur) if should_merge(cur, cue, max_gap_ms) => {
                cur.end_ms = cue.end_ms;
                cur.text.push(' ');
                cur.text.push_str(&cue.text);
                groups.last_mut().expect("group open").push(pos);
            }
            _ => {
                acc = Some(cue.clone());
                groups.push(vec![pos]);
            }
        }
    }
    groups
}

/// Merges runs of adjacent cues spoken by the same speaker.
///
/// Two neighbours fuse when the gap between them is at most `max_gap_ms` and
/// either both carry the same speaker hint, or neither has a hint and the
/// first does not end a sentence. Overlapping cues never merge.
pub fn merge_cues(track: &CueTrack, max_gap_ms: u64) -> CueTrack {
    let cues = merge_groups(track, max_gap_ms)
        .into_iter()
        .map(|group| {
            let first = &track.cues[group[0]];
            let last = &track.cues[*group.last().expect("non-empty group")];
            SubtitleCue {
                index: first.index,
                start_ms: first.start_ms,
                end_ms: last.end_ms,
                text: group
                    .iter()
                    .map(|&p| track.cues[p].text.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
                speaker_hint: first.speaker_hint.clone(),
            }
        })
        .collect();
    CueTrack {
        title_id: track.title_id.clone(),
        language: track.language,
        cues,
    }
}

/// Serializes a track back to SubRip, hints rendered as `NAME: ` prefixes.
pub fn write_srt(track: &CueTrack) -> String {
    let mut out = String::new();
    for cue in &track.cues {
        out.push_str(&format!(
            "{}\n{} --> {}\n",
            cue.index,
            format_timestamp(cue.start_ms),
            format_timestamp(cue.end_ms)
        ));
        if let Some(hint) = &cue.speaker_hint {
            out.push_str(hint);
            out.push_str(": ");
        }
        out.push_str(&cue.text);
        out.push_str("\n\n");
    }
    out
}

#[derive(Serialize)]
struct CsvCue<'a> {
    title_id: &'a str,
    language: Language,
    index: u32,
    start_ms: u64,
    end_ms: u64,
    speaker: &'a str,
    text: &'a str,
}

/// Writes one CSV row per cue.
pub fn write_csv<W: Write>(track: &CueTrack, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for cue in &track.cues {
        w.serialize(CsvCue {
            title_id: &track.title_id,
            language: track.language,
            index: cue.index,
            start_ms: cue.start_ms,
            end_ms: cue.end_ms,
            speaker: cue.speaker_hint.as_deref().unwrap_or(""),
            text: &cue.text,
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::language::Language;

/// Hop used when comparing a row's duration against its audio file.
pub const VALIDATION_HOP_MS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageFlag {
    Merged,
    WerKept,
    DurKept,
    Paired,
    SpkKept,
}

/// One kept utterance. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub utterance_id: String,
    pub title_id: String,
    pub language: Language,
    pub start_ms: u64,
    pub end_ms: u64,
    pub duration_s: f64,
    pub audio_path: PathBuf,
    pub subtitle_text: String,
    pub asr_text: Option<String>,
    pub wer: Option<f64>,
    pub speaker_cluster: usize,
    #[serde(default)]
    pub pair_id: Option<String>,
    #[serde(default)]
    pub unit_path: Option<PathBuf>,
    pub stage_flags: BTreeSet<StageFlag>,
}

impl ManifestRow {
    pub fn sort_key(&self) -> (&str, Language, u64, &str) {
        (&self.title_id, self.language, self.start_ms, &self.utterance_id)
    }
}

/// An utterance dropped by some stage, kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRow {
    pub utterance_id: String,
    pub title_id: String,
    pub language: Language,
    pub start_ms: u64,
    pub end_ms: u64,
    pub stage: String,
    pub reason: String,
    #[serde(default)]
    pub wer: Option<f64>,
}

pub fn sort_rows(rows: &mut [ManifestRow]) {
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok(rows)
}

/// Flat CSV export; stage flags are joined with `|`.
pub fn export_csv<W: Write>(rows: &[ManifestRow], writer: W) -> Result<()> {
    #[derive(Serialize)]
    struct Flat<'a> {
        utterance_id: &'a str,
        title_id: &'a str,
        language: Language,
        start_ms: u64,
        end_ms: u64,
        duration_s: f64,
        audio_path: String,
        subtitle_text: &'a str,
        asr_text: &'a str,
        wer: Option<f64>,
        speaker_cluster: usize,
        pair_id: &'a str,
        unit_path: String,
        stage_flags: String,
    }
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        let flags: Vec<String> = r
            .stage_flags
            .iter()
            .map(|f| serde_json::to_value(f).expect("flag serializes").as_str().unwrap_or_default().to_owned())
            .collect();
        w.serialize(Flat {
            utterance_id: &r.utterance_id,
            title_id: &r.title_id,
            language: r.language,
            start_ms: r.start_ms,
            end_ms: r.end_ms,
            duration_s: r.duration_s,
            audio_path: r.audio_path.display().to_string(),
            subtitle_text: &r.subtitle_text,
            asr_text: r.asr_text.as_deref().unwrap_or(""),
            wer: r.wer,
            speaker_cluster: r.speaker_cluster,
            pair_id: r.pair_id.as_deref().unwrap_or(""),
            unit_path: r.unit_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            stage_flags: flags.join("|"),
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Unreadable,
    CorruptRow,
    DuplicateId,
    MissingFile,
    BadTiming,
    DurationMismatch,
    MissingWer,
    MissingFlag,
    DanglingPair,
    SparseClusters,
    Ordering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// 1-based manifest line, when the problem is tied to one row.
    pub line: Option<usize>,
    pub utterance_id: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(id) = &self.utterance_id {
            write!(f, "{id}: ")?;
        }
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

fn audio_duration_s(path: &Path) -> std::result::Result<f64, String> {
    let r = hound::WavReader::open(path).map_err(|e| e.to_string())?;
    let spec = r.spec();
    Ok(r.duration() as f64 / spec.sample_rate as f64)
}

/// Checks every row invariant plus cross-row consistency.
///
/// Problems are reported, never raised; an empty list means the manifest is valid.
pub fn validate_manifest(manifest_path: impl AsRef<Path>) -> Vec<Violation> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    let mut push = |kind, line, id: Option<&str>, message: String| {
        out.push(Violation {
            kind,
            line,
            utterance_id: id.map(str::to_owned),
            message,
        })
    };
    let text = match std::fs::read_to_string(manifest_path) {
        Ok(t) => t,
        Err(e) => {
            push(ViolationKind::Unreadable, None, None, format!("{}: {e}", manifest_path.display()));
            return out;
        }
    };

    let mut rows: Vec<(usize, ManifestRow)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ManifestRow>(line) {
            Ok(r) => rows.push((i + 1, r)),
            Err(e) => push(ViolationKind::CorruptRow, Some(i + 1), None, e.to_string()),
        }
    }

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (line, r) in &rows {
        let id = Some(r.utterance_id.as_str());
        if let Some(first) = seen.insert(&r.utterance_id, *line) {
            push(ViolationKind::DuplicateId, Some(*line), id, format!("also on line {first}"));
        }
        if r.end_ms <= r.start_ms {
            push(ViolationKind::BadTiming, Some(*line), id, format!("end {} <= start {}", r.end_ms, r.start_ms));
        } else {
            let expect = (r.end_ms - r.start_ms) as f64 / 1000.0;
            if (r.duration_s - expect).abs() > 1e-6 {
                push(
                    ViolationKind::DurationMismatch,
                    Some(*line),
                    id,
                    format!("duration_s {} but timing gives {expect}", r.duration_s),
                );
            }
        }
        let audio = base.join(&r.audio_path);
        if !audio.is_file() {
            push(ViolationKind::MissingFile, Some(*line), id, format!("audio {} not found", audio.display()));
        } else {
            match audio_duration_s(&audio) {
                Ok(d) if (d - r.duration_s).abs() > VALIDATION_HOP_MS / 1000.0 => push(
                    ViolationKind::DurationMismatch,
                    Some(*line),
                    id,
                    format!("audio lasts {d:.3} s, row says {:.3} s", r.duration_s),
                ),
                Ok(_) => {}
                Err(e) => push(ViolationKind::MissingFile, Some(*line), id, format!("audio unreadable: {e}")),
            }
        }
        if let Some(u) = &r.unit_path {
            let p = base.join(u);
            if !p.is_file() {
                push(ViolationKind::MissingFile, Some(*line), id, format!("units {} not found", p.display()));
            }
        }
        if r.wer.is_none() || r.asr_text.is_none() {
            push(ViolationKind::MissingWer, Some(*line), id, "no transcript score".into());
        }
        for flag in [StageFlag::WerKept, StageFlag::DurKept, StageFlag::Paired, StageFlag::SpkKept] {
            if !r.stage_flags.contains(&flag) {
                push(ViolationKind::MissingFlag, Some(*line), id, format!("flag {flag:?} absent"));
            }
        }
        if r.pair_id.is_none() {
            push(ViolationKind::DanglingPair, Some(*line), id, "paired row without pair_id".into());
        }
    }

    for w in rows.windows(2) {
        if w[0].1.sort_key() > w[1].1.sort_key() {
            push(
                ViolationKind::Ordering,
                Some(w[1].0),
                Some(&w[1].1.utterance_id),
                "rows not sorted by (title_id, language, start_ms)".into(),
            );
        }
    }

    let mut pairs: BTreeMap<&str, Vec<&ManifestRow>> = BTreeMap::new();
    for (_, r) in &rows {
        if let Some(p) = &r.pair_id {
            pairs.entry(p).or_default().push(r);
        }
    }
    for (pid, members) in &pairs {
        let en = members.iter().filter(|r| r.language == Language::En).count();
        let es = members.iter().filter(|r| r.language == Language::Es).count();
        let titles: BTreeSet<&str> = members.iter().map(|r| r.title_id.as_str()).collect();
        if en != 1 || es != 1 || titles.len() != 1 {
            push(
                ViolationKind::DanglingPair,
                None,
                Some(&members[0].utterance_id),
                format!("pair {pid} has {en} en and {es} es rows across {} title(s)", titles.len()),
            );
        }
    }

    let mut clusters: BTreeMap<(&str, Language), BTreeSet<usize>> = BTreeMap::new();
    for (_, r) in &rows {
        clusters.entry((&r.title_id, r.language)).or_default().insert(r.speaker_cluster);
    }
    for ((title, lang), ids) in clusters {
        if ids.iter().copied().ne(0..ids.len()) {
            push(
                ViolationKind::SparseClusters,
                None,
                None,
                format!("{title}/{lang}: cluster ids {ids:?} are not 0..{}", ids.len()),
            );
        }
    }
    out
}

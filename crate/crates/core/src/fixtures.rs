//! A small synthetic corpus for examples and end-to-end tests.
//!
//! Every utterance is declared in a table: who speaks, for how long, how many
//! words the mock ASR gets wrong on each side, and how the Spanish dub lines
//! up. [`write_mini_corpus`] renders the table to WAV and SRT files plus the
//! mock adapter fixtures, so a pipeline run over it is fully predictable.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapter::MockFixtures;
use crate::audio::{read_wav, wav_bytes, write_wav, AudioBuffer};
use crate::error::{Error, Result};
use crate::hashing::{sha256_bytes, sha256_hex};
use crate::language::Language;
use crate::pipeline::{render_segment, PipelineConfig, MOCK_FIXTURES_FILE};
use crate::subtitle::format_timestamp;

pub const TRACK_RATE_HZ: u32 = 24_000;
pub const WORDS_PER_UTTERANCE: usize = 10;
/// Silence between consecutive English utterances.
pub const GAP_MS: u64 = 1_500;
/// Silence between the two halves of a split cue.
pub const SPLIT_GAP_MS: u64 = 300;
const LEAD_IN_MS: u64 = 1_000;
const TAIL_MS: u64 = 1_000;

const EN_WORDS: [&str; 24] = [
    "we", "never", "talk", "about", "the", "harbor", "night", "again", "listen", "carefully", "nobody", "leaves",
    "this", "room", "until", "morning", "trust", "me", "it's", "over", "bring", "coffee", "and", "maps",
];
const ES_WORDS: [&str; 24] = [
    "nunca", "hablamos", "del", "puerto", "otra", "vez", "escucha", "bien", "nadie", "sale", "de", "esta", "sala",
    "hasta", "mañana", "confía", "en", "mí", "se", "acabó", "trae", "café", "y", "mapas",
];

/// How the Spanish dub of an utterance is laid out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dub {
    /// Same span shifted by `shift_ms`, with `edits` ASR word errors.
    /// `same_voice` reuses the English voice, as if the original actor dubbed.
    Aligned { shift_ms: i64, edits: usize, same_voice: bool },
    /// No Spanish line at all.
    Absent,
    /// Same length but shifted by 60% of the duration, too far to pair.
    Offset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceDef {
    pub speaker: &'static str,
    pub duration_ms: u64,
    /// Rendered as two English cues that merge back together.
    pub split: bool,
    /// Whether English cues carry a `NAME:` prefix.
    pub hinted: bool,
    pub en_edits: usize,
    /// No English transcript fixture, so ASR fails.
    pub en_asr_missing: bool,
    pub dub: Dub,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TitleDef {
    pub title_id: &'static str,
    pub voices: Vec<(&'static str, f64)>,
    pub utterances: Vec<UtteranceDef>,
    /// Adds one inverted-timing cue and one empty cue to the English SRT.
    pub broken_cues: bool,
    /// When false, `es.srt` is not written.
    pub complete: bool,
}

/// Resolved timing of one utterance on both tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub en: (u64, u64),
    pub es: Option<(u64, u64)>,
}

impl TitleDef {
    /// Utterances laid end to end with [`GAP_MS`] between them.
    pub fn placements(&self) -> Vec<Placement> {
        let mut t = LEAD_IN_MS;
        self.utterances
            .iter()
            .map(|u| {
                let en = (t, t + u.duration_ms);
                t = en.1 + GAP_MS;
                let es = match u.dub {
                    Dub::Aligned { shift_ms, .. } => {
                        let s = (en.0 as i64 + shift_ms) as u64;
                        Some((s, s + u.duration_ms))
                    }
                    Dub::Absent => None,
                    Dub::Offset => {
                        let s = en.0 + u.duration_ms * 6 / 10;
                        Some((s, s + u.duration_ms))
                    }
                };
                Placement { en, es }
            })
            .collect()
    }

    fn voice_hz(&self, name: &str) -> f64 {
        self.voices
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, f)| *f)
            .unwrap_or(150.0)
    }
}

fn u(speaker: &'static str, duration_ms: u64, en_edits: usize) -> UtteranceDef {
    UtteranceDef {
        speaker,
        duration_ms,
        split: false,
        hinted: true,
        en_edits,
        en_asr_missing: false,
        dub: Dub::Aligned {
            shift_ms: 0,
            edits: 0,
            same_voice: false,
        },
    }
}

impl UtteranceDef {
    fn split(mut self) -> Self {
        self.split = true;
        self
    }

    fn unhinted(mut self) -> Self {
        self.hinted = false;
        self
    }

    fn es_edits(mut self, n: usize) -> Self {
        if let Dub::Aligned { ref mut edits, .. } = self.dub {
            *edits = n;
        }
        self
    }

    fn same_voice(mut self) -> Self {
        if let Dub::Aligned { ref mut same_voice, .. } = self.dub {
            *same_voice = true;
        }
        self
    }

    fn dub(mut self, dub: Dub) -> Self {
        self.dub = dub;
        self
    }

    fn no_asr(mut self) -> Self {
        self.en_asr_missing = true;
        self
    }
}

/// Gives aligned dubs a small deterministic timing jitter in [-200, 199] ms.
fn jitter(mut utts: Vec<UtteranceDef>) -> Vec<UtteranceDef> {
    for (i, u) in utts.iter_mut().enumerate() {
        if let Dub::Aligned { ref mut shift_ms, .. } = u.dub {
            *shift_ms = ((i * 37) % 400) as i64 - 200;
        }
    }
    utts
}

/// The bundled definition: two complete titles and one missing its Spanish subtitles.
pub fn mini_corpus_definition() -> Vec<TitleDef> {
    let title_a = TitleDef {
        title_id: "title_a",
        voices: vec![("JOHN", 110.0), ("MARY", 210.0), ("PETE", 150.0), ("ANNA", 250.0), ("CLERK", 180.0)],
        broken_cues: false,
        complete: true,
        utterances: jitter(vec![
            u("JOHN", 4000, 0),
            u("MARY", 5200, 1).split(),
            u("JOHN", 3000, 0),
            u("PETE", 4500, 0),
            u("MARY", 2500, 0),
            u("JOHN", 6000, 1).split(),
            u("ANNA", 4200, 0),
            u("MARY", 15000, 0),
            u("JOHN", 5000, 7),
            u("PETE", 4800, 0).same_voice(),
            u("MARY", 4400, 0),
            u("CLERK", 3600, 4).es_edits(4),
            u("JOHN", 7000, 0),
            u("ANNA", 16000, 0),
            u("MARY", 5000, 0).dub(Dub::Absent),
            u("PETE", 3900, 0),
            u("CLERK", 4100, 4).es_edits(4),
            u("JOHN", 4600, 2),
            u("MARY", 5600, 0),
            u("ANNA", 4300, 0).dub(Dub::Offset),
            u("CLERK", 3700, 4).es_edits(4),
            u("JOHN", 5200, 0).split().unhinted(),
            u("MARY", 4900, 1),
            u("PETE", 4000, 0),
            u("CLERK", 4400, 5).es_edits(5),
            u("JOHN", 3800, 0),
            u("MARY", 6100, 0).es_edits(1),
            u("ANNA", 3500, 0),
            u("CLERK", 3300, 5).es_edits(5),
            u("JOHN", 4700, 0),
            u("MARY", 5300, 2),
            u("PETE", 4400, 0),
            u("CLERK", 4000, 5).es_edits(5),
            u("ANNA", 3900, 1),
            u("MARY", 4200, 0).es_edits(2),
        ]),
    };
    let title_b = TitleDef {
        title_id: "title_b",
        voices: vec![("ROSA", 230.0), ("LEO", 120.0), ("SAM", 160.0), ("GUARD", 140.0)],
        broken_cues: true,
        complete: true,
        utterances: jitter(vec![
            u("ROSA", 4100, 0),
            u("LEO", 5000, 0).split(),
            u("ROSA", 3200, 1),
            u("SAM", 4400, 0),
            u("LEO", 5500, 0).no_asr(),
            u("ROSA", 6200, 0).split(),
            u("GUARD", 3900, 4).es_edits(4),
            u("LEO", 4800, 1),
            u("SAM", 14500, 0),
            u("ROSA", 4600, 0),
            u("LEO", 2900, 0),
            u("GUARD", 4200, 5).es_edits(5),
            u("ROSA", 5100, 0).unhinted(),
            u("SAM", 3700, 0),
            u("LEO", 4300, 0).es_edits(1),
            u("ROSA", 5400, 8),
            u("GUARD", 3500, 4).es_edits(4),
            u("LEO", 6000, 0).split().unhinted(),
            u("SAM", 4000, 0).same_voice(),
            u("ROSA", 4700, 0),
            u("LEO", 5200, 2),
            u("GUARD", 4100, 5).es_edits(5),
            u("ROSA", 3600, 0).dub(Dub::Absent),
            u("LEO", 4500, 0),
            u("SAM", 5000, 1),
            u("ROSA", 4900, 0).es_edits(7),
            u("GUARD", 3800, 5).es_edits(5),
            u("LEO", 3400, 0),
            u("ROSA", 5800, 1),
            u("SAM", 4200, 0).dub(Dub::Offset),
            u("LEO", 4000, 0),
            u("ROSA", 4400, 0),
            u("GUARD", 4600, 4).es_edits(4),
            u("LEO", 5100, 1),
            u("ROSA", 3900, 0),
        ]),
    };
    let title_c = TitleDef {
        title_id: "title_c",
        voices: vec![("HANK", 130.0)],
        broken_cues: false,
        complete: false,
        utterances: vec![u("HANK", 4000, 0), u("HANK", 4500, 0), u("HANK", 5000, 0)],
    };
    vec![title_a, title_b, title_c]
}

/// The ten subtitle words of utterance `index`.
pub fn utterance_words(language: Language, title_id: &str, index: usize) -> Vec<&'static str> {
    let vocab = match language {
        Language::En => &EN_WORDS,
        Language::Es => &ES_WORDS,
    };
    let offset = sha256_bytes(title_id.as_bytes())[0] as usize;
    (0..WORDS_PER_UTTERANCE)
        .map(|j| vocab[(offset + index * 7 + j * 5) % vocab.len()])
        .collect()
}

fn sentence(words: &[&str], end: &str) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s + end
}

/// The mock transcript: the subtitle words with the first `edits` replaced.
pub fn asr_transcript(words: &[&str], edits: usize) -> String {
    words
        .iter()
        .enumerate()
        .map(|(i, w)| if i < edits { "zzz" } else { w })
        .collect::<Vec<_>>()
        .join(" ")
}

struct SrtCue {
    start: u64,
    end: u64,
    text: String,
}

fn render_srt(mut cues: Vec<SrtCue>) -> String {
    cues.sort_by_key(|c| (c.start, c.end));
    let mut out = String::new();
    for (i, c) in cues.iter().enumerate() {
        let _ = write!(
            out,
            "{}\n{} --> {}\n{}\n\n",
            i + 1,
            format_timestamp(c.start),
            format_timestamp(c.end),
            c.text
        );
    }
    out
}

fn synth_track(def: &TitleDef, lang: Language, spans: &[(u64, u64, f64)], total_ms: u64) -> AudioBuffer {
    let sr = TRACK_RATE_HZ as f64;
    let n = (total_ms as f64 * sr / 1000.0) as usize;
    let mut rng = ChaCha8Rng::from_seed(sha256_bytes(format!("{}:{lang}", def.title_id).as_bytes()));
    let mut s: Vec<f32> = (0..n).map(|_| (rng.gen::<f64>() - 0.5) as f32 * 0.006).collect();
    for &(start, end, f0) in spans {
        let a = (start as f64 * sr / 1000.0) as usize;
        let b = ((end as f64 * sr / 1000.0) as usize).min(n);
        for (k, x) in s[a..b].iter_mut().enumerate() {
            let t = k as f64 / sr;
            let env = 0.3 * (0.6 + 0.4 * (2.0 * PI * 4.0 * t).sin());
            let v = 0.5 * (2.0 * PI * f0 * t).sin() + 0.3 * (4.0 * PI * f0 * t).sin() + 0.2 * (6.0 * PI * f0 * t).sin();
            *x += (env * v) as f32;
        }
    }
    AudioBuffer::new(s, TRACK_RATE_HZ).expect("synthesized samples are finite")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Hashes of segments exactly as the pipeline will cut them.
fn segment_hash(track: &AudioBuffer, span: (u64, u64), rate_hz: u32) -> Result<String> {
    Ok(sha256_hex(&wav_bytes(&render_segment(track, span.0, span.1, rate_hz)?)))
}

/// Writes the corpus under `root` and returns the definition it was built from.
///
/// Mock fixtures are keyed by segment hashes at `segment_rate_hz`, which must
/// match the `sample_rate_hz` of the run that consumes them.
pub fn write_mini_corpus(root: &Path, segment_rate_hz: u32) -> Result<Vec<TitleDef>> {
    let defs = mini_corpus_definition();
    let mut fixtures = MockFixtures::default();
    for def in &defs {
        let dir = root.join(def.title_id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let places = def.placements();
        let total_ms = places
            .iter()
            .flat_map(|p| [Some(p.en.1), p.es.map(|e| e.1)])
            .flatten()
            .max()
            .unwrap_or(0)
            + TAIL_MS;

        let mut en_cues = Vec::new();
        let mut es_cues = Vec::new();
        let mut en_spans = Vec::new();
        let mut es_spans = Vec::new();
        for (i, (utt, p)) in def.utterances.iter().zip(&places).enumerate() {
            let words = utterance_words(Language::En, def.title_id, i);
            let prefix = if utt.hinted { format!("{}: ", utt.speaker) } else { String::new() };
            if utt.split {
                let mid = p.en.0 + utt.duration_ms / 2;
                let half = SPLIT_GAP_MS / 2;
                en_cues.push(SrtCue {
                    start: p.en.0,
                    end: mid - half,
                    text: format!("{prefix}{}", sentence(&words[..5], "")),
                });
                en_cues.push(SrtCue {
                    start: mid + half,
                    end: p.en.1,
                    text: format!("{prefix}{}", words[5..].join(" ") + "."),
                });
            } else {
                en_cues.push(SrtCue {
                    start: p.en.0,
                    end: p.en.1,
                    text: format!("{prefix}{}", sentence(&words, ".")),
                });
            }
            let f0 = def.voice_hz(utt.speaker);
            en_spans.push((p.en.0, p.en.1, f0));
            if let Some(es) = p.es {
                let es_words = utterance_words(Language::Es, def.title_id, i);
                es_cues.push(SrtCue {
                    start: es.0,
                    end: es.1,
                    text: format!("- {}", sentence(&es_words, ".")),
                });
                let same = matches!(utt.dub, Dub::Aligned { same_voice: true, .. });
                es_spans.push((es.0, es.1, if same { f0 } else { f0 * 1.15 }));
            }
        }
        if def.broken_cues && places.len() > 5 {
            let after3 = places[2].en.1;
            en_cues.push(SrtCue {
                start: after3 + 400,
                end: after3 + 200,
                text: "(door slams)".into(),
            });
            let after5 = places[4].en.1;
            en_cues.push(SrtCue {
                start: after5 + 200,
                end: after5 + 700,
                text: "<i></i>".into(),
            });
        }

        let en_track = synth_track(def, Language::En, &en_spans, total_ms);
        let es_track = synth_track(def, Language::Es, &es_spans, total_ms);
        write_wav(dir.join("en.wav"), &en_track)?;
        write_wav(dir.join("es.wav"), &es_track)?;
        write_text(&dir.join("en.srt"), &render_srt(en_cues))?;
        if def.complete {
            write_text(&dir.join("es.srt"), &render_srt(es_cues))?;
        }

        // Segments are cut from the quantized files, as the pipeline reads them.
        let en_track = read_wav(dir.join("en.wav"))?;
        let es_track = read_wav(dir.join("es.wav"))?;
        for (i, (utt, p)) in def.utterances.iter().zip(&places).enumerate() {
            let en_hash = segment_hash(&en_track, p.en, segment_rate_hz)?;
            let en_words = utterance_words(Language::En, def.title_id, i);
            if !utt.en_asr_missing {
                fixtures
                    .transcripts
                    .insert(en_hash.clone(), asr_transcript(&en_words, utt.en_edits));
            }
            fixtures
                .voices
                .insert(en_hash, format!("{}:{}", def.title_id, utt.speaker));
            if let Some(es) = p.es {
                let es_hash = segment_hash(&es_track, es, segment_rate_hz)?;
                let es_words = utterance_words(Language::Es, def.title_id, i);
                let (edits, same) = match utt.dub {
                    Dub::Aligned { edits, same_voice, .. } => (edits, same_voice),
                    _ => (0, false),
                };
                fixtures.transcripts.insert(es_hash.clone(), asr_transcript(&es_words, edits));
                let voice = if same {
                    format!("{}:{}", def.title_id, utt.speaker)
                } else {
                    format!("{}:{}:dub", def.title_id, utt.speaker)
                };
                fixtures.voices.insert(es_hash, voice);
            }
        }
    }
    fixtures.save(root.join(MOCK_FIXTURES_FILE))?;
    Ok(defs)
}

/// Settings used with the mini corpus: defaults apart from a small codebook.
pub fn mini_corpus_config(input_root: impl Into<PathBuf>, output_root: impl Into<PathBuf>) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(input_root, output_root);
    cfg.k_units = 32;
    cfg.seed = 7;
    cfg
}

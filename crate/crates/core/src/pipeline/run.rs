use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{file_matches, StageCache};
use super::config::PipelineConfig;
use super::manifest::{sort_rows, write_jsonl, ManifestRow, RejectRow, StageFlag};
use crate::adapter::{
    mock_adapter, spawn_sidecar, AdapterError, AdapterPool, AdapterSession, MockFixtures, DEFAULT_EMBED_DIM,
};
use crate::audio::{self, mfcc, read_wav, resample, wav_bytes, AudioBuffer, MfccConfig, CANONICAL_RATE_HZ};
use crate::error::{Error, Result};
use crate::filtering::{filter_by_duration, filter_by_wer, SegmentRecord};
use crate::hashing::{file_hash, sha256_hex, KeyHasher};
use crate::language::Language;
use crate::speakers::{
    filter_pairs_by_similarity, filter_speakers_min_count, pair_segments, pseudo_label, Embedding, PairedUtterance,
    SpeakerLabel,
};
use crate::subtitle::{merge_cues, merge_groups, parse_srt, CueTrack};
use crate::units::{assign_units, condense, kmeans_fit, KMeansConfig};

/// Mock adapter lookup tables, read from the input root when no sidecar is configured.
pub const MOCK_FIXTURES_FILE: &str = "adapter_fixtures.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const REJECTS_FILE: &str = "rejects.jsonl";
pub const REPORT_FILE: &str = "reports.json";
pub const CENTROIDS_FILE: &str = "units/centroids.txt";

/// Stage names in execution order.
pub const STAGES: [&str; 14] = [
    "ingest",
    "parse_srt",
    "merge_cues",
    "denoise",
    "segment",
    "asr",
    "wer_filter",
    "duration_filter",
    "pair",
    "speaker_label",
    "similarity_filter",
    "speaker_filter",
    "units",
    "manifest",
];

const CACHE_VERSION: &str = concat!("dubpair-", env!("CARGO_PKG_VERSION"));

/// Counts for one stage. Per-title stages sum their wall time over titles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub input_count: usize,
    pub output_count: usize,
    pub dropped_count: usize,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

impl StageReport {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_owned(),
            input_count: 0,
            output_count: 0,
            dropped_count: 0,
            wall_time_s: 0.0,
            warnings: Vec::new(),
            cache_hits: 0,
            cache_misses: 0,
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.input_count == self.output_count + self.dropped_count
    }

    fn absorb(&mut self, other: StageReport) {
        self.input_count += other.input_count;
        self.output_count += other.output_count;
        self.dropped_count += other.dropped_count;
        self.wall_time_s += other.wall_time_s;
        self.warnings.extend(other.warnings);
        self.cache_hits += other.cache_hits;
        self.cache_misses += other.cache_misses;
    }

    fn counts(&mut self, input: usize, output: usize) {
        self.input_count += input;
        self.output_count += output;
        self.dropped_count += input - output;
    }

    fn hit(&mut self, hit: bool) {
        if hit {
            self.cache_hits += 1;
        } else {
            self.cache_misses += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub rows: Vec<ManifestRow>,
    pub rejects: Vec<RejectRow>,
    pub reports: Vec<StageReport>,
    pub manifest_path: PathBuf,
    pub rejects_path: PathBuf,
    pub report_path: PathBuf,
}

impl PipelineOutput {
    pub fn report(&self, stage: &str) -> Option<&StageReport> {
        self.reports.iter().find(|r| r.stage == stage)
    }
}

/// Failure text without the session-specific request id.
fn adapter_reason(e: &AdapterError) -> String {
    match e {
        AdapterError::Remote { message, .. } => message.clone(),
        other => other.to_string(),
    }
}

fn key(parts: &[&str]) -> String {
    let mut h = KeyHasher::new(CACHE_VERSION);
    for p in parts {
        h.field(p.as_bytes());
    }
    h.finish()
}

fn json_key<T: Serialize>(stage: &str, input: &T, params: &str) -> Result<String> {
    Ok(key(&[stage, &sha256_hex(&serde_json::to_vec(input)?), params]))
}

/// Slices `[start_ms, end_ms)` from a track and brings it to `rate_hz`.
pub fn render_segment(track: &AudioBuffer, start_ms: u64, end_ms: u64, rate_hz: u32) -> Result<AudioBuffer> {
    resample(&audio::slice(track, start_ms, end_ms)?, rate_hz)
}

pub fn utterance_id(title: &str, language: Language, ordinal: usize) -> String {
    format!("{title}_{language}_{ordinal:04}")
}

pub fn pair_id(title: &str, ordinal: usize) -> String {
    format!("{title}_p{ordinal:03}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParseOut {
    track: CueTrack,
    blocks: usize,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MergedCue {
    ordinal: usize,
    start_ms: u64,
    end_ms: u64,
    text: String,
    merged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DenoiseOut {
    path: PathBuf,
    hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentFile {
    utterance_id: String,
    start_ms: u64,
    end_ms: u64,
    text: String,
    merged: bool,
    rel_path: PathBuf,
    hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Dropped {
    utterance_id: String,
    start_ms: u64,
    end_ms: u64,
    reason: String,
    wer: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentOut {
    files: Vec<SegmentFile>,
    drops: Vec<Dropped>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AsrOut {
    records: Vec<SegmentRecord>,
    drops: Vec<Dropped>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct EmbedOut {
    vectors: BTreeMap<String, Vec<f64>>,
    failures: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredFile {
    rel_path: PathBuf,
    hash: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct UnitsOut {
    centroids: Option<StoredFile>,
    files: BTreeMap<String, StoredFile>,
    warnings: Vec<String>,
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    cache: StageCache,
    pool: AdapterPool,
    adapter_id: String,
}

impl Ctx<'_> {
    fn abs(&self, rel: &Path) -> PathBuf {
        self.cfg.output_root.join(rel)
    }
}

/// Everything one (title, language) track contributes before the global filters.
struct TrackOutcome {
    language: Language,
    reports: Vec<StageReport>,
    records: Vec<SegmentRecord>,
    files: Vec<SegmentFile>,
    drops: Vec<(&'static str, Dropped)>,
}

fn process_track(ctx: &Ctx, title: &str, lang: Language) -> Result<TrackOutcome> {
    let cfg = ctx.cfg;
    let dir = cfg.input_root.join(title);
    let mut reports: Vec<StageReport> = STAGES[1..6].iter().map(|s| StageReport::new(s)).collect();
    let mut drops: Vec<(&'static str, Dropped)> = Vec::new();

    // parse_srt
    let t = Instant::now();
    let srt_path = dir.join(format!("{lang}.srt"));
    let srt = std::fs::read(&srt_path).map_err(|e| Error::io(&srt_path, e))?;
    let parse_key = key(&["parse_srt", title, lang.code(), &sha256_hex(&srt)]);
    let (parsed, hit) = ctx.cache.get_or_compute(
        "parse_srt",
        &parse_key,
        |_: &ParseOut| true,
        || {
            let p = parse_srt(&srt, title, lang)?;
            let warnings = p.warnings.iter().map(|w| format!("{title}/{lang}: {w}")).collect();
            Ok(ParseOut {
                blocks: p.blocks,
                track: p.track,
                warnings,
            })
        },
    )?;
    let r = &mut reports[0];
    r.counts(parsed.blocks, parsed.track.cues.len());
    r.warnings.extend(parsed.warnings.iter().cloned());
    r.hit(hit);
    r.wall_time_s += t.elapsed().as_secs_f64();

    // merge_cues
    let t = Instant::now();
    let merge_key = key(&["merge_cues", &parse_key, &cfg.merge_gap_ms.to_string()]);
    let (merged, hit) = ctx.cache.get_or_compute(
        "merge_cues",
        &merge_key,
        |_: &Vec<MergedCue>| true,
        || {
            let groups = merge_groups(&parsed.track, cfg.merge_gap_ms);
            let track = merge_cues(&parsed.track, cfg.merge_gap_ms);
            Ok(track
                .cues
                .into_iter()
                .zip(groups)
                .enumerate()
                .map(|(i, (c, g))| MergedCue {
                    ordinal: i + 1,
                    start_ms: c.start_ms,
                    end_ms: c.end_ms,
                    text: c.text,
                    merged: g.len() > 1,
                })
                .collect())
        },
    )?;
    let r = &mut reports[1];
    r.counts(parsed.track.cues.len(), merged.len());
    r.hit(hit);
    r.wall_time_s += t.elapsed().as_secs_f64();

    // denoise, whole file, ahead of slicing
    let t = Instant::now();
    let wav_path = dir.join(format!("{lang}.wav"));
    let wav_hash = file_hash(&wav_path)?;
    let denoise_key = key(&["denoise", &wav_hash, &ctx.adapter_id]);
    let r = &mut reports[2];
    let denoised = match ctx
        .cache
        .get("denoise", &denoise_key, |d: &DenoiseOut| file_matches(&d.path, &d.hash))
    {
        Some(d) => {
            r.hit(true);
            d
        }
        None => {
            r.hit(false);
            let result = ctx.pool.checkout().denoise(&wav_path);
            match result {
                Ok(path) => {
                    let d = DenoiseOut {
                        hash: file_hash(&path)?,
                        path,
                    };
                    ctx.cache.put("denoise", &denoise_key, &d)?;
                    d
                }
                Err(e) => {
                    let msg = format!("{title}/{lang}: denoise failed, using original audio: {}", adapter_reason(&e));
                    log::warn!("{msg}");
                    r.warnings.push(msg);
                    DenoiseOut {
                        path: wav_path.clone(),
                        hash: wav_hash.clone(),
                    }
                }
            }
        }
    };
    r.counts(1, 1);
    r.wall_time_s += t.elapsed().as_secs_f64();

    // segment: slice + resample
    let t = Instant::now();
    let segment_key = key(&["segment", &merge_key, &denoised.hash, &cfg.sample_rate_hz.to_string()]);
    let (segments, hit) = ctx.cache.get_or_compute(
        "segment",
        &segment_key,
        |s: &SegmentOut| s.files.iter().all(|f| file_matches(&ctx.abs(&f.rel_path), &f.hash)),
        || {
            let track = read_wav(&denoised.path)?;
            let rel_dir = Path::new("segments").join(title).join(lang.code());
            let abs_dir = ctx.abs(&rel_dir);
            std::fs::create_dir_all(&abs_dir).map_err(|e| Error::io(&abs_dir, e))?;
            let mut out = SegmentOut {
                files: Vec::new(),
                drops: Vec::new(),
            };
            for c in &merged {
                let id = utterance_id(title, lang, c.ordinal);
                match render_segment(&track, c.start_ms, c.end_ms, cfg.sample_rate_hz) {
                    Ok(seg) => {
                        let bytes = wav_bytes(&seg);
                        let rel_path = rel_dir.join(format!("{id}.wav"));
                        let abs = ctx.abs(&rel_path);
                        std::fs::write(&abs, &bytes).map_err(|e| Error::io(&abs, e))?;
                        out.files.push(SegmentFile {
                            utterance_id: id,
                            start_ms: c.start_ms,
                            end_ms: c.end_ms,
                            text: c.text.clone(),
                            merged: c.merged,
                            rel_path,
                            hash: sha256_hex(&bytes),
                        });
                    }
                    Err(e) => out.drops.push(Dropped {
                        utterance_id: id,
                        start_ms: c.start_ms,
                        end_ms: c.end_ms,
                        reason: e.to_string(),
                        wer: None,
                    }),
                }
            }
            Ok(out)
        },
    )?;
    let r = &mut reports[3];
    r.counts(merged.len(), segments.files.len());
    r.hit(hit);
    r.wall_time_s += t.elapsed().as_secs_f64();
    drops.extend(segments.drops.iter().cloned().map(|d| ("segment", d)));

    // asr
    let t = Instant::now();
    let asr_key = key(&["asr", &segment_key, &ctx.adapter_id]);
    let r = &mut reports[4];
    let asr = match ctx.cache.get("asr", &asr_key, |_: &AsrOut| true) {
        Some(a) => {
            r.hit(true);
            a
        }
        None => {
            r.hit(false);
            let mut out = AsrOut {
                records: Vec::new(),
                drops: Vec::new(),
            };
            let mut transient = false;
            let mut session = ctx.pool.checkout();
            for f in &segments.files {
                let drop = |reason: String| Dropped {
                    utterance_id: f.utterance_id.clone(),
                    start_ms: f.start_ms,
                    end_ms: f.end_ms,
                    reason,
                    wer: None,
                };
                let base = SegmentRecord::new(&f.utterance_id, title, lang, f.start_ms, f.end_ms, &f.text);
                match session.transcribe(&ctx.abs(&f.rel_path), lang) {
                    Ok(text) => match base.with_transcript(text) {
                        Ok(rec) => out.records.push(rec),
                        Err(e) => out.drops.push(drop(e.to_string())),
                    },
                    Err(e) => {
                        transient |= !matches!(e, AdapterError::Remote { .. });
                        out.drops.push(drop(format!("asr failed: {}", adapter_reason(&e))));
                    }
                }
            }
            drop(session);
            if !transient {
                ctx.cache.put("asr", &asr_key, &out)?;
            }
            out
        }
    };
    r.counts(segments.files.len(), asr.records.len());
    r.wall_time_s += t.elapsed().as_secs_f64();
    drops.extend(asr.drops.iter().cloned().map(|d| ("asr", d)));

    Ok(TrackOutcome {
        language: lang,
        reports,
        records: asr.records,
        files: segments.files,
        drops,
    })
}

/// Per-title pairing, speaker labelling and the pair/speaker filters.
struct TitlePairs {
    reports: Vec<StageReport>,
    pairs: Vec<(String, PairedUtterance)>,
    labels: HashMap<String, SpeakerLabel>,
    rejects: Vec<(&'static str, String, String)>,
}

fn pair_title(
    ctx: &Ctx,
    title: &str,
    en: &[SegmentRecord],
    es: &[SegmentRecord],
    files: &HashMap<String, SegmentFile>,
) -> Result<TitlePairs> {
    let cfg = ctx.cfg;
    let mut reports: Vec<StageReport> = STAGES[8..12].iter().map(|s| StageReport::new(s)).collect();
    let mut rejects = Vec::new();

    // pair
    let t = Instant::now();
    let pair_key = json_key("pair", &(en, es), &cfg.pair_iou_min.to_string())?;
    let (pairs, hit) = ctx.cache.get_or_compute(
        "pair",
        &pair_key,
        |_: &Vec<PairedUtterance>| true,
        || pair_segments(en, es, cfg.pair_iou_min),
    )?;
    let paired: BTreeSet<&str> = pairs
        .iter()
        .flat_map(|p| [p.en_utterance_id.as_str(), p.es_utterance_id.as_str()])
        .collect();
    for s in en.iter().chain(es) {
        if !paired.contains(s.utterance_id.as_str()) {
            rejects.push((
                "pair",
                s.utterance_id.clone(),
                format!("no counterpart with IoU >= {}", cfg.pair_iou_min),
            ));
        }
    }
    let r = &mut reports[0];
    r.counts(en.len() + es.len(), 2 * pairs.len());
    r.hit(hit);
    r.wall_time_s += t.elapsed().as_secs_f64();
    let pairs: Vec<(String, PairedUtterance)> = pairs
        .into_iter()
        .enumerate()
        .map(|(i, p)| (pair_id(title, i + 1), p))
        .collect();

    // speaker_label: embed paired utterances, then cluster each side in time order
    let t = Instant::now();
    let ids: Vec<&str> = pairs
        .iter()
        .flat_map(|(_, p)| [p.en_utterance_id.as_str(), p.es_utterance_id.as_str()])
        .collect();
    let hashes: Vec<&str> = ids.iter().map(|id| files[*id].hash.as_str()).collect();
    let embed_key = json_key("embed", &(&ids, &hashes), &ctx.adapter_id)?;
    let r = &mut reports[1];
    let embeds = match ctx.cache.get("speaker_label", &embed_key, |_: &EmbedOut| true) {
        Some(e) => {
            r.hit(true);
            e
        }
        None => {
            r.hit(false);
            let mut out = EmbedOut::default();
            let mut transient = false;
            let mut dim = None;
            let mut session = ctx.pool.checkout();
            for id in &ids {
                match session.embed(&ctx.abs(&files[*id].rel_path)) {
                    Ok(v) if dim.is_some_and(|d| d != v.len()) => {
                        out.failures.insert(
                            id.to_string(),
                            format!("embedding dimension {} differs from {}", v.len(), dim.unwrap_or(0)),
                        );
                    }
                    Ok(v) => match Embedding::new(v.clone()) {
                        Ok(_) => {
                            dim = Some(v.len());
                            out.vectors.insert(id.to_string(), v);
                        }
                        Err(e) => {
                            out.failures.insert(id.to_string(), format!("unusable embedding: {e}"));
                        }
                    },
                    Err(e) => {
                        transient |= !matches!(e, AdapterError::Remote { .. });
                        out.failures.insert(id.to_string(), format!("embed failed: {}", adapter_reason(&e)));
                    }
                }
            }
            drop(session);
            if !transient {
                ctx.cache.put("speaker_label", &embed_key, &out)?;
            }
            out
        }
    };
    let n_pairs = pairs.len();
    let mut embedded = Vec::new();
    for (pid, p) in pairs {
        let failure = [&p.en_utterance_id, &p.es_utterance_id]
            .into_iter()
            .find_map(|id| embeds.failures.get(id.as_str()).map(|f| (id, f)));
        match failure {
            Some((id, why)) => {
                let reason = format!("pair {pid}: {id}: {why}");
                rejects.push(("speaker_label", p.en_utterance_id.clone(), reason.clone()));
                rejects.push(("speaker_label", p.es_utterance_id.clone(), reason));
            }
            None => embedded.push((pid, p)),
        }
    }
    let vectors: HashMap<String, Embedding> = embeds
        .vectors
        .iter()
        .map(|(k, v)| Ok((k.clone(), Embedding::new(v.clone())?)))
        .collect::<Result<_>>()?;
    let mut labels = HashMap::new();
    for lang in Language::ALL {
        let side = |p: &PairedUtterance| match lang {
            Language::En => p.en_utterance_id.clone(),
            Language::Es => p.es_utterance_id.clone(),
        };
        let start = |id: &str| files[id].start_ms;
        let mut ids: Vec<String> = embedded.iter().map(|(_, p)| side(p)).collect();
        ids.sort_by(|a, b| (start(a), a).cmp(&(start(b), b)));
        let es: Vec<Embedding> = ids.iter().map(|id| vectors[id].clone()).collect();
        for (id, l) in ids.into_iter().zip(pseudo_label(&es, cfg.cluster_tau, title, lang)?) {
            labels.insert(id, l);
        }
    }
    let r = &mut reports[1];
    r.counts(2 * n_pairs, 2 * embedded.len());
    r.wall_time_s += t.elapsed().as_secs_f64();

    // similarity_filter
    let t = Instant::now();
    let by_en: HashMap<String, String> = embedded
        .iter()
        .map(|(pid, p)| (p.en_utterance_id.clone(), pid.clone()))
        .collect();
    let plain: Vec<PairedUtterance> = embedded.iter().map(|(_, p)| p.clone()).collect();
    let n_in = plain.len();
    let (kept, dropped) = filter_pairs_by_similarity(plain, &vectors, cfg.pair_sim_max)?;
    for p in &dropped {
        let reason = format!(
            "pair {}: cross-lingual similarity {:.4} >= {}",
            by_en[&p.en_utterance_id],
            p.cross_similarity.unwrap_or(f64::NAN),
            cfg.pair_sim_max
        );
        rejects.push(("similarity_filter", p.en_utterance_id.clone(), reason.clone()));
        rejects.push(("similarity_filter", p.es_utterance_id.clone(), reason));
    }
    let r = &mut reports[2];
    r.counts(2 * n_in, 2 * kept.len());
    r.wall_time_s += t.elapsed().as_secs_f64();

    // speaker_filter
    let t = Instant::now();
    let n_in = kept.len();
    let en_labels: HashMap<String, SpeakerLabel> = kept
        .iter()
        .map(|p| (p.en_utterance_id.clone(), labels[&p.en_utterance_id].clone()))
        .collect();
    let (kept, dropped) = filter_speakers_min_count(kept, &en_labels, cfg.min_segments_per_speaker)?;
    for p in &dropped {
        let reason = format!(
            "pair {}: speaker cluster {} has fewer than {} pairs",
            by_en[&p.en_utterance_id],
            en_labels[&p.en_utterance_id].cluster_id,
            cfg.min_segments_per_speaker
        );
        rejects.push(("speaker_filter", p.en_utterance_id.clone(), reason.clone()));
        rejects.push(("speaker_filter", p.es_utterance_id.clone(), reason));
    }
    let r = &mut reports[3];
    r.counts(2 * n_in, 2 * kept.len());
    r.wall_time_s += t.elapsed().as_secs_f64();

    Ok(TitlePairs {
        reports,
        pairs: kept.into_iter().map(|p| (by_en[&p.en_utterance_id].clone(), p)).collect(),
        labels,
        rejects,
    })
}

fn extract_units(ctx: &Ctx, utterances: &[&SegmentFile], report: &mut StageReport) -> Result<UnitsOut> {
    let cfg = ctx.cfg;
    let listing: Vec<(&str, &str)> = utterances
        .iter()
        .map(|f| (f.utterance_id.as_str(), f.hash.as_str()))
        .collect();
    let params = format!("{} {} {} {}", cfg.k_units, cfg.seed, cfg.frame_hop_ms, cfg.sample_rate_hz);
    let units_key = json_key("units", &listing, &params)?;
    let valid = |u: &UnitsOut| {
        u.centroids
            .iter()
            .chain(u.files.values())
            .all(|f| file_matches(&ctx.abs(&f.rel_path), &f.hash))
    };
    let (out, hit) = ctx.cache.get_or_compute("units", &units_key, valid, || {
        let mcfg = MfccConfig {
            hop_ms: cfg.frame_hop_ms as f64,
            ..MfccConfig::default()
        };
        let feats: Vec<audio::FrameMatrix> = utterances
            .par_iter()
            .map(|f| {
                let a = read_wav(ctx.abs(&f.rel_path))?;
                mfcc(&resample(&a, CANONICAL_RATE_HZ)?, &mcfg)
            })
            .collect::<Result<_>>()?;
        let dim = mcfg.n_coeffs;
        let points: Vec<f64> = feats.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
        let n = points.len() / dim;
        let mut out = UnitsOut::default();
        if n < cfg.k_units {
            out.warnings
                .push(format!("only {n} frames for k_units={}; units skipped", cfg.k_units));
            return Ok(out);
        }
        let centroids = match kmeans_fit(&points, dim, &KMeansConfig::new(cfg.k_units, cfg.seed)) {
            Ok(c) => c,
            Err(e @ Error::TooFewPoints { .. }) => {
                out.warnings.push(format!("{e}; units skipped"));
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        let write = |rel: PathBuf, bytes: &[u8]| -> Result<StoredFile> {
            let abs = ctx.abs(&rel);
            let dir = abs.parent().expect("file has a parent");
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            std::fs::write(&abs, bytes).map_err(|e| Error::io(&abs, e))?;
            Ok(StoredFile {
                rel_path: rel,
                hash: sha256_hex(bytes),
            })
        };
        out.centroids = Some(write(PathBuf::from(CENTROIDS_FILE), centroids.to_text().as_bytes())?);
        for (f, m) in utterances.iter().zip(&feats) {
            let line = condense(&assign_units(m.as_slice(), &centroids)?).to_line() + "\n";
            let title = f.rel_path.iter().nth(1).map(PathBuf::from).unwrap_or_default();
            let rel = Path::new("units").join(title).join(format!("{}.units", f.utterance_id));
            out.files.insert(f.utterance_id.clone(), write(rel, line.as_bytes())?);
        }
        Ok(out)
    })?;
    report.hit(hit);
    report.counts(utterances.len(), utterances.len());
    report.warnings.extend(out.warnings.iter().cloned());
    Ok(out)
}

fn build_pool(cfg: &PipelineConfig) -> Result<(AdapterPool, String)> {
    let mut sessions: Vec<Box<dyn AdapterSession>> = Vec::new();
    let id = match cfg.effective_adapter_cmd() {
        Some(cmd) => {
            for _ in 0..cfg.parallelism {
                sessions.push(Box::new(spawn_sidecar(&cmd)?));
            }
            format!("cmd:{cmd}")
        }
        None => {
            let path = cfg.input_root.join(MOCK_FIXTURES_FILE);
            let (fixtures, id) = if path.is_file() {
                (MockFixtures::load(&path)?, format!("mock:{}", file_hash(&path)?))
            } else {
                log::warn!("no adapter configured and no {} found; mock has no fixtures", path.display());
                (MockFixtures::default(), "mock:empty".to_owned())
            };
            for _ in 0..cfg.parallelism {
                sessions.push(Box::new(mock_adapter(fixtures.clone(), DEFAULT_EMBED_DIM)));
            }
            id
        }
    };
    Ok((AdapterPool::new(sessions), id))
}

/// Title directories under `input_root` holding all four track files, plus
/// one warning per incomplete title.
pub fn discover_titles(input_root: &Path) -> Result<(Vec<String>, Vec<String>, usize)> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(input_root).map_err(|e| Error::io(input_root, e))? {
        let entry = entry.map_err(|e| Error::io(input_root, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    let total = names.len();
    let mut complete = Vec::new();
    let mut warnings = Vec::new();
    for name in names {
        let missing: Vec<String> = Language::ALL
            .iter()
            .flat_map(|l| [format!("{l}.wav"), format!("{l}.srt")])
            .filter(|f| !input_root.join(&name).join(f).is_file())
            .collect();
        if missing.is_empty() {
            complete.push(name);
        } else {
            warnings.push(format!("{name}: missing {}; title skipped", missing.join(", ")));
        }
    }
    Ok((complete, warnings, total))
}

fn reject(stage: &str, rec: &SegmentRecord, reason: String) -> RejectRow {
    RejectRow {
        utterance_id: rec.utterance_id.clone(),
        title_id: rec.title_id.clone(),
        language: rec.language,
        start_ms: rec.start_ms,
        end_ms: rec.end_ms,
        stage: stage.to_owned(),
        reason,
        wer: rec.wer,
    }
}

/// Runs every stage and writes the manifest, rejects and reports under `output_root`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let out_root = &cfg.output_root;
    std::fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    let mut reports: Vec<StageReport> = STAGES.iter().map(|s| StageReport::new(s)).collect();
    let mut rejects: Vec<RejectRow> = Vec::new();

    let t = Instant::now();
    let (titles, warnings, total) = discover_titles(&cfg.input_root)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    reports[0].counts(total, titles.len());
    reports[0].warnings = warnings;
    reports[0].wall_time_s = t.elapsed().as_secs_f64();

    let (pool, adapter_id) = build_pool(cfg)?;
    let ctx = Ctx {
        cfg,
        cache: StageCache::new(out_root.join("cache")),
        pool,
        adapter_id,
    };
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;

    let result = workers.install(|| run_stages(&ctx, &titles, &mut reports, &mut rejects));
    ctx.pool.shutdown();
    let rows = result?;

    let t = Instant::now();
    let manifest_path = out_root.join(MANIFEST_FILE);
    let rejects_path = out_root.join(REJECTS_FILE);
    let report_path = out_root.join(REPORT_FILE);
    rejects.sort_by(|a, b| {
        (&a.title_id, a.language, a.start_ms, &a.utterance_id).cmp(&(&b.title_id, b.language, b.start_ms, &b.utterance_id))
    });
    write_jsonl(&manifest_path, &rows)?;
    write_jsonl(&rejects_path, &rejects)?;
    let r = &mut reports[13];
    r.counts(rows.len(), rows.len());
    r.wall_time_s = t.elapsed().as_secs_f64();
    let text = serde_json::to_string_pretty(&reports)?;
    std::fs::write(&report_path, text + "\n").map_err(|e| Error::io(&report_path, e))?;
    for r in &reports {
        log::info!(
            "{:<18} in {:>5} out {:>5} dropped {:>5} ({:.2} s, cache {}/{})",
            r.stage,
            r.input_count,
            r.output_count,
            r.dropped_count,
            r.wall_time_s,
            r.cache_hits,
            r.cache_hits + r.cache_misses
        );
    }
    Ok(PipelineOutput {
        rows,
        rejects,
        reports,
        manifest_path,
        rejects_path,
        report_path,
    })
}

fn run_stages(
    ctx: &Ctx,
    titles: &[String],
    reports: &mut [StageReport],
    rejects: &mut Vec<RejectRow>,
) -> Result<Vec<ManifestRow>> {
    let cfg = ctx.cfg;

    // per-title: parse, merge, denoise, segment, asr
    let tracks: Vec<Vec<TrackOutcome>> = titles
        .par_iter()
        .map(|title| {
            Language::ALL
                .iter()
                .map(|&lang| process_track(ctx, title, lang))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut files: HashMap<String, SegmentFile> = HashMap::new();
    let mut by_lang: BTreeMap<Language, Vec<SegmentRecord>> = BTreeMap::new();
    for (title, outcomes) in titles.iter().zip(tracks) {
        for o in outcomes {
            for (i, r) in o.reports.into_iter().enumerate() {
                reports[i + 1].absorb(r);
            }
            for (stage, d) in o.drops {
                rejects.push(RejectRow {
                    utterance_id: d.utterance_id,
                    title_id: title.clone(),
                    language: o.language,
                    start_ms: d.start_ms,
                    end_ms: d.end_ms,
                    stage: stage.to_owned(),
                    reason: d.reason,
                    wer: d.wer,
                });
            }
            files.extend(o.files.into_iter().map(|f| (f.utterance_id.clone(), f)));
            by_lang.entry(o.language).or_default().extend(o.records);
        }
    }

    // wer_filter, global per language
    let t = Instant::now();
    let mut wer_kept = Vec::new();
    for (lang, recs) in by_lang {
        let n = recs.len();
        let k = json_key("wer_filter", &recs, &format!("{} {}", cfg.wer_max, cfg.keep_fraction))?;
        let (kept, dropped): (Vec<SegmentRecord>, Vec<SegmentRecord>) =
            match ctx.cache.get("wer_filter", &k, |_: &(Vec<SegmentRecord>, Vec<SegmentRecord>)| true) {
                Some(v) => {
                    reports[6].hit(true);
                    v
                }
                None => {
                    reports[6].hit(false);
                    let v = filter_by_wer(recs, cfg.wer_max, cfg.keep_fraction)?;
                    ctx.cache.put("wer_filter", &k, &v)?;
                    v
                }
            };
        for d in &dropped {
            let w = d.wer.unwrap_or(f64::NAN);
            let reason = if w > cfg.wer_max {
                format!("wer {w:.4} > {}", cfg.wer_max)
            } else {
                format!("wer {w:.4} outside the best {} of {lang} segments", cfg.keep_fraction)
            };
            rejects.push(reject("wer_filter", d, reason));
        }
        reports[6].counts(n, kept.len());
        wer_kept.extend(kept);
    }
    reports[6].wall_time_s = t.elapsed().as_secs_f64();

    // duration_filter
    let t = Instant::now();
    let n = wer_kept.len();
    let k = json_key("duration_filter", &wer_kept, &format!("{} {}", cfg.min_duration_s, cfg.max_duration_s))?;
    let (kept, dropped) = ctx.cache.get_or_compute(
        "duration_filter",
        &k,
        |_: &(Vec<SegmentRecord>, Vec<SegmentRecord>)| true,
        || Ok(filter_by_duration(wer_kept, cfg.min_duration_s, cfg.max_duration_s)),
    )
    .map(|(v, hit)| {
        reports[7].hit(hit);
        v
    })?;
    for d in &dropped {
        let reason = format!(
            "duration {:.3} s outside [{}, {}]",
            d.duration_s, cfg.min_duration_s, cfg.max_duration_s
        );
        rejects.push(reject("duration_filter", d, reason));
    }
    reports[7].counts(n, kept.len());
    reports[7].wall_time_s = t.elapsed().as_secs_f64();

    // per-title pairing and speaker stages
    let mut per_title: BTreeMap<&str, (Vec<SegmentRecord>, Vec<SegmentRecord>)> =
        titles.iter().map(|t| (t.as_str(), Default::default())).collect();
    for r in kept {
        let e = per_title.get_mut(r.title_id.as_str()).expect("known title");
        match r.language {
            Language::En => e.0.push(r),
            Language::Es => e.1.push(r),
        }
    }
    for (en, es) in per_title.values_mut() {
        en.sort_by_key(|r| r.start_ms);
        es.sort_by_key(|r| r.start_ms);
    }
    let records: HashMap<String, SegmentRecord> = per_title
        .values()
        .flat_map(|(a, b)| a.iter().chain(b))
        .map(|r| (r.utterance_id.clone(), r.clone()))
        .collect();
    let paired: Vec<(&str, TitlePairs)> = per_title
        .par_iter()
        .map(|(title, (en, es))| Ok((*title, pair_title(ctx, title, en, es, &files)?)))
        .collect::<Result<_>>()?;

    let mut finals: Vec<(String, PairedUtterance)> = Vec::new();
    let mut labels: HashMap<String, SpeakerLabel> = HashMap::new();
    for (_, tp) in paired {
        for (i, r) in tp.reports.into_iter().enumerate() {
            reports[i + 8].absorb(r);
        }
        for (stage, id, reason) in tp.rejects {
            rejects.push(reject(stage, &records[&id], reason));
        }
        finals.extend(tp.pairs);
        labels.extend(tp.labels);
    }

    // units, one codebook over every surviving utterance
    let t = Instant::now();
    let mut utts: Vec<&SegmentFile> = finals
        .iter()
        .flat_map(|(_, p)| [&files[&p.en_utterance_id], &files[&p.es_utterance_id]])
        .collect();
    utts.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let units = extract_units(ctx, &utts, &mut reports[12])?;
    reports[12].wall_time_s = t.elapsed().as_secs_f64();

    // manifest rows
    let mut rows = Vec::new();
    for (pid, p) in &finals {
        for id in [&p.en_utterance_id, &p.es_utterance_id] {
            let rec = &records[id];
            let f = &files[id];
            let mut flags: BTreeSet<StageFlag> =
                [StageFlag::WerKept, StageFlag::DurKept, StageFlag::Paired, StageFlag::SpkKept].into();
            if f.merged {
                flags.insert(StageFlag::Merged);
            }
            rows.push(ManifestRow {
                utterance_id: id.clone(),
                title_id: rec.title_id.clone(),
                language: rec.language,
                start_ms: rec.start_ms,
                end_ms: rec.end_ms,
                duration_s: rec.duration_s,
                audio_path: f.rel_path.clone(),
                subtitle_text: rec.subtitle_text.clone(),
                asr_text: rec.asr_text.clone(),
                wer: rec.wer,
                speaker_cluster: labels[id].cluster_id,
                pair_id: Some(pid.clone()),
                unit_path: units.files.get(id).map(|s| s.rel_path.clone()),
                stage_flags: flags,
            });
        }
    }
    sort_rows(&mut rows);
    // Dense cluster ids per (title, language) in order of first appearance.
    let mut remap: HashMap<(String, Language, usize), usize> = HashMap::new();
    let mut next: HashMap<(String, Language), usize> = HashMap::new();
    for r in &mut rows {
        let slot = (r.title_id.clone(), r.language, r.speaker_cluster);
        r.speaker_cluster = *remap.entry(slot).or_insert_with(|| {
            let n = next.entry((r.title_id.clone(), r.language)).or_default();
            *n += 1;
            *n - 1
        });
    }
    Ok(rows)
}

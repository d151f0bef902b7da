#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use dubpair::fixtures::{mini_corpus_config, write_mini_corpus, Dub, TitleDef};
use dubpair::pipeline::PipelineConfig;

pub struct Corpus {
    pub dir: tempfile::TempDir,
    pub defs: Vec<TitleDef>,
}

impl Corpus {
    pub fn input(&self) -> PathBuf {
        self.dir.path().join("in")
    }

    pub fn config(&self, out: &str) -> PipelineConfig {
        mini_corpus_config(self.input(), self.dir.path().join(out))
    }
}

pub fn build_corpus() -> Corpus {
    let dir = tempfile::tempdir().unwrap();
    let defs = write_mini_corpus(&dir.path().join("in"), 16_000).unwrap();
    Corpus { dir, defs }
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// One utterance as the stage rules see it.
#[derive(Debug, Clone)]
struct Utt {
    id: String,
    title: &'static str,
    es: bool,
    start: u64,
    end: u64,
    wer: f64,
    voice: String,
}

/// What each stage should do to the mini corpus, worked out from the
/// fixture table alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expected {
    pub titles_found: usize,
    pub titles_kept: usize,
    pub srt_blocks: usize,
    pub cues: usize,
    pub merged: usize,
    pub asr_failures: usize,
    pub wer_dropped: usize,
    pub dur_dropped: usize,
    pub unpaired: usize,
    pub sim_dropped_pairs: usize,
    pub spk_dropped_pairs: usize,
    /// (en id, es id) of every pair in the final manifest.
    pub pairs: BTreeSet<(String, String)>,
    /// Final utterance ids grouped by voice, per (title, side).
    pub clusters: BTreeMap<(String, bool), BTreeSet<BTreeSet<String>>>,
    pub merged_ids: BTreeSet<String>,
}

fn iou(a: (u64, u64), b: (u64, u64)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    let inter = hi.saturating_sub(lo) as f64;
    let union = (a.1.max(b.1) - a.0.min(b.0)) as f64;
    inter / union
}

/// Hand simulation of every stage rule with default thresholds.
pub fn simulate(defs: &[TitleDef]) -> Expected {
    let mut ex = Expected {
        titles_found: defs.len(),
        ..Default::default()
    };
    let mut scored: Vec<Utt> = Vec::new();
    let mut split_ids = BTreeSet::new();
    for def in defs.iter().filter(|d| d.complete) {
        ex.titles_kept += 1;
        let places = def.placements();
        let mut es_ordinal = 0;
        for (i, (u, p)) in def.utterances.iter().zip(&places).enumerate() {
            let en_cues = if u.split { 2 } else { 1 };
            ex.srt_blocks += en_cues;
            ex.cues += en_cues;
            ex.merged += 1;
            let en_id = format!("{}_en_{:04}", def.title_id, i + 1);
            if u.split {
                split_ids.insert(en_id.clone());
            }
            if u.en_asr_missing {
                ex.asr_failures += 1;
            } else {
                scored.push(Utt {
                    id: en_id,
                    title: def.title_id,
                    es: false,
                    start: p.en.0,
                    end: p.en.1,
                    wer: u.en_edits as f64 / 10.0,
                    voice: u.speaker.to_string(),
                });
            }
            if let Some(es) = p.es {
                es_ordinal += 1;
                ex.srt_blocks += 1;
                ex.cues += 1;
                ex.merged += 1;
                let (edits, same) = match u.dub {
                    Dub::Aligned { edits, same_voice, .. } => (edits, same_voice),
                    _ => (0, false),
                };
                scored.push(Utt {
                    id: format!("{}_es_{:04}", def.title_id, es_ordinal),
                    title: def.title_id,
                    es: true,
                    start: es.0,
                    end: es.1,
                    wer: edits as f64 / 10.0,
                    voice: if same { u.speaker.to_string() } else { format!("{}-dub", u.speaker) },
                });
            }
        }
        if def.broken_cues {
            ex.srt_blocks += 2;
        }
    }

    // WER: absolute cap, then the best 80% per language by (wer, id).
    let mut after_wer = Vec::new();
    for side in [false, true] {
        let mut s: Vec<Utt> = scored.iter().filter(|u| u.es == side && u.wer <= 0.6).cloned().collect();
        let total = scored.iter().filter(|u| u.es == side).count();
        s.sort_by(|a, b| a.wer.partial_cmp(&b.wer).unwrap().then(a.id.cmp(&b.id)));
        let keep = s.len() * 8 / 10;
        ex.wer_dropped += total - keep;
        after_wer.extend(s.into_iter().take(keep));
    }

    let after_dur: Vec<Utt> = after_wer
        .into_iter()
        .filter(|u| {
            let d = (u.end - u.start) as f64 / 1000.0;
            let ok = (3.0..=15.0).contains(&d);
            if !ok {
                ex.dur_dropped += 1;
            }
            ok
        })
        .collect();

    // Greedy one-to-one pairing by descending IoU.
    let mut pairs: Vec<(Utt, Utt)> = Vec::new();
    let titles: BTreeSet<&str> = after_dur.iter().map(|u| u.title).collect();
    for t in titles {
        let en: Vec<&Utt> = after_dur.iter().filter(|u| u.title == t && !u.es).collect();
        let es: Vec<&Utt> = after_dur.iter().filter(|u| u.title == t && u.es).collect();
        let mut cands = Vec::new();
        for (i, a) in en.iter().enumerate() {
            for (j, b) in es.iter().enumerate() {
                let v = iou((a.start, a.end), (b.start, b.end));
                if v >= 0.5 {
                    cands.push((v, i, j));
                }
            }
        }
        cands.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let (mut ue, mut us) = (HashSet::new(), HashSet::new());
        for (_, i, j) in cands {
            if !ue.contains(&i) && !us.contains(&j) {
                ue.insert(i);
                us.insert(j);
                pairs.push((en[i].clone(), es[j].clone()));
            }
        }
    }
    ex.unpaired = after_dur.len() - 2 * pairs.len();

    // Same voice on both sides means the original actor: similarity >= 0.5.
    let before = pairs.len();
    pairs.retain(|(a, b)| a.voice != b.voice);
    ex.sim_dropped_pairs = before - pairs.len();

    // At least five pairs per English voice, to a fixed point.
    loop {
        let mut counts: BTreeMap<(&str, String), usize> = BTreeMap::new();
        for (a, _) in &pairs {
            *counts.entry((a.title, a.voice.clone())).or_default() += 1;
        }
        let before = pairs.len();
        let keep: Vec<(Utt, Utt)> = pairs
            .iter()
            .filter(|(a, _)| counts[&(a.title, a.voice.clone())] >= 5)
            .cloned()
            .collect();
        ex.spk_dropped_pairs += before - keep.len();
        pairs = keep;
        if pairs.len() == before {
            break;
        }
    }

    for (a, b) in &pairs {
        ex.pairs.insert((a.id.clone(), b.id.clone()));
        for u in [a, b] {
            if split_ids.contains(&u.id) {
                ex.merged_ids.insert(u.id.clone());
            }
        }
    }
    let mut groups: BTreeMap<(String, bool, String), BTreeSet<String>> = BTreeMap::new();
    for (a, b) in &pairs {
        for u in [a, b] {
            groups
                .entry((u.title.to_string(), u.es, u.voice.clone()))
                .or_default()
                .insert(u.id.clone());
        }
    }
    for ((t, side, _), ids) in groups {
        ex.clusters.entry((t, side)).or_default().insert(ids);
    }
    ex
}

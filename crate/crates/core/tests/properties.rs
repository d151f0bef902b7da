use std::collections::{BTreeMap, HashMap, HashSet};

use proptest::prelude::*;

use dubpair::audio::{frame_count, mfcc, slice, AudioBuffer, MfccConfig};
use dubpair::audio::{estimate_pitch_yin, YinConfig};
use dubpair::filtering::{edit_distance, filter_by_duration, filter_by_wer, wer, SegmentRecord, TokenSequence};
use dubpair::metrics::{bleu, corpus_stats};
use dubpair::speakers::{
    cosine_similarity, filter_speakers_min_count, interval_iou, pair_segments, Embedding, PairedUtterance,
    SpeakerLabel,
};
use dubpair::subtitle::{merge_cues, CueTrack, SubtitleCue};
use dubpair::units::{condense, expand, UnitSequence};
use dubpair::Language;

fn track_strategy() -> impl Strategy<Value = CueTrack> {
    let cue = (0u64..2500, 1u64..4000, prop::option::of(prop::sample::select(vec!["A", "B"])), any::<bool>());
    prop::collection::vec(cue, 0..25).prop_map(|specs| {
        let mut t = 0;
        let cues = specs
            .into_iter()
            .enumerate()
            .map(|(i, (gap, dur, hint, stop))| {
                let start = t + gap;
                t = start + dur;
                SubtitleCue {
                    index: i as u32 + 1,
                    start_ms: start,
                    end_ms: t,
                    text: format!("w{i}{}", if stop { "." } else { "" }),
                    speaker_hint: hint.map(str::to_owned),
                }
            })
            .collect();
        CueTrack {
            title_id: "t".into(),
            language: Language::En,
            cues,
        }
    })
}

/// Plain recursive edit distance, the textbook definition.
fn lev(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = lev(ra, rb) + usize::from(x != y);
            sub.min(lev(ra, b) + 1).min(lev(a, rb) + 1)
        }
    }
}

fn seg(id: String, dur_ms: u64, wer: f64) -> SegmentRecord {
    let mut s = SegmentRecord::new(id, "t", Language::En, 0, dur_ms, "x");
    s.asr_text = Some("x".into());
    s.wer = Some(wer);
    s
}

fn toks(words: &[u8]) -> TokenSequence {
    TokenSequence::new(words.iter().map(|w| format!("w{w}")).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn merge_is_idempotent_and_keeps_text(track in track_strategy(), gap in 0u64..2000) {
        let once = merge_cues(&track, gap);
        prop_assert_eq!(merge_cues(&once, gap), once.clone());
        let words = |t: &CueTrack| t.cues.iter().flat_map(|c| c.text.split(' ').map(str::to_owned)).collect::<Vec<_>>();
        prop_assert_eq!(words(&once), words(&track));
        prop_assert!(once.cues.len() <= track.cues.len());
        for w in once.cues.windows(2) {
            prop_assert!(w[0].end_ms <= w[1].start_ms);
        }
        if let (Some(a), Some(b)) = (track.cues.first(), once.cues.first()) {
            prop_assert_eq!(a.start_ms, b.start_ms);
        }
    }

    #[test]
    fn slices_compose(n in 1600usize..8000, rate in prop::sample::select(vec![8000u32, 16_000, 22_050, 44_100]),
                      a in 0u64..300, b in 0u64..300, c in 0u64..300) {
        let buf = AudioBuffer::new((0..n).map(|i| i as f32 / n as f32).collect(), 16_000).unwrap();
        let buf = AudioBuffer::new(buf.into_samples(), rate).unwrap();
        let dur = buf.duration_ms();
        let (s, m, e) = (a.min(dur), (a + 1 + b).min(dur), (a + 2 + b + c).min(dur));
        prop_assume!(s < m && m < e);
        let whole = slice(&buf, s, e).unwrap();
        let mut joined = slice(&buf, s, m).unwrap().into_samples();
        joined.extend(slice(&buf, m, e).unwrap().samples());
        prop_assert_eq!(joined.as_slice(), whole.samples());
        prop_assert!(slice(&buf, e, s).is_err());
    }

    #[test]
    fn mfcc_frame_count_matches_formula(n in 0usize..6000) {
        let buf = AudioBuffer::new((0..n).map(|i| ((i * 7919) % 200) as f32 / 400.0 - 0.25).collect(), 16_000).unwrap();
        let cfg = MfccConfig::default();
        let m = mfcc(&buf, &cfg).unwrap();
        let expect = if n < 400 { 0 } else { (n - 400) / 320 + 1 };
        prop_assert_eq!(m.n_frames(), expect);
        prop_assert_eq!(frame_count(n, 400, 320), expect);
        prop_assert_eq!(m.n_coeffs(), cfg.n_coeffs);
        prop_assert!(m.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pitch_voiced_frames_carry_in_range_f0(f in 40.0f64..700.0, amp in 0.0f64..1.0, noise in 0.0f64..0.5) {
        let mut state = 0x2545f491u32;
        let samples = (0..4000).map(|i| {
            state ^= state << 13; state ^= state >> 17; state ^= state << 5;
            let r = state as f64 / u32::MAX as f64 - 0.5;
            (amp * (2.0 * std::f64::consts::PI * f * i as f64 / 16_000.0).sin() + noise * r) as f32
        }).collect();
        let cfg = YinConfig::default();
        let t = estimate_pitch_yin(&AudioBuffer::new(samples, 16_000).unwrap(), &cfg);
        prop_assert_eq!(t.f0_hz.len(), t.voiced.len());
        for (f0, v) in t.f0_hz.iter().zip(&t.voiced) {
            if *v {
                prop_assert!(*f0 >= cfg.f0_min && *f0 <= cfg.f0_max);
            } else {
                prop_assert_eq!(*f0, 0.0);
            }
        }
    }

    #[test]
    fn edit_distance_matches_recursion(a in prop::collection::vec(0u8..3, 0..7), b in prop::collection::vec(0u8..3, 0..7)) {
        let d = edit_distance(&a, &b);
        prop_assert_eq!(d, lev(&a, &b));
        prop_assert_eq!(d, edit_distance(&b, &a));
        if !a.is_empty() {
            let w = wer(&toks(&a), &toks(&b)).unwrap();
            prop_assert!((w - d as f64 / a.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn wer_filter_partitions_and_ranks(wers in prop::collection::vec(0.0f64..1.5, 0..40),
                                       wer_max in 0.0f64..1.0, frac in 0.05f64..=1.0) {
        let segs: Vec<_> = wers.iter().enumerate().map(|(i, w)| seg(format!("u{i:02}"), 5000, *w)).collect();
        let (kept, dropped) = filter_by_wer(segs, wer_max, frac).unwrap();
        prop_assert_eq!(kept.len() + dropped.len(), wers.len());
        let eligible = wers.iter().filter(|w| **w <= wer_max).count();
        prop_assert_eq!(kept.len(), (frac * eligible as f64).floor() as usize);
        let worst_kept = kept.iter().map(|s| s.wer.unwrap()).fold(f64::NEG_INFINITY, f64::max);
        for d in &dropped {
            let w = d.wer.unwrap();
            prop_assert!(w > wer_max || w >= worst_kept);
        }
        let mut ids: Vec<_> = kept.iter().chain(&dropped).map(|s| s.utterance_id.clone()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), wers.len());
    }

    #[test]
    fn duration_filter_is_inclusive(durs in prop::collection::vec(0u64..20_000, 0..40)) {
        let segs: Vec<_> = durs.iter().enumerate().map(|(i, d)| seg(format!("u{i}"), *d, 0.0)).collect();
        let (kept, dropped) = filter_by_duration(segs, 3.0, 15.0);
        prop_assert_eq!(kept.len() + dropped.len(), durs.len());
        prop_assert!(kept.iter().all(|s| (3.0..=15.0).contains(&s.duration_s)));
        prop_assert!(dropped.iter().all(|s| !(3.0..=15.0).contains(&s.duration_s)));
    }

    #[test]
    fn cosine_is_scale_invariant_and_bounded(v in prop::collection::vec(-10.0f64..10.0, 4),
                                             w in prop::collection::vec(-10.0f64..10.0, 4),
                                             k in 0.01f64..100.0) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3) && w.iter().any(|x| x.abs() > 1e-3));
        let a = Embedding::new(v.clone()).unwrap();
        let b = Embedding::new(w).unwrap();
        let scaled = Embedding::new(v.iter().map(|x| x * k).collect()).unwrap();
        let s = cosine_similarity(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
        prop_assert!((cosine_similarity(&scaled, &b).unwrap() - s).abs() < 1e-9);
        prop_assert!((cosine_similarity(&b, &a).unwrap() - s).abs() < 1e-12);
        prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pairing_is_a_matching(en in prop::collection::vec((0u64..30_000, 500u64..6000), 0..12),
                             es in prop::collection::vec((0u64..30_000, 500u64..6000), 0..12)) {
        let mk = |v: &[(u64, u64)], lang: Language| -> Vec<SegmentRecord> {
            v.iter().enumerate().map(|(i, (s, d))| SegmentRecord::new(format!("{lang}{i}"), "t", lang, *s, s + d, "x")).collect()
        };
        let (en, es) = (mk(&en, Language::En), mk(&es, Language::Es));
        let pairs = pair_segments(&en, &es, 0.5).unwrap();
        let span: HashMap<&str, (u64, u64)> = en.iter().chain(&es).map(|s| (s.utterance_id.as_str(), (s.start_ms, s.end_ms))).collect();
        let mut used_en = HashSet::new();
        let mut used_es = HashSet::new();
        for p in &pairs {
            prop_assert!(used_en.insert(p.en_utterance_id.clone()));
            prop_assert!(used_es.insert(p.es_utterance_id.clone()));
            let iou = interval_iou(span[p.en_utterance_id.as_str()], span[p.es_utterance_id.as_str()]);
            prop_assert!(iou >= 0.5);
            prop_assert!((iou - p.overlap_iou).abs() < 1e-12);
        }
        // Maximality: no unused en/es couple clears the threshold.
        for a in en.iter().filter(|s| !used_en.contains(&s.utterance_id)) {
            for b in es.iter().filter(|s| !used_es.contains(&s.utterance_id)) {
                prop_assert!(interval_iou((a.start_ms, a.end_ms), (b.start_ms, b.end_ms)) < 0.5);
            }
        }
    }

    #[test]
    fn min_count_filter_reaches_fixed_point(clusters in prop::collection::vec(0usize..6, 0..60), min in 1usize..8) {
        let mut labels = HashMap::new();
        let pairs: Vec<PairedUtterance> = clusters.iter().enumerate().map(|(i, c)| {
            let en = format!("e{i}");
            labels.insert(en.clone(), SpeakerLabel { cluster_id: *c, title_id: "t".into(), language: Language::En });
            PairedUtterance { title_id: "t".into(), en_utterance_id: en, es_utterance_id: format!("s{i}"), overlap_iou: 1.0, cross_similarity: None }
        }).collect();
        let (kept, dropped) = filter_speakers_min_count(pairs, &labels, min).unwrap();
        prop_assert_eq!(kept.len() + dropped.len(), clusters.len());
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for c in &clusters {
            *counts.entry(*c).or_default() += 1;
        }
        for p in &kept {
            prop_assert!(counts[&labels[&p.en_utterance_id].cluster_id] >= min);
        }
        for p in &dropped {
            prop_assert!(counts[&labels[&p.en_utterance_id].cluster_id] < min);
        }
        let (again, none) = filter_speakers_min_count(kept.clone(), &labels, min).unwrap();
        prop_assert_eq!(again, kept);
        prop_assert!(none.is_empty());
    }

    #[test]
    fn condense_expand_roundtrip(units in prop::collection::vec(0u32..5, 0..300)) {
        let seq = UnitSequence::new(units.clone());
        let c = condense(&seq);
        prop_assert_eq!(expand(&c).unwrap(), seq);
        prop_assert_eq!(c.total_len(), units.len());
        prop_assert!(c.runs.windows(2).all(|w| w[0].unit != w[1].unit));
        prop_assert!(c.runs.iter().all(|r| r.count >= 1));
        let mut dedup = units.clone();
        dedup.dedup();
        prop_assert_eq!(c.ids(), dedup);
        prop_assert_eq!(dubpair::units::CondensedUnits::from_line(&c.to_line()).unwrap(), c);
    }

    #[test]
    fn bleu_is_bounded_and_order_free(corpus in prop::collection::vec(
        (prop::collection::vec(0u8..6, 1..10), prop::collection::vec(0u8..6, 1..10)), 1..8), rot in 0usize..8) {
        let hyps: Vec<_> = corpus.iter().map(|(h, _)| toks(h)).collect();
        let refs: Vec<_> = corpus.iter().map(|(_, r)| toks(r)).collect();
        let score = bleu(&hyps, &refs, 4).unwrap();
        prop_assert!((0.0..=100.0 + 1e-9).contains(&score));
        let k = rot % corpus.len();
        let (mut h2, mut r2) = (hyps.clone(), refs.clone());
        h2.rotate_left(k);
        r2.rotate_left(k);
        prop_assert!((bleu(&h2, &r2, 4).unwrap() - score).abs() < 1e-9);
        prop_assert!((bleu(&refs, &refs, 1).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn stats_histogram_counts_everything(durs in prop::collection::vec(0.0f64..300.0, 1..200), width in 0.1f64..10.0) {
        let s = corpus_stats(&durs, width).unwrap();
        prop_assert_eq!(s.count, durs.len());
        prop_assert_eq!(s.histogram.iter().map(|b| b.count).sum::<usize>(), durs.len());
        prop_assert!(s.min_s <= s.mean_s + 1e-9 && s.mean_s <= s.max_s + 1e-9);
        for (i, b) in s.histogram.iter().enumerate() {
            prop_assert!((b.start_s - i as f64 * width).abs() < 1e-9);
        }
        let last = s.histogram.last().unwrap();
        prop_assert!(last.start_s + last.width_s >= s.max_s);
    }
}

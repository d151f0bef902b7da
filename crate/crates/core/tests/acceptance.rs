//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use dubpair::audio::{estimate_pitch_yin, AudioBuffer, YinConfig};
use dubpair::filtering::{edit_distance, filter_by_duration, filter_by_wer, wer, SegmentRecord, TokenSequence};
use dubpair::metrics::{bleu, corpus_stats};
use dubpair::pipeline::run_pipeline;
use dubpair::speakers::{filter_pairs_by_similarity, filter_speakers_min_count, Embedding, PairedUtterance, SpeakerLabel};
use dubpair::units::{condense, expand, kmeans_fit, kmeans_fit_traced, KMeansConfig, UnitSequence};
use dubpair::Language;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(budget_s: u64, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    if t > Duration::from_secs(budget_s) {
        return Err(format!("took {:.2} s, budget {budget_s} s", t.as_secs_f64()));
    }
    Ok(t)
}

/// Edit distance by the recursive definition, memoized on suffix positions.
fn lev(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = (go(a, b, i + 1, j + 1, memo) + usize::from(a[i] != b[j]))
            .min(go(a, b, i + 1, j, memo) + 1)
            .min(go(a, b, i, j + 1, memo) + 1);
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

fn all_sequences(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let next: Vec<Vec<u8>> = frontier
            .iter()
            .flat_map(|s: &Vec<u8>| (0..3).map(move |c| [s.as_slice(), &[c]].concat()))
            .collect();
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn toks(s: &[u8]) -> TokenSequence {
    TokenSequence::new(s.iter().map(|c| ["a", "b", "c"][*c as usize].to_owned()).collect()).unwrap()
}

fn check_pair(a: &[u8], b: &[u8]) -> Result<(), String> {
    let expect = lev(a, b);
    ensure!(edit_distance(a, b) == expect, "edit distance {a:?} vs {b:?}");
    if !a.is_empty() {
        let w = wer(&toks(a), &toks(b)).map_err(|e| e.to_string())?;
        ensure!(w == expect as f64 / a.len() as f64, "wer {a:?} vs {b:?}: {w}");
    }
    Ok(())
}

fn wer_oracle() -> Outcome {
    let start = Instant::now();
    let seqs = all_sequences(4);
    let mut n = 0;
    for a in &seqs {
        for b in &seqs {
            check_pair(a, b)?;
            n += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5000 {
        let gen = |rng: &mut ChaCha8Rng| -> Vec<u8> {
            let len = rng.gen_range(0..=6);
            (0..len).map(|_| rng.gen_range(0..3)).collect()
        };
        let (a, b) = (gen(&mut rng), gen(&mut rng));
        check_pair(&a, &b)?;
        n += 1;
    }
    let t = within(10, start)?;
    Ok(format!("{n} pairs exact, {:.2} s", t.as_secs_f64()))
}

fn bleu_oracle() -> Outcome {
    let ws = |s: &str| TokenSequence::from_whitespace(s);
    let got = bleu(&[ws("the cat sat on the mat")], &[ws("the cat sat on a mat")], 4).map_err(|e| e.to_string())?;
    let expect = 100.0 * (5.0 / 6.0 * 3.0 / 5.0 * 1.0 / 2.0 * 1.0 / 3.0_f64).powf(0.25);
    ensure!((got - expect).abs() < 1e-9, "example: {got} vs {expect}");
    let corpus = [ws("a b c d e"), ws("the quick brown fox jumps over")];
    let same = bleu(&corpus, &corpus, 4).map_err(|e| e.to_string())?;
    ensure!(same == 100.0, "identical corpus gave {same}");
    let disjoint = bleu(&[ws("x y z w v")], &[ws("a b c d e")], 4).map_err(|e| e.to_string())?;
    ensure!(disjoint == 0.0, "disjoint corpus gave {disjoint}");
    Ok(format!("example {got:.4}, identical 100, disjoint 0"))
}

fn codec_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let len = rng.gen_range(0..=500);
        let mut units = Vec::with_capacity(len);
        // Half the sequences are run-heavy, half uniformly random.
        let runny = i % 2 == 0;
        while units.len() < len {
            let id = rng.gen_range(0..1000u32);
            let reps = if runny { rng.gen_range(1..=8) } else { 1 };
            units.extend(std::iter::repeat(id).take(reps.min(len - units.len())));
        }
        let seq = UnitSequence::new(units);
        let c = condense(&seq);
        ensure!(c.runs.windows(2).all(|w| w[0].unit != w[1].unit), "adjacent equal runs in case {i}");
        ensure!(expand(&c).map_err(|e| e.to_string())? == seq, "roundtrip mismatch in case {i}");
    }
    Ok("1000 sequences exact".into())
}

fn kmeans_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 0..20 {
        let dim = rng.gen_range(1..=8);
        let n = rng.gen_range(50..400);
        let k = rng.gen_range(2..=12);
        let points: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (_, trace) = kmeans_fit_traced(&points, dim, &KMeansConfig::new(k, d)).map_err(|e| e.to_string())?;
        for w in trace.inertia.windows(2) {
            ensure!(w[1] <= w[0] * (1.0 + 1e-12), "dataset {d}: inertia rose {} -> {}", w[0], w[1]);
        }
    }

    let normal = Normal::new(0.0, 0.5).unwrap();
    let mut points = Vec::new();
    let mut means = [[0.0; 2]; 2];
    for i in 0..200 {
        let g = i % 2;
        let p = [10.0 * g as f64 + normal.sample(&mut rng), normal.sample(&mut rng)];
        means[g][0] += p[0] / 100.0;
        means[g][1] += p[1] / 100.0;
        points.extend(p);
    }
    let c = kmeans_fit(&points, 2, &KMeansConfig::new(2, 42)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for m in &means {
        let d = (0..2)
            .map(|j| ((c.row(j)[0] - m[0]).powi(2) + (c.row(j)[1] - m[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    ensure!(worst <= 0.25, "centroid {worst:.4} from empirical mean");
    ensure!((c.row(0)[0] - c.row(1)[0]).abs() > 5.0, "both centroids on one blob");

    let again = kmeans_fit(&points, 2, &KMeansConfig::new(2, 42)).map_err(|e| e.to_string())?;
    ensure!(c.to_text() == again.to_text(), "same seed gave different centroid bytes");
    let t = within(30, start)?;
    Ok(format!("20 monotone traces, recovery error {worst:.4}, deterministic, {:.2} s", t.as_secs_f64()))
}

fn yin_checks() -> Outcome {
    let start = Instant::now();
    let cfg = YinConfig::default();
    let mut detail = Vec::new();
    for f in [110.0, 220.0, 440.0] {
        let samples = (0..16_000)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / 16_000.0).sin()) as f32)
            .collect();
        let t = estimate_pitch_yin(&AudioBuffer::new(samples, 16_000).unwrap(), &cfg);
        let m = t.median_f0().ok_or(format!("{f} Hz: no voiced frames"))?;
        ensure!((m - f).abs() / f <= 0.01, "{f} Hz: median {m}");
        ensure!(t.voiced_fraction() >= 0.9, "{f} Hz: voiced {}", t.voiced_fraction());
        detail.push(format!("{f}->{m:.2}"));
    }
    let silent = estimate_pitch_yin(&AudioBuffer::silence(16_000, 16_000), &cfg);
    ensure!(!silent.is_empty() && silent.voiced.iter().all(|v| !v), "silence had voiced frames");
    let t = within(5, start)?;
    Ok(format!("{}, silence unvoiced, {:.2} s", detail.join(" "), t.as_secs_f64()))
}

fn seg(id: &str, dur_ms: u64, wer: f64) -> SegmentRecord {
    let mut s = SegmentRecord::new(id, "t", Language::En, 0, dur_ms, "x");
    s.asr_text = Some("x".into());
    s.wer = Some(wer);
    s
}

fn pair(i: usize) -> PairedUtterance {
    PairedUtterance {
        title_id: "t".into(),
        en_utterance_id: format!("en{i}"),
        es_utterance_id: format!("es{i}"),
        overlap_iou: 1.0,
        cross_similarity: None,
    }
}

fn threshold_filters() -> Outcome {
    let durs = [2_999, 3_000, 3_001, 9_000, 14_999, 15_000, 15_001];
    let segs = durs.iter().map(|d| seg(&format!("d{d}"), *d, 0.0)).collect();
    let (kept, _) = filter_by_duration(segs, 3.0, 15.0);
    let kept: Vec<u64> = kept.iter().map(|s| s.end_ms).collect();
    ensure!(kept == [3_000, 3_001, 9_000, 14_999, 15_000], "duration kept {kept:?}");

    let wers = [0.1, 0.2, 0.5, 0.7, 0.3];
    let segs = wers.iter().enumerate().map(|(i, w)| seg(&format!("w{i}"), 5000, *w)).collect();
    let (kept, _) = filter_by_wer(segs, 0.6, 0.8).map_err(|e| e.to_string())?;
    let mut kw: Vec<f64> = kept.iter().map(|s| s.wer.unwrap()).collect();
    kw.sort_by(f64::total_cmp);
    ensure!(kw == [0.1, 0.2, 0.3], "wer kept {kw:?}");

    // (1,0,0,0) against (1,1,1,1) is exactly 0.5.
    let mut emb = HashMap::new();
    let x = Embedding::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    emb.insert("en0".to_owned(), x.clone());
    emb.insert("es0".to_owned(), Embedding::new(vec![49.0, 7599f64.sqrt(), 0.0, 0.0]).unwrap());
    emb.insert("en1".to_owned(), x);
    emb.insert("es1".to_owned(), Embedding::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap());
    let (kept, dropped) = filter_pairs_by_similarity(vec![pair(0), pair(1)], &emb, 0.5).map_err(|e| e.to_string())?;
    let ks: Vec<f64> = kept.iter().map(|p| p.cross_similarity.unwrap()).collect();
    let ds: Vec<f64> = dropped.iter().map(|p| p.cross_similarity.unwrap()).collect();
    ensure!(ks.len() == 1 && (ks[0] - 0.49).abs() < 1e-12, "similarity kept {ks:?}");
    ensure!(ds == [0.5], "similarity dropped {ds:?}");

    let mut labels = HashMap::new();
    let pairs: Vec<_> = (0..9)
        .map(|i| {
            let cluster = usize::from(i >= 5);
            labels.insert(
                format!("en{i}"),
                SpeakerLabel {
                    cluster_id: cluster,
                    title_id: "t".into(),
                    language: Language::En,
                },
            );
            pair(i)
        })
        .collect();
    let (kept, dropped) = filter_speakers_min_count(pairs, &labels, 5).map_err(|e| e.to_string())?;
    let k: Vec<usize> = kept.iter().map(|p| labels[&p.en_utterance_id].cluster_id).collect();
    ensure!(k == [0; 5] && dropped.len() == 4, "speaker filter kept {k:?}");
    Ok("duration [3,15] inclusive, wer {0.1,0.2,0.3}, sim 0.49 kept / 0.50 dropped, 5 kept / 4 dropped".into())
}

fn end_to_end() -> Outcome {
    let corpus = common::build_corpus();
    let start = Instant::now();
    let first = run_pipeline(&corpus.config("r1")).map_err(|e| e.to_string())?;
    let first_s = start.elapsed().as_secs_f64();
    ensure!(first_s < 60.0, "first run took {first_s:.1} s");
    let bytes = std::fs::read(&first.manifest_path).map_err(|e| e.to_string())?;

    let golden = std::fs::read(common::golden_dir().join("mini_corpus_manifest.jsonl")).map_err(|e| e.to_string())?;
    ensure!(bytes == golden, "manifest differs from golden file");

    let repeat = run_pipeline(&corpus.config("r2")).map_err(|e| e.to_string())?;
    ensure!(std::fs::read(&repeat.manifest_path).map_err(|e| e.to_string())? == bytes, "repeat run differs");
    let mut cfg = corpus.config("r4");
    cfg.parallelism = 4;
    let par = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    ensure!(std::fs::read(&par.manifest_path).map_err(|e| e.to_string())? == bytes, "parallelism 4 differs");

    // The golden rows agree with a hand simulation of every stage rule.
    let ex = common::simulate(&corpus.defs);
    let mut by_pair: BTreeMap<&str, (String, String)> = BTreeMap::new();
    for row in &first.rows {
        let e = by_pair.entry(row.pair_id.as_deref().unwrap_or("")).or_default();
        match row.language {
            Language::En => e.0 = row.utterance_id.clone(),
            Language::Es => e.1 = row.utterance_id.clone(),
        }
    }
    let pairs: std::collections::BTreeSet<_> = by_pair.into_values().collect();
    ensure!(pairs == ex.pairs, "pairs differ from hand simulation");
    Ok(format!("{} rows, golden match, repeat and parallelism 4 identical, first run {first_s:.2} s", first.rows.len()))
}

fn stats_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let durs: Vec<f64> = (0..1000).map(|_| rng.gen_range(500..20_000) as f64 / 1000.0).collect();
    let s = corpus_stats(&durs, 1.0).map_err(|e| e.to_string())?;

    let mut sorted = durs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    for d in &durs {
        sum += d;
    }
    ensure!(s.count == 1000, "count {}", s.count);
    ensure!(s.min_s == sorted[0] && s.max_s == sorted[999], "extremes");
    ensure!(s.mean_s == sum / 1000.0, "mean {} vs {}", s.mean_s, sum / 1000.0);
    ensure!(s.total_s == sum, "total");
    ensure!(s.histogram.len() == sorted[999].floor() as usize + 1, "bucket count {}", s.histogram.len());
    for (i, b) in s.histogram.iter().enumerate() {
        let n = durs.iter().filter(|d| **d >= i as f64 && **d < i as f64 + 1.0).count();
        ensure!(b.count == n, "bucket {i}: {} vs {n}", b.count);
    }
    let table = s.render_table();
    for (field, v) in [("count", "1000".to_owned()), ("min_s", format!("{:.3}", s.min_s)), ("max_s", format!("{:.3}", s.max_s)), ("mean_s", format!("{:.3}", s.mean_s))] {
        ensure!(table.lines().any(|l| l.starts_with(field) && l.trim_end().ends_with(&v)), "report lacks {field}");
    }
    Ok(format!("1000 durations exact, mean {:.3} s", s.mean_s))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("edit-distance oracle", wer_oracle),
        ("bleu hand oracle", bleu_oracle),
        ("unit codec round-trip", codec_roundtrip),
        ("k-means", kmeans_checks),
        ("yin pitch", yin_checks),
        ("threshold filters", threshold_filters),
        ("end-to-end determinism", end_to_end),
        ("stats correctness", stats_check),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (name, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => writeln!(out, "PASS  {name}: {detail}").unwrap(),
            Err(why) => {
                failed += 1;
                writeln!(out, "FAIL  {name}: {why}").unwrap();
            }
        }
    }
    writeln!(out, "acceptance: {} passed, {failed} failed", criteria.len() - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}

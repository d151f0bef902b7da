//! Score transcripts against subtitles and apply the WER and duration filters.

use dubpair::filtering::{filter_by_duration, filter_by_wer, SegmentRecord};
use dubpair::filtering::{DEFAULT_KEEP_FRACTION, DEFAULT_MAX_DURATION_S, DEFAULT_MIN_DURATION_S, DEFAULT_WER_MAX};
use dubpair::Language;

fn main() -> dubpair::Result<()> {
    let rows = [
        ("u1", 4_000, "I told you, we're leaving tonight.", "i told you we're leaving tonight"),
        ("u2", 5_200, "Nobody moves until I say so.", "nobody moves until i say so"),
        ("u3", 3_100, "Give me the keys.", "give me the peas"),
        ("u4", 6_000, "That was never part of the deal.", "that was part of a meal"),
        ("u5", 2_000, "Run!", "run"),
        ("u6", 16_500, "Listen to me, all of you, because I will only say this once.", "listen to me all of you because i will only say this once"),
    ];
    let segments = rows
        .iter()
        .map(|(id, dur, sub, asr)| SegmentRecord::new(*id, "demo", Language::En, 0, *dur, *sub).with_transcript(*asr))
        .collect::<dubpair::Result<Vec<_>>>()?;
    for s in &segments {
        println!("{}  {:>5.2} s  wer {:.3}", s.utterance_id, s.duration_s, s.wer.unwrap_or(f64::NAN));
    }

    let (kept, dropped) = filter_by_wer(segments, DEFAULT_WER_MAX, DEFAULT_KEEP_FRACTION)?;
    println!("\nwer filter kept {:?}", kept.iter().map(|s| &s.utterance_id).collect::<Vec<_>>());
    println!("wer filter dropped {:?}", dropped.iter().map(|s| &s.utterance_id).collect::<Vec<_>>());

    let (kept, dropped) = filter_by_duration(kept, DEFAULT_MIN_DURATION_S, DEFAULT_MAX_DURATION_S);
    println!("duration filter kept {:?}", kept.iter().map(|s| &s.utterance_id).collect::<Vec<_>>());
    println!("duration filter dropped {:?}", dropped.iter().map(|s| &s.utterance_id).collect::<Vec<_>>());
    Ok(())
}

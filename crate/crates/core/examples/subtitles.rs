//! Parse an SRT file, merge same-speaker fragments and print the result.
//!
//! Run with `cargo run --example subtitles [path.srt]`.

use dubpair::subtitle::{merge_cues, parse_srt, write_srt, DEFAULT_MAX_GAP_MS};
use dubpair::Language;

const SAMPLE: &str = "\
1
00:00:01,000 --> 00:00:02,400
JOHN: We should leave

2
00:00:02,900 --> 00:00:04,100
JOHN: before it gets dark.

3
00:00:05,500 --> 00:00:07,000
<i>Where would we go?</i>

4
00:00:07,000 --> 00:00:06,000
broken timing
";

fn main() -> dubpair::Result<()> {
    let raw = match std::env::args().nth(1) {
        Some(p) => std::fs::read(p).expect("readable subtitle file"),
        None => SAMPLE.as_bytes().to_vec(),
    };
    let parsed = parse_srt(&raw, "demo", Language::En)?;
    for w in &parsed.warnings {
        println!("warning: {w}");
    }
    println!("{} cues parsed, {} rejected", parsed.track.cues.len(), parsed.rejected());

    let merged = merge_cues(&parsed.track, DEFAULT_MAX_GAP_MS);
    println!("{} cues after merging:\n", merged.cues.len());
    print!("{}", write_srt(&merged));
    Ok(())
}

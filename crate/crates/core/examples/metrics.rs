//! Corpus BLEU, duration statistics and rating aggregation.

use dubpair::filtering::TokenSequence;
use dubpair::metrics::{aggregate_ratings, bleu, corpus_stats, read_rating_sheets};

fn main() -> dubpair::Result<()> {
    let hyp = [TokenSequence::from_whitespace("the cat sat on the mat")];
    let refs = [TokenSequence::from_whitespace("the cat sat on a mat")];
    println!("BLEU {:.2}\n", bleu(&hyp, &refs, 4)?);

    let durations = [3.2, 4.8, 5.1, 5.5, 6.9, 7.4, 9.0, 11.3, 14.6];
    print!("{}", corpus_stats(&durations, 2.0)?.render_table());

    let sheets = "\
item_id,rater_id,emotion,emphasis,intonation,rhythm
clip1,r1,4,3,4,4
clip1,r2,5,4,4,3
clip2,r1,3,3,2,4
";
    let summary = aggregate_ratings(&read_rating_sheets(sheets.as_bytes())?)?;
    print!("\n{}", summary.render_table());
    Ok(())
}

//! Build the synthetic mini corpus, run every stage and validate the manifest.
//!
//! Run with `cargo run --example full_pipeline [output_dir]`.

use dubpair::fixtures::{mini_corpus_config, write_mini_corpus};
use dubpair::pipeline::{run_pipeline, validate_manifest};

fn main() -> dubpair::Result<()> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());
    let input = root.join("in");
    write_mini_corpus(&input, 16_000)?;

    let mut cfg = mini_corpus_config(&input, root.join("out"));
    cfg.parallelism = 2;
    let out = run_pipeline(&cfg)?;

    println!("{:<18} {:>6} {:>6} {:>7}", "stage", "in", "out", "dropped");
    for r in &out.reports {
        println!("{:<18} {:>6} {:>6} {:>7}", r.stage, r.input_count, r.output_count, r.dropped_count);
        for w in &r.warnings {
            println!("  warning: {w}");
        }
    }
    println!("\nmanifest: {} ({} rows)", out.manifest_path.display(), out.rows.len());
    println!("rejects:  {} ({} rows)", out.rejects_path.display(), out.rejects.len());
    let violations = validate_manifest(&out.manifest_path);
    println!("validation: {}", if violations.is_empty() { "ok".to_owned() } else { format!("{violations:?}") });
    Ok(())
}

//! Learn a k-means codebook over MFCC frames and encode audio as condensed
//! discrete unit sequences.

use dubpair::audio::{mfcc, AudioBuffer, MfccConfig};
use dubpair::units::{assign_units, condense, expand, kmeans_fit, KMeansConfig};

fn chirp(f0: f64, f1: f64) -> AudioBuffer {
    let n = 16_000;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (0.3 * (2.0 * std::f64::consts::PI * (f0 * t + 0.5 * (f1 - f0) * t * t)).sin()) as f32
        })
        .collect();
    AudioBuffer::new(samples, 16_000).expect("valid buffer")
}

fn main() -> dubpair::Result<()> {
    let cfg = MfccConfig::default();
    let clips = [chirp(120.0, 900.0), chirp(2000.0, 300.0)];
    let feats = clips.iter().map(|c| mfcc(c, &cfg)).collect::<dubpair::Result<Vec<_>>>()?;
    let points: Vec<f64> = feats.iter().flat_map(|f| f.as_slice().iter().copied()).collect();

    let codebook = kmeans_fit(&points, cfg.n_coeffs, &KMeansConfig::new(8, 0))?;
    println!("codebook: k={} dim={} inertia {:.2}", codebook.k, codebook.dim, codebook.inertia);

    for (i, f) in feats.iter().enumerate() {
        let units = assign_units(f.as_slice(), &codebook)?;
        let condensed = condense(&units);
        assert_eq!(expand(&condensed)?, units);
        println!("clip {i}: {} frames -> {} runs: {}", units.len(), condensed.runs.len(), condensed.to_line());
    }
    Ok(())
}

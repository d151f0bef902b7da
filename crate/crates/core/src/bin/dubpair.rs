use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dubpair::adapter::{mock_adapter, serve_lines, spawn_sidecar, AdapterSession, MockFixtures, DEFAULT_EMBED_DIM};
use dubpair::audio::{mfcc, read_wav, resample, write_wav, MfccConfig, CANONICAL_RATE_HZ};
use dubpair::filtering::{filter_by_duration, filter_by_wer, SegmentRecord, TokenSequence};
use dubpair::metrics::{aggregate_ratings, bleu_with, corpus_stats, read_rating_sheets, Smoothing};
use dubpair::pipeline::{
    export_csv, read_manifest, render_segment, run_pipeline, utterance_id, validate_manifest, PipelineConfig,
    MOCK_FIXTURES_FILE,
};
use dubpair::speakers::pair_segments;
use dubpair::subtitle::{merge_cues, parse_srt, write_csv, write_srt};
use dubpair::units::{assign_units, condense, kmeans_fit, Centroids, KMeansConfig};
use dubpair::{Error, Language};

#[derive(Parser)]
#[command(name = "dubpair", version, about = "Build paired speech-translation corpora from dubbed media")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage over the configured input root.
    RunAll {
        /// Also export the manifest as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Parse (and optionally merge) one SRT file.
    Parse {
        srt: PathBuf,
        #[arg(long, default_value = "en")]
        lang: Language,
        #[arg(long, default_value = "title")]
        title: String,
        #[arg(long)]
        merge: bool,
        #[arg(long, value_parser = ["srt", "csv", "json"], default_value = "srt")]
        format: String,
    },
    /// Cut one track into merged-cue segments.
    Segment {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        srt: PathBuf,
        #[arg(long, default_value = "en")]
        lang: Language,
        #[arg(long, default_value = "title")]
        title: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transcribe audio files through the configured adapter.
    Asr {
        #[arg(required = true)]
        audio: Vec<PathBuf>,
        #[arg(long, default_value = "en")]
        lang: Language,
        /// Mock fixtures to use when no sidecar command is configured.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Apply the WER and duration filters to scored segments (JSON lines).
    Filter {
        segments: PathBuf,
        /// Write dropped segments here.
        #[arg(long)]
        rejects: Option<PathBuf>,
    },
    /// Pair English and Spanish segments (JSON lines) by overlap.
    Pair {
        #[arg(long)]
        en: PathBuf,
        #[arg(long)]
        es: PathBuf,
    },
    /// Learn a unit codebook over WAV files, or apply an existing one.
    Units {
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Reuse this codebook instead of fitting one.
        #[arg(long)]
        centroids: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Duration statistics for a manifest.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        bucket: f64,
        /// Machine-readable output.
        #[arg(long)]
        json: bool,
    },
    /// Corpus BLEU of a hypothesis file against a reference file, one segment per line.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_n: usize,
        /// Epsilon smoothing for zero n-gram matches.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Check a manifest's invariants.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Mean ratings per aspect from a CSV/TSV of rating sheets.
    AggregateRatings {
        sheets: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve the mock adapter over stdin/stdout.
    MockAdapter {
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
        embed_dim: usize,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => Failure::Usage(e.to_string()),
            other => other.into(),
        })?,
        None => PipelineConfig::new(".", "dubpair_out"),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| Failure::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn print_jsonl<T: serde::Serialize>(rows: &[T]) -> CliResult {
    let mut out = std::io::stdout().lock();
    for r in rows {
        serde_json::to_writer(&mut out, r).map_err(runtime)?;
        writeln!(out).map_err(runtime)?;
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<TokenSequence>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(TokenSequence::from_whitespace).collect())
}

fn adapter_session(cfg: &PipelineConfig, fixtures: Option<&Path>) -> Result<Box<dyn AdapterSession>, Failure> {
    if let Some(cmd) = cfg.effective_adapter_cmd() {
        return Ok(Box::new(spawn_sidecar(&cmd).map_err(runtime)?));
    }
    let path = fixtures
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.input_root.join(MOCK_FIXTURES_FILE));
    let fx = MockFixtures::load(&path)?;
    Ok(Box::new(mock_adapter(fx, DEFAULT_EMBED_DIM)))
}

fn run(cli: Cli) -> CliResult {
    let config = cli.config.as_deref();
    match cli.command {
        Command::RunAll { csv } => {
            let cfg = load_config(config)?;
            let out = run_pipeline(&cfg)?;
            if let Some(path) = csv {
                let f = std::fs::File::create(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
                export_csv(&out.rows, f)?;
            }
            println!(
                "{} rows written to {} ({} rejects)",
                out.rows.len(),
                out.manifest_path.display(),
                out.rejects.len()
            );
        }
        Command::Parse {
            srt,
            lang,
            title,
            merge,
            format,
        } => {
            let cfg = load_config(config)?;
            let raw = std::fs::read(&srt).map_err(|e| runtime(format!("{}: {e}", srt.display())))?;
            let parsed = parse_srt(&raw, &title, lang).map_err(|e| Failure::Usage(e.to_string()))?;
            for w in &parsed.warnings {
                eprintln!("warning: {w}");
            }
            let track = if merge { merge_cues(&parsed.track, cfg.merge_gap_ms) } else { parsed.track };
            match format.as_str() {
                "csv" => write_csv(&track, std::io::stdout().lock())?,
                "json" => println!("{}", serde_json::to_string_pretty(&track).map_err(runtime)?),
                _ => print!("{}", write_srt(&track)),
            }
        }
        Command::Segment {
            wav,
            srt,
            lang,
            title,
            out,
        } => {
            let cfg = load_config(config)?;
            let raw = std::fs::read(&srt).map_err(|e| runtime(format!("{}: {e}", srt.display())))?;
            let parsed = parse_srt(&raw, &title, lang).map_err(|e| Failure::Usage(e.to_string()))?;
            let track = merge_cues(&parsed.track, cfg.merge_gap_ms);
            let audio = read_wav(&wav)?;
            std::fs::create_dir_all(&out).map_err(runtime)?;
            let mut records = Vec::new();
            for (i, cue) in track.cues.iter().enumerate() {
                let id = utterance_id(&title, lang, i + 1);
                match render_segment(&audio, cue.start_ms, cue.end_ms, cfg.sample_rate_hz) {
                    Ok(seg) => {
                        write_wav(out.join(format!("{id}.wav")), &seg)?;
                        records.push(SegmentRecord::new(id, &title, lang, cue.start_ms, cue.end_ms, &cue.text));
                    }
                    Err(e) => eprintln!("warning: {id}: {e}"),
                }
            }
            print_jsonl(&records)?;
        }
        Command::Asr { audio, lang, fixtures } => {
            let cfg = load_config(config)?;
            let mut session = adapter_session(&cfg, fixtures.as_deref())?;
            let mut failed = false;
            for path in &audio {
                match session.transcribe(path, lang) {
                    Ok(text) => println!("{}\t{text}", path.display()),
                    Err(e) => {
                        eprintln!("{}: {e}", path.display());
                        failed = true;
                    }
                }
            }
            session.shutdown().map_err(runtime)?;
            if failed {
                return Err(Failure::Runtime("some files could not be transcribed".into()));
            }
        }
        Command::Filter { segments, rejects } => {
            let cfg = load_config(config)?;
            let recs: Vec<SegmentRecord> = read_jsonl(&segments)?;
            let (kept, mut dropped) = filter_by_wer(recs, cfg.wer_max, cfg.keep_fraction)?;
            let (kept, too_long_or_short) = filter_by_duration(kept, cfg.min_duration_s, cfg.max_duration_s);
            dropped.extend(too_long_or_short);
            eprintln!("kept {}, dropped {}", kept.len(), dropped.len());
            if let Some(path) = rejects {
                dubpair::pipeline::write_jsonl(&path, &dropped)?;
            }
            print_jsonl(&kept)?;
        }
        Command::Pair { en, es } => {
            let cfg = load_config(config)?;
            let en: Vec<SegmentRecord> = read_jsonl(&en)?;
            let es: Vec<SegmentRecord> = read_jsonl(&es)?;
            let mut by_title: HashMap<String, (Vec<SegmentRecord>, Vec<SegmentRecord>)> = HashMap::new();
            for r in en {
                by_title.entry(r.title_id.clone()).or_default().0.push(r);
            }
            for r in es {
                by_title.entry(r.title_id.clone()).or_default().1.push(r);
            }
            let mut titles: Vec<_> = by_title.into_iter().collect();
            titles.sort_by(|a, b| a.0.cmp(&b.0));
            for (_, (en, es)) in titles {
                print_jsonl(&pair_segments(&en, &es, cfg.pair_iou_min)?)?;
            }
        }
        Command::Units {
            wavs,
            out,
            centroids,
            k,
            seed,
        } => {
            let cfg = load_config(config)?;
            let mcfg = MfccConfig {
                hop_ms: cfg.frame_hop_ms as f64,
                ..MfccConfig::default()
            };
            let feats = wavs
                .iter()
                .map(|w| mfcc(&resample(&read_wav(w)?, CANONICAL_RATE_HZ)?, &mcfg))
                .collect::<Result<Vec<_>, Error>>()?;
            std::fs::create_dir_all(&out).map_err(runtime)?;
            let codebook = match centroids {
                Some(p) => Centroids::load(&p)?,
                None => {
                    let points: Vec<f64> = feats.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
                    let kcfg = KMeansConfig::new(k.unwrap_or(cfg.k_units), seed.unwrap_or(cfg.seed));
                    let c = kmeans_fit(&points, mcfg.n_coeffs, &kcfg)?;
                    c.save(out.join("centroids.txt"))?;
                    c
                }
            };
            for (w, m) in wavs.iter().zip(&feats) {
                let stem = w.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let line = condense(&assign_units(m.as_slice(), &codebook)?).to_line();
                let path = out.join(format!("{stem}.units"));
                std::fs::write(&path, line + "\n").map_err(runtime)?;
                println!("{}", path.display());
            }
        }
        Command::Stats { manifest, bucket, json } => {
            let rows = read_manifest(&manifest)?;
            let durations: Vec<f64> = rows.iter().map(|r| r.duration_s).collect();
            let stats = corpus_stats(&durations, bucket)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&stats).map_err(runtime)?);
            } else {
                print!("{}", stats.render_table());
            }
        }
        Command::Bleu {
            hyp,
            reference,
            max_n,
            epsilon,
        } => {
            let smoothing = epsilon.map(Smoothing::Epsilon).unwrap_or_default();
            let b = bleu_with(&read_lines(&hyp)?, &read_lines(&reference)?, max_n, smoothing)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            println!("{:.2}", b.score);
        }
        Command::Validate { manifest } => {
            let violations = validate_manifest(&manifest);
            for v in &violations {
                println!("{v}");
            }
            if !violations.is_empty() {
                return Err(Failure::Usage(format!("{} violation(s)", violations.len())));
            }
            println!("ok");
        }
        Command::AggregateRatings { sheets, json } => {
            let f = std::fs::File::open(&sheets).map_err(|e| runtime(format!("{}: {e}", sheets.display())))?;
            let summary = aggregate_ratings(&read_rating_sheets(f).map_err(|e| Failure::Usage(e.to_string()))?)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summary).map_err(runtime)?);
            } else {
                print!("{}", summary.render_table());
            }
        }
        Command::MockAdapter { fixtures, embed_dim } => {
            let fx = match fixtures {
                Some(p) => MockFixtures::load(p)?,
                None => MockFixtures::default(),
            };
            let mut mock = mock_adapter(fx, embed_dim);
            let stdin = std::io::stdin().lock();
            serve_lines(stdin, std::io::stdout().lock(), |r| mock.respond(r)).map_err(runtime)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

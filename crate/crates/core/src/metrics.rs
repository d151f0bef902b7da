//! Corpus BLEU, duration statistics and listener-rating aggregation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Smoothing {
    /// Any zero n-gram precision makes the score zero.
    #[default]
    None,
    /// Replace a zero match count with `epsilon` before dividing.
    Epsilon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuBreakdown {
    pub score: f64,
    /// Clipped matches and totals for orders 1..=max_n.
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

/// Corpus BLEU on a 0..=100 scale, one reference per hypothesis.
pub fn bleu(hypotheses: &[TokenSequence], references: &[TokenSequence], max_n: usize) -> Result<f64> {
    bleu_with(hypotheses, references, max_n, Smoothing::None).map(|b| b.score)
}

pub fn bleu_with(
    hypotheses: &[TokenSequence],
    references: &[TokenSequence],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuBreakdown> {
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch(hypotheses.len(), references.len()));
    }
    if max_n == 0 {
        return Err(Error::InvalidArgument("max_n must be positive".into()));
    }
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let ref_counts = ngram_counts(r.tokens(), n);
            for (gram, count) in ngram_counts(h.tokens(), n) {
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                totals[n - 1] += count;
            }
        }
    }
    if ref_len == 0 {
        return Err(Error::EmptyInput("references"));
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let mut log_sum = 0.0;
    let mut zero = hyp_len == 0;
    for (&m, &t) in matches.iter().zip(&totals) {
        let m = match (m, smoothing) {
            (0, Smoothing::Epsilon(eps)) if t > 0 => eps,
            (m, _) => m as f64,
        };
        if m == 0.0 || t == 0 {
            zero = true;
            break;
        }
        log_sum += (m / t as f64).ln();
    }
    let score = if zero {
        0.0
    } else {
        100.0 * brevity_penalty * (log_sum / max_n as f64).exp()
    };
    Ok(BleuBreakdown {
        score: score.clamp(0.0, 100.0),
        matches,
        totals,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub start_s: f64,
    pub width_s: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub min_s: f64,
    pub max_s: f64,
    pub mean_s: f64,
    pub total_s: f64,
    pub histogram: Vec<HistogramBucket>,
}

/// Count, extremes, mean and a fixed-width histogram starting at zero.
///
/// The histogram spans `[0, ceil(max))`, widened by one bucket when the
/// maximum sits exactly on a bucket edge so that every value is counted.
pub fn corpus_stats(durations_s: &[f64], bucket_width_s: f64) -> Result<CorpusStats> {
    if durations_s.is_empty() {
        return Err(Error::EmptyInput("durations"));
    }
    if !(bucket_width_s > 0.0) {
        return Err(Error::InvalidArgument("bucket width must be positive".into()));
    }
    if let Some(bad) = durations_s.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(Error::InvalidArgument(format!("invalid duration {bad}")));
    }
    let min_s = durations_s.iter().copied().fold(f64::INFINITY, f64::min);
    let max_s = durations_s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total_s: f64 = durations_s.iter().sum();
    let mean_s = total_s / durations_s.len() as f64;
    let n_buckets = ((max_s.ceil() / bucket_width_s).ceil() as usize).max((max_s / bucket_width_s).floor() as usize + 1);
    let mut counts = vec![0usize; n_buckets];
    for &d in durations_s {
        counts[((d / bucket_width_s).floor() as usize).min(n_buckets - 1)] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBucket {
            start_s: i as f64 * bucket_width_s,
            width_s: bucket_width_s,
            count,
        })
        .collect();
    Ok(CorpusStats {
        count: durations_s.len(),
        min_s,
        max_s,
        mean_s,
        total_s,
        histogram,
    })
}

impl CorpusStats {
    /// Aligned plain-text report.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<10} {:>12}\n", "count", self.count));
        out.push_str(&format!("{:<10} {:>12.3}\n", "min_s", self.min_s));
        out.push_str(&format!("{:<10} {:>12.3}\n", "max_s", self.max_s));
        out.push_str(&format!("{:<10} {:>12.3}\n", "mean_s", self.mean_s));
        out.push_str(&format!("{:<10} {:>12.3}\n", "total_s", self.total_s));
        out.push('\n');
        out.push_str(&format!("{:>9} {:>9} {:>8}\n", "from_s", "to_s", "count"));
        let peak = self.histogram.iter().map(|b| b.count).max().unwrap_or(0).max(1);
        for b in &self.histogram {
            let bar = "#".repeat((b.count * 40).div_ceil(peak));
            out.push_str(&format!(
                "{:>9.1} {:>9.1} {:>8} {}\n",
                b.start_s,
                b.start_s + b.width_s,
                b.count,
                bar
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Emotion,
    Emphasis,
    Intonation,
    Rhythm,
}

impl Aspect {
    pub const ALL: [Aspect; 4] = [Aspect::Emotion, Aspect::Emphasis, Aspect::Intonation, Aspect::Rhythm];

    pub fn name(self) -> &'static str {
        match self {
            Aspect::Emotion => "emotion",
            Aspect::Emphasis => "emphasis",
            Aspect::Intonation => "intonation",
            Aspect::Rhythm => "rhythm",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aspect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Aspect::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidRating(format!("unknown aspect {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSheet {
    pub item_id: String,
    pub rater_id: String,
    pub scores: BTreeMap<Aspect, u8>,
}

impl RatingSheet {
    pub fn new(item_id: impl Into<String>, rater_id: impl Into<String>, scores: BTreeMap<Aspect, u8>) -> Result<Self> {
        let sheet = Self {
            item_id: item_id.into(),
            rater_id: rater_id.into(),
            scores,
        };
        sheet.validate()?;
        Ok(sheet)
    }

    /// Scores in `Aspect::ALL` order.
    pub fn uniform(item_id: &str, rater_id: &str, scores: [u8; 4]) -> Result<Self> {
        Self::new(item_id, rater_id, Aspect::ALL.into_iter().zip(scores).collect())
    }

    fn validate(&self) -> Result<()> {
        for a in Aspect::ALL {
            match self.scores.get(&a) {
                None => {
                    return Err(Error::InvalidRating(format!(
                        "{}/{}: missing {a}",
                        self.item_id, self.rater_id
                    )))
                }
                Some(s) if !(1..=5).contains(s) => {
                    return Err(Error::InvalidRating(format!(
                        "{}/{}: {a} score {s} outside 1..=5",
                        self.item_id, self.rater_id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub sheets: usize,
    pub overall: BTreeMap<Aspect, f64>,
    pub per_item: BTreeMap<String, BTreeMap<Aspect, f64>>,
}

impl RatingSummary {
    /// One header row plus one row per item and an `all` row.
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<16}", "item");
        for a in Aspect::ALL {
            out.push_str(&format!(" {:>10}", a.name()));
        }
        out.push('\n');
        let row = |name: &str, m: &BTreeMap<Aspect, f64>| {
            let mut line = format!("{name:<16}");
            for a in Aspect::ALL {
                line.push_str(&format!(" {:>10.2}", m[&a]));
            }
            line.push('\n');
            line
        };
        for (item, means) in &self.per_item {
            out.push_str(&row(item, means));
        }
        out.push_str(&row("all", &self.overall));
        out
    }
}

fn means(sheets: &[&RatingSheet]) -> BTreeMap<Aspect, f64> {
    Aspect::ALL
        .into_iter()
        .map(|a| {
            let sum: u32 = sheets.iter().map(|s| s.scores[&a] as u32).sum();
            (a, sum as f64 / sheets.len() as f64)
        })
        .collect()
}

/// Per-aspect means over all sheets and per item. A repeated
/// `(item, rater)` pair is rejected.
pub fn aggregate_ratings(sheets: &[RatingSheet]) -> Result<RatingSummary> {
    if sheets.is_empty() {
        return Err(Error::EmptyInput("rating sheets"));
    }
    let mut seen = HashSet::new();
    let mut by_item: BTreeMap<&str, Vec<&RatingSheet>> = BTreeMap::new();
    for s in sheets {
        s.validate()?;
        if !seen.insert((s.item_id.as_str(), s.rater_id.as_str())) {
            return Err(Error::InvalidRating(format!(
                "duplicate sheet for item {} rater {}",
                s.item_id, s.rater_id
            )));
        }
        by_item.entry(&s.item_id).or_default().push(s);
    }
    let all: Vec<&RatingSheet> = sheets.iter().collect();
    Ok(RatingSummary {
        sheets: sheets.len(),
        overall: means(&all),
        per_item: by_item.into_iter().map(|(k, v)| (k.to_owned(), means(&v))).collect(),
    })
}

/// Reads `item_id, rater_id, emotion, emphasis, intonation, rhythm` rows.
///
/// Comma or tab delimited. A header row is recognised by its first field
/// being `item_id` and may reorder the aspect columns.
pub fn read_rating_sheets<R: Read>(mut reader: R) -> Result<Vec<RatingSheet>> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<ratings>", e))?;
    let delimiter = if text.lines().next().is_some_and(|l| l.contains('\t')) {
        b'\t'
    } else {
        b','
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut order = Aspect::ALL;
    let mut sheets = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != 6 {
            return Err(Error::InvalidRating(format!(
                "row {}: expected 6 fields, found {}",
                line + 1,
                record.len()
            )));
        }
        if line == 0 && record[0].eq_ignore_ascii_case("item_id") {
            for (slot, field) in order.iter_mut().zip(record.iter().skip(2)) {
                *slot = field.parse()?;
            }
            continue;
        }
        let mut scores = BTreeMap::new();
        for (aspect, field) in order.iter().zip(record.iter().skip(2)) {
            let v: u8 = field
                .parse()
                .map_err(|_| Error::InvalidRating(format!("row {}: bad score {field:?}", line + 1)))?;
            scores.insert(*aspect, v);
        }
        sheets.push(RatingSheet::new(&record[0], &record[1], scores)?);
    }
    Ok(sheets)
}

//! Speaker embeddings, pseudo-labels and cross-lingual pairing.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::SegmentRecord;
use crate::language::Language;

pub const DEFAULT_TAU: f64 = 0.75;
pub const DEFAULT_IOU_MIN: f64 = 0.5;
pub const DEFAULT_SIM_MAX: f64 = 0.5;
pub const DEFAULT_MIN_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding {
    vector: Vec<f64>,
}

impl Embedding {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::InvalidArgument("embedding has no dimensions".into()));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("embedding has non-finite values".into()));
        }
        if norm(&vector) == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self { vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }

    pub fn normalized(&self) -> Embedding {
        let n = norm(&self.vector);
        Embedding {
            vector: self.vector.iter().map(|v| v / n).collect(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine_raw(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (norm(a) * norm(b))).clamp(-1.0, 1.0)
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(cosine_raw(&a.vector, &b.vector))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpeakerLabel {
    pub cluster_id: usize,
    pub title_id: String,
    pub language: Language,
}

/// Greedy online clustering in input order.
///
/// Each embedding joins the existing cluster whose renormalized running mean
/// is most similar, provided that similarity is at least `tau`; otherwise it
/// opens a new cluster. Cluster ids are dense and ordered by first member.
pub fn pseudo_label(
    embeddings: &[Embedding],
    tau: f64,
    title_id: &str,
    language: Language,
) -> Result<Vec<SpeakerLabel>> {
    let Some(first) = embeddings.first() else {
        return Ok(Vec::new());
    };
    let dim = first.dim();
    // Running sums of unit vectors; their direction is the renormalized mean.
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.dim(),
            });
        }
        let unit = e.normalized();
        let mut best: Option<(usize, f64)> = None;
        for (id, sum) in sums.iter().enumerate() {
            let sim = if norm(sum) == 0.0 { -1.0 } else { cosine_raw(sum, unit.as_slice()) };
            if sim >= tau && best.map_or(true, |(_, b)| sim > b) {
                best = Some((id, sim));
            }
        }
        let id = match best {
            Some((id, _)) => {
                sums[id].iter_mut().zip(unit.as_slice()).for_each(|(s, u)| *s += u);
                id
            }
            None => {
                sums.push(unit.vector);
                sums.len() - 1
            }
        };
        labels.push(SpeakerLabel {
            cluster_id: id,
            title_id: title_id.to_owned(),
            language,
        });
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedUtterance {
    pub title_id: String,
    pub en_utterance_id: String,
    pub es_utterance_id: String,
    pub overlap_iou: f64,
    /// Filled in by [`filter_pairs_by_similarity`].
    #[serde(default)]
    pub cross_similarity: Option<f64>,
}

/// Intersection over union of two millisecond intervals.
pub fn interval_iou(a: (u64, u64), b: (u64, u64)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = a.1.max(b.1) - a.0.min(b.0);
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// One-to-one matching of English and Spanish segments by timeline overlap.
///
/// Candidates are taken greedily in descending IoU (ties by English then
/// Spanish position); pairs under `iou_min` are discarded. Output is ordered
/// by English start time.
pub fn pair_segments(en: &[SegmentRecord], es: &[SegmentRecord], iou_min: f64) -> Result<Vec<PairedUtterance>> {
    let Some(title) = en.first().or(es.first()).map(|s| s.title_id.clone()) else {
        return Ok(Vec::new());
    };
    if let Some(other) = en.iter().chain(es).find(|s| s.title_id != title) {
        return Err(Error::TitleMismatch(title, other.title_id.clone()));
    }
    let mut candidates = Vec::new();
    for (i, a) in en.iter().enumerate() {
        for (j, b) in es.iter().enumerate() {
            let iou = interval_iou((a.start_ms, a.end_ms), (b.start_ms, b.end_ms));
            if iou >= iou_min && iou > 0.0 {
                candidates.push((iou, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_en = HashSet::new();
    let mut used_es = HashSet::new();
    let mut chosen = Vec::new();
    for (iou, i, j) in candidates {
        if used_en.contains(&i) || used_es.contains(&j) {
            continue;
        }
        used_en.insert(i);
        used_es.insert(j);
        chosen.push((i, j, iou));
    }
    chosen.sort_by_key(|&(i, _, _)| (en[i].start_ms, i));
    Ok(chosen
        .into_iter()
        .map(|(i, j, iou)| PairedUtterance {
            title_id: title.clone(),
            en_utterance_id: en[i].utterance_id.clone(),
            es_utterance_id: es[j].utterance_id.clone(),
            overlap_iou: iou,
            cross_similarity: None,
        })
        .collect())
}

/// Which side of the similarity threshold survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KeepWhen {
    /// Keep pairs with similarity strictly below the threshold.
    #[default]
    Below,
    /// Keep pairs with similarity at or above the threshold.
    AtLeast,
}

/// Records each pair's cross-lingual voice similarity and keeps those below
/// `sim_max`. Returns `(kept, dropped)`, both annotated.
pub fn filter_pairs_by_similarity(
    pairs: Vec<PairedUtterance>,
    embeddings: &HashMap<String, Embedding>,
    sim_max: f64,
) -> Result<(Vec<PairedUtterance>, Vec<PairedUtterance>)> {
    filter_pairs_by_similarity_with(pairs, embeddings, sim_max, KeepWhen::Below)
}

pub fn filter_pairs_by_similarity_with(
    pairs: Vec<PairedUtterance>,
    embeddings: &HashMap<String, Embedding>,
    threshold: f64,
    rule: KeepWhen,
) -> Result<(Vec<PairedUtterance>, Vec<PairedUtterance>)> {
    let lookup = |id: &str| embeddings.get(id).ok_or_else(|| Error::MissingEmbedding(id.to_owned()));
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for mut pair in pairs {
        let sim = cosine_similarity(lookup(&pair.en_utterance_id)?, lookup(&pair.es_utterance_id)?)?;
        pair.cross_similarity = Some(sim);
        let keep = match rule {
            KeepWhen::Below => sim < threshold,
            KeepWhen::AtLeast => sim >= threshold,
        };
        if keep {
            kept.push(pair);
        } else {
            dropped.push(pair);
        }
    }
    Ok((kept, dropped))
}

/// Grouping used when counting segments per speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CountScope {
    /// Count per English-side speaker cluster within a title.
    #[default]
    EnglishSpeaker,
    /// Count per title regardless of speaker.
    Title,
}

/// Keeps pairs whose English speaker cluster holds at least `min_count`
/// pairs. `labels` is keyed by English utterance id.
pub fn filter_speakers_min_count(
    pairs: Vec<PairedUtterance>,
    labels: &HashMap<String, SpeakerLabel>,
    min_count: usize,
) -> Result<(Vec<PairedUtterance>, Vec<PairedUtterance>)> {
    filter_min_count_scoped(pairs, labels, min_count, CountScope::EnglishSpeaker)
}

pub fn filter_min_count_scoped(
    pairs: Vec<PairedUtterance>,
    labels: &HashMap<String, SpeakerLabel>,
    min_count: usize,
    scope: CountScope,
) -> Result<(Vec<PairedUtterance>, Vec<PairedUtterance>)> {
    let key = |p: &PairedUtterance| -> Result<(String, Option<usize>)> {
        match scope {
            CountScope::Title => Ok((p.title_id.clone(), None)),
            CountScope::EnglishSpeaker => {
                let label = labels
                    .get(&p.en_utterance_id)
                    .ok_or_else(|| Error::InvalidArgument(format!("no speaker label for {}", p.en_utterance_id)))?;
                Ok((label.title_id.clone(), Some(label.cluster_id)))
            }
        }
    };
    let mut kept = pairs;
    let mut dropped = Vec::new();
    loop {
        let mut counts: BTreeMap<(String, Option<usize>), usize> = BTreeMap::new();
        for p in &kept {
            *counts.entry(key(p)?).or_default() += 1;
        }
        let before = kept.len();
        let mut next = Vec::with_capacity(before);
        for p in kept {
            if counts[&key(&p)?] >= min_count {
                next.push(p);
            } else {
                dropped.push(p);
            }
        }
        kept = next;
        if kept.len() == before {
            return Ok((kept, dropped));
        }
    }
}

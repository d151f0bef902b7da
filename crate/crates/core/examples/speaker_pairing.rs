//! Pair English and Spanish segments by overlap, cluster speakers and apply
//! the cross-lingual similarity and minimum-count filters.

use std::collections::HashMap;

use dubpair::filtering::SegmentRecord;
use dubpair::speakers::{
    filter_pairs_by_similarity, filter_speakers_min_count, pair_segments, pseudo_label, Embedding, DEFAULT_IOU_MIN,
    DEFAULT_SIM_MAX, DEFAULT_TAU,
};
use dubpair::Language;

/// A voice is a direction; utterances wobble slightly around it.
fn voice(axis: usize, wobble: f64) -> Embedding {
    let mut v = vec![0.05; 8];
    v[axis] = 1.0;
    v[(axis + 1) % 8] += wobble;
    Embedding::new(v).expect("non-zero vector")
}

fn main() -> dubpair::Result<()> {
    // Six English lines by two actors; the dub reuses one actor's voice once.
    let mut en = Vec::new();
    let mut es = Vec::new();
    let mut emb = HashMap::new();
    let mut en_emb = Vec::new();
    for i in 0..6u64 {
        let start = i * 6_000;
        let en_id = format!("en{i}");
        let es_id = format!("es{i}");
        en.push(SegmentRecord::new(&en_id, "demo", Language::En, start, start + 4_000, "line"));
        es.push(SegmentRecord::new(&es_id, "demo", Language::Es, start + 300, start + 4_400, "frase"));
        let actor = (i % 2) as usize;
        let e = voice(actor, 0.02 * i as f64);
        en_emb.push(e.clone());
        emb.insert(en_id, e);
        // Dub voices live on other axes, except for line 4.
        let dub = if i == 4 { voice(actor, 0.0) } else { voice(4 + actor, 0.01) };
        emb.insert(es_id, dub);
    }

    let pairs = pair_segments(&en, &es, DEFAULT_IOU_MIN)?;
    for p in &pairs {
        println!("{} <-> {}  iou {:.3}", p.en_utterance_id, p.es_utterance_id, p.overlap_iou);
    }

    let labels = pseudo_label(&en_emb, DEFAULT_TAU, "demo", Language::En)?;
    let by_id: HashMap<String, _> = en.iter().map(|s| s.utterance_id.clone()).zip(labels).collect();
    for s in &en {
        println!("{} -> speaker {}", s.utterance_id, by_id[&s.utterance_id].cluster_id);
    }

    let (kept, dropped) = filter_pairs_by_similarity(pairs, &emb, DEFAULT_SIM_MAX)?;
    for p in &dropped {
        println!("dropped {} (same voice, similarity {:.3})", p.en_utterance_id, p.cross_similarity.unwrap_or(0.0));
    }
    let (kept, dropped) = filter_speakers_min_count(kept, &by_id, 3)?;
    println!("{} pairs kept, {} dropped by the per-speaker minimum of 3", kept.len(), dropped.len());
    Ok(())
}

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AdapterError, AdapterRequest, AdapterResponse, AdapterSession, Op};
use crate::error::{Error, Result};
use crate::hashing::{sha256_bytes, sha256_hex};
use crate::language::Language;

pub const DEFAULT_EMBED_DIM: usize = 192;

/// Noise added to a voice's base direction in speaker-conditioned embeddings.
const VOICE_JITTER: f64 = 0.1;

/// Lookup tables for the mock, keyed by the SHA-256 of the audio file bytes.
///
/// `voices` optionally ties a file to a named voice. Files sharing a voice get
/// nearby embeddings; files without one get an embedding seeded purely by
/// their hash.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixtures {
    #[serde(default)]
    pub transcripts: BTreeMap<String, String>,
    #[serde(default)]
    pub voices: BTreeMap<String, String>,
}

impl MockFixtures {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn gaussian_unit(seed: [u8; 32], dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::from_seed(seed);
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// In-process adapter answering from [`MockFixtures`].
///
/// asr returns the registered transcript (or fails with "no fixture"),
/// embed returns a unit vector derived from the content hash, and denoise
/// hands back the input path.
pub struct MockAdapter {
    fixtures: MockFixtures,
    embed_dim: usize,
    next_id: u64,
}

pub fn mock_adapter(fixtures: MockFixtures, embed_dim: usize) -> MockAdapter {
    MockAdapter {
        fixtures,
        embed_dim,
        next_id: 1,
    }
}

impl MockAdapter {
    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Deterministic embedding for content with the given hash.
    pub fn embedding_for_hash(&self, hash_hex: &str) -> Vec<f64> {
        let seed = sha256_bytes(hash_hex.as_bytes());
        let noise = gaussian_unit(seed, self.embed_dim);
        match self.fixtures.voices.get(hash_hex) {
            None => noise,
            Some(voice) => {
                let base = gaussian_unit(sha256_bytes(format!("voice:{voice}").as_bytes()), self.embed_dim);
                let v: Vec<f64> = base.iter().zip(&noise).map(|(b, n)| b + VOICE_JITTER * n).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            }
        }
    }

    fn hash_of(path: &Path) -> std::result::Result<String, String> {
        let bytes = std::fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Ok(sha256_hex(&bytes))
    }

    /// Answers one request. Never fails at the transport level.
    pub fn respond(&mut self, req: &AdapterRequest) -> AdapterResponse {
        if let Err(e) = req.validate() {
            return AdapterResponse::failure(req.id, e.to_string());
        }
        if req.op == Op::Denoise {
            return AdapterResponse::success(req.id, serde_json::json!(req.audio_path.display().to_string()));
        }
        let hash = match Self::hash_of(&req.audio_path) {
            Ok(h) => h,
            Err(e) => return AdapterResponse::failure(req.id, e),
        };
        match req.op {
            Op::Asr => match self.fixtures.transcripts.get(&hash) {
                Some(text) => AdapterResponse::success(req.id, serde_json::json!(text)),
                None => AdapterResponse::failure(req.id, "no fixture"),
            },
            Op::Embed => AdapterResponse::success(req.id, serde_json::json!(self.embedding_for_hash(&hash))),
            Op::Denoise => unreachable!(),
        }
    }
}

impl AdapterSession for MockAdapter {
    fn call(
        &mut self,
        op: Op,
        audio_path: &Path,
        language: Option<Language>,
        params: BTreeMap<String, String>,
    ) -> std::result::Result<AdapterResponse, AdapterError> {
        let id = self.next_id;
        self.next_id += 1;
        let mut req = AdapterRequest::new(id, op, audio_path, language);
        req.params = params;
        req.validate()?;
        Ok(self.respond(&req))
    }
}

#[derive(Deserialize)]
struct Envelope {
    #[serde(default)]
    id: Option<u64>,
    op: String,
}

/// Sidecar main loop: one response line per request line until shutdown.
///
/// Malformed lines get an `ok: false` response (id 0 when no id could be
/// read) and the loop continues.
pub fn serve_lines<R, W, F>(input: R, mut output: W, mut handler: F) -> std::io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&AdapterRequest) -> AdapterResponse,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Envelope>(&line) {
            Ok(env) if env.op == "shutdown" => break,
            Ok(env) => match serde_json::from_str::<AdapterRequest>(&line) {
                Ok(req) => handler(&req),
                Err(e) => AdapterResponse::failure(env.id.unwrap_or(0), format!("parse error: {e}")),
            },
            Err(e) => AdapterResponse::failure(0, format!("parse error: {e}")),
        };
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

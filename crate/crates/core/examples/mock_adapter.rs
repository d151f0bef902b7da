//! Drive the mock adapter in process, then over the line protocol it shares
//! with external sidecars.

use dubpair::adapter::{mock_adapter, serve_lines, AdapterSession, MockFixtures, DEFAULT_EMBED_DIM};
use dubpair::audio::{write_wav, AudioBuffer};
use dubpair::hashing::file_hash;
use dubpair::Language;

fn main() -> dubpair::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let wav = dir.path().join("hello.wav");
    let samples = (0..8000).map(|i| (i as f32 * 0.07).sin() * 0.2).collect();
    write_wav(&wav, &AudioBuffer::new(samples, 16_000)?)?;

    // Transcripts are looked up by the audio's content hash.
    let mut fixtures = MockFixtures::default();
    fixtures.transcripts.insert(file_hash(&wav)?, "hello there".into());

    let mut adapter = mock_adapter(fixtures, DEFAULT_EMBED_DIM);
    println!("transcript: {}", adapter.transcribe(&wav, Language::En)?);
    let e = adapter.embed(&wav)?;
    println!("embedding: {} dims, first {:.4}", e.len(), e[0]);

    let requests = format!(
        "{{\"id\":1,\"op\":\"asr\",\"audio_path\":\"{p}\",\"language\":\"en\",\"params\":{{}}}}\n\
         {{\"id\":2,\"op\":\"asr\",\"audio_path\":\"{p}\",\"language\":null,\"params\":{{}}}}\n\
         {{\"op\":\"shutdown\"}}\n",
        p = wav.display()
    );
    let mut responses = Vec::new();
    serve_lines(requests.as_bytes(), &mut responses, |r| adapter.respond(r)).expect("in-memory io");
    print!("{}", String::from_utf8_lossy(&responses));
    Ok(())
}

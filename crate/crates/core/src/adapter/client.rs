use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use super::{AdapterError, AdapterRequest, AdapterResponse, AdapterSession, Op};
use crate::language::Language;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_MAX_RETRIES: u32 = 2;

/// A bidirectional line channel to a sidecar.
pub trait Transport: Send {
    fn send_line(&mut self, line: &str) -> Result<(), AdapterError>;

    /// Next line from the sidecar, or `Ok(None)` if nothing arrived within `timeout`.
    /// `id` is the request being waited on, for error reporting.
    fn recv_line(&mut self, timeout: Duration, id: u64) -> Result<Option<String>, AdapterError>;

    fn close(&mut self) -> Result<(), AdapterError> {
        Ok(())
    }
}

/// Protocol client over any [`Transport`].
///
/// Responses are matched to requests by id. Responses for other in-flight
/// requests are buffered; late responses for requests that already settled
/// are discarded.
pub struct LineClient<T: Transport> {
    transport: T,
    next_id: u64,
    timeout: Duration,
    max_retries: u32,
    stash: HashMap<u64, AdapterResponse>,
    settled: HashSet<u64>,
    embed_dim: Option<usize>,
}

impl<T: Transport> LineClient<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport,
            next_id: 1,
            timeout: DEFAULT_TIMEOUT,
            max_retries: DEFAULT_MAX_RETRIES,
            stash: HashMap::new(),
            settled: HashSet::new(),
            embed_dim: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn allocate(&mut self, op: Op, audio_path: &Path, language: Option<Language>, params: BTreeMap<String, String>) -> AdapterRequest {
        let id = self.next_id;
        self.next_id += 1;
        let mut req = AdapterRequest::new(id, op, audio_path, language);
        req.params = params;
        req
    }

    fn parse(&self, line: &str, expected: u64) -> Result<AdapterResponse, AdapterError> {
        let resp: AdapterResponse = serde_json::from_str(line).map_err(|e| AdapterError::Malformed {
            id: expected,
            line: line.to_owned(),
            reason: e.to_string(),
        })?;
        if !resp.is_well_formed() {
            return Err(AdapterError::Malformed {
                id: resp.id,
                line: line.to_owned(),
                reason: "ok flag disagrees with result".into(),
            });
        }
        Ok(resp)
    }

    /// Waits for the response to `id`; `in_flight` ids are buffered when seen.
    fn await_response(&mut self, id: u64, in_flight: &HashSet<u64>) -> Result<Option<AdapterResponse>, AdapterError> {
        if let Some(r) = self.stash.remove(&id) {
            return Ok(Some(r));
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let Some(line) = self.transport.recv_line(remaining, id)? else {
                return Ok(None);
            };
            if line.trim().is_empty() {
                continue;
            }
            let resp = self.parse(&line, id)?;
            if resp.id == id {
                return Ok(Some(resp));
            }
            if in_flight.contains(&resp.id) {
                self.stash.insert(resp.id, resp);
            } else if self.settled.contains(&resp.id) {
                log::debug!("discarding late response for request {}", resp.id);
            } else {
                return Err(AdapterError::IdMismatch {
                    expected: id,
                    got: resp.id,
                });
            }
        }
    }

    fn check_dim(&mut self, req: &AdapterRequest, resp: &AdapterResponse) -> Result<(), AdapterError> {
        if req.op != Op::Embed || !resp.ok {
            return Ok(());
        }
        let dim = resp.result.as_ref().and_then(|v| v.as_array()).map(Vec::len).unwrap_or(0);
        match self.embed_dim {
            Some(d) if d != dim => Err(AdapterError::Malformed {
                id: resp.id,
                line: format!("{dim}-dimensional embedding"),
                reason: format!("session embedding dimension is {d}"),
            }),
            _ => {
                self.embed_dim = Some(dim);
                Ok(())
            }
        }
    }

    fn exchange(&mut self, req: AdapterRequest) -> Result<AdapterResponse, AdapterError> {
        req.validate()?;
        let line = serde_json::to_string(&req).expect("requests always serialize");
        let in_flight = HashSet::from([req.id]);
        for attempt in 0..=self.max_retries {
            self.transport.send_line(&line)?;
            match self.await_response(req.id, &in_flight)? {
                Some(resp) => {
                    self.settled.insert(req.id);
                    self.check_dim(&req, &resp)?;
                    return Ok(resp);
                }
                None => log::warn!("request {} timed out (attempt {})", req.id, attempt + 1),
            }
        }
        self.settled.insert(req.id);
        Err(AdapterError::Timeout {
            id: req.id,
            attempts: self.max_retries + 1,
        })
    }

    /// Sends every request before reading any response, then returns the
    /// responses in request order regardless of arrival order.
    pub fn call_batch(
        &mut self,
        calls: Vec<(Op, &Path, Option<Language>)>,
    ) -> Result<Vec<AdapterResponse>, AdapterError> {
        let reqs: Vec<AdapterRequest> = calls
            .into_iter()
            .map(|(op, path, lang)| self.allocate(op, path, lang, BTreeMap::new()))
            .collect();
        for r in &reqs {
            r.validate()?;
        }
        for r in &reqs {
            self.transport
                .send_line(&serde_json::to_string(r).expect("requests always serialize"))?;
        }
        let in_flight: HashSet<u64> = reqs.iter().map(|r| r.id).collect();
        let mut out = Vec::with_capacity(reqs.len());
        for r in &reqs {
            let resp = self.await_response(r.id, &in_flight)?.ok_or(AdapterError::Timeout {
                id: r.id,
                attempts: 1,
            })?;
            self.settled.insert(r.id);
            self.check_dim(r, &resp)?;
            out.push(resp);
        }
        Ok(out)
    }
}

impl<T: Transport> AdapterSession for LineClient<T> {
    fn call(
        &mut self,
        op: Op,
        audio_path: &Path,
        language: Option<Language>,
        params: BTreeMap<String, String>,
    ) -> Result<AdapterResponse, AdapterError> {
        let req = self.allocate(op, audio_path, language, params);
        let id = req.id;
        self.exchange(req).inspect_err(|e| log::warn!("adapter request {id} failed: {e}"))
    }

    fn shutdown(&mut self) -> Result<(), AdapterError> {
        self.transport.send_line(r#"{"op":"shutdown"}"#)?;
        self.transport.close()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;

    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    use super::*;

    /// Answers from a fixed script, one line per receive.
    struct Scripted {
        sent: Vec<String>,
        replies: VecDeque<Option<String>>,
    }

    impl Transport for Scripted {
        fn send_line(&mut self, line: &str) -> Result<(), AdapterError> {
            self.sent.push(line.to_owned());
            Ok(())
        }

        fn recv_line(&mut self, _timeout: Duration, id: u64) -> Result<Option<String>, AdapterError> {
            match self.replies.pop_front() {
                Some(r) => Ok(r),
                None => Err(AdapterError::SidecarExited {
                    id,
                    status: "eof".into(),
                }),
            }
        }
    }

    fn scripted(replies: Vec<Option<&str>>) -> LineClient<Scripted> {
        LineClient::new(Scripted {
            sent: Vec::new(),
            replies: replies.into_iter().map(|r| r.map(str::to_owned)).collect(),
        })
        .with_timeout(Duration::from_millis(1))
    }

    #[test]
    fn retries_after_timeout_then_succeeds() {
        let mut c = scripted(vec![None, Some(r#"{"id":1,"ok":true,"result":"hi","error":null}"#)]);
        let text = c.transcribe(Path::new("a.wav"), Language::En).unwrap();
        assert_eq!(text, "hi");
        assert_eq!(c.transport().sent.len(), 2);
        assert_eq!(c.transport().sent[0], c.transport().sent[1]);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let mut c = scripted(vec![None, None, None]);
        let err = c.transcribe(Path::new("a.wav"), Language::En).unwrap_err();
        assert!(matches!(err, AdapterError::Timeout { id: 1, attempts: 3 }));
        assert!(err.is_retryable());
    }

    #[test]
    fn late_response_for_abandoned_request_is_dropped() {
        let mut c = scripted(vec![
            None,
            None,
            None,
            Some(r#"{"id":1,"ok":true,"result":"stale","error":null}"#),
            Some(r#"{"id":2,"ok":true,"result":"fresh","error":null}"#),
        ]);
        assert!(c.transcribe(Path::new("a.wav"), Language::En).is_err());
        assert_eq!(c.transcribe(Path::new("b.wav"), Language::En).unwrap(), "fresh");
    }

    #[test]
    fn distinct_error_kinds() {
        let mut c = scripted(vec![Some("not json")]);
        assert!(matches!(c.embed(Path::new("a.wav")), Err(AdapterError::Malformed { id: 1, .. })));

        let mut c = scripted(vec![Some(r#"{"id":9,"ok":true,"result":"x","error":null}"#)]);
        assert!(matches!(
            c.denoise(Path::new("a.wav")),
            Err(AdapterError::IdMismatch { expected: 1, got: 9 })
        ));

        let mut c = scripted(vec![]);
        assert!(matches!(c.denoise(Path::new("a.wav")), Err(AdapterError::SidecarExited { id: 1, .. })));

        let mut c = scripted(vec![Some(r#"{"id":1,"ok":true,"result":null,"error":null}"#)]);
        assert!(matches!(c.denoise(Path::new("a.wav")), Err(AdapterError::Malformed { .. })));
    }

    #[test]
    fn embed_dimension_is_pinned_per_session() {
        let mut c = scripted(vec![
            Some(r#"{"id":1,"ok":true,"result":[1.0,0.0],"error":null}"#),
            Some(r#"{"id":2,"ok":true,"result":[1.0,0.0,0.0],"error":null}"#),
        ]);
        assert_eq!(c.embed(Path::new("a.wav")).unwrap().len(), 2);
        assert!(matches!(c.embed(Path::new("b.wav")), Err(AdapterError::Malformed { id: 2, .. })));
    }

    /// Holds every request until asked for a response, then answers all
    /// pending requests in a shuffled order.
    struct Shuffling {
        rng: rand_chacha::ChaCha8Rng,
        pending: Vec<AdapterRequest>,
        outbox: VecDeque<String>,
    }

    impl Transport for Shuffling {
        fn send_line(&mut self, line: &str) -> Result<(), AdapterError> {
            self.pending.push(serde_json::from_str(line).unwrap());
            Ok(())
        }

        fn recv_line(&mut self, _timeout: Duration, _id: u64) -> Result<Option<String>, AdapterError> {
            if self.outbox.is_empty() {
                let mut batch: Vec<_> = self.pending.drain(..).collect();
                batch.shuffle(&mut self.rng);
                for r in batch {
                    let resp = AdapterResponse::success(r.id, serde_json::json!(r.audio_path.display().to_string()));
                    self.outbox.push_back(serde_json::to_string(&resp).unwrap());
                }
            }
            Ok(self.outbox.pop_front())
        }
    }

    proptest::proptest! {
        #[test]
        fn out_of_order_responses_match_by_id(seed in 0u64..1000, n in 1usize..24) {
            let mut c = LineClient::new(Shuffling {
                rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed),
                pending: Vec::new(),
                outbox: VecDeque::new(),
            });
            let paths: Vec<String> = (0..n).map(|i| format!("f{i}.wav")).collect();
            let calls = paths.iter().map(|p| (Op::Denoise, Path::new(p.as_str()), None)).collect();
            let out = c.call_batch(calls).unwrap();
            for (i, r) in out.into_iter().enumerate() {
                proptest::prop_assert_eq!(r.id, i as u64 + 1);
                proptest::prop_assert_eq!(r.into_text().unwrap(), paths[i].clone());
            }
        }
    }
}

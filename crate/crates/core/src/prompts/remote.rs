//! HTTP client for an external scoring service.
//!
//! `POST {endpoint}/v1/entail` with `{premise, hypotheses}` answers
//! `{scores}`; `POST {endpoint}/v1/mask_fill` with
//! `{text, mask_marker, candidates}` answers `{log_probs}`. Non-2xx replies
//! carry `{error, retryable}`; `retryable: true` marks a transient failure.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::backend::{
    check_entailment, check_mask_fill, BackendError, Capabilities, EntailmentQuery,
    EntailmentResult, LmBackend, MaskFillQuery, MaskFillResult,
};

pub const ENDPOINT_ENV: &str = "WEAKLAB_BACKEND_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub mask_marker: String,
    pub entailment: bool,
    pub mask_fill: bool,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080".into(),
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_ms: 200,
            max_in_flight: 8,
            mask_marker: "<mask>".into(),
            entailment: true,
            mask_fill: true,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    #[serde(default)]
    error: String,
    #[serde(default)]
    retryable: bool,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    slots: Slots,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
                .http_status_as_error(false)
                .build(),
        );
        let slots = Slots::new(config.max_in_flight);
        Self {
            config,
            agent,
            slots,
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post_once<Q: Serialize, R: DeserializeOwned>(&self, route: &str, body: &Q) -> Result<R, BackendError> {
        let url = format!("{}{route}", self.config.endpoint.trim_end_matches('/'));
        let _slot = self.slots.acquire();
        let mut resp = self.agent.post(&url).send_json(body).map_err(classify)?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            return resp
                .body_mut()
                .read_json::<R>()
                .map_err(|e| BackendError::permanent(format!("{url}: bad response body: {e}")));
        }
        let detail: Option<ErrorBody> = resp.body_mut().read_json().ok();
        let (message, retryable) = match detail {
            Some(b) => (b.error, b.retryable),
            None => (String::new(), false),
        };
        let message = format!("{url}: HTTP {status} {message}");
        Err(if retryable {
            BackendError::transient(message)
        } else {
            BackendError::permanent(message)
        })
    }

    /// Retries transient failures with exponential backoff.
    fn post<Q: Serialize, R: DeserializeOwned>(&self, route: &str, body: &Q) -> Result<R, BackendError> {
        let mut attempt = 0;
        loop {
            match self.post_once(route, body) {
                Err(e) if e.is_transient() && attempt < self.config.max_retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::debug!("retrying after {wait} ms: {e}");
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

fn classify(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_)
        | ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound => BackendError::transient(e.to_string()),
        other => BackendError::permanent(other.to_string()),
    }
}

impl LmBackend for RemoteBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            entailment: self.config.entailment,
            mask_fill: self.config.mask_fill,
        }
    }

    fn mask_marker(&self) -> &str {
        &self.config.mask_marker
    }

    fn entail(&self, query: &EntailmentQuery) -> Result<EntailmentResult, BackendError> {
        let result: EntailmentResult = self.post("/v1/entail", query)?;
        check_entailment(query, &result)?;
        Ok(result)
    }

    fn mask_fill(&self, query: &MaskFillQuery) -> Result<MaskFillResult, BackendError> {
        let result: MaskFillResult = self.post("/v1/mask_fill", query)?;
        check_mask_fill(query, &result)?;
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    type Handler = dyn Fn(&str, &serde_json::Value, usize) -> (u16, String) + Send + Sync;

    #[derive(Default)]
    struct Counters {
        requests: AtomicUsize,
        in_flight: AtomicUsize,
        peak: AtomicUsize,
    }

    /// Minimal HTTP/1.1 server: one request per connection.
    fn serve(handler: Arc<Handler>, delay: Duration) -> (String, Arc<Counters>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let counters = Arc::new(Counters::default());
        let c = counters.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let handler = handler.clone();
                let c = c.clone();
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut request_line = String::new();
                    reader.read_line(&mut request_line).unwrap();
                    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
                    let mut length = 0;
                    loop {
                        let mut line = String::new();
                        reader.read_line(&mut line).unwrap();
                        if line.trim().is_empty() {
                            break;
                        }
                        if let Some((k, v)) = line.split_once(':') {
                            if k.eq_ignore_ascii_case("content-length") {
                                length = v.trim().parse().unwrap();
                            }
                        }
                    }
                    let mut body = vec![0; length];
                    reader.read_exact(&mut body).unwrap();
                    let n = c.requests.fetch_add(1, Ordering::SeqCst);
                    let now = c.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    c.peak.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(delay);
                    let json = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
                    let (status, reply) = handler(&path, &json, n);
                    c.in_flight.fetch_sub(1, Ordering::SeqCst);
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                        reply.len()
                    );
                });
            }
        });
        (addr, counters)
    }

    fn backend(endpoint: String, tweak: impl FnOnce(&mut RemoteConfig)) -> RemoteBackend {
        let mut cfg = RemoteConfig {
            endpoint,
            backoff_ms: 1,
            timeout_ms: 2000,
            ..RemoteConfig::default()
        };
        tweak(&mut cfg);
        RemoteBackend::new(cfg)
    }

    fn entail_query() -> EntailmentQuery {
        EntailmentQuery {
            premise: "i am happy".into(),
            hypotheses: vec!["it is positive".into(), "it is negative".into()],
        }
    }

    #[test]
    fn wire_protocol_round_trip() {
        let handler: Arc<Handler> = Arc::new(|path, body, _| match path {
            "/v1/entail" => {
                assert_eq!(body["premise"], "i am happy");
                (200, r#"{"scores":[0.9,0.1]}"#.into())
            }
            "/v1/mask_fill" => {
                assert_eq!(body["mask_marker"], "<mask>");
                (200, r#"{"log_probs":[-0.5,-2.0]}"#.into())
            }
            _ => (404, r#"{"error":"no route"}"#.into()),
        });
        let (addr, _) = serve(handler, Duration::ZERO);
        let b = backend(addr, |_| {});
        assert_eq!(b.entail(&entail_query()).unwrap().scores, vec![0.9, 0.1]);
        let q = MaskFillQuery {
            text: "i am happy. it was <mask>.".into(),
            mask_marker: "<mask>".into(),
            candidates: vec!["great".into(), "awful".into()],
        };
        assert_eq!(b.mask_fill(&q).unwrap().log_probs, vec![-0.5, -2.0]);
    }

    #[test]
    fn retryable_errors_are_retried() {
        let handler: Arc<Handler> = Arc::new(|_, _, n| {
            if n < 2 {
                (503, r#"{"error":"warming up","retryable":true}"#.into())
            } else {
                (200, r#"{"scores":[0.2,0.8]}"#.into())
            }
        });
        let (addr, counters) = serve(handler, Duration::ZERO);
        let b = backend(addr, |_| {});
        assert_eq!(b.entail(&entail_query()).unwrap().scores, vec![0.2, 0.8]);
        assert_eq!(counters.requests.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_are_bounded() {
        let handler: Arc<Handler> = Arc::new(|_, _, _| (503, r#"{"error":"busy","retryable":true}"#.into()));
        let (addr, counters) = serve(handler, Duration::ZERO);
        let b = backend(addr, |c| c.max_retries = 2);
        let err = b.entail(&entail_query()).unwrap_err();
        assert!(err.is_transient());
        assert!(err.message.contains("busy"));
        assert_eq!(counters.requests.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn non_retryable_errors_fail_once() {
        let handler: Arc<Handler> = Arc::new(|_, _, _| (400, r#"{"error":"bad input","retryable":false}"#.into()));
        let (addr, counters) = serve(handler, Duration::ZERO);
        let b = backend(addr, |_| {});
        let err = b.entail(&entail_query()).unwrap_err();
        assert!(!err.is_transient());
        assert_eq!(counters.requests.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn malformed_replies_are_permanent() {
        let handler: Arc<Handler> = Arc::new(|_, _, _| (200, r#"{"scores":[0.5]}"#.into()));
        let (addr, _) = serve(handler, Duration::ZERO);
        let err = backend(addr, |_| {}).entail(&entail_query()).unwrap_err();
        assert!(!err.is_transient());
    }

    #[test]
    fn in_flight_requests_are_bounded() {
        let handler: Arc<Handler> = Arc::new(|_, _, _| (200, r#"{"scores":[0.5,0.5]}"#.into()));
        let (addr, counters) = serve(handler, Duration::from_millis(40));
        let b = Arc::new(backend(addr, |c| c.max_in_flight = 2));
        let workers: Vec<_> = (0..8)
            .map(|_| {
                let b = b.clone();
                thread::spawn(move || b.entail(&entail_query()).unwrap())
            })
            .collect();
        for w in workers {
            w.join().unwrap();
        }
        assert_eq!(counters.requests.load(Ordering::SeqCst), 8);
        assert!(counters.peak.load(Ordering::SeqCst) <= 2);
        assert!(counters.peak.load(Ordering::SeqCst) >= 1);
    }

    #[test]
    fn timeouts_and_refused_connections_are_transient() {
        let handler: Arc<Handler> = Arc::new(|_, _, _| (200, r#"{"scores":[0.5,0.5]}"#.into()));
        let (addr, _) = serve(handler, Duration::from_millis(500));
        let b = backend(addr, |c| {
            c.timeout_ms = 50;
            c.max_retries = 0;
        });
        assert!(b.entail(&entail_query()).unwrap_err().is_transient());

        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let b = backend(format!("http://127.0.0.1:{port}"), |c| c.max_retries = 0);
        assert!(b.entail(&entail_query()).unwrap_err().is_transient());
    }
}

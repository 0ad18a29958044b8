//! JSON-over-HTTP clients for a remote language model and a remote value
//! scorer. Both share the same retry discipline: a bounded number of
//! attempts with exponential backoff, starting at 100 ms.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::policy::{truncate_at_stop, Policy, PolicyContext, PolicyError, SparseLogProbs};
use crate::value::{ScoreError, ValueScorer};

pub const DEFAULT_RETRIES: u32 = 3;
pub const DEFAULT_BACKOFF: Duration = Duration::from_millis(100);
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub base_url: String,
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
}

impl HttpOptions {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpOptions {
            base_url: base_url.into(),
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
            backoff: DEFAULT_BACKOFF,
        }
    }
}

fn make_client(opts: &HttpOptions) -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(opts.timeout)
        .build()
        .expect("client construction cannot fail with static options")
}

enum RetryError {
    /// Connection-level failures and 5xx after all attempts.
    Transport { attempts: u32, message: String },
    /// The service answered but the reply does not match the protocol.
    Protocol(String),
}

/// POSTs `body` to `url`, retrying transport errors and 5xx responses.
fn post_with_retry<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    client: &reqwest::blocking::Client,
    opts: &HttpOptions,
    url: &str,
    body: &Req,
) -> Result<Resp, RetryError> {
    let mut last = String::new();
    for attempt in 0..opts.retries.max(1) {
        if attempt > 0 {
            std::thread::sleep(opts.backoff * 2u32.pow(attempt - 1));
        }
        match client.post(url).json(body).send() {
            Ok(resp) => {
                let status = resp.status();
                if status.is_server_error() {
                    last = format!("server error {status}");
                    continue;
                }
                if !status.is_success() {
                    return Err(RetryError::Protocol(format!("unexpected status {status}")));
                }
                return match resp.json::<Resp>() {
                    Ok(v) => Ok(v),
                    Err(e) => Err(RetryError::Protocol(format!("bad response body: {e}"))),
                };
            }
            Err(e) => {
                last = e.to_string();
            }
        }
    }
    Err(RetryError::Transport {
        attempts: opts.retries.max(1),
        message: last,
    })
}

#[derive(Serialize)]
struct LogprobsRequest<'a> {
    prompt: &'a str,
    path: &'a str,
    candidate_ids: &'a [u32],
}

#[derive(Deserialize)]
struct LogprobsResponse {
    entries: Vec<LogprobEntry>,
}

#[derive(Deserialize)]
struct LogprobEntry {
    id: u32,
    #[serde(default)]
    logprob: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    stop: &'a [String],
    max_tokens: u32,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Remote language model speaking `POST /v1/logprobs` and `POST /v1/generate`.
pub struct RemoteLm {
    opts: HttpOptions,
    client: reqwest::blocking::Client,
}

impl RemoteLm {
    pub fn new(opts: HttpOptions) -> Self {
        let client = make_client(&opts);
        RemoteLm { opts, client }
    }
}

impl Policy for RemoteLm {
    fn logprobs_for(&self, ctx: &PolicyContext, candidates: &[u32]) -> Result<SparseLogProbs, PolicyError> {
        let url = format!("{}/v1/logprobs", self.opts.base_url.trim_end_matches('/'));
        let req = LogprobsRequest {
            prompt: ctx.prompt,
            path: ctx.path,
            candidate_ids: candidates,
        };
        let resp: LogprobsResponse =
            post_with_retry(&self.client, &self.opts, &url, &req).map_err(|e| match e {
                RetryError::Transport { attempts, message } => PolicyError::Transport { attempts, message },
                RetryError::Protocol(m) => PolicyError::Protocol(m),
            })?;

        let mut entries = Vec::with_capacity(candidates.len());
        for &id in candidates {
            let entry = resp
                .entries
                .iter()
                .find(|e| e.id == id)
                .ok_or_else(|| PolicyError::Protocol(format!("missing entry for candidate {id}")))?;
            if entry.error.is_some() {
                return Err(PolicyError::UnknownToken(id));
            }
            let lp = entry
                .logprob
                .ok_or_else(|| PolicyError::Protocol(format!("entry {id} has no logprob")))?;
            if !lp.is_finite() {
                return Err(PolicyError::Protocol(format!("entry {id} logprob not finite")));
            }
            entries.push((id, lp));
        }
        Ok(SparseLogProbs { entries })
    }

    fn generate(&self, prompt: &str, stop: &[String], max_tokens: u32) -> Result<String, PolicyError> {
        let url = format!("{}/v1/generate", self.opts.base_url.trim_end_matches('/'));
        let req = GenerateRequest {
            prompt,
            stop,
            max_tokens,
        };
        let resp: GenerateResponse =
            post_with_retry(&self.client, &self.opts, &url, &req).map_err(|e| match e {
                RetryError::Transport { attempts, message } => PolicyError::Transport { attempts, message },
                RetryError::Protocol(m) => PolicyError::Protocol(m),
            })?;
        Ok(truncate_at_stop(&resp.text, stop))
    }
}

/// Which side assembles the scoring prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuePromptSide {
    Client,
    Server,
}

#[derive(Serialize)]
struct ValueRequest<'a> {
    query: &'a str,
    reference: &'a str,
}

#[derive(Deserialize)]
struct ValueResponse {
    score: f64,
}

/// Remote value network speaking `POST /v1/value`. Returned scores are
/// clamped to `[0, 1]`.
pub struct RemoteValueScorer {
    opts: HttpOptions,
    client: reqwest::blocking::Client,
    prompt_side: ValuePromptSide,
    /// Scoring prompt with `{query_text}` / `{rollout_text}` placeholders,
    /// used when the client assembles the prompt.
    template: String,
}

impl RemoteValueScorer {
    pub fn new(opts: HttpOptions, prompt_side: ValuePromptSide, template: String) -> Self {
        let client = make_client(&opts);
        RemoteValueScorer {
            opts,
            client,
            prompt_side,
            template,
        }
    }
}

impl ValueScorer for RemoteValueScorer {
    fn score(&self, question: &str, path_text: &str) -> Result<f64, ScoreError> {
        let url = format!("{}/v1/value", self.opts.base_url.trim_end_matches('/'));
        let assembled;
        let (query, reference) = match self.prompt_side {
            ValuePromptSide::Server => (question, path_text),
            ValuePromptSide::Client => {
                assembled = self
                    .template
                    .replace("{query_text}", question)
                    .replace("{rollout_text}", path_text);
                (assembled.as_str(), "")
            }
        };
        let req = ValueRequest { query, reference };
        let resp: ValueResponse =
            post_with_retry(&self.client, &self.opts, &url, &req).map_err(|e| match e {
                RetryError::Transport { attempts, message } => ScoreError::Transport { attempts, message },
                RetryError::Protocol(m) => ScoreError::Protocol(m),
            })?;
        if !resp.score.is_finite() {
            return Err(ScoreError::Protocol("score not finite".into()));
        }
        Ok(resp.score.clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal one-request-per-connection HTTP stub. Each spawned handler
    /// answers `n` requests with the canned JSON body chosen by path.
    fn spawn_stub(responses: Vec<(&'static str, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for _ in 0..responses.len() {
                let (mut stream, _) = match listener.accept() {
                    Ok(s) => s,
                    Err(_) => return,
                };
                let mut buf = Vec::new();
                let mut tmp = [0u8; 1024];
                loop {
                    let n = stream.read(&mut tmp).unwrap_or(0);
                    if n == 0 {
                        break;
                    }
                    buf.extend_from_slice(&tmp[..n]);
                    if let Some(head_end) = find_header_end(&buf) {
                        let head = String::from_utf8_lossy(&buf[..head_end]);
                        let clen = head
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                            .unwrap_or(0);
                        if buf.len() >= head_end + 4 + clen {
                            let path = head.lines().next().unwrap().split(' ').nth(1).unwrap().to_string();
                            let body = responses
                                .iter()
                                .find(|(p, _)| path.starts_with(p))
                                .map(|(_, b)| b.clone())
                                .unwrap_or_else(|| "{}".to_string());
                            let resp = format!(
                                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                                body.len(),
                                body
                            );
                            stream.write_all(resp.as_bytes()).unwrap();
                            break;
                        }
                    }
                }
            }
        });
        format!("http://{addr}")
    }

    fn find_header_end(buf: &[u8]) -> Option<usize> {
        buf.windows(4).position(|w| w == b"\r\n\r\n")
    }

    fn fast_opts(base: String) -> HttpOptions {
        HttpOptions {
            base_url: base,
            timeout: Duration::from_secs(5),
            retries: 2,
            backoff: Duration::from_millis(5),
        }
    }

    #[test]
    fn remote_lm_returns_fixed_table() {
        let base = spawn_stub(vec![(
            "/v1/logprobs",
            r#"{"entries":[{"id":3,"logprob":-0.5},{"id":7,"logprob":-1.25}]}"#.to_string(),
        )]);
        let lm = RemoteLm::new(fast_opts(base));
        let ctx = PolicyContext { prompt: "p", path: "x" };
        let lps = lm.logprobs_for(&ctx, &[3, 7]).unwrap();
        assert_eq!(lps.entries, vec![(3, -0.5), (7, -1.25)]);
    }

    #[test]
    fn remote_lm_missing_entry_is_protocol_error() {
        let base = spawn_stub(vec![(
            "/v1/logprobs",
            r#"{"entries":[{"id":3,"logprob":-0.5}]}"#.to_string(),
        )]);
        let lm = RemoteLm::new(fast_opts(base));
        let ctx = PolicyContext { prompt: "p", path: "x" };
        assert!(matches!(
            lm.logprobs_for(&ctx, &[3, 9]),
            Err(PolicyError::Protocol(_))
        ));
    }

    #[test]
    fn remote_lm_per_entry_error_maps_to_unknown_token() {
        let base = spawn_stub(vec![(
            "/v1/logprobs",
            r#"{"entries":[{"id":4,"error":"unknown token id"}]}"#.to_string(),
        )]);
        let lm = RemoteLm::new(fast_opts(base));
        let ctx = PolicyContext { prompt: "p", path: "x" };
        assert!(matches!(
            lm.logprobs_for(&ctx, &[4]),
            Err(PolicyError::UnknownToken(4))
        ));
    }

    #[test]
    fn remote_generate_truncates_at_stop() {
        let base = spawn_stub(vec![(
            "/v1/generate",
            r#"{"text":"thinking <search> q </search> leftover"}"#.to_string(),
        )]);
        let lm = RemoteLm::new(fast_opts(base));
        let out = lm.generate("p", &["</search>".to_string()], 32).unwrap();
        assert_eq!(out, "thinking <search> q </search>");
    }

    #[test]
    fn transport_error_reports_attempts() {
        // Nothing listens on this port.
        let opts = HttpOptions {
            base_url: "http://127.0.0.1:1".into(),
            timeout: Duration::from_millis(200),
            retries: 3,
            backoff: Duration::from_millis(1),
        };
        let lm = RemoteLm::new(opts);
        let ctx = PolicyContext { prompt: "p", path: "x" };
        match lm.logprobs_for(&ctx, &[1]) {
            Err(PolicyError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn remote_value_scores_and_clamps() {
        let base = spawn_stub(vec![("/v1/value", r#"{"score":0.73}"#.to_string())]);
        let s = RemoteValueScorer::new(fast_opts(base), ValuePromptSide::Server, String::new());
        assert!((s.score("q", "ref").unwrap() - 0.73).abs() < 1e-12);

        let base = spawn_stub(vec![("/v1/value", r#"{"score":1.4}"#.to_string())]);
        let s = RemoteValueScorer::new(fast_opts(base), ValuePromptSide::Server, String::new());
        assert_eq!(s.score("q", "ref").unwrap(), 1.0);
    }

    #[test]
    fn remote_value_non_numeric_is_protocol_error() {
        let base = spawn_stub(vec![("/v1/value", r#"{"score":"good"}"#.to_string())]);
        let s = RemoteValueScorer::new(fast_opts(base), ValuePromptSide::Server, String::new());
        match s.score("q", "ref") {
            Err(ScoreError::Protocol(message)) => {
                assert!(message.contains("bad response body"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

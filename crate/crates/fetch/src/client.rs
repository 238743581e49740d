//! Rate-limit aware GET with retries, plus page-number pagination.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::transport::{Clock, HttpResponse, Transport};
use crate::FetchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt, shared by timeouts, 5xx and rate limits.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 6,
            base_delay_ms: 1_000,
            max_delay_ms: 120_000,
        }
    }
}

impl RetryPolicy {
    /// `base * 2^attempt`, capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(63)).unwrap_or(u64::MAX);
        let ms = self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestStats {
    pub requests: u64,
    pub retries: u64,
    pub rate_limit_waits: u64,
    pub waited_ms: u64,
}

/// How long the server asked us to wait, if it said so.
pub fn rate_limit_wait(resp: &HttpResponse, now_epoch: i64) -> Option<Duration> {
    if let Some(secs) = resp.header("retry-after").and_then(|v| v.trim().parse::<u64>().ok()) {
        return Some(Duration::from_secs(secs));
    }
    if resp.header("x-ratelimit-remaining").map(str::trim) == Some("0") {
        let reset: i64 = resp.header("x-ratelimit-reset")?.trim().parse().ok()?;
        // one extra second so we land after the reset, not on it
        return Some(Duration::from_secs((reset - now_epoch).max(0) as u64 + 1));
    }
    None
}

pub struct Client<'a> {
    transport: &'a dyn Transport,
    clock: &'a dyn Clock,
    policy: &'a RetryPolicy,
    headers: Vec<(String, String)>,
    pub stats: RequestStats,
}

impl<'a> Client<'a> {
    pub fn new(
        transport: &'a dyn Transport,
        clock: &'a dyn Clock,
        policy: &'a RetryPolicy,
        token: Option<&str>,
    ) -> Self {
        let mut headers = vec![
            ("Accept".to_string(), "application/vnd.github+json".to_string()),
            ("X-GitHub-Api-Version".to_string(), "2022-11-28".to_string()),
        ];
        if let Some(t) = token {
            headers.push(("Authorization".to_string(), format!("Bearer {t}")));
        }
        Client {
            transport,
            clock,
            policy,
            headers,
            stats: RequestStats::default(),
        }
    }

    fn pause(&mut self, d: Duration) {
        self.stats.waited_ms += d.as_millis() as u64;
        self.clock.sleep(d);
    }

    pub fn get_json(&mut self, url: &str) -> Result<Value, FetchError> {
        let mut attempt = 0u32;
        loop {
            self.stats.requests += 1;
            let last_failure = match self.transport.get(url, &self.headers) {
                Err(e) => e.to_string(),
                Ok(resp) => match resp.status {
                    200..=299 => {
                        return serde_json::from_str(&resp.body).map_err(|e| FetchError::Payload {
                            url: url.to_string(),
                            message: e.to_string(),
                        })
                    }
                    404 => return Err(FetchError::NotFound { url: url.to_string() }),
                    401 => return Err(FetchError::Unauthorized),
                    403 | 429 => match rate_limit_wait(&resp, self.clock.now_epoch_secs()) {
                        Some(wait) => {
                            if attempt >= self.policy.max_retries {
                                return Err(FetchError::RetriesExhausted {
                                    url: url.to_string(),
                                    attempts: attempt + 1,
                                    last: format!("HTTP {} rate limited", resp.status),
                                });
                            }
                            self.stats.rate_limit_waits += 1;
                            let d = wait.max(self.policy.backoff(attempt));
                            log::warn!("rate limited on {url}; waiting {}s", d.as_secs());
                            self.pause(d);
                            attempt += 1;
                            continue;
                        }
                        None if resp.status == 429 => "HTTP 429".to_string(),
                        None => return Err(FetchError::Forbidden { url: url.to_string() }),
                    },
                    500..=599 => format!("HTTP {}", resp.status),
                    status => {
                        return Err(FetchError::Http {
                            url: url.to_string(),
                            status,
                        })
                    }
                },
            };
            if attempt >= self.policy.max_retries {
                return Err(FetchError::RetriesExhausted {
                    url: url.to_string(),
                    attempts: attempt + 1,
                    last: last_failure,
                });
            }
            self.stats.retries += 1;
            let d = self.policy.backoff(attempt);
            log::warn!("{last_failure} on {url}; retrying in {}ms", d.as_millis());
            self.pause(d);
            attempt += 1;
        }
    }

    /// Walk `page = start, start+1, ...` until a page comes back short.
    /// `on_page` sees every page before the next request goes out. Returns the
    /// number of pages requested.
    pub fn for_each_page(
        &mut self,
        base_url: &str,
        per_page: u32,
        start: u32,
        mut on_page: impl FnMut(u32, Vec<Value>) -> Result<(), FetchError>,
    ) -> Result<u32, FetchError> {
        let sep = if base_url.contains('?') { '&' } else { '?' };
        let mut page = start.max(1);
        let mut fetched = 0;
        loop {
            let url = format!("{base_url}{sep}per_page={per_page}&page={page}");
            let items = match self.get_json(&url)? {
                Value::Array(items) => items,
                _ => {
                    return Err(FetchError::Payload {
                        url,
                        message: "expected a JSON array".into(),
                    })
                }
            };
            fetched += 1;
            let n = items.len();
            on_page(page, items)?;
            if n < per_page as usize {
                return Ok(fetched);
            }
            page += 1;
        }
    }
}

//! Rate-limited, concurrency-capped chat client that logs every exchange.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use skillr1_core::env::PortError;
use skillr1_core::events::{Event, EventSink, NullSink};

use crate::transport::{request_id, ChatTransport};
use crate::wire::{parse_completion, ChatRequest};

/// Token bucket shared by every client built from the same limiter.
pub struct RateLimiter {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    /// `rate` tokens per second, at most `burst` banked. A rate of 0 never
    /// blocks.
    pub fn new(rate: f64, burst: u32) -> Self {
        let burst = f64::from(burst.max(1));
        Self {
            rate,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0.0, 1)
    }

    pub fn acquire(&self) {
        if self.rate <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut guard = self.state.lock().unwrap_or_else(|e| e.into_inner());
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate).min(self.burst);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                (1.0 - *tokens) / self.rate
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// Counting semaphore capping concurrent requests.
pub struct InFlight {
    cap: usize,
    count: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightPermit<'a>(&'a InFlight);

impl InFlight {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            count: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut n = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InFlightPermit(self)
    }

    pub fn current(&self) -> usize {
        *self.count.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.count.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

fn classify(status: u16, body: &str) -> PortError {
    let snippet: String = body.chars().take(200).collect();
    let msg = format!("HTTP {status}: {snippet}");
    if matches!(status, 408 | 409 | 425 | 429) || status >= 500 {
        PortError::transient(msg)
    } else {
        PortError::fatal(msg)
    }
}

#[derive(Clone)]
pub struct ChatClient {
    transport: Arc<dyn ChatTransport>,
    limiter: Arc<RateLimiter>,
    gate: Arc<InFlight>,
    sink: Arc<dyn EventSink>,
    attempts: Arc<Mutex<HashMap<String, u32>>>,
}

impl ChatClient {
    pub fn new(transport: Arc<dyn ChatTransport>) -> Self {
        Self {
            transport,
            limiter: Arc::new(RateLimiter::unlimited()),
            gate: Arc::new(InFlight::new(usize::MAX)),
            sink: Arc::new(NullSink),
            attempts: Arc::default(),
        }
    }

    pub fn with_limits(mut self, limiter: Arc<RateLimiter>, gate: Arc<InFlight>) -> Self {
        self.limiter = limiter;
        self.gate = gate;
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn EventSink>) -> Self {
        self.sink = sink;
        self
    }

    /// Send one request and return the completion text. `role` labels the
    /// exchange in the event log.
    pub fn complete(&self, role: &str, request: &ChatRequest) -> Result<String, PortError> {
        let body = serde_json::to_string(request).map_err(|e| PortError::fatal(e.to_string()))?;
        let id = request_id(&body);
        let attempt = {
            let mut map = self.attempts.lock().unwrap_or_else(|e| e.into_inner());
            let n = map.entry(id.clone()).or_insert(0);
            *n += 1;
            *n
        };

        self.limiter.acquire();
        let result = {
            let _permit = self.gate.acquire();
            self.transport.send(&body)
        };

        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        let (status, response_bytes, error) = match &result {
            Ok(ex) => (Some(ex.status), ex.body.len(), None),
            Err(e) => (None, 0, Some(e.message.clone())),
        };
        let outcome = result.and_then(|ex| {
            if ex.status == 200 {
                parse_completion(&ex.body)
            } else {
                Err(classify(ex.status, &ex.body))
            }
        });
        self.sink.emit(&Event::LlmExchange {
            timestamp_ms,
            request_id: id.clone(),
            role: role.to_string(),
            attempt,
            request_bytes: body.len(),
            response_bytes,
            status,
            error: error.or_else(|| outcome.as_ref().err().map(|e| e.message.clone())),
        });
        outcome.map_err(|e| PortError {
            message: format!("request {id}: {}", e.message),
            retryable: e.retryable,
        })
    }
}

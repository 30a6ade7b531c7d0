//! Ways of delivering a request body and getting a response body back.
//!
//! A cassette is a directory with one JSON file per exchange:
//!
//! ```json
//! {"request": "<request body, verbatim>", "status": 200, "response": "<response body, verbatim>"}
//! ```
//!
//! Files are named by the first 24 hex digits of the SHA-256 of the request
//! body, so replay needs nothing but the body.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skillr1_core::env::PortError;

use crate::config::Endpoint;

/// Raw result of one HTTP round trip.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub status: u16,
    pub body: String,
}

pub trait ChatTransport: Send + Sync {
    fn send(&self, body: &str) -> Result<Exchange, PortError>;
}

/// Stable identifier of a request body.
pub fn request_id(body: &str) -> String {
    let digest = Sha256::digest(body.as_bytes());
    digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    auth: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &Endpoint, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: endpoint.completions_url(),
            auth: endpoint.api_key.as_ref().map(|k| format!("Bearer {k}")),
        }
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, body: &str) -> Result<Exchange, PortError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(auth) = &self.auth {
            req = req.header("Authorization", auth);
        }
        match req.send(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| PortError::transient(format!("reading response body: {e}")))?;
                Ok(Exchange { status, body })
            }
            Err(e @ (ureq::Error::BadUri(_) | ureq::Error::InvalidProxyUrl)) => Err(PortError::fatal(e.to_string())),
            Err(e) => Err(PortError::transient(e.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Cassette {
    request: String,
    status: u16,
    response: String,
}

fn cassette_path(dir: &Path, body: &str) -> PathBuf {
    dir.join(format!("{}.json", request_id(body)))
}

/// Serves exchanges from a cassette directory.
pub struct CassetteReplay {
    dir: PathBuf,
}

impl CassetteReplay {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, PortError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(PortError::fatal(format!(
                "cassette directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self { dir })
    }
}

impl ChatTransport for CassetteReplay {
    fn send(&self, body: &str) -> Result<Exchange, PortError> {
        let path = cassette_path(&self.dir, body);
        let text = fs::read_to_string(&path).map_err(|_| {
            PortError::fatal(format!(
                "no cassette for request {} in {}",
                request_id(body),
                self.dir.display()
            ))
        })?;
        let c: Cassette = serde_json::from_str(&text)
            .map_err(|e| PortError::fatal(format!("{}: malformed cassette: {e}", path.display())))?;
        if c.request != body {
            return Err(PortError::fatal(format!(
                "{}: recorded request differs",
                path.display()
            )));
        }
        Ok(Exchange {
            status: c.status,
            body: c.response,
        })
    }
}

/// Forwards to another transport and writes each successful round trip to a
/// cassette directory.
pub struct Recorder {
    inner: Arc<dyn ChatTransport>,
    dir: PathBuf,
}

impl Recorder {
    pub fn new(inner: Arc<dyn ChatTransport>, dir: impl Into<PathBuf>) -> Result<Self, PortError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| PortError::fatal(format!("creating {}: {e}", dir.display())))?;
        Ok(Self { inner, dir })
    }
}

impl ChatTransport for Recorder {
    fn send(&self, body: &str) -> Result<Exchange, PortError> {
        let ex = self.inner.send(body)?;
        if ex.status == 200 {
            let c = Cassette {
                request: body.to_string(),
                status: ex.status,
                response: ex.body.clone(),
            };
            let text = serde_json::to_string_pretty(&c).expect("strings always serialize") + "\n";
            let path = cassette_path(&self.dir, body);
            fs::write(&path, text).map_err(|e| PortError::fatal(format!("writing {}: {e}", path.display())))?;
        }
        Ok(ex)
    }
}

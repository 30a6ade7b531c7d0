//! In-process chat-completions server for tests and offline demos.

use std::collections::HashMap;
use std::io;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use tiny_http::{Header, Response, Server};

use crate::prompt::EDITOR_SYSTEM;
use crate::wire::{completion_body, ChatRequest};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MockRequest {
    pub method: String,
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MockReply {
    pub status: u16,
    pub body: String,
}

impl MockReply {
    pub fn completion(content: &str) -> Self {
        Self {
            status: 200,
            body: completion_body(content),
        }
    }
}

type Handler = dyn Fn(&MockRequest) -> MockReply + Send + Sync;

pub struct MockServer {
    url: String,
    server: Arc<Server>,
    worker: Option<JoinHandle<()>>,
    requests: Arc<Mutex<Vec<MockRequest>>>,
}

impl MockServer {
    /// Listen on an ephemeral local port and answer every request with
    /// `handler`.
    pub fn start(handler: impl Fn(&MockRequest) -> MockReply + Send + Sync + 'static) -> io::Result<Self> {
        let server = Arc::new(Server::http("127.0.0.1:0").map_err(io::Error::other)?);
        let port = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("mock server has no IP address"))?
            .port();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let worker = {
            let server = server.clone();
            let requests = requests.clone();
            thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let seen = MockRequest {
                        method: req.method().to_string(),
                        path: req.url().to_string(),
                        authorization: req
                            .headers()
                            .iter()
                            .find(|h| h.field.equiv("Authorization"))
                            .map(|h| h.value.as_str().to_string()),
                        body,
                    };
                    let reply = handler(&seen);
                    requests.lock().unwrap_or_else(|e| e.into_inner()).push(seen);
                    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
                    let _ = req.respond(
                        Response::from_string(reply.body)
                            .with_status_code(reply.status)
                            .with_header(header),
                    );
                }
            })
        };
        Ok(Self {
            url: format!("http://127.0.0.1:{port}/v1"),
            server,
            worker: Some(worker),
            requests,
        })
    }

    /// Base URL, ending in `/v1`.
    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Deterministic stand-in for a task model and an editor.
///
/// Task requests are answered from a task-to-answer table: with a skill in
/// the prompt the answer is right unless `seed % 3 == 0`; without one it is
/// right only when `seed % 3 == 0`. Editor requests get a revision note that
/// names the generation being revised.
#[derive(Clone, Debug, Default)]
pub struct ScriptedModel {
    answers: HashMap<String, String>,
}

impl ScriptedModel {
    pub fn new(pairs: impl IntoIterator<Item = (impl Into<String>, impl Into<String>)>) -> Self {
        Self {
            answers: pairs.into_iter().map(|(t, a)| (t.into(), a.into())).collect(),
        }
    }

    pub fn reply(&self, req: &MockRequest) -> MockReply {
        let Ok(chat) = serde_json::from_str::<ChatRequest>(&req.body) else {
            return MockReply {
                status: 400,
                body: r#"{"error":{"message":"malformed request"}}"#.into(),
            };
        };
        let user = chat.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        if chat.messages.first().is_some_and(|m| m.content == EDITOR_SYSTEM) {
            let g = user.matches("### Generation ").count().saturating_sub(1);
            return MockReply::completion(&format!(
                "Revision of generation {g}: read the task twice, answer with the shortest exact phrase, \
and finish with the answer line."
            ));
        }
        let task = user.rsplit("## Task\n").next().unwrap_or("");
        let right = self.answers.get(task).map(String::as_str).unwrap_or("unknown");
        let seed = chat.seed.unwrap_or(0);
        let with_skill = user.starts_with("## Skill\n");
        let correct = (seed % 3 == 0) != with_skill;
        let answer = if correct { right } else { "I am not sure" };
        MockReply::completion(&format!("Working through the question.\nFINAL ANSWER: {answer}"))
    }
}

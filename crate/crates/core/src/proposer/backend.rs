//! Completion backends. `HttpChat` speaks the chat-completion JSON protocol
//! with bounded retries; `Scripted` replays a fixed queue and records every
//! request, which makes whole search runs deterministic and assertable.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PromptBundle;

#[derive(Debug)]
pub enum ProposerBackend {
    HttpChat(HttpChatBackend),
    Scripted(ScriptedBackend),
}

#[derive(Clone, Debug)]
pub struct HttpChatBackend {
    pub endpoint: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub retry_base_delay: Duration,
}

impl HttpChatBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        HttpChatBackend {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key.into(),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            retry_base_delay: Duration::from_secs(1),
        }
    }
}

/// One recorded request against the scripted backend.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScriptedCall {
    pub temperature: f64,
    pub n: usize,
    pub prompt_hash: u64,
}

#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<String>>,
    calls: Mutex<Vec<ScriptedCall>>,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedBackend { queue: Mutex::new(responses.into()), calls: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<ScriptedCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    fn take(&self, prompt_hash: u64, temperature: f64, n: usize) -> Vec<String> {
        self.calls.lock().unwrap().push(ScriptedCall { temperature, n, prompt_hash });
        let mut q = self.queue.lock().unwrap();
        let mut out = Vec::new();
        for _ in 0..n {
            match q.pop_front() {
                Some(t) => out.push(t),
                None => break,
            }
        }
        out
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

/// Requests `n` completions at the given temperature. Transport errors are
/// absorbed: after the retry budget the result is simply shorter than `n`
/// (possibly empty), and the caller records the slots as missing.
pub fn propose(
    backend: &ProposerBackend,
    prompt: &PromptBundle,
    temperature: f64,
    n: usize,
    seed: Option<u64>,
) -> Vec<String> {
    assert!((0.0..=2.0).contains(&temperature), "temperature out of range");
    assert!(n >= 1);
    match backend {
        ProposerBackend::Scripted(s) => s.take(prompt.hash(), temperature, n),
        ProposerBackend::HttpChat(h) => http_propose(h, prompt, temperature, n, seed),
    }
}

fn http_propose(
    backend: &HttpChatBackend,
    prompt: &PromptBundle,
    temperature: f64,
    n: usize,
    seed: Option<u64>,
) -> Vec<String> {
    let client = match reqwest::blocking::Client::builder().timeout(backend.timeout).build() {
        Ok(c) => c,
        Err(_) => return Vec::new(),
    };
    let user = prompt.user_message();
    let body = ChatRequest {
        model: &backend.model,
        messages: vec![
            ChatMessage { role: "system", content: &prompt.system },
            ChatMessage { role: "user", content: &user },
        ],
        temperature,
        n,
        seed,
    };

    let mut delay = backend.retry_base_delay;
    for attempt in 0..=backend.max_retries {
        if attempt > 0 {
            std::thread::sleep(delay);
            delay *= 2;
        }
        let resp = client
            .post(&backend.endpoint)
            .bearer_auth(&backend.api_key)
            .json(&body)
            .send();
        match resp {
            Ok(r) if r.status().is_success() => match r.json::<ChatResponse>() {
                Ok(parsed) => {
                    return parsed.choices.into_iter().map(|c| c.message.content).collect();
                }
                Err(_) => continue,
            },
            // Retry on transport failure or server errors; client errors
            // (4xx) will not improve by retrying.
            Ok(r) if r.status().is_server_error() => continue,
            Ok(_) => return Vec::new(),
            Err(_) => continue,
        }
    }
    Vec::new()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> PromptBundle {
        PromptBundle {
            system: "sys".into(),
            history_blocks: vec!["h".into()],
            format: "fmt".into(),
        }
    }

    #[test]
    fn scripted_pops_in_order_and_logs() {
        let backend = ProposerBackend::Scripted(ScriptedBackend::new(vec![
            "A".into(),
            "B".into(),
            "C".into(),
        ]));
        let out = propose(&backend, &bundle(), 0.5, 2, None);
        assert_eq!(out, vec!["A".to_string(), "B".to_string()]);
        let ProposerBackend::Scripted(s) = &backend else { unreachable!() };
        let calls = s.calls();
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].temperature, 0.5);
        assert_eq!(calls[0].n, 2);
        assert_eq!(calls[0].prompt_hash, bundle().hash());
    }

    #[test]
    fn scripted_exhaustion_returns_short_then_empty() {
        let backend = ProposerBackend::Scripted(ScriptedBackend::new(vec!["A".into()]));
        assert_eq!(propose(&backend, &bundle(), 1.0, 2, None).len(), 1);
        assert!(propose(&backend, &bundle(), 1.0, 2, None).is_empty());
    }
}

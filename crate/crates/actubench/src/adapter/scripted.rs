//! Deterministic scripted adapter for tests and dry runs.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{AdapterError, ChatAdapter, ChatRequest, ChatResponse};
use crate::domain::TokenUsage;

/// Dequeues a fixed list of responses in order; errors once exhausted.
/// Dequeues are serialized, so concurrent callers observe a single global
/// script order.
pub struct ScriptedAdapter {
    queue: Mutex<VecDeque<ChatResponse>>,
    script_len: usize,
    calls: AtomicUsize,
}

impl ScriptedAdapter {
    pub fn new(responses: Vec<ChatResponse>) -> Self {
        ScriptedAdapter {
            script_len: responses.len(),
            queue: Mutex::new(responses.into()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Convenience constructor: one response per text, fixed nominal usage.
    pub fn from_texts(texts: &[&str]) -> Self {
        ScriptedAdapter::new(
            texts
                .iter()
                .map(|t| ChatResponse::new(*t, TokenUsage::new(100, 20)))
                .collect(),
        )
    }

    /// Number of completions served so far.
    pub fn calls_made(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl ChatAdapter for ScriptedAdapter {
    fn complete(&self, _req: &ChatRequest) -> Result<ChatResponse, AdapterError> {
        let mut queue = self.queue.lock().unwrap();
        match queue.pop_front() {
            Some(resp) => {
                self.calls.fetch_add(1, Ordering::SeqCst);
                Ok(resp)
            }
            None => Err(AdapterError::ScriptExhausted(self.script_len)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dequeues_in_order_then_errors() {
        let adapter = ScriptedAdapter::from_texts(&["B"]);
        let req = ChatRequest::new("s", "u", 16);
        let resp = adapter.complete(&req).unwrap();
        assert_eq!(resp.text, "B");
        assert_eq!(resp.usage, TokenUsage::new(100, 20));
        match adapter.complete(&req) {
            Err(AdapterError::ScriptExhausted(1)) => {}
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn identical_scripts_are_deterministic() {
        let req = ChatRequest::new("s", "u", 16);
        let run = || -> Vec<String> {
            let adapter = ScriptedAdapter::from_texts(&["one", "two", "three"]);
            (0..3).map(|_| adapter.complete(&req).unwrap().text).collect()
        };
        assert_eq!(run(), run());
    }
}

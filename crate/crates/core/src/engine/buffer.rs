use std::collections::BTreeMap;

use super::chunk::Chunk;
use crate::memory::RetrievalTicket;

pub const GOAL: &str = "goal";
pub const RETRIEVAL: &str = "retrieval";
pub const INTEROCEPTIVE: &str = "interoceptive";

/// One-chunk interface slot. A buffer with a pending request stays empty
/// until the request is fulfilled or preempted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Buffer {
    pub content: Option<Chunk>,
    pub pending: Option<RetrievalTicket>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Buffers {
    slots: BTreeMap<String, Buffer>,
}

impl Default for Buffers {
    fn default() -> Self {
        Self::with_names(&[GOAL, RETRIEVAL, INTEROCEPTIVE])
    }
}

impl Buffers {
    pub fn with_names(names: &[&str]) -> Self {
        Self {
            slots: names.iter().map(|n| (n.to_string(), Buffer::default())).collect(),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Buffer> {
        self.slots.get(name)
    }

    pub fn content(&self, name: &str) -> Option<&Chunk> {
        self.slots.get(name).and_then(|b| b.content.as_ref())
    }

    /// Places `chunk` in the named buffer, creating the buffer if needed.
    pub fn set(&mut self, name: &str, chunk: Option<Chunk>) {
        self.slots.entry(name.to_string()).or_default().content = chunk;
    }

    pub fn clear(&mut self, name: &str) {
        if let Some(b) = self.slots.get_mut(name) {
            b.content = None;
        }
    }

    pub fn pending(&self, name: &str) -> Option<&RetrievalTicket> {
        self.slots.get(name).and_then(|b| b.pending.as_ref())
    }

    /// Installs a request; any earlier pending request is preempted.
    pub fn set_pending(&mut self, name: &str, ticket: RetrievalTicket) -> Option<RetrievalTicket> {
        let b = self.slots.entry(name.to_string()).or_default();
        b.content = None;
        b.pending.replace(ticket)
    }

    pub fn take_pending(&mut self, name: &str) -> Option<RetrievalTicket> {
        self.slots.get_mut(name).and_then(|b| b.pending.take())
    }

    /// Contents only, ignoring pending requests.
    pub fn snapshot(&self) -> BTreeMap<String, Option<Chunk>> {
        self.slots.iter().map(|(k, b)| (k.clone(), b.content.clone())).collect()
    }
}

//! Declarative memory with latency-bearing retrieval.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::{Buffers, Chunk, ChunkError, Value, RETRIEVAL, RETRIEVAL_FAILURE};
use crate::mechanisms::MechanismConfig;

/// Request pattern: optional type plus required slot values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChunkPattern {
    pub chunk_type: Option<String>,
    pub slots: Vec<(String, Value)>,
}

impl ChunkPattern {
    pub fn of_type(t: &str) -> Self {
        Self {
            chunk_type: Some(t.into()),
            slots: Vec::new(),
        }
    }

    pub fn with(mut self, slot: &str, value: Value) -> Self {
        self.slots.push((slot.into(), value));
        self
    }

    pub fn matches(&self, chunk: &Chunk) -> bool {
        self.chunk_type.as_deref().is_none_or(|t| t == chunk.type_name())
            && self.slots.iter().all(|(s, v)| chunk.slot(s) == Some(v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalTicket {
    pub request: ChunkPattern,
    pub issued_at: f64,
    pub completes_at: f64,
    /// `None` is a retrieval failure.
    pub outcome: Option<Chunk>,
    /// Production whose action issued the request.
    pub requested_by: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("duplicate chunk id `{0}`")]
    DuplicateId(String),
    #[error("activation for `{0}` must be finite")]
    BadActivation(String),
    #[error("default latency must be > 0")]
    BadLatency,
    #[error("retrieval completes at {completes_at} but clock is {clock}")]
    NotYetComplete { completes_at: f64, clock: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Chunk(#[from] ChunkError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeclarativeMemory {
    chunks: BTreeMap<String, (Chunk, f64)>,
    default_latency_ms: f64,
}

impl Default for DeclarativeMemory {
    fn default() -> Self {
        Self {
            chunks: BTreeMap::new(),
            default_latency_ms: 200.0,
        }
    }
}

impl DeclarativeMemory {
    pub fn new(default_latency_ms: f64) -> Result<Self, MemoryError> {
        if !(default_latency_ms.is_finite() && default_latency_ms > 0.0) {
            return Err(MemoryError::BadLatency);
        }
        Ok(Self {
            chunks: BTreeMap::new(),
            default_latency_ms,
        })
    }

    pub fn default_latency_ms(&self) -> f64 {
        self.default_latency_ms
    }

    pub fn add_chunk(&mut self, chunk: Chunk, base_activation: f64) -> Result<(), MemoryError> {
        if !base_activation.is_finite() {
            return Err(MemoryError::BadActivation(chunk.id().into()));
        }
        if self.chunks.contains_key(chunk.id()) {
            return Err(MemoryError::DuplicateId(chunk.id().into()));
        }
        self.chunks.insert(chunk.id().to_string(), (chunk, base_activation));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<(&Chunk, f64)> {
        self.chunks.get(id).map(|(c, a)| (c, *a))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Chunk, f64)> {
        self.chunks.values().map(|(c, a)| (c, *a))
    }

    /// All chunks matching `pattern`, in id order.
    pub fn candidates<'a>(&'a self, pattern: &'a ChunkPattern) -> impl Iterator<Item = (&'a Chunk, f64)> + 'a {
        self.iter().filter(move |(c, _)| pattern.matches(c))
    }

    /// Highest-activation match; ties go to the smallest id.
    pub fn best_match(&self, pattern: &ChunkPattern) -> Option<(&Chunk, f64)> {
        let mut best: Option<(&Chunk, f64)> = None;
        for (c, a) in self.iter() {
            if pattern.matches(c) && best.is_none_or(|(_, b)| a > b) {
                best = Some((c, a));
            }
        }
        best
    }

    /// Resolves the request now; the outcome is delivered at `completes_at`.
    pub fn issue_retrieval(&self, pattern: ChunkPattern, now_ms: f64, cfg: &MechanismConfig) -> RetrievalTicket {
        let winner = self.best_match(&pattern);
        let latency = match winner {
            Some((_, activation)) if cfg.activation_latency => cfg.latency_factor_ms * (-activation).exp(),
            _ => self.default_latency_ms,
        };
        let mut completes_at = now_ms + latency;
        if completes_at <= now_ms || !completes_at.is_finite() {
            completes_at = now_ms.next_up();
        }
        RetrievalTicket {
            request: pattern,
            issued_at: now_ms,
            completes_at,
            outcome: winner.map(|(c, _)| c.clone()),
            requested_by: None,
        }
    }

    /// Loads chunks from lines of the form `id type slot=value ... @activation`.
    /// Blank lines and `#` comments are skipped; a missing `@activation` means 0.
    pub fn load_lines<'a>(&mut self, lines: impl IntoIterator<Item = (usize, &'a str)>) -> Result<(), MemoryError> {
        for (line, raw) in lines {
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let err = |message: String| MemoryError::Parse { line, message };
            let mut tokens = text.split_whitespace();
            let id = tokens.next().ok_or_else(|| err("missing id".into()))?;
            let type_name = tokens.next().ok_or_else(|| err("missing chunk type".into()))?;
            let mut slots = Vec::new();
            let mut activation = 0.0;
            for tok in tokens {
                if let Some(a) = tok.strip_prefix('@') {
                    activation = a.parse().map_err(|_| err(format!("bad activation `{a}`")))?;
                } else if let Some((k, v)) = tok.split_once('=') {
                    slots.push((k.to_string(), Value::parse(v)));
                } else {
                    return Err(err(format!("expected slot=value, got `{tok}`")));
                }
            }
            let chunk = Chunk::new(id, type_name, slots)?;
            self.add_chunk(chunk, activation).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }
}

/// Chunk placed in the retrieval buffer when nothing matched.
pub fn failure_chunk() -> Chunk {
    Chunk::new("retrieval-failure", RETRIEVAL_FAILURE, []).expect("static chunk is valid")
}

/// Delivers a completed ticket into the retrieval buffer.
pub fn fulfill(ticket: &RetrievalTicket, buffers: &mut Buffers, clock_ms: f64) -> Result<(), MemoryError> {
    if clock_ms < ticket.completes_at {
        return Err(MemoryError::NotYetComplete {
            completes_at: ticket.completes_at,
            clock: clock_ms,
        });
    }
    let delivered = ticket.outcome.clone().unwrap_or_else(failure_chunk);
    buffers.take_pending(RETRIEVAL);
    buffers.set(RETRIEVAL, Some(delivered));
    Ok(())
}

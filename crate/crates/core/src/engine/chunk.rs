use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// A slot value: a symbol, a number, or a reference to another chunk by id.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Symbol(String),
    Number(f64),
    Ref(String),
}

impl Value {
    pub fn sym(s: impl Into<String>) -> Self {
        Value::Symbol(s.into())
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Parses the textual form used in config files: numbers, `ref:<id>`, or symbols.
    pub fn parse(text: &str) -> Value {
        if let Some(id) = text.strip_prefix("ref:") {
            return Value::Ref(id.to_string());
        }
        match text.parse::<f64>() {
            Ok(n) if n.is_finite() => Value::Number(n),
            _ => Value::Symbol(text.to_string()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Symbol(s) => write!(f, "{s}"),
            Value::Number(n) => write!(f, "{n}"),
            Value::Ref(id) => write!(f, "ref:{id}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ChunkError {
    #[error("chunk type name must be non-empty")]
    EmptyType,
    #[error("chunk id must be non-empty")]
    EmptyId,
    #[error("duplicate slot `{0}` in chunk")]
    DuplicateSlot(String),
}

/// Typed slot/value record. Slots are kept in name order so that equality and
/// serialization are canonical.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    id: String,
    type_name: String,
    slots: BTreeMap<String, Value>,
}

impl Chunk {
    pub fn new(
        id: impl Into<String>,
        type_name: impl Into<String>,
        slots: impl IntoIterator<Item = (String, Value)>,
    ) -> Result<Self, ChunkError> {
        let id = id.into();
        let type_name = type_name.into();
        if id.is_empty() {
            return Err(ChunkError::EmptyId);
        }
        if type_name.is_empty() {
            return Err(ChunkError::EmptyType);
        }
        let mut map = BTreeMap::new();
        for (k, v) in slots {
            if map.insert(k.clone(), v).is_some() {
                return Err(ChunkError::DuplicateSlot(k));
            }
        }
        Ok(Self {
            id,
            type_name,
            slots: map,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn type_name(&self) -> &str {
        &self.type_name
    }

    pub fn slot(&self, name: &str) -> Option<&Value> {
        self.slots.get(name)
    }

    pub fn slots(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.slots.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Returns a copy with one slot set; the original is never mutated.
    pub fn with_slot(&self, name: &str, value: Value) -> Chunk {
        let mut next = self.clone();
        next.slots.insert(name.to_string(), value);
        next
    }
}

impl fmt::Display for Chunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.id, self.type_name)?;
        for (k, v) in &self.slots {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Chunk type deposited by interoceptive sampling.
pub const AFFECT_SAMPLE: &str = "affect-sample";
/// Chunk type placed in the retrieval buffer when a retrieval fails.
pub const RETRIEVAL_FAILURE: &str = "retrieval-failure";

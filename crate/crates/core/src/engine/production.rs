//! Condition-action rules and the minimal pattern language they use.
//!
//! Slot tests are equality against a constant, single-assignment variable
//! binding (a second use of a bound variable is an equality test), and
//! absence of a slot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::buffer::Buffers;
use super::chunk::{Chunk, Value};

pub type Bindings = BTreeMap<String, Value>;

/// Right-hand side of an action or a retrieval request slot.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Const(Value),
    Var(String),
}

impl Term {
    pub fn resolve(&self, bindings: &Bindings) -> Option<Value> {
        match self {
            Term::Const(v) => Some(v.clone()),
            Term::Var(name) => bindings.get(name).cloned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlotTest {
    Equals { slot: String, value: Value },
    Bind { slot: String, var: String },
    Absent { slot: String },
}

impl SlotTest {
    pub fn eq(slot: &str, value: Value) -> Self {
        SlotTest::Equals {
            slot: slot.into(),
            value,
        }
    }

    pub fn bind(slot: &str, var: &str) -> Self {
        SlotTest::Bind {
            slot: slot.into(),
            var: var.into(),
        }
    }

    pub fn absent(slot: &str) -> Self {
        SlotTest::Absent { slot: slot.into() }
    }

    pub fn slot(&self) -> &str {
        match self {
            SlotTest::Equals { slot, .. } | SlotTest::Bind { slot, .. } | SlotTest::Absent { slot } => slot,
        }
    }
}

/// Requires a chunk of `chunk_type` in `buffer` satisfying every test.
#[derive(Clone, Debug, PartialEq)]
pub struct BufferPattern {
    pub buffer: String,
    pub chunk_type: String,
    pub tests: Vec<SlotTest>,
}

impl BufferPattern {
    pub fn new(buffer: &str, chunk_type: &str, tests: Vec<SlotTest>) -> Self {
        Self {
            buffer: buffer.into(),
            chunk_type: chunk_type.into(),
            tests,
        }
    }

    /// Unifies this pattern against `chunk`, extending `bindings` on success.
    /// On failure `bindings` may hold partial extensions; callers work on a copy.
    pub fn unify(&self, chunk: &Chunk, bindings: &mut Bindings) -> bool {
        if chunk.type_name() != self.chunk_type {
            return false;
        }
        for test in &self.tests {
            let ok = match test {
                SlotTest::Equals { slot, value } => chunk.slot(slot) == Some(value),
                SlotTest::Absent { slot } => chunk.slot(slot).is_none(),
                SlotTest::Bind { slot, var } => match (chunk.slot(slot), bindings.get(var)) {
                    (None, _) => false,
                    (Some(v), Some(bound)) => v == bound,
                    (Some(v), None) => {
                        bindings.insert(var.clone(), v.clone());
                        true
                    }
                },
            };
            if !ok {
                return false;
            }
        }
        true
    }

    pub fn bound_vars(&self) -> impl Iterator<Item = &str> {
        self.tests.iter().filter_map(|t| match t {
            SlotTest::Bind { var, .. } => Some(var.as_str()),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Modify { buffer: String, slot: String, value: Term },
    Clear { buffer: String },
    Retrieve { chunk_type: String, slots: Vec<(String, Term)> },
    Detect,
}

impl Action {
    pub fn modify(buffer: &str, slot: &str, value: Term) -> Self {
        Action::Modify {
            buffer: buffer.into(),
            slot: slot.into(),
            value,
        }
    }

    pub fn clear(buffer: &str) -> Self {
        Action::Clear { buffer: buffer.into() }
    }

    fn vars(&self) -> Vec<&str> {
        fn term_var(t: &Term) -> Option<&str> {
            match t {
                Term::Var(v) => Some(v.as_str()),
                Term::Const(_) => None,
            }
        }
        match self {
            Action::Modify { value, .. } => term_var(value).into_iter().collect(),
            Action::Retrieve { slots, .. } => slots.iter().filter_map(|(_, t)| term_var(t)).collect(),
            Action::Clear { .. } | Action::Detect => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Complexity {
    Simple,
    Complex,
}

impl Complexity {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simple" => Some(Complexity::Simple),
            "complex" => Some(Complexity::Complex),
            _ => None,
        }
    }
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Complexity::Simple => "simple",
            Complexity::Complex => "complex",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Authored,
    Compiled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Production {
    pub id: String,
    pub conditions: Vec<BufferPattern>,
    pub actions: Vec<Action>,
    pub utility: f64,
    pub complexity: Complexity,
    pub provenance: Provenance,
    /// Firing constitutes noticing an internal state.
    pub is_monitor: bool,
    /// Production class used by narrow focus.
    pub class: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProductionError {
    #[error("production id must be non-empty")]
    EmptyId,
    #[error("production `{id}`: variable `{var}` used in actions but never bound")]
    UnboundVariable { id: String, var: String },
    #[error("production `{id}`: utility must be finite")]
    NonFiniteUtility { id: String },
    #[error("production `{id}`: compiled production issues a retrieval request")]
    CompiledRetrieval { id: String },
    #[error("production `{id}`: two conditions on buffer `{buffer}`")]
    DuplicateBuffer { id: String, buffer: String },
}

impl Production {
    pub fn authored(id: &str, conditions: Vec<BufferPattern>, actions: Vec<Action>) -> Self {
        Self {
            id: id.into(),
            conditions,
            actions,
            utility: 0.0,
            complexity: Complexity::Complex,
            provenance: Provenance::Authored,
            is_monitor: false,
            class: None,
        }
    }

    pub fn with_utility(mut self, u: f64) -> Self {
        self.utility = u;
        self
    }

    pub fn with_complexity(mut self, c: Complexity) -> Self {
        self.complexity = c;
        self
    }

    pub fn monitor(mut self) -> Self {
        self.is_monitor = true;
        self
    }

    pub fn in_class(mut self, class: &str) -> Self {
        self.class = Some(class.into());
        self
    }

    pub fn validate(&self) -> Result<(), ProductionError> {
        if self.id.is_empty() {
            return Err(ProductionError::EmptyId);
        }
        if !self.utility.is_finite() {
            return Err(ProductionError::NonFiniteUtility { id: self.id.clone() });
        }
        let mut seen = BTreeSet::new();
        for c in &self.conditions {
            if !seen.insert(c.buffer.as_str()) {
                return Err(ProductionError::DuplicateBuffer {
                    id: self.id.clone(),
                    buffer: c.buffer.clone(),
                });
            }
        }
        let bound: BTreeSet<&str> = self.conditions.iter().flat_map(|c| c.bound_vars()).collect();
        for a in &self.actions {
            if let Some(var) = a.vars().into_iter().find(|v| !bound.contains(v)) {
                return Err(ProductionError::UnboundVariable {
                    id: self.id.clone(),
                    var: var.to_string(),
                });
            }
            if self.provenance == Provenance::Compiled && matches!(a, Action::Retrieve { .. }) {
                return Err(ProductionError::CompiledRetrieval { id: self.id.clone() });
            }
        }
        Ok(())
    }

    pub fn issues_retrieval(&self) -> bool {
        self.actions.iter().any(|a| matches!(a, Action::Retrieve { .. }))
    }

    pub fn condition_on(&self, buffer: &str) -> Option<&BufferPattern> {
        self.conditions.iter().find(|c| c.buffer == buffer)
    }

    /// Bindings under which every condition holds, or `None`.
    pub fn instantiate(&self, buffers: &Buffers) -> Option<Bindings> {
        let mut bindings = Bindings::new();
        for pattern in &self.conditions {
            let chunk = buffers.content(&pattern.buffer)?;
            if !pattern.unify(chunk, &mut bindings) {
                return None;
            }
        }
        Some(bindings)
    }
}

/// A production together with the bindings it matched under.
#[derive(Clone, Debug, PartialEq)]
pub struct Instantiation {
    pub production_id: String,
    pub bindings: Bindings,
    pub utility: f64,
    pub is_monitor: bool,
    pub class: Option<String>,
}

/// Rule set keyed and iterated by production id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleSet {
    rules: BTreeMap<String, Production>,
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rules(rules: impl IntoIterator<Item = Production>) -> Result<Self, ProductionError> {
        let mut set = Self::new();
        for r in rules {
            set.insert(r)?;
        }
        Ok(set)
    }

    /// Inserts or replaces a rule after validating it.
    pub fn insert(&mut self, rule: Production) -> Result<(), ProductionError> {
        rule.validate()?;
        self.rules.insert(rule.id.clone(), rule);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Production> {
        self.rules.get(id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Production> {
        self.rules.get_mut(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Production> {
        self.rules.values()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn compiled_count(&self) -> usize {
        self.iter().filter(|p| p.provenance == Provenance::Compiled).count()
    }
}

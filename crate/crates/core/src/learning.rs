//! Utility learning that favours fast productions, production compilation
//! that removes a retrieval from a rule pair, and skill-stage labelling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::engine::{
    Action, BufferPattern, Bindings, Chunk, Complexity, Production, ProductionError, Provenance, RuleSet, SlotTest,
    Term, RETRIEVAL,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilityParams {
    pub alpha: f64,
    pub reward_magnitude: f64,
    pub time_cost_per_ms: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            reward_magnitude: 10.0,
            time_cost_per_ms: 0.02,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LearningError {
    #[error("alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("reward magnitude must be finite")]
    Reward,
    #[error("time cost must be finite and >= 0, got {0}")]
    TimeCost(f64),
    #[error("elapsed time must be finite and >= 0, got {0}")]
    Elapsed(f64),
    #[error("utility of `{0}` is not finite")]
    Utility(String),
    #[error("stage window is empty")]
    EmptyWindow,
}

impl UtilityParams {
    pub fn validate(&self) -> Result<(), LearningError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(LearningError::Alpha(self.alpha));
        }
        if !self.reward_magnitude.is_finite() {
            return Err(LearningError::Reward);
        }
        if !(self.time_cost_per_ms.is_finite() && self.time_cost_per_ms >= 0.0) {
            return Err(LearningError::TimeCost(self.time_cost_per_ms));
        }
        Ok(())
    }

    /// Reward net of the time it took to arrive.
    pub fn effective_reward(&self, elapsed_ms: f64) -> f64 {
        self.reward_magnitude - self.time_cost_per_ms * elapsed_ms
    }
}

/// `U + alpha * (target - U)`.
pub fn td_step(utility: f64, target: f64, alpha: f64) -> f64 {
    utility + alpha * (target - utility)
}

/// One temporal-difference step toward the time-discounted reward.
pub fn update_utility(p: &Production, params: &UtilityParams, elapsed_ms: f64) -> Result<Production, LearningError> {
    params.validate()?;
    if !(elapsed_ms.is_finite() && elapsed_ms >= 0.0) {
        return Err(LearningError::Elapsed(elapsed_ms));
    }
    if !p.utility.is_finite() {
        return Err(LearningError::Utility(p.id.clone()));
    }
    let mut next = p.clone();
    next.utility = td_step(p.utility, params.effective_reward(elapsed_ms), params.alpha);
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompilationRecord {
    pub parent_first: String,
    pub parent_second: String,
    pub bound_chunk: Chunk,
    pub child: String,
    pub created_at: f64,
    pub recreation_count: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum CompileError {
    #[error("`{0}` does not issue a retrieval request")]
    NoRequest(String),
    #[error("`{0}` does not test the retrieval buffer")]
    NoRetrievalCondition(String),
    #[error("`{0}` does not clear the retrieval buffer it consumes")]
    NotHarvesting(String),
    #[error("`{0}` would not match the retrieved chunk")]
    RetrievedMismatch(String),
    #[error("`{0}` issues its own retrieval; chains longer than a pair are not compiled")]
    ChainedRetrieval(String),
    #[error("conditions of `{first}` and `{second}` conflict on buffer `{buffer}`")]
    Incompatible { first: String, second: String, buffer: String },
    #[error(transparent)]
    Invalid(#[from] ProductionError),
}

fn test_from_term(slot: &str, term: &Term) -> SlotTest {
    match term {
        Term::Const(v) => SlotTest::eq(slot, v.clone()),
        Term::Var(v) => SlotTest::bind(slot, v),
    }
}

/// Merges a retrieve-then-apply pair into one rule with the retrieved
/// content substituted as constants.
///
/// The child tests everything the first parent tested, plus whatever the
/// second parent required of buffers other than retrieval that the first
/// parent's actions did not already establish. Its actions are the first
/// parent's actions without the request, followed by the second parent's.
pub fn compile_pair(
    first: &Production,
    second: &Production,
    retrieved: &Chunk,
    compiled_simple: bool,
) -> Result<Production, CompileError> {
    if !first.issues_retrieval() {
        return Err(CompileError::NoRequest(first.id.clone()));
    }
    let retrieval_cond = second
        .condition_on(RETRIEVAL)
        .ok_or_else(|| CompileError::NoRetrievalCondition(second.id.clone()))?;
    if !second
        .actions
        .iter()
        .any(|a| matches!(a, Action::Clear { buffer } if buffer == RETRIEVAL))
    {
        return Err(CompileError::NotHarvesting(second.id.clone()));
    }
    if second.issues_retrieval() {
        return Err(CompileError::ChainedRetrieval(second.id.clone()));
    }
    let mut from_retrieval = Bindings::new();
    if !retrieval_cond.unify(retrieved, &mut from_retrieval) {
        return Err(CompileError::RetrievedMismatch(second.id.clone()));
    }

    let incompatible = |buffer: &str| CompileError::Incompatible {
        first: first.id.clone(),
        second: second.id.clone(),
        buffer: buffer.to_string(),
    };

    // second-parent variable -> term in the child's namespace
    let mut subst: BTreeMap<String, Term> = from_retrieval
        .into_iter()
        .map(|(k, v)| (k, Term::Const(v)))
        .collect();
    let first_vars: BTreeSet<String> = first
        .conditions
        .iter()
        .flat_map(|c| c.bound_vars().map(str::to_string))
        .collect();
    let fresh = |name: &str| -> String {
        let mut candidate = format!("{name}'");
        while first_vars.contains(&candidate) {
            candidate.push('\'');
        }
        candidate
    };

    // last write by the first parent to each (buffer, slot)
    let mut written: BTreeMap<(&str, &str), &Term> = BTreeMap::new();
    for a in &first.actions {
        if let Action::Modify { buffer, slot, value } = a {
            written.insert((buffer.as_str(), slot.as_str()), value);
        }
    }

    let mut conditions = first.conditions.clone();
    for cond in second.conditions.iter().filter(|c| c.buffer != RETRIEVAL) {
        let existing = conditions.iter().position(|c| c.buffer == cond.buffer);
        if let Some(i) = existing {
            if conditions[i].chunk_type != cond.chunk_type {
                return Err(incompatible(&cond.buffer));
            }
        }
        let mut extra = Vec::new();
        for test in &cond.tests {
            let slot = test.slot();
            if let Some(&term) = written.get(&(cond.buffer.as_str(), slot)) {
                match test {
                    SlotTest::Bind { var, .. } => {
                        subst.entry(var.clone()).or_insert_with(|| term.clone());
                    }
                    SlotTest::Equals { value, .. } => {
                        if let Term::Const(c) = term {
                            if c != value {
                                return Err(incompatible(&cond.buffer));
                            }
                        }
                    }
                    SlotTest::Absent { .. } => return Err(incompatible(&cond.buffer)),
                }
                continue;
            }
            let counterpart = existing.and_then(|i| conditions[i].tests.iter().find(|t| t.slot() == slot));
            match (counterpart, test) {
                (Some(SlotTest::Bind { var: v1, .. }), SlotTest::Bind { var: w, .. }) => match subst.get(w) {
                    None => {
                        subst.insert(w.clone(), Term::Var(v1.clone()));
                    }
                    Some(Term::Var(v)) if v == v1 => {}
                    Some(t) => extra.push(test_from_term(slot, t)),
                },
                (Some(SlotTest::Equals { value: c1, .. }), SlotTest::Equals { value: c2, .. }) => {
                    if c1 != c2 {
                        return Err(incompatible(&cond.buffer));
                    }
                }
                (Some(SlotTest::Equals { value: c, .. }), SlotTest::Bind { var: w, .. }) => match subst.get(w) {
                    None => {
                        subst.insert(w.clone(), Term::Const(c.clone()));
                    }
                    Some(Term::Const(c2)) if c2 == c => {}
                    Some(t) => extra.push(test_from_term(slot, t)),
                },
                (Some(SlotTest::Bind { .. }), SlotTest::Equals { .. }) => extra.push(test.clone()),
                (Some(SlotTest::Absent { .. }), SlotTest::Absent { .. }) => {}
                (Some(_), _) => return Err(incompatible(&cond.buffer)),
                (None, SlotTest::Bind { slot, var }) => {
                    let term = subst
                        .entry(var.clone())
                        .or_insert_with(|| Term::Var(fresh(var)))
                        .clone();
                    extra.push(test_from_term(slot, &term));
                }
                (None, _) => extra.push(test.clone()),
            }
        }
        match existing {
            Some(i) => conditions[i].tests.extend(extra),
            None => conditions.push(BufferPattern {
                buffer: cond.buffer.clone(),
                chunk_type: cond.chunk_type.clone(),
                tests: extra,
            }),
        }
    }

    let translate = |t: &Term| -> Term {
        match t {
            Term::Var(v) => subst.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone())),
            c => c.clone(),
        }
    };
    let mut actions: Vec<Action> = first
        .actions
        .iter()
        .filter(|a| !matches!(a, Action::Retrieve { .. }))
        .cloned()
        .collect();
    for a in &second.actions {
        actions.push(match a {
            Action::Modify { buffer, .. } if buffer == RETRIEVAL => continue,
            Action::Modify { buffer, slot, value } => Action::Modify {
                buffer: buffer.clone(),
                slot: slot.clone(),
                value: translate(value),
            },
            other => other.clone(),
        });
    }

    let complexity = if compiled_simple
        || (first.complexity == Complexity::Simple && second.complexity == Complexity::Simple)
    {
        Complexity::Simple
    } else {
        Complexity::Complex
    };
    let child = Production {
        id: compiled_id(first, second, retrieved),
        conditions,
        actions,
        utility: 0.0,
        complexity,
        provenance: Provenance::Compiled,
        is_monitor: first.is_monitor || second.is_monitor,
        class: second.class.clone().or_else(|| first.class.clone()),
    };
    child.validate()?;
    Ok(child)
}

pub fn compiled_id(first: &Production, second: &Production, retrieved: &Chunk) -> String {
    format!("{}+{}[{}]", first.id, second.id, retrieved.id())
}

/// Procedural knowledge carried across trials: rules plus compilation history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Policy {
    pub rules: RuleSet,
    pub compilations: BTreeMap<String, CompilationRecord>,
}

impl Policy {
    pub fn new(rules: RuleSet) -> Self {
        Self {
            rules,
            compilations: BTreeMap::new(),
        }
    }

    /// Adds a fresh child at utility 0, or, if it already exists, counts a
    /// recreation and moves its utility one step toward the parents' mean.
    pub fn absorb_compiled(
        &mut self,
        child: Production,
        first: &str,
        second: &str,
        retrieved: &Chunk,
        params: &UtilityParams,
        now_ms: f64,
    ) -> Result<&CompilationRecord, CompileError> {
        let parents_mean = {
            let u = |id: &str| self.rules.get(id).map_or(0.0, |p| p.utility);
            (u(first) + u(second)) / 2.0
        };
        let id = child.id.clone();
        if let Some(existing) = self.rules.get_mut(&id) {
            existing.utility = td_step(existing.utility, parents_mean, params.alpha);
            let rec = self.compilations.get_mut(&id).expect("compiled rule has a record");
            rec.recreation_count += 1;
        } else {
            self.rules.insert(child)?;
            self.compilations.insert(
                id.clone(),
                CompilationRecord {
                    parent_first: first.to_string(),
                    parent_second: second.to_string(),
                    bound_chunk: retrieved.clone(),
                    child: id.clone(),
                    created_at: now_ms,
                    recreation_count: 0,
                },
            );
        }
        Ok(&self.compilations[&id])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageLabel {
    Novice,
    Intermediate,
    Expert,
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageLabel::Novice => "novice",
            StageLabel::Intermediate => "intermediate",
            StageLabel::Expert => "expert",
        })
    }
}

/// One detected signal event, attributed to the production that first noticed it.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub time_ms: f64,
    pub event_id: u64,
    pub production: String,
    pub compiled: bool,
}

pub const NOVICE_BELOW: f64 = 0.1;
pub const EXPERT_FROM: f64 = 0.9;

pub fn compiled_fraction(window: &[Episode]) -> Result<f64, LearningError> {
    if window.is_empty() {
        return Err(LearningError::EmptyWindow);
    }
    Ok(window.iter().filter(|e| e.compiled).count() as f64 / window.len() as f64)
}

pub fn stage_for_fraction(f: f64) -> StageLabel {
    if f < NOVICE_BELOW {
        StageLabel::Novice
    } else if f < EXPERT_FROM {
        StageLabel::Intermediate
    } else {
        StageLabel::Expert
    }
}

/// Labels a window of recent episodes by the share served by compiled rules.
pub fn classify_stage(window: &[Episode]) -> Result<StageLabel, LearningError> {
    compiled_fraction(window).map(stage_for_fraction)
}

/// Compiled fraction after each episode over the last `width` episodes
/// (fewer at the start of a run).
pub fn sliding_fractions(episodes: &[Episode], width: usize) -> Vec<f64> {
    if width == 0 {
        return Vec::new();
    }
    (0..episodes.len())
        .map(|i| compiled_fraction(&episodes[(i + 1).saturating_sub(width)..=i]).expect("window is non-empty"))
        .collect()
}

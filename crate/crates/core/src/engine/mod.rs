//! The cognition cycle.
//!
//! Each [`Engine::step`] samples the interoceptive buffer, delivers any
//! completed retrieval, matches every rule against the buffers, filters the
//! conflict set by focus, selects by noisy utility and fires the winner. A
//! firing occupies the engine for its duration; its actions take effect at
//! the end of the firing. When nothing matches the engine waits for a pending
//! retrieval (fire-when-ready) or idles for one tick.

mod buffer;
mod chunk;
mod log;
mod production;

pub use buffer::{Buffer, Buffers, GOAL, INTEROCEPTIVE, RETRIEVAL};
pub use chunk::{Chunk, ChunkError, Value, AFFECT_SAMPLE, RETRIEVAL_FAILURE};
pub use log::{EventKind, EventLog, LogEntry, LogError, Payload, CSV_HEADER};
pub use production::{
    Action, Bindings, BufferPattern, Complexity, Instantiation, Production, ProductionError, Provenance, RuleSet,
    SlotTest, Term,
};

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::learning::{compile_pair, CompileError, Episode, LearningError, Policy, UtilityParams};
use crate::mechanisms::{apply_focus, MechanismConfig, Violation, COMPLEX_RANGE_MS, SIMPLE_RANGE_MS};
use crate::memory::{fulfill, ChunkPattern, DeclarativeMemory, MemoryError};
use crate::rng::{logistic, SimRng};
use crate::signals::{affect_event_id, sample_interoceptive, DetectAt, GateModel, SignalTrace};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid mechanism config: {}", join(.0))]
    Config(Vec<Violation>),
    #[error("run_until target {t_end} precedes clock {clock}")]
    TimeTarget { t_end: f64, clock: f64 },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Production(#[from] ProductionError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Duration of one firing of `p` under `cfg`.
pub fn firing_duration(p: &Production, cfg: &MechanismConfig, rng: &mut SimRng) -> Result<f64, EngineError> {
    let mut bad = Vec::new();
    if !(cfg.cycle_time_ms.is_finite() && cfg.cycle_time_ms > 0.0) {
        bad.push(Violation {
            field: "cycle_time_ms",
            message: "must be > 0".into(),
        });
    }
    if !(cfg.clock_scale.is_finite() && cfg.clock_scale > 0.0) {
        bad.push(Violation {
            field: "clock_scale",
            message: "must be > 0".into(),
        });
    }
    if !bad.is_empty() {
        return Err(EngineError::Config(bad));
    }
    let base = if cfg.complexity_timing {
        let (lo, hi) = match p.complexity {
            Complexity::Simple => SIMPLE_RANGE_MS,
            Complexity::Complex => COMPLEX_RANGE_MS,
        };
        rng.random_range(lo..=hi)
    } else {
        cfg.cycle_time_ms
    };
    Ok(base * cfg.clock_scale)
}

/// Picks the instantiation with the highest utility plus logistic noise.
/// Returns its index and noisy utility. Ties keep the earlier entry, which is
/// the lexicographically smaller production id for a matched conflict set.
pub fn select_with_noise(conflict: &[Instantiation], rng: &mut SimRng, noise_scale: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, inst) in conflict.iter().enumerate() {
        let score = inst.utility + logistic(rng, noise_scale);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    best
}

pub fn select_production<'a>(
    conflict: &'a [Instantiation],
    rng: &mut SimRng,
    noise_scale: f64,
) -> Option<&'a Instantiation> {
    select_with_noise(conflict, rng, noise_scale).map(|(i, _)| &conflict[i])
}

/// Stimulus source feeding the interoceptive buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Stimulus {
    pub trace: SignalTrace,
    pub gate: GateModel,
}

#[derive(Clone, Debug)]
struct Fired {
    production: String,
    start_ms: f64,
}

#[derive(Clone, Debug)]
pub struct Engine {
    clock: f64,
    buffers: Buffers,
    policy: Policy,
    memory: DeclarativeMemory,
    log: EventLog,
    stimulus: Option<Stimulus>,
    detect_at: DetectAt,
    learning: Option<UtilityParams>,
    /// Retrieval result currently in the buffer and the rule that asked for it.
    delivered: Option<(String, Chunk)>,
    fired_since_reward: Vec<Fired>,
    detected: BTreeSet<u64>,
    episodes: Vec<Episode>,
}

impl Engine {
    pub fn new(policy: Policy, memory: DeclarativeMemory) -> Self {
        Self {
            clock: 0.0,
            buffers: Buffers::default(),
            policy,
            memory,
            log: EventLog::new(),
            stimulus: None,
            detect_at: DetectAt::Start,
            learning: None,
            delivered: None,
            fired_since_reward: Vec::new(),
            detected: BTreeSet::new(),
            episodes: Vec::new(),
        }
    }

    pub fn from_rules(rules: RuleSet, memory: DeclarativeMemory) -> Self {
        Self::new(Policy::new(rules), memory)
    }

    pub fn with_goal(mut self, goal: Chunk) -> Self {
        self.buffers.set(GOAL, Some(goal));
        self
    }

    pub fn with_stimulus(mut self, trace: SignalTrace, gate: GateModel) -> Self {
        self.stimulus = Some(Stimulus { trace, gate });
        self
    }

    pub fn with_detect_at(mut self, detect_at: DetectAt) -> Self {
        self.detect_at = detect_at;
        self
    }

    /// Enables utility learning and, when the config allows it, compilation.
    pub fn with_learning(mut self, params: UtilityParams) -> Result<Self, EngineError> {
        params.validate()?;
        self.learning = Some(params);
        Ok(self)
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn buffers(&self) -> &Buffers {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut Buffers {
        &mut self.buffers
    }

    pub fn rules(&self) -> &RuleSet {
        &self.policy.rules
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    pub fn memory(&self) -> &DeclarativeMemory {
        &self.memory
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn stimulus(&self) -> Option<&Stimulus> {
        self.stimulus.as_ref()
    }

    pub fn detect_at(&self) -> DetectAt {
        self.detect_at
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    /// Every rule instantiation satisfied by the current buffers, in production id order.
    pub fn match_conflict_set(&self) -> Vec<Instantiation> {
        self.policy
            .rules
            .iter()
            .filter_map(|p| {
                p.instantiate(&self.buffers).map(|bindings| Instantiation {
                    production_id: p.id.clone(),
                    bindings,
                    utility: p.utility,
                    is_monitor: p.is_monitor,
                    class: p.class.clone(),
                })
            })
            .collect()
    }

    fn sample_signals(&mut self, rng: &mut SimRng) {
        let Some(stim) = &self.stimulus else { return };
        let sample = sample_interoceptive(&stim.trace, self.clock, &stim.gate, rng);
        if let Some(id) = sample.as_ref().and_then(affect_event_id) {
            self.log.push(self.clock, None, Payload::SignalDeposit { event: id });
        }
        self.buffers.set(INTEROCEPTIVE, sample);
    }

    fn deliver_retrieval(&mut self) -> Result<(), EngineError> {
        let Some(ticket) = self.buffers.pending(RETRIEVAL).cloned() else {
            return Ok(());
        };
        if ticket.completes_at > self.clock {
            return Ok(());
        }
        fulfill(&ticket, &mut self.buffers, self.clock)?;
        let chunk = self.buffers.content(RETRIEVAL).cloned();
        self.log.push(
            self.clock,
            None,
            Payload::RetrievalComplete {
                chunk: ticket.outcome.as_ref().map(|c| c.id().to_string()),
            },
        );
        self.delivered = match (ticket.requested_by, ticket.outcome, chunk) {
            (Some(by), Some(_), Some(c)) => Some((by, c)),
            _ => None,
        };
        Ok(())
    }

    /// One cognition cycle.
    pub fn step(&mut self, cfg: &MechanismConfig, rng: &mut SimRng) -> Result<(), EngineError> {
        self.sample_signals(rng);
        self.deliver_retrieval()?;

        let conflict = apply_focus(cfg, self.match_conflict_set());
        self.log.push(
            self.clock,
            None,
            Payload::Match {
                candidates: conflict.len(),
            },
        );

        if let Some((idx, noisy)) = select_with_noise(&conflict, rng, cfg.noise_scale) {
            let inst = &conflict[idx];
            self.log.push(
                self.clock,
                Some(&inst.production_id),
                Payload::Select {
                    utility: inst.utility,
                    noisy,
                },
            );
            self.fire(inst, cfg, rng)?;
        } else if let Some(ticket) = self.buffers.pending(RETRIEVAL) {
            self.clock = self.clock.max(ticket.completes_at);
        } else {
            self.clock += cfg.tick_ms();
        }
        Ok(())
    }

    fn fire(&mut self, inst: &Instantiation, cfg: &MechanismConfig, rng: &mut SimRng) -> Result<(), EngineError> {
        let production = self
            .policy
            .rules
            .get(&inst.production_id)
            .expect("instantiation refers to a known rule")
            .clone();
        let start = self.clock;
        let end = start + firing_duration(&production, cfg, rng)?;
        let duration = end - start;
        let affect = production
            .condition_on(INTEROCEPTIVE)
            .and_then(|_| self.buffers.content(INTEROCEPTIVE))
            .and_then(affect_event_id);
        let consumed_retrieval = production
            .condition_on(RETRIEVAL)
            .and_then(|_| self.buffers.content(RETRIEVAL).cloned());
        // actions may clear the buffer, so note who asked for its chunk first
        let delivered = consumed_retrieval.as_ref().and(self.delivered.clone());
        self.log.push(
            start,
            Some(&production.id),
            Payload::FireStart {
                duration_ms: duration,
                monitor: production.is_monitor,
                affect,
            },
        );
        self.fired_since_reward.push(Fired {
            production: production.id.clone(),
            start_ms: start,
        });

        self.clock = end;
        for action in &production.actions {
            self.apply_action(&production, action, &inst.bindings, affect, start, cfg)?;
        }
        self.log.push(end, Some(&production.id), Payload::FireEnd { affect });

        if let (Some(chunk), Some(delivered)) = (consumed_retrieval, delivered) {
            self.maybe_compile(&production, &chunk, delivered, cfg)?;
        }
        Ok(())
    }

    fn apply_action(
        &mut self,
        production: &Production,
        action: &Action,
        bindings: &Bindings,
        affect: Option<u64>,
        start: f64,
        cfg: &MechanismConfig,
    ) -> Result<(), EngineError> {
        match action {
            Action::Modify { buffer, slot, value } => {
                let value = value.resolve(bindings).expect("validated rules bind every action variable");
                if let Some(current) = self.buffers.content(buffer) {
                    let next = current.with_slot(slot, value);
                    self.buffers.set(buffer, Some(next));
                    if buffer == RETRIEVAL {
                        self.delivered = None;
                    }
                }
            }
            Action::Clear { buffer } => {
                self.buffers.clear(buffer);
                if buffer == RETRIEVAL {
                    self.delivered = None;
                }
            }
            Action::Retrieve { chunk_type, slots } => {
                let pattern = ChunkPattern {
                    chunk_type: Some(chunk_type.clone()),
                    slots: slots
                        .iter()
                        .map(|(s, t)| (s.clone(), t.resolve(bindings).expect("validated")))
                        .collect(),
                };
                let mut ticket = self.memory.issue_retrieval(pattern, self.clock, cfg);
                ticket.requested_by = Some(production.id.clone());
                self.log.push(
                    self.clock,
                    Some(&production.id),
                    Payload::RetrievalStart {
                        completes_at: ticket.completes_at,
                        outcome: ticket.outcome.as_ref().map(|c| c.id().to_string()),
                    },
                );
                self.buffers.set_pending(RETRIEVAL, ticket);
                self.delivered = None;
            }
            Action::Detect => {
                self.log.push(self.clock, Some(&production.id), Payload::Detection { event: affect });
                if let Some(ev) = affect {
                    self.credit_detection(production, ev, start)?;
                }
            }
        }
        Ok(())
    }

    /// Records the first true detection of an event and, when learning, pays
    /// the reward to every rule fired since the event began.
    fn credit_detection(&mut self, production: &Production, event_id: u64, start: f64) -> Result<(), EngineError> {
        let Some(stim) = &self.stimulus else { return Ok(()) };
        let Some(event) = stim.trace.get(event_id) else { return Ok(()) };
        let anchor = match self.detect_at {
            DetectAt::Start => start,
            DetectAt::End => self.clock,
        };
        if !event.in_window(anchor) || !self.detected.insert(event_id) {
            return Ok(());
        }
        let onset = event.onset_ms;
        self.episodes.push(Episode {
            time_ms: anchor,
            event_id,
            production: production.id.clone(),
            compiled: production.provenance == Provenance::Compiled,
        });
        let Some(params) = self.learning else { return Ok(()) };
        let now = self.clock;
        for fired in std::mem::take(&mut self.fired_since_reward) {
            if fired.start_ms < onset {
                continue;
            }
            let Some(rule) = self.policy.rules.get_mut(&fired.production) else { continue };
            let elapsed = now - fired.start_ms;
            let updated = crate::learning::update_utility(rule, &params, elapsed)?;
            rule.utility = updated.utility;
            self.log.push(
                now,
                Some(&fired.production),
                Payload::Utility {
                    utility: updated.utility,
                    reward: params.effective_reward(elapsed),
                    elapsed_ms: elapsed,
                },
            );
        }
        Ok(())
    }

    fn maybe_compile(
        &mut self,
        second: &Production,
        consumed: &Chunk,
        (first_id, chunk): (String, Chunk),
        cfg: &MechanismConfig,
    ) -> Result<(), EngineError> {
        let Some(params) = self.learning else { return Ok(()) };
        if !cfg.compilation_enabled || second.provenance == Provenance::Compiled {
            return Ok(());
        }
        if &chunk != consumed {
            return Ok(());
        }
        let Some(first) = self.policy.rules.get(&first_id).cloned() else { return Ok(()) };
        let child = match compile_pair(&first, second, &chunk, cfg.compiled_simple) {
            Ok(child) => child,
            // pairs that cannot be merged are simply left alone
            Err(_) => return Ok(()),
        };
        let now = self.clock;
        let u = |id: &str| self.policy.rules.get(id).map_or(0.0, |p| p.utility);
        let parents_mean = (u(&first.id) + u(&second.id)) / 2.0;
        let rec = self
            .policy
            .absorb_compiled(child, &first.id, &second.id, &chunk, &params, now)?;
        let child_id = rec.child.clone();
        let recreations = rec.recreation_count;
        self.log.push(
            now,
            Some(&child_id),
            Payload::Compile {
                parents: (first.id.clone(), second.id.clone()),
                recreations,
            },
        );
        if recreations > 0 {
            let utility = self.policy.rules.get(&child_id).map_or(0.0, |p| p.utility);
            self.log.push(
                now,
                Some(&child_id),
                Payload::Utility {
                    utility,
                    reward: parents_mean,
                    elapsed_ms: 0.0,
                },
            );
        }
        Ok(())
    }

    /// Steps until the clock reaches `t_end`.
    pub fn run_until(&mut self, cfg: &MechanismConfig, t_end: f64, rng: &mut SimRng) -> Result<(), EngineError> {
        if t_end < self.clock {
            return Err(EngineError::TimeTarget {
                t_end,
                clock: self.clock,
            });
        }
        while self.clock < t_end {
            self.step(cfg, rng)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;

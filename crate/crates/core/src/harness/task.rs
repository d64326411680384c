//! The standard monitoring task: an instruction retrieved from memory and
//! applied to each affect sample, optionally alongside distractor rules.

use crate::engine::{
    Action, BufferPattern, Chunk, Complexity, Engine, EngineError, Production, ProductionError, RuleSet, SlotTest,
    Term, Value, AFFECT_SAMPLE, GOAL, INTEROCEPTIVE, RETRIEVAL,
};
use crate::learning::Policy;
use crate::mechanisms::{MechanismConfig, MONITOR_CLASS};
use crate::memory::{DeclarativeMemory, MemoryError};

use super::config::TaskSpec;

pub const RETRIEVE_INSTRUCTION: &str = "retrieve-instruction";
pub const APPLY_INSTRUCTION: &str = "apply-instruction";
pub const INSTRUCTION_CHUNK: &str = "meta-instruction";

pub fn goal_chunk() -> Chunk {
    Chunk::new(GOAL, "monitor", [("state".to_string(), Value::sym("attend"))]).expect("static chunk")
}

pub fn instruction_chunk() -> Chunk {
    Chunk::new(
        INSTRUCTION_CHUNK,
        "instruction",
        [
            ("target".to_string(), Value::sym("affect")),
            ("action".to_string(), Value::sym("note")),
        ],
    )
    .expect("static chunk")
}

fn goal_in(state: &str) -> BufferPattern {
    BufferPattern::new(GOAL, "monitor", vec![SlotTest::eq("state", Value::sym(state))])
}

fn affect() -> BufferPattern {
    BufferPattern::new(INTEROCEPTIVE, AFFECT_SAMPLE, vec![SlotTest::bind("event", "e")])
}

pub fn monitor_rules(utility: f64, complexity: Complexity) -> [Production; 2] {
    let retrieve = Production::authored(
        RETRIEVE_INSTRUCTION,
        vec![goal_in("attend"), affect()],
        vec![
            Action::modify(GOAL, "state", Term::Const(Value::sym("retrieving"))),
            Action::Retrieve {
                chunk_type: "instruction".into(),
                slots: vec![("target".into(), Term::Const(Value::sym("affect")))],
            },
        ],
    )
    .with_utility(utility)
    .with_complexity(complexity)
    .in_class(MONITOR_CLASS);
    let apply = Production::authored(
        APPLY_INSTRUCTION,
        vec![
            goal_in("retrieving"),
            BufferPattern::new(
                RETRIEVAL,
                "instruction",
                vec![
                    SlotTest::eq("target", Value::sym("affect")),
                    SlotTest::bind("action", "act"),
                ],
            ),
            affect(),
        ],
        vec![
            Action::Detect,
            Action::modify(GOAL, "state", Term::Const(Value::sym("attend"))),
            Action::modify(GOAL, "noted", Term::Var("e".into())),
            Action::modify(GOAL, "did", Term::Var("act".into())),
            Action::clear(RETRIEVAL),
        ],
    )
    .with_utility(utility)
    .with_complexity(complexity)
    .monitor()
    .in_class(MONITOR_CLASS);
    [retrieve, apply]
}

/// Off-task rule `distractor-k`: fires on any monitoring goal and leaves a mark.
pub fn distractor(k: usize, utility: f64, complexity: Complexity) -> Production {
    Production::authored(
        &format!("distractor-{k}"),
        vec![BufferPattern::new(GOAL, "monitor", vec![])],
        vec![Action::modify(GOAL, "wander", Term::Const(Value::sym(format!("d{k}"))))],
    )
    .with_utility(utility)
    .with_complexity(complexity)
}

pub fn task_rules(task: &TaskSpec, cfg: &MechanismConfig) -> Result<RuleSet, ProductionError> {
    let monitors = monitor_rules(task.monitor_utility, cfg.monitor_complexity);
    let distractors =
        (0..task.kind.distractors()).map(|k| distractor(k, task.distractor_utility, task.distractor_complexity));
    RuleSet::from_rules(monitors.into_iter().chain(distractors))
}

pub fn task_memory(task: &TaskSpec, cfg: &MechanismConfig) -> Result<DeclarativeMemory, MemoryError> {
    let mut memory = DeclarativeMemory::new(cfg.default_latency_ms)?;
    memory.add_chunk(instruction_chunk(), task.instruction_activation)?;
    Ok(memory)
}

/// Fresh engine holding the novice task: authored rules, one instruction, goal set.
pub fn build_monitoring_task(task: &TaskSpec, cfg: &MechanismConfig) -> Result<Engine, EngineError> {
    let cfg = cfg.validate().map_err(EngineError::Config)?;
    let rules = task_rules(task, &cfg)?;
    let memory = task_memory(task, &cfg)?;
    Ok(Engine::new(Policy::new(rules), memory).with_goal(goal_chunk()))
}

/// Engine running an existing policy on the task's memory and goal.
pub fn engine_with_policy(policy: Policy, task: &TaskSpec, cfg: &MechanismConfig) -> Result<Engine, EngineError> {
    let memory = task_memory(task, cfg)?;
    Ok(Engine::new(policy, memory).with_goal(goal_chunk()))
}

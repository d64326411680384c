#![allow(dead_code)]

use metathresh_core::engine::{
    Action, BufferPattern, Chunk, Engine, EventKind, Production, RuleSet, SlotTest, Term, Value, GOAL, RETRIEVAL,
};
use metathresh_core::mechanisms::MechanismConfig;
use metathresh_core::memory::DeclarativeMemory;
use metathresh_core::rng::rng_from_seed;
use rand::Rng;

pub const FIRST: &str = "request";
pub const SECOND: &str = "harvest";

pub fn quiet() -> MechanismConfig {
    MechanismConfig {
        noise_scale: 0.0,
        ..Default::default()
    }
}

pub fn goal(state: &str) -> Chunk {
    Chunk::new("g", "task", [("state".to_string(), Value::sym(state))]).unwrap()
}

/// A random instruction chunk with a `key` slot and up to five content slots.
pub fn random_instruction(rng: &mut impl Rng, n: usize) -> Chunk {
    let mut slots = vec![("key".to_string(), Value::sym(format!("k{}", rng.random_range(0..4))))];
    for s in 0..rng.random_range(0..=5) {
        let v = if rng.random_bool(0.5) {
            Value::Number(rng.random_range(-1000..1000) as f64 / 8.0)
        } else {
            Value::sym(format!("v{}", rng.random_range(0..50)))
        };
        slots.push((format!("s{s}"), v));
    }
    Chunk::new(format!("i{n}"), "instruction", slots).unwrap()
}

/// Request-then-apply pair: the second rule copies every slot of the
/// retrieved instruction into the goal and also writes one constant.
pub fn instruction_pair(chunk: &Chunk) -> (Production, Production) {
    let key = chunk.slot("key").cloned().unwrap();
    let first = Production::authored(
        FIRST,
        vec![BufferPattern::new(GOAL, "task", vec![SlotTest::eq("state", Value::sym("start"))])],
        vec![
            Action::modify(GOAL, "state", Term::Const(Value::sym("waiting"))),
            Action::Retrieve {
                chunk_type: "instruction".into(),
                slots: vec![("key".into(), Term::Const(key.clone()))],
            },
        ],
    );
    let mut tests = vec![SlotTest::eq("key", key)];
    let mut actions = vec![Action::modify(GOAL, "state", Term::Const(Value::sym("done")))];
    for (slot, _) in chunk.slots().filter(|(s, _)| *s != "key") {
        let var = format!("x-{slot}");
        tests.push(SlotTest::bind(slot, &var));
        actions.push(Action::modify(GOAL, &format!("out-{slot}"), Term::Var(var)));
    }
    actions.push(Action::modify(GOAL, "seen", Term::Const(Value::Number(1.0))));
    actions.push(Action::clear(RETRIEVAL));
    let second = Production::authored(
        SECOND,
        vec![
            BufferPattern::new(GOAL, "task", vec![SlotTest::eq("state", Value::sym("waiting"))]),
            BufferPattern::new(RETRIEVAL, "instruction", tests),
        ],
        actions,
    );
    (first, second)
}

pub fn memory_with(chunk: &Chunk) -> DeclarativeMemory {
    let mut m = DeclarativeMemory::default();
    m.add_chunk(chunk.clone(), 0.0).unwrap();
    m
}

/// Runs `rules` from a `start` goal until quiescent and returns the final
/// goal and retrieval contents plus the span from first fire-start to last
/// fire-end.
pub fn run_to_rest(rules: Vec<Production>, memory: DeclarativeMemory) -> (Option<Chunk>, Option<Chunk>, f64) {
    let rules = RuleSet::from_rules(rules).unwrap();
    let mut e = Engine::from_rules(rules, memory).with_goal(goal("start"));
    let mut rng = rng_from_seed(0);
    e.run_until(&quiet(), 2000.0, &mut rng).unwrap();
    let start = e.log().of_kind(EventKind::FireStart).next().map_or(f64::NAN, |x| x.time_ms);
    let end = e.log().of_kind(EventKind::FireEnd).last().map_or(f64::NAN, |x| x.time_ms);
    (
        e.buffers().content(GOAL).cloned(),
        e.buffers().content(RETRIEVAL).cloned(),
        end - start,
    )
}

//! Toggles and parameters for the four production-speedup mechanisms:
//! a faster ticking clock, compiled productions that skip retrieval,
//! narrowed focus, and cheaper (simple) productions.

use std::fmt;

use crate::engine::{Complexity, Instantiation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FocusMode {
    Open,
    Narrow,
}

impl FocusMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(FocusMode::Open),
            "narrow" => Some(FocusMode::Narrow),
            _ => None,
        }
    }
}

impl fmt::Display for FocusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FocusMode::Open => "open",
            FocusMode::Narrow => "narrow",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MechanismConfig {
    pub cycle_time_ms: f64,
    /// Multiplier on every firing and idle tick.
    pub clock_scale: f64,
    pub compilation_enabled: bool,
    pub focus_mode: FocusMode,
    /// Production class allowed through under narrow focus.
    pub focus_class: Option<String>,
    pub complexity_timing: bool,
    pub noise_scale: f64,
    pub activation_latency: bool,
    pub latency_factor_ms: f64,
    pub default_latency_ms: f64,
    /// Compiled children are marked simple.
    pub compiled_simple: bool,
    /// Complexity given to the monitoring task's authored rules.
    pub monitor_complexity: Complexity,
}

pub const SIMPLE_RANGE_MS: (f64, f64) = (34.0, 44.0);
pub const COMPLEX_RANGE_MS: (f64, f64) = (59.0, 73.0);
pub const DEFAULT_CYCLE_MS: f64 = 50.0;
pub const MONITOR_CLASS: &str = "monitor";

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            cycle_time_ms: DEFAULT_CYCLE_MS,
            clock_scale: 1.0,
            compilation_enabled: false,
            focus_mode: FocusMode::Open,
            focus_class: Some(MONITOR_CLASS.to_string()),
            complexity_timing: false,
            noise_scale: 0.5,
            activation_latency: false,
            latency_factor_ms: 200.0,
            default_latency_ms: 200.0,
            compiled_simple: true,
            monitor_complexity: Complexity::Complex,
        }
    }
}

/// One violated constraint, named by field.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl MechanismConfig {
    /// Returns the normalized config or every violated constraint.
    pub fn validate(&self) -> Result<MechanismConfig, Vec<Violation>> {
        let mut errs = Vec::new();
        let mut positive = |field: &'static str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                errs.push(Violation {
                    field,
                    message: format!("must be a finite value > 0, got {v}"),
                });
            }
        };
        positive("cycle_time_ms", self.cycle_time_ms);
        positive("clock_scale", self.clock_scale);
        positive("latency_factor_ms", self.latency_factor_ms);
        positive("default_latency_ms", self.default_latency_ms);
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            errs.push(Violation {
                field: "noise_scale",
                message: format!("must be a finite value >= 0, got {}", self.noise_scale),
            });
        }
        let class = self
            .focus_class
            .as_deref()
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string);
        if self.focus_mode == FocusMode::Narrow && class.is_none() {
            errs.push(Violation {
                field: "focus_class",
                message: "narrow focus requires a designated production class".into(),
            });
        }
        if errs.is_empty() {
            Ok(MechanismConfig {
                focus_class: class,
                ..self.clone()
            })
        } else {
            Err(errs)
        }
    }

    /// Effective length of one idle tick.
    pub fn tick_ms(&self) -> f64 {
        self.cycle_time_ms * self.clock_scale
    }
}

/// Narrow focus keeps only instantiations of the focus class; open focus is the identity.
pub fn apply_focus(cfg: &MechanismConfig, conflict: Vec<Instantiation>) -> Vec<Instantiation> {
    match cfg.focus_mode {
        FocusMode::Open => conflict,
        FocusMode::Narrow => {
            let class = cfg.focus_class.as_deref();
            conflict
                .into_iter()
                .filter(|i| class.is_some() && i.class.as_deref() == class)
                .collect()
        }
    }
}

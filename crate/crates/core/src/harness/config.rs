//! Experiment configuration: a TOML file of `key = value` sections.
//!
//! Every key has a default, so an empty file is a valid config. Unknown
//! sections or keys are rejected.

use serde::Deserialize;
use thiserror::Error;

use crate::engine::Complexity;
use crate::learning::UtilityParams;
use crate::mechanisms::{FocusMode, MechanismConfig, Violation};
use crate::psychophysics::{Axis, FitOptions, StimulusDesign};
use crate::signals::{DetectAt, GateModel, TraceParams};

pub const DEFAULT_CONFIG: &str = include_str!("../../../../configs/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawExperiment {
    name: String,
    seeds: Vec<u64>,
    task: String,
    distractors: usize,
    distractor_utility: f64,
    distractor_complexity: String,
    monitor_utility: f64,
    instruction_activation: f64,
    n_boot: usize,
    criterion: f64,
    estimate_guess_lapse: bool,
    max_slope_factor: f64,
}

impl Default for RawExperiment {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seeds: (1..=10).collect(),
            task: "distractors".into(),
            distractors: 2,
            distractor_utility: 0.0,
            distractor_complexity: "simple".into(),
            monitor_utility: 0.0,
            instruction_activation: 0.0,
            n_boot: 200,
            criterion: 0.5,
            estimate_guess_lapse: false,
            max_slope_factor: crate::psychophysics::SLOPE_RANGE_FACTOR,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEngine {
    cycle_time_ms: f64,
    clock_scale: f64,
    compilation: bool,
    focus: String,
    focus_class: String,
    complexity_timing: bool,
    noise_scale: f64,
    activation_latency: bool,
    latency_factor_ms: f64,
    default_latency_ms: f64,
    compiled_simple: bool,
    monitor_complexity: String,
}

impl Default for RawEngine {
    fn default() -> Self {
        let d = MechanismConfig::default();
        Self {
            cycle_time_ms: d.cycle_time_ms,
            clock_scale: d.clock_scale,
            compilation: true,
            focus: "narrow".into(),
            focus_class: d.focus_class.unwrap_or_default(),
            complexity_timing: d.complexity_timing,
            noise_scale: d.noise_scale,
            activation_latency: d.activation_latency,
            latency_factor_ms: d.latency_factor_ms,
            default_latency_ms: d.default_latency_ms,
            compiled_simple: d.compiled_simple,
            monitor_complexity: d.monitor_complexity.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSignals {
    gate_mean: f64,
    gate_sd: f64,
    amplitude: f64,
    duration_ms: f64,
    rate_per_s: f64,
    duration_min_ms: f64,
    duration_max_ms: f64,
    detect_at: String,
}

impl Default for RawSignals {
    fn default() -> Self {
        Self {
            gate_mean: 1.0,
            gate_sd: 0.25,
            amplitude: 2.0,
            duration_ms: 400.0,
            rate_per_s: 1.0,
            duration_min_ms: 300.0,
            duration_max_ms: 800.0,
            detect_at: "start".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTraining {
    n_trials: usize,
    trial_ms: f64,
    probe_every: usize,
    window: usize,
    alpha: f64,
    reward: f64,
    cost_per_ms: f64,
    open_probe_at_expert: bool,
}

impl Default for RawTraining {
    fn default() -> Self {
        let u = UtilityParams::default();
        Self {
            n_trials: 30,
            trial_ms: 5000.0,
            probe_every: 2,
            window: 20,
            alpha: u.alpha,
            reward: u.reward_magnitude,
            cost_per_ms: u.time_cost_per_ms,
            open_probe_at_expert: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawProbe {
    axes: Vec<String>,
    duration_levels: Vec<f64>,
    amplitude_levels: Vec<f64>,
    trials: u32,
    onset_min_ms: f64,
    onset_max_ms: f64,
    tail_ms: f64,
}

impl Default for RawProbe {
    fn default() -> Self {
        Self {
            axes: vec!["duration".into()],
            duration_levels: vec![10.0, 30.0, 60.0, 120.0, 200.0, 260.0, 300.0, 400.0],
            amplitude_levels: vec![0.4, 0.6, 0.8, 0.9, 1.0, 1.1, 1.2, 1.5],
            trials: 200,
            onset_min_ms: 200.0,
            onset_max_ms: 400.0,
            tail_ms: 400.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAblation {
    duration_levels: Vec<f64>,
    trials: u32,
    distractors: usize,
    fast_clock_scale: f64,
    variants: Vec<String>,
}

impl Default for RawAblation {
    fn default() -> Self {
        Self {
            duration_levels: vec![10.0, 30.0, 200.0, 300.0, 400.0, 550.0, 750.0, 1000.0],
            trials: 200,
            distractors: 3,
            fast_clock_scale: 0.5,
            variants: Variant::ALL.iter().map(|v| v.name().to_string()).collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSimulate {
    horizon_ms: f64,
    learning: bool,
}

impl Default for RawSimulate {
    fn default() -> Self {
        Self {
            horizon_ms: 10_000.0,
            learning: false,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    experiment: RawExperiment,
    engine: RawEngine,
    signals: RawSignals,
    training: RawTraining,
    probe: RawProbe,
    ablation: RawAblation,
    simulate: RawSimulate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    MonitorOnly,
    MonitorWithDistractors(usize),
}

impl TaskKind {
    pub fn distractors(self) -> usize {
        match self {
            TaskKind::MonitorOnly => 0,
            TaskKind::MonitorWithDistractors(n) => n,
        }
    }
}

/// Rule and memory parameters of the monitoring task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub monitor_utility: f64,
    pub distractor_utility: f64,
    pub distractor_complexity: Complexity,
    pub instruction_activation: f64,
}

/// Signal statistics shared by probes and training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalSpec {
    pub gate: GateModel,
    pub amplitude: f64,
    pub duration_ms: f64,
    pub rate_per_s: f64,
    pub duration_range_ms: (f64, f64),
    pub detect_at: DetectAt,
}

impl SignalSpec {
    pub fn trace_params(&self, horizon_ms: f64) -> TraceParams {
        TraceParams {
            rate_per_s: self.rate_per_s,
            duration_range_ms: self.duration_range_ms,
            amplitude: self.amplitude,
            horizon_ms,
        }
    }
}

/// Constant-stimuli probe layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSpec {
    pub axes: Vec<Axis>,
    pub duration_levels: Vec<f64>,
    pub amplitude_levels: Vec<f64>,
    pub trials: u32,
    pub onset_range_ms: (f64, f64),
    pub tail_ms: f64,
}

impl ProbeSpec {
    pub fn design(&self, axis: Axis, signals: &SignalSpec) -> StimulusDesign {
        StimulusDesign {
            axis,
            levels: match axis {
                Axis::Duration => self.duration_levels.clone(),
                Axis::Amplitude => self.amplitude_levels.clone(),
            },
            trials_per_level: self.trials,
            hold_duration_ms: signals.duration_ms,
            hold_amplitude: signals.amplitude,
            onset_range_ms: self.onset_range_ms,
            tail_ms: self.tail_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingProtocol {
    pub n_trials: usize,
    pub trial_ms: f64,
    pub reward_on_detection: UtilityParams,
    pub probe_every: usize,
    /// Episodes in the sliding window that labels the stage.
    pub window: usize,
    pub open_probe_at_expert: bool,
}

impl TrainingProtocol {
    /// Trial indices (trials completed) at which probes run.
    pub fn probe_points(&self) -> Vec<usize> {
        let mut pts: Vec<usize> = (0..=self.n_trials).step_by(self.probe_every.max(1)).collect();
        if pts.last() != Some(&self.n_trials) {
            pts.push(self.n_trials);
        }
        pts
    }
}

/// Single-mechanism departures from the ablation baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Baseline,
    FastClock,
    Compilation,
    NarrowFocus,
    SimpleMonitors,
    /// Identical to the baseline; a null comparison.
    Null,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::FastClock,
        Variant::Compilation,
        Variant::NarrowFocus,
        Variant::SimpleMonitors,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::FastClock => "fast-clock",
            Variant::Compilation => "compilation",
            Variant::NarrowFocus => "narrow-focus",
            Variant::SimpleMonitors => "simple-monitors",
            Variant::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Variant::Baseline,
            Variant::FastClock,
            Variant::Compilation,
            Variant::NarrowFocus,
            Variant::SimpleMonitors,
            Variant::Null,
        ]
        .into_iter()
        .find(|v| v.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSpec {
    pub duration_levels: Vec<f64>,
    pub trials: u32,
    pub distractors: usize,
    pub fast_clock_scale: f64,
    pub variants: Vec<Variant>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulateSpec {
    pub horizon_ms: f64,
    pub learning: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalysisSpec {
    pub n_boot: usize,
    pub criterion: f64,
    pub fit: FitOptions,
}

/// A fully validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub mechanism_config: MechanismConfig,
    pub task: TaskSpec,
    pub signals: SignalSpec,
    pub stage_protocol: Option<TrainingProtocol>,
    pub threshold_protocol: Option<ProbeSpec>,
    pub ablation: AblationSpec,
    pub simulate: SimulateSpec,
    pub analysis: AnalysisSpec,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        raw.into_spec()
    }

    pub fn default_spec() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("bundled default config is valid")
    }

    pub fn training(&self) -> Result<&TrainingProtocol, ConfigError> {
        self.stage_protocol
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(vec!["training.n_trials must be >= 1 for stages".into()]))
    }

    pub fn probe(&self) -> Result<&ProbeSpec, ConfigError> {
        self.threshold_protocol
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(vec!["probe section has no axes".into()]))
    }
}

fn check_levels(errs: &mut Vec<String>, field: &str, levels: &[f64]) {
    if levels.len() < 2 {
        errs.push(format!("{field}: need at least two levels"));
    } else if levels.iter().any(|l| !(l.is_finite() && *l > 0.0)) || levels.windows(2).any(|w| w[0] >= w[1]) {
        errs.push(format!("{field}: levels must be positive and strictly increasing"));
    }
}

impl RawConfig {
    fn into_spec(self) -> Result<ExperimentSpec, ConfigError> {
        let mut errs = Vec::new();
        let RawConfig {
            experiment: x,
            engine: e,
            signals: s,
            training: t,
            probe: p,
            ablation: a,
            simulate: sim,
        } = self;

        let focus_mode = FocusMode::parse(&e.focus).unwrap_or_else(|| {
            errs.push(format!("engine.focus: expected open or narrow, got `{}`", e.focus));
            FocusMode::Open
        });
        let monitor_complexity = Complexity::parse(&e.monitor_complexity).unwrap_or_else(|| {
            errs.push(format!("engine.monitor_complexity: expected simple or complex, got `{}`", e.monitor_complexity));
            Complexity::Complex
        });
        let mechanism = MechanismConfig {
            cycle_time_ms: e.cycle_time_ms,
            clock_scale: e.clock_scale,
            compilation_enabled: e.compilation,
            focus_mode,
            focus_class: Some(e.focus_class),
            complexity_timing: e.complexity_timing,
            noise_scale: e.noise_scale,
            activation_latency: e.activation_latency,
            latency_factor_ms: e.latency_factor_ms,
            default_latency_ms: e.default_latency_ms,
            compiled_simple: e.compiled_simple,
            monitor_complexity,
        };
        let mechanism = mechanism.validate().unwrap_or_else(|vs: Vec<Violation>| {
            errs.extend(vs.iter().map(|v| format!("engine.{v}")));
            MechanismConfig::default()
        });

        let kind = match x.task.as_str() {
            "monitor-only" => TaskKind::MonitorOnly,
            "distractors" => TaskKind::MonitorWithDistractors(x.distractors),
            other => {
                errs.push(format!("experiment.task: expected monitor-only or distractors, got `{other}`"));
                TaskKind::MonitorOnly
            }
        };
        let distractor_complexity = Complexity::parse(&x.distractor_complexity).unwrap_or_else(|| {
            errs.push(format!("experiment.distractor_complexity: got `{}`", x.distractor_complexity));
            Complexity::Simple
        });
        for (field, v) in [
            ("experiment.distractor_utility", x.distractor_utility),
            ("experiment.monitor_utility", x.monitor_utility),
            ("experiment.instruction_activation", x.instruction_activation),
        ] {
            if !v.is_finite() {
                errs.push(format!("{field}: must be finite"));
            }
        }
        if x.seeds.is_empty() {
            errs.push("experiment.seeds: must be non-empty".into());
        }
        if x.n_boot < crate::psychophysics::MIN_RESAMPLES {
            errs.push(format!("experiment.n_boot: must be >= 100, got {}", x.n_boot));
        }
        if !(x.max_slope_factor.is_finite() && x.max_slope_factor > 0.0) {
            errs.push(format!("experiment.max_slope_factor: must be > 0, got {}", x.max_slope_factor));
        }
        if !(x.criterion > 0.0 && x.criterion < 1.0) {
            errs.push(format!("experiment.criterion: must lie in (0, 1), got {}", x.criterion));
        }

        let detect_at = DetectAt::parse(&s.detect_at).unwrap_or_else(|| {
            errs.push(format!("signals.detect_at: expected start or end, got `{}`", s.detect_at));
            DetectAt::Start
        });
        let gate = GateModel::new(s.gate_mean, s.gate_sd).unwrap_or_else(|err| {
            errs.push(format!("signals: {err}"));
            GateModel {
                gate_mean: 0.0,
                gate_sd: 0.0,
            }
        });
        for (field, v) in [
            ("signals.amplitude", s.amplitude),
            ("signals.duration_ms", s.duration_ms),
            ("signals.rate_per_s", s.rate_per_s),
            ("signals.duration_min_ms", s.duration_min_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{field}: must be > 0, got {v}"));
            }
        }
        if !(s.duration_max_ms >= s.duration_min_ms && s.duration_max_ms.is_finite()) {
            errs.push("signals.duration_max_ms: must be >= duration_min_ms".into());
        }
        let signals = SignalSpec {
            gate,
            amplitude: s.amplitude,
            duration_ms: s.duration_ms,
            rate_per_s: s.rate_per_s,
            duration_range_ms: (s.duration_min_ms, s.duration_max_ms),
            detect_at,
        };

        let utility = UtilityParams {
            alpha: t.alpha,
            reward_magnitude: t.reward,
            time_cost_per_ms: t.cost_per_ms,
        };
        if let Err(err) = utility.validate() {
            errs.push(format!("training: {err}"));
        }
        if t.n_trials > 0 && !(1..=t.n_trials).contains(&t.probe_every) {
            errs.push("training.probe_every: must lie in 1..=n_trials".into());
        }
        if t.window == 0 {
            errs.push("training.window: must be >= 1".into());
        }
        if !(t.trial_ms.is_finite() && t.trial_ms > 0.0) {
            errs.push("training.trial_ms: must be > 0".into());
        }
        let stage_protocol = (t.n_trials > 0).then_some(TrainingProtocol {
            n_trials: t.n_trials,
            trial_ms: t.trial_ms,
            reward_on_detection: utility,
            probe_every: t.probe_every,
            window: t.window,
            open_probe_at_expert: t.open_probe_at_expert,
        });

        let mut axes = Vec::new();
        for name in &p.axes {
            match Axis::parse(name) {
                Some(ax) if !axes.contains(&ax) => axes.push(ax),
                Some(_) => errs.push(format!("probe.axes: `{name}` listed twice")),
                None => errs.push(format!("probe.axes: unknown axis `{name}`")),
            }
        }
        if axes.contains(&Axis::Duration) {
            check_levels(&mut errs, "probe.duration_levels", &p.duration_levels);
        }
        if axes.contains(&Axis::Amplitude) {
            check_levels(&mut errs, "probe.amplitude_levels", &p.amplitude_levels);
        }
        if p.trials == 0 {
            errs.push("probe.trials: must be >= 1".into());
        }
        if !(p.onset_min_ms >= 0.0 && p.onset_min_ms < p.onset_max_ms && p.onset_max_ms.is_finite()) {
            errs.push("probe.onset_min_ms/onset_max_ms: need 0 <= min < max".into());
        }
        if !(p.tail_ms.is_finite() && p.tail_ms >= 0.0) {
            errs.push("probe.tail_ms: must be >= 0".into());
        }
        let threshold_protocol = (!axes.is_empty()).then_some(ProbeSpec {
            axes,
            duration_levels: p.duration_levels,
            amplitude_levels: p.amplitude_levels,
            trials: p.trials,
            onset_range_ms: (p.onset_min_ms, p.onset_max_ms),
            tail_ms: p.tail_ms,
        });
        if stage_protocol.is_none() && threshold_protocol.is_none() {
            errs.push("config needs a training protocol or probe axes".into());
        }

        check_levels(&mut errs, "ablation.duration_levels", &a.duration_levels);
        if a.trials == 0 {
            errs.push("ablation.trials: must be >= 1".into());
        }
        if !(a.fast_clock_scale.is_finite() && a.fast_clock_scale > 0.0) {
            errs.push("ablation.fast_clock_scale: must be > 0".into());
        }
        let mut variants = Vec::new();
        for name in &a.variants {
            match Variant::parse(name) {
                Some(Variant::Baseline) => errs.push("ablation.variants: baseline is implicit".into()),
                Some(v) if !variants.contains(&v) => variants.push(v),
                Some(_) => errs.push(format!("ablation.variants: `{name}` listed twice")),
                None => errs.push(format!("ablation.variants: unknown variant `{name}`")),
            }
        }
        if variants.is_empty() {
            errs.push("ablation.variants: need at least one variant besides the baseline".into());
        }
        if !(sim.horizon_ms.is_finite() && sim.horizon_ms > 0.0) {
            errs.push("simulate.horizon_ms: must be > 0".into());
        }

        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        Ok(ExperimentSpec {
            name: x.name,
            mechanism_config: mechanism,
            task: TaskSpec {
                kind,
                monitor_utility: x.monitor_utility,
                distractor_utility: x.distractor_utility,
                distractor_complexity,
                instruction_activation: x.instruction_activation,
            },
            signals,
            stage_protocol,
            threshold_protocol,
            ablation: AblationSpec {
                duration_levels: a.duration_levels,
                trials: a.trials,
                distractors: a.distractors,
                fast_clock_scale: a.fast_clock_scale,
                variants,
            },
            simulate: SimulateSpec {
                horizon_ms: sim.horizon_ms,
                learning: sim.learning,
            },
            analysis: AnalysisSpec {
                n_boot: x.n_boot,
                criterion: x.criterion,
                fit: FitOptions {
                    estimate_guess_lapse: x.estimate_guess_lapse,
                    max_slope_factor: x.max_slope_factor,
                    ..FitOptions::default()
                },
            },
            seeds: x.seeds,
        })
    }
}

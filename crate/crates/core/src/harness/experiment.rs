//! Experiment drivers: raw simulation, threshold measurement, the staged
//! training run and the mechanism ablation.

use std::fmt;

use crate::engine::{Engine, EngineError, EventKind, EventLog, Production, Provenance};
use crate::exec::{map_indexed, ExecMode};
use crate::learning::{compiled_fraction, sliding_fractions, stage_for_fraction, Episode, Policy, StageLabel};
use crate::mechanisms::{FocusMode, MechanismConfig};
use crate::psychophysics::{
    bootstrap_difference, bootstrap_threshold, fit_logistic, run_stimulus_set, Axis, BootstrapOptions,
    DifferenceEstimate, LogisticFit, PsychError, PsychometricData, StimulusDesign, StimulusSet, ThresholdEstimate,
    TrialContext,
};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::signals::generate_trace;

use super::config::{ConfigError, ExperimentSpec, TaskKind, TaskSpec, TrainingProtocol, Variant};
use super::task::{build_monitoring_task, engine_with_policy};
use super::HarnessError;

fn ctx<E: fmt::Display>(context: impl Into<String>) -> impl FnOnce(E) -> HarnessError {
    let context = context.into();
    move |e| HarnessError::Run {
        context,
        message: e.to_string(),
    }
}

/// Fit and threshold for one psychometric dataset, or why there is none.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub condition: String,
    pub data: PsychometricData,
    pub fit: Option<LogisticFit>,
    pub estimate: Option<ThresholdEstimate>,
    /// Set when the fit or bootstrap failed (for example saturated data).
    pub failure: Option<String>,
}

impl Measurement {
    pub fn threshold(&self) -> Option<f64> {
        self.estimate.map(|e| e.level_at_criterion)
    }
}

fn analyse(spec: &ExperimentSpec, condition: String, data: PsychometricData, boot_seed: u64, mode: ExecMode) -> Measurement {
    let a = &spec.analysis;
    let boot = BootstrapOptions {
        n_boot: a.n_boot,
        seed: boot_seed,
        mode,
    };
    let result = fit_logistic(&data, &a.fit)
        .and_then(|fit| bootstrap_threshold(&data, a.criterion, &a.fit, &boot).map(|est| (fit, est)));
    match result {
        Ok((fit, est)) => Measurement {
            condition,
            data,
            fit: Some(fit),
            estimate: Some(est),
            failure: None,
        },
        Err(e) => Measurement {
            condition,
            data,
            fit: None,
            estimate: None,
            failure: Some(e.to_string()),
        },
    }
}

/// Constant-stimuli run of a frozen policy. Learning stays off, so the
/// policy comes back untouched.
pub fn probe_policy(
    policy: &Policy,
    task: &TaskSpec,
    spec: &ExperimentSpec,
    cfg: &MechanismConfig,
    set: &StimulusSet,
    engine_seed: u64,
    mode: ExecMode,
) -> Result<PsychometricData, PsychError> {
    let gate = spec.signals.gate;
    let detect_at = spec.signals.detect_at;
    let factory = |t: &TrialContext| -> Result<Engine, EngineError> {
        Ok(engine_with_policy(policy.clone(), task, cfg)?
            .with_stimulus(t.trace.clone(), gate)
            .with_detect_at(detect_at))
    };
    run_stimulus_set(&factory, cfg, set, engine_seed, mode)
}

fn stimulus_set(design: &StimulusDesign, seed: u64, axis: Axis) -> Result<StimulusSet, PsychError> {
    StimulusSet::generate(design, derive_seed(seed, &[stream::STIMULUS, axis as u64]))
}

/// Outcome of a training run.
#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub policy: Policy,
    pub episodes: Vec<Episode>,
    /// Detection, compile and utility entries, one log per trial.
    pub logs: Vec<EventLog>,
}

fn learning_rows(log: &EventLog) -> EventLog {
    let mut out = EventLog::new();
    for e in log.entries() {
        if matches!(e.kind(), EventKind::Detection | EventKind::Compile | EventKind::Utility) {
            out.try_push(e.clone()).expect("filtered entries stay ordered");
        }
    }
    out
}

/// Runs training trials `range` on `policy`, each on a fresh stochastic trace
/// with rewards on detection.
pub fn train(
    mut policy: Policy,
    spec: &ExperimentSpec,
    task: &TaskSpec,
    cfg: &MechanismConfig,
    protocol: &TrainingProtocol,
    seed: u64,
    range: std::ops::Range<usize>,
) -> Result<TrainingRun, HarnessError> {
    let mut episodes = Vec::new();
    let mut logs = Vec::new();
    for trial in range {
        let here = format!("seed {seed} training trial {trial}");
        let mut trace_rng = rng_from_seed(derive_seed(seed, &[stream::TRAINING, trial as u64, 0]));
        let trace = generate_trace(&spec.signals.trace_params(protocol.trial_ms), &mut trace_rng).map_err(ctx(&here))?;
        let mut engine = engine_with_policy(policy, task, cfg)
            .and_then(|e| {
                e.with_stimulus(trace, spec.signals.gate)
                    .with_detect_at(spec.signals.detect_at)
                    .with_learning(protocol.reward_on_detection)
            })
            .map_err(ctx(&here))?;
        let mut rng = rng_from_seed(derive_seed(seed, &[stream::TRAINING, trial as u64, 1]));
        engine.run_until(cfg, protocol.trial_ms, &mut rng).map_err(ctx(&here))?;
        episodes.extend_from_slice(engine.episodes());
        logs.push(learning_rows(engine.log()));
        policy = engine.into_policy();
    }
    Ok(TrainingRun {
        policy,
        episodes,
        logs,
    })
}

/// Outputs of `simulate` for one seed.
#[derive(Clone, Debug)]
pub struct SimulationRun {
    pub seed: u64,
    pub log: EventLog,
    pub events: usize,
    pub detected: usize,
}

pub fn run_simulation(spec: &ExperimentSpec, mode: ExecMode) -> Result<Vec<SimulationRun>, HarnessError> {
    let cfg = &spec.mechanism_config;
    let sim = spec.simulate;
    let runs = map_indexed(spec.seeds.len(), mode, |i| {
        let seed = spec.seeds[i];
        let here = format!("seed {seed}");
        let mut trace_rng = rng_from_seed(derive_seed(seed, &[stream::STIMULUS]));
        let trace = generate_trace(&spec.signals.trace_params(sim.horizon_ms), &mut trace_rng).map_err(ctx(&here))?;
        let n_events = trace.events().len();
        let mut engine = build_monitoring_task(&spec.task, cfg)
            .map(|e| e.with_stimulus(trace, spec.signals.gate).with_detect_at(spec.signals.detect_at))
            .map_err(ctx(&here))?;
        if sim.learning {
            let params = spec.training().map_err(HarnessError::Config)?.reward_on_detection;
            engine = engine.with_learning(params).map_err(ctx(&here))?;
        }
        let mut rng = rng_from_seed(derive_seed(seed, &[stream::ENGINE]));
        engine.run_until(cfg, sim.horizon_ms, &mut rng).map_err(ctx(&here))?;
        Ok(SimulationRun {
            seed,
            events: n_events,
            detected: engine.episodes().len(),
            log: engine.log().clone(),
        })
    });
    runs.into_iter().collect()
}

/// `threshold`: the untrained task under the configured mechanisms, every probe axis.
pub fn run_threshold(spec: &ExperimentSpec, mode: ExecMode) -> Result<Vec<Measurement>, HarnessError> {
    let probe = spec.probe().map_err(HarnessError::Config)?;
    let cfg = &spec.mechanism_config;
    let policy = build_monitoring_task(&spec.task, cfg).map_err(ctx("task"))?.into_policy();
    let mut out = Vec::new();
    for &seed in &spec.seeds {
        for &axis in &probe.axes {
            let here = format!("seed {seed} {axis} probe");
            let design = probe.design(axis, &spec.signals);
            let set = stimulus_set(&design, seed, axis).map_err(ctx(&here))?;
            let engine_seed = derive_seed(seed, &[stream::ENGINE, axis as u64]);
            let data = probe_policy(&policy, &spec.task, spec, cfg, &set, engine_seed, mode).map_err(ctx(&here))?;
            let boot_seed = derive_seed(seed, &[stream::BOOTSTRAP, axis as u64]);
            out.push(analyse(spec, format!("s{seed}"), data, boot_seed, mode));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ProbeRow {
    pub seed: u64,
    pub probe: usize,
    /// Training trials completed before the probe.
    pub trial: usize,
    pub stage: StageLabel,
    pub compiled_fraction: f64,
    pub focus: FocusMode,
    pub axis: Axis,
    pub measurement: Measurement,
    /// Whether the probe left rules and utilities exactly as it found them.
    pub policy_unchanged: bool,
}

#[derive(Clone, Debug)]
pub struct SeedStages {
    pub seed: u64,
    pub probes: Vec<ProbeRow>,
    /// Compiled fraction over the trailing window after each training episode.
    pub trajectory: Vec<f64>,
    pub final_fraction: Option<f64>,
    pub training_logs: Vec<EventLog>,
}

impl SeedStages {
    /// Stage labels along the smoothed trajectory.
    pub fn trajectory_stages(&self) -> Vec<StageLabel> {
        self.trajectory.iter().map(|&f| stage_for_fraction(f)).collect()
    }

    /// Novice, then intermediate, then expert, never stepping back.
    pub fn passes_all_stages(&self) -> bool {
        let labels = self.trajectory_stages();
        labels.windows(2).all(|w| w[0] <= w[1])
            && labels.first() == Some(&StageLabel::Novice)
            && labels.contains(&StageLabel::Intermediate)
            && labels.last() == Some(&StageLabel::Expert)
    }

    fn narrow_duration(&self) -> impl Iterator<Item = &ProbeRow> {
        self.probes
            .iter()
            .filter(|r| r.axis == Axis::Duration && r.focus == self.probes[0].focus)
    }

    pub fn first_duration_probe(&self) -> Option<&ProbeRow> {
        self.narrow_duration().next()
    }

    pub fn last_duration_probe(&self) -> Option<&ProbeRow> {
        self.narrow_duration().last()
    }
}

#[derive(Clone, Debug)]
pub struct StageReport {
    pub seeds: Vec<SeedStages>,
}

fn stage_at(episodes: &[Episode], window: usize) -> (StageLabel, f64) {
    let recent = &episodes[episodes.len().saturating_sub(window)..];
    match compiled_fraction(recent) {
        Ok(f) => (stage_for_fraction(f), f),
        Err(_) => (StageLabel::Novice, 0.0),
    }
}

fn stages_for_seed(spec: &ExperimentSpec, seed: u64, mode: ExecMode) -> Result<SeedStages, HarnessError> {
    let protocol = spec.training().map_err(HarnessError::Config)?;
    let probe = spec.probe().map_err(HarnessError::Config)?;
    let cfg = &spec.mechanism_config;
    let mut policy = build_monitoring_task(&spec.task, cfg).map_err(ctx("task"))?.into_policy();
    let sets: Vec<(Axis, StimulusSet)> = probe
        .axes
        .iter()
        .map(|&axis| {
            let design = probe.design(axis, &spec.signals);
            stimulus_set(&design, seed, axis).map(|s| (axis, s))
        })
        .collect::<Result<_, _>>()
        .map_err(ctx(format!("seed {seed} stimuli")))?;

    let mut episodes = Vec::new();
    let mut logs = Vec::new();
    let mut probes = Vec::new();
    let mut done = 0;
    for (k, point) in protocol.probe_points().into_iter().enumerate() {
        let run = train(policy, spec, &spec.task, cfg, protocol, seed, done..point)?;
        policy = run.policy;
        episodes.extend(run.episodes);
        logs.extend(run.logs);
        done = point;

        let (stage, fraction) = stage_at(&episodes, protocol.window);
        let mut focuses = vec![cfg.focus_mode];
        if stage == StageLabel::Expert && protocol.open_probe_at_expert && cfg.focus_mode != FocusMode::Open {
            focuses.push(FocusMode::Open);
        }
        for focus in focuses {
            let probe_cfg = MechanismConfig {
                focus_mode: focus,
                ..cfg.clone()
            };
            for (axis, set) in &sets {
                let here = format!("seed {seed} probe {k} {axis} {focus}");
                let before = policy.clone();
                let engine_seed = derive_seed(seed, &[stream::ENGINE, *axis as u64]);
                let data = probe_policy(&policy, &spec.task, spec, &probe_cfg, set, engine_seed, mode)
                    .map_err(ctx(&here))?;
                let boot_seed = derive_seed(seed, &[stream::BOOTSTRAP, k as u64, *axis as u64, focus as u64]);
                let m = analyse(spec, format!("s{seed}-p{k}-{focus}"), data, boot_seed, mode);
                probes.push(ProbeRow {
                    seed,
                    probe: k,
                    trial: point,
                    stage,
                    compiled_fraction: fraction,
                    focus,
                    axis: *axis,
                    measurement: m,
                    policy_unchanged: before == policy,
                });
            }
        }
    }
    let trajectory = sliding_fractions(&episodes, protocol.window);
    Ok(SeedStages {
        seed,
        final_fraction: trajectory.last().copied(),
        trajectory,
        probes,
        training_logs: logs,
    })
}

/// `stages`: interleaved training and frozen-policy probes, seeds run in parallel.
pub fn run_stages_experiment(spec: &ExperimentSpec, mode: ExecMode) -> Result<StageReport, HarnessError> {
    spec.training().map_err(HarnessError::Config)?;
    spec.probe().map_err(HarnessError::Config)?;
    let seeds = map_indexed(spec.seeds.len(), mode, |i| stages_for_seed(spec, spec.seeds[i], mode));
    Ok(StageReport {
        seeds: seeds.into_iter().collect::<Result<_, _>>()?,
    })
}

/// Mechanism settings of each ablation condition.
pub fn variant_config(base: &MechanismConfig, variant: Variant, fast_clock_scale: f64) -> MechanismConfig {
    let baseline = MechanismConfig {
        clock_scale: 1.0,
        compilation_enabled: false,
        focus_mode: FocusMode::Open,
        complexity_timing: false,
        monitor_complexity: crate::engine::Complexity::Complex,
        ..base.clone()
    };
    match variant {
        Variant::Baseline | Variant::Null => baseline,
        Variant::FastClock => MechanismConfig {
            clock_scale: fast_clock_scale,
            ..baseline
        },
        Variant::Compilation => MechanismConfig {
            compilation_enabled: true,
            ..baseline
        },
        Variant::NarrowFocus => MechanismConfig {
            focus_mode: FocusMode::Narrow,
            ..baseline
        },
        Variant::SimpleMonitors => MechanismConfig {
            complexity_timing: true,
            monitor_complexity: crate::engine::Complexity::Simple,
            ..baseline
        },
    }
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub seed: u64,
    pub variant: Variant,
    pub measurement: Measurement,
    /// Against the baseline of the same seed; absent for the baseline itself.
    pub difference: Option<Result<DifferenceEstimate, String>>,
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Stimulus file shared by every variant, per seed.
    pub stimuli: Vec<(u64, Vec<u8>)>,
}

/// Authored utilities back at their task values, compiled rules kept.
fn reset_authored(mut policy: Policy, fresh: &Policy) -> Policy {
    let ids: Vec<String> = policy
        .rules
        .iter()
        .filter(|p| p.provenance == Provenance::Authored)
        .map(|p| p.id.clone())
        .collect();
    for id in ids {
        let original: Option<&Production> = fresh.rules.get(&id);
        if let (Some(rule), Some(orig)) = (policy.rules.get_mut(&id), original) {
            rule.utility = orig.utility;
        }
    }
    policy
}

/// Duration design shared by every ablation variant.
pub fn ablation_design(spec: &ExperimentSpec) -> StimulusDesign {
    let ab = &spec.ablation;
    StimulusDesign {
        axis: Axis::Duration,
        levels: ab.duration_levels.clone(),
        trials_per_level: ab.trials,
        hold_duration_ms: spec.signals.duration_ms,
        hold_amplitude: spec.signals.amplitude,
        onset_range_ms: spec.probe().map_or((200.0, 400.0), |p| p.onset_range_ms),
        tail_ms: spec.probe().map_or(400.0, |p| p.tail_ms),
    }
}

fn ablation_for_seed(
    spec: &ExperimentSpec,
    task: &TaskSpec,
    variants: &[(Variant, MechanismConfig)],
    seed: u64,
    mode: ExecMode,
) -> Result<(Vec<AblationRow>, Vec<u8>), HarnessError> {
    let design = ablation_design(spec);
    let here = format!("seed {seed} ablation");
    let generated = stimulus_set(&design, seed, Axis::Duration).map_err(ctx(&here))?;
    let mut bytes = Vec::new();
    generated.write_csv(&mut bytes).map_err(ctx(&here))?;
    let shared = StimulusSet::read_csv(&design, bytes.as_slice()).map_err(ctx(&here))?;
    let engine_seed = derive_seed(seed, &[stream::ENGINE, Axis::Duration as u64]);

    let mut datasets = Vec::new();
    for (variant, cfg) in variants {
        let here = format!("seed {seed} variant {}", variant.name());
        let fresh = build_monitoring_task(task, cfg).map_err(ctx(&here))?.into_policy();
        let policy = if *variant == Variant::Compilation {
            let protocol = spec.training().map_err(HarnessError::Config)?;
            let run = train(fresh.clone(), spec, task, cfg, protocol, seed, 0..protocol.n_trials)?;
            reset_authored(run.policy, &fresh)
        } else {
            fresh.clone()
        };
        let data = probe_policy(&policy, task, spec, cfg, &shared, engine_seed, mode).map_err(ctx(&here))?;
        datasets.push((*variant, data));
    }

    let a = &spec.analysis;
    let mut rows = Vec::new();
    let baseline = datasets[0].1.clone();
    for (i, (variant, data)) in datasets.into_iter().enumerate() {
        let boot_seed = derive_seed(seed, &[stream::BOOTSTRAP, i as u64]);
        let difference = (variant != Variant::Baseline).then(|| {
            let boot = BootstrapOptions {
                n_boot: a.n_boot,
                seed: boot_seed,
                mode,
            };
            bootstrap_difference(&baseline, &data, a.criterion, &a.fit, &boot).map_err(|e| e.to_string())
        });
        let measurement = analyse(spec, format!("s{seed}-{}", variant.name()), data, boot_seed, mode);
        rows.push(AblationRow {
            seed,
            variant,
            measurement,
            difference,
        });
    }
    Ok((rows, bytes))
}

/// `ablate`: baseline against each single-mechanism variant on shared stimuli.
pub fn run_ablation(spec: &ExperimentSpec, mode: ExecMode) -> Result<AblationReport, HarnessError> {
    let ab = &spec.ablation;
    let task = TaskSpec {
        kind: TaskKind::MonitorWithDistractors(ab.distractors),
        ..spec.task.clone()
    };
    let mut variants = vec![(Variant::Baseline, variant_config(&spec.mechanism_config, Variant::Baseline, 1.0))];
    variants.extend(
        ab.variants
            .iter()
            .map(|&v| (v, variant_config(&spec.mechanism_config, v, ab.fast_clock_scale))),
    );
    let mut problems = Vec::new();
    for (v, cfg) in &variants {
        if let Err(vs) = cfg.validate() {
            problems.extend(vs.iter().map(|x| format!("variant {}: {x}", v.name())));
        }
    }
    if variants.iter().any(|(v, _)| *v == Variant::Compilation) && spec.stage_protocol.is_none() {
        problems.push("variant compilation: needs a training protocol".into());
    }
    if !problems.is_empty() {
        return Err(HarnessError::Config(ConfigError::Invalid(problems)));
    }
    let per_seed = map_indexed(spec.seeds.len(), mode, |i| {
        ablation_for_seed(spec, &task, &variants, spec.seeds[i], mode)
    });
    let mut report = AblationReport {
        rows: Vec::new(),
        stimuli: Vec::new(),
    };
    for (seed, r) in spec.seeds.iter().zip(per_seed) {
        let (rows, bytes) = r?;
        report.rows.extend(rows);
        report.stimuli.push((*seed, bytes));
    }
    Ok(report)
}

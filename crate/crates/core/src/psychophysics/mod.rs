//! Method of constant stimuli over a stimulus axis, logistic fitting, and
//! threshold extraction.

mod bootstrap;
mod fit;

pub use bootstrap::{
    bootstrap_difference, bootstrap_threshold, quantile, resample, BootstrapOptions, DifferenceEstimate,
    ThresholdEstimate, MAX_FAILED_SHARE, MIN_RESAMPLES,
};
pub use fit::{
    fit_logistic, grid_search, log_likelihood, logistic_p, threshold, FitBounds, FitOptions, LogisticFit,
    MAX_GUESS_LAPSE, MIN_SLOPE, SLOPE_RANGE_FACTOR,
};

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use thiserror::Error;

use crate::engine::{Engine, EngineError};
use crate::exec::{try_map_indexed, ExecMode};
use crate::mechanisms::MechanismConfig;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::signals::{read_event_rows, score_detections, write_event_rows, SignalError, SignalEvent, SignalTrace, TRACE_CSV_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Duration,
    Amplitude,
}

impl Axis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "duration" => Some(Axis::Duration),
            "amplitude" => Some(Axis::Amplitude),
            _ => None,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Duration => "duration",
            Axis::Amplitude => "amplitude",
        })
    }
}

#[derive(Debug, Error)]
pub enum PsychError {
    #[error("invalid psychometric data: {0}")]
    Data(String),
    #[error("degenerate data: every level {direction}")]
    Degenerate { direction: &'static str },
    #[error("criterion {criterion} outside invertible range ({low}, {high})")]
    Criterion { criterion: f64, low: f64, high: f64 },
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("bootstrap unstable: {failed} of {total} resamples degenerate")]
    Unstable { failed: usize, total: usize },
    #[error("level {level} trial {trial}: {source}")]
    Trial {
        level: f64,
        trial: usize,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsychometricData {
    pub axis: Axis,
    pub levels: Vec<f64>,
    pub trials_per_level: u32,
    pub detect_counts: Vec<u32>,
}

pub const PSYCHOMETRIC_CSV_HEADER: [&str; 4] = ["axis", "level", "trials", "detections"];

impl PsychometricData {
    pub fn new(axis: Axis, levels: Vec<f64>, trials_per_level: u32, detect_counts: Vec<u32>) -> Result<Self, PsychError> {
        let d = Self {
            axis,
            levels,
            trials_per_level,
            detect_counts,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), PsychError> {
        let bad = |m: String| Err(PsychError::Data(m));
        if self.levels.len() < 2 {
            return bad("need at least two levels".into());
        }
        if self.trials_per_level == 0 {
            return bad("trials per level must be >= 1".into());
        }
        if self.levels.len() != self.detect_counts.len() {
            return bad("levels and counts differ in length".into());
        }
        if self.levels.iter().any(|l| !l.is_finite()) || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("levels must be finite and strictly increasing".into());
        }
        if self.detect_counts.iter().any(|&k| k > self.trials_per_level) {
            return bad("a count exceeds the trial count".into());
        }
        Ok(())
    }

    pub fn check_not_saturated(&self) -> Result<(), PsychError> {
        if self.detect_counts.iter().all(|&k| k == 0) {
            return Err(PsychError::Degenerate {
                direction: "was never detected",
            });
        }
        if self.detect_counts.iter().all(|&k| k == self.trials_per_level) {
            return Err(PsychError::Degenerate {
                direction: "was always detected",
            });
        }
        Ok(())
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.detect_counts
            .iter()
            .map(|&k| k as f64 / self.trials_per_level as f64)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PsychError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PSYCHOMETRIC_CSV_HEADER)?;
        for (l, k) in self.levels.iter().zip(&self.detect_counts) {
            w.write_record([
                self.axis.to_string(),
                l.to_string(),
                self.trials_per_level.to_string(),
                k.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, PsychError> {
        let mut r = csv::Reader::from_reader(input);
        let mut axis = None;
        let mut trials = None;
        let (mut levels, mut counts) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").to_string();
            let a = Axis::parse(&field(0)).ok_or_else(|| PsychError::Data(format!("unknown axis `{}`", field(0))))?;
            let t: u32 = field(2).parse().map_err(|_| PsychError::Data("bad trials".into()))?;
            if axis.is_some_and(|x| x != a) || trials.is_some_and(|x| x != t) {
                return Err(PsychError::Data("mixed axes or trial counts".into()));
            }
            axis = Some(a);
            trials = Some(t);
            levels.push(field(1).parse().map_err(|_| PsychError::Data("bad level".into()))?);
            counts.push(field(3).parse().map_err(|_| PsychError::Data("bad detections".into()))?);
        }
        let axis = axis.ok_or_else(|| PsychError::Data("empty file".into()))?;
        Self::new(axis, levels, trials.unwrap_or(0), counts)
    }
}

/// Layout of a constant-stimuli run: one event per trial at the tested level.
#[derive(Clone, Debug, PartialEq)]
pub struct StimulusDesign {
    pub axis: Axis,
    pub levels: Vec<f64>,
    pub trials_per_level: u32,
    /// Value of the other axis while this one varies.
    pub hold_duration_ms: f64,
    pub hold_amplitude: f64,
    /// Onset drawn uniformly from `[min, max)`.
    pub onset_range_ms: (f64, f64),
    /// Simulated time after the event ends.
    pub tail_ms: f64,
}

impl StimulusDesign {
    pub fn validate(&self) -> Result<(), PsychError> {
        let bad = |m: &str| Err(PsychError::Data(m.to_string()));
        if self.levels.len() < 2 {
            return bad("need at least two levels");
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) || self.levels.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return bad("levels must be positive and strictly increasing");
        }
        if self.trials_per_level == 0 {
            return bad("trials per level must be >= 1");
        }
        let (lo, hi) = self.onset_range_ms;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return bad("onset range must satisfy 0 <= min < max");
        }
        if !(self.tail_ms >= 0.0 && self.hold_duration_ms > 0.0 && self.hold_amplitude > 0.0) {
            return bad("hold values must be > 0 and tail >= 0");
        }
        Ok(())
    }

    fn cell_count(&self) -> usize {
        self.levels.len() * self.trials_per_level as usize
    }
}

/// Every trial's event, level-major. Event ids are cell indices.
#[derive(Clone, Debug, PartialEq)]
pub struct StimulusSet {
    pub design: StimulusDesign,
    pub events: Vec<SignalEvent>,
}

impl StimulusSet {
    pub fn generate(design: &StimulusDesign, base_seed: u64) -> Result<Self, PsychError> {
        design.validate()?;
        let trials = design.trials_per_level as usize;
        let events = (0..design.cell_count())
            .map(|cell| {
                let (li, trial) = (cell / trials, cell % trials);
                let mut rng = rng_from_seed(derive_seed(base_seed, &[stream::STIMULUS, li as u64, trial as u64]));
                let (lo, hi) = design.onset_range_ms;
                let onset = rng.random_range(lo..hi);
                let level = design.levels[li];
                let (duration_ms, amplitude) = match design.axis {
                    Axis::Duration => (level, design.hold_amplitude),
                    Axis::Amplitude => (design.hold_duration_ms, level),
                };
                SignalEvent {
                    id: cell as u64,
                    onset_ms: onset,
                    duration_ms,
                    amplitude,
                }
            })
            .collect();
        Ok(Self {
            design: design.clone(),
            events,
        })
    }

    pub fn trace_for(&self, cell: usize) -> Result<SignalTrace, SignalError> {
        let e = self.events[cell];
        SignalTrace::new(vec![e], e.end_ms() + self.design.tail_ms.max(f64::MIN_POSITIVE))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PsychError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_CSV_HEADER)?;
        write_event_rows(&mut w, &self.events)?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Replays a set written by [`StimulusSet::write_csv`] under `design`.
    pub fn read_csv<R: Read>(design: &StimulusDesign, input: R) -> Result<Self, PsychError> {
        design.validate()?;
        let events = read_event_rows(input)?;
        if events.len() != design.cell_count() || events.iter().enumerate().any(|(i, e)| e.id != i as u64) {
            return Err(PsychError::Data("stimulus file does not match the design".into()));
        }
        Ok(Self {
            design: design.clone(),
            events,
        })
    }
}

/// Everything a factory needs to build one trial's engine.
#[derive(Clone, Debug)]
pub struct TrialContext {
    pub level_index: usize,
    pub level: f64,
    pub trial: usize,
    pub seed: u64,
    pub trace: SignalTrace,
}

/// Runs every (level, trial) cell on its own engine and counts detections.
pub fn run_stimulus_set<F>(
    factory: &F,
    cfg: &MechanismConfig,
    set: &StimulusSet,
    base_seed: u64,
    mode: ExecMode,
) -> Result<PsychometricData, PsychError>
where
    F: Fn(&TrialContext) -> Result<Engine, EngineError> + Sync,
{
    let design = &set.design;
    let trials = design.trials_per_level as usize;
    let outcomes = try_map_indexed(design.cell_count(), mode, |cell| {
        let (li, trial) = (cell / trials, cell % trials);
        let level = design.levels[li];
        let wrap = |source: EngineError| PsychError::Trial { level, trial, source };
        let trace = set.trace_for(cell)?;
        let ctx = TrialContext {
            level_index: li,
            level,
            trial,
            seed: derive_seed(base_seed, &[stream::ENGINE, li as u64, trial as u64]),
            trace,
        };
        let mut engine = factory(&ctx).map_err(wrap)?;
        let mut rng = rng_from_seed(ctx.seed);
        engine.run_until(cfg, ctx.trace.horizon_ms(), &mut rng).map_err(wrap)?;
        let detect_at = engine.detect_at();
        let detected = score_detections(&ctx.trace, engine.log(), detect_at)
            .first()
            .is_some_and(|r| r.detected);
        Ok::<_, PsychError>(detected)
    })?;
    let mut counts = vec![0u32; design.levels.len()];
    for (cell, hit) in outcomes.into_iter().enumerate() {
        counts[cell / trials] += hit as u32;
    }
    PsychometricData::new(design.axis, design.levels.clone(), design.trials_per_level, counts)
}

/// Generates the stimulus set for `design` from `base_seed` and runs it.
pub fn run_constant_stimuli<F>(
    factory: &F,
    cfg: &MechanismConfig,
    design: &StimulusDesign,
    base_seed: u64,
    mode: ExecMode,
) -> Result<PsychometricData, PsychError>
where
    F: Fn(&TrialContext) -> Result<Engine, EngineError> + Sync,
{
    let set = StimulusSet::generate(design, base_seed)?;
    run_stimulus_set(factory, cfg, &set, base_seed, mode)
}

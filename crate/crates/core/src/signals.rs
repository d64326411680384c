//! Fleeting internal signal events, interoceptive sampling, and detection scoring.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::engine::{Chunk, EventLog, Payload, Value, AFFECT_SAMPLE};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalEvent {
    pub id: u64,
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub amplitude: f64,
}

impl SignalEvent {
    pub fn end_ms(&self) -> f64 {
        self.onset_ms + self.duration_ms
    }

    /// Half-open activity window `[onset, onset + duration)`.
    pub fn is_active(&self, t_ms: f64) -> bool {
        self.onset_ms <= t_ms && t_ms < self.end_ms()
    }

    /// Closed scoring window `[onset, onset + duration]`.
    pub fn in_window(&self, t_ms: f64) -> bool {
        self.onset_ms <= t_ms && t_ms <= self.end_ms()
    }
}

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid signal parameters: {0}")]
    Params(String),
    #[error("trace invariant violated: {0}")]
    Invariant(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed trace row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Sorted, pairwise-disjoint events that all end before `horizon_ms`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTrace {
    events: Vec<SignalEvent>,
    horizon_ms: f64,
}

pub const TRACE_CSV_HEADER: [&str; 4] = ["event_id", "onset_ms", "duration_ms", "amplitude"];

impl SignalTrace {
    pub fn new(events: Vec<SignalEvent>, horizon_ms: f64) -> Result<Self, SignalError> {
        if !(horizon_ms.is_finite() && horizon_ms > 0.0) {
            return Err(SignalError::Invariant(format!("horizon {horizon_ms} must be > 0")));
        }
        for e in &events {
            if !(e.onset_ms >= 0.0 && e.duration_ms > 0.0 && e.amplitude > 0.0) {
                return Err(SignalError::Invariant(format!("event {} has invalid fields", e.id)));
            }
            if e.end_ms() > horizon_ms {
                return Err(SignalError::Invariant(format!("event {} ends after horizon", e.id)));
            }
        }
        for w in events.windows(2) {
            if w[1].onset_ms < w[0].end_ms() {
                return Err(SignalError::Invariant(format!(
                    "events {} and {} overlap or are unsorted",
                    w[0].id, w[1].id
                )));
            }
        }
        Ok(Self { events, horizon_ms })
    }

    pub fn empty(horizon_ms: f64) -> Self {
        Self {
            events: Vec::new(),
            horizon_ms,
        }
    }

    pub fn events(&self) -> &[SignalEvent] {
        &self.events
    }

    pub fn horizon_ms(&self) -> f64 {
        self.horizon_ms
    }

    /// The event active at `t_ms`, if any. At most one can be active.
    pub fn active_at(&self, t_ms: f64) -> Option<&SignalEvent> {
        let idx = self.events.partition_point(|e| e.onset_ms <= t_ms);
        idx.checked_sub(1)
            .map(|i| &self.events[i])
            .filter(|e| e.is_active(t_ms))
    }

    pub fn get(&self, id: u64) -> Option<&SignalEvent> {
        self.events.iter().find(|e| e.id == id)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SignalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_CSV_HEADER)?;
        write_event_rows(&mut w, &self.events)?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads events written by [`SignalTrace::write_csv`].
    pub fn read_csv<R: Read>(input: R, horizon_ms: f64) -> Result<Self, SignalError> {
        Self::new(read_event_rows(input)?, horizon_ms)
    }
}

pub fn write_event_rows<W: Write>(w: &mut csv::Writer<W>, events: &[SignalEvent]) -> Result<(), SignalError> {
    for e in events {
        w.write_record([
            e.id.to_string(),
            e.onset_ms.to_string(),
            e.duration_ms.to_string(),
            e.amplitude.to_string(),
        ])?;
    }
    Ok(())
}

pub fn read_event_rows<R: Read>(input: R) -> Result<Vec<SignalEvent>, SignalError> {
    let mut r = csv::Reader::from_reader(input);
    let mut events = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| SignalError::Row {
            row: row + 1,
            message: m.to_string(),
        };
        let num = |i: usize| -> Result<f64, SignalError> {
            rec.get(i)
                .ok_or_else(|| bad("missing field"))?
                .parse()
                .map_err(|_| bad("not a number"))
        };
        events.push(SignalEvent {
            id: rec.get(0).ok_or_else(|| bad("missing id"))?.parse().map_err(|_| bad("bad id"))?,
            onset_ms: num(1)?,
            duration_ms: num(2)?,
            amplitude: num(3)?,
        });
    }
    Ok(events)
}

/// Parameters of the stochastic generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceParams {
    pub rate_per_s: f64,
    pub duration_range_ms: (f64, f64),
    pub amplitude: f64,
    pub horizon_ms: f64,
}

/// Poisson onsets with uniform durations; an onset that would overlap the
/// previously kept event is dropped, as is any event running past the horizon.
pub fn generate_trace(params: &TraceParams, rng: &mut SimRng) -> Result<SignalTrace, SignalError> {
    let TraceParams {
        rate_per_s,
        duration_range_ms: (dmin, dmax),
        amplitude,
        horizon_ms,
    } = *params;
    if !(rate_per_s.is_finite() && rate_per_s > 0.0) {
        return Err(SignalError::Params(format!("rate must be > 0, got {rate_per_s}")));
    }
    if !(dmin > 0.0 && dmin <= dmax && dmax.is_finite()) {
        return Err(SignalError::Params(format!("duration range ({dmin}, {dmax}) invalid")));
    }
    if !(horizon_ms.is_finite() && horizon_ms > 0.0) {
        return Err(SignalError::Params(format!("horizon must be > 0, got {horizon_ms}")));
    }
    if !(amplitude.is_finite() && amplitude > 0.0) {
        return Err(SignalError::Params(format!("amplitude must be > 0, got {amplitude}")));
    }
    let gap = Exp::new(rate_per_s / 1000.0).map_err(|e| SignalError::Params(e.to_string()))?;
    let mut events: Vec<SignalEvent> = Vec::new();
    let mut t = 0.0;
    let mut next_id = 0u64;
    loop {
        t += gap.sample(rng);
        if t >= horizon_ms {
            break;
        }
        let duration = if dmin == dmax { dmin } else { rng.random_range(dmin..=dmax) };
        let free = events.last().is_none_or(|prev| t >= prev.end_ms());
        if free && t + duration <= horizon_ms {
            events.push(SignalEvent {
                id: next_id,
                onset_ms: t,
                duration_ms: duration,
                amplitude,
            });
            next_id += 1;
        }
    }
    SignalTrace::new(events, horizon_ms)
}

/// Amplitude gate: a sample passes when `amplitude + N(0, sd) > mean`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateModel {
    pub gate_mean: f64,
    pub gate_sd: f64,
}

impl GateModel {
    pub fn new(gate_mean: f64, gate_sd: f64) -> Result<Self, SignalError> {
        if !(gate_sd >= 0.0 && gate_sd.is_finite() && gate_mean.is_finite()) {
            return Err(SignalError::Params(format!("gate ({gate_mean}, {gate_sd}) invalid")));
        }
        Ok(Self { gate_mean, gate_sd })
    }

    pub fn passes(&self, amplitude: f64, rng: &mut SimRng) -> bool {
        let eps = if self.gate_sd > 0.0 {
            Normal::new(0.0, self.gate_sd).expect("sd validated").sample(rng)
        } else {
            0.0
        };
        amplitude + eps > self.gate_mean
    }
}

pub fn affect_sample(event: &SignalEvent) -> Chunk {
    Chunk::new(
        format!("affect-{}", event.id),
        AFFECT_SAMPLE,
        [("event".to_string(), Value::Number(event.id as f64))],
    )
    .expect("affect sample chunk is well-formed")
}

/// Event id carried by an `affect-sample` chunk.
pub fn affect_event_id(chunk: &Chunk) -> Option<u64> {
    if chunk.type_name() != AFFECT_SAMPLE {
        return None;
    }
    chunk
        .slot("event")
        .and_then(Value::as_number)
        .filter(|n| *n >= 0.0 && n.fract() == 0.0)
        .map(|n| n as u64)
}

pub fn sample_interoceptive(trace: &SignalTrace, t_ms: f64, gate: &GateModel, rng: &mut SimRng) -> Option<Chunk> {
    let event = trace.active_at(t_ms)?;
    gate.passes(event.amplitude, rng).then(|| affect_sample(event))
}

/// Whether a detection is anchored to the start or the end of the monitor firing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DetectAt {
    #[default]
    Start,
    End,
}

impl DetectAt {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "start" => Some(DetectAt::Start),
            "end" => Some(DetectAt::End),
            _ => None,
        }
    }
}

impl fmt::Display for DetectAt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectAt::Start => "start",
            DetectAt::End => "end",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRecord {
    pub event_id: u64,
    pub detected: bool,
    pub detect_time_ms: Option<f64>,
    pub detecting_production: Option<String>,
}

/// Monitor firings as `(anchor time, production, affect event)` in log order.
fn monitor_firings(log: &EventLog, detect_at: DetectAt) -> Vec<(f64, String, u64)> {
    let mut out = Vec::new();
    let mut open: Option<(String, bool)> = None;
    for e in log.entries() {
        match (&e.payload, detect_at) {
            (Payload::FireStart { monitor, affect, .. }, _) => {
                open = e.production.clone().map(|p| (p, *monitor));
                if let (DetectAt::Start, true, Some(ev), Some(p)) = (detect_at, *monitor, affect, &e.production) {
                    out.push((e.time_ms, p.clone(), *ev));
                }
            }
            (Payload::FireEnd { affect: Some(ev) }, DetectAt::End) => {
                if let Some((p, true)) = open.take() {
                    out.push((e.time_ms, p, *ev));
                }
            }
            _ => {}
        }
    }
    out
}

/// An event counts as detected when a monitor firing carrying its id is
/// anchored inside its window; the first such firing wins.
pub fn score_detections(trace: &SignalTrace, log: &EventLog, detect_at: DetectAt) -> Vec<DetectionRecord> {
    let mut first: BTreeMap<u64, (f64, String)> = BTreeMap::new();
    for (t, prod, ev) in monitor_firings(log, detect_at) {
        if first.contains_key(&ev) {
            continue;
        }
        if trace.get(ev).is_some_and(|e| e.in_window(t)) {
            first.insert(ev, (t, prod));
        }
    }
    trace
        .events()
        .iter()
        .map(|e| match first.remove(&e.id) {
            Some((t, p)) => DetectionRecord {
                event_id: e.id,
                detected: true,
                detect_time_ms: Some(t),
                detecting_production: Some(p),
            },
            None => DetectionRecord {
                event_id: e.id,
                detected: false,
                detect_time_ms: None,
                detecting_production: None,
            },
        })
        .collect()
}

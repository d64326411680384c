//! Append-only event log and its CSV form (`time_ms,kind,production_id,detail`).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Match,
    Select,
    FireStart,
    FireEnd,
    RetrievalStart,
    RetrievalComplete,
    SignalDeposit,
    Detection,
    Compile,
    Utility,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Match => "match",
            EventKind::Select => "select",
            EventKind::FireStart => "fire-start",
            EventKind::FireEnd => "fire-end",
            EventKind::RetrievalStart => "retrieval-start",
            EventKind::RetrievalComplete => "retrieval-complete",
            EventKind::SignalDeposit => "signal-deposit",
            EventKind::Detection => "detection",
            EventKind::Compile => "compile",
            EventKind::Utility => "utility",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "match" => EventKind::Match,
            "select" => EventKind::Select,
            "fire-start" => EventKind::FireStart,
            "fire-end" => EventKind::FireEnd,
            "retrieval-start" => EventKind::RetrievalStart,
            "retrieval-complete" => EventKind::RetrievalComplete,
            "signal-deposit" => EventKind::SignalDeposit,
            "detection" => EventKind::Detection,
            "compile" => EventKind::Compile,
            "utility" => EventKind::Utility,
            _ => return None,
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Match { candidates: usize },
    Select { utility: f64, noisy: f64 },
    FireStart { duration_ms: f64, monitor: bool, affect: Option<u64> },
    FireEnd { affect: Option<u64> },
    RetrievalStart { completes_at: f64, outcome: Option<String> },
    RetrievalComplete { chunk: Option<String> },
    SignalDeposit { event: u64 },
    Detection { event: Option<u64> },
    Compile { parents: (String, String), recreations: u32 },
    Utility { utility: f64, reward: f64, elapsed_ms: f64 },
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::Match { .. } => EventKind::Match,
            Payload::Select { .. } => EventKind::Select,
            Payload::FireStart { .. } => EventKind::FireStart,
            Payload::FireEnd { .. } => EventKind::FireEnd,
            Payload::RetrievalStart { .. } => EventKind::RetrievalStart,
            Payload::RetrievalComplete { .. } => EventKind::RetrievalComplete,
            Payload::SignalDeposit { .. } => EventKind::SignalDeposit,
            Payload::Detection { .. } => EventKind::Detection,
            Payload::Compile { .. } => EventKind::Compile,
            Payload::Utility { .. } => EventKind::Utility,
        }
    }

    fn detail(&self) -> String {
        fn opt<T: fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "-".to_string(), |x| x.to_string())
        }
        match self {
            Payload::Match { candidates } => format!("candidates={candidates}"),
            Payload::Select { utility, noisy } => format!("utility={utility};noisy={noisy}"),
            Payload::FireStart {
                duration_ms,
                monitor,
                affect,
            } => format!("duration={duration_ms};monitor={monitor};affect={}", opt(affect)),
            Payload::FireEnd { affect } => format!("affect={}", opt(affect)),
            Payload::RetrievalStart { completes_at, outcome } => {
                format!("completes_at={completes_at};outcome={}", opt(outcome))
            }
            Payload::RetrievalComplete { chunk } => format!("chunk={}", opt(chunk)),
            Payload::SignalDeposit { event } => format!("event={event}"),
            Payload::Detection { event } => format!("event={}", opt(event)),
            Payload::Compile { parents, recreations } => {
                format!("parents={}+{};recreations={recreations}", parents.0, parents.1)
            }
            Payload::Utility {
                utility,
                reward,
                elapsed_ms,
            } => format!("utility={utility};reward={reward};elapsed={elapsed_ms}"),
        }
    }

    fn from_detail(kind: EventKind, detail: &str) -> Result<Self, LogError> {
        let bad = || LogError::Detail(detail.to_string());
        let map: BTreeMap<&str, &str> = if detail == "-" {
            BTreeMap::new()
        } else {
            detail
                .split(';')
                .map(|kv| kv.split_once('=').ok_or_else(bad))
                .collect::<Result<_, _>>()?
        };
        let get = |k: &str| map.get(k).copied().ok_or_else(bad);
        let num = |k: &str| get(k)?.parse::<f64>().map_err(|_| bad());
        let opt_u64 = |k: &str| -> Result<Option<u64>, LogError> {
            match get(k)? {
                "-" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad()),
            }
        };
        let opt_str = |k: &str| -> Result<Option<String>, LogError> {
            Ok(match get(k)? {
                "-" => None,
                s => Some(s.to_string()),
            })
        };
        Ok(match kind {
            EventKind::Match => Payload::Match {
                candidates: get("candidates")?.parse().map_err(|_| bad())?,
            },
            EventKind::Select => Payload::Select {
                utility: num("utility")?,
                noisy: num("noisy")?,
            },
            EventKind::FireStart => Payload::FireStart {
                duration_ms: num("duration")?,
                monitor: get("monitor")?.parse().map_err(|_| bad())?,
                affect: opt_u64("affect")?,
            },
            EventKind::FireEnd => Payload::FireEnd {
                affect: opt_u64("affect")?,
            },
            EventKind::RetrievalStart => Payload::RetrievalStart {
                completes_at: num("completes_at")?,
                outcome: opt_str("outcome")?,
            },
            EventKind::RetrievalComplete => Payload::RetrievalComplete {
                chunk: opt_str("chunk")?,
            },
            EventKind::SignalDeposit => Payload::SignalDeposit {
                event: get("event")?.parse().map_err(|_| bad())?,
            },
            EventKind::Detection => Payload::Detection {
                event: opt_u64("event")?,
            },
            EventKind::Compile => {
                let (a, b) = get("parents")?.split_once('+').ok_or_else(bad)?;
                Payload::Compile {
                    parents: (a.to_string(), b.to_string()),
                    recreations: get("recreations")?.parse().map_err(|_| bad())?,
                }
            }
            EventKind::Utility => Payload::Utility {
                utility: num("utility")?,
                reward: num("reward")?,
                elapsed_ms: num("elapsed")?,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub time_ms: f64,
    pub production: Option<String>,
    pub payload: Payload,
}

impl LogEntry {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown event kind `{0}`")]
    Kind(String),
    #[error("malformed detail `{0}`")]
    Detail(String),
    #[error("malformed time `{0}`")]
    Time(String),
    #[error("log times must be non-decreasing ({prev} then {next})")]
    TimeOrder { prev: f64, next: f64 },
}

/// Append-only event log with non-decreasing times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    entries: Vec<LogEntry>,
}

pub const CSV_HEADER: [&str; 4] = ["time_ms", "kind", "production_id", "detail"];

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time_ms: f64, production: Option<&str>, payload: Payload) {
        let entry = LogEntry {
            time_ms,
            production: production.map(str::to_string),
            payload,
        };
        self.try_push(entry).expect("event log time went backwards");
    }

    pub fn try_push(&mut self, entry: LogEntry) -> Result<(), LogError> {
        if let Some(last) = self.entries.last() {
            if entry.time_ms < last.time_ms {
                return Err(LogError::TimeOrder {
                    prev: last.time_ms,
                    next: entry.time_ms,
                });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(move |e| e.kind() == kind)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LogError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        self.write_rows(&mut w, None)?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes rows only; `extra_detail` is prefixed to every detail field.
    pub fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>, extra_detail: Option<&str>) -> Result<(), LogError> {
        for e in &self.entries {
            let detail = match extra_detail {
                Some(prefix) => format!("{prefix};{}", e.payload.detail()),
                None => e.payload.detail(),
            };
            w.write_record([
                e.time_ms.to_string().as_str(),
                e.kind().as_str(),
                e.production.as_deref().unwrap_or("-"),
                detail.as_str(),
            ])?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, LogError> {
        let mut r = csv::Reader::from_reader(input);
        let mut log = EventLog::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let time_ms = field(0).parse::<f64>().map_err(|_| LogError::Time(field(0).into()))?;
            let kind = EventKind::parse(field(1)).ok_or_else(|| LogError::Kind(field(1).into()))?;
            let production = match field(2) {
                "-" | "" => None,
                p => Some(p.to_string()),
            };
            let payload = Payload::from_detail(kind, field(3))?;
            log.try_push(LogEntry {
                time_ms,
                production,
                payload,
            })?;
        }
        Ok(log)
    }
}

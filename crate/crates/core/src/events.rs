//! Per-phase event log shared by the fusion pipeline and the simulator.
//!
//! CSV, one record per line, header
//! `cycle,worker,phase,start_us,end_us,staleness`. Times are microseconds
//! from the start of the run with three decimals.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const HEADER: [&str; 6] = ["cycle", "worker", "phase", "start_us", "end_us", "staleness"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    Vision,
    Vlm,
    /// Action expert on features from this cycle, not overlapped.
    Ae,
    AeStale,
    AeFresh,
}

impl PhaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vision => "vision",
            Self::Vlm => "vlm",
            Self::Ae => "ae",
            Self::AeStale => "ae-stale",
            Self::AeFresh => "ae-fresh",
        }
    }
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vision" => Self::Vision,
            "vlm" => Self::Vlm,
            "ae" => Self::Ae,
            "ae-stale" => Self::AeStale,
            "ae-fresh" => Self::AeFresh,
            other => {
                return Err(Error::Unknown {
                    kind: "phase",
                    name: other.to_string(),
                })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub cycle: u64,
    pub worker: usize,
    pub phase: PhaseKind,
    pub start_us: f64,
    pub end_us: f64,
    pub staleness: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<Event>,
}

fn us(v: f64) -> String {
    format!("{v:.3}")
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `start < end` for every event and no two events on one worker
    /// overlap. Touching endpoints are allowed.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            if !(e.start_us.is_finite() && e.end_us.is_finite() && e.start_us < e.end_us) {
                return Err(Error::InvalidInput(format!(
                    "event {i} ({} on worker {}): start {} must precede end {}",
                    e.phase, e.worker, e.start_us, e.end_us
                )));
            }
        }
        let mut sorted: Vec<&Event> = self.events.iter().collect();
        sorted.sort_by(|a, b| a.worker.cmp(&b.worker).then(a.start_us.total_cmp(&b.start_us)));
        for w in sorted.windows(2) {
            if w[0].worker == w[1].worker && w[1].start_us < w[0].end_us {
                return Err(Error::InvalidInput(format!(
                    "worker {} runs {} (cycle {}) and {} (cycle {}) at the same time",
                    w[0].worker, w[0].phase, w[0].cycle, w[1].phase, w[1].cycle
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io {
            path: "<event log>".into(),
            message: e.to_string(),
        };
        w.write_record(HEADER).map_err(io)?;
        for e in &self.events {
            w.write_record([
                e.cycle.to_string(),
                e.worker.to_string(),
                e.phase.to_string(),
                us(e.start_us),
                us(e.end_us),
                e.staleness.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<event log>".into(),
            message: e.to_string(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Parse and validate. `source` names the input in error messages.
    pub fn read_csv<R: Read>(input: R, source: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let schema = |line: usize, field: &str, message: String| Error::Schema {
            path: source.to_string(),
            line,
            field: field.to_string(),
            message,
        };
        let headers = r.headers().map_err(|e| schema(1, "header", e.to_string()))?;
        if headers.iter().ne(HEADER) {
            return Err(schema(1, "header", format!("expected `{}`", HEADER.join(","))));
        }
        let mut log = EventLog::new();
        for row in r.records() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                schema(line, "row", e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let get = |i: usize| row.get(i).unwrap_or("").trim();
            fn num<T: FromStr>(s: &str) -> std::result::Result<T, String> {
                s.parse().map_err(|_| format!("cannot parse `{s}`"))
            }
            let event = Event {
                cycle: num(get(0)).map_err(|m| schema(line, HEADER[0], m))?,
                worker: num(get(1)).map_err(|m| schema(line, HEADER[1], m))?,
                phase: get(2).parse().map_err(|e: Error| schema(line, HEADER[2], e.to_string()))?,
                start_us: num(get(3)).map_err(|m| schema(line, HEADER[3], m))?,
                end_us: num(get(4)).map_err(|m| schema(line, HEADER[4], m))?,
                staleness: num(get(5)).map_err(|m| schema(line, HEADER[5], m))?,
            };
            if event.start_us.partial_cmp(&event.end_us) != Some(std::cmp::Ordering::Less) {
                return Err(schema(line, HEADER[4], "end_us must be greater than start_us".into()));
            }
            log.push(event);
        }
        log.validate()?;
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(worker: usize, phase: PhaseKind, start: f64, end: f64) -> Event {
        Event {
            cycle: 0,
            worker,
            phase,
            start_us: start,
            end_us: end,
            staleness: 0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let log = EventLog {
            events: vec![
                ev(0, PhaseKind::Vlm, 0.0, 1000.5),
                ev(1, PhaseKind::AeStale, 0.0, 900.25),
                ev(1, PhaseKind::AeFresh, 1000.5, 2000.0),
            ],
        };
        let text = log.to_csv();
        assert!(text.starts_with("cycle,worker,phase,start_us,end_us,staleness\n0,0,vlm,0.000,1000.500,0\n"));
        assert_eq!(EventLog::read_csv(text.as_bytes(), "mem").unwrap(), log);
    }

    #[test]
    fn overlap_on_one_worker_rejected() {
        let log = EventLog {
            events: vec![ev(0, PhaseKind::Vlm, 0.0, 10.0), ev(0, PhaseKind::Ae, 5.0, 20.0)],
        };
        assert!(log.validate().is_err());
        let ok = EventLog {
            events: vec![ev(0, PhaseKind::Vlm, 0.0, 10.0), ev(1, PhaseKind::Ae, 5.0, 20.0)],
        };
        ok.validate().unwrap();
    }

    #[test]
    fn line_precise_errors() {
        let text = "cycle,worker,phase,start_us,end_us,staleness\n0,0,vlm,0,10,0\n1,0,warp,10,20,0\n";
        match EventLog::read_csv(text.as_bytes(), "t.csv") {
            Err(Error::Schema { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "phase");
            }
            other => panic!("{other:?}"),
        }
        let text = "cycle,worker,phase,start_us,end_us,staleness\n0,0,vlm,10,10,0\n";
        assert!(matches!(
            EventLog::read_csv(text.as_bytes(), "t.csv"),
            Err(Error::Schema { line: 2, .. })
        ));
        assert!(EventLog::read_csv("a,b\n".as_bytes(), "t.csv").is_err());
    }
}

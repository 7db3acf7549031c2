//! Run traces: one header followed by one record per simulation step.
//!
//! Two encodings are supported: line-delimited JSON (`.jsonl`, one
//! externally tagged object per line) and a CBOR sequence of the same
//! values for long runs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use cfnav_core::intent::{GoalLikelihood, IntentDiagnostic};
use cfnav_core::netsim::BusDiagnostic;
use cfnav_core::ptrack::assoc::TrackReport;
use cfnav_core::ptrack::{Measurement, TrackerDiagnostic};
use cfnav_core::{AgentId, AgentState, DVec2, Goal, GoalBelief, GoalId, SelectionStatus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::Mode;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("cbor: {0}")]
    Cbor(String),
    #[error("trace has no header")]
    MissingHeader,
    #[error("timestamps not increasing at step {0}")]
    NonMonotone(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub id: AgentId,
    pub appearance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub step_dt: f64,
    pub goals: Vec<Goal>,
    pub agents: Vec<AgentMeta>,
    pub sensors: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentGoal {
    pub agent: AgentId,
    pub goal: GoalId,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub agent: AgentId,
    pub velocity: DVec2,
    pub status: SelectionStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub sensor: u32,
    pub alive: bool,
    pub measurements: Vec<Measurement>,
    pub local: Vec<TrackReport>,
    /// `None` when the node did not run its global phase this step.
    pub global: Option<Vec<TrackReport>>,
    /// Peer beliefs fused in this step.
    pub received: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDiagnostic {
    Intent(IntentDiagnostic),
    Tracker { sensor: u32, detail: TrackerDiagnostic },
    Bus(BusDiagnostic),
    CommandClamped { agent: AgentId },
    NoObserver,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    pub agents: Vec<AgentState>,
    pub true_goals: Vec<AgentGoal>,
    pub commands: Vec<Command>,
    pub nodes: Vec<NodeRecord>,
    /// Which node's global tracks fed inference, in full-pipeline mode.
    pub observer: Option<u32>,
    pub beliefs: Vec<GoalBelief>,
    pub likelihoods: Vec<GoalLikelihood>,
    pub counterfactuals: usize,
    pub diagnostics: Vec<TraceDiagnostic>,
}

impl TraceRecord {
    pub fn true_goal(&self, agent: AgentId) -> Option<GoalId> {
        self.true_goals.iter().find(|g| g.agent == agent).map(|g| g.goal)
    }

    pub fn node(&self, sensor: u32) -> Option<&NodeRecord> {
        self.nodes.iter().find(|n| n.sensor == sensor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Step(Box<TraceRecord>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceFormat {
    Jsonl,
    Cbor,
}

impl TraceFormat {
    /// `.cbor` selects CBOR, anything else JSON lines.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("cbor") => TraceFormat::Cbor,
            _ => TraceFormat::Jsonl,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        let io = |e: serde_json::Error| TraceError::Json { line: 0, source: e };
        serde_json::to_writer(&mut w, &Line::Header(self.header.clone())).map_err(io)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &Line::Step(Box::new(r.clone()))).map_err(io)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(|source| TraceError::Json { line: i + 1, source })? {
                Line::Header(h) => header = Some(h),
                Line::Step(s) => records.push(*s),
            }
        }
        let trace = Trace { header: header.ok_or(TraceError::MissingHeader)?, records };
        trace.check_monotone()?;
        Ok(trace)
    }

    pub fn write_cbor<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        let err = |e: ciborium::ser::Error<std::io::Error>| TraceError::Cbor(e.to_string());
        ciborium::into_writer(&Line::Header(self.header.clone()), &mut w).map_err(err)?;
        for r in &self.records {
            ciborium::into_writer(&Line::Step(Box::new(r.clone())), &mut w).map_err(err)?;
        }
        Ok(())
    }

    pub fn read_cbor<R: Read>(r: R) -> Result<Trace, TraceError> {
        let mut r = BufReader::new(r);
        let mut header = None;
        let mut records = Vec::new();
        while !r.fill_buf()?.is_empty() {
            let line: Line = ciborium::from_reader(&mut r).map_err(|e| TraceError::Cbor(e.to_string()))?;
            match line {
                Line::Header(h) => header = Some(h),
                Line::Step(s) => records.push(*s),
            }
        }
        let trace = Trace { header: header.ok_or(TraceError::MissingHeader)?, records };
        trace.check_monotone()?;
        Ok(trace)
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let mut w = BufWriter::new(File::create(path)?);
        match TraceFormat::for_path(path) {
            TraceFormat::Jsonl => self.write_jsonl(&mut w)?,
            TraceFormat::Cbor => self.write_cbor(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Trace, TraceError> {
        let f = File::open(path)?;
        match TraceFormat::for_path(path) {
            TraceFormat::Jsonl => Trace::read_jsonl(BufReader::new(f)),
            TraceFormat::Cbor => Trace::read_cbor(f),
        }
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        out
    }

    fn check_monotone(&self) -> Result<(), TraceError> {
        for w in self.records.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(TraceError::NonMonotone(w[1].step));
            }
        }
        Ok(())
    }
}

//! Tracking metrics over traces and CSV exports for plotting.

use std::io::Write;

use cfnav_core::motmetrics::{evaluate_frames, FrameInput, MotError};
use cfnav_core::ptrack::assoc::TrackReport;
use cfnav_core::MotReport;
use serde::{Deserialize, Serialize};

use crate::trace::{Trace, TraceRecord};

/// Which track list of a node is scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackSource {
    Local,
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub sensor: u32,
    pub source: TrackSource,
    /// Frames in which the node was alive and scored.
    pub frames: usize,
    pub report: MotReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub cutoff: f64,
    pub nodes: Vec<NodeMetrics>,
    /// Mean global MOTA over nodes alive at the end of the run.
    pub mean_mota: f64,
    pub mean_motp: f64,
}

fn frame(record: &TraceRecord, tracks: &[TrackReport]) -> FrameInput {
    FrameInput {
        time: record.time,
        hypotheses: tracks.iter().map(|t| (t.id, t.position)).collect(),
        truths: record.agents.iter().map(|a| (a.id, a.position)).collect(),
    }
}

/// Scores one node over every step it was alive.
pub fn node_metrics(trace: &Trace, sensor: u32, source: TrackSource, cutoff: f64) -> Result<NodeMetrics, MotError> {
    let frames: Vec<FrameInput> = trace
        .records
        .iter()
        .filter_map(|r| {
            let n = r.node(sensor).filter(|n| n.alive)?;
            match source {
                TrackSource::Local => Some(frame(r, &n.local)),
                TrackSource::Global => n.global.as_deref().map(|g| frame(r, g)),
            }
        })
        .collect();
    let report = evaluate_frames(&frames, cutoff)?;
    Ok(NodeMetrics { sensor, source, frames: frames.len(), report })
}

/// Global-phase metrics for every node plus the mean over surviving nodes.
pub fn metrics_report(trace: &Trace, cutoff: f64) -> Result<MetricsReport, MotError> {
    let mut nodes = Vec::new();
    for &s in &trace.header.sensors {
        nodes.push(node_metrics(trace, s, TrackSource::Global, cutoff)?);
    }
    let last = trace.records.last();
    let surviving: Vec<&NodeMetrics> = nodes
        .iter()
        .filter(|n| last.and_then(|r| r.node(n.sensor)).is_some_and(|r| r.alive))
        .collect();
    let mean = |f: fn(&MotReport) -> f64| {
        if surviving.is_empty() {
            0.0
        } else {
            surviving.iter().map(|n| f(&n.report)).sum::<f64>() / surviving.len() as f64
        }
    };
    Ok(MetricsReport {
        scenario: trace.header.scenario.clone(),
        seed: trace.header.seed,
        cutoff,
        mean_mota: mean(|r| r.mota),
        mean_motp: mean(|r| r.motp),
        nodes,
    })
}

/// Belief of every agent for every goal over time, with the counterfactual
/// likelihood that produced it.
pub fn write_belief_timeline<W: Write>(trace: &Trace, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "agent", "goal", "posterior", "likelihood", "true_goal"])?;
    for r in &trace.records {
        for b in &r.beliefs {
            let truth = r.true_goal(b.agent).map(|g| g.0.to_string()).unwrap_or_default();
            for (g, p) in &b.posterior {
                let l = r
                    .likelihoods
                    .iter()
                    .find(|l| l.agent == b.agent && l.goal == *g)
                    .map(|l| l.density.to_string())
                    .unwrap_or_default();
                out.write_record([r.time.to_string(), b.agent.0.to_string(), g.0.to_string(), p.to_string(), l, truth.clone()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Final posterior over the goal layout, one row per agent and goal.
pub fn write_goal_posterior<W: Write>(trace: &Trace, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["agent", "goal", "x", "y", "posterior", "true_goal"])?;
    if let Some(r) = trace.records.last() {
        for b in &r.beliefs {
            let truth = r.true_goal(b.agent).map(|g| g.0.to_string()).unwrap_or_default();
            for g in &trace.header.goals {
                out.write_record([
                    b.agent.0.to_string(),
                    g.id.0.to_string(),
                    g.position.x.to_string(),
                    g.position.y.to_string(),
                    b.prob(g.id).to_string(),
                    truth.clone(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Per step and observed agent: position, most likely goal and the true goal
/// of the matching simulated agent when ids coincide.
pub fn write_predictions<W: Write>(trace: &Trace, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "agent", "x", "y", "predicted_goal", "probability", "true_goal", "observer"])?;
    for r in &trace.records {
        for b in &r.beliefs {
            let Some(g) = b.argmax() else { continue };
            let pos = r.agents.iter().find(|a| a.id == b.agent).map(|a| a.position);
            let observed = r
                .observer
                .and_then(|s| r.node(s))
                .and_then(|n| n.global.as_ref())
                .and_then(|ts| ts.iter().find(|t| t.id.0 == b.agent.0))
                .map(|t| t.position);
            let Some(p) = observed.or(pos) else { continue };
            out.write_record([
                r.time.to_string(),
                b.agent.0.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                g.0.to_string(),
                b.prob(g).to_string(),
                r.true_goal(b.agent).map(|g| g.0.to_string()).unwrap_or_default(),
                r.observer.map(|o| o.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

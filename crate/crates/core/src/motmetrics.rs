//! CLEAR MOT scores of a track trace against ground truth.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use glam::DVec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve, CostMatrix};
use crate::ptrack::{TrackId, TrackSet};
use crate::world::{AgentId, WorldState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotError {
    #[error("ground truth trace is empty")]
    EmptyTruth,
    #[error("ground truth contains no objects")]
    NoGroundTruth,
    #[error("trace lengths differ: {tracks} track frames, {truth} truth frames")]
    LengthMismatch { tracks: usize, truth: usize },
    #[error("frame {index}: track time {track_time} does not match truth time {truth_time}")]
    TimeMismatch { index: usize, track_time: f64, truth_time: f64 },
    #[error("cutoff must be positive, got {0}")]
    InvalidCutoff(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMatch {
    pub track: TrackId,
    pub truth: AgentId,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub time: f64,
    pub matches: Vec<FrameMatch>,
    pub misses: usize,
    pub false_positives: usize,
    pub id_switches: usize,
    pub objects: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub mota: f64,
    /// One minus the mean matched distance over the cutoff; zero without matches.
    pub motp: f64,
    /// Mean matched distance over the cutoff (lower is better); one without matches.
    pub motp_distance: f64,
    pub cutoff: f64,
    pub objects: usize,
    pub matches: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub id_switches: usize,
    pub frames: Vec<FrameEval>,
}

/// One frame of hypotheses and truths as plain positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameInput {
    pub time: f64,
    pub hypotheses: Vec<(TrackId, DVec2)>,
    pub truths: Vec<(AgentId, DVec2)>,
}

/// Scores the reported tracks of each `TrackSet` against the agents of the
/// matching `WorldState`.
pub fn evaluate(tracks: &[TrackSet], truth: &[WorldState], cutoff: f64) -> Result<MotReport, MotError> {
    if truth.is_empty() {
        return Err(MotError::EmptyTruth);
    }
    if tracks.len() != truth.len() {
        return Err(MotError::LengthMismatch { tracks: tracks.len(), truth: truth.len() });
    }
    let mut frames = Vec::with_capacity(truth.len());
    for (index, (t, w)) in tracks.iter().zip(truth).enumerate() {
        if (t.time - w.time).abs() > 1e-6 {
            return Err(MotError::TimeMismatch { index, track_time: t.time, truth_time: w.time });
        }
        frames.push(FrameInput {
            time: w.time,
            hypotheses: t.reported().iter().map(|r| (r.id, r.position)).collect(),
            truths: w.agents.iter().map(|a| (a.id, a.position)).collect(),
        });
    }
    evaluate_frames(&frames, cutoff)
}

pub fn evaluate_frames(frames: &[FrameInput], cutoff: f64) -> Result<MotReport, MotError> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(MotError::InvalidCutoff(cutoff));
    }
    if frames.is_empty() {
        return Err(MotError::EmptyTruth);
    }
    // last track each object was matched to, kept across gaps
    let mut last: BTreeMap<AgentId, TrackId> = BTreeMap::new();
    let mut out = Vec::with_capacity(frames.len());
    let (mut objects, mut matched, mut misses, mut fps, mut switches) = (0, 0, 0, 0, 0);
    let mut dist_sum = 0.0;

    for f in frames {
        let mut truth_taken = alloc::vec![false; f.truths.len()];
        let mut hyp_taken = alloc::vec![false; f.hypotheses.len()];
        let mut matches = Vec::new();

        for (ti, (aid, tp)) in f.truths.iter().enumerate() {
            let Some(prev) = last.get(aid) else { continue };
            if let Some(hi) = f.hypotheses.iter().position(|(h, _)| h == prev) {
                let d = f.hypotheses[hi].1.distance(*tp);
                if !hyp_taken[hi] && d <= cutoff {
                    truth_taken[ti] = true;
                    hyp_taken[hi] = true;
                    matches.push(FrameMatch { track: *prev, truth: *aid, distance: d });
                }
            }
        }

        let free_t: Vec<usize> = (0..f.truths.len()).filter(|&i| !truth_taken[i]).collect();
        let free_h: Vec<usize> = (0..f.hypotheses.len()).filter(|&i| !hyp_taken[i]).collect();
        let costs = CostMatrix::from_fn(free_t.len(), free_h.len(), |i, j| {
            let d = f.truths[free_t[i]].1.distance(f.hypotheses[free_h[j]].1);
            (d <= cutoff).then_some(d)
        });
        let mut id_switches = 0;
        for (i, a) in solve(&costs).into_iter().enumerate() {
            let Some(j) = a else { continue };
            let (aid, tp) = f.truths[free_t[i]];
            let (hid, hp) = f.hypotheses[free_h[j]];
            if last.get(&aid).is_some_and(|p| *p != hid) {
                id_switches += 1;
            }
            matches.push(FrameMatch { track: hid, truth: aid, distance: hp.distance(tp) });
        }
        for m in &matches {
            last.insert(m.truth, m.track);
        }

        let frame = FrameEval {
            time: f.time,
            misses: f.truths.len() - matches.len(),
            false_positives: f.hypotheses.len() - matches.len(),
            id_switches,
            objects: f.truths.len(),
            matches,
        };
        objects += frame.objects;
        matched += frame.matches.len();
        misses += frame.misses;
        fps += frame.false_positives;
        switches += frame.id_switches;
        dist_sum += frame.matches.iter().map(|m| m.distance).sum::<f64>();
        out.push(frame);
    }

    if objects == 0 {
        return Err(MotError::NoGroundTruth);
    }
    let mota = 1.0 - (misses + fps + switches) as f64 / objects as f64;
    let motp_distance = if matched > 0 { dist_sum / matched as f64 / cutoff } else { 1.0 };
    Ok(MotReport {
        mota,
        motp: 1.0 - motp_distance,
        motp_distance,
        cutoff,
        objects,
        matches: matched,
        misses,
        false_positives: fps,
        id_switches: switches,
        frames: out,
    })
}

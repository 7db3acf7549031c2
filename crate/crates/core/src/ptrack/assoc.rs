//! Frame-to-frame data association with group handling.

use alloc::vec;
use alloc::vec::Vec;

use glam::DVec2;
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::gmm::BlockCovariance;
use super::TrackId;
use crate::assignment::{solve, CostMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    /// Position gate in meters.
    pub gate: f64,
    pub position_weight: f64,
    pub speed_weight: f64,
    pub heading_weight: f64,
    /// Speed difference (m/s) at which the speed term saturates.
    pub speed_scale: f64,
    /// Headings are compared only when both speeds exceed this.
    pub heading_min_speed: f64,
    /// Hits before a track is confirmed.
    pub min_hits: u32,
    /// Seconds without a match before a confirmed track is retired.
    pub timeout: f64,
    /// Seconds a coasting track is still reported.
    pub report_coast: f64,
    /// Weight of the stored appearance when blending in a new observation.
    pub appearance_smoothing: f64,
    /// An unmatched track joins a matched one as a group only within this distance.
    pub group_radius: f64,
    /// Hits a track needs before it can become a group member.
    pub group_min_hits: u32,
    /// Unclaimed candidates this close to a group are offered to it as split pieces.
    pub split_radius: f64,
    /// A track that would join a group is dropped instead when both carry
    /// signatures closer than this: it is a duplicate of the host.
    pub duplicate_appearance: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            gate: 1.0,
            position_weight: 0.6,
            speed_weight: 0.25,
            heading_weight: 0.15,
            speed_scale: 1.0,
            heading_min_speed: 0.2,
            min_hits: 3,
            timeout: 1.0,
            report_coast: 0.5,
            appearance_smoothing: 0.8,
            group_radius: 0.5,
            group_min_hits: 3,
            split_radius: 2.0,
            duplicate_appearance: 0.15,
        }
    }
}

/// A cluster offered to the associator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub weight: f64,
    pub position: DVec2,
    pub velocity: DVec2,
    pub covariance: BlockCovariance,
    /// Empty when unknown.
    pub appearance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    pub id: TrackId,
    pub appearance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: TrackId,
    pub position: DVec2,
    pub velocity: DVec2,
    pub covariance: BlockCovariance,
    pub appearance: Vec<f64>,
    pub weight: f64,
    pub hits: u32,
    pub confirmed: bool,
    pub last_seen: f64,
    /// Whether the track is part of the reported output at this time.
    pub reported: bool,
    /// Empty for a solo track, two or more entries for a group. The group's
    /// own id is one of them.
    pub members: Vec<GroupMember>,
}

impl Track {
    pub fn is_group(&self) -> bool {
        !self.members.is_empty()
    }

    fn member_list(&self) -> Vec<GroupMember> {
        if self.is_group() {
            self.members.clone()
        } else {
            vec![GroupMember { id: self.id, appearance: self.appearance.clone() }]
        }
    }
}

/// One reported object: a solo track, or one member of a group placed at the
/// group's position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub id: TrackId,
    pub position: DVec2,
    pub velocity: DVec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSet {
    pub time: f64,
    pub tracks: Vec<Track>,
    pub next_id: u32,
}

impl TrackSet {
    pub fn new(time: f64) -> Self {
        TrackSet { time, tracks: Vec::new(), next_id: 0 }
    }

    pub fn get(&self, id: TrackId) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn reported(&self) -> Vec<TrackReport> {
        let mut out = Vec::new();
        for t in self.tracks.iter().filter(|t| t.reported) {
            if t.is_group() {
                out.extend(t.members.iter().map(|m| TrackReport { id: m.id, position: t.position, velocity: t.velocity }));
            } else {
                out.push(TrackReport { id: t.id, position: t.position, velocity: t.velocity });
            }
        }
        out
    }
}

fn heading_gap(a: DVec2, b: DVec2) -> f64 {
    let c = (a.dot(b) / (a.length() * b.length())).clamp(-1.0, 1.0);
    c.acos()
}

fn pair_cost(t: &Track, c: &Candidate, cfg: &AssociationConfig) -> Option<f64> {
    let d = t.position.distance(c.position);
    if !(d <= cfg.gate) {
        return None;
    }
    let (sa, sb) = (t.velocity.length(), c.velocity.length());
    let mut cost = cfg.position_weight * d / cfg.gate + cfg.speed_weight * ((sa - sb).abs() / cfg.speed_scale).min(1.0);
    if sa >= cfg.heading_min_speed && sb >= cfg.heading_min_speed {
        cost += cfg.heading_weight * heading_gap(t.velocity, c.velocity) / core::f64::consts::PI;
    }
    Some(cost)
}

fn appearance_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() || a.len() != b.len() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn blend(old: &[f64], new: &[f64], keep: f64) -> Vec<f64> {
    if old.len() != new.len() || old.is_empty() {
        return new.to_vec();
    }
    old.iter().zip(new).map(|(o, n)| keep * o + (1.0 - keep) * n).collect()
}

fn absorb(mut t: Track, c: &Candidate, now: f64, cfg: &AssociationConfig) -> Track {
    t.position = c.position;
    t.velocity = c.velocity;
    t.covariance = c.covariance;
    t.weight = c.weight;
    t.hits = t.hits.saturating_add(1);
    t.confirmed |= t.hits >= cfg.min_hits;
    t.last_seen = now;
    t.reported = t.confirmed;
    t.appearance = if t.is_group() { c.appearance.clone() } else { blend(&t.appearance, &c.appearance, cfg.appearance_smoothing) };
    t
}

/// Matches candidates against the tracks of `prev` predicted to `now`.
///
/// Unmatched candidates start tentative tracks. A confirmed track that loses
/// its match while sitting next to a matched one is folded into it as a
/// group; when a group's blob later splits, the pieces get their old ids back
/// by nearest stored appearance.
pub fn data_associate(candidates: &[Candidate], prev: &TrackSet, now: f64, cfg: &AssociationConfig) -> TrackSet {
    let tau = (now - prev.time).max(0.0);
    let predicted: Vec<Track> = prev
        .tracks
        .iter()
        .map(|t| Track { position: t.position + t.velocity * tau, ..t.clone() })
        .collect();

    let costs = CostMatrix::from_fn(predicted.len(), candidates.len(), |i, j| pair_cost(&predicted[i], &candidates[j], cfg));
    let assignment = solve(&costs);
    let mut used = vec![false; candidates.len()];
    for j in assignment.iter().flatten() {
        used[*j] = true;
    }

    // matched tracks paired with the candidate they took and their state before the update
    let mut matched: Vec<(Track, usize, Track)> = Vec::new();
    let mut unmatched: Vec<Track> = Vec::new();
    for (i, t) in predicted.into_iter().enumerate() {
        let Some(j) = assignment[i] else {
            unmatched.push(t);
            continue;
        };
        if t.is_group() {
            let mut extras: Vec<(f64, usize)> = (0..candidates.len())
                .filter(|&k| !used[k] && candidates[k].position.distance(t.position) <= cfg.split_radius)
                .map(|k| (candidates[k].position.distance(t.position), k))
                .collect();
            extras.sort_by(|a, b| a.0.total_cmp(&b.0));
            extras.truncate(t.members.len() - 1);
            if !extras.is_empty() {
                let mut pieces = vec![j];
                for (_, k) in &extras {
                    used[*k] = true;
                    pieces.push(*k);
                }
                for (piece, members) in split_group(&t, &pieces, candidates) {
                    let c = &candidates[piece];
                    let solo = members.len() == 1;
                    let mut nt = Track {
                        id: members[0].id,
                        appearance: if solo { members[0].appearance.clone() } else { Vec::new() },
                        members: if solo { Vec::new() } else { members },
                        ..t.clone()
                    };
                    nt = absorb(nt, c, now, cfg);
                    matched.push((nt.clone(), piece, nt));
                }
                continue;
            }
        }
        let before = t.clone();
        matched.push((absorb(t, &candidates[j], now, cfg), j, before));
    }

    let mut survivors = Vec::new();
    for u in unmatched {
        let recent = now - u.last_seen <= cfg.report_coast;
        let host = if u.confirmed && recent && u.hits >= cfg.group_min_hits {
            matched
                .iter()
                .enumerate()
                .filter(|(_, (_, j, before))| {
                    before.position.distance(u.position) <= cfg.gate && candidates[*j].position.distance(u.position) <= cfg.group_radius
                })
                .min_by(|a, b| {
                    let da = candidates[a.1 .1].position.distance(u.position);
                    let db = candidates[b.1 .1].position.distance(u.position);
                    da.total_cmp(&db)
                })
                .map(|(k, _)| k)
        } else {
            None
        };
        if let Some(k) = host {
            let (t, _, before) = &mut matched[k];
            let signed = !u.is_group() && !before.is_group() && !u.appearance.is_empty() && !before.appearance.is_empty();
            if signed && appearance_distance(&u.appearance, &before.appearance) <= cfg.duplicate_appearance {
                continue;
            }
            let mut members = before.member_list();
            members.extend(u.member_list());
            t.members = members.clone();
            before.members = members;
            continue;
        }
        if u.confirmed && now - u.last_seen <= cfg.timeout {
            let reported = now - u.last_seen <= cfg.report_coast;
            survivors.push(Track { reported, ..u });
        }
    }

    let mut next_id = prev.next_id;
    let mut tracks: Vec<Track> = matched.into_iter().map(|(t, _, _)| t).chain(survivors).collect();
    for (j, c) in candidates.iter().enumerate() {
        if used[j] {
            continue;
        }
        let confirmed = cfg.min_hits <= 1;
        tracks.push(Track {
            id: TrackId(next_id),
            position: c.position,
            velocity: c.velocity,
            covariance: c.covariance,
            appearance: c.appearance.clone(),
            weight: c.weight,
            hits: 1,
            confirmed,
            last_seen: now,
            reported: confirmed,
            members: Vec::new(),
        });
        next_id += 1;
    }
    tracks.sort_by_key(|t| t.id);
    TrackSet { time: now, tracks, next_id }
}

/// Distributes a group's members over the candidates it split into,
/// matching by appearance. Every piece gets at least one member.
fn split_group(group: &Track, pieces: &[usize], candidates: &[Candidate]) -> Vec<(usize, Vec<GroupMember>)> {
    let members = &group.members;
    let costs = CostMatrix::from_fn(members.len(), pieces.len(), |m, p| {
        Some(appearance_distance(&members[m].appearance, &candidates[pieces[p]].appearance))
    });
    let assignment = solve(&costs);
    let mut out: Vec<(usize, Vec<GroupMember>)> = pieces.iter().map(|&p| (p, Vec::new())).collect();
    for (m, a) in assignment.iter().enumerate() {
        if let Some(p) = a {
            out[*p].1.push(members[m].clone());
        }
    }
    for (m, a) in assignment.iter().enumerate() {
        if a.is_none() {
            let p = (0..pieces.len())
                .min_by(|&x, &y| {
                    let dx = appearance_distance(&members[m].appearance, &candidates[pieces[x]].appearance);
                    let dy = appearance_distance(&members[m].appearance, &candidates[pieces[y]].appearance);
                    dx.total_cmp(&dy)
                })
                .unwrap_or(0);
            out[p].1.push(members[m].clone());
        }
    }
    for (_, ms) in &mut out {
        ms.sort_by_key(|m| m.id);
    }
    out
}

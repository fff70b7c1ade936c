//! Crowd trajectory files, windowed training samples and synthetic crowds.
//!
//! Trajectory files hold one annotation per line, whitespace separated:
//!
//! ```text
//! <frame_id> <ped_id> <x> <y>
//! ```
//!
//! with world coordinates in meters and consecutive annotated frames 0.4 s
//! apart. Blank lines and lines starting with `#` are ignored. Frame ids
//! only need to be evenly spaced (the ETH/UCY releases step by 10); the
//! stride is taken as the smallest gap between distinct frame ids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::crowd::{social_force_step, SocialForceParams, Walker};
use crate::error::{Error, Result};
use crate::nets::HORIZON;
use crate::zono::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: i64,
    pub ped_id: i64,
    pub x: f64,
    pub y: f64,
}

impl FrameRecord {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

pub type Track = [Vec2; HORIZON];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub ped_id: i64,
    /// Observed positions, oldest first, ending at the current frame.
    pub past: Track,
    /// Following positions when the neighbor stays annotated long enough.
    pub future: Option<Track>,
}

impl Neighbor {
    pub fn current(&self) -> Vec2 {
        self.past[HORIZON - 1]
    }
}

/// One agent-centered window. Every position is relative to the agent's
/// position at the current (last observed) frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub agent_id: i64,
    pub frame_id: i64,
    pub agent_past: Track,
    pub agent_future: Track,
    pub midpoints: [Vec2; HORIZON - 1],
    pub goal: Vec2,
    pub ego_next: Vec2,
    pub neighbors: Vec<Neighbor>,
}

fn parse_line(line: &str, no: usize) -> Result<Option<FrameRecord>> {
    let trimmed = line.trim_start();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let mut fields = Vec::with_capacity(4);
    let mut col = 0;
    for tok in line.split_whitespace() {
        let start = line[col..].find(tok).unwrap() + col;
        fields.push((start + 1, tok));
        col = start + tok.len();
    }
    let err = |column: usize, message: String| Error::Parse {
        line: no,
        column,
        message,
    };
    if fields.len() != 4 {
        let column = fields.get(4).map_or(line.len() + 1, |f| f.0);
        return Err(err(column, format!("expected 4 fields, found {}", fields.len())));
    }
    // ETH/UCY exports write integral ids as floats ("10.0")
    let id = |(c, t): (usize, &str)| -> Result<i64> {
        let v: f64 = t.parse().map_err(|e| err(c, format!("{e}: {t:?}")))?;
        if v.fract() != 0.0 || !v.is_finite() {
            return Err(err(c, format!("non-integral id {t:?}")));
        }
        Ok(v as i64)
    };
    let num = |(c, t): (usize, &str)| -> Result<f64> {
        let v: f64 = t.parse().map_err(|e| err(c, format!("{e}: {t:?}")))?;
        if !v.is_finite() {
            return Err(err(c, format!("non-finite coordinate {t:?}")));
        }
        Ok(v)
    };
    Ok(Some(FrameRecord {
        frame_id: id(fields[0])?,
        ped_id: id(fields[1])?,
        x: num(fields[2])?,
        y: num(fields[3])?,
    }))
}

pub fn parse_trajectories<R: BufRead>(reader: R) -> Result<Vec<FrameRecord>> {
    let mut records = Vec::new();
    let mut seen: HashMap<(i64, i64), usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let no = i + 1;
        if let Some(rec) = parse_line(&line?, no)? {
            if let Some(first) = seen.insert((rec.frame_id, rec.ped_id), no) {
                return Err(Error::Parse {
                    line: no,
                    column: 1,
                    message: format!(
                        "duplicate (frame {}, ped {}) first seen on line {first}",
                        rec.frame_id, rec.ped_id
                    ),
                });
            }
            records.push(rec);
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyFile);
    }
    records.sort_by_key(|r| (r.frame_id, r.ped_id));
    Ok(records)
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    let file = std::fs::File::open(path)?;
    parse_trajectories(BufReader::new(file))
}

pub fn write_trajectories<W: Write>(mut w: W, records: &[FrameRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{} {} {} {}", r.frame_id, r.ped_id, r.x, r.y)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub obs_len: usize,
    pub pred_len: usize,
    /// Neighbor radius around the agent at the current frame, meters.
    pub radius: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            obs_len: HORIZON,
            pred_len: HORIZON,
            radius: 4.0,
        }
    }
}

fn frame_stride(records: &[FrameRecord]) -> Option<i64> {
    let mut frames: Vec<i64> = records.iter().map(|r| r.frame_id).collect();
    frames.dedup();
    frames.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0).min()
}

fn track_at(track: &BTreeMap<i64, Vec2>, start: i64, stride: i64, origin: Vec2) -> Option<Track> {
    let mut out = [Vec2::zeros(); HORIZON];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = track.get(&(start + k as i64 * stride))? - origin;
    }
    Some(out)
}

/// Cuts sorted records into agent-centered windows of 8 observed and 8
/// future frames. Agents without an uninterrupted 16-frame span produce no
/// samples; neighbors must have a complete observed history.
pub fn make_windows(records: &[FrameRecord], cfg: &WindowConfig) -> Vec<TrainingSample> {
    assert_eq!(
        (cfg.obs_len, cfg.pred_len),
        (HORIZON, HORIZON),
        "networks are built for {HORIZON}-frame windows"
    );
    let Some(stride) = frame_stride(records) else {
        return Vec::new();
    };
    let mut tracks: BTreeMap<i64, BTreeMap<i64, Vec2>> = BTreeMap::new();
    let mut by_frame: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for r in records {
        tracks.entry(r.ped_id).or_default().insert(r.frame_id, r.position());
        by_frame.entry(r.frame_id).or_default().push(r.ped_id);
    }

    let mut samples = Vec::new();
    for (&agent, track) in &tracks {
        for &start in track.keys() {
            let now = start + (HORIZON as i64 - 1) * stride;
            let Some(&origin) = track.get(&now) else { continue };
            let Some(agent_past) = track_at(track, start, stride, origin) else { continue };
            let Some(agent_future) = track_at(track, now + stride, stride, origin) else {
                continue;
            };
            let mut neighbors = Vec::new();
            for &other in by_frame.get(&now).into_iter().flatten() {
                if other == agent {
                    continue;
                }
                let other_track = &tracks[&other];
                if (other_track[&now] - origin).norm() > cfg.radius {
                    continue;
                }
                if let Some(past) = track_at(other_track, start, stride, origin) {
                    neighbors.push(Neighbor {
                        ped_id: other,
                        past,
                        future: track_at(other_track, now + stride, stride, origin),
                    });
                }
            }
            let mut midpoints = [Vec2::zeros(); HORIZON - 1];
            for (i, m) in midpoints.iter_mut().enumerate() {
                *m = (agent_future[i] + agent_future[i + 1]) * 0.5;
            }
            samples.push(TrainingSample {
                agent_id: agent,
                frame_id: now,
                agent_past,
                agent_future,
                midpoints,
                goal: agent_future[HORIZON - 1],
                ego_next: agent_future[0],
                neighbors,
            });
        }
    }
    samples
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDataset {
    pub name: String,
    pub samples: Vec<TrainingSample>,
}

/// Trains on every dataset except `held_out`, tests on `held_out`.
pub fn leave_one_out_split(
    datasets: &[NamedDataset],
    held_out: &str,
) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>)> {
    let test = datasets
        .iter()
        .find(|d| d.name == held_out)
        .ok_or_else(|| Error::UnknownDataset(held_out.to_string()))?;
    let train: Vec<TrainingSample> = datasets
        .iter()
        .filter(|d| d.name != held_out)
        .flat_map(|d| d.samples.iter().cloned())
        .collect();
    Ok((train, test.samples.clone()))
}

/// On-disk cache of windowed samples (JSON).
///
/// ```text
/// { "version": 1, "datasets": [ { "name": ..., "samples": [TrainingSample, ...] } ] }
/// ```
#[derive(Debug, Serialize, Deserialize)]
pub struct SampleCache {
    pub version: u32,
    pub datasets: Vec<NamedDataset>,
}

impl SampleCache {
    pub const VERSION: u32 = 1;

    pub fn write(datasets: &[NamedDataset], path: impl AsRef<Path>) -> Result<()> {
        let cache = SampleCache {
            version: Self::VERSION,
            datasets: datasets.to_vec(),
        };
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &cache)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Vec<NamedDataset>> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let cache: SampleCache = serde_json::from_reader(f)?;
        if cache.version != Self::VERSION {
            return Err(Error::Checkpoint(format!("sample cache version {}", cache.version)));
        }
        Ok(cache.datasets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Side of the square arena, meters.
    pub arena: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub frame_dt: f64,
    /// Probability that a walker stands still for a while before setting off.
    pub wait_prob: f64,
    /// Longest such wait, in frames.
    pub max_wait_frames: usize,
    pub forces: SocialForceParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            arena: 14.0,
            min_speed: 0.8,
            max_speed: 1.6,
            frame_dt: 0.4,
            wait_prob: 0.0,
            max_wait_frames: 0,
            forces: SocialForceParams {
                max_speed: 1.6,
                ..Default::default()
            },
        }
    }
}

fn boundary_point<R: Rng + ?Sized>(rng: &mut R, side: usize, arena: f64) -> Vec2 {
    let t = rng.gen_range(0.0..arena);
    match side {
        0 => Vec2::new(0.0, t),
        1 => Vec2::new(arena, t),
        2 => Vec2::new(t, 0.0),
        _ => Vec2::new(t, arena),
    }
}

/// A fresh walker and the number of frames it waits at rest.
fn spawn<R: Rng + ?Sized>(rng: &mut R, id: u64, cfg: &SynthConfig) -> (Walker, usize) {
    let from = rng.gen_range(0..4);
    let to = (from + rng.gen_range(1..4)) % 4;
    let pos = boundary_point(rng, from, cfg.arena);
    let goal = boundary_point(rng, to, cfg.arena);
    let mut w = Walker {
        id,
        pos,
        vel: Vec2::zeros(),
        goal,
        desired_speed: rng.gen_range(cfg.min_speed..cfg.max_speed),
    };
    if cfg.max_wait_frames > 0 && rng.gen_bool(cfg.wait_prob) {
        return (w, rng.gen_range(1..=cfg.max_wait_frames));
    }
    w.vel = w.heading_to_goal() * w.desired_speed;
    (w, 0)
}

/// Synthetic crowd of `n_agents` concurrent walkers crossing a square arena
/// between random boundary points, recorded for `n_frames` frames. Walkers
/// that arrive leave the scene and are replaced by a new id.
pub fn synth_crowd(seed: u64, n_agents: usize, n_frames: usize) -> Vec<FrameRecord> {
    synth_crowd_with(seed, n_agents, n_frames, &SynthConfig::default())
}

pub fn synth_crowd_with(seed: u64, n_agents: usize, n_frames: usize, cfg: &SynthConfig) -> Vec<FrameRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_id = 0u64;
    let mut waits = Vec::with_capacity(n_agents);
    let mut walkers: Vec<Walker> = (0..n_agents)
        .map(|_| {
            let (mut w, wait) = spawn(&mut rng, next_id, cfg);
            next_id += 1;
            waits.push(wait);
            // start somewhere along the path so the scene is populated at frame 0
            let along = rng.gen_range(0.0..0.8);
            w.pos += (w.goal - w.pos) * along;
            w
        })
        .collect();
    let mut records = Vec::with_capacity(n_agents * n_frames);
    for frame in 0..n_frames {
        for w in &walkers {
            records.push(FrameRecord {
                frame_id: frame as i64,
                ped_id: w.id as i64,
                x: w.pos.x,
                y: w.pos.y,
            });
        }
        // waiting walkers want to stand still
        let speeds: Vec<f64> = walkers.iter().map(|w| w.desired_speed).collect();
        for (w, wait) in walkers.iter_mut().zip(&waits) {
            if *wait > 0 {
                w.desired_speed = 0.0;
            }
        }
        social_force_step(&mut walkers, &[], &cfg.forces, cfg.frame_dt, &mut rng);
        for ((w, wait), speed) in walkers.iter_mut().zip(waits.iter_mut()).zip(speeds) {
            w.desired_speed = speed;
            *wait = wait.saturating_sub(1);
            if (w.goal - w.pos).norm() < 0.5 {
                (*w, *wait) = spawn(&mut rng, next_id, cfg);
                next_id += 1;
            }
        }
    }
    records.sort_by_key(|r| (r.frame_id, r.ped_id));
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let recs = parse_trajectories("0 1 2.0 3.0\n".as_bytes()).unwrap();
        assert_eq!(
            recs,
            vec![FrameRecord {
                frame_id: 0,
                ped_id: 1,
                x: 2.0,
                y: 3.0
            }]
        );
    }

    #[test]
    fn sorts_out_of_order() {
        let recs = parse_trajectories("10 2 0 0\n0 5 1 1\n10 1 2 2\n# c\n\n0 3 4 4\n".as_bytes()).unwrap();
        let keys: Vec<_> = recs.iter().map(|r| (r.frame_id, r.ped_id)).collect();
        assert_eq!(keys, vec![(0, 3), (0, 5), (10, 1), (10, 2)]);
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_trajectories("0 1 2 3\n0 2 x 3\n".as_bytes()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 5)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_trajectories("0 1 2\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_trajectories("\n# only\n".as_bytes()), Err(Error::EmptyFile)));
        assert!(matches!(
            parse_trajectories("0 1 2 3\n0 1 4 5\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn accepts_float_ids() {
        let recs = parse_trajectories("780.0\t1.0\t8.46\t3.59\n".as_bytes()).unwrap();
        assert_eq!((recs[0].frame_id, recs[0].ped_id), (780, 1));
    }

    fn walk(ped: i64, frames: std::ops::Range<i64>, start: Vec2, vel: Vec2) -> Vec<FrameRecord> {
        frames
            .map(|f| {
                let p = start + vel * f as f64;
                FrameRecord {
                    frame_id: f * 10,
                    ped_id: ped,
                    x: p.x,
                    y: p.y,
                }
            })
            .collect()
    }

    #[test]
    fn lone_agent_window_count() {
        for n in [10, 16, 17, 30] {
            let recs = walk(1, 0..n, Vec2::zeros(), Vec2::new(0.5, 0.0));
            let samples = make_windows(&recs, &WindowConfig::default());
            assert_eq!(samples.len(), (n as usize).saturating_sub(15));
            for s in &samples {
                assert!(s.neighbors.is_empty());
                assert_eq!(s.agent_past[HORIZON - 1], Vec2::zeros());
            }
        }
    }

    #[test]
    fn far_agents_are_not_neighbors() {
        let mut recs = walk(1, 0..16, Vec2::zeros(), Vec2::new(0.5, 0.0));
        recs.extend(walk(2, 0..16, Vec2::new(0.0, 10.0), Vec2::new(0.5, 0.0)));
        recs.sort_by_key(|r| (r.frame_id, r.ped_id));
        let samples = make_windows(&recs, &WindowConfig::default());
        assert_eq!(samples.len(), 2);
        assert!(samples.iter().all(|s| s.neighbors.is_empty()));
    }

    #[test]
    fn gap_breaks_window() {
        let mut recs = walk(1, 0..20, Vec2::zeros(), Vec2::new(0.5, 0.0));
        recs.retain(|r| r.frame_id != 100);
        assert!(make_windows(&recs, &WindowConfig::default()).is_empty());
    }

    #[test]
    fn split_by_name() {
        let names = ["eth", "hotel", "univ", "zara1", "zara2"];
        let datasets: Vec<NamedDataset> = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let recs = walk(i as i64, 0..17, Vec2::zeros(), Vec2::new(0.4, 0.0));
                NamedDataset {
                    name: n.to_string(),
                    samples: make_windows(&recs, &WindowConfig::default()),
                }
            })
            .collect();
        let (train, test) = leave_one_out_split(&datasets, "univ").unwrap();
        assert_eq!(train.len(), 4 * 2);
        assert_eq!(test.len(), 2);
        assert!(test.iter().all(|s| s.agent_id == 2));
        assert!(train.iter().all(|s| s.agent_id != 2));
        assert!(matches!(
            leave_one_out_split(&datasets, "nowhere"),
            Err(Error::UnknownDataset(_))
        ));
    }

    #[test]
    fn synth_is_deterministic() {
        assert_eq!(synth_crowd(9, 6, 40), synth_crowd(9, 6, 40));
        assert_ne!(synth_crowd(9, 6, 40), synth_crowd(10, 6, 40));
    }

    #[test]
    fn synth_single_agent_speed() {
        let recs = synth_crowd(4, 1, 12);
        for w in recs.windows(2) {
            if w[0].ped_id == w[1].ped_id {
                let speed = (w[1].position() - w[0].position()).norm() / 0.4;
                assert!((0.7..=1.7).contains(&speed), "{speed}");
            }
        }
    }

    #[test]
    fn waiting_walker_stands_then_walks() {
        let cfg = SynthConfig {
            wait_prob: 1.0,
            max_wait_frames: 6,
            ..Default::default()
        };
        let recs = synth_crowd_with(2, 1, 20, &cfg);
        let speeds: Vec<f64> = recs
            .windows(2)
            .filter(|w| w[0].ped_id == w[1].ped_id)
            .map(|w| (w[1].position() - w[0].position()).norm() / cfg.frame_dt)
            .collect();
        assert!(speeds[0] < 0.1, "{speeds:?}");
        assert!(speeds.iter().any(|s| *s > 0.7), "{speeds:?}");
    }
}

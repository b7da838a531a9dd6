//! Ground-truthed synthetic scenarios.
//!
//! People walk through a fixed number of "slots" (at most `peak` at once).
//! A slot alternates between a visit of uniform length in
//! `[visit_min, visit_max]` and an idle gap sized so that the long-run
//! occupancy equals `mean_persons`. Each visit picks an identity that is not
//! currently on screen and a new body orientation; orientation also turns
//! occasionally inside a visit. Boxes move linearly and bounce off the frame
//! edges; the matcher never looks at them.
//!
//! Replay turns presences into detections: each presence is dropped with
//! probability `miss_rate`, and each frame gains a Poisson number of
//! one-off clutter detections.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::{keyed_rng, mix64, synth_embedding, IdentityAnchor, NoiseModel, SyntheticProvider};
use crate::types::{BBox, CropRef, CropSource, DetectionEvent, EmbeddingRecord, GtId, Orientation, Payload, FEATURE_DIM};

const TAG_MISS: u64 = 0xc3;
const TAG_CLUTTER: u64 = 0xd4;
const TAG_ANCHOR_SEED: u64 = 0xe5;
const TAG_NOISE_SEED: u64 = 0xf6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_identities: u32,
    pub n_frames: u64,
    pub dim: usize,
    pub peak: u32,
    pub mean_persons: f64,
    pub visit_min: u32,
    pub visit_max: u32,
    /// Per-frame probability that a visible person turns to a new orientation.
    pub turn_prob: f64,
    pub miss_rate: f64,
    /// Expected false detections per frame.
    pub clutter_rate: f64,
    pub sigma: f64,
    pub flip_prob: f64,
    pub frame_width: f64,
    pub frame_height: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_identities: 500,
            n_frames: 7500,
            dim: FEATURE_DIM,
            peak: 30,
            mean_persons: 16.0,
            visit_min: 10,
            visit_max: 100,
            turn_prob: 0.01,
            miss_rate: 0.0,
            clutter_rate: 0.0,
            sigma: 0.05,
            flip_prob: 0.0,
            frame_width: 1920.0,
            frame_height: 1080.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_identities == 0 {
            return bad("n_identities must be at least 1".into());
        }
        if self.n_frames == 0 {
            return bad("n_frames must be at least 1".into());
        }
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.peak == 0 || !(self.mean_persons > 0.0 && self.mean_persons <= self.peak as f64) {
            return bad(format!("need 0 < mean_persons ({}) <= peak ({})", self.mean_persons, self.peak));
        }
        if self.visit_min == 0 || self.visit_min > self.visit_max {
            return bad(format!("need 1 <= visit_min ({}) <= visit_max ({})", self.visit_min, self.visit_max));
        }
        for (name, p) in [("turn_prob", self.turn_prob), ("miss_rate", self.miss_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return bad(format!("clutter_rate must be >= 0, got {}", self.clutter_rate));
        }
        if !(self.frame_width >= 240.0 && self.frame_height >= 480.0) {
            return bad("frame must be at least 240x480 pixels".into());
        }
        NoiseModel { sigma: self.sigma, seed: 0, flip_prob: self.flip_prob }.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Presence {
    pub frame: u64,
    pub bbox: BBox,
    #[serde(rename = "ori")]
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_identities: u32,
    pub n_frames: u64,
    pub dim: usize,
    pub miss_rate: f64,
    pub clutter_rate: f64,
    pub noise: NoiseModel,
    pub anchor_seed: u64,
    pub seed: u64,
    pub frame_width: f64,
    pub frame_height: f64,
    /// Presences of identity `i` at index `i`, ordered by frame.
    pub tracks: Vec<Vec<Presence>>,
}

#[derive(Debug, Clone, Copy)]
struct Visit {
    gt: GtId,
    ends: i64,
    orientation: Orientation,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    vx: f64,
    vy: f64,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Idle { until: i64 },
    Busy(Visit),
}

pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let peak = config.peak as usize;
    let mean_visit = (config.visit_min + config.visit_max) as f64 / 2.0;
    let occupancy = config.mean_persons / config.peak as f64;
    // mean gap g with  L / (L + g) = occupancy
    let mean_gap = mean_visit * (1.0 / occupancy - 1.0);
    let burn_in = (config.visit_max as f64 + 2.0 * mean_gap).ceil() as i64 + 1;

    let draw_gap = |rng: &mut ChaCha8Rng| -> i64 {
        if mean_gap <= 0.0 {
            0
        } else {
            rng.random_range(0.0..=2.0 * mean_gap).round() as i64
        }
    };

    let mut slots: Vec<Slot> = (0..peak).map(|_| Slot::Idle { until: -burn_in + draw_gap(&mut rng) }).collect();
    let mut on_screen = vec![false; config.n_identities as usize];
    let mut last_orientation: Vec<Option<Orientation>> = vec![None; config.n_identities as usize];
    let mut tracks: Vec<Vec<Presence>> = vec![Vec::new(); config.n_identities as usize];
    let (fw, fh) = (config.frame_width, config.frame_height);

    for t in -burn_in..config.n_frames as i64 {
        for slot in slots.iter_mut() {
            if let Slot::Busy(v) = *slot {
                if v.ends <= t {
                    on_screen[v.gt as usize] = false;
                    *slot = Slot::Idle { until: t + draw_gap(&mut rng) };
                }
            }
        }
        for slot in slots.iter_mut() {
            let Slot::Idle { until } = *slot else { continue };
            if until > t {
                continue;
            }
            let free: Vec<GtId> = (0..config.n_identities).filter(|&g| !on_screen[g as usize]).collect();
            if free.is_empty() {
                continue;
            }
            let gt = free[rng.random_range(0..free.len())];
            on_screen[gt as usize] = true;
            let orientation = match last_orientation[gt as usize] {
                None => Orientation::ALL[rng.random_range(0..3)],
                Some(prev) => Orientation::ALL[(prev.index() + rng.random_range(1..3)) % 3],
            };
            let w = rng.random_range(40.0..120.0);
            let h = 2.5 * w;
            let len = rng.random_range(config.visit_min..=config.visit_max) as i64;
            *slot = Slot::Busy(Visit {
                gt,
                ends: t + len,
                orientation,
                x: rng.random_range(0.0..fw - w),
                y: rng.random_range(0.0..fh - h),
                w,
                h,
                vx: rng.random_range(-3.0..3.0),
                vy: rng.random_range(-1.0..1.0),
            });
        }
        for slot in slots.iter_mut() {
            let Slot::Busy(v) = slot else { continue };
            if config.turn_prob > 0.0 && rng.random::<f64>() < config.turn_prob {
                v.orientation = Orientation::ALL[(v.orientation.index() + rng.random_range(1..3)) % 3];
            }
            last_orientation[v.gt as usize] = Some(v.orientation);
            if t >= 0 {
                tracks[v.gt as usize].push(Presence {
                    frame: t as u64,
                    bbox: BBox { x: v.x, y: v.y, w: v.w, h: v.h },
                    orientation: v.orientation,
                });
            }
            v.x += v.vx;
            v.y += v.vy;
            if v.x < 0.0 || v.x > fw - v.w {
                v.vx = -v.vx;
                v.x = v.x.clamp(0.0, fw - v.w);
            }
            if v.y < 0.0 || v.y > fh - v.h {
                v.vy = -v.vy;
                v.y = v.y.clamp(0.0, fh - v.h);
            }
        }
    }

    Ok(Scenario {
        n_identities: config.n_identities,
        n_frames: config.n_frames,
        dim: config.dim,
        miss_rate: config.miss_rate,
        clutter_rate: config.clutter_rate,
        noise: scenario_noise(config, seed),
        anchor_seed: scenario_anchor_seed(seed),
        seed,
        frame_width: fw,
        frame_height: fh,
        tracks,
    })
}

fn scenario_noise(config: &ScenarioConfig, seed: u64) -> NoiseModel {
    NoiseModel { sigma: config.sigma, seed: mix64(seed ^ TAG_NOISE_SEED), flip_prob: config.flip_prob }
}

fn scenario_anchor_seed(seed: u64) -> u64 {
    mix64(seed ^ TAG_ANCHOR_SEED)
}

/// The provider a scenario generated from `(config, seed)` would use. Resolves
/// crop-reference streams without the scenario file.
pub fn provider_for(config: &ScenarioConfig, seed: u64) -> SyntheticProvider {
    SyntheticProvider::new(config.dim, scenario_anchor_seed(seed), scenario_noise(config, seed), config.n_identities)
}

/// Payload attached to replayed detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayMode {
    /// Embeddings are synthesized during replay.
    #[default]
    Embeddings,
    /// Detections carry crop references for a [`SyntheticProvider`].
    CropRefs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub frames: u64,
    pub presences: u64,
    pub mean_persons: f64,
    pub max_persons: u32,
    pub identities_seen: u32,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.tracks.len() != self.n_identities as usize {
            return Err(Error::config(format!(
                "scenario lists {} tracks for {} identities",
                self.tracks.len(),
                self.n_identities
            )));
        }
        for (gt, track) in self.tracks.iter().enumerate() {
            for pair in track.windows(2) {
                if pair[1].frame <= pair[0].frame {
                    return Err(Error::config(format!("identity {gt} appears twice in frame {}", pair[1].frame)));
                }
            }
            if track.last().is_some_and(|p| p.frame >= self.n_frames) {
                return Err(Error::config(format!("identity {gt} appears after the last frame")));
            }
        }
        Ok(())
    }

    pub fn provider(&self) -> SyntheticProvider {
        SyntheticProvider::new(self.dim, self.anchor_seed, self.noise, self.n_identities)
    }

    /// Per-frame presences as `(gt, presence)` ordered by identity.
    pub fn frames(&self) -> Vec<Vec<(GtId, Presence)>> {
        let mut frames = vec![Vec::new(); self.n_frames as usize];
        for (gt, track) in self.tracks.iter().enumerate() {
            for p in track {
                frames[p.frame as usize].push((gt as GtId, *p));
            }
        }
        frames
    }

    pub fn stats(&self) -> SceneStats {
        let frames = self.frames();
        let presences: u64 = frames.iter().map(|f| f.len() as u64).sum();
        SceneStats {
            frames: self.n_frames,
            presences,
            mean_persons: presences as f64 / self.n_frames as f64,
            max_persons: frames.iter().map(|f| f.len() as u32).max().unwrap_or(0),
            identities_seen: self.tracks.iter().filter(|t| !t.is_empty()).count() as u32,
        }
    }

    /// Whether the detector misses identity `gt` in `frame`.
    pub fn is_missed(&self, gt: GtId, frame: u64) -> bool {
        if self.miss_rate <= 0.0 {
            return false;
        }
        keyed_rng(&[TAG_MISS, self.seed, gt as u64, frame]).random::<f64>() < self.miss_rate
    }

    fn clutter(&self, frame: u64) -> Vec<(BBox, Orientation)> {
        if self.clutter_rate <= 0.0 {
            return Vec::new();
        }
        let mut rng = keyed_rng(&[TAG_CLUTTER, self.seed, frame]);
        let count = Poisson::new(self.clutter_rate).map(|d| d.sample(&mut rng) as usize).unwrap_or(0);
        (0..count)
            .map(|_| {
                let w = rng.random_range(30.0..150.0);
                let h = rng.random_range(w..3.0 * w);
                let bbox = BBox {
                    x: rng.random_range(0.0..self.frame_width - w),
                    y: rng.random_range(0.0..(self.frame_height - h).max(1.0)),
                    w,
                    h,
                };
                (bbox, Orientation::ALL[rng.random_range(0..3)])
            })
            .collect()
    }

    /// Lazily replays the scenario as per-frame detection lists.
    pub fn replay(&self, mode: ReplayMode) -> Replay<'_> {
        Replay { scenario: self, frames: self.frames(), provider: self.provider(), mode, next: 0 }
    }
}

/// Iterator over `(frame, detections)`.
pub struct Replay<'a> {
    scenario: &'a Scenario,
    frames: Vec<Vec<(GtId, Presence)>>,
    provider: SyntheticProvider,
    mode: ReplayMode,
    next: u64,
}

impl Replay<'_> {
    pub fn provider(&self) -> &SyntheticProvider {
        &self.provider
    }

    fn payload(&self, source: CropSource, orientation: Orientation, draw: u64) -> Payload {
        let crop = CropRef { source, orientation, draw };
        match self.mode {
            ReplayMode::CropRefs => Payload::Crop(crop),
            ReplayMode::Embeddings => {
                let record = match source {
                    CropSource::Identity(gt) => {
                        synth_embedding(&self.provider.roster()[gt as usize], orientation, self.provider.noise(), draw)
                    }
                    CropSource::Clutter { .. } => {
                        let anchor = IdentityAnchor::generate(source, self.scenario.dim, self.scenario.anchor_seed);
                        synth_embedding(&anchor, orientation, self.provider.noise(), draw)
                    }
                };
                Payload::Embedding(record)
            }
        }
    }
}

impl Iterator for Replay<'_> {
    type Item = (u64, Vec<DetectionEvent>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.scenario.n_frames {
            return None;
        }
        let frame = self.next;
        self.next += 1;
        let mut events = Vec::new();
        for &(gt, p) in &self.frames[frame as usize] {
            if self.scenario.is_missed(gt, frame) {
                continue;
            }
            events.push(DetectionEvent {
                frame,
                det_index: events.len() as u32,
                bbox: p.bbox,
                gt_id: Some(gt),
                payload: self.payload(CropSource::Identity(gt), p.orientation, frame),
            });
        }
        for (index, (bbox, orientation)) in self.scenario.clutter(frame).into_iter().enumerate() {
            events.push(DetectionEvent {
                frame,
                det_index: events.len() as u32,
                bbox,
                gt_id: None,
                payload: self.payload(CropSource::Clutter { frame, index: index as u32 }, orientation, 0),
            });
        }
        Some((frame, events))
    }
}

/// Result of the reference identification walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub correct: u64,
    pub total: u64,
}

impl OracleOutcome {
    pub fn ir(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Reference identification rate computed straight from ground truth.
///
/// Every identity is followed through its own detections with the
/// 4-matches / 2-misses / 5-frame rule (no appearance matching, so tracking is
/// perfect). At each confirmation the observed feature is compared with the
/// true anchors of every identity already enrolled under the observed
/// orientation. The identification counts as correct when the nearest anchor
/// above `tau_t` belongs to the same identity, or when nothing clears
/// `tau_t` and this identity was not yet enrolled under that orientation.
pub fn oracle_ir(scenario: &Scenario, tau_t: f64) -> OracleOutcome {
    const CONFIRM: u32 = 4;
    const DELETE: u32 = 2;

    // (frame, gt, true orientation) of every confirmation
    let mut events: Vec<(u64, GtId, Orientation)> = Vec::new();
    for (gt, track) in scenario.tracks.iter().enumerate() {
        let gt = gt as GtId;
        let detected: Vec<&Presence> = track.iter().filter(|p| !scenario.is_missed(gt, p.frame)).collect();
        let mut open: Option<(u32, u32)> = None;
        let mut last_frame: Option<u64> = None;
        for p in detected {
            if let (Some((cou, mis)), Some(last)) = (open, last_frame) {
                // frames strictly between the previous detection and this one are misses
                let gap = (p.frame - last - 1) as u32;
                if mis + gap >= DELETE {
                    open = None;
                } else {
                    open = Some((cou, mis + gap));
                }
            }
            open = match open {
                None => Some((1, 0)),
                Some((cou, mis)) => Some((cou + 1, mis)),
            };
            if let Some((cou, _)) = open {
                if cou >= CONFIRM {
                    events.push((p.frame, gt, p.orientation));
                    open = None;
                }
            }
            last_frame = Some(p.frame);
        }
    }
    events.sort_unstable_by_key(|&(frame, gt, _)| (frame, gt));

    let anchors: Vec<IdentityAnchor> = (0..scenario.n_identities)
        .map(|gt| IdentityAnchor::generate(CropSource::Identity(gt), scenario.dim, scenario.anchor_seed))
        .collect();
    let mut enrolled: [Vec<GtId>; 3] = Default::default();
    let mut enrolled_set: HashSet<(GtId, Orientation)> = HashSet::new();
    let mut out = OracleOutcome { correct: 0, total: 0 };
    for (frame, gt, true_orientation) in events {
        let record: EmbeddingRecord =
            synth_embedding(&anchors[gt as usize], true_orientation, &scenario.noise, frame);
        let seen_as = record.orientation();
        let mut best: Option<(f64, GtId)> = None;
        for &h in &enrolled[seen_as.index()] {
            let anchor = anchors[h as usize].anchor(seen_as);
            let s: f64 = record.feature().iter().zip(anchor).map(|(a, b)| a * b).sum();
            if s >= tau_t && best.is_none_or(|(bs, bh)| s > bs || (s == bs && h < bh)) {
                best = Some((s, h));
            }
        }
        let correct = match best {
            Some((_, h)) => h == gt,
            None => !enrolled_set.contains(&(gt, seen_as)),
        };
        out.total += 1;
        out.correct += correct as u64;
        if enrolled_set.insert((gt, seen_as)) {
            enrolled[seen_as.index()].push(gt);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n_identities: u32, n_frames: u64) -> ScenarioConfig {
        ScenarioConfig { n_identities, n_frames, dim: 8, ..Default::default() }
    }

    #[test]
    fn single_identity_is_always_visible() {
        let s = generate_scenario(&tiny(1, 5), 3).unwrap();
        let replayed: Vec<_> = s.replay(ReplayMode::Embeddings).collect();
        assert_eq!(replayed.len(), 5);
        assert!(replayed.iter().all(|(_, evs)| evs.len() == 1));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scenario(&tiny(20, 300), 9).unwrap();
        let b = generate_scenario(&tiny(20, 300), 9).unwrap();
        let c = generate_scenario(&tiny(20, 300), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(generate_scenario(&tiny(0, 5), 1), Err(Error::InvalidConfig(_))));
        assert!(generate_scenario(&tiny(3, 0), 1).is_err());
        let c = ScenarioConfig { mean_persons: 40.0, ..tiny(5, 5) };
        assert!(generate_scenario(&c, 1).is_err());
        let c = ScenarioConfig { miss_rate: 1.5, ..tiny(5, 5) };
        assert!(generate_scenario(&c, 1).is_err());
    }

    #[test]
    fn crowd_statistics_match_targets() {
        let s = generate_scenario(&ScenarioConfig { dim: 4, ..Default::default() }, 1).unwrap();
        let st = s.stats();
        assert!((st.mean_persons - 16.0).abs() <= 1.0, "mean {}", st.mean_persons);
        assert!(st.max_persons <= 30);
        s.validate().unwrap();
    }

    #[test]
    fn total_misses_empty_every_frame() {
        let s = generate_scenario(&ScenarioConfig { miss_rate: 1.0, ..tiny(10, 50) }, 2).unwrap();
        assert!(s.replay(ReplayMode::Embeddings).all(|(_, evs)| evs.is_empty()));
    }

    #[test]
    fn clean_replay_matches_presence_counts() {
        let s = generate_scenario(&tiny(40, 200), 4).unwrap();
        let frames = s.frames();
        for (f, evs) in s.replay(ReplayMode::CropRefs) {
            assert_eq!(evs.len(), frames[f as usize].len());
        }
    }

    #[test]
    fn miss_fraction_follows_rate() {
        let s = generate_scenario(&ScenarioConfig { miss_rate: 0.1, ..tiny(200, 800) }, 5).unwrap();
        let presences = s.stats().presences;
        assert!(presences >= 10_000);
        let emitted: u64 = s.replay(ReplayMode::CropRefs).map(|(_, e)| e.len() as u64).sum();
        let dropped = (presences - emitted) as f64 / presences as f64;
        assert!((dropped - 0.1).abs() <= 0.01, "dropped {dropped}");
    }

    #[test]
    fn conservation_with_clutter() {
        let s = generate_scenario(&ScenarioConfig { miss_rate: 0.2, clutter_rate: 1.5, ..tiny(30, 300) }, 6).unwrap();
        let presences = s.stats().presences;
        let misses: u64 = s
            .tracks
            .iter()
            .enumerate()
            .map(|(gt, t)| t.iter().filter(|p| s.is_missed(gt as GtId, p.frame)).count() as u64)
            .sum();
        let clutter: u64 = (0..s.n_frames).map(|f| s.clutter(f).len() as u64).sum();
        let emitted: u64 = s.replay(ReplayMode::CropRefs).map(|(_, e)| e.len() as u64).sum();
        assert_eq!(emitted, presences - misses + clutter);
        let clutter_events = s
            .replay(ReplayMode::CropRefs)
            .flat_map(|(_, e)| e)
            .filter(|e| e.gt_id.is_none())
            .count() as u64;
        assert_eq!(clutter_events, clutter);
    }

    #[test]
    fn replay_is_pure() {
        let s = generate_scenario(&ScenarioConfig { clutter_rate: 0.5, sigma: 0.2, ..tiny(15, 100) }, 8).unwrap();
        let a: Vec<_> = s.replay(ReplayMode::Embeddings).collect();
        let b: Vec<_> = s.replay(ReplayMode::Embeddings).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_is_perfect_without_noise() {
        let s = generate_scenario(&ScenarioConfig { sigma: 0.0, dim: 64, ..tiny(30, 400) }, 1).unwrap();
        let o = oracle_ir(&s, 0.6);
        assert!(o.total > 50);
        assert_eq!(o.ir(), 1.0);
    }

    #[test]
    fn oracle_single_identity_is_perfect() {
        let s = generate_scenario(&ScenarioConfig { sigma: 0.3, dim: 64, ..tiny(1, 300) }, 1).unwrap();
        assert_eq!(oracle_ir(&s, 0.6).ir(), 1.0);
    }
}

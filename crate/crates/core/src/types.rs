//! Domain types shared by every stage of the pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity feature width produced by the extractor.
pub const FEATURE_DIM: usize = 512;

/// Number of orientation classes (front, back, side).
pub const ORIENTATION_COUNT: usize = 3;

/// Norms below this are treated as zero when normalizing.
pub const MIN_NORM: f64 = 1e-12;

/// Largest `|‖v‖ - 1|` accepted as already unit length.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Body orientation of an observed person. Numeric codes are part of every
/// file format and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Orientation {
    Front = 0,
    Back = 1,
    Side = 2,
}

impl Orientation {
    pub const ALL: [Orientation; ORIENTATION_COUNT] =
        [Orientation::Front, Orientation::Back, Orientation::Side];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Argmax over orientation scores; ties go to the lowest index.
    pub fn from_scores(scores: &[f64; ORIENTATION_COUNT]) -> Self {
        let mut best = 0;
        for i in 1..ORIENTATION_COUNT {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        Self::ALL[best]
    }

    pub fn one_hot(self) -> [f64; ORIENTATION_COUNT] {
        let mut scores = [0.0; ORIENTATION_COUNT];
        scores[self.index()] = 1.0;
        scores
    }

    pub fn name(self) -> &'static str {
        match self {
            Orientation::Front => "front",
            Orientation::Back => "back",
            Orientation::Side => "side",
        }
    }
}

impl TryFrom<u8> for Orientation {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, Self::Error> {
        Orientation::from_index(code as usize).ok_or_else(|| format!("invalid orientation code {code}"))
    }
}

impl From<Orientation> for u8 {
    fn from(o: Orientation) -> u8 {
        o as u8
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gallery identity. Allocated monotonically from 0 and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(pub u64);

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Label of a probationary container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContainerLabel(pub u64);

impl fmt::Display for ContainerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Ground-truth identity in synthetic scenarios and annotated streams.
pub type GtId = u32;

/// Returns `v / ‖v‖₂`. Vectors already within `UNIT_TOLERANCE` of unit length
/// are returned unchanged, so normalizing twice is bit-exact.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if !(norm >= MIN_NORM) || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    if (norm - 1.0).abs() <= UNIT_TOLERANCE {
        return Ok(v.to_vec());
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One person observation: the identity feature plus orientation scores.
///
/// The feature is always unit length; construct through [`EmbeddingRecord::new`]
/// or [`EmbeddingRecord::with_orientation`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    feature: Vec<f64>,
    orientation_scores: [f64; ORIENTATION_COUNT],
    orientation: Orientation,
}

impl EmbeddingRecord {
    pub fn new(raw_feature: &[f64], orientation_scores: [f64; ORIENTATION_COUNT]) -> Result<Self> {
        Ok(Self {
            feature: normalize(raw_feature)?,
            orientation: Orientation::from_scores(&orientation_scores),
            orientation_scores,
        })
    }

    /// Trusts that `feature` is already unit length.
    pub(crate) fn from_unit(feature: Vec<f64>, orientation_scores: [f64; ORIENTATION_COUNT]) -> Self {
        Self {
            feature,
            orientation: Orientation::from_scores(&orientation_scores),
            orientation_scores,
        }
    }

    /// Record with one-hot orientation scores.
    pub fn with_orientation(raw_feature: &[f64], orientation: Orientation) -> Result<Self> {
        Self::new(raw_feature, orientation.one_hot())
    }

    pub fn feature(&self) -> &[f64] {
        &self.feature
    }

    pub fn orientation_scores(&self) -> &[f64; ORIENTATION_COUNT] {
        &self.orientation_scores
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn dim(&self) -> usize {
        self.feature.len()
    }

    pub fn into_feature(self) -> Vec<f64> {
        self.feature
    }
}

/// Axis-aligned box in pixels: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::config(format!("bounding box needs finite coordinates and positive size, got [{x}, {y}, {w}, {h}]")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = String;

    fn try_from([x, y, w, h]: [f64; 4]) -> std::result::Result<Self, Self::Error> {
        BBox::new(x, y, w, h).map_err(|e| e.to_string())
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Where the pixels of a synthetic crop come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropSource {
    Identity(GtId),
    /// One-off false detection; keyed by (frame, index within the frame's clutter).
    Clutter { frame: u64, index: u32 },
}

/// Reference to a person crop, resolved into an embedding by a
/// [`FeatureProvider`](crate::provider::FeatureProvider).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropRef {
    pub source: CropSource,
    #[serde(rename = "ori")]
    pub orientation: Orientation,
    pub draw: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Crop(CropRef),
    Embedding(EmbeddingRecord),
    Missing,
}

/// One detector output in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub frame: u64,
    pub det_index: u32,
    pub bbox: BBox,
    pub gt_id: Option<GtId>,
    pub payload: Payload,
}

/// Feature-extraction backbone, ordered from deepest to shallowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Backbone {
    #[serde(rename = "RN50")]
    Rn50,
    #[serde(rename = "RN34")]
    Rn34,
    #[serde(rename = "RN18")]
    Rn18,
}

impl Backbone {
    pub const ALL: [Backbone; 3] = [Backbone::Rn18, Backbone::Rn34, Backbone::Rn50];

    pub fn name(self) -> &'static str {
        match self {
            Backbone::Rn18 => "RN18",
            Backbone::Rn34 => "RN34",
            Backbone::Rn50 => "RN50",
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Throughput of one backbone in persons per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub backbone: Backbone,
    pub pps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_score: Option<f64>,
}

/// One profile per backbone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    profiles: [LatencyProfile; 3],
}

impl ProfileSet {
    /// Measured throughputs of the three non-local + BN-feature backbones.
    pub fn reference() -> Self {
        Self {
            profiles: [
                LatencyProfile { backbone: Backbone::Rn18, pps: 709.321, map_score: Some(91.8) },
                LatencyProfile { backbone: Backbone::Rn34, pps: 637.340, map_score: Some(93.2) },
                LatencyProfile { backbone: Backbone::Rn50, pps: 605.556, map_score: Some(93.2) },
            ],
        }
    }

    /// Builds a set from exactly one profile per backbone. Ordering of the
    /// throughputs is checked by threshold derivation, not here.
    pub fn from_profiles(profiles: &[LatencyProfile]) -> Result<Self> {
        let mut slots: [Option<LatencyProfile>; 3] = [None; 3];
        for p in profiles {
            if !(p.pps > 0.0) || !p.pps.is_finite() {
                return Err(Error::InconsistentProfiles(format!(
                    "{} has non-positive pps {}",
                    p.backbone, p.pps
                )));
            }
            let slot = &mut slots[Self::slot(p.backbone)];
            if slot.is_some() {
                return Err(Error::InconsistentProfiles(format!("duplicate profile for {}", p.backbone)));
            }
            *slot = Some(*p);
        }
        let mut out = Self::reference().profiles;
        for (i, slot) in slots.into_iter().enumerate() {
            out[i] = slot.ok_or_else(|| {
                Error::InconsistentProfiles(format!("missing profile for {}", Backbone::ALL[i]))
            })?;
        }
        Ok(Self { profiles: out })
    }

    pub fn with_pps(rn18: f64, rn34: f64, rn50: f64) -> Result<Self> {
        Self::from_profiles(&[
            LatencyProfile { backbone: Backbone::Rn18, pps: rn18, map_score: None },
            LatencyProfile { backbone: Backbone::Rn34, pps: rn34, map_score: None },
            LatencyProfile { backbone: Backbone::Rn50, pps: rn50, map_score: None },
        ])
    }

    fn slot(backbone: Backbone) -> usize {
        match backbone {
            Backbone::Rn18 => 0,
            Backbone::Rn34 => 1,
            Backbone::Rn50 => 2,
        }
    }

    pub fn get(&self, backbone: Backbone) -> &LatencyProfile {
        &self.profiles[Self::slot(backbone)]
    }

    pub fn pps(&self, backbone: Backbone) -> f64 {
        self.get(backbone).pps
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatencyProfile> {
        self.profiles.iter()
    }
}

impl Default for ProfileSet {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContainerState {
    Probation,
    Confirmed,
    Deleted,
}

/// Probationary tracklet: accumulates matches and misses until it is
/// confirmed or deleted.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub label: ContainerLabel,
    pub cou: u32,
    pub mis: u32,
    pub fea: Vec<f64>,
    pub ori: Orientation,
    pub created_frame: u64,
    pub state: ContainerState,
}

impl Container {
    /// Opens a container from an unmatched detection. The creation frame
    /// counts as the first match.
    pub fn spawn(label: ContainerLabel, record: &EmbeddingRecord, frame: u64) -> Self {
        Self {
            label,
            cou: 1,
            mis: 0,
            fea: record.feature().to_vec(),
            ori: record.orientation(),
            created_frame: frame,
            state: ContainerState::Probation,
        }
    }

    pub fn is_probation(&self) -> bool {
        self.state == ContainerState::Probation
    }
}

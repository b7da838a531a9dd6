//! Feature extraction layer.
//!
//! Real deployments plug a re-id network in behind [`FeatureProvider`]. This
//! crate ships two providers: a synthetic one that draws noisy observations
//! around per-identity anchors, and a replay provider that only accepts
//! precomputed embeddings. Extraction cost is simulated from the backbone's
//! throughput so frame-rate experiments do not depend on the host machine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    Backbone, CropRef, CropSource, DetectionEvent, EmbeddingRecord, GtId, Orientation, Payload,
    ProfileSet, ORIENTATION_COUNT,
};

/// SplitMix64 finalizer; used to derive independent stream seeds from keys.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn keyed_rng(parts: &[u64]) -> ChaCha8Rng {
    let seed = parts.iter().fold(0x5851_f42d_4c95_7f2d_u64, |acc, &p| mix64(acc ^ mix64(p)));
    ChaCha8Rng::seed_from_u64(seed)
}

const TAG_ANCHOR: u64 = 0xa1;
const TAG_NOISE: u64 = 0xb2;

fn source_key(source: CropSource) -> [u64; 3] {
    match source {
        CropSource::Identity(id) => [0, id as u64, 0],
        CropSource::Clutter { frame, index } => [1, frame, index as u64],
    }
}

/// Three unit anchors (one per orientation) for one synthetic person.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityAnchor {
    pub source: CropSource,
    pub anchors: [Vec<f64>; ORIENTATION_COUNT],
}

impl IdentityAnchor {
    /// Draws each anchor uniformly on the unit sphere. Anchors depend only
    /// on `(anchor_seed, source, orientation)`.
    pub fn generate(source: CropSource, dim: usize, anchor_seed: u64) -> Self {
        let key = source_key(source);
        let anchors = Orientation::ALL.map(|o| {
            let mut rng = keyed_rng(&[TAG_ANCHOR, anchor_seed, key[0], key[1], key[2], o.index() as u64]);
            loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                if let Ok(unit) = crate::types::normalize(&v) {
                    break unit;
                }
            }
        });
        Self { source, anchors }
    }

    pub fn gt_id(&self) -> Option<GtId> {
        match self.source {
            CropSource::Identity(id) => Some(id),
            CropSource::Clutter { .. } => None,
        }
    }

    pub fn anchor(&self, orientation: Orientation) -> &[f64] {
        &self.anchors[orientation.index()]
    }

    pub fn dim(&self) -> usize {
        self.anchors[0].len()
    }
}

/// Observation noise.
///
/// `sigma` is the expected norm of the additive noise vector: each of the D
/// feature components receives Gaussian noise with standard deviation
/// `sigma / sqrt(D)`, so the similarity spread does not depend on D.
/// Orientation scores get `sigma / sqrt(3)` per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
    /// Probability that the reported orientation is replaced by a different
    /// one (orientation classifier error).
    #[serde(default)]
    pub flip_prob: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self { sigma, seed, flip_prob: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::config(format!("flip_prob must lie in [0, 1], got {}", self.flip_prob)));
        }
        Ok(())
    }
}

/// Draws one observation of `anchor` seen from `orientation`.
///
/// The noise stream is keyed by `(noise.seed, source, orientation, draw_index)`,
/// so draws are reproducible regardless of call order.
pub fn synth_embedding(
    anchor: &IdentityAnchor,
    orientation: Orientation,
    noise: &NoiseModel,
    draw_index: u64,
) -> EmbeddingRecord {
    let key = source_key(anchor.source);
    let mut rng = keyed_rng(&[
        TAG_NOISE,
        noise.seed,
        key[0],
        key[1],
        key[2],
        orientation.index() as u64,
        draw_index,
    ]);
    let base = anchor.anchor(orientation);

    let reported = if noise.flip_prob > 0.0 && rng.random::<f64>() < noise.flip_prob {
        let shift = rng.random_range(1..ORIENTATION_COUNT);
        Orientation::ALL[(orientation.index() + shift) % ORIENTATION_COUNT]
    } else {
        orientation
    };

    if noise.sigma == 0.0 {
        return EmbeddingRecord::from_unit(base.to_vec(), reported.one_hot());
    }

    let feature_std = noise.sigma / (base.len() as f64).sqrt();
    let noisy: Vec<f64> = base
        .iter()
        .map(|&x| x + feature_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let score_std = noise.sigma / (ORIENTATION_COUNT as f64).sqrt();
    let mut scores = reported.one_hot();
    for s in &mut scores {
        *s += score_std * rng.sample::<f64, _>(StandardNormal);
    }
    match EmbeddingRecord::new(&noisy, scores) {
        Ok(r) => r,
        // Only reachable when the noise cancels the anchor exactly.
        Err(_) => EmbeddingRecord::from_unit(base.to_vec(), scores),
    }
}

pub fn classify_orientation(record: &EmbeddingRecord) -> Orientation {
    Orientation::from_scores(record.orientation_scores())
}

/// Resolves crop references into embeddings.
pub trait FeatureProvider {
    fn embed(&self, crop: &CropRef) -> Result<EmbeddingRecord, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// The provider cannot turn this crop into pixels or features.
    Unresolvable,
    /// Requested identity is outside the provider's roster.
    UnknownIdentity(GtId),
}

/// Anchor-plus-noise stand-in for the extraction network.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    dim: usize,
    anchor_seed: u64,
    noise: NoiseModel,
    roster: Vec<IdentityAnchor>,
}

impl SyntheticProvider {
    pub fn new(dim: usize, anchor_seed: u64, noise: NoiseModel, n_identities: u32) -> Self {
        let roster = (0..n_identities)
            .map(|id| IdentityAnchor::generate(CropSource::Identity(id), dim, anchor_seed))
            .collect();
        Self { dim, anchor_seed, noise, roster }
    }

    pub fn anchor(&self, id: GtId) -> Option<&IdentityAnchor> {
        self.roster.get(id as usize)
    }

    pub fn roster(&self) -> &[IdentityAnchor] {
        &self.roster
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl FeatureProvider for SyntheticProvider {
    fn embed(&self, crop: &CropRef) -> Result<EmbeddingRecord, ProviderError> {
        match crop.source {
            CropSource::Identity(id) => {
                let anchor = self.anchor(id).ok_or(ProviderError::UnknownIdentity(id))?;
                Ok(synth_embedding(anchor, crop.orientation, &self.noise, crop.draw))
            }
            CropSource::Clutter { .. } => {
                let anchor = IdentityAnchor::generate(crop.source, self.dim, self.anchor_seed);
                Ok(synth_embedding(&anchor, crop.orientation, &self.noise, crop.draw))
            }
        }
    }
}

/// Accepts only events that already carry embeddings.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReplayProvider;

impl FeatureProvider for ReplayProvider {
    fn embed(&self, _crop: &CropRef) -> Result<EmbeddingRecord, ProviderError> {
        Err(ProviderError::Unresolvable)
    }
}

/// Simulated time to embed `count` persons on `backbone`, in seconds.
pub fn simulated_latency(count: usize, backbone: Backbone, profiles: &ProfileSet) -> f64 {
    count as f64 / profiles.pps(backbone)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub records: Vec<EmbeddingRecord>,
    /// Simulated seconds.
    pub elapsed: f64,
}

/// Embeds every event, in input order.
pub fn extract(
    events: &[DetectionEvent],
    backbone: Backbone,
    profiles: &ProfileSet,
    provider: &dyn FeatureProvider,
) -> Result<Extraction> {
    let records = events
        .iter()
        .map(|ev| {
            let missing = || Error::MissingPayload { frame: ev.frame, det_index: ev.det_index };
            match &ev.payload {
                Payload::Embedding(r) => Ok(r.clone()),
                Payload::Crop(crop) => provider.embed(crop).map_err(|e| match e {
                    ProviderError::Unresolvable => missing(),
                    ProviderError::UnknownIdentity(id) => {
                        Error::config(format!("crop references identity {id} outside the provider roster"))
                    }
                }),
                Payload::Missing => Err(missing()),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Extraction { elapsed: simulated_latency(records.len(), backbone, profiles), records })
}

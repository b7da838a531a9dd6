use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize, Container, ContainerState, EmbeddingRecord};

/// Confirmation rule for probationary containers: confirm after `confirm`
/// matches, delete after `delete` misses, both within `window` frames of
/// creation (the creation frame counts as a match).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbationRule {
    pub window: u32,
    pub confirm: u32,
    pub delete: u32,
}

impl Default for ProbationRule {
    fn default() -> Self {
        Self { window: 5, confirm: 4, delete: 2 }
    }
}

impl ProbationRule {
    pub fn validate(&self) -> Result<()> {
        if self.confirm == 0 || self.delete == 0 {
            return Err(Error::config("confirm and delete counts must be positive"));
        }
        if self.confirm > self.window || self.delete > self.window {
            return Err(Error::config(format!(
                "confirm ({}) and delete ({}) must not exceed the window ({})",
                self.confirm, self.delete, self.window
            )));
        }
        Ok(())
    }

    /// State implied by the counters.
    pub fn resolve(&self, cou: u32, mis: u32) -> ContainerState {
        if cou >= self.confirm {
            ContainerState::Confirmed
        } else if mis >= self.delete || cou + mis >= self.window {
            // The last clause only fires for rules where neither count can be
            // reached inside the window; the 4/2/5 rule always resolves first.
            ContainerState::Deleted
        } else {
            ContainerState::Probation
        }
    }
}

/// How a container's stored feature follows new matches.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum FeatureUpdate {
    /// Newest matched feature replaces the stored one.
    #[default]
    Replace,
    /// `normalize(alpha * stored + (1 - alpha) * newest)`.
    Ema { alpha: f64 },
}

/// Advances a probationary container by one frame.
///
/// `observation` is the matched record, or `None` for a miss.
pub fn step_container(
    container: &Container,
    observation: Option<&EmbeddingRecord>,
    rule: &ProbationRule,
    update: FeatureUpdate,
) -> Result<Container> {
    if !container.is_probation() {
        return Err(Error::InvalidState(container.label));
    }
    let mut next = container.clone();
    match observation {
        Some(record) => {
            next.cou += 1;
            next.fea = match update {
                FeatureUpdate::Replace => record.feature().to_vec(),
                FeatureUpdate::Ema { alpha } => {
                    let blended: Vec<f64> = container
                        .fea
                        .iter()
                        .zip(record.feature())
                        .map(|(old, new)| alpha * old + (1.0 - alpha) * new)
                        .collect();
                    normalize(&blended).unwrap_or_else(|_| record.feature().to_vec())
                }
            };
            next.ori = record.orientation();
        }
        None => next.mis += 1,
    }
    next.state = rule.resolve(next.cou, next.mis);
    Ok(next)
}

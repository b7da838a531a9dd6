//! Frame-by-frame driver of the matching path.
//!
//! For every frame the engine
//! 1. picks a backbone from the detection count,
//! 2. extracts one embedding per detection,
//! 3. associates embeddings with the probationary containers,
//! 4. steps every container (an unmatched container takes a miss),
//! 5. opens a container for every unmatched detection,
//! 6. resolves newly confirmed containers against the gallery: a
//!    same-orientation hit has its slot replaced, a miss allocates a new
//!    identity,
//! 7. drops confirmed and deleted containers.
//!
//! The engine is single-writer: one caller owns it and feeds frames in
//! strictly increasing order.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{match_to_containers, Assignment, Association, FeatureUpdate, PooledTable, Probe, ProbationRule};
use crate::error::{Error, Result};
use crate::provider::{extract, FeatureProvider};
use crate::scheduler::{select_backbone, ThresholdTable};
use crate::types::{Backbone, Container, ContainerLabel, ContainerState, DetectionEvent, Orientation, PersonId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub dim: usize,
    /// Minimum similarity for a detection to continue a container.
    pub tau_c: f64,
    /// Minimum similarity for a confirmed container to resolve to a known identity.
    pub tau_t: f64,
    pub thresholds: ThresholdTable,
    pub rule: ProbationRule,
    pub association: Association,
    pub feature_update: FeatureUpdate,
    pub capacity: Option<usize>,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("feature dimension must be positive"));
        }
        for (name, tau) in [("tau_c", self.tau_c), ("tau_t", self.tau_t)] {
            if !(-1.0..=1.0).contains(&tau) {
                return Err(Error::config(format!("{name} must lie in [-1, 1], got {tau}")));
            }
        }
        if let FeatureUpdate::Ema { alpha } = self.feature_update {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::config(format!("ema alpha must lie in [0, 1], got {alpha}")));
            }
        }
        self.rule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confirmation {
    pub label: ContainerLabel,
    pub person: PersonId,
    pub was_new_id: bool,
    pub orientation: Orientation,
    /// Gallery similarity of the resolved identity, absent for new identities.
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: u64,
    pub assignments: Assignment,
    /// Containers opened this frame, as `(det_index, label)`.
    pub spawned: Vec<(u32, ContainerLabel)>,
    pub confirmations: Vec<Confirmation>,
    pub deletions: Vec<ContainerLabel>,
    pub backbone_used: Backbone,
    /// Simulated extraction time in seconds.
    pub simulated_elapsed: f64,
    /// Extraction alone overran the frame budget.
    pub over_budget: bool,
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    table: PooledTable,
    containers: Vec<Container>,
    next_label: u64,
    last_frame: Option<u64>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        let table = PooledTable::new(config.dim, config.capacity);
        Self::with_table(config, table)
    }

    /// Starts from an existing gallery, e.g. a loaded snapshot.
    pub fn with_table(config: EngineConfig, table: PooledTable) -> Result<Self> {
        config.validate()?;
        if table.dim() != config.dim {
            return Err(Error::DimensionMismatch { expected: config.dim, got: table.dim() });
        }
        Ok(Self { config, table, containers: Vec::new(), next_label: 0, last_frame: None })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn table(&self) -> &PooledTable {
        &self.table
    }

    pub fn into_table(self) -> PooledTable {
        self.table
    }

    /// Active probationary containers, ordered by label.
    pub fn containers(&self) -> &[Container] {
        &self.containers
    }

    pub fn process_frame(
        &mut self,
        frame: u64,
        events: &[DetectionEvent],
        provider: &dyn FeatureProvider,
    ) -> Result<FrameReport> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { last, got: frame });
            }
        }
        let mut seen = HashSet::with_capacity(events.len());
        for ev in events {
            if ev.frame != frame {
                return Err(Error::OutOfOrderFrame { last: frame, got: ev.frame });
            }
            if !seen.insert(ev.det_index) {
                return Err(Error::config(format!("duplicate detection index {} in frame {frame}", ev.det_index)));
            }
        }

        let thresholds = &self.config.thresholds;
        let backbone = select_backbone(events.len() as u32, thresholds);
        let extraction = extract(events, backbone, &thresholds.profiles, provider)?;
        for r in &extraction.records {
            if r.dim() != self.config.dim {
                return Err(Error::DimensionMismatch { expected: self.config.dim, got: r.dim() });
            }
        }
        // Validation is complete; nothing below fails except gallery allocation.
        self.last_frame = Some(frame);

        let probes: Vec<Probe<'_>> = events
            .iter()
            .zip(&extraction.records)
            .map(|(ev, r)| Probe { det_index: ev.det_index, feature: r.feature() })
            .collect();
        let assignment = match_to_containers(&probes, &self.containers, self.config.tau_c, self.config.association);

        let record_of = |det_index: u32| {
            let pos = events.iter().position(|e| e.det_index == det_index).expect("assigned detection exists");
            &extraction.records[pos]
        };

        let rule = self.config.rule;
        let update = self.config.feature_update;
        let mut pair_iter = assignment.pairs.iter().map(|&(d, l)| (l, d)).collect::<Vec<_>>();
        pair_iter.sort_unstable();
        for c in &mut self.containers {
            let matched = pair_iter
                .binary_search_by_key(&c.label, |&(l, _)| l)
                .ok()
                .map(|i| record_of(pair_iter[i].1));
            *c = super::step_container(c, matched, &rule, update)?;
        }

        let mut spawned = Vec::with_capacity(assignment.unmatched_detections.len());
        for &det in &assignment.unmatched_detections {
            let label = ContainerLabel(self.next_label);
            self.next_label += 1;
            let mut c = Container::spawn(label, record_of(det), frame);
            c.state = rule.resolve(c.cou, c.mis);
            self.containers.push(c);
            spawned.push((det, label));
        }

        let confirmed: Vec<&Container> =
            self.containers.iter().filter(|c| c.state == ContainerState::Confirmed).collect();
        let queries: Vec<(&[f64], Orientation)> = confirmed.iter().map(|c| (c.fea.as_slice(), c.ori)).collect();
        let resolved = self.table.resolve_sequence(&queries, self.config.tau_t)?;
        let confirmations: Vec<Confirmation> = confirmed
            .iter()
            .zip(resolved)
            .map(|(c, r)| Confirmation {
                label: c.label,
                person: r.id,
                was_new_id: r.similarity.is_none(),
                orientation: c.ori,
                similarity: r.similarity,
            })
            .collect();
        let deletions: Vec<ContainerLabel> =
            self.containers.iter().filter(|c| c.state == ContainerState::Deleted).map(|c| c.label).collect();
        self.containers.retain(Container::is_probation);

        Ok(FrameReport {
            frame,
            assignments: assignment,
            spawned,
            confirmations,
            deletions,
            backbone_used: backbone,
            over_budget: extraction.elapsed > thresholds.frame_budget(),
            simulated_elapsed: extraction.elapsed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ReplayProvider;
    use crate::scheduler::derive_thresholds;
    use crate::types::{BBox, EmbeddingRecord, Payload, ProfileSet};

    fn config(dim: usize) -> EngineConfig {
        EngineConfig {
            dim,
            tau_c: 0.7,
            tau_t: 0.6,
            thresholds: derive_thresholds(&ProfileSet::reference(), 25.0).unwrap(),
            rule: ProbationRule::default(),
            association: Association::Greedy,
            feature_update: FeatureUpdate::Replace,
            capacity: None,
        }
    }

    fn event(frame: u64, det_index: u32, feature: &[f64], o: Orientation) -> DetectionEvent {
        DetectionEvent {
            frame,
            det_index,
            bbox: BBox::new(0.0, 0.0, 10.0, 20.0).unwrap(),
            gt_id: None,
            payload: Payload::Embedding(EmbeddingRecord::with_orientation(feature, o).unwrap()),
        }
    }

    #[test]
    fn empty_frame_is_a_miss_for_everyone() {
        let mut e = Engine::new(config(2)).unwrap();
        e.process_frame(0, &[event(0, 0, &[1.0, 0.0], Orientation::Front)], &ReplayProvider).unwrap();
        {
            let c = &mut e.containers[0];
            c.cou = 3;
            c.mis = 1;
        }
        let r = e.process_frame(1, &[], &ReplayProvider).unwrap();
        assert_eq!(r.deletions, vec![ContainerLabel(0)]);
        assert!(e.containers().is_empty());
    }

    #[test]
    fn four_of_five_confirms_new_identity() {
        let mut e = Engine::new(config(2)).unwrap();
        let f = [0.0, 1.0];
        for frame in 0..3 {
            let r = e.process_frame(frame, &[event(frame, 0, &f, Orientation::Side)], &ReplayProvider).unwrap();
            assert!(r.confirmations.is_empty());
        }
        let r = e.process_frame(3, &[event(3, 0, &f, Orientation::Side)], &ReplayProvider).unwrap();
        assert_eq!(r.confirmations.len(), 1);
        assert!(r.confirmations[0].was_new_id);
        assert_eq!(r.confirmations[0].person, PersonId(0));
        assert!(e.containers().is_empty());
        assert_eq!(e.table().slot(PersonId(0), Orientation::Side).unwrap(), &f[..]);
        // the fifth sighting opens a fresh container
        let r = e.process_frame(4, &[event(4, 0, &f, Orientation::Side)], &ReplayProvider).unwrap();
        assert_eq!(r.spawned, vec![(0, ContainerLabel(1))]);
    }

    #[test]
    fn confirmation_resolves_to_seeded_identity() {
        let mut table = PooledTable::new(2, None);
        table.init_identity(&[1.0, 0.0], Orientation::Front).unwrap();
        table.init_identity(&[0.0, 1.0], Orientation::Back).unwrap();
        let mut e = Engine::with_table(config(2), table).unwrap();
        let mut last = None;
        for frame in 0..4 {
            last = Some(e.process_frame(frame, &[event(frame, 0, &[0.0, 1.0], Orientation::Back)], &ReplayProvider).unwrap());
        }
        let c = &last.unwrap().confirmations[0];
        assert_eq!((c.person, c.was_new_id, c.similarity), (PersonId(1), false, Some(1.0)));
        assert_eq!(e.table().len(), 2);
    }

    #[test]
    fn frames_must_increase() {
        let mut e = Engine::new(config(2)).unwrap();
        e.process_frame(5, &[], &ReplayProvider).unwrap();
        assert!(matches!(e.process_frame(5, &[], &ReplayProvider), Err(Error::OutOfOrderFrame { last: 5, got: 5 })));
        assert!(matches!(e.process_frame(3, &[], &ReplayProvider), Err(Error::OutOfOrderFrame { .. })));
        let ev = event(7, 0, &[1.0, 0.0], Orientation::Front);
        assert!(e.process_frame(6, &[ev], &ReplayProvider).is_err());
    }

    #[test]
    fn rejected_frame_leaves_state_untouched() {
        let mut e = Engine::new(config(2)).unwrap();
        let bad = DetectionEvent { payload: Payload::Missing, ..event(0, 0, &[1.0, 0.0], Orientation::Front) };
        assert!(matches!(e.process_frame(0, &[bad], &ReplayProvider), Err(Error::MissingPayload { .. })));
        e.process_frame(0, &[], &ReplayProvider).unwrap();
        let wrong_dim = event(1, 0, &[1.0, 0.0, 0.0], Orientation::Front);
        assert!(matches!(e.process_frame(1, &[wrong_dim], &ReplayProvider), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn crowded_frame_is_over_budget() {
        let mut e = Engine::new(config(2)).unwrap();
        let evs: Vec<_> = (0..30).map(|i| event(0, i, &[1.0, 0.0], Orientation::Front)).collect();
        let r = e.process_frame(0, &evs, &ReplayProvider).unwrap();
        assert_eq!(r.backbone_used, Backbone::Rn18);
        assert!(r.over_budget);
        let mut e = Engine::new(config(2)).unwrap();
        let r = e.process_frame(0, &evs[..28], &ReplayProvider).unwrap();
        assert!(!r.over_budget);
    }
}

//! Appearance-only association, container confirmation and the identity
//! gallery.

mod container;
mod engine;
mod similarity;
mod table;

use serde::{Deserialize, Serialize};

pub use container::{step_container, FeatureUpdate, ProbationRule};
pub use engine::{Confirmation, Engine, EngineConfig, FrameReport};
pub use similarity::{cosine_similarity, dot, greedy_assign, optimal_assign, Association, SimilarityMatrix};
pub use table::{PooledTable, Resolution, TableMatch};

use crate::types::{Container, ContainerLabel};

/// Outcome of pairing one frame's detections with the active containers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(det_index, container)` sorted by detection index.
    pub pairs: Vec<(u32, ContainerLabel)>,
    pub unmatched_detections: Vec<u32>,
    pub unmatched_containers: Vec<ContainerLabel>,
}

/// One detection's feature, keyed by its within-frame index.
#[derive(Debug, Clone, Copy)]
pub struct Probe<'a> {
    pub det_index: u32,
    pub feature: &'a [f64],
}

/// Pairs detections with probationary containers one-to-one. Only pairs with
/// similarity `>= tau_c` are admissible.
pub fn match_to_containers(
    probes: &[Probe<'_>],
    containers: &[Container],
    tau_c: f64,
    method: Association,
) -> Assignment {
    let rows: Vec<&[f64]> = probes.iter().map(|p| p.feature).collect();
    let cols: Vec<&[f64]> = containers.iter().map(|c| c.fea.as_slice()).collect();
    let matrix = SimilarityMatrix::from_features(&rows, &cols);
    let pairs = match method {
        Association::Greedy => {
            let row_keys: Vec<u64> = probes.iter().map(|p| p.det_index as u64).collect();
            let col_keys: Vec<u64> = containers.iter().map(|c| c.label.0).collect();
            greedy_assign(&matrix, tau_c, &row_keys, &col_keys)
        }
        Association::Optimal => optimal_assign(&matrix, tau_c),
    };

    let mut det_used = vec![false; probes.len()];
    let mut con_used = vec![false; containers.len()];
    let mut out = Assignment::default();
    for (r, c) in pairs {
        det_used[r] = true;
        con_used[c] = true;
        out.pairs.push((probes[r].det_index, containers[c].label));
    }
    out.pairs.sort_unstable();
    out.unmatched_detections = probes
        .iter()
        .zip(&det_used)
        .filter(|(_, used)| !**used)
        .map(|(p, _)| p.det_index)
        .collect();
    out.unmatched_detections.sort_unstable();
    out.unmatched_containers = containers
        .iter()
        .zip(&con_used)
        .filter(|(_, used)| !**used)
        .map(|(c, _)| c.label)
        .collect();
    out.unmatched_containers.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{EmbeddingRecord, Orientation};

    fn container(label: u64, v: &[f64]) -> Container {
        Container::spawn(ContainerLabel(label), &EmbeddingRecord::with_orientation(v, Orientation::Front).unwrap(), 0)
    }

    #[test]
    fn identical_feature_matches() {
        let c = [container(0, &[1.0, 0.0])];
        let a = match_to_containers(&[Probe { det_index: 3, feature: &[1.0, 0.0] }], &c, 0.7, Association::Greedy);
        assert_eq!(a.pairs, vec![(3, ContainerLabel(0))]);
        assert!(a.unmatched_detections.is_empty() && a.unmatched_containers.is_empty());
    }

    #[test]
    fn orthogonal_feature_does_not_match() {
        let c = [container(0, &[1.0, 0.0])];
        for method in [Association::Greedy, Association::Optimal] {
            let a = match_to_containers(&[Probe { det_index: 0, feature: &[0.0, 1.0] }], &c, 0.7, method);
            assert!(a.pairs.is_empty());
            assert_eq!(a.unmatched_detections, vec![0]);
            assert_eq!(a.unmatched_containers, vec![ContainerLabel(0)]);
        }
    }

    #[test]
    fn empty_inputs() {
        let a = match_to_containers(&[], &[container(4, &[1.0])], 0.7, Association::Greedy);
        assert_eq!(a.unmatched_containers, vec![ContainerLabel(4)]);
        let a = match_to_containers(&[Probe { det_index: 1, feature: &[1.0] }], &[], 0.7, Association::Greedy);
        assert_eq!(a.unmatched_detections, vec![1]);
    }
}

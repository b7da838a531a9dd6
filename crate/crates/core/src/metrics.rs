//! Identification rate, frame-rate accounting and detection rates.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::FrameReport;
use crate::types::{BBox, ContainerLabel, DetectionEvent, GtId, Orientation, PersonId};

/// `n_cor / n_all`.
pub fn identification_rate(n_cor: u64, n_all: u64) -> Result<f64> {
    if n_all == 0 {
        return Err(Error::EmptyDenominator);
    }
    if n_cor > n_all {
        return Err(Error::config(format!("{n_cor} correct identifications out of {n_all}")));
    }
    Ok(n_cor as f64 / n_all as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    pub frames: usize,
    /// Frame count over total duration.
    pub mean_fps: f64,
    /// Median per-frame duration in milliseconds.
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// Frame rate of the slowest frame.
    pub min_fps: f64,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Summarises per-frame durations given in seconds. `None` for no frames.
pub fn fps_report(durations: &[f64]) -> Option<FpsReport> {
    if durations.is_empty() {
        return None;
    }
    let mut sorted = durations.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    let slowest = *sorted.last().unwrap();
    Some(FpsReport {
        frames: durations.len(),
        mean_fps: durations.len() as f64 / total,
        p50_ms: percentile(&sorted, 0.50) * 1e3,
        p95_ms: percentile(&sorted, 0.95) * 1e3,
        min_fps: 1.0 / slowest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    /// Matched ground truth / total ground truth.
    pub pdr: f64,
    /// Unmatched ground truth / total ground truth.
    pub mdr: f64,
    pub matched: u64,
    pub ground_truth: u64,
    pub predicted: u64,
}

/// Per-frame greedy IoU matching of predicted boxes to ground truth.
pub fn detection_rates(predicted: &[Vec<BBox>], ground_truth: &[Vec<BBox>], iou_threshold: f64) -> Result<DetectionRates> {
    if predicted.len() != ground_truth.len() {
        return Err(Error::FrameMismatch { predicted: predicted.len(), ground_truth: ground_truth.len() });
    }
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::config(format!("IoU threshold must lie in (0, 1), got {iou_threshold}")));
    }
    let (mut matched, mut total, mut n_pred) = (0u64, 0u64, 0u64);
    for (pred, gt) in predicted.iter().zip(ground_truth) {
        total += gt.len() as u64;
        n_pred += pred.len() as u64;
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (gi, g) in gt.iter().enumerate() {
            for (pi, p) in pred.iter().enumerate() {
                let iou = g.iou(p);
                if iou >= iou_threshold {
                    pairs.push((iou, gi, pi));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut gt_used = vec![false; gt.len()];
        let mut pred_used = vec![false; pred.len()];
        for (_, gi, pi) in pairs {
            if !gt_used[gi] && !pred_used[pi] {
                gt_used[gi] = true;
                pred_used[pi] = true;
                matched += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyDenominator);
    }
    Ok(DetectionRates {
        pdr: matched as f64 / total as f64,
        mdr: (total - matched) as f64 / total as f64,
        matched,
        ground_truth: total,
        predicted: n_pred,
    })
}

/// Scores confirmations against ground truth.
///
/// A container's identity is the majority ground-truth label of the
/// detections it absorbed (first seen wins ties; clutter counts as `None`).
/// A gallery identity is owned by the ground-truth identity whose
/// confirmation created it. A confirmation is correct when
/// - it resolved to an identity owned by the container's ground truth, or
/// - it created a new identity and that ground truth had no identity holding
///   a slot for the confirmed orientation yet.
///
/// Confirmations of clutter-dominated containers are always wrong.
#[derive(Debug, Clone, Default)]
pub struct IdentityScorer {
    votes: HashMap<ContainerLabel, Vec<Option<GtId>>>,
    owner: HashMap<PersonId, GtId>,
    enrolled: HashSet<(GtId, Orientation)>,
    pub n_cor: u64,
    pub n_all: u64,
    /// Whether any event carried a ground-truth label.
    pub annotated: bool,
}

impl IdentityScorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, events: &[DetectionEvent], report: &FrameReport) {
        let gt_of = |det: u32| events.iter().find(|e| e.det_index == det).and_then(|e| e.gt_id);
        self.annotated |= events.iter().any(|e| e.gt_id.is_some());
        for &(det, label) in &report.spawned {
            self.votes.insert(label, vec![gt_of(det)]);
        }
        for &(det, label) in &report.assignments.pairs {
            self.votes.entry(label).or_default().push(gt_of(det));
        }
        for c in &report.confirmations {
            let votes = self.votes.remove(&c.label).unwrap_or_default();
            let truth = majority(&votes);
            self.n_all += 1;
            let correct = match truth {
                None => false,
                Some(g) if c.was_new_id => !self.enrolled.contains(&(g, c.orientation)),
                Some(g) => self.owner.get(&c.person) == Some(&g),
            };
            self.n_cor += correct as u64;
            if let Some(g) = truth {
                if c.was_new_id {
                    self.owner.insert(c.person, g);
                }
                if self.owner.get(&c.person) == Some(&g) {
                    self.enrolled.insert((g, c.orientation));
                }
            }
        }
        for label in &report.deletions {
            self.votes.remove(label);
        }
    }

    pub fn identification_rate(&self) -> Option<f64> {
        if !self.annotated {
            return None;
        }
        identification_rate(self.n_cor, self.n_all).ok()
    }
}

fn majority(votes: &[Option<GtId>]) -> Option<GtId> {
    let mut counts: Vec<(Option<GtId>, usize)> = Vec::new();
    for v in votes {
        match counts.iter_mut().find(|(k, _)| k == v) {
            Some((_, n)) => *n += 1,
            None => counts.push((*v, 1)),
        }
    }
    let mut best: Option<(Option<GtId>, usize)> = None;
    for (k, n) in counts {
        if best.is_none_or(|(_, bn)| n > bn) {
            best = Some((k, n));
        }
    }
    best.and_then(|(k, _)| k)
}

/// Accumulated statistics of one pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n_cor: u64,
    pub n_all: u64,
    pub frames: u64,
    pub detections: u64,
    /// Simulated extraction seconds per frame.
    pub extract_times: Vec<f64>,
    /// Measured matching seconds per frame.
    pub match_times: Vec<f64>,
    pub over_budget_frames: u64,
    pub confirmations: u64,
    pub deletions: u64,
    pub new_ids: u64,
    pub backbone_frames: [u64; 3],
}

impl RunStats {
    pub fn record(&mut self, report: &FrameReport, detections: usize, match_seconds: f64) {
        self.frames += 1;
        self.detections += detections as u64;
        self.extract_times.push(report.simulated_elapsed);
        self.match_times.push(match_seconds);
        self.over_budget_frames += report.over_budget as u64;
        self.confirmations += report.confirmations.len() as u64;
        self.deletions += report.deletions.len() as u64;
        self.new_ids += report.confirmations.iter().filter(|c| c.was_new_id).count() as u64;
        let slot = crate::types::Backbone::ALL.iter().position(|b| *b == report.backbone_used).unwrap();
        self.backbone_frames[slot] += 1;
    }

    pub fn combined_times(&self) -> Vec<f64> {
        self.extract_times.iter().zip(&self.match_times).map(|(a, b)| a + b).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ir_examples() {
        assert_eq!(identification_rate(936, 1000).unwrap(), 0.936);
        assert_eq!(identification_rate(0, 5).unwrap(), 0.0);
        assert_eq!(identification_rate(7, 7).unwrap(), 1.0);
        assert!(matches!(identification_rate(0, 0), Err(Error::EmptyDenominator)));
        assert!(identification_rate(8, 7).is_err());
    }

    #[test]
    fn fps_examples() {
        let r = fps_report(&[0.040; 100]).unwrap();
        assert!((r.mean_fps - 25.0).abs() < 1e-9);
        assert!((r.p50_ms - 40.0).abs() < 1e-9);
        let r = fps_report(&[0.010]).unwrap();
        assert!((r.mean_fps - 100.0).abs() < 1e-9);
        assert!(fps_report(&[]).is_none());

        let mixed = [0.031, 0.047, 0.012, 0.090, 0.040, 0.022];
        let r = fps_report(&mixed).unwrap();
        let mut sum = 0.0;
        for d in mixed {
            sum += d;
        }
        assert!((r.mean_fps - 6.0 / sum).abs() < 1e-12);
        assert!((r.min_fps - 1.0 / 0.090).abs() < 1e-12);
        assert!((r.p50_ms - 31.0).abs() < 1e-9);
        assert!((r.p95_ms - 90.0).abs() < 1e-9);
    }

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn detection_rate_examples() {
        let gt: Vec<Vec<BBox>> = vec![vec![b(0.0, 0.0, 10.0, 20.0), b(50.0, 50.0, 10.0, 20.0)]];
        let r = detection_rates(&gt, &gt, 0.5).unwrap();
        assert_eq!((r.pdr, r.mdr), (1.0, 0.0));
        let r = detection_rates(&[vec![]], &gt, 0.5).unwrap();
        assert_eq!((r.pdr, r.mdr), (0.0, 1.0));
        assert!(matches!(detection_rates(&[], &gt, 0.5), Err(Error::FrameMismatch { .. })));
        assert!(detection_rates(&gt, &gt, 1.0).is_err());
    }

    #[test]
    fn nine_of_ten_matched() {
        // ten ground-truth boxes over two frames; nine predictions shifted by
        // 2 px horizontally: IoU = 8*20 / (2*200 - 160) = 2/3 >= 0.5. The
        // tenth prediction is shifted by 6 px: IoU = 4*20 / (400 - 80) = 0.25.
        let gt_frame = |k: usize| (0..5).map(|i| b(100.0 * (i + 5 * k) as f64, 0.0, 10.0, 20.0)).collect::<Vec<_>>();
        let gt = vec![gt_frame(0), gt_frame(1)];
        let mut pred = gt.clone();
        for frame in &mut pred {
            for bx in frame.iter_mut() {
                bx.x += 2.0;
            }
        }
        pred[1][4].x += 4.0;
        assert!((gt[0][0].iou(&pred[0][0]) - 2.0 / 3.0).abs() < 1e-12);
        assert!((gt[1][4].iou(&pred[1][4]) - 0.25).abs() < 1e-12);
        let r = detection_rates(&pred, &gt, 0.5).unwrap();
        assert_eq!(r.matched, 9);
        assert!((r.pdr - 0.9).abs() < 1e-12 && (r.mdr - 0.1).abs() < 1e-12);
    }

    #[test]
    fn majority_prefers_first_seen_on_ties() {
        assert_eq!(majority(&[Some(3), Some(4)]), Some(3));
        assert_eq!(majority(&[None, Some(4), Some(4)]), Some(4));
        assert_eq!(majority(&[None, None, Some(1)]), None);
    }
}

//! Backbone selection by per-frame person count.
//!
//! Each backbone can embed `pps / target_fps` persons inside one frame
//! budget. The deepest backbone is used while it still fits, the middle one
//! for a narrow band above that, and the shallowest beyond.
//!
//! The selection rule is
//!
//! ```text
//! RN50   n <= th1
//! RN34   th1 < n < th2
//! RN18   n >= th2
//! ```
//!
//! with `th1 = floor(cap(RN50))` and `th2 = floor(cap(RN34)) + 1`. The `+ 1`
//! keeps the strict middle interval non-empty for integer counts so that a
//! count RN34 can absorb but RN50 cannot is routed to RN34.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Backbone, LatencyProfile, ProfileSet};

/// Persons per frame a backbone can embed at `target_fps`.
pub fn capacity(profile: &LatencyProfile, target_fps: f64) -> Result<f64> {
    check_fps(target_fps)?;
    Ok(profile.pps / target_fps)
}

fn check_fps(target_fps: f64) -> Result<()> {
    if target_fps > 0.0 && target_fps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidFps(target_fps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub th1: u32,
    pub th2: u32,
    pub target_fps: f64,
    pub profiles: ProfileSet,
}

impl ThresholdTable {
    /// Operator-supplied thresholds, bypassing derivation.
    pub fn with_overrides(th1: u32, th2: u32, target_fps: f64, profiles: ProfileSet) -> Result<Self> {
        check_fps(target_fps)?;
        if th1 >= th2 {
            return Err(Error::config(format!("th1 ({th1}) must be below th2 ({th2})")));
        }
        Ok(Self { th1, th2, target_fps, profiles })
    }

    /// Seconds available per frame.
    pub fn frame_budget(&self) -> f64 {
        1.0 / self.target_fps
    }
}

pub fn derive_thresholds(profiles: &ProfileSet, target_fps: f64) -> Result<ThresholdTable> {
    check_fps(target_fps)?;
    let (rn18, rn34, rn50) = (
        profiles.pps(Backbone::Rn18),
        profiles.pps(Backbone::Rn34),
        profiles.pps(Backbone::Rn50),
    );
    if !(rn18 > rn34 && rn34 > rn50) {
        return Err(Error::InconsistentProfiles(format!(
            "pps must strictly decrease RN18 > RN34 > RN50, got {rn18} / {rn34} / {rn50}"
        )));
    }
    let th1 = capacity(profiles.get(Backbone::Rn50), target_fps)?.floor();
    let th2 = capacity(profiles.get(Backbone::Rn34), target_fps)?.floor() + 1.0;
    if th2 > u32::MAX as f64 {
        return Err(Error::InconsistentProfiles("capacity exceeds representable person counts".into()));
    }
    let (th1, th2) = (th1 as u32, th2 as u32);
    // A narrow pps gap can collapse both thresholds onto the same count; the
    // rule still needs th1 < th2.
    let th2 = th2.max(th1 + 1);
    Ok(ThresholdTable { th1, th2, target_fps, profiles: *profiles })
}

pub fn select_backbone(n: u32, thresholds: &ThresholdTable) -> Backbone {
    if n <= thresholds.th1 {
        Backbone::Rn50
    } else if n < thresholds.th2 {
        Backbone::Rn34
    } else {
        Backbone::Rn18
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_table() -> ThresholdTable {
        derive_thresholds(&ProfileSet::reference(), 25.0).unwrap()
    }

    #[test]
    fn capacities_at_25_fps() {
        let p = ProfileSet::reference();
        let cap = |b| capacity(p.get(b), 25.0).unwrap();
        assert!((cap(Backbone::Rn18) - 28.37).abs() <= 0.01);
        assert!((cap(Backbone::Rn34) - 25.49).abs() <= 0.01);
        assert!((cap(Backbone::Rn50) - 24.22).abs() <= 0.01);
    }

    #[test]
    fn capacity_rejects_bad_fps() {
        let p = ProfileSet::reference();
        assert!(matches!(capacity(p.get(Backbone::Rn18), 0.0), Err(Error::InvalidFps(_))));
        assert!(matches!(capacity(p.get(Backbone::Rn18), -25.0), Err(Error::InvalidFps(_))));
        assert!(derive_thresholds(&p, f64::NAN).is_err());
    }

    #[test]
    fn reference_thresholds() {
        let t = reference_table();
        assert_eq!((t.th1, t.th2), (24, 26));
    }

    #[test]
    fn equal_pps_is_inconsistent() {
        let p = ProfileSet::with_pps(600.0, 600.0, 600.0).unwrap();
        assert!(matches!(derive_thresholds(&p, 25.0), Err(Error::InconsistentProfiles(_))));
        let reversed = ProfileSet::with_pps(605.556, 637.340, 709.321).unwrap();
        assert!(derive_thresholds(&reversed, 25.0).is_err());
    }

    #[test]
    fn thresholds_invariant_under_joint_scaling() {
        let p = ProfileSet::with_pps(709.321 * 2.0, 637.340 * 2.0, 605.556 * 2.0).unwrap();
        let t = derive_thresholds(&p, 50.0).unwrap();
        assert_eq!((t.th1, t.th2), (24, 26));
    }

    #[test]
    fn selection_branches() {
        let t = reference_table();
        assert_eq!(select_backbone(0, &t), Backbone::Rn50);
        assert_eq!(select_backbone(10, &t), Backbone::Rn50);
        assert_eq!(select_backbone(24, &t), Backbone::Rn50);
        assert_eq!(select_backbone(25, &t), Backbone::Rn34);
        assert_eq!(select_backbone(26, &t), Backbone::Rn18);
        assert_eq!(select_backbone(30, &t), Backbone::Rn18);
    }

    #[test]
    fn selection_is_monotone_and_feasible() {
        let t = reference_table();
        let p = &t.profiles;
        let mut last_pps = 0.0;
        for n in 0..200u32 {
            let b = select_backbone(n, &t);
            let pps = p.pps(b);
            assert!(pps >= last_pps, "pps decreased at n={n}");
            last_pps = pps;
            let fits = n as f64 / pps <= t.frame_budget();
            if n < t.th2 {
                assert!(fits, "n={n} on {b} overruns the frame budget");
            }
        }
    }

    #[test]
    fn overrides_validate_ordering() {
        let p = ProfileSet::reference();
        assert!(ThresholdTable::with_overrides(10, 10, 25.0, p).is_err());
        let t = ThresholdTable::with_overrides(5, 9, 25.0, p).unwrap();
        assert_eq!(select_backbone(7, &t), Backbone::Rn34);
    }
}

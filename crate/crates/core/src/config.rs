//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, so an
//! empty file is a valid configuration. Command-line flags override file
//! values through [`RunConfig::set`].

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{Association, EngineConfig, FeatureUpdate, ProbationRule};
use crate::scheduler::{derive_thresholds, ThresholdTable};
use crate::simulator::ScenarioConfig;
use crate::types::{ProfileSet, FEATURE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Detections carry crop references resolved by the synthetic provider.
    Synthetic,
    /// Detections carry precomputed embeddings.
    #[default]
    Replay,
}

/// One column of the sweep grid: a detector-quality proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepColumn {
    pub name: String,
    pub sigma: f64,
    pub miss_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dim: usize,
    pub target_fps: f64,
    pub tau_c: f64,
    pub tau_t: f64,
    pub th1: Option<u32>,
    pub th2: Option<u32>,
    pub pps_rn18: f64,
    pub pps_rn34: f64,
    pub pps_rn50: f64,
    pub window: u32,
    pub confirm: u32,
    pub delete: u32,
    pub capacity: Option<usize>,
    pub provider: ProviderKind,
    pub association: Association,
    pub feature_update: String,
    pub ema_alpha: f64,
    pub seed: u64,
    pub oracle: bool,
    pub iou_threshold: f64,

    pub n_identities: u32,
    pub n_frames: u64,
    pub peak: u32,
    pub mean_persons: f64,
    pub visit_min: u32,
    pub visit_max: u32,
    pub turn_prob: f64,
    pub miss_rate: f64,
    pub clutter_rate: f64,
    pub sigma: f64,
    pub flip_prob: f64,
    pub frame_width: f64,
    pub frame_height: f64,

    pub sweep_ids: Vec<u32>,
    pub sweep_columns: Vec<SweepColumn>,

    pub bench_ids: usize,
    pub bench_detections: usize,
    pub bench_frames: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scene = ScenarioConfig::default();
        let pps = ProfileSet::reference();
        use crate::types::Backbone::*;
        Self {
            dim: FEATURE_DIM,
            target_fps: 25.0,
            tau_c: 0.7,
            tau_t: 0.6,
            th1: None,
            th2: None,
            pps_rn18: pps.pps(Rn18),
            pps_rn34: pps.pps(Rn34),
            pps_rn50: pps.pps(Rn50),
            window: 5,
            confirm: 4,
            delete: 2,
            capacity: None,
            provider: ProviderKind::Replay,
            association: Association::Greedy,
            feature_update: "replace".into(),
            ema_alpha: 0.9,
            seed: 1,
            oracle: true,
            iou_threshold: 0.5,
            n_identities: scene.n_identities,
            n_frames: scene.n_frames,
            peak: scene.peak,
            mean_persons: scene.mean_persons,
            visit_min: scene.visit_min,
            visit_max: scene.visit_max,
            turn_prob: scene.turn_prob,
            miss_rate: scene.miss_rate,
            clutter_rate: scene.clutter_rate,
            sigma: scene.sigma,
            flip_prob: scene.flip_prob,
            frame_width: scene.frame_width,
            frame_height: scene.frame_height,
            sweep_ids: vec![100, 200, 300, 400, 500],
            sweep_columns: vec![
                SweepColumn { name: "1920x1080".into(), sigma: 0.3, miss_rate: 0.0 },
                SweepColumn { name: "1280x720".into(), sigma: 0.5, miss_rate: 0.02 },
                SweepColumn { name: "720x480".into(), sigma: 0.6, miss_rate: 0.05 },
            ],
            bench_ids: 500,
            bench_detections: 30,
            bench_frames: 200,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, String> {
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("invalid boolean {value:?} for {key}")),
    }
}

/// `100,200,300`
pub fn parse_id_list(value: &str) -> Result<Vec<u32>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u32>().map_err(|_| format!("invalid identity count {s:?}")))
        .collect()
}

/// `name:sigma:miss_rate, name:sigma:miss_rate`
fn parse_columns(value: &str) -> Result<Vec<SweepColumn>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|col| {
            let parts: Vec<&str> = col.split(':').collect();
            let [name, sigma, miss] = parts[..] else {
                return Err(format!("sweep column {col:?} must look like name:sigma:miss_rate"));
            };
            Ok(SweepColumn {
                name: name.to_string(),
                sigma: parse_value("sweep_columns sigma", sigma)?,
                miss_rate: parse_value("sweep_columns miss_rate", miss)?,
            })
        })
        .collect()
}

fn fmt_optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), T::to_string)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Assigns one key. Errors carry no line number; callers add it.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "dim" => self.dim = parse_value(key, v)?,
            "target_fps" | "fps" => self.target_fps = parse_value(key, v)?,
            "tau_c" => self.tau_c = parse_value(key, v)?,
            "tau_t" => self.tau_t = parse_value(key, v)?,
            "th1" => self.th1 = parse_optional(key, v)?,
            "th2" => self.th2 = parse_optional(key, v)?,
            "pps_rn18" => self.pps_rn18 = parse_value(key, v)?,
            "pps_rn34" => self.pps_rn34 = parse_value(key, v)?,
            "pps_rn50" => self.pps_rn50 = parse_value(key, v)?,
            "window" => self.window = parse_value(key, v)?,
            "confirm" => self.confirm = parse_value(key, v)?,
            "delete" => self.delete = parse_value(key, v)?,
            "capacity" => self.capacity = parse_optional(key, v)?,
            "provider" => {
                self.provider = match v {
                    "synthetic" => ProviderKind::Synthetic,
                    "replay" => ProviderKind::Replay,
                    _ => return Err(format!("provider must be synthetic or replay, got {v:?}")),
                }
            }
            "association" => {
                self.association = match v {
                    "greedy" => Association::Greedy,
                    "optimal" => Association::Optimal,
                    _ => return Err(format!("association must be greedy or optimal, got {v:?}")),
                }
            }
            "feature_update" => {
                if v != "replace" && v != "ema" {
                    return Err(format!("feature_update must be replace or ema, got {v:?}"));
                }
                self.feature_update = v.to_string();
            }
            "ema_alpha" => self.ema_alpha = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "oracle" => self.oracle = parse_bool(key, v)?,
            "iou_threshold" => self.iou_threshold = parse_value(key, v)?,
            "n_identities" | "ids" => self.n_identities = parse_value(key, v)?,
            "n_frames" => self.n_frames = parse_value(key, v)?,
            "peak" => self.peak = parse_value(key, v)?,
            "mean_persons" => self.mean_persons = parse_value(key, v)?,
            "visit_min" => self.visit_min = parse_value(key, v)?,
            "visit_max" => self.visit_max = parse_value(key, v)?,
            "turn_prob" => self.turn_prob = parse_value(key, v)?,
            "miss_rate" => self.miss_rate = parse_value(key, v)?,
            "clutter_rate" => self.clutter_rate = parse_value(key, v)?,
            "sigma" => self.sigma = parse_value(key, v)?,
            "flip_prob" => self.flip_prob = parse_value(key, v)?,
            "frame_width" => self.frame_width = parse_value(key, v)?,
            "frame_height" => self.frame_height = parse_value(key, v)?,
            "sweep_ids" => self.sweep_ids = parse_id_list(v)?,
            "sweep_columns" => self.sweep_columns = parse_columns(v)?,
            "bench_ids" => self.bench_ids = parse_value(key, v)?,
            "bench_detections" => self.bench_detections = parse_value(key, v)?,
            "bench_frames" => self.bench_frames = parse_value(key, v)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Canonical text form listing every key.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dim", self.dim.to_string());
        kv("target_fps", self.target_fps.to_string());
        kv("tau_c", self.tau_c.to_string());
        kv("tau_t", self.tau_t.to_string());
        kv("th1", fmt_optional(&self.th1));
        kv("th2", fmt_optional(&self.th2));
        kv("pps_rn18", self.pps_rn18.to_string());
        kv("pps_rn34", self.pps_rn34.to_string());
        kv("pps_rn50", self.pps_rn50.to_string());
        kv("window", self.window.to_string());
        kv("confirm", self.confirm.to_string());
        kv("delete", self.delete.to_string());
        kv("capacity", fmt_optional(&self.capacity));
        kv("provider", match self.provider {
            ProviderKind::Synthetic => "synthetic".into(),
            ProviderKind::Replay => "replay".into(),
        });
        kv("association", match self.association {
            Association::Greedy => "greedy".into(),
            Association::Optimal => "optimal".into(),
        });
        kv("feature_update", self.feature_update.clone());
        kv("ema_alpha", self.ema_alpha.to_string());
        kv("seed", self.seed.to_string());
        kv("oracle", self.oracle.to_string());
        kv("iou_threshold", self.iou_threshold.to_string());
        kv("n_identities", self.n_identities.to_string());
        kv("n_frames", self.n_frames.to_string());
        kv("peak", self.peak.to_string());
        kv("mean_persons", self.mean_persons.to_string());
        kv("visit_min", self.visit_min.to_string());
        kv("visit_max", self.visit_max.to_string());
        kv("turn_prob", self.turn_prob.to_string());
        kv("miss_rate", self.miss_rate.to_string());
        kv("clutter_rate", self.clutter_rate.to_string());
        kv("sigma", self.sigma.to_string());
        kv("flip_prob", self.flip_prob.to_string());
        kv("frame_width", self.frame_width.to_string());
        kv("frame_height", self.frame_height.to_string());
        kv("sweep_ids", self.sweep_ids.iter().map(u32::to_string).collect::<Vec<_>>().join(","));
        kv(
            "sweep_columns",
            self.sweep_columns
                .iter()
                .map(|c| format!("{}:{}:{}", c.name, c.sigma, c.miss_rate))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("bench_ids", self.bench_ids.to_string());
        kv("bench_detections", self.bench_detections.to_string());
        kv("bench_frames", self.bench_frames.to_string());
        s
    }

    pub fn profiles(&self) -> Result<ProfileSet> {
        ProfileSet::with_pps(self.pps_rn18, self.pps_rn34, self.pps_rn50)
    }

    pub fn thresholds(&self) -> Result<ThresholdTable> {
        let profiles = self.profiles()?;
        match (self.th1, self.th2) {
            (Some(th1), Some(th2)) => ThresholdTable::with_overrides(th1, th2, self.target_fps, profiles),
            (None, None) => derive_thresholds(&profiles, self.target_fps),
            _ => Err(Error::config("th1 and th2 must be overridden together")),
        }
    }

    pub fn feature_update(&self) -> FeatureUpdate {
        match self.feature_update.as_str() {
            "ema" => FeatureUpdate::Ema { alpha: self.ema_alpha },
            _ => FeatureUpdate::Replace,
        }
    }

    pub fn engine_config(&self) -> Result<EngineConfig> {
        let cfg = EngineConfig {
            dim: self.dim,
            tau_c: self.tau_c,
            tau_t: self.tau_t,
            thresholds: self.thresholds()?,
            rule: ProbationRule { window: self.window, confirm: self.confirm, delete: self.delete },
            association: self.association,
            feature_update: self.feature_update(),
            capacity: self.capacity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            n_identities: self.n_identities,
            n_frames: self.n_frames,
            dim: self.dim,
            peak: self.peak,
            mean_persons: self.mean_persons,
            visit_min: self.visit_min,
            visit_max: self.visit_max,
            turn_prob: self.turn_prob,
            miss_rate: self.miss_rate,
            clutter_rate: self.clutter_rate,
            sigma: self.sigma,
            flip_prob: self.flip_prob,
            frame_width: self.frame_width,
            frame_height: self.frame_height,
        }
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(i + 1, format!("expected key = value, got {line:?}")));
            };
            cfg.set(key, value).map_err(|m| Error::parse(i + 1, m))?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!("".parse::<RunConfig>().unwrap(), RunConfig::default());
        assert_eq!("# only a comment\n\n".parse::<RunConfig>().unwrap(), RunConfig::default());
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("th1", "20").unwrap();
        cfg.set("th2", "27").unwrap();
        cfg.set("capacity", "300").unwrap();
        cfg.set("sweep_columns", "a:0.1:0.0, b:0.2:0.05").unwrap();
        cfg.set("provider", "synthetic").unwrap();
        assert_eq!(cfg.render().parse::<RunConfig>().unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_line() {
        let err = "dim = 8\ntau_c = 0.5\nbogus = 1\n".parse::<RunConfig>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = "tau_c = high".parse::<RunConfig>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = "no equals sign".parse::<RunConfig>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn thresholds_derive_or_override() {
        let cfg = RunConfig::default();
        let t = cfg.thresholds().unwrap();
        assert_eq!((t.th1, t.th2), (24, 26));
        let cfg: RunConfig = "th1 = 10\nth2 = 20".parse().unwrap();
        let t = cfg.thresholds().unwrap();
        assert_eq!((t.th1, t.th2), (10, 20));
        let cfg: RunConfig = "th1 = 10".parse().unwrap();
        assert!(cfg.thresholds().is_err());
    }

    #[test]
    fn engine_config_validates_rule() {
        let cfg: RunConfig = "confirm = 6".parse().unwrap();
        assert!(cfg.engine_config().is_err());
        let cfg: RunConfig = "tau_t = 1.5".parse().unwrap();
        assert!(cfg.engine_config().is_err());
    }
}

//! End-to-end runs over scenarios and streams, the identity/quality sweep and
//! the matching benchmark.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{ProviderKind, RunConfig, SweepColumn};
use crate::error::{Error, Result};
use crate::matcher::{match_to_containers, step_container, Engine, FrameReport, PooledTable, Probe};
use crate::metrics::{detection_rates, fps_report, DetectionRates, FpsReport, IdentityScorer, RunStats};
use crate::provider::{keyed_rng, FeatureProvider, ReplayProvider};
use crate::simulator::{generate_scenario, oracle_ir, provider_for, ReplayMode, Scenario};
use crate::types::{
    normalize, Backbone, BBox, Container, ContainerLabel, DetectionEvent, EmbeddingRecord, Orientation,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneUsage {
    #[serde(rename = "RN50")]
    pub rn50: u64,
    #[serde(rename = "RN34")]
    pub rn34: u64,
    #[serde(rename = "RN18")]
    pub rn18: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: u64,
    pub detections: u64,
    pub confirmations: u64,
    /// Confirmations resolved to an existing identity.
    pub reconfirmations: u64,
    pub new_ids: u64,
    pub deletions: u64,
    pub table_size: usize,
    pub n_cor: u64,
    pub n_all: u64,
    /// Absent when the input carries no ground truth, nothing was confirmed,
    /// or the run started from an imported gallery whose owners are unknown.
    pub ir: Option<f64>,
    pub oracle_ir: Option<f64>,
    pub th1: u32,
    pub th2: u32,
    pub target_fps: f64,
    pub backbone_frames: BackboneUsage,
    /// Frames whose simulated extraction alone overran the frame budget.
    pub over_budget_frames: u64,
    /// Simulated extraction time per frame.
    pub extraction: Option<FpsReport>,
    pub detection: Option<DetectionRates>,
    /// Measured wall-clock of the matching stage per frame.
    pub matching: Option<FpsReport>,
    /// Simulated extraction plus measured matching.
    pub pipeline: Option<FpsReport>,
}

impl RunReport {
    /// Copy with every wall-clock field cleared. Two runs with the same
    /// inputs produce identical results from this.
    pub fn without_timing(&self) -> Self {
        Self { matching: None, pipeline: None, ..self.clone() }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(s, "frames              {}", self.frames);
        let _ = writeln!(s, "detections          {}", self.detections);
        let _ = writeln!(
            s,
            "confirmations       {} ({} new ids, {} reconfirmations)",
            self.confirmations, self.new_ids, self.reconfirmations
        );
        let _ = writeln!(s, "deletions           {}", self.deletions);
        let _ = writeln!(s, "gallery size        {}", self.table_size);
        let _ = writeln!(s, "IR                  {} ({}/{})", fmt_opt(self.ir), self.n_cor, self.n_all);
        let _ = writeln!(s, "oracle IR           {}", fmt_opt(self.oracle_ir));
        let _ = writeln!(s, "thresholds          th1={} th2={} at {} fps", self.th1, self.th2, self.target_fps);
        let b = self.backbone_frames;
        let _ = writeln!(s, "backbone frames     RN50={} RN34={} RN18={}", b.rn50, b.rn34, b.rn18);
        let _ = writeln!(s, "over-budget frames  {}", self.over_budget_frames);
        let mut fps_line = |name: &str, r: &Option<FpsReport>| {
            if let Some(r) = r {
                let _ = writeln!(
                    s,
                    "{name:<19} {:.1} fps mean, p50 {:.3} ms, p95 {:.3} ms",
                    r.mean_fps, r.p50_ms, r.p95_ms
                );
            }
        };
        fps_line("extraction (sim)", &self.extraction);
        fps_line("matching", &self.matching);
        fps_line("pipeline", &self.pipeline);
        if let Some(d) = &self.detection {
            let _ = writeln!(s, "PDR / MDR           {:.4} / {:.4}", d.pdr, d.mdr);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Per-frame engine output, in order.
    pub frames: Vec<FrameReport>,
    pub table: PooledTable,
}

struct Driven {
    engine: Engine,
    stats: RunStats,
    scorer: IdentityScorer,
    frames: Vec<FrameReport>,
    predicted: Vec<Vec<BBox>>,
    imported: bool,
}

/// Feeds frames through the engine. Frame numbers skipped by the input are
/// processed as empty frames so probation windows keep counting.
fn drive<I>(mut engine: Engine, input: I, provider: &dyn FeatureProvider) -> Result<Driven>
where
    I: IntoIterator<Item = Result<(u64, Vec<DetectionEvent>)>>,
{
    let imported = !engine.table().is_empty();
    let mut stats = RunStats::default();
    let mut scorer = IdentityScorer::new();
    let mut frames = Vec::new();
    let mut predicted = Vec::new();
    let mut next: Option<u64> = None;

    let mut step = |engine: &mut Engine, frame: u64, events: &[DetectionEvent]| -> Result<()> {
        let start = Instant::now();
        let report = engine.process_frame(frame, events, provider)?;
        let elapsed = start.elapsed().as_secs_f64();
        scorer.observe(events, &report);
        stats.record(&report, events.len(), elapsed);
        predicted.push(events.iter().map(|e| e.bbox).collect());
        frames.push(report);
        Ok(())
    };

    for item in input {
        let (frame, events) = item?;
        if let Some(expected) = next {
            if frame < expected {
                return Err(Error::OutOfOrderFrame { last: expected - 1, got: frame });
            }
            for gap in expected..frame {
                step(&mut engine, gap, &[])?;
            }
        }
        step(&mut engine, frame, &events)?;
        next = Some(frame + 1);
    }
    stats.n_cor = scorer.n_cor;
    stats.n_all = scorer.n_all;
    Ok(Driven { engine, stats, scorer, frames, predicted, imported })
}

fn build_report(driven: &Driven, oracle: Option<f64>, detection: Option<DetectionRates>) -> RunReport {
    let stats = &driven.stats;
    let thresholds = &driven.engine.config().thresholds;
    let usage = |b: Backbone| stats.backbone_frames[Backbone::ALL.iter().position(|x| *x == b).unwrap()];
    RunReport {
        frames: stats.frames,
        detections: stats.detections,
        confirmations: stats.confirmations,
        reconfirmations: stats.confirmations - stats.new_ids,
        new_ids: stats.new_ids,
        deletions: stats.deletions,
        table_size: driven.engine.table().len(),
        n_cor: stats.n_cor,
        n_all: stats.n_all,
        ir: driven.scorer.identification_rate().filter(|_| !driven.imported),
        oracle_ir: oracle,
        th1: thresholds.th1,
        th2: thresholds.th2,
        target_fps: thresholds.target_fps,
        backbone_frames: BackboneUsage {
            rn50: usage(Backbone::Rn50),
            rn34: usage(Backbone::Rn34),
            rn18: usage(Backbone::Rn18),
        },
        over_budget_frames: stats.over_budget_frames,
        extraction: fps_report(&stats.extract_times),
        detection,
        matching: fps_report(&stats.match_times),
        pipeline: fps_report(&stats.combined_times()),
    }
}

fn make_engine(cfg: &RunConfig, dim: usize, table: Option<PooledTable>) -> Result<Engine> {
    let mut engine_cfg = cfg.engine_config()?;
    engine_cfg.dim = dim;
    match table {
        Some(t) => Engine::with_table(engine_cfg, t),
        None => Engine::new(engine_cfg),
    }
}

/// Runs a generated scenario. The feature dimension comes from the scenario.
pub fn run_scenario(cfg: &RunConfig, scenario: &Scenario, table: Option<PooledTable>) -> Result<RunOutcome> {
    let engine = make_engine(cfg, scenario.dim, table)?;
    let driven = match cfg.provider {
        ProviderKind::Synthetic => {
            let provider = scenario.provider();
            drive(engine, scenario.replay(ReplayMode::CropRefs).map(Ok), &provider)?
        }
        ProviderKind::Replay => drive(engine, scenario.replay(ReplayMode::Embeddings).map(Ok), &ReplayProvider)?,
    };

    let truth: Vec<Vec<BBox>> = scenario.frames().into_iter().map(|f| f.into_iter().map(|(_, p)| p.bbox).collect()).collect();
    let detection = detection_rates(&driven.predicted, &truth, cfg.iou_threshold).ok();
    let oracle = if cfg.oracle {
        let o = oracle_ir(scenario, cfg.tau_t);
        (o.total > 0).then(|| o.ir())
    } else {
        None
    };
    let report = build_report(&driven, oracle, detection);
    Ok(RunOutcome { report, frames: driven.frames, table: driven.engine.into_table() })
}

/// Runs a detection stream. Crop references are resolved with the synthetic
/// provider implied by the configuration and seed.
pub fn run_stream<I>(cfg: &RunConfig, input: I, table: Option<PooledTable>) -> Result<RunOutcome>
where
    I: IntoIterator<Item = Result<(u64, Vec<DetectionEvent>)>>,
{
    let engine = make_engine(cfg, cfg.dim, table)?;
    let driven = match cfg.provider {
        ProviderKind::Synthetic => {
            let provider = provider_for(&cfg.scenario_config(), cfg.seed);
            drive(engine, input, &provider)?
        }
        ProviderKind::Replay => drive(engine, input, &ReplayProvider)?,
    };
    let report = build_report(&driven, None, None);
    Ok(RunOutcome { report, frames: driven.frames, table: driven.engine.into_table() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub ir: Option<f64>,
    pub oracle_ir: Option<f64>,
    pub confirmations: u64,
    /// Mean of simulated extraction plus measured matching.
    pub fps: Option<f64>,
    /// Mean of simulated extraction alone.
    pub extraction_fps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ids: u32,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub columns: Vec<SweepColumn>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for cell in out.rows.iter_mut().flat_map(|r| r.cells.iter_mut()) {
            cell.fps = None;
        }
        out
    }

    pub fn ir_column(&self, column: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.cells[column].ir).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:>6}", "ids");
        for c in &self.columns {
            let _ = write!(s, " | {:^24}", c.name);
        }
        s.push('\n');
        let _ = write!(s, "{:>6}", "");
        for _ in &self.columns {
            let _ = write!(s, " | {:>7} {:>7} {:>8}", "IR", "oracle", "FPS");
        }
        s.push('\n');
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".into(), |x| format!("{:.1}%", x * 100.0));
        for row in &self.rows {
            let _ = write!(s, "{:>6}", row.ids);
            for c in &row.cells {
                let fps = c.fps.map_or_else(|| "n/a".into(), |x| format!("{x:.1}"));
                let _ = write!(s, " | {:>7} {:>7} {:>8}", pct(c.ir), pct(c.oracle_ir), fps);
            }
            s.push('\n');
        }
        s
    }
}

/// One scenario per (identity count, column), all generated from `cfg.seed`.
pub fn sweep(cfg: &RunConfig) -> Result<SweepReport> {
    if cfg.sweep_ids.is_empty() || cfg.sweep_columns.is_empty() {
        return Err(Error::config("sweep needs at least one identity count and one column"));
    }
    let mut rows = Vec::new();
    for &ids in &cfg.sweep_ids {
        let mut cells = Vec::new();
        for col in &cfg.sweep_columns {
            let mut c = cfg.clone();
            c.n_identities = ids;
            c.sigma = col.sigma;
            c.miss_rate = col.miss_rate;
            let scenario = generate_scenario(&c.scenario_config(), c.seed)?;
            let report = run_scenario(&c, &scenario, None)?.report;
            cells.push(SweepCell {
                ir: report.ir,
                oracle_ir: report.oracle_ir,
                confirmations: report.confirmations,
                fps: report.pipeline.map(|r| r.mean_fps),
                extraction_fps: report.extraction.map(|r| r.mean_fps),
            });
        }
        rows.push(SweepRow { ids, cells });
    }
    Ok(SweepReport { columns: cfg.sweep_columns.clone(), rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Gallery identities, each with all three orientation slots filled.
    pub ids: usize,
    /// Detections (and probationary containers) per frame.
    pub detections: usize,
    pub frames: usize,
    pub dim: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        Self {
            ids: cfg.bench_ids,
            detections: cfg.bench_detections,
            frames: cfg.bench_frames,
            dim: cfg.dim,
            seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Association, container bookkeeping and gallery lookup together.
    pub total: FpsReport,
    pub association_p50_ms: f64,
    pub gallery_p50_ms: f64,
}

impl BenchReport {
    pub fn render(&self) -> String {
        format!(
            "{} detections/frame vs {} ids x 3 slots, D={}, {} frames\n\
             matching p50 {:.4} ms, p95 {:.4} ms ({:.0} fps)\n\
             association p50 {:.4} ms, gallery p50 {:.4} ms\n",
            self.config.detections,
            self.config.ids,
            self.config.dim,
            self.config.frames,
            self.total.p50_ms,
            self.total.p95_ms,
            self.total.mean_fps,
            self.association_p50_ms,
            self.gallery_p50_ms,
        )
    }
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(v) = normalize(&raw) {
            return v;
        }
    }
}

fn median_ms(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2] * 1e3
}

/// Times the matching stage in isolation. Every detection is associated with
/// the containers and then resolved against the gallery as if it had just
/// been confirmed. That is the worst case: in a live run only confirmations
/// reach the gallery. Probes are perturbed gallery entries, so resolutions
/// update existing identities and the gallery keeps its size.
pub fn bench_matching(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.frames == 0 || cfg.dim == 0 {
        return Err(Error::config("bench needs at least one frame and a positive dimension"));
    }
    let mut rng = keyed_rng(&[cfg.seed, 0xBE_AC]);
    let mut table = PooledTable::new(cfg.dim, None);
    for _ in 0..cfg.ids {
        let id = table.init_identity(&random_unit(&mut rng, cfg.dim), Orientation::Front)?;
        table.update(id, Orientation::Back, &random_unit(&mut rng, cfg.dim))?;
        table.update(id, Orientation::Side, &random_unit(&mut rng, cfg.dim))?;
    }
    // containers follow people already in the gallery, as in a steady-state run
    let perturb = |rng: &mut rand_chacha::ChaCha8Rng, base: &[f64], o: Orientation| {
        let noise = random_unit(rng, cfg.dim);
        let raw: Vec<f64> = base.iter().zip(&noise).map(|(a, b)| a + 0.05 * b).collect();
        EmbeddingRecord::with_orientation(&raw, o).expect("non-zero")
    };
    let containers: Vec<Container> = (0..cfg.detections)
        .map(|i| {
            let o = Orientation::ALL[i % 3];
            let base = match cfg.ids {
                0 => random_unit(&mut rng, cfg.dim),
                n => {
                    let id = crate::types::PersonId(rng.random_range(0..n as u64));
                    table.slot(id, o).expect("all slots filled").to_vec()
                }
            };
            Container::spawn(ContainerLabel(i as u64), &perturb(&mut rng, &base, o), 0)
        })
        .collect();

    // a small rotating pool of probe frames
    let pool: Vec<Vec<EmbeddingRecord>> = (0..cfg.frames.min(16))
        .map(|_| containers.iter().map(|c| perturb(&mut rng, &c.fea, c.ori)).collect())
        .collect();

    let engine = RunConfig::default();
    let rule = crate::matcher::ProbationRule { window: engine.window, confirm: engine.confirm, delete: engine.delete };
    let mut totals = Vec::with_capacity(cfg.frames);
    let mut assoc = Vec::with_capacity(cfg.frames);
    let mut gallery = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        let records = &pool[f % pool.len()];
        let start = Instant::now();
        let probes: Vec<Probe<'_>> =
            records.iter().enumerate().map(|(i, r)| Probe { det_index: i as u32, feature: r.feature() }).collect();
        let assignment = match_to_containers(&probes, &containers, engine.tau_c, engine.association);
        for &(det, label) in &assignment.pairs {
            let c = &containers[label.0 as usize];
            std::hint::black_box(step_container(c, Some(&records[det as usize]), &rule, engine.feature_update())?);
        }
        let mid = Instant::now();
        let queries: Vec<(&[f64], Orientation)> = records.iter().map(|r| (r.feature(), r.orientation())).collect();
        std::hint::black_box(table.resolve_sequence(&queries, engine.tau_t)?);
        let end = Instant::now();
        assoc.push((mid - start).as_secs_f64());
        gallery.push((end - mid).as_secs_f64());
        totals.push((end - start).as_secs_f64());
    }
    Ok(BenchReport {
        config: *cfg,
        total: fps_report(&totals).expect("at least one frame"),
        association_p50_ms: median_ms(assoc),
        gallery_p50_ms: median_ms(gallery),
    })
}

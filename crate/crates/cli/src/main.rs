use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psearch_core::config::parse_id_list;
use psearch_core::driver::{bench_matching, run_scenario, run_stream, sweep, BenchConfig, BenchReport, RunReport, SweepReport};
use psearch_core::formats::{self, is_stream_path};
use psearch_core::simulator::{generate_scenario, ReplayMode};
use psearch_core::{Error, RunConfig};

/// Real-time person search over synthetic scenarios and detection streams.
#[derive(Debug, Parser)]
#[command(name = "psearch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario (.json) or a detection stream (.jsonl).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the pipeline over a scenario or a stream and report metrics.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Export the final gallery (.bin for binary, anything else text).
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Start from a previously exported gallery.
        #[arg(long)]
        gallery: Option<PathBuf>,
    },
    /// Identification rate and frame rate over identity counts and quality proxies.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time the matching stage against a populated gallery.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print a saved run, sweep or bench report.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Identity count; a comma list for sweep.
    #[arg(long)]
    ids: Option<String>,
    #[arg(long = "tau-c")]
    tau_c: Option<f64>,
    #[arg(long = "tau-t")]
    tau_t: Option<f64>,
    #[arg(long)]
    fps: Option<f64>,
}

impl Common {
    fn load(&self, sweep_ids: bool) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut set = |k: &str, v: String| cfg.set(k, &v).map_err(|m| Error::InvalidConfig(format!("--{k}: {m}")));
        if let Some(s) = self.seed {
            set("seed", s.to_string())?;
        }
        if let Some(v) = self.tau_c {
            set("tau_c", v.to_string())?;
        }
        if let Some(v) = self.tau_t {
            set("tau_t", v.to_string())?;
        }
        if let Some(v) = self.fps {
            set("target_fps", v.to_string())?;
        }
        if let Some(ids) = &self.ids {
            if sweep_ids {
                let list = parse_id_list(ids).map_err(Error::InvalidConfig)?;
                cfg.sweep_ids = list;
            } else {
                set("n_identities", ids.clone())?;
                set("bench_ids", ids.clone())?;
            }
        }
        cfg.engine_config()?;
        Ok(cfg)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn simulate(common: &Common, output: &Path) -> Result<String, Error> {
    let cfg = common.load(false)?;
    let scenario = generate_scenario(&cfg.scenario_config(), cfg.seed)?;
    if is_stream_path(output) {
        let mode = match cfg.provider {
            psearch_core::config::ProviderKind::Synthetic => ReplayMode::CropRefs,
            psearch_core::config::ProviderKind::Replay => ReplayMode::Embeddings,
        };
        let file = std::fs::File::create(output).map_err(|e| Error::Io { path: output.into(), source: e })?;
        formats::write_stream(std::io::BufWriter::new(file), scenario.replay(mode))
            .map_err(|e| Error::Io { path: output.into(), source: e })?;
    } else {
        formats::write_scenario(output, &scenario)?;
    }
    let stats = scenario.stats();
    Ok(format!(
        "wrote {} ({} identities, {} frames, {} presences)\n",
        output.display(),
        scenario.n_identities,
        scenario.n_frames,
        stats.presences
    ))
}

fn run(
    common: &Common,
    input: &Path,
    output: Option<&Path>,
    snapshot: Option<&Path>,
    gallery: Option<&Path>,
) -> Result<String, Error> {
    let cfg = common.load(false)?;
    let table = gallery.map(formats::read_snapshot).transpose()?;
    let outcome = if is_stream_path(input) {
        run_stream(&cfg, formats::open_stream(input)?, table)?
    } else {
        let scenario = formats::read_scenario(input)?;
        run_scenario(&cfg, &scenario, table)?
    };
    if let Some(path) = output {
        write_json(path, &outcome.report)?;
    }
    if let Some(path) = snapshot {
        formats::write_snapshot(path, &outcome.table)?;
    }
    Ok(outcome.report.render())
}

fn report(input: &Path) -> Result<String, Error> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::Io { path: input.into(), source: e })?;
    if let Ok(r) = serde_json::from_str::<RunReport>(&text) {
        return Ok(r.render());
    }
    if let Ok(r) = serde_json::from_str::<SweepReport>(&text) {
        return Ok(r.render());
    }
    match serde_json::from_str::<BenchReport>(&text) {
        Ok(r) => Ok(r.render()),
        Err(e) => Err(Error::Parse { line: e.line(), message: "not a run, sweep or bench report".into() }),
    }
}

fn execute(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Simulate { common, output } => simulate(&common, &output),
        Command::Run { common, input, output, snapshot, gallery } => {
            run(&common, &input, output.as_deref(), snapshot.as_deref(), gallery.as_deref())
        }
        Command::Sweep { common, output } => {
            let r = sweep(&common.load(true)?)?;
            if let Some(p) = output {
                write_json(&p, &r)?;
            }
            Ok(r.render())
        }
        Command::Bench { common, output } => {
            let r = bench_matching(&BenchConfig::from_run(&common.load(false)?))?;
            if let Some(p) = output {
                write_json(&p, &r)?;
            }
            Ok(r.render())
        }
        Command::Report { input } => report(&input),
    }
}

/// 1 for usage and configuration problems, 2 for malformed input, 3 for
/// everything that fails while running.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidFps(_) | Error::InconsistentProfiles(_) => 1,
        Error::Parse { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(text) => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use du_doa::config::{PipelineConfig, Preset};
use du_doa::eval::Scoring;
use du_doa::io::{self, ElevationConvention};
use du_doa::pipeline;
use du_doa::sim::{self, SceneFile};

#[derive(Parser)]
#[command(name = "du-doa", version, about = "DU-SRP direction-of-arrival estimation and tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localize and track a source in a multichannel WAV file.
    Run(RunArgs),
    /// Synthesize a far-field scene to WAV plus a ground-truth CSV.
    Sim(SimArgs),
    /// Score an estimate CSV against ground truth; prints a JSON report.
    Score(ScoreArgs),
    /// Render SVG trajectory plots from an estimate CSV.
    Plot(PlotArgs),
    /// Measure pipeline throughput on a synthetic scene.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file. Fields override its `preset`.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset: linear, robot-head or spherical.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigArgs {
    /// The config and the directory its relative paths resolve against.
    fn load(&self) -> Result<(PipelineConfig, Option<PathBuf>)> {
        match (&self.config, &self.preset) {
            (Some(path), _) => {
                let mut cfg = PipelineConfig::load(path)?;
                let dir = path.parent().map(Path::to_path_buf).filter(|d| !d.as_os_str().is_empty());
                if let Some(dir) = &dir {
                    let io = &mut cfg.io;
                    for p in [
                        &mut io.input,
                        &mut io.truth,
                        &mut io.output,
                        &mut io.dump_srp,
                        &mut io.errors_out,
                        &mut io.plots_dir,
                    ] {
                        if let Some(q) = p.as_mut().filter(|q| q.is_relative()) {
                            *q = dir.join(&*q);
                        }
                    }
                }
                Ok((cfg, dir))
            }
            (None, Some(name)) => Ok((PipelineConfig::preset(Preset::parse(name)?), None)),
            (None, None) => Ok((PipelineConfig::default(), None)),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Ground-truth CSV (time_s,azimuth_deg,elevation_deg).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Truth CSV's third column holds inclination from +z instead of elevation.
    #[arg(long)]
    truth_inclination: bool,
    /// Estimate CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    vad_threshold: Option<f64>,
    /// Comma-separated input channels to use, zero-based.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<usize>>,
    /// Per-block SRP maps as CSV.
    #[arg(long)]
    dump_srp: Option<PathBuf>,
    /// Score every emitted block instead of VAD-corrected blocks only.
    #[arg(long)]
    score_all: bool,
    /// Per-block errors as CSV.
    #[arg(long)]
    errors_out: Option<PathBuf>,
    /// Directory for SVG plots.
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    truth_inclination: bool,
    #[arg(long)]
    score_all: bool,
    /// Score the raw DOA columns instead of the smoothed track.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    errors_out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    truth_inclination: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Scene length in seconds.
    #[arg(long, default_value_t = 5.0)]
    seconds: f64,
    /// Exit nonzero if throughput falls below this many samples per second.
    #[arg(long)]
    min_rate: Option<f64>,
}

fn convention(inclination: bool) -> ElevationConvention {
    if inclination {
        ElevationConvention::Inclination
    } else {
        ElevationConvention::Elevation
    }
}

fn run(args: RunArgs) -> Result<()> {
    let (mut cfg, base) = args.config.load()?;
    let io = &mut cfg.io;
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                io.$field = Some(v);
            }
        };
    }
    set!(input, args.input);
    set!(truth, args.truth);
    set!(output, args.out);
    set!(dump_srp, args.dump_srp);
    set!(errors_out, args.errors_out);
    set!(plots_dir, args.plots);
    if args.truth_inclination {
        io.truth_convention = ElevationConvention::Inclination;
    }
    if let Some(eta) = args.vad_threshold {
        cfg.vad_threshold = eta;
    }
    if args.channels.is_some() {
        cfg.channels = args.channels;
    }
    if args.score_all {
        cfg.scoring = Scoring::AllEmitted;
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let summary = pipeline::run_pipeline(&cfg, base.as_deref())?;
    eprintln!(
        "processed {} blocks, {} samples/channel in {:.3} s ({:.0} samples/s)",
        summary.records.len(),
        summary.input_frames,
        summary.processing_time.as_secs_f64(),
        summary.throughput()
    );
    if let Some(report) = &summary.report {
        println!("{}", serde_json::to_string_pretty(report)?);
    }
    Ok(())
}

fn sim(args: SimArgs) -> Result<()> {
    let base = args.spec.parent().filter(|d| !d.as_os_str().is_empty());
    let spec = SceneFile::load(&args.spec)?.into_spec(base)?;
    let (buffer, truth) = sim::synthesize(&spec)?;
    io::write_wav(&args.out, &buffer)?;
    if let Some(path) = &args.truth {
        io::write_truth_csv(path, &truth)?;
    }
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let (cfg, _) = args.config.load()?;
    let records = io::read_estimates_csv(&args.estimates)?;
    let truth = io::read_truth_csv(&args.truth, convention(args.truth_inclination))?;
    let scoring = if args.score_all { Scoring::AllEmitted } else { cfg.scoring };
    let (report, errors) =
        pipeline::score_records(&records, &truth, scoring, cfg.tracker.mode, args.raw)?;
    if let Some(path) = &args.errors_out {
        io::write_errors_csv(path, &errors)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let (cfg, _) = args.config.load()?;
    let records = io::read_estimates_csv(&args.estimates)?;
    let truth = match &args.truth {
        Some(p) => Some(io::read_truth_csv(p, convention(args.truth_inclination))?),
        None => None,
    };
    du_doa::plot::emit_plots(&records, truth.as_ref(), cfg.tracker.mode, &args.out_dir)?;
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let (cfg, base) = match (&args.config.config, &args.config.preset) {
        (None, None) => (PipelineConfig::preset(Preset::Spherical), None),
        _ => args.config.load()?,
    };
    let geometry = cfg.load_geometry(base.as_deref())?;
    let report = du_doa::bench::run_benchmark(&cfg, &geometry, args.seconds)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(min) = args.min_rate {
        if report.samples_per_second < min {
            bail!(
                "throughput {:.0} samples/s is below the required {min:.0}",
                report.samples_per_second
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sim(a) => sim(a),
        Command::Score(a) => score(a),
        Command::Plot(a) => plot(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `mvtraffic`: fit, generate, analyse and simulate multiview VBR traffic.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 fit stopped at
//! `--max-iters` without converging (output files are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mvtraffic::estimation::{fit, DurationUpdate, FitConfig};
use mvtraffic::io::{self, StoredModel};
use mvtraffic::model::{GopStructure, Trace};
use mvtraffic::netsim::{run_experiment, sweep, ChannelRate, Mode, SimConfig, Source, SweepAxis};
use mvtraffic::stats::{acf, qq_points};
use mvtraffic::synthesis::generate_trace;
use mvtraffic::viewswitch::{generate_schedule, VsmParams};
use mvtraffic::{Error, Exec};

const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "mvtraffic", version, about = "Multiview video traffic modelling and buffer simulation")]
struct Cli {
    /// Run every data-parallel loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a Poisson hidden Markov model to a frame-size trace.
    Fit(FitArgs),
    /// Generate a synthetic trace from a fitted model.
    Generate(GenerateArgs),
    /// Autocorrelation and Q-Q statistics of two traces.
    Stats(StatsArgs),
    /// Monte Carlo simulation of sender buffer, channel and playout buffer.
    Simulate(SimulateArgs),
    /// Sample a view-switching schedule.
    Vsm(VsmArgs),
}

#[derive(clap::Args)]
struct FitArgs {
    /// Trace CSV (one row per frame: gop,view,pos,type,bytes).
    #[arg(long)]
    trace: PathBuf,
    /// `mvc-gop8`, `mvc-gop4` or a structure JSON file.
    #[arg(long, default_value = "mvc-gop8")]
    structure: String,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u16).range(2..))]
    states: u16,
    #[arg(long, default_value_t = 0.01)]
    ll_threshold: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = DurationArg::ClosedForm)]
    duration_update: DurationArg,
    #[arg(long)]
    out_model: PathBuf,
    /// Per-iteration log-likelihood CSV.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DurationArg {
    ClosedForm,
    Censored,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    gops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_trace: PathBuf,
}

#[derive(clap::Args)]
struct StatsArgs {
    #[arg(long)]
    trace_a: PathBuf,
    #[arg(long)]
    trace_b: PathBuf,
    #[arg(long, default_value = "mvc-gop8")]
    structure: String,
    /// `all` for the interleaved frame sequence, or a view index.
    #[arg(long, default_value = "all")]
    view: String,
    #[arg(long, default_value_t = 100)]
    max_lag: usize,
    #[arg(long, default_value_t = 99)]
    qq_points: usize,
    /// Writes `<prefix>_acf_a.csv`, `<prefix>_acf_b.csv` and `<prefix>_qq.csv`.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Trace,
    Model,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Multiview,
    Interactive,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Sender,
    Receiver,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SourceArg::Trace)]
    source: SourceArg,
    /// Trace CSV, for `--source trace`.
    #[arg(long, required_if_eq("source", "trace"))]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "mvc-gop8")]
    structure: String,
    /// Model JSON, for `--source model`.
    #[arg(long, required_if_eq("source", "model"))]
    model: Option<PathBuf>,
    /// GOPs generated per run with `--source model`.
    #[arg(long, default_value_t = 2000)]
    gops: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Multiview)]
    mode: ModeArg,
    /// View-switching model JSON (required with `--mode interactive`).
    #[arg(long, required_if_eq("mode", "interactive"))]
    vsm: Option<PathBuf>,
    /// Simulation config JSON; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channel rate as a multiple of the average bit-rate.
    #[arg(long)]
    rate_ratio: Option<f64>,
    /// Prefetch delay in seconds.
    #[arg(long)]
    prefetch: Option<f64>,
    #[arg(long, value_enum, requires = "buffer_list")]
    sweep: Option<SweepArg>,
    /// Comma-separated buffer sizes in bits.
    #[arg(long, value_delimiter = ',', requires = "sweep")]
    buffer_list: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct VsmArgs {
    /// View-switching model JSON; the built-in four-view model if omitted.
    #[arg(long)]
    vsm: Option<PathBuf>,
    /// Schedule length in seconds.
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_schedule: PathBuf,
}

fn structure_arg(s: &str) -> Result<GopStructure, Error> {
    match s {
        "mvc-gop8" => Ok(GopStructure::mvc_gop8()),
        "mvc-gop4" => Ok(GopStructure::mvc_gop4()),
        path => io::read_structure(path),
    }
}

fn cmd_fit(a: &FitArgs, exec: Exec) -> Result<u8, Error> {
    let structure = structure_arg(&a.structure)?;
    let trace = io::read_trace(&a.trace, &structure)?;
    let mut config = FitConfig {
        num_states: a.states as usize,
        ll_threshold: a.ll_threshold,
        max_iters: a.max_iters,
        rng_seed: a.seed,
        duration_update: match a.duration_update {
            DurationArg::ClosedForm => DurationUpdate::ClosedForm,
            DurationArg::Censored => DurationUpdate::Censored,
        },
        ..Default::default()
    };
    config.trellis.exec = exec;
    let report = fit(&trace, &config)?;
    io::write_model(&StoredModel { structure, params: report.params.clone() }, &a.out_model)?;
    io::write_fit_report(&report, &a.report)?;
    eprintln!(
        "{} iterations, log-likelihood {:.4}{}",
        report.iterations,
        report.final_log_likelihood(),
        if report.converged { "" } else { " (not converged)" }
    );
    Ok(if report.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn cmd_generate(a: &GenerateArgs) -> Result<u8, Error> {
    if a.gops == 0 {
        return Err(Error::InvalidArgument("--gops must be positive".into()));
    }
    let m = io::read_model(&a.model)?;
    let trace = generate_trace(&m.params, &m.structure, a.gops, a.seed)?;
    io::write_trace(&trace, &a.out_trace)?;
    Ok(0)
}

fn series(trace: &Trace, view: &str) -> Result<Vec<f64>, Error> {
    if view == "all" {
        return Ok(trace.frame_series());
    }
    let v: usize = view
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("--view must be `all` or a view index, got {view:?}")))?;
    if v >= trace.structure().num_views() {
        return Err(Error::InvalidArgument(format!(
            "view {v} out of range (structure has {} views)",
            trace.structure().num_views()
        )));
    }
    Ok(trace.view_series(v))
}

fn cmd_stats(a: &StatsArgs) -> Result<u8, Error> {
    let structure = structure_arg(&a.structure)?;
    let xa = series(&io::read_trace(&a.trace_a, &structure)?, &a.view)?;
    let xb = series(&io::read_trace(&a.trace_b, &structure)?, &a.view)?;
    let ra = acf(&xa, a.max_lag).map_err(|e| tag(&a.trace_a, e))?;
    let rb = acf(&xb, a.max_lag).map_err(|e| tag(&a.trace_b, e))?;
    let qq = qq_points(&xa, &xb, a.qq_points)?;
    io::write_text(&io::acf_to_csv(&ra), io::with_suffix(&a.out_prefix, "_acf_a.csv"))?;
    io::write_text(&io::acf_to_csv(&rb), io::with_suffix(&a.out_prefix, "_acf_b.csv"))?;
    io::write_text(&io::qq_to_csv(&qq), io::with_suffix(&a.out_prefix, "_qq.csv"))?;
    Ok(0)
}

fn tag(path: &Path, e: Error) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

fn cmd_simulate(a: &SimulateArgs, exec: Exec) -> Result<u8, Error> {
    let mut config = match &a.config {
        Some(p) => io::read_sim_config(p)?,
        None => SimConfig::default(),
    };
    config.monte_carlo_runs = a.runs;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(r) = a.rate_ratio {
        config.channel_rate = ChannelRate::Ratio(r);
    }
    if let Some(d) = a.prefetch {
        config.prefetch_delay_s = d;
    }
    config.validate()?;
    let source = match a.source {
        SourceArg::Trace => {
            let structure = structure_arg(&a.structure)?;
            Source::Trace(io::read_trace(a.trace.as_ref().expect("required by clap"), &structure)?)
        }
        SourceArg::Model => {
            let m = io::read_model(a.model.as_ref().expect("required by clap"))?;
            Source::Model { params: m.params, structure: m.structure, gops: a.gops }
        }
    };
    let mode = match (a.mode, &a.vsm) {
        (ModeArg::Multiview, _) => Mode::Multiview,
        (ModeArg::Interactive, Some(p)) => Mode::InteractiveVsm(io::read_vsm(p)?),
        (ModeArg::Interactive, None) => unreachable!("required by clap"),
    };
    let rows: Vec<(Option<f64>, _)> = match a.sweep {
        Some(axis) => {
            let axis = match axis {
                SweepArg::Sender => SweepAxis::SenderBuffer,
                SweepArg::Receiver => SweepAxis::ReceiverBuffer,
            };
            sweep(&source, &mode, &config, axis, &a.buffer_list, exec)?
                .into_iter()
                .map(|(b, r)| (Some(b), r))
                .collect()
        }
        None => vec![(config.receiver_buffer_bits, run_experiment(&source, &mode, &config, exec)?)],
    };
    for (b, r) in &rows {
        let b = b.map_or_else(|| "inf".into(), |b| b.to_string());
        eprintln!(
            "buffer {b}: sender {:.4}, playout {:.4}, overall {:.4}",
            r.sender_loss.mean, r.playout_loss.mean, r.overall_loss.mean
        );
    }
    io::write_text(&io::sim_sweep_to_csv(&rows), &a.out)?;
    Ok(0)
}

fn cmd_vsm(a: &VsmArgs) -> Result<u8, Error> {
    let vsm = match &a.vsm {
        Some(p) => io::read_vsm(p)?,
        None => VsmParams::four_views(),
    };
    let schedule = generate_schedule(&vsm, a.horizon, a.seed)?;
    io::write_schedule(&schedule, &a.out_schedule)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, exec),
        Command::Generate(a) => cmd_generate(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Simulate(a) => cmd_simulate(a, exec),
        Command::Vsm(a) => cmd_vsm(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

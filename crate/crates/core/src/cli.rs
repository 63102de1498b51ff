//! Command-line front end. Every command is a thin wrapper over library calls.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use crate::config::{self, parse_quantity, LengthDim, ParamsConfig, ScenarioConfig, SpeedDim, SweepConfig, TimeDim};
use crate::error::{Error, Result};
use crate::harness::{self, Experiment, BUILD_ID};
use crate::kinematics::{ModelParams, StepSize};
use crate::models::ModelId;
use crate::numfmt::sig9;
use crate::oracles;
use crate::phase::{self, linspace, PhaseLabel, PlaneGrid, RegionLabel};
use crate::principles::PrincipleId;
use crate::sim;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_ASSERTION: i32 = 3;

const EXIT_CODES: &str = "Exit codes:
  0  success
  1  configuration or usage error
  2  model-domain failure (outputs are still written where possible)
  3  an asserted finding or oracle check failed";

#[derive(Debug, Parser)]
#[command(name = "carfollow", version = BUILD_ID, about = "Car-following simulation, phase analysis and principle audits", after_help = EXIT_CODES)]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one follower/leader scenario and write its trajectory CSV.
    Simulate(SimulateArgs),
    /// Label every point of a (v, z) grid with its phase and feasibility region.
    PhaseMap(GridArgs),
    /// Tabulate (dv/dt, dz/dt) on a (v, z) grid behind a stationary leader.
    VectorField(GridArgs),
    /// Steady-state speed and flow against density.
    Fd(FdArgs),
    /// Run a named replication experiment and write its bundle.
    Replicate(ReplicateArgs),
    /// Principle-compliance sweep over an initial-condition grid.
    Sweep(SweepArgs),
    /// Compare simulations or linearisations with closed forms.
    OracleCheck(OracleArgs),
    /// Smallest deceleration bound keeping the bounded Newell follower clear of the comfort jam spacing.
    BetaThreshold(BetaArgs),
}

fn time_arg(s: &str) -> std::result::Result<f64, String> {
    parse_quantity::<TimeDim>(s, Some("s")).map_err(|e| e.to_string())
}

fn speed_arg(s: &str) -> std::result::Result<f64, String> {
    parse_quantity::<SpeedDim>(s, Some("m/s")).map_err(|e| e.to_string())
}

fn length_arg(s: &str) -> std::result::Result<f64, String> {
    parse_quantity::<LengthDim>(s, Some("m")).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: Option<ModelId>,
    #[arg(long)]
    pub config: PathBuf,
    /// Step size, in seconds unless a unit is given.
    #[arg(long, value_parser = time_arg)]
    pub dt: Option<f64>,
    #[arg(long, value_parser = time_arg)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a principle audit as JSON.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArg {
    /// JSON parameter overrides with units, e.g. {"preset": "highway"}.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

impl ParamsArg {
    fn resolve(&self) -> Result<ModelParams> {
        match &self.params {
            None => Ok(ModelParams::default()),
            Some(p) => config::load::<ParamsConfig>(p)?.resolve(),
        }
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub model: ModelId,
    #[command(flatten)]
    pub params: ParamsArg,
    #[arg(long, value_parser = time_arg, default_value = "0.001")]
    pub dt: f64,
    #[arg(long, value_parser = speed_arg, default_value = "0")]
    pub v_min: f64,
    #[arg(long, value_parser = speed_arg, default_value = "35")]
    pub v_max: f64,
    #[arg(long, default_value_t = 71)]
    pub v_count: usize,
    #[arg(long, value_parser = length_arg, default_value = "0")]
    pub z_min: f64,
    #[arg(long, value_parser = length_arg, default_value = "100")]
    pub z_max: f64,
    #[arg(long, default_value_t = 101)]
    pub z_count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl GridArgs {
    fn grid(&self) -> PlaneGrid {
        PlaneGrid {
            v_min: self.v_min,
            v_max: self.v_max,
            v_count: self.v_count,
            z_min: self.z_min,
            z_max: self.z_max,
            z_count: self.z_count,
        }
    }
}

#[derive(Debug, Args)]
pub struct FdArgs {
    #[arg(long)]
    pub model: ModelId,
    #[command(flatten)]
    pub params: ParamsArg,
    /// Number of densities, evenly spaced on (0, jam density].
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    /// Measure speeds by simulating a platoon instead of the closed form.
    #[arg(long)]
    pub simulate: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// Experiment name, or "all".
    pub name: String,
    #[arg(long, default_value = "replication")]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OracleKind {
    Gipps,
    Idm,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub oracle: OracleKind,
    #[command(flatten)]
    pub params: ParamsArg,
    #[arg(long, value_parser = speed_arg, default_value = "30")]
    pub v0: f64,
    #[arg(long, value_parser = time_arg, default_value = "0.0001")]
    pub dt: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BetaArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    #[arg(long, value_parser = speed_arg, default_value = "30")]
    pub v0: f64,
    #[arg(long, value_parser = time_arg, default_value = "0.001")]
    pub dt: f64,
}

/// Maps a library error to the documented exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::InvalidParams(_)
        | Error::Unsupported(_)
        | Error::UnknownExperiment(_)
        | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_DOMAIN,
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<i32> {
    let cfg: ScenarioConfig = config::load(&a.config)?;
    let sc = cfg.resolve(config::Overrides {
        model: a.model,
        dt: a.dt,
        t_end: a.t_end,
    })?;
    let traj = sim::run(&sc)?;
    traj.write_csv(create(&a.out)?)?;
    if let Some(path) = &a.audit {
        write_json(&harness::audit_full(&traj, &PrincipleId::ALL)?, path)?;
    }
    match &traj.terminal_error {
        Some(e) => {
            warn!("run truncated at t={}: {}", e.t, e.message);
            eprintln!("{}: {}", e.kind, e.message);
            Ok(EXIT_DOMAIN)
        }
        None => Ok(EXIT_OK),
    }
}

#[derive(Serialize)]
struct LegendEntry {
    code: u8,
    label: &'static str,
}

#[derive(Serialize)]
struct Legend {
    model: ModelId,
    phase: Vec<LegendEntry>,
    region: Vec<LegendEntry>,
}

/// `map.csv` gets the sidecar `map.legend.json`.
pub fn legend_path(out: &Path) -> PathBuf {
    out.with_extension("legend.json")
}

fn phase_map(a: &GridArgs) -> Result<i32> {
    let params = a.params.resolve()?;
    let cells = phase::phase_map(a.model, &params, &a.grid(), StepSize::new(a.dt)?)?;
    let mut w = create(&a.out)?;
    writeln!(w, "v,z,phase,region")?;
    for c in &cells {
        writeln!(w, "{},{},{},{}", sig9(c.v), sig9(c.z), c.phase.code(), c.region.code())?;
    }
    w.flush()?;
    let legend = Legend {
        model: a.model,
        phase: PhaseLabel::ALL
            .iter()
            .map(|l| LegendEntry {
                code: l.code(),
                label: l.name(),
            })
            .collect(),
        region: RegionLabel::ALL
            .iter()
            .map(|r| LegendEntry {
                code: r.code(),
                label: r.name(),
            })
            .collect(),
    };
    write_json(&legend, &legend_path(&a.out))?;
    Ok(EXIT_OK)
}

fn vector_field(a: &GridArgs) -> Result<i32> {
    let params = a.params.resolve()?;
    let field = phase::vector_field(a.model, &params, &a.grid(), StepSize::new(a.dt)?)?;
    let mut w = create(&a.out)?;
    writeln!(w, "v,z,dvdt,dzdt,phase")?;
    for f in &field {
        writeln!(
            w,
            "{},{},{},{},{}",
            sig9(f.v),
            sig9(f.z),
            f.dvdt.map(sig9).unwrap_or_default(),
            sig9(f.dzdt),
            f.phase.csv_name()
        )?;
    }
    Ok(EXIT_OK)
}

fn fd(a: &FdArgs) -> Result<i32> {
    let params = a.params.resolve()?;
    if a.count == 0 {
        return Err(Error::InvalidArgument("--count must be at least 1".into()));
    }
    let kappa = params.jam_density();
    let ks = linspace(kappa / a.count as f64, kappa, a.count);
    let points = if a.simulate {
        ks.iter()
            .map(|&k| phase::fd_from_simulation(a.model, &params, k))
            .collect::<Result<Vec<_>>>()?
    } else {
        phase::fundamental_diagram(a.model, &params, &ks)?
    };
    let mut w = create(&a.out)?;
    writeln!(w, "k,v,q")?;
    for p in &points {
        writeln!(w, "{},{},{}", sig9(p.k), sig9(p.v), sig9(p.q))?;
    }
    Ok(EXIT_OK)
}

fn replicate(a: &ReplicateArgs) -> Result<i32> {
    let experiments: Vec<Experiment> = if a.name == "all" {
        Experiment::ALL.to_vec()
    } else {
        vec![a.name.parse()?]
    };
    let mut code = EXIT_OK;
    for e in experiments {
        info!("running {}", e.name());
        let bundle = harness::replicate(e, Some(&a.out), a.jobs)?;
        for f in bundle.report.findings.iter().filter(|f| f.asserted) {
            println!(
                "{} {}: {} (expected {}) {}",
                e.name(),
                f.id,
                sig9(f.observed),
                f.expected,
                if f.pass { "ok" } else { "FAILED" }
            );
        }
        if !bundle.all_asserted_pass() {
            code = EXIT_ASSERTION;
        }
    }
    Ok(code)
}

fn sweep(a: &SweepArgs) -> Result<i32> {
    let spec = config::load::<SweepConfig>(&a.config)?.resolve()?;
    let report = harness::sweep(&spec, a.jobs)?;
    write_json(&report, &a.out)?;
    Ok(EXIT_OK)
}

fn oracle_check(a: &OracleArgs) -> Result<i32> {
    let params = a.params.resolve()?;
    let report = match a.oracle {
        OracleKind::Gipps => oracles::gipps_oracle_check(&params, a.v0, StepSize::new(a.dt)?)?,
        OracleKind::Idm => oracles::idm_oracle_check(&params)?,
    };
    match &a.out {
        Some(path) => write_json(&report, path)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_ASSERTION })
}

fn beta_threshold(a: &BetaArgs) -> Result<i32> {
    let params = a.params.resolve()?;
    let t = harness::min_beta_for_compliance(&params, a.v0, StepSize::new(a.dt)?)?;
    println!("{}", serde_json::to_string_pretty(&t)?);
    Ok(EXIT_OK)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::PhaseMap(a) => phase_map(a),
        Command::VectorField(a) => vector_field(a),
        Command::Fd(a) => fd(a),
        Command::Replicate(a) => replicate(a),
        Command::Sweep(a) => sweep(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::BetaThreshold(a) => beta_threshold(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log)
        .try_init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

//! Command-line entry points: `generate`, `simulate`, `optimize`, and
//! `scaling`.
//!
//! Exit codes: 0 success, 2 usage errors (argument parsing), 3
//! validation/feasibility/config errors, 4 numeric failures.
//!
//! Configuration can come from a flat `key = value` file with
//! `[section]` headers (see [`FlatConfig`]); command-line flags override
//! file values. Worker count resolves flag, then the config file, then
//! the `SQUEEZETRACK_WORKERS` environment variable, then the hardware
//! default. Every command prints a JSON echo of its resolved inputs, so
//! a run is reproducible from its output alone.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::optimizer::{
    coordinate_search, read_search_csv, resume_search, sweep_flux, write_search_csv,
    write_sweep_csv, ParamPoint, SearchResult, SearchSpec,
};
use crate::scaling::{
    check_conditions, heisenberg_constant, predict_parameters, pulsed_constant, ScalingConstants,
};
use crate::simulator::{
    run_ensemble_with_workers, run_trajectory_traced, write_ensemble_csv, write_summary_json,
    write_trace_csv, SimConfig,
};
use crate::spectrum::{generate_phase_seeded, periodogram, spectral_density, SpectrumParams};

pub const WORKERS_ENV: &str = "SQUEEZETRACK_WORKERS";

/// Flat `key = value` configuration with `[section]` headers. Strict:
/// unknown sections, unknown keys, duplicate keys, and malformed values
/// are all errors. Full lines starting with `#` are comments.
#[derive(Debug, Default)]
pub struct FlatConfig {
    values: BTreeMap<String, String>,
}

const KNOWN_SECTIONS: [&str; 4] = ["spectrum", "simulation", "search", "output"];

impl FlatConfig {
    pub fn empty() -> Self {
        FlatConfig::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if !KNOWN_SECTIONS.contains(&name) {
                    return Err(Error::Config(format!(
                        "line {}: unknown section [{name}] (known: {})",
                        lineno + 1,
                        KNOWN_SECTIONS.join(", ")
                    )));
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let Some(section) = &section else {
                return Err(Error::Config(format!(
                    "line {}: key `{}` appears before any [section] header",
                    lineno + 1,
                    key.trim()
                )));
            };
            let full = format!("{section}.{}", key.trim());
            if values.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{full}`",
                    lineno + 1
                )));
            }
        }
        Ok(FlatConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("key `{key}`: expected {what}, got `{v}` ({e})"))
            }),
        }
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take_parsed(key, "a number")
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.take_parsed(key, "a nonnegative integer")
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.take_parsed(key, "a nonnegative integer")
    }

    pub fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(v) => match v.as_str() {
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                _ => Err(Error::Config(format!(
                    "key `{key}`: expected true or false, got `{v}`"
                ))),
            },
        }
    }

    pub fn take_string(&mut self, key: &str) -> Result<Option<String>> {
        Ok(self.values.remove(key))
    }

    /// All keys must have been consumed by now.
    pub fn finish(self) -> Result<()> {
        if self.values.is_empty() {
            Ok(())
        } else {
            let unknown: Vec<&str> = self.values.keys().map(|s| s.as_str()).collect();
            Err(Error::Config(format!(
                "unknown key(s): {}",
                unknown.join(", ")
            )))
        }
    }
}

#[derive(Parser)]
#[command(
    name = "squeezetrack",
    version,
    about = "Monte Carlo simulator for adaptive homodyne tracking of a power-law phase"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a phase trajectory CSV, optionally with an averaged
    /// periodogram for spectral verification
    Generate(GenerateArgs),
    /// Run a tracking ensemble; write a JSON summary plus optional
    /// ensemble and trace CSVs
    Simulate(SimulateArgs),
    /// Coordinate-search the loop parameters at one flux, or sweep an
    /// ascending flux grid
    Optimize(OptimizeArgs),
    /// Print scaling-law predictions, limit constants, and the
    /// consistency-condition report
    Scaling(ScalingArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Spectral exponent (> 1)
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Low-frequency regularization; defaults to 1e-3 * kappa
    #[arg(long)]
    gamma_relax: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 65536)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (`t,phi`)
    #[arg(long)]
    out: PathBuf,
    /// Also write a periodogram averaged over `periodogram-seeds`
    /// consecutive seeds (`omega,power,expected`)
    #[arg(long)]
    periodogram: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    periodogram_seeds: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat key = value config file; flags below override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma_relax: Option<f64>,
    /// Photon flux over kappa
    #[arg(long)]
    flux: Option<f64>,
    /// Cavity linewidth over kappa; defaults to the scaling prediction
    #[arg(long)]
    gamma: Option<f64>,
    /// Filter bandwidth over kappa; defaults to the scaling prediction
    #[arg(long)]
    chi: Option<f64>,
    /// Squeezing parameter; defaults to the scaling prediction
    #[arg(long)]
    r: Option<f64>,
    /// Estimate blend weight; defaults to the scaling prediction
    #[arg(long)]
    delta: Option<f64>,
    /// Warm-up window in units of 1/chi
    #[arg(long)]
    warmup: Option<f64>,
    /// Total simulated time in units of 1/chi
    #[arg(long)]
    total: Option<f64>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use unit prefactors instead of the shipped calibration when
    /// filling unspecified parameters
    #[arg(long)]
    unity_constants: bool,
    /// Summary JSON path; stdout when omitted
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Per-run ensemble CSV path
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Trace CSV path (`t,phi,phi_est,theta`, run 0)
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma_relax: Option<f64>,
    /// Single-point flux over kappa
    #[arg(long)]
    flux: Option<f64>,
    /// Ascending flux grid for a sweep, e.g. 1e2,1e3,1e4
    #[arg(long, value_delimiter = ',')]
    flux_grid: Option<Vec<f64>>,
    /// Initial gamma/kappa (defaults to the scaling prediction)
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    chi: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    total: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    unity_constants: bool,
    #[arg(long)]
    step_factor: Option<f64>,
    #[arg(long)]
    min_step_factor: Option<f64>,
    #[arg(long)]
    max_cycles: Option<usize>,
    #[arg(long)]
    search_runs: Option<u64>,
    #[arg(long)]
    confirm_runs: Option<u64>,
    /// Evaluate each proposal with a fresh seed instead of common
    /// random numbers
    #[arg(long)]
    fresh_seeds: bool,
    /// Coordinates to hold fixed, e.g. --freeze r,delta
    #[arg(long, value_delimiter = ',')]
    freeze: Option<Vec<String>>,
    /// Search-trace CSV path (single point); with --resume, the file is
    /// read first and rewritten extended
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Resume a single-point search from its saved trace CSV
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Result JSON path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep table CSV path
    #[arg(long)]
    sweep_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    p: Option<f64>,
    /// Evaluate parameter predictions and conditions at this flux
    #[arg(long)]
    flux: Option<f64>,
    /// Prefactor table (same JSON format as the shipped calibration)
    #[arg(long)]
    constants_file: Option<PathBuf>,
    /// Use the shipped calibrated prefactors
    #[arg(long)]
    calibrated: bool,
    /// Print a `p,c_z,c_a` CSV over this grid instead
    #[arg(long, value_delimiter = ',')]
    p_grid: Option<Vec<f64>>,
}

/// Run the CLI against process arguments; returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => cmd_generate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Optimize(args) => cmd_optimize(args),
        Command::Scaling(args) => cmd_scaling(args),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn resolve_workers(flag: Option<usize>, file: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if file.is_some() {
        return Ok(file);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v.parse().map_err(|_| {
                Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))
            })?;
            if n == 0 {
                return Err(Error::Config(format!("{WORKERS_ENV} must be at least 1")));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let gamma_relax = args.gamma_relax.unwrap_or(1e-3 * args.kappa);
    let params = SpectrumParams::new(args.p, args.kappa, gamma_relax)?;
    let traj = generate_phase_seeded(&params, args.samples, args.dt, args.seed)?;
    traj.write_csv(create(&args.out)?)?;

    if let Some(path) = &args.periodogram {
        if args.periodogram_seeds == 0 {
            return Err(Error::InvalidParameter(
                "periodogram-seeds must be at least 1".into(),
            ));
        }
        let mut mean: Vec<(f64, f64)> = Vec::new();
        for k in 0..args.periodogram_seeds {
            let t = if k == 0 {
                traj.clone()
            } else {
                generate_phase_seeded(&params, args.samples, args.dt, args.seed + k)?
            };
            let pg = periodogram(&t);
            if mean.is_empty() {
                mean = pg;
            } else {
                for (m, p) in mean.iter_mut().zip(pg) {
                    m.1 += p.1;
                }
            }
        }
        let inv = 1.0 / args.periodogram_seeds as f64;
        let n = args.samples as f64;
        let mut out = create(path)?;
        // expected power is exact on unpadded (power-of-two) grids
        writeln!(out, "omega,power,expected")?;
        for (k, (omega, sum)) in mean.iter().enumerate() {
            let mirror = 2.0 * std::f64::consts::PI * (n - k as f64) / (n * args.dt);
            let expected = spectral_density(&params, *omega) + spectral_density(&params, mirror);
            writeln!(out, "{:.16e},{:.16e},{:.16e}", omega, sum * inv, expected)?;
        }
    }

    let echo = serde_json::json!({
        "command": "generate",
        "p": args.p,
        "kappa": args.kappa,
        "gamma_relax": gamma_relax,
        "dt": args.dt,
        "samples": args.samples,
        "seed": args.seed,
        "out": args.out.display().to_string(),
        "periodogram": args.periodogram.as_ref().map(|p| p.display().to_string()),
        "periodogram_seeds": args.periodogram_seeds,
    });
    println!("{}", serde_json::to_string_pretty(&echo)?);
    Ok(())
}

// Shared simulate/optimize resolution: config file, then flags, then
// scaling-prediction fill-in for whatever is still missing.
struct ResolvedSim {
    config: SimConfig,
    workers: Option<usize>,
    file_outputs: FileOutputs,
}

#[derive(Default)]
struct FileOutputs {
    summary: Option<PathBuf>,
    ensemble: Option<PathBuf>,
    trace: Option<PathBuf>,
    sweep_csv: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
fn resolve_sim_config(
    file: &mut FlatConfig,
    p: Option<f64>,
    kappa: Option<f64>,
    gamma_relax: Option<f64>,
    flux: Option<f64>,
    gamma: Option<f64>,
    chi: Option<f64>,
    r: Option<f64>,
    delta: Option<f64>,
    warmup: Option<f64>,
    total: Option<f64>,
    runs: Option<u64>,
    seed: Option<u64>,
    unity_constants: bool,
) -> Result<SimConfig> {
    let p = p
        .or(file.take_f64("spectrum.p")?)
        .ok_or_else(|| Error::Config("p is required (flag --p or [spectrum] p)".into()))?;
    let kappa = kappa.or(file.take_f64("spectrum.kappa")?).unwrap_or(1.0);
    let gamma_relax = gamma_relax
        .or(file.take_f64("spectrum.gamma_relax")?)
        .unwrap_or(1e-3 * kappa);
    let spectrum = SpectrumParams::new(p, kappa, gamma_relax)?;

    let flux = flux
        .or(file.take_f64("simulation.flux_over_kappa")?)
        .ok_or_else(|| {
            Error::Config("flux is required (flag --flux or [simulation] flux_over_kappa)".into())
        })?;
    let gamma = gamma.or(file.take_f64("simulation.gamma_over_kappa")?);
    let chi = chi.or(file.take_f64("simulation.chi_over_kappa")?);
    let r = r.or(file.take_f64("simulation.r")?);
    let delta = delta.or(file.take_f64("simulation.delta")?);

    // fill whatever is still unset from the scaling laws
    let (gamma, chi, r, delta) = if gamma.is_none() || chi.is_none() || r.is_none() || delta.is_none()
    {
        let constants = if unity_constants {
            ScalingConstants::unity()
        } else {
            ScalingConstants::calibrated(p)
        };
        let pred = predict_parameters(p, flux, &constants)?;
        (
            gamma.unwrap_or(pred.gamma_over_kappa),
            chi.unwrap_or(pred.chi_over_kappa),
            r.unwrap_or(pred.er.ln()),
            delta.unwrap_or(pred.delta.min(1.0)),
        )
    } else {
        (gamma.unwrap(), chi.unwrap(), r.unwrap(), delta.unwrap())
    };

    let mut config = SimConfig::new(spectrum, flux, gamma, chi, r, delta);
    if let Some(v) = warmup.or(file.take_f64("simulation.warmup_multiple")?) {
        config.warmup_multiple = v;
    }
    if let Some(v) = total.or(file.take_f64("simulation.total_multiple")?) {
        config.total_multiple = v;
    }
    if let Some(v) = runs.or(file.take_u64("simulation.runs")?) {
        config.runs = v;
    }
    if let Some(v) = seed.or(file.take_u64("simulation.base_seed")?) {
        config.base_seed = v;
    }
    Ok(config)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut file = match &args.config {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::empty(),
    };
    let config = resolve_sim_config(
        &mut file,
        args.p,
        args.kappa,
        args.gamma_relax,
        args.flux,
        args.gamma,
        args.chi,
        args.r,
        args.delta,
        args.warmup,
        args.total,
        args.runs,
        args.seed,
        args.unity_constants,
    )?;
    let outputs = FileOutputs {
        summary: args.summary.or(file.take_string("output.summary")?.map(PathBuf::from)),
        ensemble: args
            .ensemble
            .or(file.take_string("output.ensemble")?.map(PathBuf::from)),
        trace: args.trace.or(file.take_string("output.trace")?.map(PathBuf::from)),
        ..FileOutputs::default()
    };
    let workers = resolve_workers(args.workers, file.take_usize("output.workers")?)?;
    file.finish()?;

    // reject infeasible parameters before any run
    config.validate()?;
    let resolved = ResolvedSim {
        config,
        workers,
        file_outputs: outputs,
    };

    let result = run_ensemble_with_workers(&resolved.config, resolved.workers)?;
    if let Some(path) = &resolved.file_outputs.ensemble {
        write_ensemble_csv(&result, create(path)?)?;
    }
    if let Some(path) = &resolved.file_outputs.trace {
        let traced = run_trajectory_traced(&resolved.config, 0)?;
        write_trace_csv(traced.trace.as_deref().unwrap_or(&[]), create(path)?)?;
    }
    match &resolved.file_outputs.summary {
        Some(path) => write_summary_json(&result, create(path)?)?,
        None => {
            let stdout = std::io::stdout();
            write_summary_json(&result, stdout.lock())?;
        }
    }
    Ok(())
}

fn parse_freeze(freeze: &[String]) -> Result<[bool; 4]> {
    let mut active = [true; 4];
    for name in freeze {
        let idx = match name.trim() {
            "chi" => 0,
            "r" => 1,
            "gamma" => 2,
            "delta" => 3,
            other => {
                return Err(Error::Config(format!(
                    "cannot freeze `{other}` (choose from chi, r, gamma, delta)"
                )))
            }
        };
        active[idx] = false;
    }
    Ok(active)
}

fn cmd_optimize(args: OptimizeArgs) -> Result<()> {
    let mut file = match &args.config {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::empty(),
    };
    let template = resolve_sim_config(
        &mut file,
        args.p,
        args.kappa,
        args.gamma_relax,
        args.flux.or_else(|| args.flux_grid.as_ref().and_then(|g| g.first().copied())),
        args.gamma,
        args.chi,
        args.r,
        args.delta,
        args.warmup,
        args.total,
        None,
        args.seed,
        args.unity_constants,
    )?;
    let initial = ParamPoint {
        chi_over_kappa: template.chi_over_kappa,
        r: template.r,
        gamma_over_kappa: template.gamma_over_kappa,
        delta: template.delta,
    };
    // the search itself picks run counts via search_runs / confirm_runs
    let mut spec = SearchSpec::new(template, initial);
    if let Some(v) = args.step_factor.or(file.take_f64("search.step_factor")?) {
        spec.step_factor = v;
    }
    if let Some(v) = args
        .min_step_factor
        .or(file.take_f64("search.min_step_factor")?)
    {
        spec.min_step_factor = v;
    }
    if let Some(v) = args.max_cycles.or(file.take_usize("search.max_cycles")?) {
        spec.max_cycles = v;
    }
    if let Some(v) = args.search_runs.or(file.take_u64("search.search_runs")?) {
        spec.search_runs = v;
    }
    if let Some(v) = args.confirm_runs.or(file.take_u64("search.confirm_runs")?) {
        spec.confirm_runs = v;
    }
    if args.fresh_seeds {
        spec.common_random_numbers = false;
    } else if let Some(v) = file.take_bool("search.common_random_numbers")? {
        spec.common_random_numbers = v;
    }
    let freeze_file = file.take_string("search.freeze")?;
    if let Some(list) = &args.freeze {
        spec.active = parse_freeze(list)?;
    } else if let Some(list) = freeze_file {
        let names: Vec<String> = list.split(',').map(|s| s.to_string()).collect();
        spec.active = parse_freeze(&names)?;
    }
    let grid_file = file.take_string("search.flux_grid")?;
    let flux_grid: Option<Vec<f64>> = match (&args.flux_grid, grid_file) {
        (Some(g), _) => Some(g.clone()),
        (None, Some(list)) => Some(
            list.split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| {
                        Error::Config(format!("search.flux_grid: bad value `{s}` ({e})"))
                    })
                })
                .collect::<Result<_>>()?,
        ),
        (None, None) => None,
    };
    let outputs = FileOutputs {
        trace: args.trace.or(file.take_string("output.trace")?.map(PathBuf::from)),
        out: args.out.or(file.take_string("output.out")?.map(PathBuf::from)),
        sweep_csv: args
            .sweep_csv
            .or(file.take_string("output.sweep_csv")?.map(PathBuf::from)),
        ..FileOutputs::default()
    };
    file.finish()?;

    match flux_grid {
        Some(grid) => {
            let table = sweep_flux(&spec, &grid)?;
            if let Some(path) = &outputs.sweep_csv {
                write_sweep_csv(&table, create(path)?)?;
            }
            // echo the spec so the sweep is reproducible from this file alone
            let report = serde_json::json!({ "spec": spec, "sweep": table });
            match &outputs.out {
                Some(path) => {
                    let mut w = create(path)?;
                    serde_json::to_writer_pretty(&mut w, &report)?;
                    writeln!(w)?;
                }
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(())
        }
        None => {
            if args.flux.is_none() {
                return Err(Error::Config(
                    "either --flux or --flux-grid is required".into(),
                ));
            }
            let result = match &args.resume {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| {
                        Error::Config(format!("cannot read {}: {e}", path.display()))
                    })?;
                    let prior = read_search_csv(text.as_bytes())?;
                    resume_search(&spec, &prior)?
                }
                None => coordinate_search(&spec)?,
            };
            if let Some(path) = outputs.trace.as_ref().or(args.resume.as_ref()) {
                write_search_csv(&result.trace.entries, create(path)?)?;
            }
            let report = single_point_report(&spec, &result);
            match &outputs.out {
                Some(path) => {
                    let mut w = create(path)?;
                    serde_json::to_writer_pretty(&mut w, &report)?;
                    writeln!(w)?;
                }
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(())
        }
    }
}

fn single_point_report(spec: &SearchSpec, result: &SearchResult) -> serde_json::Value {
    serde_json::json!({
        "spec": spec,
        "best": {
            "chi_over_kappa": result.best.chi_over_kappa,
            "r": result.best.r,
            "er": result.best.er(),
            "gamma_over_kappa": result.best.gamma_over_kappa,
            "delta": result.best.delta,
        },
        "mse": result.mse,
        "stderr_mse": result.stderr,
        "stop": result.stop,
        "evaluations": result.evaluations,
        "final_step_factor": result.final_step_factor,
    })
}

fn load_constants_file(path: &Path, p: f64) -> Result<ScalingConstants> {
    #[derive(serde::Deserialize)]
    struct Entry {
        p: f64,
        #[serde(flatten)]
        constants: ScalingConstants,
    }
    #[derive(serde::Deserialize)]
    struct File {
        #[allow(dead_code)]
        version: u32,
        entries: Vec<Entry>,
    }
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let parsed: File = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parsed
        .entries
        .iter()
        .find(|e| (e.p - p).abs() < 1e-9)
        .map(|e| e.constants)
        .ok_or_else(|| {
            let available: Vec<String> = parsed.entries.iter().map(|e| e.p.to_string()).collect();
            Error::Config(format!(
                "{}: no entry for p = {p} (available: {})",
                path.display(),
                available.join(", ")
            ))
        })
}

fn cmd_scaling(args: ScalingArgs) -> Result<()> {
    if let Some(grid) = &args.p_grid {
        println!("p,c_z,c_a");
        for &p in grid {
            println!(
                "{:.16e},{:.16e},{:.16e}",
                p,
                heisenberg_constant(p)?,
                pulsed_constant(p)?
            );
        }
        return Ok(());
    }
    let p = args
        .p
        .ok_or_else(|| Error::Config("--p is required (or use --p-grid)".into()))?;
    let constants = match (&args.constants_file, args.calibrated) {
        (Some(path), _) => load_constants_file(path, p)?,
        (None, true) => ScalingConstants::calibrated(p),
        (None, false) => ScalingConstants::unity(),
    };
    let exponents = serde_json::json!({
        "er": (p - 1.0) / (2.0 * p + 2.0),
        "chi_over_kappa": 2.0 / (p + 1.0),
        "gamma_over_kappa": (p + 3.0) / (2.0 * p + 2.0),
        "delta": -(p - 1.0) / (p + 2.0),
        "mse": -2.0 * (p - 1.0) / (p + 1.0),
        "sql_mse": -(p - 1.0) / p,
    });
    let mut report = serde_json::json!({
        "p": p,
        "constants": constants,
        "exponents": exponents,
        "heisenberg_constant": heisenberg_constant(p)?,
        "pulsed_constant": pulsed_constant(p)?,
    });
    if let Some(flux) = args.flux {
        let pred = predict_parameters(p, flux, &constants)?;
        report["prediction"] = serde_json::to_value(&pred)?;
        report["conditions"] = serde_json::to_value(check_conditions(&pred))?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

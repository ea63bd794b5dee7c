//! Command-line front end: evaluate transmission spectra and field maps,
//! fit dissipation rates to measured traces, classify the coupling regime,
//! and sweep coupling tables along a sample-position axis.
//!
//! Exit codes: 0 success, 1 computation failure (a fit or classification
//! that legitimately cannot produce a result), 2 usage or input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use magscatter::analysis::{classify_regime, RegimeWindows, TrackingOptions};
use magscatter::error::{FitError, PositionError};
use magscatter::fit::{levenberg_marquardt, FitProblem, FreeParam, ParamHandle};
use magscatter::model::{DiagonalConvention, FieldPoint, SystemModel};
use magscatter::possweep::{
    regime_profile, DissipationSet, MagnonSettings, PositionTable,
};
use magscatter::reference;
use magscatter::sweep::{
    export_csv, export_layers_csv, export_metadata, run_sweep, Grid, SpectrumMap,
};
use magscatter::traces::load_s21_db;

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "magscatter",
    version,
    about = "Two-port cavity-magnon scattering: spectra, maps, fits, regimes"
)]
struct Cli {
    /// Size of the worker pool for grid sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON run-configuration file; explicit flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transmission/reflection spectrum at a fixed static field.
    Spectrum(SpectrumArgs),
    /// Frequency-field map of the derived layers (|S21|, |S12|, isolation, phase).
    Map(MapArgs),
    /// Fit dissipation rates (and optionally mode frequencies) to a measured trace.
    Fit(FitArgs),
    /// Classify the magnon-antiresonance coupling regime of a model.
    Regime(RegimeArgs),
    /// Classify regimes along a tabulated sample-position axis.
    Possweep(PossweepArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// JSON model file.
    #[arg(long)]
    model: Option<PathBuf>,

    /// Override the model's decay-on-diagonal convention
    /// ("paper" is an alias for internal-only).
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    /// Internal plus external rates on the mode diagonal.
    TotalDecay,
    /// Internal rate only on the mode diagonal.
    InternalOnly,
    /// Alias for internal-only.
    Paper,
}

impl ConventionArg {
    fn diagonal(self) -> DiagonalConvention {
        match self {
            ConventionArg::TotalDecay => DiagonalConvention::TotalDecay,
            ConventionArg::InternalOnly | ConventionArg::Paper => {
                DiagonalConvention::InternalOnly
            }
        }
    }
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Static field in tesla.
    #[arg(long, default_value_t = 0.0)]
    field: f64,

    /// Frequency span as lo:hi:n in GHz (default spans all four reference
    /// modes at 1 MHz spacing).
    #[arg(long)]
    grid: Option<String>,

    /// Output CSV (layers: f_GHz, mu0H_T, s21_dB, s12_dB, iso_dB, phi21_rad).
    #[arg(long, default_value = "spectrum.csv")]
    out: PathBuf,

    /// Also write the complex scattering matrix to this CSV.
    #[arg(long)]
    raw: Option<PathBuf>,

    /// Write a gnuplot script alongside the data.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Grid as f_lo:f_hi:nf,h_lo:h_hi:nh (GHz and tesla). A single-point
    /// field axis degenerates to a fixed-field spectrum.
    #[arg(long)]
    grid: Option<String>,

    /// Output CSV (layers: f_GHz, mu0H_T, s21_dB, s12_dB, iso_dB, phi21_rad).
    #[arg(long, default_value = "map.csv")]
    out: PathBuf,

    /// Also write the complex scattering matrix to this CSV.
    #[arg(long)]
    raw: Option<PathBuf>,

    /// Write a gnuplot script alongside the data.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Measured trace: two-column CSV (f_GHz, s21_dB) or a two-port
    /// Touchstone file (.s2p).
    #[arg(long)]
    trace: PathBuf,

    /// Static field in tesla at which the trace was taken.
    #[arg(long, default_value_t = 0.0)]
    field: f64,

    /// Free parameters, comma-separated: f_c[u], gamma_int[u],
    /// gamma_ext[u][p], gamma_ext_tied[u].
    #[arg(long, value_delimiter = ',', required = true)]
    free: Vec<String>,

    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RegimeArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Tracking window as f_lo:f_hi:nf,h_lo:h_hi:nh (GHz and tesla).
    #[arg(long)]
    windows: Option<String>,

    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PossweepArgs {
    /// Position table CSV: y_mm, mode_index, f_GHz, g_MHz, phi0_rad,
    /// phi1_rad, theta_rad.
    #[arg(long)]
    table: PathBuf,

    /// Position step in mm.
    #[arg(long, default_value_t = 0.25)]
    step: f64,

    /// Tracking window as f_lo:f_hi:nf,h_lo:h_hi:nh (GHz and tesla).
    #[arg(long)]
    windows: Option<String>,

    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Run configuration file
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    model: Option<PathBuf>,
    convention: Option<String>,
    grid: Option<String>,
    windows: Option<String>,
    threads: Option<usize>,
    dissipation: Option<DissipationConfig>,
    magnon: Option<MagnonConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DissipationConfig {
    #[serde(rename = "gamma_int_MHz")]
    gamma_int_mhz: Vec<f64>,
    #[serde(rename = "gamma_ext_MHz")]
    gamma_ext_mhz: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MagnonConfig {
    #[serde(rename = "gyro_GHz_per_T")]
    gyro_ghz_per_t: f64,
    alpha: f64,
    #[serde(rename = "k_m_MHz")]
    k_m_mhz: Option<f64>,
}

// ---------------------------------------------------------------------------
// Failure plumbing
// ---------------------------------------------------------------------------

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn fit_failure(err: FitError) -> Failure {
    match err {
        // Problems with how the fit was posed are usage errors.
        FitError::NoFreeParameters
        | FitError::NoObservations
        | FitError::BadBounds(_)
        | FitError::StartOutOfBounds { .. }
        | FitError::WeightLengthMismatch { .. }
        | FitError::UnknownHandle(_)
        | FitError::EmptyBatch => usage(err.to_string()),
        // Everything else is a legitimate numerical failure.
        other => runtime(other.to_string()),
    }
}

fn possweep_failure(err: PositionError) -> Failure {
    match err {
        PositionError::Trace(_)
        | PositionError::TooFewRows(_)
        | PositionError::NonMonotone
        | PositionError::BadStep(_)
        | PositionError::ModeCountMismatch { .. } => usage(err.to_string()),
        other => runtime(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Parsing helpers
// ---------------------------------------------------------------------------

/// Parse "lo:hi:n" into an axis specification.
fn parse_span(text: &str, what: &str) -> Result<(f64, f64, usize), Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || {
        usage(format!(
            "invalid {what} span '{text}': expected lo:hi:n (e.g. 10.6:12.4:901)"
        ))
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !(lo.is_finite() && hi.is_finite()) || (n > 1 && !(lo < hi)) {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

/// Parse "f_lo:f_hi:nf,h_lo:h_hi:nh" (the field part optional) into a grid.
fn parse_grid(text: &str, default_h: (f64, f64, usize)) -> Result<Grid, Failure> {
    let mut parts = text.splitn(2, ',');
    let f_spec = parts.next().unwrap_or("");
    let (f_lo, f_hi, nf) = parse_span(f_spec, "frequency")?;
    let (h_lo, h_hi, nh) = match parts.next() {
        Some(h_spec) => parse_span(h_spec, "field")?,
        None => default_h,
    };
    Grid::uniform(f_lo, f_hi, nf, h_lo, h_hi, nh)
        .map_err(|e| usage(format!("invalid grid '{text}': {e}")))
}

fn parse_windows(text: &str) -> Result<RegimeWindows, Failure> {
    let mut parts = text.splitn(2, ',');
    let (f_lo, f_hi, nf) = parse_span(parts.next().unwrap_or(""), "frequency")?;
    let span = parts
        .next()
        .ok_or_else(|| usage(format!("window '{text}' is missing the field part")))?;
    let (h_lo, h_hi, nh) = parse_span(span, "field")?;
    Ok(RegimeWindows {
        f_lo_ghz: f_lo,
        f_hi_ghz: f_hi,
        nf,
        h_lo_t: h_lo,
        h_hi_t: h_hi,
        nh,
    })
}

fn parse_convention(text: &str) -> Result<DiagonalConvention, Failure> {
    match text {
        "total-decay" => Ok(DiagonalConvention::TotalDecay),
        "internal-only" | "paper" => Ok(DiagonalConvention::InternalOnly),
        other => Err(usage(format!(
            "unknown convention '{other}' (expected total-decay, internal-only, or paper)"
        ))),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config '{}': {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid config '{}': {e}", path.display())))
}

/// Resolve the model: the --model flag wins over the config file entry; the
/// --convention flag wins over the config convention.
fn load_model(args: &ModelArgs, config: &RunConfig) -> Result<SystemModel, Failure> {
    let path = args
        .model
        .as_ref()
        .or(config.model.as_ref())
        .ok_or_else(|| usage("no model given: pass --model or set \"model\" in the config"))?;
    let mut model = SystemModel::from_json_file(path).map_err(usage)?;
    let diagonal = match (&args.convention, &config.convention) {
        (Some(flag), _) => Some(flag.diagonal()),
        (None, Some(text)) => Some(parse_convention(text)?),
        (None, None) => None,
    };
    if let Some(d) = diagonal {
        model.conventions.diagonal = d;
    }
    Ok(model)
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| runtime(format!("cannot serialize result: {e}")))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| runtime(format!("cannot write '{}': {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Sweep-backed commands
// ---------------------------------------------------------------------------

fn warn_if_ill_conditioned(map: &SpectrumMap) {
    let cond = map.worst_condition();
    if cond > 1e12 {
        eprintln!(
            "warning: linear solves reached a condition estimate of {cond:.3e}; \
             scattering values near the sharpest resonance may lose precision"
        );
    }
    if map.any_singular() {
        eprintln!(
            "warning: exactly singular grid points were flagged (NaN in the output layers)"
        );
    }
}

fn run_map_like(
    model: &SystemModel,
    grid: &Grid,
    out: &Path,
    raw: Option<&Path>,
    gnuplot: Option<&Path>,
    heatmap: bool,
) -> Result<(), Failure> {
    let map = run_sweep(model, grid).map_err(|e| runtime(e.to_string()))?;
    warn_if_ill_conditioned(&map);
    export_layers_csv(&map, out)
        .map_err(|e| runtime(format!("cannot write '{}': {e}", out.display())))?;
    let meta_path = out.with_extension("meta.json");
    export_metadata(model, &map, &meta_path)
        .map_err(|e| runtime(format!("cannot write '{}': {e}", meta_path.display())))?;
    if let Some(raw_path) = raw {
        export_csv(&map, raw_path)
            .map_err(|e| runtime(format!("cannot write '{}': {e}", raw_path.display())))?;
    }
    if let Some(script) = gnuplot {
        let text = if heatmap {
            gnuplot_heatmap(out, grid.nf())
        } else {
            gnuplot_trace(out)
        };
        std::fs::write(script, text)
            .map_err(|e| runtime(format!("cannot write '{}': {e}", script.display())))?;
    }
    Ok(())
}

fn gnuplot_trace(data: &Path) -> String {
    format!(
        "set datafile separator ','\n\
         set xlabel 'f (GHz)'\n\
         set ylabel '|S21| (dB)'\n\
         set grid\n\
         plot '{}' skip 1 using 1:3 with lines title 'S21', \\\n\
         \x20    '' skip 1 using 1:4 with lines title 'S12'\n",
        data.display()
    )
}

fn gnuplot_heatmap(data: &Path, nf: usize) -> String {
    format!(
        "set datafile separator ','\n\
         set xlabel 'f (GHz)'\n\
         set ylabel 'mu0 H (T)'\n\
         set view map\n\
         splot '{}' skip 1 using 1:2:3 every :::0::{} with pm3d title '|S21| (dB)'\n",
        data.display(),
        nf.saturating_sub(1)
    )
}

fn cmd_spectrum(args: &SpectrumArgs, config: &RunConfig) -> Result<(), Failure> {
    let model = load_model(&args.model, config)?;
    FieldPoint::new(args.field).map_err(|e| usage(e.to_string()))?;
    let span = args.grid.as_deref().or(config.grid.as_deref());
    let (lo, hi, n) = match span {
        Some(text) => parse_span(text, "frequency")?,
        None => (3.3, 15.7, 12401),
    };
    let grid = Grid::single_field(lo, hi, n, args.field)
        .map_err(|e| usage(format!("invalid frequency span: {e}")))?;
    run_map_like(
        &model,
        &grid,
        &args.out,
        args.raw.as_deref(),
        args.gnuplot.as_deref(),
        false,
    )
}

fn cmd_map(args: &MapArgs, config: &RunConfig) -> Result<(), Failure> {
    let model = load_model(&args.model, config)?;
    let default_h = (0.38, 0.42, 201);
    let grid = match args.grid.as_deref().or(config.grid.as_deref()) {
        Some(text) => parse_grid(text, default_h)?,
        None => Grid::uniform(11.0, 12.0, 401, default_h.0, default_h.1, default_h.2)
            .expect("default map grid is valid"),
    };
    // A one-point field axis is simply a fixed-field spectrum.
    let heatmap = grid.nh() > 1;
    run_map_like(
        &model,
        &grid,
        &args.out,
        args.raw.as_deref(),
        args.gnuplot.as_deref(),
        heatmap,
    )
}

// ---------------------------------------------------------------------------
// Fit / regime / possweep commands
// ---------------------------------------------------------------------------

fn cmd_fit(args: &FitArgs, config: &RunConfig) -> Result<(), Failure> {
    let model = load_model(&args.model, config)?;
    let field = FieldPoint::new(args.field).map_err(|e| usage(e.to_string()))?;
    let observed = load_s21_db(&args.trace).map_err(|e| usage(e.to_string()))?;
    let mut free = Vec::with_capacity(args.free.len());
    for name in &args.free {
        let handle: ParamHandle = name
            .trim()
            .parse()
            .map_err(|e: FitError| usage(e.to_string()))?;
        free.push(FreeParam::new(handle));
    }
    let problem = FitProblem {
        base: model,
        field,
        observed,
        free,
        weights: None,
    };
    let result = levenberg_marquardt(&problem).map_err(fit_failure)?;
    if !result.converged {
        eprintln!(
            "warning: no convergence within {} iterations (final residual norm {:.3e})",
            result.iterations, result.residual_norm
        );
    }
    write_json(&result, args.out.as_deref())
}

fn cmd_regime(args: &RegimeArgs, config: &RunConfig) -> Result<(), Failure> {
    let model = load_model(&args.model, config)?;
    let windows = match args.windows.as_deref().or(config.windows.as_deref()) {
        Some(text) => parse_windows(text)?,
        None => RegimeWindows::default(),
    };
    let report = classify_regime(&model, &windows, &TrackingOptions::default())
        .map_err(|e| runtime(e.to_string()))?;
    write_json(&report, args.out.as_deref())
}

fn cmd_possweep(args: &PossweepArgs, config: &RunConfig) -> Result<(), Failure> {
    let table = PositionTable::from_csv(&args.table).map_err(possweep_failure)?;
    let windows = match args.windows.as_deref().or(config.windows.as_deref()) {
        Some(text) => parse_windows(text)?,
        None => RegimeWindows::default(),
    };
    let diss = match &config.dissipation {
        Some(d) => DissipationSet {
            gamma_int_mhz: d.gamma_int_mhz.clone(),
            gamma_ext_mhz: d.gamma_ext_mhz.clone(),
        },
        None => reference::dissipation(),
    };
    let magnon = match &config.magnon {
        Some(m) => MagnonSettings {
            gyro_ghz_per_t: m.gyro_ghz_per_t,
            alpha: m.alpha,
            k_m_mhz: m.k_m_mhz,
        },
        None => reference::magnon_settings(),
    };
    let profile = regime_profile(
        &table,
        args.step,
        &diss,
        &magnon,
        &windows,
        &TrackingOptions::default(),
    )
    .map_err(possweep_failure)?;
    for warning in &profile.warnings {
        eprintln!("warning: {warning}");
    }
    write_json(&profile, args.out.as_deref())
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load_config(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(config.threads) {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot configure worker pool: {e}")))?;
    }
    match &cli.command {
        Command::Spectrum(args) => cmd_spectrum(args, &config),
        Command::Map(args) => cmd_map(args, &config),
        Command::Fit(args) => cmd_fit(args, &config),
        Command::Regime(args) => cmd_regime(args, &config),
        Command::Possweep(args) => cmd_possweep(args, &config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

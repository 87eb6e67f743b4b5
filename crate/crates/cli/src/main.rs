//! Command-line front end: sweeps, single-point shaping, Monte Carlo
//! cross-checks, and received-value histograms.
//!
//! Exit codes: 0 success, 2 invalid parameters or configuration, 3 numerical
//! failure (non-convergence, degenerate noise, accuracy miss, cost bound,
//! all sweep cells failed), 4 I/O failure. `RINSHAPER_THREADS` caps the
//! worker pool.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rinshaper::{
    decision_thresholds, mutual_information, normalize_noise, optimize_constellation,
    received_histogram, relaxation_report, run_sweep, ser_analytic, simulate, Error, LinkParams,
    OptimizerSettings, PamConstellation, Preset, Result, SimBudget, SweepConfig,
};

#[derive(Parser)]
#[command(
    name = "rinshaper",
    version,
    about = "SER analysis and geometric shaping for RIN-limited PAM links"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate an (OMA, RIN) grid and emit CSV or JSON.
    Sweep(SweepArgs),
    /// Shape the constellation at one operating point and print it.
    Optimize(OptimizeArgs),
    /// Monte Carlo SER at one operating point, compared to the analytic value.
    Simulate(SimulateArgs),
    /// Per-symbol received-value histograms, written as CSV.
    Histogram(HistogramArgs),
}

// ---------------------------------------------------------------- flags

/// Link parameter overrides shared by the single-point subcommands. Values
/// not given fall back to the chosen preset.
#[derive(Args)]
struct LinkFlags {
    /// Parameter preset to start from: "first" or "revised".
    #[arg(long, default_value = "first")]
    preset: String,
    /// Receiver noise bandwidth in GHz.
    #[arg(long)]
    bandwidth_ghz: Option<f64>,
    /// Symbol rate in GBd.
    #[arg(long)]
    symbol_rate_gbd: Option<f64>,
    /// Extinction ratio in dB.
    #[arg(long)]
    er_db: Option<f64>,
    /// Fiber attenuation in dB/km.
    #[arg(long)]
    atten_db_per_km: Option<f64>,
    /// Fiber length in km.
    #[arg(long)]
    fiber_length_km: Option<f64>,
    /// Photodiode responsivity in A/W.
    #[arg(long)]
    responsivity: Option<f64>,
    /// Receiver noise-equivalent power in pA/sqrt(Hz).
    #[arg(long)]
    nep_pa: Option<f64>,
    /// Bias override: use this beta instead of deriving it from er_db.
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// PAM order M.
    #[arg(long, default_value_t = 6)]
    order: usize,
}

impl LinkFlags {
    fn params(&self, oma_dbm: f64, rin_db_per_hz: f64) -> Result<LinkParams> {
        let preset: Preset = self.preset.parse()?;
        let mut p = match preset {
            Preset::First => LinkParams::preset_first(),
            Preset::Revised => LinkParams::preset_revised(),
        };
        if let Some(v) = self.bandwidth_ghz {
            p.noise_bandwidth_hz = v * 1e9;
        }
        if let Some(v) = self.symbol_rate_gbd {
            p.symbol_rate_baud = v * 1e9;
        }
        if let Some(v) = self.er_db {
            p.er_db = v;
        }
        if let Some(v) = self.atten_db_per_km {
            p.atten_db_per_km = v;
        }
        if let Some(v) = self.fiber_length_km {
            p.fiber_length_km = v;
        }
        if let Some(v) = self.responsivity {
            p.responsivity_a_per_w = v;
        }
        if let Some(v) = self.nep_pa {
            p.nep_a_per_sqrt_hz = v * 1e-12;
        }
        if let Some(v) = self.beta {
            p.beta_override = Some(v);
        }
        p.oma_dbm = oma_dbm;
        p.rin_db_per_hz = rin_db_per_hz;
        p.validate()?;
        Ok(p)
    }
}

/// RIN accepts "-inf" for the AWGN mode, so it cannot be a plain f64 flag.
fn parse_rin(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{e}"))?;
    if v.is_nan() || v == f64::INFINITY {
        return Err("RIN must be finite or -inf".to_string());
    }
    Ok(v)
}

#[derive(Args)]
struct SweepArgs {
    /// TOML config file; its keys override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter preset: "first" or "revised".
    #[arg(long, default_value = "first")]
    preset: String,
    /// Output path. Omit to write to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output encoding: "csv" or "json".
    #[arg(long, default_value = "csv")]
    format: String,
    /// Also scan the finished grid for RIN relaxation pairs at this SER
    /// ratio tolerance; the pairs are printed to stderr.
    #[arg(long)]
    relaxation: Option<f64>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Optical modulation amplitude in dBm.
    #[arg(long, allow_negative_numbers = true)]
    oma: f64,
    /// Laser RIN in dB/Hz, or "-inf" for the AWGN baseline.
    #[arg(long, value_parser = parse_rin, allow_hyphen_values = true)]
    rin: f64,
    /// Seed for the optimizer's perturbation starts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    link: LinkFlags,
}

#[derive(Args)]
struct SimulateArgs {
    /// Optical modulation amplitude in dBm.
    #[arg(long, allow_negative_numbers = true)]
    oma: f64,
    /// Laser RIN in dB/Hz, or "-inf" for the AWGN baseline.
    #[arg(long, value_parser = parse_rin, allow_hyphen_values = true)]
    rin: f64,
    /// Symbol budget.
    #[arg(long, default_value_t = 10_000_000)]
    symbols: u64,
    /// Monte Carlo seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop early after this many errors; 0 runs the full budget.
    #[arg(long, default_value_t = 100)]
    target_errors: u64,
    /// Simulate the shaped constellation instead of the equally-spaced one.
    #[arg(long)]
    gs: bool,
    #[command(flatten)]
    link: LinkFlags,
}

#[derive(Args)]
struct HistogramArgs {
    /// Optical modulation amplitude in dBm.
    #[arg(long, allow_negative_numbers = true)]
    oma: f64,
    /// Laser RIN in dB/Hz, or "-inf" for the AWGN baseline.
    #[arg(long, value_parser = parse_rin, allow_hyphen_values = true)]
    rin: f64,
    /// Output CSV path (symbol_index,bin_left,bin_right,density).
    #[arg(long)]
    out: PathBuf,
    /// Samples drawn per symbol.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    /// Number of bins on the shared grid.
    #[arg(long, default_value_t = 200)]
    bins: usize,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample the shaped constellation instead of the equally-spaced one.
    #[arg(long)]
    gs: bool,
    #[command(flatten)]
    link: LinkFlags,
}

// ---------------------------------------------------------------- dispatch

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = setup_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) | Error::Parse(_) => 2,
        Error::DegenerateNoise(_)
        | Error::Accuracy { .. }
        | Error::NonConvergence { .. }
        | Error::CostBound { .. }
        | Error::SweepAllFailed { .. } => 3,
        Error::Io(_) => 4,
    }
}

/// Applies `RINSHAPER_THREADS` to the global worker pool before any work
/// spawns it.
fn setup_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("RINSHAPER_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|e| format!("RINSHAPER_THREADS={raw:?} is not a thread count: {e}"))?;
    if n == 0 {
        return Err("RINSHAPER_THREADS must be >= 1".to_string());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("worker pool: {e}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Optimize(a) => cmd_optimize(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Histogram(a) => cmd_histogram(a),
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let preset: Preset = a.preset.parse()?;
    let config = match &a.config {
        Some(path) => SweepConfig::from_file(path, preset)?,
        None => {
            let c = SweepConfig::preset(preset);
            c.validate()?;
            c
        }
    };
    let format: rinshaper::EmitFormat = a.format.parse()?;
    let sweep = run_sweep(&config)?;
    match &a.out {
        Some(path) => {
            rinshaper::emit_to_path(&sweep, format, path)?;
            eprintln!("wrote {} records to {}", sweep.grid.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            rinshaper::emit(&sweep, format, stdout.lock())?;
        }
    }
    if let Some(ratio) = a.relaxation {
        let rep = relaxation_report(&sweep, ratio)?;
        if rep.pairs.is_empty() {
            eprintln!("no RIN relaxation pairs within ratio {ratio}");
        }
        for p in &rep.pairs {
            eprintln!(
                "relaxation: GS at {} dB/Hz ~ ES at {} dB/Hz (OMA {} dBm, ratio {:.3}, {:.1} dB)",
                p.rin_a, p.rin_b, p.oma_dbm, p.ratio, p.relaxation_db
            );
        }
    }
    Ok(())
}

fn cmd_optimize(a: OptimizeArgs) -> Result<()> {
    let params = a.link.params(a.oma, a.rin)?;
    let n = normalize_noise(&params, a.link.order)?;
    let es = PamConstellation::equally_spaced(a.link.order)?;
    let es_b = ser_analytic(&es, &n)?;
    let opts = OptimizerSettings { seed: a.seed, ..OptimizerSettings::default() };
    let report = optimize_constellation(&n, a.link.order, &opts)?;
    let gs_b = ser_analytic(&report.optimum, &n)?;
    let mi_gs = mutual_information(&report.optimum, &n)?;

    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(
        w,
        "# PAM-{} at OMA {} dBm, RIN {} dB/Hz",
        a.link.order, a.oma, a.rin
    )?;
    writeln!(w, "ser_es       = {:.6e}", es_b.total_ser)?;
    writeln!(w, "ser_gs       = {:.6e}", gs_b.total_ser)?;
    writeln!(w, "ser_floor_es = {:.6e}", es_b.floor_ser)?;
    writeln!(w, "ser_floor_gs = {:.6e}", gs_b.floor_ser)?;
    writeln!(w, "mi_gs        = {:.6} bits/symbol", mi_gs)?;
    writeln!(w, "converged    = {}", report.converged)?;
    writeln!(w, "iterations   = {}", report.objective_trace.len())?;
    writeln!(w, "levels_gs    = {}", join6(report.optimum.levels()))?;
    writeln!(w, "gaps_gs      = {}", join6(&report.gap_vector))?;
    Ok(())
}

fn join6(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let params = a.link.params(a.oma, a.rin)?;
    let n = normalize_noise(&params, a.link.order)?;
    let c = if a.gs {
        optimize_constellation(&n, a.link.order, &OptimizerSettings::default())?.optimum
    } else {
        PamConstellation::equally_spaced(a.link.order)?
    };
    let rule = decision_thresholds(&c, &n)?;
    let analytic = ser_analytic(&c, &n)?.total_ser;
    let budget = SimBudget { max_symbols: a.symbols, target_errors: a.target_errors };
    let r = simulate(&c, &n, &rule, &budget, a.seed)?;

    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(
        w,
        "# PAM-{} at OMA {} dBm, RIN {} dB/Hz ({})",
        a.link.order,
        a.oma,
        a.rin,
        if a.gs { "shaped" } else { "equally spaced" }
    )?;
    writeln!(w, "n_symbols    = {}", r.n_symbols)?;
    writeln!(w, "n_errors     = {}", r.n_errors)?;
    writeln!(w, "ser_mc       = {:.6e}", r.ser_estimate)?;
    writeln!(w, "ci95         = {:.6e}", r.ci_halfwidth_95)?;
    writeln!(w, "ser_analytic = {analytic:.6e}")?;
    if r.zero_error_run() {
        writeln!(w, "zero_error_run = true (SER below ~{:.1e})", 1.0 / r.n_symbols as f64)?;
    } else {
        let sigma = r.ci_halfwidth_95 / 1.96;
        writeln!(
            w,
            "deviation    = {:+.2} sigma",
            (r.ser_estimate - analytic) / sigma
        )?;
    }
    Ok(())
}

fn cmd_histogram(a: HistogramArgs) -> Result<()> {
    let params = a.link.params(a.oma, a.rin)?;
    let n = normalize_noise(&params, a.link.order)?;
    let c = if a.gs {
        optimize_constellation(&n, a.link.order, &OptimizerSettings::default())?.optimum
    } else {
        PamConstellation::equally_spaced(a.link.order)?
    };
    let h = received_histogram(&c, &n, a.samples, a.bins, a.seed)?;
    let f = std::fs::File::create(&a.out)?;
    h.write_csv(std::io::BufWriter::new(f))?;
    eprintln!(
        "wrote {} bins x {} symbols to {}",
        a.bins,
        c.order(),
        a.out.display()
    );
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use fractal_spectra_cli::config::parse_number;
use fractal_spectra_cli::threads::{init_threads, parse_threads, THREADS_ENV};
use fractal_spectra_cli::{parse_config, run_command, CliError, Command};

#[derive(Parser)]
#[command(name = "fractal-spectra", version, about = "Spectra of Hanoi-type hybrid fractals")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the graph approximation and its vertex masses.
    Build(Opts),
    /// Solve the discrete Laplacian spectrum.
    Spectrum(Opts),
    /// Scan the quantum-graph spectrum (Hanoi only).
    QgSpectrum(Opts),
    /// Counting function fit, Weyl ratios and classification.
    Analyze(Opts),
    /// Effective resistances and compatibility residuals.
    Resistance(Opts),
    /// Write one eigenfunction with layout coordinates.
    ExportEigfun(Opts),
    /// Render an SVG plot.
    Plot(Opts),
}

/// Flags mirror config keys and override the config file.
#[derive(Args, Debug, Default)]
struct Opts {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// hanoi or sg3.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    level: Option<String>,
    /// Decimal or "p/q".
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    c: Option<String>,
    /// dirichlet or neumann.
    #[arg(long)]
    bc: Option<String>,
    /// bend, quantile:<q> or range:<lo>:<hi>.
    #[arg(long)]
    fit_window: Option<String>,
    #[arg(long)]
    lambda_max: Option<String>,
    #[arg(long)]
    grid_step: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    /// resistance, power or bond-scaled.
    #[arg(long)]
    length_convention: Option<String>,
    /// Add the λ² column rescaled to the discrete Laplacian.
    #[arg(long)]
    renormalize: bool,
    /// Eigenfunction index (0-based, ascending).
    #[arg(long)]
    index: Option<String>,
    /// Plot kind: counting, loglog, weyl or eigfun.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    vertex_cap: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn int_flag(key: &str, text: &str) -> Result<Value, CliError> {
    text.trim()
        .parse::<u64>()
        .map(|n| json!(n))
        .map_err(|_| CliError::config(format!(".{key}"), format!("expected a non-negative integer, got {text:?}")))
}

fn real_flag(key: &str, text: &str) -> Result<Value, CliError> {
    parse_number(text)
        .map(|x| json!(x))
        .ok_or_else(|| CliError::config(format!(".{key}"), format!("cannot parse {text:?} as a number")))
}

impl Opts {
    fn overrides(&self) -> Result<Map<String, Value>, CliError> {
        let mut m = Map::new();
        let text = [
            ("model", &self.model),
            ("r", &self.r),
            ("a", &self.a),
            ("b", &self.b),
            ("c", &self.c),
            ("bc", &self.bc),
            ("fit_window", &self.fit_window),
            ("length_convention", &self.length_convention),
            ("plot", &self.kind),
        ];
        // parameters stay strings so "1/6" is echoed as given
        for (key, v) in text {
            if let Some(v) = v {
                m.insert(key.into(), json!(v));
            }
        }
        for (key, v) in [("level", &self.level), ("index", &self.index), ("vertex_cap", &self.vertex_cap)] {
            if let Some(v) = v {
                m.insert(key.into(), int_flag(key, v)?);
            }
        }
        for (key, v) in [
            ("lambda_max", &self.lambda_max),
            ("grid_step", &self.grid_step),
            ("threshold", &self.threshold),
        ] {
            if let Some(v) = v {
                m.insert(key.into(), real_flag(key, v)?);
            }
        }
        if self.renormalize {
            m.insert("renormalize".into(), json!(true));
        }
        if let Some(out) = &self.out {
            m.insert("out".into(), json!(out.to_string_lossy()));
        }
        Ok(m)
    }
}

fn run(cmd: Command, opts: &Opts) -> Result<(), CliError> {
    let cap = parse_threads(std::env::var(THREADS_ENV).ok().as_deref())?;
    init_threads(cap);
    let cfg = parse_config(opts.config.as_deref(), opts.overrides()?)?;
    let manifest = run_command(cmd, &cfg)?;
    for f in &manifest.outputs {
        println!("{}", cfg.out.join(&f.path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, opts) = match &cli.command {
        Cmd::Build(o) => (Command::Build, o),
        Cmd::Spectrum(o) => (Command::Spectrum, o),
        Cmd::QgSpectrum(o) => (Command::QgSpectrum, o),
        Cmd::Analyze(o) => (Command::Analyze, o),
        Cmd::Resistance(o) => (Command::Resistance, o),
        Cmd::ExportEigfun(o) => (Command::ExportEigfun, o),
        Cmd::Plot(o) => (Command::Plot, o),
    };
    match run(cmd, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

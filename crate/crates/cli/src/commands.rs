use std::collections::BTreeMap;
use std::time::Instant;

use serde_json::json;

use fractal_spectra::analysis::{
    classify_spectra, count_supported, dn_csv, dn_values, fit_spectral_exponent, fit_window, log_grid,
    sg3_regime, weyl_ratio, CountingFunction, DnLabel, DnOptions, ExponentFit, SUPPORT_TOL,
};
use fractal_spectra::geometry::{layout_coordinates, HybridModel, ModelKind};
use fractal_spectra::measure::vertex_masses;
use fractal_spectra::quantum::{build_metric_graph, renormalization_factor, scan_spectrum, ScanOptions};
use fractal_spectra::resistance::{check_compatibility, effective_resistance, hanoi_boundary_series};
use fractal_spectra::spectrum::{eigenfunction, BoundaryCondition, SolveOptions};

use crate::config::{FitWindow, PlotKind, RunConfig};
use crate::error::CliError;
use crate::output::{csv_table, Cell, OutputSet, RunManifest, Timing};
use crate::svg::{render_svg, SvgKind, SvgSeries};

const WEYL_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Build,
    Spectrum,
    QgSpectrum,
    Analyze,
    Resistance,
    ExportEigfun,
    Plot,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Build,
        Command::Spectrum,
        Command::QgSpectrum,
        Command::Analyze,
        Command::Resistance,
        Command::ExportEigfun,
        Command::Plot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Build => "build",
            Command::Spectrum => "spectrum",
            Command::QgSpectrum => "qg-spectrum",
            Command::Analyze => "analyze",
            Command::Resistance => "resistance",
            Command::ExportEigfun => "export-eigfun",
            Command::Plot => "plot",
        }
    }
}

/// Step timer feeding the manifest.
struct Clock {
    last: Instant,
    steps: Vec<Timing>,
}

impl Clock {
    fn new() -> Self {
        Clock {
            last: Instant::now(),
            steps: Vec::new(),
        }
    }

    fn lap(&mut self, step: &str) {
        let now = Instant::now();
        self.steps.push(Timing {
            step: step.into(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

/// Runs one command and writes its outputs plus `manifest.json` under
/// `cfg.out`.
pub fn run_command(cmd: Command, cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut clock = Clock::new();
    // validate and size-check before touching the filesystem
    let problem = cfg.problem()?;
    problem.graph()?;
    clock.lap("build");
    let mut out = OutputSet::create(&cfg.out)?;
    match cmd {
        Command::Build => build(cfg, &mut out)?,
        Command::Spectrum => spectrum(cfg, &mut out)?,
        Command::QgSpectrum => qg_spectrum(cfg, &mut out)?,
        Command::Analyze => analyze(cfg, &mut out)?,
        Command::Resistance => resistance(cfg, &mut out)?,
        Command::ExportEigfun => export_eigfun(cfg, &mut out)?,
        Command::Plot => plot(cfg, &mut out)?,
    }
    clock.lap(cmd.name());
    out.finish(cmd.name(), cfg.to_json(), clock.steps)
}

fn build(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let graph = problem.graph()?;
    let masses = vertex_masses(&graph, &problem.measure)?;
    out.write("graph.json", graph.to_json().as_bytes())?;
    out.write("masses.csv", masses.to_csv().as_bytes())?;
    out.write_json(
        "build.json",
        &json!({
            "model": cfg.model.name(),
            "level": cfg.level,
            "vertices": graph.vertex_count(),
            "edges": graph.edges.len(),
            "boundary": graph.boundary().len(),
            "interior": graph.interior().len(),
            "connected": graph.is_connected(),
            "total_mass": masses.total(),
        }),
    )
}

fn counting_csv(cf: &CountingFunction) -> String {
    csv_table(
        &["x", "N"],
        cf.jumps
            .iter()
            .zip(&cf.counts)
            .map(|(&x, &n)| vec![Cell::Num(x), Cell::Int(n as i64)]),
    )
}

fn spectrum(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let (_, spec) = cfg.problem()?.solve(cfg.bc, SolveOptions::default())?;
    out.write("spectrum.csv", spec.to_csv().as_bytes())?;
    out.write("counting.csv", counting_csv(&CountingFunction::from_spectrum(&spec)).as_bytes())
}

fn qg_spectrum(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    if cfg.model != ModelKind::Hanoi {
        return Err(CliError::config(".model", "quantum graphs are built for the Hanoi model only"));
    }
    let problem = cfg.problem()?;
    let graph = problem.graph()?;
    let mg = build_metric_graph(&graph, &problem.resistance, cfg.length_convention)?;
    let opts = ScanOptions {
        grid_step: cfg.grid_step,
        threshold: cfg.threshold,
        ..ScanOptions::upto(cfg.lambda_max)
    };
    let q = scan_spectrum(&mg, &opts)?;
    let factor = if cfg.renormalize {
        Some(renormalization_factor(cfg.a.value, cfg.r.value)?)
    } else {
        None
    };
    out.write("qg_spectrum.csv", q.to_csv(factor).as_bytes())
}

fn fit(cfg: &RunConfig, cf: &CountingFunction) -> Result<ExponentFit, CliError> {
    let window = match cfg.fit_window {
        FitWindow::Rule(rule) => fit_window(cf, rule)?,
        FitWindow::Range(lo, hi) => (lo, hi),
    };
    Ok(fit_spectral_exponent(cf, window)?)
}

/// `d_S` for Weyl ratios: closed form on SG3, twice the fitted slope on Hanoi.
fn spectral_dimension(cfg: &RunConfig, fit: &ExponentFit) -> Result<f64, CliError> {
    match cfg.model {
        ModelKind::Sg3Hybrid => Ok(sg3_regime(cfg.r.value, cfg.a.value)?.d_s),
        ModelKind::Hanoi => Ok(2.0 * fit.slope),
    }
}

fn weyl_points(cf: &CountingFunction, d_s: f64) -> Result<Vec<(f64, f64)>, CliError> {
    let lo = cf.kth(1).ok_or_else(|| CliError::config(".level", "spectrum is empty"))?;
    let hi = *cf.jumps.last().expect("nonempty");
    if hi <= lo {
        return Err(CliError::config(".level", "spectrum has a single distinct eigenvalue"));
    }
    Ok(weyl_ratio(cf, d_s, &log_grid(lo, hi, WEYL_POINTS)?)?)
}

fn analyze(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let sg3 = cfg.model == ModelKind::Sg3Hybrid;
    let opts = SolveOptions {
        vectors: sg3,
        ..SolveOptions::default()
    };
    let (op, spec) = problem.solve(cfg.bc, opts)?;
    let cf = CountingFunction::from_spectrum(&spec);
    let fitted = fit(cfg, &cf)?;
    let d_s = spectral_dimension(cfg, &fitted)?;
    let mut report = json!({
        "model": cfg.model.name(),
        "level": cfg.level,
        "bc": cfg.bc.name(),
        "dim": spec.len(),
        "distinct": spec.clusters.len(),
        "fit_window": cfg.fit_window.text(),
        "fit": fitted,
        "d_s": d_s,
    });
    if sg3 {
        report["regime"] = json!(sg3_regime(cfg.r.value, cfg.a.value)?);
        let supported = count_supported(&op, &spec, &problem.graph()?, SUPPORT_TOL)?;
        report["supported_total"] = json!(supported.total());
        report["supported_fit"] = match fit(cfg, &supported) {
            Ok(f) => json!(f),
            Err(e) => json!({ "error": e.message }),
        };
        out.write("supported_counting.csv", counting_csv(&supported).as_bytes())?;
    } else if cfg.bc == BoundaryCondition::Dirichlet {
        let entries = dn_chain(cfg)?;
        let mut counts = BTreeMap::new();
        for e in &entries {
            *counts.entry(e.label.name()).or_insert(0usize) += e.multiplicity;
        }
        report["dn_counts"] = json!(counts);
        report["dn_offspring"] = json!(entries.iter().filter(|e| e.label == DnLabel::DnOffspring).count());
        out.write("dn.csv", dn_csv(&entries).as_bytes())?;
    }
    let weyl = weyl_points(&cf, d_s)?;
    out.write("counting.csv", counting_csv(&cf).as_bytes())?;
    out.write(
        "weyl.csv",
        csv_table(&["x", "ratio"], weyl.iter().map(|&(x, w)| vec![Cell::Num(x), Cell::Num(w)])).as_bytes(),
    )?;
    out.write_json("analysis.json", &report)
}

/// D-N classification at `cfg.level`, chained from level 1 so offspring
/// can be traced to their parents.
fn dn_chain(cfg: &RunConfig) -> Result<Vec<fractal_spectra::analysis::DnEntry>, CliError> {
    let mut prev = Vec::new();
    let mut entries = Vec::new();
    for level in 1..=cfg.level.max(1) {
        let mut p = cfg.problem()?;
        p.level = level;
        let (_, d) = p.solve(BoundaryCondition::Dirichlet, SolveOptions::default())?;
        let (_, n) = p.solve(BoundaryCondition::Neumann, SolveOptions::default())?;
        entries = classify_spectra(&d, &n, &prev, DnOptions::default())?;
        prev = dn_values(&entries);
    }
    Ok(entries)
}

fn resistance(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let params = problem.resistance;
    let net = problem.network()?;
    let boundary = net.graph.boundary();
    let r01 = effective_resistance(&net, boundary[0], boundary[1])?;
    let mut report = json!({
        "model": cfg.model.name(),
        "level": cfg.level,
        "r": params.r,
        "rho": params.rho,
        "big_r": params.big_r,
        "constraint_residual": params.constraint_residual(),
        "compatibility_residual": check_compatibility(&HybridModel::from_kind(cfg.model), &params)?,
        "boundary_resistance": r01,
        "limit": 2.0 * params.big_r / 3.0,
    });
    if cfg.model == ModelKind::Hanoi {
        report["series"] = json!(hanoi_boundary_series(params.r, cfg.level)?);
    }
    out.write_json("resistance.json", &report)
}

/// Eigenfunction `cfg.index` with its layout coordinates.
fn eigfun_data(cfg: &RunConfig) -> Result<(f64, Vec<(f64, f64)>, Vec<f64>), CliError> {
    let problem = cfg.problem()?;
    let opts = SolveOptions {
        vectors: true,
        ..SolveOptions::default()
    };
    let (op, spec) = problem.solve(cfg.bc, opts)?;
    if cfg.index >= spec.len() {
        return Err(CliError::config(
            ".index",
            format!("index {} out of range, the spectrum has {} eigenvalues", cfg.index, spec.len()),
        ));
    }
    let u = eigenfunction(&op, &spec, cfg.index)?;
    let graph = problem.graph()?;
    let coords = layout_coordinates(&graph, HybridModel::from_kind(cfg.model).layout_scale)?;
    Ok((spec.values[cfg.index], coords, u))
}

fn export_eigfun(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let (lambda, coords, u) = eigfun_data(cfg)?;
    let rows = coords
        .iter()
        .zip(&u)
        .enumerate()
        .map(|(i, (&(x, y), &v))| vec![Cell::Int(i as i64), Cell::Num(x), Cell::Num(y), Cell::Num(v)]);
    out.write("eigfun.csv", csv_table(&["vertex", "x", "y", "value"], rows).as_bytes())?;
    out.write_json(
        "eigfun.json",
        &json!({ "index": cfg.index, "eigenvalue": lambda, "bc": cfg.bc.name(), "vertices": u.len() }),
    )
}

fn plot(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let title = format!("{} level {} ({})", cfg.model.name(), cfg.level, cfg.bc.name());
    let (name, svg) = match cfg.plot {
        PlotKind::Eigfun => {
            let (lambda, coords, u) = eigfun_data(cfg)?;
            let mut s = SvgSeries::new(
                &format!("{title}, eigenfunction {}", cfg.index),
                &format!("eigenvalue {}", fractal_spectra::spectrum::fmt_g12(lambda)),
                "u",
                coords,
            );
            s.values = u;
            ("eigfun.svg", render_svg(&s, SvgKind::EigfunHeatmap)?)
        }
        kind => {
            let (_, spec) = cfg.problem()?.solve(cfg.bc, SolveOptions::default())?;
            let cf = CountingFunction::from_spectrum(&spec);
            let pts: Vec<(f64, f64)> = cf.jumps.iter().zip(&cf.counts).map(|(&x, &n)| (x, n as f64)).collect();
            match kind {
                PlotKind::Counting => (
                    "counting.svg",
                    render_svg(&SvgSeries::new(&title, "x", "N(x)", pts), SvgKind::Step)?,
                ),
                PlotKind::LogLog => {
                    let mut s = SvgSeries::new(&title, "x", "N(x)", pts);
                    s.fit = fit(cfg, &cf).ok().map(|f| (f.slope, f.intercept));
                    ("loglog.svg", render_svg(&s, SvgKind::LogLog)?)
                }
                _ => {
                    let d_s = spectral_dimension(cfg, &fit(cfg, &cf)?)?;
                    let s = SvgSeries::new(&title, "x", &format!("N(x) / x^{:.4}", d_s / 2.0), weyl_points(&cf, d_s)?);
                    ("weyl.svg", render_svg(&s, SvgKind::Weyl)?)
                }
            }
        }
    };
    out.write(name, svg.as_bytes())
}

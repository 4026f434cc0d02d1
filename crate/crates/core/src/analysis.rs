//! Post-processing of computed spectra: counting functions and power-law
//! fits, Weyl ratios, D-N classification, the SG3 regime predictor and
//! counting restricted to eigenfunctions living in one inverted gasket.

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ApproxGraph, BondKind, ModelKind};
use crate::spectrum::{fmt_g12, AssembledOperator, Spectrum};

pub const DN_MATCH_TOL: f64 = 1e-6;
pub const OFFSPRING_TOL: f64 = 1e-4;
pub const SUPPORT_TOL: f64 = 1e-8;
const MIN_FIT_POINTS: usize = 10;

/// Right-continuous step function `N(x) = #{λ ≤ x}` with multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingFunction {
    /// Jump locations, strictly increasing.
    pub jumps: Vec<f64>,
    /// `N` at each jump.
    pub counts: Vec<usize>,
}

impl CountingFunction {
    /// From values with multiplicity `(value, multiplicity)`; the values are sorted here.
    pub fn from_clusters(mut clusters: Vec<(f64, usize)>) -> Self {
        clusters.retain(|&(_, m)| m > 0);
        clusters.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut jumps: Vec<f64> = Vec::with_capacity(clusters.len());
        let mut counts: Vec<usize> = Vec::with_capacity(clusters.len());
        let mut total = 0;
        for (x, m) in clusters {
            total += m;
            if jumps.last() == Some(&x) {
                *counts.last_mut().expect("pushed together") = total;
            } else {
                jumps.push(x);
                counts.push(total);
            }
        }
        CountingFunction { jumps, counts }
    }

    /// Each value counted once.
    pub fn from_values(values: &[f64]) -> Self {
        Self::from_clusters(values.iter().map(|&v| (v, 1)).collect())
    }

    pub fn from_spectrum(spec: &Spectrum) -> Self {
        Self::from_clusters(spec.clusters.iter().map(|c| (c.value, c.multiplicity)).collect())
    }

    pub fn eval(&self, x: f64) -> usize {
        match self.jumps.partition_point(|&j| j <= x) {
            0 => 0,
            k => self.counts[k - 1],
        }
    }

    pub fn total(&self) -> usize {
        self.counts.last().copied().unwrap_or(0)
    }

    /// Smallest `x` with `N(x) ≥ k` (the `k`-th eigenvalue, 1-based).
    pub fn kth(&self, k: usize) -> Option<f64> {
        if k == 0 {
            return None;
        }
        let i = self.counts.partition_point(|&c| c < k);
        self.jumps.get(i).copied()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,N\n");
        for (x, n) in self.jumps.iter().zip(&self.counts) {
            s.push_str(&format!("{},{n}\n", fmt_g12(*x)));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// How the upper end of a fit window is chosen; the lower end is always the
/// 5th eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WindowRule {
    /// End of the first piece of the best two-piece least-squares fit of the
    /// log-log plot: the counting function bends once the unconverged top of
    /// the spectrum takes over.
    Bend,
    /// The given fraction of the eigenvalue count.
    Quantile(f64),
}

impl Default for WindowRule {
    fn default() -> Self {
        WindowRule::Bend
    }
}

fn log_points(cf: &CountingFunction, lo: f64) -> Vec<(f64, f64)> {
    cf.jumps
        .iter()
        .zip(&cf.counts)
        .filter(|(&x, _)| x >= lo && x > 0.0)
        .map(|(&x, &n)| (x.ln(), (n as f64).ln()))
        .collect()
}

/// Slope, intercept and residual sum of squares.
fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    (slope, intercept, rss)
}

/// Fit window `[λ_5, x_hi]` under the given rule.
pub fn fit_window(cf: &CountingFunction, rule: WindowRule) -> Result<(f64, f64)> {
    let n = cf.total();
    let short = || Error::Precondition(format!("spectrum of {n} eigenvalues is too short for a fit window"));
    let lo = cf.kth(5).ok_or_else(short)?;
    let hi = match rule {
        WindowRule::Quantile(q) => {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::Parameter(format!("fit quantile {q} must lie in (0, 1]")));
            }
            cf.kth(((q * n as f64).ceil() as usize).max(1)).ok_or_else(short)?
        }
        WindowRule::Bend => {
            let pts = log_points(cf, lo);
            if pts.len() < 2 * MIN_FIT_POINTS {
                return Err(short());
            }
            let split = (MIN_FIT_POINTS..=pts.len() - MIN_FIT_POINTS)
                .map(|b| (b, least_squares(&pts[..b]).2 + least_squares(&pts[b..]).2))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(b, _)| b)
                .ok_or_else(short)?;
            pts[split - 1].0.exp()
        }
    };
    if hi > lo {
        Ok((lo, hi))
    } else {
        Err(short())
    }
}

/// Window from the default rule.
pub fn default_window(cf: &CountingFunction) -> Result<(f64, f64)> {
    fit_window(cf, WindowRule::default())
}

/// Least-squares slope of `log N` against `log x` over the jump points inside `window`.
pub fn fit_spectral_exponent(cf: &CountingFunction, window: (f64, f64)) -> Result<ExponentFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Parameter(format!(
            "fit window ({lo}, {hi}) must satisfy 0 < lo < hi"
        )));
    }
    let pts: Vec<(f64, f64)> = log_points(cf, lo)
        .into_iter()
        .filter(|p| p.0 <= hi.ln())
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Precondition(format!(
            "fit window [{lo}, {hi}] holds {} distinct eigenvalues, at least {MIN_FIT_POINTS} are needed",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Numeric("degenerate fit abscissae".into()));
    }
    let (slope, intercept, rss) = least_squares(&pts);
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(ExponentFit {
        slope,
        stderr,
        intercept,
        window,
        points: pts.len(),
    })
}

/// `n` points log-spaced on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(Error::Parameter(format!(
            "log grid needs 0 < lo < hi and n ≥ 2, got ({lo}, {hi}, {n})"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect())
}

/// `(x, N(x) / x^{d_s/2})` on the given grid.
pub fn weyl_ratio(cf: &CountingFunction, d_s: f64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(d_s > 0.0 && d_s.is_finite()) {
        return Err(Error::Parameter(format!("spectral dimension {d_s} must be positive")));
    }
    Ok(grid
        .iter()
        .map(|&x| (x, cf.eval(x) as f64 / x.powf(d_s / 2.0)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DnLabel {
    DirichletOnly,
    DnOffspring,
    DnNew,
}

impl DnLabel {
    pub fn name(self) -> &'static str {
        match self {
            DnLabel::DirichletOnly => "dirichlet-only",
            DnLabel::DnOffspring => "dn-offspring",
            DnLabel::DnNew => "dn-new",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DnEntry {
    pub value: f64,
    pub multiplicity: usize,
    pub label: DnLabel,
    /// Previous-level D-N eigenvalue this one descends from.
    pub parent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DnOptions {
    pub match_tol: f64,
    pub offspring_tol: f64,
}

impl Default for DnOptions {
    fn default() -> Self {
        DnOptions {
            match_tol: DN_MATCH_TOL,
            offspring_tol: OFFSPRING_TOL,
        }
    }
}

fn nearest_rel(sorted: &[f64], x: f64) -> f64 {
    let i = sorted.partition_point(|&v| v < x);
    let mut best = f64::INFINITY;
    for j in [i.wrapping_sub(1), i] {
        if let Some(&v) = sorted.get(j) {
            best = best.min((v - x).abs() / x.abs().max(f64::MIN_POSITIVE));
        }
    }
    best
}

/// Labels each Dirichlet eigenvalue cluster. An offspring `λ` satisfies
/// `λ = μ/(ra)` for a previous-level D-N value `μ`.
pub fn classify_dn(
    dirichlet: &[(f64, usize)],
    neumann: &[f64],
    prev_dn: &[f64],
    ra: f64,
    opts: DnOptions,
) -> Result<Vec<DnEntry>> {
    if !(ra > 0.0 && ra.is_finite()) {
        return Err(Error::Parameter(format!("ra = {ra} must be positive")));
    }
    let mut neu = neumann.to_vec();
    neu.sort_by(f64::total_cmp);
    Ok(dirichlet
        .iter()
        .map(|&(value, multiplicity)| {
            let dn = value > 0.0 && nearest_rel(&neu, value) <= opts.match_tol;
            let parent = if dn {
                prev_dn
                    .iter()
                    .copied()
                    .find(|&mu| (value - mu / ra).abs() <= opts.offspring_tol * value)
            } else {
                None
            };
            let label = match (dn, parent) {
                (false, _) => DnLabel::DirichletOnly,
                (true, Some(_)) => DnLabel::DnOffspring,
                (true, None) => DnLabel::DnNew,
            };
            DnEntry {
                value,
                multiplicity,
                label,
                parent,
            }
        })
        .collect())
}

/// Convenience wrapper over two solved spectra.
pub fn classify_spectra(
    dirichlet: &Spectrum,
    neumann: &Spectrum,
    prev_dn: &[f64],
    opts: DnOptions,
) -> Result<Vec<DnEntry>> {
    if dirichlet.level != neumann.level || dirichlet.resistance != neumann.resistance {
        return Err(Error::Precondition(
            "D-N classification needs spectra of the same level and parameters".into(),
        ));
    }
    let ra = dirichlet.resistance.r * dirichlet.measure.a;
    let d: Vec<(f64, usize)> = dirichlet.clusters.iter().map(|c| (c.value, c.multiplicity)).collect();
    classify_dn(&d, &neumann.values, prev_dn, ra, opts)
}

/// D-N values of a classification, for feeding the next level.
pub fn dn_values(entries: &[DnEntry]) -> Vec<f64> {
    entries
        .iter()
        .filter(|e| e.label != DnLabel::DirichletOnly)
        .map(|e| e.value)
        .collect()
}

pub fn dn_csv(entries: &[DnEntry]) -> String {
    let mut s = String::from("index,eigenvalue,multiplicity,label,parent\n");
    for (i, e) in entries.iter().enumerate() {
        let parent = e.parent.map(fmt_g12).unwrap_or_default();
        s.push_str(&format!(
            "{i},{},{},{},{parent}\n",
            fmt_g12(e.value),
            e.multiplicity,
            e.label.name()
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Sub,
    Critical,
    Super,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub r: f64,
    pub a: f64,
    pub ra: f64,
    pub regime: Regime,
    /// Growth exponent of `N(x)`; absent in the sub-critical case, where the
    /// stated exponent is negative and only candidates are reported.
    pub exponent: Option<f64>,
    /// Sub-critical only: the exponent as stated and with its sign flipped.
    pub printed_exponent: Option<f64>,
    pub sign_corrected_exponent: Option<f64>,
    /// Extra `log x` factor at the critical point.
    pub log_correction: bool,
    pub d_s: f64,
}

/// `max{2 log 6 / (−log ra), 1, 2 log 3 / log 5}`.
pub fn sg3_spectral_dimension(ra: f64) -> f64 {
    let first = 2.0 * 6f64.ln() / -ra.ln();
    let gasket = 2.0 * 3f64.ln() / 5f64.ln();
    first.max(1.0).max(gasket)
}

/// Asymptotic regime of the SG3 hybrid from `ra` alone.
pub fn sg3_regime(r: f64, a: f64) -> Result<RegimeReport> {
    if !(r > 0.0 && r < 7.0 / 15.0) {
        return Err(Error::Parameter(format!("r = {r} must lie in (0, 7/15)")));
    }
    if !(a > 0.0 && a <= 1.0 / 6.0) {
        return Err(Error::Parameter(format!("a = {a} must lie in (0, 1/6]")));
    }
    let ra = r * a;
    if ra >= 1.0 / 9.0 {
        return Err(Error::Parameter(format!("ra = {ra} must be below 1/9")));
    }
    let critical = 1.0 / 36.0;
    let gasket = 3f64.ln() / 5f64.ln();
    let d_s = sg3_spectral_dimension(ra);
    let report = |regime, exponent, printed, corrected, log_correction| RegimeReport {
        r,
        a,
        ra,
        regime,
        exponent,
        printed_exponent: printed,
        sign_corrected_exponent: corrected,
        log_correction,
        d_s,
    };
    Ok(if (ra - critical).abs() <= 1e-12 * critical {
        report(Regime::Critical, Some(gasket), None, None, true)
    } else if ra < critical {
        report(Regime::Sub, None, Some(-gasket), Some(gasket), false)
    } else {
        report(Regime::Super, Some(6f64.ln() / -ra.ln()), None, None, false)
    })
}

/// An inverted gasket (bond) of the SG3 hybrid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupportCell {
    pub bond: usize,
    pub label: String,
    pub birth: u32,
}

fn inverted_bonds(graph: &ApproxGraph) -> impl Iterator<Item = (usize, &crate::geometry::Bond)> {
    graph
        .bonds
        .iter()
        .enumerate()
        .filter(|(_, b)| b.kind == BondKind::InvertedSg)
}

fn cell_of(graph: &ApproxGraph, i: usize) -> SupportCell {
    let b = &graph.bonds[i];
    SupportCell {
        bond: i,
        label: b.label(),
        birth: b.birth,
    }
}

/// The inverted gasket holding every vertex with `|u| > tol·‖u‖_∞`, if one
/// exists. Gaskets share no vertices, so at most one can qualify.
pub fn support_classify(u: &[f64], graph: &ApproxGraph, tol: f64) -> Result<Option<SupportCell>> {
    if u.len() != graph.vertex_count() {
        return Err(Error::Structure(format!(
            "vector has {} entries for {} vertices",
            u.len(),
            graph.vertex_count()
        )));
    }
    let norm = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if norm == 0.0 {
        return Ok(None);
    }
    let support: Vec<usize> = (0..u.len()).filter(|&i| u[i].abs() > tol * norm).collect();
    for (i, bond) in inverted_bonds(graph) {
        let mut inside = vec![false; u.len()];
        bond.vertices.iter().for_each(|&v| inside[v] = true);
        if support.iter().all(|&v| inside[v]) {
            return Ok(Some(cell_of(graph, i)));
        }
    }
    Ok(None)
}

/// Counting function of eigenvalues whose eigenfunctions live in a single
/// inverted gasket. Degenerate clusters are handled through their whole
/// eigenspace: for every gasket the dimension of the subspace vanishing off
/// that gasket is added.
pub fn count_supported(
    op: &AssembledOperator,
    spec: &Spectrum,
    graph: &ApproxGraph,
    tol: f64,
) -> Result<CountingFunction> {
    if graph.model != ModelKind::Sg3Hybrid {
        return Err(Error::Parameter("supported counting applies to the SG3 hybrid".into()));
    }
    if graph.vertex_count() != op.vertex_count {
        return Err(Error::Precondition("operator and graph differ in size".into()));
    }
    let vecs = spec
        .vectors
        .as_ref()
        .ok_or_else(|| Error::Precondition("spectrum was solved without eigenvectors".into()))?;
    let bonds: Vec<Vec<bool>> = inverted_bonds(graph)
        .map(|(_, b)| {
            let mut inside = vec![false; graph.vertex_count()];
            b.vertices.iter().for_each(|&v| inside[v] = true);
            inside
        })
        .collect();
    let counted: Vec<(f64, usize)> = spec
        .clusters
        .par_iter()
        .map(|c| {
            let basis: Vec<Vec<f64>> = (c.start..c.start + c.multiplicity)
                .map(|j| {
                    let col: Vec<f64> = (0..op.dim()).map(|i| vecs[(i, j)]).collect();
                    op.extend(&col)
                })
                .collect();
            let scale = basis
                .iter()
                .flat_map(|u| u.iter())
                .fold(0.0f64, |m, x| m.max(x.abs()));
            let mut found = 0;
            for inside in &bonds {
                let outside: Vec<usize> = (0..inside.len()).filter(|&v| !inside[v]).collect();
                let restricted = Mat::<f64>::from_fn(outside.len(), basis.len(), |i, j| basis[j][outside[i]]);
                let rank = numerical_rank(&restricted, tol * scale);
                found += basis.len() - rank;
            }
            (c.value, found.min(c.multiplicity))
        })
        .collect();
    Ok(CountingFunction::from_clusters(counted))
}

fn numerical_rank(m: &Mat<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    match m.singular_values() {
        Ok(s) => s.iter().filter(|&&x| x > tol).count(),
        // fall back to the Gram matrix
        Err(_) => {
            let g = m.transpose() * m;
            g.self_adjoint_eigenvalues(faer::Side::Lower)
                .map(|ev| ev.iter().filter(|&&x| x.max(0.0).sqrt() > tol).count())
                .unwrap_or(m.ncols())
        }
    }
}

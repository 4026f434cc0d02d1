//! Quantum-graph approximations: metric graphs with Dirichlet conditions on
//! `V_0` and continuity plus Kirchhoff conditions elsewhere. Eigenvalues are
//! the `λ` where the secular matrix `M(λ)` is singular.

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ApproxGraph, EdgeKind, ModelKind, VertexRole};
use crate::resistance::{assign_resistances, ResistanceParams};
use crate::spectrum::fmt_g12;

/// Default acceptance threshold on `σ_min / σ_max`.
pub const DEFAULT_THRESHOLD: f64 = 1e-8;

const GOLDEN_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LengthConvention {
    /// Edge length equals edge resistance.
    ResistanceLengths,
    /// Edge length `r^birth`.
    PowerLengths,
    /// Every edge shrunk by `ρ`: triangle sides `ρ r^birth`, segments
    /// `ρ r^(birth−1)`.
    BondScaledLengths,
}

impl LengthConvention {
    pub fn name(self) -> &'static str {
        match self {
            LengthConvention::ResistanceLengths => "resistance",
            LengthConvention::PowerLengths => "power",
            LengthConvention::BondScaledLengths => "bond-scaled",
        }
    }
}

/// Metric graph with edges oriented from `start` to `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    pub vertex_count: usize,
    /// `(start, end)` per edge.
    pub edges: Vec<(usize, usize)>,
    pub lengths: Vec<f64>,
    pub dirichlet: Vec<bool>,
}

impl MetricGraph {
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>, lengths: Vec<f64>, dirichlet: Vec<bool>) -> Result<Self> {
        if edges.len() != lengths.len() {
            return Err(Error::Structure(format!(
                "{} edges but {} lengths",
                edges.len(),
                lengths.len()
            )));
        }
        if dirichlet.len() != vertex_count {
            return Err(Error::Structure("one Dirichlet flag per vertex is required".into()));
        }
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= vertex_count || v >= vertex_count || u == v) {
            return Err(Error::Structure(format!("invalid edge ({u}, {v})")));
        }
        if let Some(l) = lengths.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Parameter(format!("edge length {l} must be positive")));
        }
        Ok(MetricGraph {
            vertex_count,
            edges,
            lengths,
            dirichlet,
        })
    }

    pub fn min_length(&self) -> f64 {
        self.lengths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_length(&self) -> f64 {
        self.lengths.iter().copied().fold(0.0, f64::max)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.vertex_count];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Largest grid step that still resolves the fastest oscillation.
    pub fn max_grid_step(&self) -> f64 {
        std::f64::consts::PI / (10.0 * self.max_length())
    }

    pub fn default_grid_step(&self) -> f64 {
        (std::f64::consts::PI / (20.0 * self.max_length())).min(0.01)
    }

    /// `(edge, at_start)` pairs incident to each vertex.
    fn ends(&self) -> Vec<Vec<(usize, bool)>> {
        let mut ends = vec![Vec::new(); self.vertex_count];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            ends[u].push((e, true));
            ends[v].push((e, false));
        }
        ends
    }
}

/// Metric graph of a Hanoi approximation, Dirichlet on `V_0`.
pub fn build_metric_graph(graph: &ApproxGraph, params: &ResistanceParams, convention: LengthConvention) -> Result<MetricGraph> {
    if graph.model != ModelKind::Hanoi {
        return Err(Error::Parameter(format!(
            "quantum graphs are only built for the Hanoi model, not {}",
            graph.model
        )));
    }
    let lengths = match convention {
        LengthConvention::ResistanceLengths => assign_resistances(graph, params)?.resistances,
        LengthConvention::PowerLengths => {
            params.validate()?;
            graph.edges.iter().map(|e| params.r.powi(e.birth as i32)).collect()
        }
        LengthConvention::BondScaledLengths => {
            params.validate()?;
            graph
                .edges
                .iter()
                .map(|e| match e.kind {
                    EdgeKind::Triangle => params.rho * params.r.powi(e.birth as i32),
                    _ => params.rho * params.r.powi(e.birth as i32 - 1),
                })
                .collect()
        }
    };
    let edges = graph.edges.iter().map(|e| (e.u.min(e.v), e.u.max(e.v))).collect();
    let dirichlet = graph
        .vertices
        .iter()
        .map(|v| v.role == VertexRole::BoundaryV0)
        .collect();
    MetricGraph::new(graph.vertices.len(), edges, lengths, dirichlet)
}

/// Secular matrix `M(λ)` of size `2|E|`. Unknowns are `(a_0..a_{E−1},
/// b_0..b_{E−1})` for `u_e(x) = a_e sin(λx) + b_e cos(λx)`; the Kirchhoff
/// rows are divided by `λ`.
pub fn build_secular(mg: &MetricGraph, lambda: f64) -> Result<Mat<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "secular matrix needs λ > 0, got {lambda}; the sine/cosine basis degenerates at 0"
        )));
    }
    let ne = mg.edges.len();
    let mut m = Mat::<f64>::zeros(2 * ne, 2 * ne);
    // value of u_e at an end, as (coef of a_e, coef of b_e)
    let value = |e: usize, start: bool| -> (f64, f64) {
        if start {
            (0.0, 1.0)
        } else {
            let (s, c) = (lambda * mg.lengths[e]).sin_cos();
            (s, c)
        }
    };
    // derivative along the edge pointing away from the vertex, over λ
    let outward = |e: usize, start: bool| -> (f64, f64) {
        if start {
            (1.0, 0.0)
        } else {
            let (s, c) = (lambda * mg.lengths[e]).sin_cos();
            (-c, s)
        }
    };
    let mut row = 0;
    for (v, ends) in mg.ends().into_iter().enumerate() {
        if mg.dirichlet[v] {
            for (e, start) in ends {
                let (pa, pb) = value(e, start);
                m[(row, e)] = pa;
                m[(row, ne + e)] = pb;
                row += 1;
            }
            continue;
        }
        let Some(&(e0, s0)) = ends.first() else {
            continue;
        };
        let (a0, b0) = value(e0, s0);
        for &(e, start) in &ends[1..] {
            let (pa, pb) = value(e, start);
            m[(row, e0)] += a0;
            m[(row, ne + e0)] += b0;
            m[(row, e)] -= pa;
            m[(row, ne + e)] -= pb;
            row += 1;
        }
        for &(e, start) in &ends {
            let (pa, pb) = outward(e, start);
            m[(row, e)] += pa;
            m[(row, ne + e)] += pb;
        }
        row += 1;
    }
    debug_assert_eq!(row, 2 * ne);
    Ok(m)
}

/// Singular values of `M(λ)`, descending.
pub fn singular_values(mg: &MetricGraph, lambda: f64) -> Result<Vec<f64>> {
    let m = build_secular(mg, lambda)?;
    let mut s = robust_singular_values(&m)?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

// The bidiagonal QR iteration occasionally fails to converge on these
// sparse trigonometric matrices; the transpose or the Gram matrix is tried
// next.
fn robust_singular_values(m: &Mat<f64>) -> Result<Vec<f64>> {
    if let Ok(s) = m.singular_values() {
        return Ok(s);
    }
    if let Ok(s) = m.transpose().to_owned().singular_values() {
        return Ok(s);
    }
    let gram = m.transpose() * m;
    let ev = gram
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Numeric(format!("SVD failed: {e:?}")))?;
    Ok(ev.into_iter().map(|x| x.max(0.0).sqrt()).collect())
}

/// Singular values (any order) and right singular vectors as columns.
fn robust_svd(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    if let Ok(svd) = m.svd() {
        let s = svd.S().column_vector();
        return Ok(((0..s.nrows()).map(|i| s[i]).collect(), svd.V().to_owned()));
    }
    if let Ok(svd) = m.transpose().to_owned().svd() {
        let s = svd.S().column_vector();
        return Ok(((0..s.nrows()).map(|i| s[i]).collect(), svd.U().to_owned()));
    }
    let gram = m.transpose() * m;
    let evd = gram
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numeric(format!("SVD failed: {e:?}")))?;
    let s = evd.S();
    Ok(((0..m.ncols()).map(|i| s[i].max(0.0).sqrt()).collect(), evd.U().to_owned()))
}

/// `σ_min(M(λ)) / σ_max(M(λ))`.
pub fn sigma_ratio(mg: &MetricGraph, lambda: f64) -> Result<f64> {
    let s = singular_values(mg, lambda)?;
    Ok(s.last().copied().unwrap_or(0.0) / s[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QRoot {
    pub lambda: f64,
    pub multiplicity: usize,
    /// `σ_min / σ_max` at the root.
    pub sigma_min: f64,
}

impl QRoot {
    pub fn lambda_sq(&self) -> f64 {
        self.lambda * self.lambda
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QSpectrum {
    pub roots: Vec<QRoot>,
    pub range: (f64, f64),
    pub grid_step: f64,
    pub threshold: f64,
}

impl QSpectrum {
    /// Every `λ²`, repeated by multiplicity.
    pub fn values_sq(&self) -> Vec<f64> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat(r.lambda_sq()).take(r.multiplicity))
            .collect()
    }

    /// Number of roots with `λ ≤ x`, with multiplicity.
    pub fn count_upto(&self, lambda: f64) -> usize {
        self.roots
            .iter()
            .filter(|r| r.lambda <= lambda)
            .map(|r| r.multiplicity)
            .sum()
    }

    /// CSV with columns `lambda,lambda_sq,renormalized,multiplicity,sigma_min`.
    /// `factor` multiplies `λ²` for the renormalized column.
    pub fn to_csv(&self, factor: Option<f64>) -> String {
        let mut s = String::from("lambda,lambda_sq,renormalized,multiplicity,sigma_min\n");
        for r in &self.roots {
            let renorm = factor.map(|f| fmt_g12(r.lambda_sq() * f)).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_g12(r.lambda),
                fmt_g12(r.lambda_sq()),
                renorm,
                r.multiplicity,
                fmt_g12(r.sigma_min)
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Grid step in `λ`; `None` picks [`MetricGraph::default_grid_step`].
    pub grid_step: Option<f64>,
    pub threshold: f64,
}

impl ScanOptions {
    pub fn upto(lambda_max: f64) -> Self {
        ScanOptions {
            lambda_min: 1e-4,
            lambda_max,
            grid_step: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > GOLDEN_TOL * hi.max(1.0) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Scans `σ_min(M(λ))` on a grid, refines local minima by golden-section
/// search and keeps those that are numerically singular.
pub fn scan_spectrum(mg: &MetricGraph, opts: &ScanOptions) -> Result<QSpectrum> {
    if !(opts.lambda_min > 0.0 && opts.lambda_max > opts.lambda_min) {
        return Err(Error::Parameter(format!(
            "λ range ({}, {}) must satisfy 0 < min < max",
            opts.lambda_min, opts.lambda_max
        )));
    }
    if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
        return Err(Error::Parameter(format!("threshold {} outside (0, 1)", opts.threshold)));
    }
    let bound = mg.max_grid_step();
    let step = opts.grid_step.unwrap_or_else(|| mg.default_grid_step());
    if !(step > 0.0) || step > bound {
        return Err(Error::Parameter(format!(
            "grid step {step} is too coarse; it must not exceed {bound:.6}"
        )));
    }
    let n = ((opts.lambda_max - opts.lambda_min) / step).ceil() as usize + 1;
    let grid: Vec<f64> = (0..n)
        .map(|i| (opts.lambda_min + i as f64 * step).min(opts.lambda_max))
        .collect();
    let sigma: Vec<f64> = grid
        .par_iter()
        .map(|&x| sigma_ratio(mg, x))
        .collect::<Result<_>>()?;
    let f = |x: f64| sigma_ratio(mg, x).unwrap_or(f64::INFINITY);
    let candidates: Vec<(f64, f64)> = (1..n.saturating_sub(1))
        .filter(|&i| sigma[i] <= sigma[i - 1] && sigma[i] < sigma[i + 1])
        .map(|i| (grid[i - 1], grid[i + 1]))
        .collect();
    let refined: Vec<Option<QRoot>> = candidates
        .par_iter()
        .map(|&(lo, hi)| -> Result<Option<QRoot>> {
            let x = golden_min(f, lo, hi);
            let s = singular_values(mg, x)?;
            let cut = opts.threshold * s[0];
            let mult = s.iter().filter(|&&v| v < cut).count();
            if mult == 0 {
                return Ok(None);
            }
            Ok(Some(QRoot {
                lambda: x,
                multiplicity: mult,
                sigma_min: s[s.len() - 1] / s[0],
            }))
        })
        .collect::<Result<_>>()?;
    let mut roots: Vec<QRoot> = Vec::new();
    for r in refined.into_iter().flatten() {
        match roots.last() {
            Some(last) if (r.lambda - last.lambda).abs() < 1e-9 * r.lambda.max(1.0) => {}
            _ => roots.push(r),
        }
    }
    Ok(QSpectrum {
        roots,
        range: (opts.lambda_min, opts.lambda_max),
        grid_step: step,
        threshold: opts.threshold,
    })
}

/// `λ²(3 − 5r)/(1 − 3a)`: quantum-graph eigenvalue on the scale of the
/// discrete Laplacian.
pub fn renormalize_qg(lambda_sq: f64, a: f64, r: f64) -> Result<f64> {
    Ok(lambda_sq * renormalization_factor(a, r)?)
}

pub fn renormalization_factor(a: f64, r: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0 / 3.0) {
        return Err(Error::Parameter(format!("a = {a} outside (0, 1/3)")));
    }
    if !(r > 0.0 && r < 0.6) {
        return Err(Error::Parameter(format!("r = {r} outside (0, 3/5)")));
    }
    Ok((3.0 - 5.0 * r) / (1.0 - 3.0 * a))
}

/// Basis of the near-null space of `M(λ)`; each vector holds `(a_e, b_e)` per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct QEigenfunction {
    pub lambda: f64,
    pub modes: Vec<Vec<(f64, f64)>>,
}

impl QEigenfunction {
    /// Values `(u_e(start), u_e(end))` of mode `k` on every edge.
    pub fn end_values(&self, mg: &MetricGraph, k: usize) -> Vec<(f64, f64)> {
        self.modes[k]
            .iter()
            .zip(&mg.lengths)
            .map(|(&(a, b), &l)| {
                let (s, c) = (self.lambda * l).sin_cos();
                (b, a * s + b * c)
            })
            .collect()
    }

    /// Largest jump of mode `k` between edge ends meeting at a vertex, and
    /// largest value at a Dirichlet vertex.
    pub fn vertex_defect(&self, mg: &MetricGraph, k: usize) -> f64 {
        let ends = self.end_values(mg, k);
        let mut at: Vec<Vec<f64>> = vec![Vec::new(); mg.vertex_count];
        for (e, &(u, v)) in mg.edges.iter().enumerate() {
            at[u].push(ends[e].0);
            at[v].push(ends[e].1);
        }
        let mut worst: f64 = 0.0;
        for (v, vals) in at.iter().enumerate() {
            if mg.dirichlet[v] {
                worst = vals.iter().fold(worst, |w, x| w.max(x.abs()));
            } else if let Some(&first) = vals.first() {
                worst = vals.iter().fold(worst, |w, x| w.max((x - first).abs()));
            }
        }
        worst
    }

    /// `u_e` sampled at `points` equally spaced positions of each edge.
    pub fn sample(&self, mg: &MetricGraph, k: usize, points: usize) -> Vec<Vec<f64>> {
        let points = points.max(2);
        self.modes[k]
            .iter()
            .zip(&mg.lengths)
            .map(|(&(a, b), &l)| {
                (0..points)
                    .map(|i| {
                        let x = l * i as f64 / (points - 1) as f64;
                        let (s, c) = (self.lambda * x).sin_cos();
                        a * s + b * c
                    })
                    .collect()
            })
            .collect()
    }
}

/// Right singular vectors of `M(λ)` whose singular values fall below
/// `threshold · σ_max`.
pub fn qg_eigenfunction(mg: &MetricGraph, lambda: f64, threshold: f64) -> Result<QEigenfunction> {
    let m = build_secular(mg, lambda)?;
    let (s, v) = robust_svd(&m)?;
    let n = s.len();
    let smax = s.iter().copied().fold(0.0, f64::max);
    let ne = mg.edges.len();
    let mut modes = Vec::new();
    for j in 0..n {
        if s[j] < threshold * smax {
            let mut mode: Vec<(f64, f64)> = (0..ne).map(|e| (v[(e, j)], v[(ne + e, j)])).collect();
            // sign fixed by the largest coefficient
            let big = mode
                .iter()
                .flat_map(|&(a, b)| [a, b])
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if big < 0.0 {
                mode.iter_mut().for_each(|(a, b)| {
                    *a = -*a;
                    *b = -*b;
                });
            }
            modes.push(mode);
        }
    }
    if modes.is_empty() {
        let smin = (0..n).map(|i| s[i]).fold(f64::INFINITY, f64::min);
        return Err(Error::Precondition(format!(
            "M({lambda}) is not near-singular (σ_min/σ_max = {:e})",
            smin / smax
        )));
    }
    Ok(QEigenfunction { lambda, modes })
}

//! Discrete Laplacian `Δ_m` as a generalized eigenproblem `K u = λ M u`
//! with diagonal mass, and its Dirichlet and Neumann spectra.

use std::fmt;

use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{MassVector, MeasureParams};
use crate::resistance::{ResistanceParams, WeightedNetwork};

/// Default relative gap below which neighbouring eigenvalues are merged.
pub const DEFAULT_CLUSTER_TOL: f64 = 3e-8;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

impl BoundaryCondition {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Neumann => "neumann",
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Neumann elimination: the corner value is the mean of its two neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CornerRule {
    pub corner: usize,
    pub neighbours: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct AssembledOperator {
    /// Reduced stiffness acting on the unknowns.
    pub stiffness: Mat<f64>,
    /// Diagonal mass of the unknowns.
    pub mass: Vec<f64>,
    pub bc: BoundaryCondition,
    /// Graph vertex of each unknown.
    pub unknowns: Vec<usize>,
    pub corner_rules: Vec<CornerRule>,
    pub vertex_count: usize,
    pub level: u32,
    pub resistance: ResistanceParams,
    pub measure: MeasureParams,
}

impl AssembledOperator {
    pub fn dim(&self) -> usize {
        self.unknowns.len()
    }

    pub fn is_symmetric(&self) -> bool {
        let k = &self.stiffness;
        let scale = k.norm_max().max(f64::MIN_POSITIVE);
        (0..k.nrows()).all(|i| (0..i).all(|j| (k[(i, j)] - k[(j, i)]).abs() <= SYMMETRY_TOL * scale))
    }

    /// `‖K u − λ M u‖₂ / ‖K‖_F` for a vector on the unknowns.
    pub fn residual(&self, lambda: f64, u: &[f64]) -> f64 {
        let n = self.dim();
        let mut worst = 0.0;
        for i in 0..n {
            let mut s = -lambda * self.mass[i] * u[i];
            for j in 0..n {
                s += self.stiffness[(i, j)] * u[j];
            }
            worst += s * s;
        }
        worst.sqrt() / self.stiffness.norm_l2().max(f64::MIN_POSITIVE)
    }

    /// Expands a vector on the unknowns to every graph vertex.
    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.vertex_count];
        for (&v, &x) in self.unknowns.iter().zip(reduced) {
            full[v] = x;
        }
        for rule in &self.corner_rules {
            full[rule.corner] = 0.5 * (full[rule.neighbours[0]] + full[rule.neighbours[1]]);
        }
        full
    }
}

/// Assembles the reduced operator for the given boundary condition.
pub fn assemble(net: &WeightedNetwork, masses: &MassVector, bc: BoundaryCondition) -> Result<AssembledOperator> {
    let n = net.vertex_count();
    if masses.masses.len() != n || masses.level != net.graph.level {
        return Err(Error::Structure(format!(
            "mass vector (level {}, {} entries) does not match the network (level {}, {} vertices)",
            masses.level,
            masses.masses.len(),
            net.graph.level,
            n
        )));
    }
    if let Some(bad) = masses.masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::Parameter(format!("vertex mass {bad} is not positive")));
    }
    let boundary = net.graph.boundary();
    let unknowns = net.graph.interior();
    let mut index = vec![usize::MAX; n];
    for (i, &v) in unknowns.iter().enumerate() {
        index[v] = i;
    }
    let adj = net.graph.adjacency();
    let mut corner_rules = Vec::new();
    if bc == BoundaryCondition::Neumann {
        for &x in &boundary {
            let nbrs: Vec<usize> = adj[x].iter().map(|&(y, _)| y).collect();
            if nbrs.len() != 2 {
                return Err(Error::Structure(format!(
                    "Neumann rule needs boundary vertex {x} to have degree 2, found {}",
                    nbrs.len()
                )));
            }
            if nbrs.iter().any(|&y| index[y] == usize::MAX) {
                return Err(Error::Structure(format!(
                    "boundary vertex {x} is adjacent to another boundary vertex"
                )));
            }
            corner_rules.push(CornerRule {
                corner: x,
                neighbours: [nbrs[0], nbrs[1]],
            });
        }
    }
    let dim = unknowns.len();
    let mut k = Mat::<f64>::zeros(dim, dim);
    let mut rule_of = vec![None; n];
    for (i, rule) in corner_rules.iter().enumerate() {
        rule_of[rule.corner] = Some(i);
    }
    for (e, r) in net.graph.edges.iter().zip(&net.resistances) {
        let c = 1.0 / r;
        for (p, q) in [(e.u, e.v), (e.v, e.u)] {
            let row = index[p];
            if row == usize::MAX {
                continue;
            }
            k[(row, row)] += c;
            if index[q] != usize::MAX {
                k[(row, index[q])] -= c;
            } else if let Some(ri) = rule_of[q] {
                for y in corner_rules[ri].neighbours {
                    k[(row, index[y])] -= 0.5 * c;
                }
            }
        }
    }
    let mass = unknowns.iter().map(|&v| masses.masses[v]).collect();
    Ok(AssembledOperator {
        stiffness: k,
        mass,
        bc,
        unknowns,
        corner_rules,
        vertex_count: n,
        level: net.graph.level,
        resistance: net.params,
        measure: masses.params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cluster {
    pub value: f64,
    pub multiplicity: usize,
    /// Index of the first eigenvalue of the cluster.
    pub start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub vectors: bool,
    pub cluster_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            vectors: false,
            cluster_tol: DEFAULT_CLUSTER_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Every eigenvalue, ascending, repeated by multiplicity.
    pub values: Vec<f64>,
    pub clusters: Vec<Cluster>,
    pub bc: BoundaryCondition,
    pub level: u32,
    pub resistance: ResistanceParams,
    pub measure: MeasureParams,
    /// M-orthonormal eigenvectors on the unknowns, one per column.
    pub vectors: Option<Mat<f64>>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cluster index of the `i`-th eigenvalue.
    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| i >= c.start && i < c.start + c.multiplicity)
    }

    /// CSV with columns `index,eigenvalue,multiplicity,bc,level`; one row per cluster.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue,multiplicity,bc,level\n");
        for (i, c) in self.clusters.iter().enumerate() {
            s.push_str(&format!(
                "{i},{},{},{},{}\n",
                fmt_g12(c.value),
                c.multiplicity,
                self.bc,
                self.level
            ));
        }
        s
    }
}

/// Formats with 12 significant digits, dropping trailing zeros.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{x:.11e}");
        let (mant, e) = s.split_once('e').expect("exponent form");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

/// Groups ascending values into clusters by relative gap.
pub fn cluster_values(values: &[f64], tol: f64) -> Vec<Cluster> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-12 * scale;
    let mut out: Vec<Cluster> = Vec::new();
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let join = i > 0 && {
            let prev = values[i - 1];
            let gap = (v - prev).abs();
            gap <= tol * prev.abs().max(v.abs()) || gap <= floor
        };
        if join {
            let c = out.last_mut().expect("join implies a cluster");
            c.multiplicity += 1;
            sum += v;
            c.value = sum / c.multiplicity as f64;
        } else {
            sum = v;
            out.push(Cluster {
                value: v,
                multiplicity: 1,
                start: i,
            });
        }
    }
    out
}

pub fn solve_spectrum(op: &AssembledOperator) -> Result<Spectrum> {
    solve_spectrum_with(op, SolveOptions::default())
}

pub fn solve_spectrum_with(op: &AssembledOperator, opts: SolveOptions) -> Result<Spectrum> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::Parameter("eigenproblem has dimension 0".into()));
    }
    if let Some(bad) = op.mass.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::Parameter(format!("mass entry {bad} is not positive")));
    }
    let inv_sqrt: Vec<f64> = op.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a = Mat::<f64>::from_fn(n, n, |i, j| op.stiffness[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let norm = a.norm_l2();
    let (mut values, vectors) = if op.is_symmetric() {
        // average the two triangles so the solver sees an exactly symmetric matrix
        let a = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        if opts.vectors {
            let evd = a
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Numeric(format!("eigensolver failed: {e:?}")))?;
            let s = evd.S();
            let values: Vec<f64> = (0..n).map(|i| s[i]).collect();
            let u = evd.U();
            let vecs = Mat::<f64>::from_fn(n, n, |i, j| u[(i, j)] * inv_sqrt[i]);
            (values, Some(vecs))
        } else {
            let values = a
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::Numeric(format!("eigensolver failed: {e:?}")))?;
            (values, None)
        }
    } else {
        let vals = a
            .eigenvalues()
            .map_err(|e| Error::Numeric(format!("eigensolver failed: {e:?}")))?;
        let mut values = Vec::with_capacity(n);
        for z in vals {
            if z.im.abs() > 1e-10 * norm.max(1.0) {
                return Err(Error::Numeric(format!(
                    "reduced operator has a complex eigenvalue {} + {}i",
                    z.re, z.im
                )));
            }
            values.push(z.re);
        }
        values.sort_by(f64::total_cmp);
        (values, None)
    };
    for v in values.iter_mut() {
        if *v < -1e-10 * norm.max(1.0) {
            return Err(Error::Numeric(format!("negative eigenvalue {v}")));
        }
        // rounding noise around the constant mode
        if v.abs() <= 1e-12 * norm {
            *v = 0.0;
        }
    }
    let clusters = cluster_values(&values, opts.cluster_tol);
    Ok(Spectrum {
        values,
        clusters,
        bc: op.bc,
        level: op.level,
        resistance: op.resistance,
        measure: op.measure,
        vectors,
    })
}

/// Eigenvector `index` extended to all vertices, with its largest-magnitude
/// entry made positive.
pub fn eigenfunction(op: &AssembledOperator, spec: &Spectrum, index: usize) -> Result<Vec<f64>> {
    if index >= spec.len() {
        return Err(Error::Index {
            index,
            len: spec.len(),
        });
    }
    let vecs = spec
        .vectors
        .as_ref()
        .ok_or_else(|| Error::Precondition("spectrum was solved without eigenvectors".into()))?;
    let col: Vec<f64> = (0..op.dim()).map(|i| vecs[(i, index)]).collect();
    let mut full = op.extend(&col);
    let (mut best, mut arg) = (0.0, 0);
    for (i, x) in full.iter().enumerate() {
        // ties keep the first index for a deterministic sign
        if x.abs() > best * (1.0 + 1e-9) {
            best = x.abs();
            arg = i;
        }
    }
    if full[arg] < 0.0 {
        full.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(full)
}

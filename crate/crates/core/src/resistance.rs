//! Edge resistances, renormalization, effective resistance, traces and
//! harmonic extensions on weighted approximation graphs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{build_graph, ApproxGraph, EdgeKind, HybridModel, ModelKind};

/// Above this many unknowns linear solves switch to a sparse Cholesky
/// factorization.
pub const DENSE_LIMIT: usize = 5000;

const POLY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResistanceParams {
    pub model: ModelKind,
    /// Scaling of upright cells.
    pub r: f64,
    /// Scaling of bonds.
    pub rho: f64,
    /// Resistance of each side of the level-0 triangle.
    pub big_r: f64,
}

impl ResistanceParams {
    /// Hanoi parameters with `rho = 1 - 5r/3`.
    pub fn hanoi(r: f64) -> Result<Self> {
        let p = ResistanceParams {
            model: ModelKind::Hanoi,
            r,
            rho: 1.0 - 5.0 * r / 3.0,
            big_r: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// SG3 hybrid parameters with `rho` from [`solve_sg3_rho`].
    pub fn sg3(r: f64) -> Result<Self> {
        let p = ResistanceParams {
            model: ModelKind::Sg3Hybrid,
            r,
            rho: solve_sg3_rho(r)?,
            big_r: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn for_model(model: ModelKind, r: f64) -> Result<Self> {
        match model {
            ModelKind::Hanoi => Self::hanoi(r),
            ModelKind::Sg3Hybrid => Self::sg3(r),
        }
    }

    /// Residual of the constraint tying `rho` to `r`.
    pub fn constraint_residual(&self) -> f64 {
        match self.model {
            ModelKind::Hanoi => (5.0 * self.r / 3.0 + self.rho - 1.0).abs(),
            ModelKind::Sg3Hybrid => sg3_polynomial(self.r, self.rho).abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_ranges()?;
        let res = self.constraint_residual();
        if res > POLY_TOL {
            return Err(Error::Parameter(format!(
                "rho = {} does not satisfy the {} constraint for r = {} (residual {res:e})",
                self.rho, self.model, self.r
            )));
        }
        Ok(())
    }

    fn validate_ranges(&self) -> Result<()> {
        let r_max = match self.model {
            ModelKind::Hanoi => 3.0 / 5.0,
            ModelKind::Sg3Hybrid => 7.0 / 15.0,
        };
        if !(self.r > 0.0 && self.r < r_max) {
            return Err(Error::Parameter(format!(
                "r = {} outside (0, {r_max:.6}) for {}",
                self.r, self.model
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Parameter(format!("rho = {} must be positive", self.rho)));
        }
        if !(self.big_r > 0.0 && self.big_r.is_finite()) {
            return Err(Error::Parameter(format!("R = {} must be positive", self.big_r)));
        }
        Ok(())
    }
}

/// `5ρ² + (31r/3 − 3)ρ + 5r² − 7r/3`.
pub fn sg3_polynomial(r: f64, rho: f64) -> f64 {
    5.0 * rho * rho + (31.0 * r / 3.0 - 3.0) * rho + 5.0 * r * r - 7.0 * r / 3.0
}

/// Positive root in `(0, 1)` of the SG3 renormalization quadratic.
pub fn solve_sg3_rho(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 7.0 / 15.0) {
        return Err(Error::Parameter(format!("r = {r} outside (0, 7/15)")));
    }
    let b = 31.0 * r / 3.0 - 3.0;
    let c = 5.0 * r * r - 7.0 * r / 3.0;
    let disc = b * b - 20.0 * c;
    // c < 0 on the whole range, so the roots have opposite signs
    let sq = disc.sqrt();
    // the stable form avoids cancellation when b < 0
    let rho = if b < 0.0 {
        (-b + sq) / 10.0
    } else {
        2.0 * c / (-b - sq)
    };
    Ok(rho)
}

/// Base triangle resistance for unit bond scaling, `30 / (9 − 31r + √(81 + r(61r − 138)))`.
/// Equals `1 / solve_sg3_rho(r)`.
pub fn sg3_base_resistance(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 7.0 / 15.0) {
        return Err(Error::Parameter(format!("r = {r} outside (0, 7/15)")));
    }
    Ok(30.0 / (9.0 - 31.0 * r + (81.0 + r * (61.0 * r - 138.0)).sqrt()))
}

/// Δ→Y conversion. `ra` is the side opposite corner A; the returned
/// `(x, y, z)` are the star arms at A, B and C.
pub fn delta_wye(ra: f64, rb: f64, rc: f64) -> Result<(f64, f64, f64)> {
    if !(ra > 0.0 && rb > 0.0 && rc > 0.0) {
        return Err(Error::Parameter(format!(
            "delta resistances must be positive, got ({ra}, {rb}, {rc})"
        )));
    }
    let s = ra + rb + rc;
    Ok((rb * rc / s, ra * rc / s, ra * rb / s))
}

/// Graph together with one resistance per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    pub graph: ApproxGraph,
    pub resistances: Vec<f64>,
    pub params: ResistanceParams,
}

fn edge_resistance(kind: EdgeKind, birth: u32, level: u32, p: &ResistanceParams) -> f64 {
    match kind {
        EdgeKind::Triangle => p.big_r * p.r.powi(level as i32),
        EdgeKind::Segment => {
            p.big_r * p.r.powi(birth as i32 - 1) * p.rho * 0.5f64.powi((level - birth) as i32)
        }
        EdgeKind::InvSg => {
            p.big_r * p.r.powi(birth as i32 - 1) * p.rho * 0.6f64.powi((level - birth) as i32)
        }
    }
}

fn resistances_unchecked(graph: &ApproxGraph, params: &ResistanceParams) -> Vec<f64> {
    graph
        .edges
        .iter()
        .map(|e| edge_resistance(e.kind, e.birth, graph.level, params))
        .collect()
}

/// Attaches resistances to every edge of `graph`.
pub fn assign_resistances(graph: &ApproxGraph, params: &ResistanceParams) -> Result<WeightedNetwork> {
    if graph.model != params.model {
        return Err(Error::Parameter(format!(
            "resistance parameters for {} applied to a {} graph",
            params.model, graph.model
        )));
    }
    params.validate()?;
    Ok(WeightedNetwork {
        graph: graph.clone(),
        resistances: resistances_unchecked(graph, params),
        params: *params,
    })
}

impl WeightedNetwork {
    /// Network with arbitrary positive per-edge resistances.
    pub fn from_parts(graph: ApproxGraph, resistances: Vec<f64>, params: ResistanceParams) -> Result<Self> {
        if resistances.len() != graph.edges.len() {
            return Err(Error::Structure(format!(
                "{} resistances for {} edges",
                resistances.len(),
                graph.edges.len()
            )));
        }
        if let Some(bad) = resistances.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::Parameter(format!("resistance {bad} is not positive and finite")));
        }
        Ok(WeightedNetwork {
            graph,
            resistances,
            params,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertices.len()
    }

    pub fn conductances(&self) -> Vec<f64> {
        self.resistances.iter().map(|r| 1.0 / r).collect()
    }

    /// Dense weighted graph Laplacian.
    pub fn laplacian(&self) -> Mat<f64> {
        let n = self.vertex_count();
        let mut l = Mat::<f64>::zeros(n, n);
        for (e, r) in self.graph.edges.iter().zip(&self.resistances) {
            let c = 1.0 / r;
            l[(e.u, e.u)] += c;
            l[(e.v, e.v)] += c;
            l[(e.u, e.v)] -= c;
            l[(e.v, e.u)] -= c;
        }
        l
    }

    /// Energy `Σ c_e (u_x − u_y)²`.
    pub fn energy(&self, values: &[f64]) -> f64 {
        self.graph
            .edges
            .iter()
            .zip(&self.resistances)
            .map(|(e, r)| {
                let d = values[e.u] - values[e.v];
                d * d / r
            })
            .sum()
    }
}

fn check_vertex(net: &WeightedNetwork, v: usize) -> Result<()> {
    if v >= net.vertex_count() {
        return Err(Error::Index {
            index: v,
            len: net.vertex_count(),
        });
    }
    Ok(())
}

/// Star-mesh elimination of every vertex outside `keep`. Returns the
/// conductances between kept vertices (indexed by position in `keep`).
///
/// Pivots are sums of positive conductances, so no cancellation occurs and
/// the result keeps full relative accuracy even when conductances span many
/// orders of magnitude.
pub fn kron_reduce(net: &WeightedNetwork, keep: &[usize]) -> Result<Vec<BTreeMap<usize, f64>>> {
    let n = net.vertex_count();
    let (_, rest) = split(n, keep)?;
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (e, r) in net.graph.edges.iter().zip(&net.resistances) {
        if e.u == e.v {
            continue;
        }
        *adj[e.u].entry(e.v).or_default() += 1.0 / r;
        *adj[e.v].entry(e.u).or_default() += 1.0 / r;
    }
    let mut kept = vec![false; n];
    for &v in keep {
        kept[v] = true;
    }
    let mut alive = vec![true; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        rest.iter().map(|&k| Reverse((adj[k].len(), k))).collect();
    let mut pending = rest.len();
    while pending > 0 {
        let Reverse((deg, k)) = heap.pop().expect("heap holds every pending vertex");
        if !alive[k] || deg != adj[k].len() {
            continue;
        }
        alive[k] = false;
        pending -= 1;
        let star = std::mem::take(&mut adj[k]);
        let total: f64 = star.values().sum();
        let nbrs: Vec<(usize, f64)> = star.into_iter().collect();
        for &(i, _) in &nbrs {
            adj[i].remove(&k);
        }
        for (a, &(i, ci)) in nbrs.iter().enumerate() {
            for &(j, cj) in &nbrs[a + 1..] {
                let c = ci * cj / total;
                *adj[i].entry(j).or_default() += c;
                *adj[j].entry(i).or_default() += c;
            }
        }
        for &(i, _) in &nbrs {
            if !kept[i] {
                heap.push(Reverse((adj[i].len(), i)));
            }
        }
    }
    let mut position = vec![usize::MAX; n];
    for (p, &v) in keep.iter().enumerate() {
        position[v] = p;
    }
    Ok(keep
        .iter()
        .map(|&v| adj[v].iter().map(|(&w, &c)| (position[w], c)).collect())
        .collect())
}

/// Effective resistance between `u` and `v`.
pub fn effective_resistance(net: &WeightedNetwork, u: usize, v: usize) -> Result<f64> {
    check_vertex(net, u)?;
    check_vertex(net, v)?;
    if u == v {
        return Err(Error::Parameter("effective resistance needs two distinct vertices".into()));
    }
    let reduced = kron_reduce(net, &[u, v])?;
    match reduced[0].get(&1) {
        Some(&c) if c > 0.0 => Ok(1.0 / c),
        _ => Err(Error::Structure(format!("vertices {u} and {v} are not connected"))),
    }
}

/// Solves a symmetric positive definite system given by triplets; dense
/// Cholesky up to [`DENSE_LIMIT`] unknowns, sparse beyond.
fn solve_spd(n: usize, trips: &[Triplet<usize, usize, f64>], rhs: &mut Mat<f64>) -> Result<()> {
    if n <= DENSE_LIMIT {
        let mut a = Mat::<f64>::zeros(n, n);
        for t in trips {
            a[(t.row, t.col)] += t.val;
        }
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::Numeric(format!("Cholesky failed: {e:?}")))?;
        llt.solve_in_place(rhs.as_mut());
    } else {
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, trips)
            .map_err(|e| Error::Numeric(format!("sparse assembly failed: {e:?}")))?;
        let llt = a
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Numeric(format!("sparse Cholesky failed: {e:?}")))?;
        llt.solve_in_place(rhs.as_mut());
    }
    Ok(())
}

fn split(n: usize, subset: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut inside = vec![false; n];
    for &s in subset {
        if s >= n {
            return Err(Error::Index { index: s, len: n });
        }
        if inside[s] {
            return Err(Error::Parameter(format!("vertex {s} listed twice")));
        }
        inside[s] = true;
    }
    let rest = (0..n).filter(|&x| !inside[x]).collect();
    Ok((subset.to_vec(), rest))
}

fn submatrix(a: &Mat<f64>, rows: &[usize], cols: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Schur complement of the Laplacian onto `subset` (in the given order).
pub fn trace_onto(net: &WeightedNetwork, subset: &[usize]) -> Result<Mat<f64>> {
    if subset.is_empty() {
        return Err(Error::Parameter("trace onto an empty set".into()));
    }
    let reduced = kron_reduce(net, subset)?;
    let k = subset.len();
    let mut t = Mat::<f64>::zeros(k, k);
    for (i, row) in reduced.iter().enumerate() {
        for (&j, &c) in row {
            t[(i, j)] = -c;
            t[(i, i)] += c;
        }
    }
    Ok(t)
}

/// Schur complement `A_SS − A_SI A_II⁻¹ A_IS` of a symmetric matrix.
pub fn schur_complement(a: &Mat<f64>, subset: &[usize]) -> Result<Mat<f64>> {
    if subset.is_empty() {
        return Err(Error::Parameter("trace onto an empty set".into()));
    }
    let (s, i) = split(a.nrows(), subset)?;
    let ass = submatrix(a, &s, &s);
    if i.is_empty() {
        return Ok(ass);
    }
    let aii = submatrix(a, &i, &i);
    let mut x = submatrix(a, &i, &s);
    let llt = aii
        .llt(Side::Lower)
        .map_err(|e| Error::Numeric(format!("interior block is not positive definite: {e:?}")))?;
    llt.solve_in_place(x.as_mut());
    let asi = submatrix(a, &s, &i);
    Ok(ass - asi * x)
}

/// Pairwise effective resistances of a connected network given by its
/// Laplacian, via the pseudo-inverse.
pub fn pairwise_resistances(laplacian: &Mat<f64>) -> Result<Mat<f64>> {
    let n = laplacian.nrows();
    let shift = Mat::<f64>::from_fn(n, n, |_, _| 1.0 / n as f64);
    let g = laplacian + &shift;
    let lu = g.partial_piv_lu();
    let mut inv = Mat::<f64>::identity(n, n);
    lu.solve_in_place(inv.as_mut());
    Ok(Mat::from_fn(n, n, |i, j| inv[(i, i)] + inv[(j, j)] - 2.0 * inv[(i, j)]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicExtension {
    pub values: Vec<f64>,
    pub energy: f64,
}

/// Energy-minimizing extension of `values` given on `boundary`.
pub fn harmonic_extension(net: &WeightedNetwork, boundary: &[usize], values: &[f64]) -> Result<HarmonicExtension> {
    if boundary.is_empty() {
        return Err(Error::Parameter("harmonic extension needs boundary vertices".into()));
    }
    if boundary.len() != values.len() {
        return Err(Error::Parameter(format!(
            "{} boundary vertices but {} values",
            boundary.len(),
            values.len()
        )));
    }
    let n = net.vertex_count();
    let (b, i) = split(n, boundary)?;
    let mut full = vec![0.0; n];
    for (&v, &x) in b.iter().zip(values) {
        full[v] = x;
    }
    if !i.is_empty() {
        let mut index = vec![usize::MAX; n];
        for (k, &v) in i.iter().enumerate() {
            index[v] = k;
        }
        let mut trips = Vec::new();
        let mut rhs = Mat::<f64>::zeros(i.len(), 1);
        for (e, r) in net.graph.edges.iter().zip(&net.resistances) {
            let c = 1.0 / r;
            let (a, b) = (index[e.u], index[e.v]);
            for (p, q, other) in [(a, b, e.v), (b, a, e.u)] {
                if p == usize::MAX {
                    continue;
                }
                trips.push(Triplet::new(p, p, c));
                if q == usize::MAX {
                    rhs[(p, 0)] += c * full[other];
                } else {
                    trips.push(Triplet::new(p, q, -c));
                }
            }
        }
        solve_spd(i.len(), &trips, &mut rhs)
            .map_err(|e| Error::Numeric(format!("harmonic system is singular: {e}")))?;
        for (k, &v) in i.iter().enumerate() {
            full[v] = rhs[(k, 0)];
        }
    }
    let energy = net.energy(&full);
    Ok(HarmonicExtension { values: full, energy })
}

/// Pairwise effective resistances among `V_0` of the level-1 network of one
/// upright cell, compared with the level-0 value `2R/3`; returns the maximum
/// absolute deviation. Parameters only need to be in range here, so
/// perturbed values of `rho` can be probed.
pub fn check_compatibility(model: &HybridModel, params: &ResistanceParams) -> Result<f64> {
    params.validate_ranges()?;
    let graph = build_graph(model, 1)?;
    let net = WeightedNetwork {
        resistances: resistances_unchecked(&graph, params),
        graph,
        params: *params,
    };
    let boundary = net.graph.boundary();
    let trace = trace_onto(&net, &boundary)?;
    let pair = pairwise_resistances(&trace)?;
    let target = 2.0 * params.big_r / 3.0;
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            worst = worst.max((pair[(i, j)] - target).abs());
        }
    }
    Ok(worst)
}

/// Truncated boundary resistance of the Hanoi network at `level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundarySeries {
    pub level: u32,
    /// `(2/3) q^m + (2/3) ρ Σ_{k=1}^m q^{k−1}` with `q = 5r/3`.
    pub truncated: f64,
    /// Bond part alone, `(2/3) ρ Σ q^{k−1}`.
    pub bond_part: f64,
    /// The dust-free sum `ρ Σ q^{k−1}` without the `2/3` factor.
    pub dust_free: f64,
}

pub fn hanoi_boundary_series(r: f64, level: u32) -> Result<BoundarySeries> {
    let p = ResistanceParams::hanoi(r)?;
    let q = 5.0 * r / 3.0;
    let sum: f64 = (1..=level).map(|k| q.powi(k as i32 - 1)).sum();
    let bond_part = 2.0 / 3.0 * p.rho * sum;
    Ok(BoundarySeries {
        level,
        truncated: 2.0 / 3.0 * q.powi(level as i32) + bond_part,
        bond_part,
        dust_free: p.rho * sum,
    })
}

/// Maps vertices of `coarse` to vertices of `fine` by canonical address.
pub fn embed_vertices(coarse: &ApproxGraph, fine: &ApproxGraph) -> Result<Vec<usize>> {
    let index: HashMap<_, _> = fine.vertices.iter().map(|v| (&v.address, v.id)).collect();
    coarse
        .vertices
        .iter()
        .map(|v| {
            index.get(&v.address).copied().ok_or_else(|| {
                Error::Structure(format!("vertex {} missing from the finer graph", v.address))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hanoi_net(level: u32, r: f64) -> WeightedNetwork {
        let g = build_graph(&HybridModel::hanoi(), level).unwrap();
        assign_resistances(&g, &ResistanceParams::hanoi(r).unwrap()).unwrap()
    }

    fn sg3_net(level: u32, r: f64) -> WeightedNetwork {
        let g = build_graph(&HybridModel::sg3(), level).unwrap();
        assign_resistances(&g, &ResistanceParams::sg3(r).unwrap()).unwrap()
    }

    #[test]
    fn hanoi_level1_resistances() {
        let net = hanoi_net(1, 1.0 / 6.0);
        for (e, r) in net.graph.edges.iter().zip(&net.resistances) {
            let expected = match e.kind {
                EdgeKind::Triangle => 1.0 / 6.0,
                _ => 13.0 / 18.0,
            };
            assert!((r - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn sg3_level2_bond_resistances() {
        let net = sg3_net(2, 1.0 / 6.0);
        let rho = net.params.rho;
        for (e, r) in net.graph.edges.iter().zip(&net.resistances) {
            let expected = match (e.kind, e.birth) {
                (EdgeKind::Triangle, _) => 1.0 / 36.0,
                (EdgeKind::Segment, 1) => rho / 2.0,
                (EdgeKind::Segment, _) => rho / 6.0,
                (EdgeKind::InvSg, 1) => rho * 0.6,
                (EdgeKind::InvSg, _) => rho / 6.0,
            };
            assert!((r - expected).abs() < 1e-15, "{e:?}");
        }
        let g0 = build_graph(&HybridModel::sg3(), 0).unwrap();
        let n0 = assign_resistances(&g0, &net.params).unwrap();
        assert!(n0.resistances.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn model_mismatch_rejected() {
        let g = build_graph(&HybridModel::sg3(), 1).unwrap();
        let p = ResistanceParams::hanoi(0.2).unwrap();
        assert!(matches!(assign_resistances(&g, &p), Err(Error::Parameter(_))));
    }

    #[test]
    fn sg3_rho_values() {
        assert!((solve_sg3_rho(1.0 / 6.0).unwrap() - 0.385319).abs() < 1e-6);
        assert!((solve_sg3_rho(1.0 / 12.0).unwrap() - 0.492623).abs() < 1e-6);
        assert!(solve_sg3_rho(7.0 / 15.0 - 1e-9).unwrap() < 1e-8);
        assert!(solve_sg3_rho(7.0 / 15.0).is_err());
        assert!(solve_sg3_rho(0.0).is_err());
        for k in 1..100 {
            let r = k as f64 * 7.0 / 1500.0;
            let rho = solve_sg3_rho(r).unwrap();
            assert!(rho > 0.0 && rho < 1.0);
            assert!(sg3_polynomial(r, rho).abs() < 1e-12);
        }
    }

    #[test]
    fn base_resistance_is_reciprocal_rho() {
        for k in 1..100 {
            let r = k as f64 * 7.0 / 1500.0;
            let rho = solve_sg3_rho(r).unwrap();
            let big_r = sg3_base_resistance(r).unwrap();
            assert!((big_r * rho - 1.0).abs() < 1e-12, "r = {r}");
        }
    }

    #[test]
    fn delta_wye_examples() {
        let (x, y, z) = delta_wye(1.0, 1.0, 1.0).unwrap();
        for v in [x, y, z] {
            assert!((v - 1.0 / 3.0).abs() < 1e-16);
        }
        let (x, y, z) = delta_wye(2.0, 3.0, 6.0).unwrap();
        assert!((x - 18.0 / 11.0).abs() < 1e-15);
        assert!((y - 12.0 / 11.0).abs() < 1e-15);
        assert!((z - 6.0 / 11.0).abs() < 1e-15);
        assert!(delta_wye(0.0, 1.0, 1.0).is_err());
    }

    fn delta_pairs(ra: f64, rb: f64, rc: f64) -> [f64; 3] {
        // pairs (B,C), (A,C), (A,B): direct side in parallel with the other two in series
        let par = |d: f64, s: f64| d * s / (d + s);
        [par(ra, rb + rc), par(rb, ra + rc), par(rc, ra + rb)]
    }

    proptest! {
        #[test]
        fn delta_wye_preserves_pairs(ra in 0.01f64..10.0, rb in 0.01f64..10.0, rc in 0.01f64..10.0) {
            let (x, y, z) = delta_wye(ra, rb, rc).unwrap();
            let want = delta_pairs(ra, rb, rc);
            let got = [y + z, x + z, x + y];
            for k in 0..3 {
                prop_assert!((want[k] - got[k]).abs() <= 1e-14 * want[k].max(1.0));
            }
        }

        #[test]
        fn markov_property(seed in 0u64..u64::MAX) {
            let net = hanoi_net(2, 0.2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..net.vertex_count()).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let clipped: Vec<f64> = u.iter().map(|x| x.clamp(0.0, 1.0)).collect();
            prop_assert!(net.energy(&clipped) <= net.energy(&u));
        }

        #[test]
        fn harmonic_extension_max_principle(b0 in -1.0f64..1.0, b1 in -1.0f64..1.0, b2 in -1.0f64..1.0) {
            let net = sg3_net(2, 0.1);
            let h = harmonic_extension(&net, &[0, 1, 2], &[b0, b1, b2]).unwrap();
            let lo = b0.min(b1).min(b2) - 1e-12;
            let hi = b0.max(b1).max(b2) + 1e-12;
            prop_assert!(h.values.iter().all(|&v| v >= lo && v <= hi));
            let t = trace_onto(&net, &[0, 1, 2]).unwrap();
            let b = [b0, b1, b2];
            let mut q = 0.0;
            for i in 0..3 { for j in 0..3 { q += b[i] * t[(i, j)] * b[j]; } }
            prop_assert!((q - h.energy).abs() < 1e-10 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn effective_resistance_basics() {
        let g0 = build_graph(&HybridModel::hanoi(), 0).unwrap();
        let net = assign_resistances(&g0, &ResistanceParams::hanoi(0.3).unwrap()).unwrap();
        assert!((effective_resistance(&net, 0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        assert!(effective_resistance(&net, 1, 1).is_err());
        assert!(matches!(effective_resistance(&net, 0, 9), Err(Error::Index { .. })));
    }

    #[test]
    fn series_chain_of_halves() {
        // the level-0 triangle with two sides removed is a single resistor;
        // build a path 0-1-2 with resistances 1/2 each
        let mut g = build_graph(&HybridModel::hanoi(), 0).unwrap();
        g.edges.retain(|e| !(e.u == 0 && e.v == 2));
        let p = ResistanceParams::hanoi(0.3).unwrap();
        let net = WeightedNetwork::from_parts(g, vec![0.5, 0.5], p).unwrap();
        assert!((effective_resistance(&net, 0, 2).unwrap() - 1.0).abs() < 1e-14);
        assert!((effective_resistance(&net, 2, 0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn disconnected_pair_is_structural_error() {
        let mut g = build_graph(&HybridModel::hanoi(), 0).unwrap();
        g.edges.retain(|e| e.u == 0 && e.v == 1);
        let p = ResistanceParams::hanoi(0.3).unwrap();
        let net = WeightedNetwork::from_parts(g, vec![1.0], p).unwrap();
        assert!(matches!(effective_resistance(&net, 0, 2), Err(Error::Structure(_))));
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let net = hanoi_net(7, 0.2);
        assert!(net.vertex_count() > DENSE_LIMIT);
        let sparse = effective_resistance(&net, 0, 1).unwrap();
        let series = hanoi_boundary_series(0.2, 7).unwrap().truncated;
        assert!((sparse - series).abs() < 1e-10);
        let small = hanoi_net(4, 0.2);
        let dense = effective_resistance(&small, 0, 1).unwrap();
        let pair = pairwise_resistances(&small.laplacian()).unwrap();
        assert!((dense - pair[(0, 1)]).abs() < 1e-10);
    }

    #[test]
    fn compatibility_residuals() {
        let h = ResistanceParams::hanoi(1.0 / 6.0).unwrap();
        assert!((h.rho - 13.0 / 18.0).abs() < 1e-15);
        assert!(check_compatibility(&HybridModel::hanoi(), &h).unwrap() < 1e-10);
        for r in [1.0 / 12.0, 1.0 / 6.0, 0.25] {
            let p = ResistanceParams::sg3(r).unwrap();
            assert!(check_compatibility(&HybridModel::sg3(), &p).unwrap() < 1e-10);
        }
        let mut p = ResistanceParams::sg3(1.0 / 6.0).unwrap();
        p.rho += 0.01;
        assert!(check_compatibility(&HybridModel::sg3(), &p).unwrap() > 1e-3);
    }

    #[test]
    fn compatibility_by_delta_wye_chain() {
        // independent reduction of the Hanoi level-1 cell: each small triangle
        // becomes a star, the three segments then close a hexagonal loop of
        // stars that reduces to a single triangle again
        let r = 0.2;
        let rho = 1.0 - 5.0 * r / 3.0;
        let (arm, _, _) = delta_wye(r, r, r).unwrap();
        // star centres are joined pairwise by arm + segment + arm
        let side = 2.0 * arm + rho;
        // delta of the three star centres with sides `side`
        let (c, _, _) = delta_wye(side, side, side).unwrap();
        let pair = 2.0 * (arm + c);
        assert!((pair - 2.0 / 3.0).abs() < 1e-14);
        let net = hanoi_net(1, r);
        assert!((effective_resistance(&net, 0, 1).unwrap() - pair).abs() < 1e-14);
    }

    #[test]
    fn harmonic_extension_examples() {
        let net = hanoi_net(2, 0.25);
        let h = harmonic_extension(&net, &[0, 1, 2], &[0.7, 0.7, 0.7]).unwrap();
        assert!(h.values.iter().all(|v| (v - 0.7).abs() < 1e-12));
        assert!(h.energy < 1e-20);
        let g0 = build_graph(&HybridModel::hanoi(), 0).unwrap();
        let n0 = assign_resistances(&g0, &net.params).unwrap();
        let e0 = harmonic_extension(&n0, &[0, 1, 2], &[1.0, 0.0, 0.0]).unwrap().energy;
        assert!((e0 - 2.0).abs() < 1e-14);
        // two-point data: the third corner is free, energy = 1/R_eff
        let two = harmonic_extension(&n0, &[0, 1], &[1.0, 0.0]).unwrap().energy;
        assert!((two - 1.5).abs() < 1e-14);
        let n1 = hanoi_net(1, 0.25);
        let e1 = harmonic_extension(&n1, &[0, 1, 2], &[1.0, 0.0, 0.0]).unwrap().energy;
        assert!((e1 - e0).abs() < 1e-12);
    }

    #[test]
    fn trace_transitivity() {
        for net in [hanoi_net(2, 0.2), sg3_net(2, 0.15)] {
            let coarse = build_graph(&HybridModel::from_kind(net.graph.model), 1).unwrap();
            let v1 = embed_vertices(&coarse, &net.graph).unwrap();
            let direct = trace_onto(&net, &[0, 1, 2]).unwrap();
            let t1 = trace_onto(&net, &v1).unwrap();
            let pos: Vec<usize> = (0..3).collect();
            let two_step = schur_complement(&t1, &pos).unwrap();
            assert!((&direct - &two_step).norm_max() < 1e-10);
            // and level-1 trace equals the level-1 network itself
            let n1 = assign_resistances(&coarse, &net.params).unwrap();
            assert!((&t1 - &n1.laplacian()).norm_max() < 1e-9);
        }
    }

    #[test]
    fn energy_decomposes_over_level1_pieces() {
        let net = sg3_net(3, 0.12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u: Vec<f64> = (0..net.vertex_count()).map(|_| rng.gen::<f64>()).collect();
        let mut pieces: HashMap<String, f64> = HashMap::new();
        for (e, r) in net.graph.edges.iter().zip(&net.resistances) {
            let key = match e.bond {
                Some(b) => {
                    let bond = &net.graph.bonds[b];
                    if bond.birth == 1 {
                        bond.label()
                    } else {
                        format!("cell{}", bond.cell[0])
                    }
                }
                None => {
                    let a = &net.graph.vertices[e.u].address.word;
                    let b = &net.graph.vertices[e.v].address.word;
                    let w = if a.is_empty() { b } else { a };
                    format!("cell{}", w[0])
                }
            };
            let d = u[e.u] - u[e.v];
            *pieces.entry(key).or_default() += d * d / r;
        }
        assert_eq!(pieces.len(), 6 + 6 + 1);
        let total: f64 = pieces.values().sum();
        assert!((total - net.energy(&u)).abs() < 1e-10 * total);
    }

    #[test]
    fn boundary_series_matches_network() {
        let r = 1.0 / 6.0;
        let q = 5.0 * r / 3.0;
        let mut last_bond = 0.0;
        for m in 1..=6 {
            let net = hanoi_net(m, r);
            let reff = effective_resistance(&net, 0, 1).unwrap();
            let s = hanoi_boundary_series(r, m).unwrap();
            assert!((reff - s.truncated).abs() < 1e-10);
            assert!((s.dust_free * 2.0 / 3.0 - s.bond_part).abs() < 1e-15);
            assert!(s.bond_part > last_bond);
            assert!((2.0 / 3.0 - s.bond_part) < q.powi(m as i32));
            last_bond = s.bond_part;
        }
    }

    #[test]
    fn params_validation() {
        assert!(ResistanceParams::hanoi(0.6).is_err());
        assert!(ResistanceParams::sg3(0.5).is_err());
        let mut p = ResistanceParams::sg3(0.2).unwrap();
        p.rho *= 1.01;
        assert!(p.validate().is_err());
    }
}

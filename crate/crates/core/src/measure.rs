//! Weakly self-similar measures and the vertex masses `∫ψ_x dμ` of the
//! piecewise-harmonic tent functions.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ApproxGraph, BondKind, ModelKind, VertexRole};
use crate::spectrum::fmt_g12;

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureParams {
    pub model: ModelKind,
    /// Mass ratio of each upright cell.
    pub a: f64,
    /// Mass ratio of each segment bond (`1/3 − a` for Hanoi).
    pub b: f64,
    /// Mass ratio of the inverted gasket (0 for Hanoi).
    pub c: f64,
}

impl MeasureParams {
    pub fn hanoi(a: f64) -> Self {
        MeasureParams {
            model: ModelKind::Hanoi,
            a,
            b: 1.0 / 3.0 - a,
            c: 0.0,
        }
    }

    /// SG3 parameters; `c` defaults to `1 − 6a − 6b`.
    pub fn sg3(a: f64, b: f64, c: Option<f64>) -> Self {
        MeasureParams {
            model: ModelKind::Sg3Hybrid,
            a,
            b,
            c: c.unwrap_or(1.0 - 6.0 * a - 6.0 * b),
        }
    }

    /// Segment mass ratio.
    pub fn segment(&self) -> f64 {
        self.b
    }
}

/// Lists every violated constraint; an empty list means the parameters are valid.
pub fn validate_measure(p: &MeasureParams) -> Vec<String> {
    let mut out = Vec::new();
    let finite = [p.a, p.b, p.c].iter().all(|x| x.is_finite());
    if !finite {
        out.push("measure parameters must be finite".to_string());
        return out;
    }
    match p.model {
        ModelKind::Hanoi => {
            if !(p.a > 0.0 && p.a < 1.0 / 3.0) {
                out.push(format!("a = {} outside (0, 1/3)", p.a));
            }
            if (p.b - (1.0 / 3.0 - p.a)).abs() > SUM_TOL {
                out.push(format!("segment ratio {} differs from 1/3 - a", p.b));
            }
            if p.c != 0.0 {
                out.push(format!("Hanoi has no inverted gasket, c = {}", p.c));
            }
        }
        ModelKind::Sg3Hybrid => {
            for (name, v) in [("a", p.a), ("b", p.b), ("c", p.c)] {
                if v <= 0.0 {
                    out.push(format!("{name} = {v} must be positive"));
                }
            }
            let total = 6.0 * p.a + 6.0 * p.b + p.c;
            if (total - 1.0).abs() > SUM_TOL {
                out.push(format!("6a + 6b + c = {total} differs from 1"));
            }
        }
    }
    out
}

fn ensure_valid(p: &MeasureParams) -> Result<()> {
    let issues = validate_measure(p);
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Parameter(issues.join("; ")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassVector {
    pub level: u32,
    pub params: MeasureParams,
    pub masses: Vec<f64>,
}

impl MassVector {
    /// Compensated (Neumaier) sum; level-6 graphs have ~10^5 small masses.
    pub fn total(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &m in &self.masses {
            let t = sum + m;
            comp += if sum.abs() >= m.abs() { (sum - t) + m } else { (m - t) + sum };
            sum = t;
        }
        sum + comp
    }

    /// CSV with columns `vertex,mass`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("vertex,mass\n");
        for (i, m) in self.masses.iter().enumerate() {
            s.push_str(&format!("{i},{}\n", fmt_g12(*m)));
        }
        s
    }
}

/// Per-vertex masses from the closed forms.
pub fn vertex_masses(graph: &ApproxGraph, params: &MeasureParams) -> Result<MassVector> {
    if graph.model != params.model {
        return Err(Error::Parameter(format!(
            "measure parameters for {} applied to a {} graph",
            params.model, graph.model
        )));
    }
    ensure_valid(params)?;
    let m = graph.level as i32;
    let a = params.a;
    let corner = a.powi(m) / 3.0;
    let masses = graph
        .vertices
        .iter()
        .map(|v| {
            let k = v.bond.map(|b| graph.bonds[b].birth as i32).unwrap_or(0);
            let ak = a.powi(k - 1);
            match v.role {
                VertexRole::BoundaryV0 => corner,
                VertexRole::TriangleCorner => corner,
                VertexRole::SegmentEndpoint => corner + 0.5f64.powi(m - k + 1) * ak * params.b,
                VertexRole::SegmentInterior => 0.5f64.powi(m - k) * ak * params.b,
                VertexRole::InvSgBoundary => corner + (1.0 / 3.0f64).powi(m - k + 1) * ak * params.c,
                VertexRole::InvSgInterior => 2.0 * (1.0 / 3.0f64).powi(m - k + 1) * ak * params.c,
            }
        })
        .collect();
    Ok(MassVector {
        level: graph.level,
        params: *params,
        masses,
    })
}

/// A piece of the level-m decomposition with its mass and vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    /// Label of the level-1 region containing the piece.
    pub region: String,
    pub mass: f64,
    pub vertices: Vec<usize>,
}

/// Decomposes the measure into leaf cells, segment pieces and small
/// inverted-gasket triangles. Each vertex of a piece carries an equal share
/// of its mass.
pub fn pieces(graph: &ApproxGraph, params: &MeasureParams) -> Result<Vec<Piece>> {
    ensure_valid(params)?;
    let m = graph.level as i32;
    let a = params.a;
    let digit = |w: &[u8]| w.first().map(|d| format!("cell{d}")).unwrap_or_else(|| "root".into());
    let mut out = Vec::new();
    for cell in &graph.cells {
        out.push(Piece {
            region: digit(&cell.word),
            mass: a.powi(m),
            vertices: cell.corners.to_vec(),
        });
    }
    for bond in &graph.bonds {
        let k = bond.birth as i32;
        let region = if bond.birth == 1 {
            bond.label()
        } else {
            digit(&bond.cell)
        };
        let mass = match bond.kind {
            BondKind::Segment => a.powi(k - 1) * params.b * 0.5f64.powi(m - k),
            BondKind::InvertedSg => a.powi(k - 1) * params.c * (1.0 / 3.0f64).powi(m - k),
        };
        for p in &bond.pieces {
            out.push(Piece {
                region: region.clone(),
                mass,
                vertices: p.vertices.clone(),
            });
        }
    }
    Ok(out)
}

/// Vertex masses assembled from [`pieces`].
pub fn masses_from_pieces(graph: &ApproxGraph, params: &MeasureParams) -> Result<Vec<f64>> {
    let mut masses = vec![0.0; graph.vertices.len()];
    for p in pieces(graph, params)? {
        let share = p.mass / p.vertices.len() as f64;
        for v in p.vertices {
            masses[v] += share;
        }
    }
    Ok(masses)
}

/// Total mass per level-1 region.
pub fn region_masses(graph: &ApproxGraph, params: &MeasureParams) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for p in pieces(graph, params)? {
        *out.entry(p.region).or_insert(0.0) += p.mass;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_graph, HybridModel};
    use proptest::prelude::*;

    #[test]
    fn hanoi_level1_masses() {
        let g = build_graph(&HybridModel::hanoi(), 1).unwrap();
        let mv = vertex_masses(&g, &MeasureParams::hanoi(1.0 / 6.0)).unwrap();
        for v in &g.vertices {
            let want = if v.role == VertexRole::BoundaryV0 { 1.0 / 18.0 } else { 5.0 / 36.0 };
            assert!((mv.masses[v.id] - want).abs() < 1e-15);
        }
        assert!((mv.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sg3_level1_masses() {
        let p = MeasureParams::sg3(0.05, 0.07, None);
        let g = build_graph(&HybridModel::sg3(), 1).unwrap();
        let mv = vertex_masses(&g, &p).unwrap();
        for v in &g.vertices {
            let want = match v.role {
                VertexRole::BoundaryV0 => p.a / 3.0,
                VertexRole::SegmentEndpoint => p.a / 3.0 + p.b / 2.0,
                VertexRole::InvSgBoundary => p.a / 3.0 + p.c / 3.0,
                other => panic!("unexpected role {other:?}"),
            };
            assert!((mv.masses[v.id] - want).abs() < 1e-15);
        }
        assert!((mv.total() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sg3_level2_bond_interiors() {
        let p = MeasureParams::sg3(1.0 / 12.0, 1.0 / 13.0, None);
        let g = build_graph(&HybridModel::sg3(), 2).unwrap();
        let mv = vertex_masses(&g, &p).unwrap();
        for v in &g.vertices {
            let born1 = v.bond.map(|b| g.bonds[b].birth == 1).unwrap_or(false);
            match v.role {
                VertexRole::SegmentInterior if born1 => assert!((mv.masses[v.id] - p.b / 2.0).abs() < 1e-15),
                VertexRole::InvSgInterior if born1 => {
                    assert!((mv.masses[v.id] - 2.0 * p.c / 9.0).abs() < 1e-15)
                }
                _ => {}
            }
        }
    }

    #[test]
    fn validation_cases() {
        assert!(!validate_measure(&MeasureParams::hanoi(1.0 / 3.0)).is_empty());
        let p = MeasureParams::sg3(1.0 / 12.0, 1.0 / 13.0, None);
        assert!((p.c - 1.0 / 26.0).abs() < 1e-15);
        assert!(validate_measure(&p).is_empty());
        let bad = MeasureParams::sg3(0.1, 0.1, Some(0.1));
        let issues = validate_measure(&bad);
        assert_eq!(issues.len(), 1);
        assert!(issues[0].contains("1.3"));
        let g = build_graph(&HybridModel::sg3(), 1).unwrap();
        assert!(vertex_masses(&g, &bad).is_err());
    }

    #[test]
    fn max_mass_decreases() {
        let p = MeasureParams::sg3(0.06, 0.08, None);
        let mut last = f64::INFINITY;
        for m in 1..=4 {
            let g = build_graph(&HybridModel::sg3(), m).unwrap();
            let mx = vertex_masses(&g, &p).unwrap().masses.into_iter().fold(0.0, f64::max);
            assert!(mx < last);
            last = mx;
        }
        let h = MeasureParams::hanoi(0.2);
        let mut last = f64::INFINITY;
        for m in 1..=5 {
            let g = build_graph(&HybridModel::hanoi(), m).unwrap();
            let mx = vertex_masses(&g, &h).unwrap().masses.into_iter().fold(0.0, f64::max);
            assert!(mx < last);
            last = mx;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn closed_forms_match_pieces_hanoi(a in 0.01f64..0.33, m in 1u32..5) {
            let g = build_graph(&HybridModel::hanoi(), m).unwrap();
            let p = MeasureParams::hanoi(a);
            let closed = vertex_masses(&g, &p).unwrap();
            let oracle = masses_from_pieces(&g, &p).unwrap();
            for (x, y) in closed.masses.iter().zip(&oracle) {
                prop_assert!((x - y).abs() < 1e-15);
            }
            prop_assert!((closed.total() - 1.0).abs() < 1e-12);
            let regions = region_masses(&g, &p).unwrap();
            for (name, mass) in regions {
                let want = if name.starts_with("cell") { a } else { 1.0 / 3.0 - a };
                prop_assert!((mass - want).abs() < 1e-12, "{}", name);
            }
        }

        #[test]
        fn closed_forms_match_pieces_sg3(a in 0.01f64..0.1, b in 0.01f64..0.06, m in 1u32..4) {
            let p = MeasureParams::sg3(a, b, None);
            prop_assume!(p.c > 0.0);
            let g = build_graph(&HybridModel::sg3(), m).unwrap();
            let closed = vertex_masses(&g, &p).unwrap();
            let oracle = masses_from_pieces(&g, &p).unwrap();
            for (x, y) in closed.masses.iter().zip(&oracle) {
                prop_assert!((x - y).abs() < 1e-15);
            }
            prop_assert!((closed.total() - 1.0).abs() < 1e-12);
            let regions = region_masses(&g, &p).unwrap();
            prop_assert_eq!(regions.len(), 13);
            for (name, mass) in regions {
                let want = if name.starts_with("cell") {
                    a
                } else if name.ends_with(".t") {
                    p.c
                } else {
                    b
                };
                prop_assert!((mass - want).abs() < 1e-12, "{}", name);
            }
        }
    }
}

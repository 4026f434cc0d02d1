//! Level-m graph approximations of the two hybrid fractals.
//!
//! A graph is produced by repeatedly rewriting three kinds of pieces:
//!
//! * upright cells, which split into smaller upright cells joined by bonds,
//! * segment bonds, which split into two halves,
//! * inverted-gasket bonds, which split like the Sierpinski gasket.
//!
//! Every vertex gets a canonical [`CellAddress`] that does not change when
//! the graph is refined further, so vertices of `Γ_m` can be located inside
//! `Γ_{m+1}` by address.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default vertex cap used by [`build_graph`].
pub const DEFAULT_VERTEX_CAP: u64 = 2_000_000;

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ModelKind {
    Hanoi,
    Sg3Hybrid,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hanoi => "hanoi",
            ModelKind::Sg3Hybrid => "sg3",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One rewriting rule of the substitution system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewriteRule {
    /// An upright cell is replaced by `children` upright cells glued by
    /// `segment_bonds` segments and `inverted_bonds` inverted gaskets.
    Upright {
        children: usize,
        segment_bonds: usize,
        inverted_bonds: usize,
    },
    /// A segment is cut into `pieces` equal parts.
    Segment { pieces: usize },
    /// An inverted gasket triangle is replaced by `children` triangles.
    InvertedSg { children: usize },
}

/// Edge counts of the directed graph of the graph-directed construction,
/// with states `J1` (upright cell), `J2` (segment) and `J3` (inverted gasket).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DirectedSummary {
    pub upright_loops: usize,
    pub upright_to_segment: usize,
    pub upright_to_inverted: usize,
    pub segment_loops: usize,
    pub inverted_loops: usize,
}

impl DirectedSummary {
    pub fn edge_count(&self) -> usize {
        self.upright_loops
            + self.upright_to_segment
            + self.upright_to_inverted
            + self.segment_loops
            + self.inverted_loops
    }
}

/// Substitution system describing one of the hybrid fractals.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub kind: ModelKind,
    pub generators: [RewriteRule; 3],
    pub directed_summary: DirectedSummary,
    /// Contraction used for drawing only, in `(0, 1/2)`.
    pub layout_scale: f64,
}

impl HybridModel {
    pub fn hanoi() -> Self {
        HybridModel {
            kind: ModelKind::Hanoi,
            generators: [
                RewriteRule::Upright {
                    children: 3,
                    segment_bonds: 3,
                    inverted_bonds: 0,
                },
                RewriteRule::Segment { pieces: 2 },
                RewriteRule::InvertedSg { children: 3 },
            ],
            directed_summary: DirectedSummary {
                upright_loops: 3,
                upright_to_segment: 3,
                upright_to_inverted: 0,
                segment_loops: 2,
                inverted_loops: 0,
            },
            layout_scale: 0.4,
        }
    }

    pub fn sg3() -> Self {
        HybridModel {
            kind: ModelKind::Sg3Hybrid,
            generators: [
                RewriteRule::Upright {
                    children: 6,
                    segment_bonds: 6,
                    inverted_bonds: 1,
                },
                RewriteRule::Segment { pieces: 2 },
                RewriteRule::InvertedSg { children: 3 },
            ],
            directed_summary: DirectedSummary {
                upright_loops: 6,
                upright_to_segment: 6,
                upright_to_inverted: 1,
                segment_loops: 2,
                inverted_loops: 3,
            },
            layout_scale: 0.25,
        }
    }

    pub fn from_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Hanoi => Self::hanoi(),
            ModelKind::Sg3Hybrid => Self::sg3(),
        }
    }

    fn upright_rule(&self) -> (usize, usize, usize) {
        match self.generators[0] {
            RewriteRule::Upright {
                children,
                segment_bonds,
                inverted_bonds,
            } => (children, segment_bonds, inverted_bonds),
            _ => unreachable!("first generator is always the upright rule"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum VertexRole {
    BoundaryV0,
    /// Corner of an upright cell not attached to any bond. Neither shipped
    /// model produces these; kept for graphs assembled by hand.
    TriangleCorner,
    SegmentEndpoint,
    SegmentInterior,
    InvSgBoundary,
    InvSgInterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EdgeKind {
    Triangle,
    Segment,
    #[serde(rename = "InvSG")]
    InvSg,
}

/// Where a vertex sits relative to the cell named by [`CellAddress::word`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Locator {
    /// Corner `k` of the cell.
    Corner(u8),
    /// Dyadic point `num / 2^depth` along segment bond `bond` born in the cell.
    Segment { bond: u8, depth: u32, num: u64 },
    /// Corner `corner` of the sub-triangle `path` of the inverted gasket
    /// born in the cell.
    Inverted { path: Vec<u8>, corner: u8 },
}

/// Canonical vertex address: the shortest cell word in which the vertex
/// appears, plus its position inside that cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellAddress {
    pub word: Vec<u8>,
    pub locator: Locator,
}

impl Ord for CellAddress {
    fn cmp(&self, other: &Self) -> Ordering {
        self.word
            .cmp(&other.word)
            .then_with(|| self.locator.cmp(&other.locator))
    }
}

impl PartialOrd for CellAddress {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.word {
            write!(f, "{d}")?;
        }
        match &self.locator {
            Locator::Corner(k) => write!(f, ".c{k}"),
            Locator::Segment { bond, depth, num } => {
                write!(f, ".s{bond}:{num}/{}", 1u64 << depth)
            }
            Locator::Inverted { path, corner } => {
                write!(f, ".t")?;
                for p in path {
                    write!(f, "{p}")?;
                }
                write!(f, ".{corner}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub role: VertexRole,
    /// Level at which the vertex first appears.
    pub birth: u32,
    pub address: CellAddress,
    /// Index into [`ApproxGraph::bonds`] for bond vertices.
    pub bond: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub kind: EdgeKind,
    /// Level of the current cell for triangle edges, birth level of the
    /// bond otherwise.
    pub birth: u32,
    /// Owning bond for segment and inverted-gasket edges.
    pub bond: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BondKind {
    Segment,
    InvertedSg,
}

/// Sub-piece of a bond at the current level: a segment piece (2 vertices)
/// or a small inverted-gasket triangle (3 vertices) with its gasket path.
#[derive(Debug, Clone, PartialEq)]
pub struct BondPiece {
    pub path: Vec<u8>,
    pub vertices: Vec<usize>,
}

/// A segment or inverted gasket born at some level inside an upright cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub kind: BondKind,
    pub birth: u32,
    /// Word of the upright cell in which the bond was born.
    pub cell: Vec<u8>,
    /// 1-based bond index inside that cell.
    pub index: u8,
    /// Endpoints (segment) or boundary corners (inverted gasket).
    pub ends: Vec<usize>,
    /// All vertices of the bond, ends included.
    pub vertices: Vec<usize>,
    pub pieces: Vec<BondPiece>,
}

impl Bond {
    pub fn label(&self) -> String {
        let word: String = self.cell.iter().map(|d| char::from(b'0' + d)).collect();
        match self.kind {
            BondKind::Segment => format!("{word}.s{}", self.index),
            BondKind::InvertedSg => format!("{word}.t"),
        }
    }
}

/// Upright cell of the current level.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub word: Vec<u8>,
    pub corners: [usize; 3],
}

/// The weighted-graph skeleton `Γ_m` (resistances are assigned separately).
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxGraph {
    pub model: ModelKind,
    pub level: u32,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub cells: Vec<Cell>,
    pub bonds: Vec<Bond>,
}

impl ApproxGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn boundary(&self) -> Vec<usize> {
        self.vertices
            .iter()
            .filter(|v| v.role == VertexRole::BoundaryV0)
            .map(|v| v.id)
            .collect()
    }

    pub fn interior(&self) -> Vec<usize> {
        self.vertices
            .iter()
            .filter(|v| v.role != VertexRole::BoundaryV0)
            .map(|v| v.id)
            .collect()
    }

    /// Neighbour lists as `(neighbour, edge index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.u].push((e.v, i));
            adj[e.v].push((e.u, i));
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertices.len()];
        for e in &self.edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        deg
    }

    pub fn find(&self, address: &CellAddress) -> Option<usize> {
        self.vertices
            .binary_search_by(|v| v.address.cmp(address))
            .ok()
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &(y, _) in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// JSON document `{level, vertices:[{id,x,y,role,birth,address}], edges:[{u,v,kind,birth}]}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct V<'a> {
            id: usize,
            x: f64,
            y: f64,
            role: VertexRole,
            birth: u32,
            address: &'a str,
        }
        #[derive(Serialize)]
        struct E {
            u: usize,
            v: usize,
            kind: EdgeKind,
            birth: u32,
        }
        #[derive(Serialize)]
        struct G<'a> {
            level: u32,
            vertices: Vec<V<'a>>,
            edges: Vec<E>,
        }
        let addresses: Vec<String> = self.vertices.iter().map(|v| v.address.to_string()).collect();
        let doc = G {
            level: self.level,
            vertices: self
                .vertices
                .iter()
                .zip(&addresses)
                .map(|(v, a)| V {
                    id: v.id,
                    x: v.x,
                    y: v.y,
                    role: v.role,
                    birth: v.birth,
                    address: a,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| E {
                    u: e.u,
                    v: e.v,
                    kind: e.kind,
                    birth: e.birth,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("graph serialization cannot fail")
    }
}

/// Piece counts at a given level: (vertices, upright cells, segment edges,
/// inverted-gasket triangles).
fn census(kind: ModelKind, level: u32) -> (u64, u64, u64, u64) {
    let (mut v, mut u, mut s, mut t) = (3u64, 1u64, 0u64, 0u64);
    for _ in 0..level {
        match kind {
            ModelKind::Hanoi => {
                v += 6 * u + s;
                s = 2 * s + 3 * u;
                u *= 3;
            }
            ModelKind::Sg3Hybrid => {
                v += 15 * u + s + 3 * t;
                s = 2 * s + 6 * u;
                t = 3 * t + u;
                u *= 6;
            }
        }
    }
    (v, u, s, t)
}

/// Number of vertices of `Γ_level` outside `V_0`.
pub fn interior_count(model: &HybridModel, level: u32) -> u64 {
    census(model.kind, level).0 - 3
}

/// Total number of vertices of `Γ_level`.
pub fn vertex_count(model: &HybridModel, level: u32) -> u64 {
    census(model.kind, level).0
}

/// Builds `Γ_level` with the default vertex cap.
pub fn build_graph(model: &HybridModel, level: u32) -> Result<ApproxGraph> {
    build_graph_with_cap(model, level, DEFAULT_VERTEX_CAP)
}

pub fn build_graph_with_cap(model: &HybridModel, level: u32, cap: u64) -> Result<ApproxGraph> {
    let predicted = vertex_count(model, level);
    if predicted > cap {
        return Err(Error::Resource {
            level,
            vertices: predicted,
            cap,
        });
    }
    Ok(Builder::new(model, model.layout_scale).run(level))
}

/// Plot coordinates of every vertex of `graph` for a given contraction.
pub fn layout_coordinates(graph: &ApproxGraph, layout_scale: f64) -> Result<Vec<(f64, f64)>> {
    if !(layout_scale > 0.0 && layout_scale < 0.5) {
        return Err(Error::Parameter(format!(
            "layout scale {layout_scale} outside (0, 1/2)"
        )));
    }
    let model = HybridModel::from_kind(graph.model);
    let rebuilt = Builder::new(&model, layout_scale).run(graph.level);
    Ok(rebuilt.vertices.iter().map(|v| (v.x, v.y)).collect())
}

// ---------------------------------------------------------------------------

struct ProtoVertex {
    pos: (f64, f64),
    role: VertexRole,
    birth: u32,
    address: CellAddress,
    bond: Option<usize>,
}

struct ProtoBond {
    kind: BondKind,
    birth: u32,
    cell: Vec<u8>,
    index: u8,
    ends: Vec<usize>,
    /// Segment: ordered chain. Inverted: unused.
    chain: Vec<usize>,
    /// Inverted: small triangles with gasket paths.
    tris: Vec<(Vec<u8>, [usize; 3])>,
    /// Depth of the dyadic subdivision (segments only).
    depth: u32,
}

/// Junction between two children: (child a, corner of a, child b, corner of b).
type Junction = (usize, u8, usize, u8);

struct Layout {
    /// Offsets of children in skew coordinates of the parent cell.
    offsets: Vec<(f64, f64)>,
    /// For each parent corner k: (child, child corner) that coincides with it.
    inherited: [(usize, u8); 3],
    segments: Vec<Junction>,
    /// Inverted gasket corners as (child, corner).
    inverted: Option<[(usize, u8); 3]>,
    scale: f64,
}

impl Layout {
    fn for_model(kind: ModelKind, scale: f64) -> Self {
        match kind {
            ModelKind::Hanoi => {
                let o = 1.0 - scale;
                Layout {
                    offsets: vec![(0.0, 0.0), (o, 0.0), (0.0, o)],
                    inherited: [(0, 0), (1, 1), (2, 2)],
                    segments: vec![(0, 1, 1, 0), (1, 2, 2, 1), (0, 2, 2, 0)],
                    inverted: None,
                    scale,
                }
            }
            ModelKind::Sg3Hybrid => {
                let t = (1.0 - scale) / 2.0;
                // children 1..6 at grid positions (0,0) (1,0) (2,0) (0,1) (1,1) (0,2)
                let grid = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (0, 2)];
                Layout {
                    offsets: grid
                        .iter()
                        .map(|&(i, j)| (i as f64 * t, j as f64 * t))
                        .collect(),
                    inherited: [(0, 0), (2, 1), (5, 2)],
                    segments: vec![
                        (0, 1, 1, 0),
                        (1, 1, 2, 0),
                        (0, 2, 3, 0),
                        (3, 2, 5, 0),
                        (2, 2, 4, 1),
                        (4, 2, 5, 1),
                    ],
                    inverted: Some([(1, 2), (3, 1), (4, 0)]),
                    scale,
                }
            }
        }
    }

    fn child_corner(&self, child: usize, corner: u8) -> (f64, f64) {
        let (ou, ov) = self.offsets[child];
        match corner {
            0 => (ou, ov),
            1 => (ou + self.scale, ov),
            _ => (ou, ov + self.scale),
        }
    }
}

fn affine(corners: [(f64, f64); 3], (u, v): (f64, f64)) -> (f64, f64) {
    let (p0, p1, p2) = (corners[0], corners[1], corners[2]);
    (
        p0.0 + u * (p1.0 - p0.0) + v * (p2.0 - p0.0),
        p0.1 + u * (p1.1 - p0.1) + v * (p2.1 - p0.1),
    )
}

fn midpoint(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
}

struct Builder {
    kind: ModelKind,
    layout: Layout,
    children: usize,
    verts: Vec<ProtoVertex>,
    cells: Vec<(Vec<u8>, [usize; 3])>,
    bonds: Vec<ProtoBond>,
}

impl Builder {
    fn new(model: &HybridModel, scale: f64) -> Self {
        let (children, _, _) = model.upright_rule();
        let corners = [(0.0, 0.0), (1.0, 0.0), (0.5, SQRT3_2)];
        let verts = corners
            .iter()
            .enumerate()
            .map(|(k, &pos)| ProtoVertex {
                pos,
                role: VertexRole::BoundaryV0,
                birth: 0,
                address: CellAddress {
                    word: Vec::new(),
                    locator: Locator::Corner(k as u8),
                },
                bond: None,
            })
            .collect();
        Builder {
            kind: model.kind,
            layout: Layout::for_model(model.kind, scale),
            children,
            verts,
            cells: vec![(Vec::new(), [0, 1, 2])],
            bonds: Vec::new(),
        }
    }

    fn push(&mut self, v: ProtoVertex) -> usize {
        self.verts.push(v);
        self.verts.len() - 1
    }

    fn run(mut self, level: u32) -> ApproxGraph {
        for n in 1..=level {
            self.refine_bonds(n);
            self.refine_cells(n);
        }
        self.finish(level)
    }

    fn refine_bonds(&mut self, level: u32) {
        for b in 0..self.bonds.len() {
            match self.bonds[b].kind {
                BondKind::Segment => {
                    let old = std::mem::take(&mut self.bonds[b].chain);
                    let depth = self.bonds[b].depth + 1;
                    let (cell, index) = (self.bonds[b].cell.clone(), self.bonds[b].index);
                    let mut chain = Vec::with_capacity(2 * old.len() - 1);
                    for (i, w) in old.windows(2).enumerate() {
                        chain.push(w[0]);
                        let pos = midpoint(self.verts[w[0]].pos, self.verts[w[1]].pos);
                        let id = self.push(ProtoVertex {
                            pos,
                            role: VertexRole::SegmentInterior,
                            birth: level,
                            address: CellAddress {
                                word: cell.clone(),
                                locator: Locator::Segment {
                                    bond: index,
                                    depth,
                                    num: 2 * i as u64 + 1,
                                },
                            },
                            bond: Some(b),
                        });
                        chain.push(id);
                    }
                    chain.push(*old.last().expect("segment chain has two ends"));
                    self.bonds[b].chain = chain;
                    self.bonds[b].depth = depth;
                }
                BondKind::InvertedSg => {
                    let old = std::mem::take(&mut self.bonds[b].tris);
                    let cell = self.bonds[b].cell.clone();
                    let mut tris = Vec::with_capacity(3 * old.len());
                    for (path, [x, y, z]) in old {
                        let mk = |s: &mut Self, a: usize, c: usize, child: u8, corner: u8| {
                            let pos = midpoint(s.verts[a].pos, s.verts[c].pos);
                            let mut p = path.clone();
                            p.push(child);
                            s.push(ProtoVertex {
                                pos,
                                role: VertexRole::InvSgInterior,
                                birth: level,
                                address: CellAddress {
                                    word: cell.clone(),
                                    locator: Locator::Inverted { path: p, corner },
                                },
                                bond: Some(b),
                            })
                        };
                        let mxy = mk(self, x, y, 0, 1);
                        let mxz = mk(self, x, z, 0, 2);
                        let myz = mk(self, y, z, 1, 2);
                        let sub = |c: u8| {
                            let mut p = path.clone();
                            p.push(c);
                            p
                        };
                        tris.push((sub(0), [x, mxy, mxz]));
                        tris.push((sub(1), [mxy, y, myz]));
                        tris.push((sub(2), [mxz, myz, z]));
                    }
                    self.bonds[b].tris = tris;
                }
            }
        }
    }

    fn refine_cells(&mut self, level: u32) {
        let old = std::mem::take(&mut self.cells);
        let mut cells = Vec::with_capacity(old.len() * self.children);
        for (word, corners) in old {
            let parent_pos = corners.map(|c| self.verts[c].pos);
            let mut child_corners = vec![[usize::MAX; 3]; self.children];
            for (k, &(child, corner)) in self.layout.inherited.iter().enumerate() {
                child_corners[child][corner as usize] = corners[k];
            }
            for (child, cc) in child_corners.iter_mut().enumerate() {
                for corner in 0..3u8 {
                    if cc[corner as usize] != usize::MAX {
                        continue;
                    }
                    let mut w = word.clone();
                    w.push(child as u8 + 1);
                    let pos = affine(parent_pos, self.layout.child_corner(child, corner));
                    cc[corner as usize] = self.push(ProtoVertex {
                        pos,
                        // fixed below once the bond is known
                        role: VertexRole::TriangleCorner,
                        birth: level,
                        address: CellAddress {
                            word: w,
                            locator: Locator::Corner(corner),
                        },
                        bond: None,
                    });
                }
            }
            let segments = self.layout.segments.clone();
            for (j, &(ca, ka, cb, kb)) in segments.iter().enumerate() {
                let a = child_corners[ca][ka as usize];
                let b = child_corners[cb][kb as usize];
                let bi = self.bonds.len();
                for id in [a, b] {
                    self.verts[id].role = VertexRole::SegmentEndpoint;
                    self.verts[id].bond = Some(bi);
                }
                self.bonds.push(ProtoBond {
                    kind: BondKind::Segment,
                    birth: level,
                    cell: word.clone(),
                    index: j as u8 + 1,
                    ends: vec![a, b],
                    chain: vec![a, b],
                    tris: Vec::new(),
                    depth: 0,
                });
            }
            if let Some(inv) = self.layout.inverted {
                let ids = inv.map(|(c, k)| child_corners[c][k as usize]);
                let bi = self.bonds.len();
                for id in ids {
                    self.verts[id].role = VertexRole::InvSgBoundary;
                    self.verts[id].bond = Some(bi);
                }
                self.bonds.push(ProtoBond {
                    kind: BondKind::InvertedSg,
                    birth: level,
                    cell: word.clone(),
                    index: segments.len() as u8 + 1,
                    ends: ids.to_vec(),
                    chain: Vec::new(),
                    tris: vec![(Vec::new(), ids)],
                    depth: 0,
                });
            }
            for (child, cc) in child_corners.into_iter().enumerate() {
                let mut w = word.clone();
                w.push(child as u8 + 1);
                cells.push((w, cc));
            }
        }
        self.cells = cells;
    }

    fn finish(self, level: u32) -> ApproxGraph {
        let mut order: Vec<usize> = (0..self.verts.len()).collect();
        order.sort_by(|&a, &b| self.verts[a].address.cmp(&self.verts[b].address));
        let mut relabel = vec![0usize; self.verts.len()];
        for (new, &old) in order.iter().enumerate() {
            relabel[old] = new;
        }
        let map = |ids: &[usize]| -> Vec<usize> { ids.iter().map(|&i| relabel[i]).collect() };

        let mut edges = Vec::new();
        let mut push_edge = |a: usize, b: usize, kind: EdgeKind, birth: u32, bond: Option<usize>| {
            let (u, v) = (relabel[a].min(relabel[b]), relabel[a].max(relabel[b]));
            edges.push(Edge {
                u,
                v,
                kind,
                birth,
                bond,
            });
        };
        for (_, c) in &self.cells {
            push_edge(c[0], c[1], EdgeKind::Triangle, level, None);
            push_edge(c[1], c[2], EdgeKind::Triangle, level, None);
            push_edge(c[0], c[2], EdgeKind::Triangle, level, None);
        }
        let mut bonds = Vec::with_capacity(self.bonds.len());
        for (bi, pb) in self.bonds.iter().enumerate() {
            let pieces: Vec<BondPiece> = match pb.kind {
                BondKind::Segment => pb
                    .chain
                    .windows(2)
                    .map(|w| {
                        push_edge(w[0], w[1], EdgeKind::Segment, pb.birth, Some(bi));
                        BondPiece {
                            path: Vec::new(),
                            vertices: map(w),
                        }
                    })
                    .collect(),
                BondKind::InvertedSg => pb
                    .tris
                    .iter()
                    .map(|(path, t)| {
                        push_edge(t[0], t[1], EdgeKind::InvSg, pb.birth, Some(bi));
                        push_edge(t[1], t[2], EdgeKind::InvSg, pb.birth, Some(bi));
                        push_edge(t[0], t[2], EdgeKind::InvSg, pb.birth, Some(bi));
                        BondPiece {
                            path: path.clone(),
                            vertices: map(t),
                        }
                    })
                    .collect(),
            };
            let mut vertices: Vec<usize> = pieces.iter().flat_map(|p| p.vertices.iter().copied()).collect();
            vertices.sort_unstable();
            vertices.dedup();
            bonds.push(Bond {
                kind: pb.kind,
                birth: pb.birth,
                cell: pb.cell.clone(),
                index: pb.index,
                ends: map(&pb.ends),
                vertices,
                pieces,
            });
        }
        edges.sort_by_key(|e| (e.u, e.v));

        let vertices = order
            .iter()
            .enumerate()
            .map(|(id, &old)| {
                let p = &self.verts[old];
                Vertex {
                    id,
                    x: p.pos.0,
                    y: p.pos.1,
                    role: p.role,
                    birth: p.birth,
                    address: p.address.clone(),
                    bond: p.bond,
                }
            })
            .collect();
        let cells = self
            .cells
            .iter()
            .map(|(w, c)| Cell {
                word: w.clone(),
                corners: c.map(|i| relabel[i]),
            })
            .collect();
        ApproxGraph {
            model: self.kind,
            level,
            vertices,
            edges,
            cells,
            bonds,
        }
    }
}

/// Vertex permutation induced by the rotation of the plane by 120 degrees
/// about the centroid of `V_0`, matched on layout coordinates.
pub fn rotation_permutation(graph: &ApproxGraph) -> Option<Vec<usize>> {
    let (cx, cy) = (0.5, SQRT3_2 / 3.0);
    let (s, c) = (2.0 * std::f64::consts::PI / 3.0).sin_cos();
    let key = |x: f64, y: f64| ((x * 1e9).round() as i64, (y * 1e9).round() as i64);
    let index: HashMap<(i64, i64), usize> = graph
        .vertices
        .iter()
        .map(|v| (key(v.x, v.y), v.id))
        .collect();
    graph
        .vertices
        .iter()
        .map(|v| {
            let (dx, dy) = (v.x - cx, v.y - cy);
            let (x, y) = (cx + c * dx - s * dy, cy + s * dx + c * dy);
            index.get(&key(x, y)).copied()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind_count(g: &ApproxGraph, kind: EdgeKind) -> usize {
        g.edges.iter().filter(|e| e.kind == kind).count()
    }

    #[test]
    fn hanoi_level0_is_triangle() {
        let g = build_graph(&HybridModel::hanoi(), 0).unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edges.len(), 3);
        assert!(g.edges.iter().all(|e| e.kind == EdgeKind::Triangle));
    }

    #[test]
    fn hanoi_level1_counts() {
        let g = build_graph(&HybridModel::hanoi(), 1).unwrap();
        assert_eq!(g.vertex_count(), 9);
        assert_eq!(g.interior().len(), 6);
        assert_eq!(kind_count(&g, EdgeKind::Triangle), 9);
        assert_eq!(kind_count(&g, EdgeKind::Segment), 3);
    }

    #[test]
    fn sg3_level1_and_2_counts() {
        let m = HybridModel::sg3();
        let g1 = build_graph(&m, 1).unwrap();
        assert_eq!(g1.vertex_count(), 18);
        assert_eq!(g1.edges.len(), 27);
        assert_eq!(kind_count(&g1, EdgeKind::Triangle), 18);
        assert_eq!(kind_count(&g1, EdgeKind::Segment), 6);
        assert_eq!(kind_count(&g1, EdgeKind::InvSg), 3);
        let g2 = build_graph(&m, 2).unwrap();
        assert_eq!(g2.vertex_count(), 117);
        assert_eq!(g2.edges.len(), 183);
    }

    #[test]
    fn sg3_level1_degree_profile() {
        let g = build_graph(&HybridModel::sg3(), 1).unwrap();
        let deg = g.degrees();
        let count = |d| deg.iter().filter(|&&x| x == d).count();
        assert_eq!((count(2), count(3), count(4)), (3, 12, 3));
        for b in g.boundary() {
            assert_eq!(deg[b], 2);
        }
    }

    #[test]
    fn interior_count_values() {
        let h = HybridModel::hanoi();
        assert_eq!(interior_count(&h, 1), 6);
        assert_eq!(interior_count(&h, 6), 3087);
        for m in 1..=12u32 {
            let closed = 3 * (3u64.pow(m + 1) - 1) / 2 - 3 * (1 << m);
            assert_eq!(interior_count(&h, m), closed);
        }
        assert_eq!(interior_count(&HybridModel::sg3(), 3), 729);
        for m in 0..=3 {
            for model in [HybridModel::hanoi(), HybridModel::sg3()] {
                let g = build_graph(&model, m).unwrap();
                assert_eq!(g.vertex_count() as u64, vertex_count(&model, m));
            }
        }
    }

    #[test]
    fn resource_cap_reports_vertex_count() {
        let err = build_graph_with_cap(&HybridModel::sg3(), 9, 1000).unwrap_err();
        match err {
            Error::Resource { vertices, .. } => {
                assert_eq!(vertices, vertex_count(&HybridModel::sg3(), 9))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn directed_summary_counts() {
        let s = HybridModel::sg3().directed_summary;
        assert_eq!(
            (s.upright_loops, s.upright_to_segment, s.upright_to_inverted, s.segment_loops, s.inverted_loops),
            (6, 6, 1, 2, 3)
        );
        assert_eq!(s.edge_count(), 18);
    }

    #[test]
    fn exactly_three_boundary_vertices_and_connected() {
        for model in [HybridModel::hanoi(), HybridModel::sg3()] {
            for m in 0..=3 {
                let g = build_graph(&model, m).unwrap();
                assert_eq!(g.boundary(), vec![0, 1, 2]);
                assert!(g.is_connected());
                for v in g.interior() {
                    assert!(g.vertices[v].bond.is_some());
                }
            }
        }
    }

    #[test]
    fn ordering_is_sorted_by_address() {
        let g = build_graph(&HybridModel::sg3(), 2).unwrap();
        for w in g.vertices.windows(2) {
            assert!(w[0].address < w[1].address);
        }
        for v in &g.vertices {
            assert_eq!(g.find(&v.address), Some(v.id));
        }
    }

    #[test]
    fn layout_scale_checks() {
        let g = build_graph(&HybridModel::hanoi(), 1).unwrap();
        assert!(layout_coordinates(&g, 0.5).is_err());
        assert!(layout_coordinates(&g, 0.0).is_err());
        let s = 0.3;
        let pts = layout_coordinates(&g, s).unwrap();
        for cell in &g.cells {
            let [a, b, c] = cell.corners.map(|i| pts[i]);
            for (p, q) in [(a, b), (b, c), (a, c)] {
                let d = ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
                assert!((d - s).abs() < 1e-12);
            }
        }
        let g0 = build_graph(&HybridModel::hanoi(), 0).unwrap();
        let pts = layout_coordinates(&g0, 0.1).unwrap();
        assert_eq!(pts[0], (0.0, 0.0));
        assert_eq!(pts[1], (1.0, 0.0));
        assert!((pts[2].0 - 0.5).abs() < 1e-15 && (pts[2].1 - SQRT3_2).abs() < 1e-15);
    }

    #[test]
    fn sg3_inverted_corners_meet_middle_triangles() {
        let g = build_graph(&HybridModel::sg3(), 1).unwrap();
        let pts = layout_coordinates(&g, 0.25).unwrap();
        let inv = g.bonds.iter().find(|b| b.kind == BondKind::InvertedSg).unwrap();
        // skew coordinates (3/8, 1/4), (1/4, 3/8), (3/8, 3/8)
        let skew = |u: f64, v: f64| (u + 0.5 * v, SQRT3_2 * v);
        let expected = [skew(0.375, 0.25), skew(0.25, 0.375), skew(0.375, 0.375)];
        for (id, e) in inv.ends.iter().zip(expected) {
            let p = pts[*id];
            assert!((p.0 - e.0).abs() < 1e-12 && (p.1 - e.1).abs() < 1e-12);
            // each one is also a corner of an upright cell
            assert!(g.cells.iter().any(|c| c.corners.contains(id)));
        }
    }

    #[test]
    fn json_is_deterministic() {
        let a = build_graph(&HybridModel::sg3(), 2).unwrap().to_json();
        let b = build_graph(&HybridModel::sg3(), 2).unwrap().to_json();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["level"], 2);
        assert_eq!(v["vertices"].as_array().unwrap().len(), 117);
        assert_eq!(v["edges"][0].as_object().unwrap().len(), 4);
    }

    #[test]
    fn rotation_is_a_symmetry() {
        for model in [HybridModel::hanoi(), HybridModel::sg3()] {
            let g = build_graph(&model, 2).unwrap();
            let p = rotation_permutation(&g).expect("rotation maps vertices to vertices");
            let mut edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.u, e.v)).collect();
            edges.sort_unstable();
            let mut rotated: Vec<(usize, usize)> = g
                .edges
                .iter()
                .map(|e| (p[e.u].min(p[e.v]), p[e.u].max(p[e.v])))
                .collect();
            rotated.sort_unstable();
            assert_eq!(edges, rotated);
        }
    }
}

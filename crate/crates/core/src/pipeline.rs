//! One-call assembly of the discrete problem from model parameters.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{build_graph_with_cap, ApproxGraph, HybridModel, ModelKind, DEFAULT_VERTEX_CAP};
use crate::measure::{vertex_masses, MeasureParams};
use crate::resistance::{assign_resistances, ResistanceParams, WeightedNetwork};
use crate::spectrum::{assemble, solve_spectrum_with, AssembledOperator, BoundaryCondition, SolveOptions, Spectrum};

/// Everything needed to build a level-`m` problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Problem {
    pub level: u32,
    pub resistance: ResistanceParams,
    pub measure: MeasureParams,
    pub vertex_cap: u64,
}

impl Problem {
    /// Hanoi with `ρ = 1 − 5r/3` and `b = 1/3 − a`.
    pub fn hanoi(level: u32, r: f64, a: f64) -> Result<Self> {
        Self::new(level, ResistanceParams::hanoi(r)?, MeasureParams::hanoi(a))
    }

    /// SG3 hybrid with `ρ` solved from `r` and `c = 1 − 6a − 6b` unless given.
    pub fn sg3(level: u32, r: f64, a: f64, b: f64, c: Option<f64>) -> Result<Self> {
        Self::new(level, ResistanceParams::sg3(r)?, MeasureParams::sg3(a, b, c))
    }

    pub fn new(level: u32, resistance: ResistanceParams, measure: MeasureParams) -> Result<Self> {
        if resistance.model != measure.model {
            return Err(Error::Parameter(format!(
                "resistance parameters for {} but measure parameters for {}",
                resistance.model, measure.model
            )));
        }
        Ok(Problem {
            level,
            resistance,
            measure,
            vertex_cap: DEFAULT_VERTEX_CAP,
        })
    }

    pub fn model(&self) -> ModelKind {
        self.resistance.model
    }

    pub fn graph(&self) -> Result<ApproxGraph> {
        build_graph_with_cap(&HybridModel::from_kind(self.model()), self.level, self.vertex_cap)
    }

    pub fn network(&self) -> Result<WeightedNetwork> {
        assign_resistances(&self.graph()?, &self.resistance)
    }

    pub fn operator(&self, bc: BoundaryCondition) -> Result<AssembledOperator> {
        let net = self.network()?;
        let masses = vertex_masses(&net.graph, &self.measure)?;
        assemble(&net, &masses, bc)
    }

    /// Operator and its spectrum.
    pub fn solve(&self, bc: BoundaryCondition, opts: SolveOptions) -> Result<(AssembledOperator, Spectrum)> {
        let op = self.operator(bc)?;
        let spec = solve_spectrum_with(&op, opts)?;
        Ok((op, spec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatched_models_rejected() {
        let r = ResistanceParams::hanoi(1.0 / 6.0).unwrap();
        let m = MeasureParams::sg3(1.0 / 12.0, 1.0 / 13.0, None);
        assert!(matches!(Problem::new(1, r, m), Err(Error::Parameter(_))));
    }

    #[test]
    fn hanoi_level_one_solves() {
        let p = Problem::hanoi(1, 1.0 / 6.0, 1.0 / 6.0).unwrap();
        let (op, spec) = p.solve(BoundaryCondition::Dirichlet, SolveOptions::default()).unwrap();
        assert_eq!(op.dim(), 6);
        assert_eq!(spec.len(), 6);
    }
}

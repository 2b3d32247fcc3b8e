//! Symbols: expression trees, classical expansions, lattice tables.

mod classical;
mod cutoff;
mod expr;
mod phi;
mod toroidal;

use std::sync::Arc;

pub use classical::{BoundSymbol, ClassicalSymbol, ClassicalSymbolRecord, ComponentsRecord, HomogeneousSymbol, NESTED_LIMIT};
pub use cutoff::{smooth_step, Cutoff};
pub use expr::{from_node_table, to_node_table, EvalPolicy, Evaluator, NestedNode, Node, NodeRecord, SymbolExpr};
pub use phi::Interpolant;
pub use toroidal::{SmoothExtension, ToroidalSymbolTable};

use crate::algebra::{NcElement, ThetaMatrix};
use crate::error::Result;

/// Anything that assigns an element of A_theta to each lattice point.
pub trait LatticeSymbol: Sync {
    fn theta(&self) -> &Arc<ThetaMatrix>;
    fn value_at(&self, k: &[i64]) -> Result<NcElement>;
}

/// Wraps a closure as a lattice symbol.
pub struct FnSymbol<F> {
    theta: Arc<ThetaMatrix>,
    f: F,
}

impl<F> FnSymbol<F>
where
    F: Fn(&[i64]) -> Result<NcElement> + Sync,
{
    pub fn new(theta: &Arc<ThetaMatrix>, f: F) -> Self {
        FnSymbol { theta: theta.clone(), f }
    }
}

impl<F> LatticeSymbol for FnSymbol<F>
where
    F: Fn(&[i64]) -> Result<NcElement> + Sync,
{
    fn theta(&self) -> &Arc<ThetaMatrix> {
        &self.theta
    }

    fn value_at(&self, k: &[i64]) -> Result<NcElement> {
        (self.f)(k)
    }
}

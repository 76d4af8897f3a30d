//! Quadrature: 1D Gauss and Gauss-Lobatto rules, tensor-product integration,
//! and the quadtree-composed scheme for elements crossed by the domain
//! boundary.

mod quadtree;
mod rules;

pub use quadtree::{
    build_quadtree, composed_integral, for_each_quad_point, tensor_integral, CellStatus,
    QuadPoint, QuadtreeCell, MAX_DEPTH,
};
pub use rules::{gauss_rule, gll_rule, Rule1D, RuleError};

//! Trinomial dynamic programming for superreplication prices.

mod convergence;
mod export;
mod game;
mod hedge;
mod layout;
mod solve;
mod spec;

pub(crate) use convergence::slope;
pub use convergence::{convergence_sweep, ConvergencePoint, ConvergenceReport};
pub use export::write_surface_csv;
pub use hedge::{extract_delta, game_hedge, superhedge_strategy, HedgeStrategy, GAME_REFINE};
pub use layout::{AuxAxis, AuxGrid, AuxPos, NodeLayout};
pub use solve::{
    price_lower, price_upper, solve, solve_price, Bound, LatticeSolution, Policy, ValueSurface, VarianceChoice,
};
pub use spec::{build_lattice, LatticeSpec, Monitoring};

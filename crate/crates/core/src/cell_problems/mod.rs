//! Finite-volume cell problems on cubes `(-3^m/2, 3^m/2)^d`, solved by
//! sample average approximation over a shared Poisson sample set.

pub mod abar;
pub mod oracle;
pub mod samples;
pub mod solve;

pub use abar::*;
pub use oracle::{OracleMode, OracleSolution, SectorOracle};
pub use samples::{SampleSet, SampleView, SampledSystem};
pub use solve::{
    solve_nu, solve_nu_on, solve_nu_star, solve_nu_star_on, solve_resolvent, solve_resolvent_on, BoundDirection, CellProblemSpec,
    CellSolution, ProblemKind,
};

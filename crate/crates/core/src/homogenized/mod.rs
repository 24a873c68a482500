//! The Euclidean side: heat kernel, homogenized semigroup on linear
//! statistics, the constant-coefficient Dirichlet problem and two-scale
//! expansions built from cell correctors.

pub mod dirichlet;
pub mod grid;
pub mod kernel;
pub mod two_scale;

pub use dirichlet::{solve_homog_dirichlet, DirichletSolution};
pub use grid::GridFunction;
pub use kernel::{
    apply_homog_semigroup, apply_homog_semigroup_with, heat_kernel, prediction_csv, prediction_table, smoothing_constant,
    two_point_prediction, HeatKernel, PredictionRow, TRUNCATION_TOL,
};
pub use two_scale::{
    build_two_scale, build_two_scale_parabolic, check_centering, elliptic_mesoscale, lift_linear_statistic, mc_l2_distance_sq,
    parabolic_parameters, AlphaSource, CellTerm, Mesoscale, ParabolicParameters, TwoScaleExpansion,
};

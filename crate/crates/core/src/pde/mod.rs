//! Finite-difference solvers for the randomised F-KPP equation
//! `w_t = w''/2 + xi(x) F(w)` and the parabolic Anderson model
//! `u_t = u''/2 + xi(x) u`, plus the front analytics built on them.

mod analytics;
mod grid;
mod lattice;
mod solver;

pub use analytics::{
    front_width, lyapunov_estimate, quantile_table, sturmian_check, temporal_quantile, v0_estimate,
    wave_profile_convergence, zero_crossings, Crossings, LyapunovEstimate, QuantileTable, SturmianReport, WaveReport,
};
pub use grid::GridFunction;
pub use lattice::{lattice_domain, lattice_quantile_table, solve_lattice_fkpp, LatticeRun, LatticeSolution};
pub use solver::{
    fkpp_domain, guard_width, heaviside, nonlinearity_f, solve_fkpp, solve_pam, solve_pam_with, FkppRun, FkppSolution,
    Initial, Scheme, SolverConfig,
};

//! Exponentially tilted Brownian motion: the normaliser `Z`, its drift
//! `b = (ln Z)'`, the tilted SDE and the hitting-time functionals built on
//! them.

mod calibrate;
mod functionals;
mod measure;
mod sde;

pub use calibrate::{
    annealed_environment, annealed_lmgf, calibrate_eta, eta_bar, eta_bar_on, lmgf_on, v1_v2, v1_v2_on, Calibration,
    Lmgf, ETA_MAX,
};
pub use functionals::{
    barrier_event_stats, endpoint_log_weights, tail_estimate, y_functionals, BarrierParams, BarrierStats,
    WeightedEstimate, YFunctionals,
};
pub use measure::{
    default_burn_in, default_dt, expected_hitting_time, log_z, solve_b, solve_b_with, SolveOptions, TiltedMeasure,
    BOUND_TOL, MAX_BURN_IN,
};
pub use sde::{
    dominance_check, girsanov_crosscheck, simulate_tilted, simulate_tilted_path, tilted_hitting_samples,
    tilted_positions, weighted_brownian_hits, DominanceReport, GirsanovReport, HittingSample, MIN_ESS,
};

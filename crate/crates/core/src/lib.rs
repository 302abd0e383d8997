//! A numerical laboratory for adapted perturbations of identity on Wiener
//! space: Brownian path sampling, a catalog of adapted drifts, Girsanov
//! weights, discretized Malliavin derivative matrices with the
//! Carleman-Fredholm determinant, Ornstein-Uhlenbeck smoothing, exact
//! discrete inversion of U = I + u, and Monte Carlo assessment of the
//! sufficient conditions for invertibility including a log-Sobolev and
//! Poincare harness.
//!
//! A note on scope: at the discrete level every adapted map U = I + u is a
//! bijection (inversion is forward substitution), so exact round-trips say
//! nothing about continuum invertibility. The conditions module and the
//! cross-resolution diagnostics are the tools that address the continuum
//! question numerically.

pub mod conditions;
pub mod drift;
pub mod error;
pub mod girsanov;
pub mod inversion;
pub mod malliavin;
pub mod paths;
pub mod stats;

pub use conditions::{
    cond_bounded_grad, cond_holder, cond_nice, convex_interp_check, grad_cylindrical,
    kazamaki_estimate, lipschitz_vs_hs_report, lsi_check, novikov_estimate, standard_battery,
    BoundedGradReport, ConditionReport, CylindricalFunction, LipschitzHsReport, LsiRecord,
    Verdict,
};
pub use drift::{
    drift_to_cm, eval_drift, make_builtin, mix_drifts, stop_at_level, truncate_smooth,
    AdaptedDrift, DriftSpec, DynDrift, SUPPORTED_DRIFTS,
};
pub use error::{LabError, Result};
pub use girsanov::{
    change_of_var_check, entropy_identity_check, expect_rho, girsanov_weight, ito_integral,
    map_paths, GirsanovWeight,
};
pub use inversion::{
    cross_resolution_error, forward_map, invert_explicit, invert_picard, piecewise_glue,
    rho_inverse_identity_check, roundtrip_residuals, stopped_consistency, GluePiece,
    InversionResult,
};
pub use malliavin::{
    carleman_check, det2_of, malliavin_matrix_analytic, malliavin_matrix_fd, mehler_smooth,
    op_norm, CarlemanCheck, KernelProvenance, MalliavinMatrix, OperatorStats, DEFAULT_FD_EPS,
};
pub use paths::{CameronMartinVector, RandomSource, TimeGrid, WienerPath};
pub use stats::{McAccumulator, McEstimate, TailDiagnostics};
